//! Core algorithms for semantic, radio-aware multi-robot operation: grid
//! world and human forecasts, prioritized multi-robot planning, link
//! budgets and MCS adaptation, sensing payloads, the intent orchestrator,
//! and run metrics.

pub mod linkadapt;
pub mod metrics;
pub mod orchestrator;
pub mod planner;
pub mod radio;
pub mod report;
pub mod scenario;
pub mod sensing;
pub mod world;

pub use planner::{plan, PlanConfig, PlanError, SpaceTimePath};
pub use world::{Cell, GridWorld, HumanTrack, RobotState};
