use super::{Fairness, RadioConfig, RadioError};

/// Bandwidth shares for robots with spectral efficiencies `unit_rates`.
///
/// Proportional fairness splits by weight. Max-min equalizes weighted
/// throughput: share is proportional to `w / rate`. Shares sum to one.
pub fn allocate(unit_rates: &[f64], cfg: &RadioConfig) -> Result<Vec<f64>, RadioError> {
    let w = &cfg.priority_weights;
    if unit_rates.len() != w.len() {
        return Err(RadioError::Allocation(format!("{} rates for {} weights", unit_rates.len(), w.len())));
    }
    match cfg.fairness {
        Fairness::Proportional => Ok(w.clone()),
        Fairness::MaxMin => {
            if let Some(i) = unit_rates.iter().position(|r| !(*r > 0.0) || !r.is_finite()) {
                return Err(RadioError::Allocation(format!("robot {i} has zero or invalid rate")));
            }
            let raw: Vec<f64> = w.iter().zip(unit_rates).map(|(w, r)| w / r).collect();
            let total: f64 = raw.iter().sum();
            if total <= 0.0 {
                return Err(RadioError::Allocation("all weights are zero".into()));
            }
            Ok(raw.into_iter().map(|x| x / total).collect())
        }
    }
}
