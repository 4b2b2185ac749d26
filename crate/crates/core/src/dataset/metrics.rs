use serde::{Deserialize, Serialize};

use super::OfflineDataset;
use crate::{LspcError, Result};

/// Normalization constants for reward and cost returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDef {
    pub r_min: f64,
    pub r_max: f64,
    pub kappa: f64,
    /// Guards the cost ratio against a zero threshold.
    pub sigma: f64,
}

impl MetricDef {
    pub const DEFAULT_SIGMA: f64 = 1e-8;

    pub fn new(r_min: f64, r_max: f64, kappa: f64) -> Result<Self> {
        let m = MetricDef { r_min, r_max, kappa, sigma: Self::DEFAULT_SIGMA };
        m.validate()?;
        Ok(m)
    }

    /// Uses the dataset's episode-return extremes.
    pub fn from_dataset(ds: &OfflineDataset, kappa: f64) -> Result<Self> {
        let (lo, hi) = ds
            .return_range()
            .ok_or_else(|| LspcError::Config("dataset has no episodes".into()))?;
        Self::new(lo, hi, kappa)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_max > self.r_min) {
            return Err(LspcError::Config(format!("r_max {} must exceed r_min {}", self.r_max, self.r_min)));
        }
        if !(self.kappa >= 0.0) || !(self.sigma >= 0.0) || self.kappa + self.sigma <= 0.0 {
            return Err(LspcError::Config("kappa and sigma must be non-negative with positive sum".into()));
        }
        Ok(())
    }
}

/// `(R - r_min) / (r_max - r_min)`
pub fn normalized_reward(r: f64, m: &MetricDef) -> Result<f64> {
    m.validate()?;
    Ok((r - m.r_min) / (m.r_max - m.r_min))
}

/// `(C + sigma) / (kappa + sigma)`
pub fn normalized_cost(c: f64, m: &MetricDef) -> Result<f64> {
    m.validate()?;
    Ok((c + m.sigma) / (m.kappa + m.sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas() {
        let m = MetricDef::new(0.0, 100.0, 5.0).unwrap();
        assert_eq!(normalized_reward(50.0, &m).unwrap(), 0.5);
        assert_eq!(normalized_reward(0.0, &m).unwrap(), 0.0);
        let exact = MetricDef { sigma: 0.0, ..m };
        assert_eq!(normalized_cost(5.0, &exact).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_range_is_rejected() {
        assert!(MetricDef::new(3.0, 3.0, 1.0).is_err());
        let m = MetricDef { r_min: 1.0, r_max: 1.0, kappa: 1.0, sigma: 0.0 };
        assert!(normalized_reward(1.0, &m).is_err());
    }
}
