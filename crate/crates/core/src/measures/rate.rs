use serde::{Deserialize, Serialize};

use super::MeasureError;
use crate::sim::Occupancy;

/// Nondecreasing jump-rate function `g` with `g(0) = 0 < g(1)`, saturating at
/// `g(n) = 1` for `n ≥ n_sat` (so `g(∞) = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RateFunction {
    values: Vec<f64>,
}

impl RateFunction {
    /// `values = [g(0), g(1), …, g(n_sat)]` with `g(n_sat) = 1`.
    pub fn new(values: Vec<f64>) -> Result<Self, MeasureError> {
        if values.len() < 2 {
            return Err(MeasureError::InvalidRate("need at least g(0) and g(1)".into()));
        }
        if values[0] != 0.0 {
            return Err(MeasureError::InvalidRate(format!("g(0) = {} ≠ 0", values[0])));
        }
        if !(values[1] > 0.0) {
            return Err(MeasureError::InvalidRate("g(1) must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(MeasureError::InvalidRate("g must be nondecreasing".into()));
        }
        let last = values[values.len() - 1];
        if (last - 1.0).abs() > 1e-12 {
            return Err(MeasureError::InvalidRate(format!(
                "g saturates at {last}; rescale so that g(∞) = 1"
            )));
        }
        let mut values = values;
        *values.last_mut().unwrap() = 1.0;
        // trim a constant tail so that n_sat is the first saturated index
        while values.len() > 2 && values[values.len() - 2] == 1.0 {
            values.pop();
        }
        Ok(Self { values })
    }

    /// Rescales `values` by its last entry before validating.
    pub fn normalized(values: Vec<f64>) -> Result<Self, MeasureError> {
        let last = *values.last().ok_or_else(|| MeasureError::InvalidRate("empty".into()))?;
        if !(last > 0.0) {
            return Err(MeasureError::InvalidRate("g is identically zero".into()));
        }
        Self::new(values.into_iter().map(|v| v / last).collect())
    }

    /// M/M/1 service: `g(n) = 1{n ≥ 1}`.
    pub fn mm1() -> Self {
        Self { values: vec![0.0, 1.0] }
    }

    /// `g(n) = min(n, k) / k`.
    pub fn linear_capped(k: usize) -> Self {
        Self::new((0..=k).map(|n| n as f64 / k as f64).collect()).expect("valid rate")
    }

    pub fn saturation(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, n: u64) -> f64 {
        let i = (n as usize).min(self.values.len() - 1);
        self.values[i]
    }

    #[inline]
    pub fn at_occupancy(&self, n: Occupancy) -> f64 {
        match n {
            Occupancy::Finite(k) => self.at(k as u64),
            Occupancy::Infinite => 1.0,
        }
    }
}

impl TryFrom<Vec<f64>> for RateFunction {
    type Error = MeasureError;
    fn try_from(v: Vec<f64>) -> Result<Self, MeasureError> {
        Self::new(v)
    }
}

impl From<RateFunction> for Vec<f64> {
    fn from(g: RateFunction) -> Self {
        g.values
    }
}
