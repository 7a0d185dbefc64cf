use std::io::Write;

use super::rbar::Rbar;
use super::{MeasureError, RateFunction};
use crate::env::DisorderLaw;

pub const DEFAULT_FLUX_POINTS: usize = 4096;

/// Exact flux model `f(ρ) = (p − q) R̄⁻¹(ρ)` below the plateau onset `R̄(γ)`
/// and `(p − q) γ` above it.
#[derive(Debug, Clone)]
pub struct FluxModel {
    rbar: Rbar,
    gamma: f64,
    drift: f64,
    onset: f64,
    rho_c: f64,
}

impl FluxModel {
    pub fn new(
        g: &RateFunction,
        q0: &DisorderLaw,
        gamma: f64,
        p: f64,
    ) -> Result<Self, MeasureError> {
        if !(p > 0.5 && p <= 1.0) {
            return Err(MeasureError::InvalidDrift(p));
        }
        let rbar = Rbar::new(g, q0)?;
        if !(gamma >= 0.0 && gamma <= rbar.inf_support()) {
            return Err(MeasureError::BetaOutOfRange(gamma));
        }
        let onset = rbar.eval(gamma)?;
        let rho_c = rbar.critical();
        Ok(Self { rbar, gamma, drift: 2.0 * p - 1.0, onset, rho_c })
    }

    pub fn rbar(&self) -> &Rbar {
        &self.rbar
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `p − q`.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// `R̄(γ)`; the flux is constant beyond it.
    pub fn plateau_onset(&self) -> f64 {
        self.onset
    }

    /// `ρ_c(Q0) = R̄(inf supp Q0)`.
    pub fn rho_critical(&self) -> f64 {
        self.rho_c
    }

    pub fn eval(&self, rho: f64) -> Result<f64, MeasureError> {
        if !(rho >= 0.0) {
            return Err(MeasureError::DensityOutOfRange { rho, rho_c: self.rho_c });
        }
        if rho >= self.onset {
            return Ok(self.drift * self.gamma);
        }
        Ok(self.drift * self.rbar.inverse_in(rho, 0.0, self.gamma)?)
    }
}

/// `f(ρ)` evaluated directly from the model.
pub fn flux_eval(
    g: &RateFunction,
    q0: &DisorderLaw,
    gamma: f64,
    p: f64,
    rho: f64,
) -> Result<f64, MeasureError> {
    FluxModel::new(g, q0, gamma, p)?.eval(rho)
}

/// Tabulated concave, nondecreasing flux on `[0, ρ_max]`, interpolated
/// linearly between nodes. Tables built from a model keep it for exact
/// evaluation.
#[derive(Debug, Clone)]
pub struct FluxFunction {
    rho: Vec<f64>,
    f: Vec<f64>,
    model: Option<FluxModel>,
}

impl FluxFunction {
    /// Table on a uniform grid of `points` nodes with `ρ_max = max(2ρ_c, 10)`;
    /// the plateau onset is inserted as an extra node.
    pub fn tabulate(model: FluxModel, points: usize) -> Result<Self, MeasureError> {
        let points = points.max(2);
        let rho_max = if model.rho_c.is_finite() { (2.0 * model.rho_c).max(10.0) } else { 10.0 };
        let mut rho: Vec<f64> = (0..points)
            .map(|i| rho_max * i as f64 / (points - 1) as f64)
            .collect();
        if model.onset.is_finite() && model.onset > 0.0 && model.onset < rho_max {
            let k = rho.partition_point(|r| *r < model.onset);
            if rho[k] != model.onset {
                rho.insert(k, model.onset);
            }
        }
        let mut f = Vec::with_capacity(rho.len());
        let mut b_prev = 0.0;
        for &r in &rho {
            if r >= model.onset {
                f.push(model.drift * model.gamma);
            } else {
                let b = model.rbar.inverse_in(r, b_prev, model.gamma)?;
                b_prev = b;
                f.push(model.drift * b);
            }
        }
        Ok(Self { rho, f, model: Some(model) })
    }

    pub fn build(
        g: &RateFunction,
        q0: &DisorderLaw,
        gamma: f64,
        p: f64,
    ) -> Result<Self, MeasureError> {
        Self::tabulate(FluxModel::new(g, q0, gamma, p)?, DEFAULT_FLUX_POINTS)
    }

    /// Arbitrary table; nodes must be strictly increasing.
    pub fn from_table(rho: Vec<f64>, f: Vec<f64>) -> Result<Self, MeasureError> {
        if rho.len() != f.len() || rho.len() < 2 {
            return Err(MeasureError::InvalidTable("need matching columns of length ≥ 2".into()));
        }
        if rho.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MeasureError::InvalidTable("nodes must increase".into()));
        }
        Ok(Self { rho, f, model: None })
    }

    pub fn from_fn(rho_max: f64, points: usize, f: impl Fn(f64) -> f64) -> Self {
        let rho: Vec<f64> = (0..points)
            .map(|i| rho_max * i as f64 / (points - 1) as f64)
            .collect();
        let f = rho.iter().map(|&r| f(r)).collect();
        Self { rho, f, model: None }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.rho
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn model(&self) -> Option<&FluxModel> {
        self.model.as_ref()
    }

    pub fn rho_max(&self) -> f64 {
        *self.rho.last().unwrap()
    }

    /// Linear interpolation; constant extrapolation beyond the table.
    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        let n = self.rho.len();
        if rho <= self.rho[0] {
            return self.f[0];
        }
        if rho >= self.rho[n - 1] {
            return self.f[n - 1];
        }
        let k = self.rho.partition_point(|r| *r <= rho);
        let (r0, r1) = (self.rho[k - 1], self.rho[k]);
        let t = (rho - r0) / (r1 - r0);
        self.f[k - 1] + t * (self.f[k] - self.f[k - 1])
    }

    /// Exact model value when available, table otherwise.
    pub fn eval_exact(&self, rho: f64) -> f64 {
        match &self.model {
            Some(m) if rho <= self.rho_max() => m.eval(rho).unwrap_or_else(|_| self.eval(rho)),
            _ => self.eval(rho),
        }
    }

    /// Largest absolute chord slope of the table.
    pub fn max_slope(&self) -> f64 {
        self.rho
            .windows(2)
            .zip(self.f.windows(2))
            .map(|(r, f)| ((f[1] - f[0]) / (r[1] - r[0])).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.f.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rho,f")?;
        for (r, f) in self.rho.iter().zip(&self.f) {
            writeln!(w, "{r},{f}")?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self, MeasureError> {
        let mut rho = Vec::new();
        let mut f = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| {
                s.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| MeasureError::InvalidTable(format!("bad row {}", i + 1)))
            };
            rho.push(parse(parts.next())?);
            f.push(parse(parts.next())?);
        }
        Self::from_table(rho, f)
    }
}
