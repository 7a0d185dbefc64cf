//! Open Jackson network on `[l, r]`: interior queues `(l, r)` served at rate
//! `κ(x)g(n)`, fed by infinite reservoirs at `l` and `r`.

use serde::{Deserialize, Serialize};

use crate::env::{defect_bounds, Environment};
use crate::lattice::Site;
use crate::measures::{marginal_with_gap, MeasureError, RateFunction, ThetaMarginal};

/// Truncation level used by [`verification_report`] unless the tails need more.
pub const DEFAULT_TRUNC: u64 = 60;
/// Largest admissible probability mass cut off by the residual truncation.
pub const TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JacksonError {
    #[error("jump probability p = {0} must lie in (1/2, 1]")]
    InvalidDrift(f64),
    #[error("network needs l < r, got {0} sites")]
    TooShort(usize),
    #[error("service rate κ({site}) = {value} must be positive and finite")]
    InvalidRate { site: Site, value: f64 },
    #[error("network is not positive recurrent: λ({site}) = {lambda} ≥ κ = {kappa}")]
    NotRecurrent { site: Site, lambda: f64, kappa: f64 },
    #[error("site {0} is not an interior site")]
    NotInterior(Site),
    #[error("truncation {trunc} leaves tail mass {bound:e}")]
    InsufficientTruncation { trunc: u64, bound: f64 },
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("expected {expected} fugacities, got {got}")]
    FugacityCount { expected: usize, got: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Service rates `κ(l), …, κ(r)` and drift `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenNetwork {
    l: Site,
    kappa: Vec<f64>,
    p: f64,
}

impl OpenNetwork {
    pub fn new(l: Site, kappa: Vec<f64>, p: f64) -> Result<Self, JacksonError> {
        if !(p > 0.5 && p <= 1.0) {
            return Err(JacksonError::InvalidDrift(p));
        }
        if kappa.len() < 2 {
            return Err(JacksonError::TooShort(kappa.len()));
        }
        for (i, &v) in kappa.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(JacksonError::InvalidRate { site: l + i as Site, value: v });
            }
        }
        Ok(Self { l, kappa, p })
    }

    /// `κ = α` restricted to `[l, r]`.
    pub fn from_environment(env: &Environment, l: Site, r: Site, p: f64) -> Result<Self, JacksonError> {
        let w = env.window();
        if l > r || !w.contains(l) || !w.contains(r) {
            return Err(JacksonError::WindowTooSmall(format!("[{l}, {r}] not inside [{}, {}]", w.left, w.right)));
        }
        Self::new(l, (l..=r).map(|x| env.alpha(x)).collect(), p)
    }

    pub fn l(&self) -> Site {
        self.l
    }

    pub fn r(&self) -> Site {
        self.l + self.kappa.len() as Site - 1
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kappa(&self, x: Site) -> f64 {
        self.kappa[(x - self.l) as usize]
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappa
    }

    pub fn interior(&self) -> impl Iterator<Item = Site> {
        self.l + 1..self.r()
    }

    pub fn lambda_profile(&self) -> LambdaProfile {
        let (l, r) = (self.l, self.r());
        let (kl, kr) = (self.kappa(l), self.kappa(r));
        let rho = (1.0 - self.p) / self.p;
        let span = rho.powi((r - l) as i32);
        let lam = (l..=r)
            .map(|x| {
                if x == r {
                    return kr;
                }
                let w = if rho == 0.0 {
                    0.0
                } else {
                    (rho.powi((r - x) as i32) - span) / (1.0 - span)
                };
                kl + (kr - kl) * w
            })
            .collect();
        LambdaProfile { l, r, p: self.p, lam }
    }

    /// First interior site where `λ(x) ≥ κ(x)`, if any.
    pub fn first_violation(&self) -> Option<Site> {
        let lp = self.lambda_profile();
        self.interior().find(|&x| lp.at(x) >= self.kappa(x))
    }

    pub fn check_recurrent(&self) -> bool {
        self.first_violation().is_none()
    }

    /// Fugacities `λ(x)/κ(x)` on `(l, r)`.
    pub fn fugacities(&self) -> Vec<f64> {
        let lp = self.lambda_profile();
        self.interior().map(|x| lp.at(x) / self.kappa(x)).collect()
    }

    pub fn invariant_product(&self, g: &RateFunction) -> Result<OpenNetworkMeasure, JacksonError> {
        let lp = self.lambda_profile();
        if let Some(x) = self.first_violation() {
            return Err(JacksonError::NotRecurrent { site: x, lambda: lp.at(x), kappa: self.kappa(x) });
        }
        let fug: Vec<(f64, f64)> = self
            .interior()
            .map(|x| (lp.at(x) / self.kappa(x), (self.kappa(x) - lp.at(x)) / self.kappa(x)))
            .collect();
        self.product_from(g, &fug)
    }

    /// Product of `θ_{β(x)}` for arbitrary interior fugacities.
    pub fn product_with(&self, g: &RateFunction, fugacities: &[f64]) -> Result<OpenNetworkMeasure, JacksonError> {
        let fug: Vec<(f64, f64)> = fugacities.iter().map(|&b| (b, 1.0 - b)).collect();
        self.product_from(g, &fug)
    }

    fn product_from(&self, g: &RateFunction, fug: &[(f64, f64)]) -> Result<OpenNetworkMeasure, JacksonError> {
        let expected = self.kappa.len() - 2;
        if fug.len() != expected {
            return Err(JacksonError::FugacityCount { expected, got: fug.len() });
        }
        let marginals = fug
            .iter()
            .map(|&(b, gap)| marginal_with_gap(g, b, gap))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OpenNetworkMeasure {
            l: self.l,
            r: self.r(),
            fugacities: fug.iter().map(|f| f.0).collect(),
            marginals,
        })
    }

    /// `E_μ[L f]` for `f = 𝟙{η(x) = k}` under the invariant product measure.
    pub fn stationarity_residual(&self, g: &RateFunction, x: Site, k: u64, trunc: u64) -> Result<f64, JacksonError> {
        let mu = self.invariant_product(g)?;
        self.residual_under(&mu, g, x, k, trunc)
    }

    /// `E_μ[L f]` for `f = 𝟙{η(x) = k}` under an arbitrary product measure
    /// on the interior, summing over the states of `x − 1, x, x + 1` up to
    /// `trunc` particles each.
    pub fn residual_under(
        &self,
        mu: &OpenNetworkMeasure,
        g: &RateFunction,
        x: Site,
        k: u64,
        trunc: u64,
    ) -> Result<f64, JacksonError> {
        let (l, r) = (self.l, self.r());
        if x <= l || x >= r {
            return Err(JacksonError::NotInterior(x));
        }
        let neighbours = [x - 1, x, x + 1];
        let bound: f64 = neighbours
            .iter()
            .filter(|&&y| y > l && y < r)
            .map(|&y| mu.marginal(y).survival(trunc + 1))
            .sum();
        if bound > TAIL_TOLERANCE {
            return Err(JacksonError::InsufficientTruncation { trunc, bound });
        }
        // (weight, occupancy) lists; a reservoir is a single state of rate g(∞) = 1
        let states = |y: Site| -> Vec<(f64, Option<u64>)> {
            if y == l || y == r {
                vec![(1.0, None)]
            } else {
                let m = mu.marginal(y);
                (0..=trunc).map(|n| (m.pmf(n), Some(n))).collect()
            }
        };
        let rate = |y: Site, n: Option<u64>| match n {
            Some(n) => self.kappa(y) * g.at(n),
            None => self.kappa(y),
        };
        let left = states(x - 1);
        let mid = states(x);
        let right = states(x + 1);
        let (p, q) = (self.p, 1.0 - self.p);
        let kx = self.kappa(x);
        let mut total = 0.0;
        for &(wm, nm) in &mid {
            let n = nm.expect("interior site");
            let here = (n == k) as u8 as f64;
            let up = (n + 1 == k) as u8 as f64 - here;
            let down = (n >= 1 && n - 1 == k) as u8 as f64 - here;
            let out = kx * g.at(n) * down;
            let mut acc = 0.0;
            for &(wl, nl) in &left {
                let in_l = p * rate(x - 1, nl);
                for &(wr, nr) in &right {
                    let in_r = q * rate(x + 1, nr);
                    acc += wl * wr * (out + (in_l + in_r) * up);
                }
            }
            total += wm * acc;
        }
        Ok(total)
    }
}

/// `λ(x)` for `x ∈ [l, r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaProfile {
    pub l: Site,
    pub r: Site,
    pub p: f64,
    pub lam: Vec<f64>,
}

impl LambdaProfile {
    pub fn at(&self, x: Site) -> f64 {
        self.lam[(x - self.l) as usize]
    }
}

/// Product measure `⊗_{x ∈ (l, r)} θ_{λ(x)/κ(x)}`.
#[derive(Debug, Clone)]
pub struct OpenNetworkMeasure {
    l: Site,
    r: Site,
    fugacities: Vec<f64>,
    marginals: Vec<ThetaMarginal>,
}

impl OpenNetworkMeasure {
    pub fn marginal(&self, x: Site) -> &ThetaMarginal {
        assert!(x > self.l && x < self.r, "site {x} is not interior");
        &self.marginals[(x - self.l - 1) as usize]
    }

    pub fn marginals(&self) -> &[ThetaMarginal] {
        &self.marginals
    }

    pub fn fugacities(&self) -> &[f64] {
        &self.fugacities
    }
}

pub fn lambda_profile(l: Site, kappa: &[f64], p: f64) -> Result<LambdaProfile, JacksonError> {
    Ok(OpenNetwork::new(l, kappa.to_vec(), p)?.lambda_profile())
}

pub fn check_recurrent(l: Site, kappa: &[f64], p: f64) -> bool {
    OpenNetwork::new(l, kappa.to_vec(), p).map(|n| n.check_recurrent()).unwrap_or(false)
}

pub fn invariant_product(l: Site, kappa: &[f64], p: f64, g: &RateFunction) -> Result<OpenNetworkMeasure, JacksonError> {
    OpenNetwork::new(l, kappa.to_vec(), p)?.invariant_product(g)
}

#[allow(clippy::too_many_arguments)]
pub fn stationarity_residual(
    l: Site,
    kappa: &[f64],
    p: f64,
    g: &RateFunction,
    x: Site,
    k: u64,
    trunc: u64,
) -> Result<f64, JacksonError> {
    OpenNetwork::new(l, kappa.to_vec(), p)?.stationarity_residual(g, x, k, trunc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub site: Site,
    pub kappa: f64,
    pub lambda: f64,
    /// `λ/κ`; absent on the reservoir sites.
    pub fugacity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacksonReport {
    pub l: Site,
    pub r: Site,
    pub p: f64,
    pub recurrent: bool,
    pub sites: Vec<SiteReport>,
    pub max_k: u64,
    pub trunc: u64,
    /// `max |E_μ[L 𝟙{η(x)=k}]|` over interior `x` and `k ≤ max_k`; absent when not recurrent.
    pub max_residual: Option<f64>,
}

pub fn verification_report(net: &OpenNetwork, g: &RateFunction, max_k: u64) -> Result<JacksonReport, JacksonError> {
    let lp = net.lambda_profile();
    let recurrent = net.check_recurrent();
    let sites = (net.l()..=net.r())
        .map(|x| SiteReport {
            site: x,
            kappa: net.kappa(x),
            lambda: lp.at(x),
            fugacity: (x > net.l() && x < net.r()).then(|| lp.at(x) / net.kappa(x)),
        })
        .collect();
    let mut trunc = DEFAULT_TRUNC.max(max_k + 1);
    let mut max_residual = None;
    if recurrent {
        let mu = net.invariant_product(g)?;
        let cut = mu.marginals().iter().map(|m| m.tail_cut()).max().unwrap_or(0);
        trunc = trunc.max(cut);
        let mut worst: f64 = 0.0;
        for x in net.interior() {
            for k in 0..=max_k {
                worst = worst.max(net.residual_under(&mu, g, x, k, trunc)?.abs());
            }
        }
        max_residual = Some(worst);
    }
    Ok(JacksonReport { l: net.l(), r: net.r(), p: net.p(), recurrent, sites, max_k, trunc, max_residual })
}

/// Finite network replacing a supercritical environment.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub l: Site,
    pub r: Site,
    pub r_prime: Site,
    pub alpha_tilde: Environment,
}

impl Truncation {
    pub fn network(&self, p: f64) -> Result<OpenNetwork, JacksonError> {
        OpenNetwork::from_environment(&self.alpha_tilde, self.l, self.r_prime, p)
    }
}

/// `l = A_ε`, `r = a_ε` (or `⌊1/ε⌋` when no slow site lies to the right),
/// `r′ = a_ε` or the first interior site where `λ^{ᾱ,l,r} ≥ ᾱ` (else `r`),
/// and `α̃ = ᾱ` except at `r′`, where it becomes `λ^{ᾱ,l,r}(r′)` when `r′ < r`.
pub fn truncate_environment(alpha_bar: &Environment, eps: f64, p: f64) -> Result<Truncation, JacksonError> {
    if !(eps > 0.0) {
        return Err(JacksonError::WindowTooSmall(format!("eps = {eps} must be positive")));
    }
    if !(p > 0.5 && p <= 1.0) {
        return Err(JacksonError::InvalidDrift(p));
    }
    let w = alpha_bar.window();
    let bounds = defect_bounds(alpha_bar, eps);
    let l = bounds
        .left
        .ok_or_else(|| JacksonError::WindowTooSmall(format!("no site x ≤ 0 with α ≤ c + {eps} in [{}, 0]", w.left)))?;
    if let Some(a) = bounds.right {
        if a <= l {
            return Err(JacksonError::TooShort((a - l + 1).max(0) as usize));
        }
        return Ok(Truncation { l, r: a, r_prime: a, alpha_tilde: alpha_bar.clone() });
    }
    let r = (1.0 / eps).floor() as Site;
    if r <= l {
        return Err(JacksonError::TooShort((r - l + 1).max(0) as usize));
    }
    if !w.contains(r) {
        return Err(JacksonError::WindowTooSmall(format!("r = {r} outside [{}, {}]", w.left, w.right)));
    }
    let net = OpenNetwork::from_environment(alpha_bar, l, r, p)?;
    let lp = net.lambda_profile();
    let r_prime = net.first_violation().unwrap_or(r);
    let alpha_tilde = if r_prime == r {
        alpha_bar.clone()
    } else {
        alpha_bar
            .with_overrides(&[(r_prime, lp.at(r_prime))])
            .map_err(|e| JacksonError::WindowTooSmall(e.to_string()))?
    };
    Ok(Truncation { l, r, r_prime, alpha_tilde })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_site_example() {
        let lp = lambda_profile(0, &[0.4, 1.0, 0.8], 0.75).unwrap();
        assert!((lp.at(1) - 0.5).abs() < 1e-14);
        assert_eq!(lp.at(0), 0.4);
        assert!((lp.at(2) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn totally_asymmetric_profile() {
        let lp = lambda_profile(-2, &[0.3, 1.0, 1.0, 0.9], 1.0).unwrap();
        assert_eq!(lp.lam, vec![0.3, 0.3, 0.3, 0.9]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(lambda_profile(0, &[1.0, 1.0], 0.5), Err(JacksonError::InvalidDrift(_))));
        assert!(matches!(lambda_profile(0, &[1.0], 0.7), Err(JacksonError::TooShort(1))));
        let net = OpenNetwork::new(0, vec![0.5, 0.4, 0.5], 0.7).unwrap();
        assert!(!net.check_recurrent());
        assert!(matches!(
            net.invariant_product(&RateFunction::mm1()),
            Err(JacksonError::NotRecurrent { site: 1, .. })
        ));
    }

    #[test]
    fn residual_needs_enough_truncation() {
        let net = OpenNetwork::new(0, vec![0.9, 1.0, 0.9], 0.7).unwrap();
        let err = net.stationarity_residual(&RateFunction::mm1(), 1, 0, 10).unwrap_err();
        assert!(matches!(err, JacksonError::InsufficientTruncation { trunc: 10, .. }));
    }
}
