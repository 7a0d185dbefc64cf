use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EnvError;

const WEIGHT_TOL: f64 = 1e-12;

fn default_nodes() -> usize {
    512
}

/// One atom `weight · δ_value` of an atomic disorder law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// Absolutely continuous law on `[lo, hi] ⊂ (0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DensityShape {
    /// Density `(k+1)(a-lo)^k / (hi-lo)^(k+1)`; `exponent = 0` is the uniform law.
    Power { lo: f64, hi: f64, exponent: f64 },
    /// Piecewise-constant density, `weights[i]` being the mass of `[edges[i], edges[i+1])`.
    Histogram { edges: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityLaw {
    #[serde(flatten)]
    pub shape: DensityShape,
    /// Node budget for quadrature against this law.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

/// Single-site law of the disorder (the limit of empirical environment measures).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderLaw {
    Atoms(Vec<Atom>),
    Density(DensityLaw),
}

impl DisorderLaw {
    pub fn dirac(value: f64) -> Self {
        DisorderLaw::Atoms(vec![Atom { value, weight: 1.0 }])
    }

    pub fn atoms(pairs: &[(f64, f64)]) -> Self {
        DisorderLaw::Atoms(
            pairs
                .iter()
                .map(|&(value, weight)| Atom { value, weight })
                .collect(),
        )
    }

    pub fn power(lo: f64, hi: f64, exponent: f64) -> Self {
        DisorderLaw::Density(DensityLaw {
            shape: DensityShape::Power { lo, hi, exponent },
            nodes: default_nodes(),
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::power(lo, hi, 0.0)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        match self {
            DisorderLaw::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(EnvError::InvalidLaw("no atoms".into()));
                }
                let mut total = 0.0;
                for a in atoms {
                    if !in_unit(a.value) {
                        return Err(EnvError::ValueOutOfRange(a.value));
                    }
                    if !(a.weight >= 0.0) {
                        return Err(EnvError::InvalidLaw(format!("negative weight {}", a.weight)));
                    }
                    total += a.weight;
                }
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(EnvError::InvalidLaw(format!("weights sum to {total}")));
                }
            }
            DisorderLaw::Density(d) => {
                if d.nodes < 8 {
                    return Err(EnvError::InvalidLaw("fewer than 8 quadrature nodes".into()));
                }
                match &d.shape {
                    DensityShape::Power { lo, hi, exponent } => {
                        if !in_unit(*lo) {
                            return Err(EnvError::ValueOutOfRange(*lo));
                        }
                        if !in_unit(*hi) {
                            return Err(EnvError::ValueOutOfRange(*hi));
                        }
                        if !(lo < hi) {
                            return Err(EnvError::InvalidLaw(format!("empty support [{lo}, {hi}]")));
                        }
                        if !(*exponent > -1.0) {
                            return Err(EnvError::InvalidLaw(format!(
                                "exponent {exponent} is not integrable"
                            )));
                        }
                    }
                    DensityShape::Histogram { edges, weights } => {
                        if edges.len() != weights.len() + 1 || weights.is_empty() {
                            return Err(EnvError::InvalidLaw(
                                "histogram needs one more edge than weights".into(),
                            ));
                        }
                        if edges.windows(2).any(|w| !(w[0] < w[1])) {
                            return Err(EnvError::InvalidLaw("edges must increase".into()));
                        }
                        if let Some(v) = [edges[0], edges[edges.len() - 1]]
                            .into_iter()
                            .find(|v| !in_unit(*v))
                        {
                            return Err(EnvError::ValueOutOfRange(v));
                        }
                        if weights.iter().any(|w| !(*w >= 0.0)) {
                            return Err(EnvError::InvalidLaw("negative histogram weight".into()));
                        }
                        let total: f64 = weights.iter().sum();
                        if (total - 1.0).abs() > WEIGHT_TOL {
                            return Err(EnvError::InvalidLaw(format!("weights sum to {total}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `inf supp Q0`.
    pub fn inf_support(&self) -> f64 {
        match self {
            DisorderLaw::Atoms(atoms) => atoms
                .iter()
                .filter(|a| a.weight > 0.0)
                .map(|a| a.value)
                .fold(f64::INFINITY, f64::min),
            DisorderLaw::Density(d) => match &d.shape {
                DensityShape::Power { lo, .. } => *lo,
                DensityShape::Histogram { edges, weights } => {
                    let i = weights.iter().position(|w| *w > 0.0).unwrap_or(0);
                    edges[i]
                }
            },
        }
    }

    pub fn sup_support(&self) -> f64 {
        match self {
            DisorderLaw::Atoms(atoms) => atoms
                .iter()
                .filter(|a| a.weight > 0.0)
                .map(|a| a.value)
                .fold(f64::NEG_INFINITY, f64::max),
            DisorderLaw::Density(d) => match &d.shape {
                DensityShape::Power { hi, .. } => *hi,
                DensityShape::Histogram { edges, weights } => {
                    let i = weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1);
                    edges[i + 1]
                }
            },
        }
    }

    /// Atoms sorted by value with zero-weight atoms dropped; `None` for densities.
    pub fn sorted_atoms(&self) -> Option<Vec<Atom>> {
        match self {
            DisorderLaw::Atoms(atoms) => {
                let mut v: Vec<Atom> = atoms.iter().copied().filter(|a| a.weight > 0.0).collect();
                v.sort_by(|a, b| a.value.total_cmp(&b.value));
                // merge duplicates
                let mut out: Vec<Atom> = Vec::with_capacity(v.len());
                for a in v {
                    match out.last_mut() {
                        Some(last) if last.value == a.value => last.weight += a.weight,
                        _ => out.push(a),
                    }
                }
                Some(out)
            }
            DisorderLaw::Density(_) => None,
        }
    }

    /// Density at `a`, zero off the support. `None` for atomic laws.
    pub fn density(&self, a: f64) -> Option<f64> {
        let DisorderLaw::Density(d) = self else {
            return None;
        };
        Some(match &d.shape {
            DensityShape::Power { lo, hi, exponent } => {
                if a < *lo || a > *hi {
                    0.0
                } else {
                    power_density(a - lo, hi - lo, *exponent)
                }
            }
            DensityShape::Histogram { edges, weights } => {
                if a < edges[0] || a > edges[edges.len() - 1] {
                    0.0
                } else {
                    let i = bin_of(edges, a);
                    weights[i] / (edges[i + 1] - edges[i])
                }
            }
        })
    }

    /// Density expressed through the offset `s = a - inf supp Q0`, which stays
    /// accurate for offsets far below machine precision of `a` itself.
    pub fn density_at_offset(&self, s: f64) -> Option<f64> {
        let DisorderLaw::Density(d) = self else {
            return None;
        };
        match &d.shape {
            DensityShape::Power { lo, hi, exponent } => {
                if s < 0.0 || s > hi - lo {
                    Some(0.0)
                } else {
                    Some(power_density(s, hi - lo, *exponent))
                }
            }
            DensityShape::Histogram { .. } => self.density(self.inf_support() + s),
        }
    }

    /// Break points of the density (panel boundaries for quadrature).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            DisorderLaw::Atoms(atoms) => atoms.iter().map(|a| a.value).collect(),
            DisorderLaw::Density(d) => match &d.shape {
                DensityShape::Power { lo, hi, .. } => vec![*lo, *hi],
                DensityShape::Histogram { edges, .. } => edges.clone(),
            },
        }
    }

    pub fn quadrature_nodes(&self) -> usize {
        match self {
            DisorderLaw::Atoms(a) => a.len(),
            DisorderLaw::Density(d) => d.nodes,
        }
    }

    /// `F(a) = Q0([0, a])`.
    pub fn cdf(&self, a: f64) -> f64 {
        match self {
            DisorderLaw::Atoms(atoms) => atoms
                .iter()
                .filter(|x| x.value <= a)
                .map(|x| x.weight)
                .sum::<f64>()
                .min(1.0),
            DisorderLaw::Density(d) => match &d.shape {
                DensityShape::Power { lo, hi, exponent } => {
                    if a <= *lo {
                        0.0
                    } else if a >= *hi {
                        1.0
                    } else {
                        ((a - lo) / (hi - lo)).powf(exponent + 1.0)
                    }
                }
                DensityShape::Histogram { edges, weights } => {
                    if a <= edges[0] {
                        return 0.0;
                    }
                    if a >= edges[edges.len() - 1] {
                        return 1.0;
                    }
                    let i = bin_of(edges, a);
                    let below: f64 = weights[..i].iter().sum();
                    below + weights[i] * (a - edges[i]) / (edges[i + 1] - edges[i])
                }
            },
        }
    }

    /// Right-continuous generalized inverse `inf{a : F(a) > u}`, capped at the
    /// top of the support for `u >= 1`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            DisorderLaw::Atoms(_) => {
                let atoms = self.sorted_atoms().expect("atomic");
                let mut cum = 0.0;
                for a in &atoms {
                    cum += a.weight;
                    if cum > u {
                        return a.value;
                    }
                }
                atoms.last().map(|a| a.value).unwrap_or(f64::NAN)
            }
            DisorderLaw::Density(d) => match &d.shape {
                DensityShape::Power { lo, hi, exponent } => {
                    let u = u.clamp(0.0, 1.0);
                    lo + (hi - lo) * u.powf(1.0 / (exponent + 1.0))
                }
                DensityShape::Histogram { edges, weights } => {
                    let mut cum = 0.0;
                    for (i, w) in weights.iter().enumerate() {
                        if cum + w > u {
                            let frac = ((u - cum) / w).max(0.0);
                            return edges[i] + frac * (edges[i + 1] - edges[i]);
                        }
                        cum += w;
                    }
                    self.sup_support()
                }
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }
}

fn power_density(s: f64, width: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0 / width
    } else {
        (exponent + 1.0) * (s / width).powf(exponent) / width
    }
}

fn bin_of(edges: &[f64], a: f64) -> usize {
    let i = edges.partition_point(|e| *e <= a);
    i.saturating_sub(1).min(edges.len() - 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_quantile_is_right_continuous() {
        let law = DisorderLaw::atoms(&[(1.0, 0.5), (0.6, 0.5)]);
        law.validate().unwrap();
        assert_eq!(law.quantile(0.0), 0.6);
        assert_eq!(law.quantile(0.49), 0.6);
        // plateau of F at 0.5 maps to the next atom
        assert_eq!(law.quantile(0.5), 1.0);
        assert_eq!(law.quantile(0.99), 1.0);
        assert_eq!(law.quantile(1.0), 1.0);
        assert_eq!(law.inf_support(), 0.6);
        assert_eq!(law.cdf(0.7), 0.5);
    }

    #[test]
    fn power_law_cdf_and_quantile_invert() {
        let law = DisorderLaw::power(0.5, 1.0, 1.0);
        law.validate().unwrap();
        for u in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let a = law.quantile(u);
            assert!((law.cdf(a) - u).abs() < 1e-14);
        }
        // density 8(a - 1/2)
        assert!((law.density(0.75).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(law.density(0.25).unwrap(), 0.0);
    }

    #[test]
    fn histogram_skips_empty_bins() {
        let law = DisorderLaw::Density(DensityLaw {
            shape: DensityShape::Histogram {
                edges: vec![0.2, 0.4, 0.6, 1.0],
                weights: vec![0.5, 0.0, 0.5],
            },
            nodes: 64,
        });
        law.validate().unwrap();
        assert!((law.quantile(0.25) - 0.3).abs() < 1e-14);
        assert!((law.quantile(0.5) - 0.6).abs() < 1e-14);
        assert!((law.cdf(0.5) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn invalid_laws_are_rejected() {
        assert!(DisorderLaw::atoms(&[(1.0, 0.5)]).validate().is_err());
        assert!(DisorderLaw::atoms(&[(1.2, 1.0)]).validate().is_err());
        assert!(DisorderLaw::atoms(&[(0.0, 1.0)]).validate().is_err());
        assert!(DisorderLaw::power(0.6, 0.5, 0.0).validate().is_err());
        assert!(DisorderLaw::power(0.5, 1.0, -1.5).validate().is_err());
    }

    #[test]
    fn json_shape() {
        let law: DisorderLaw =
            serde_json::from_str(r#"{"density":{"shape":"power","lo":0.5,"hi":1.0,"exponent":1.0}}"#)
                .unwrap();
        assert_eq!(law, DisorderLaw::power(0.5, 1.0, 1.0));
        let atoms: DisorderLaw =
            serde_json::from_str(r#"{"atoms":[{"value":1.0,"weight":0.5},{"value":0.6,"weight":0.5}]}"#)
                .unwrap();
        assert_eq!(atoms.inf_support(), 0.6);
    }
}
