//! Disorder environments on a finite window.
//!
//! An [`Environment`] carries per-site rate multipliers `α(x) ∈ (0, 1]` on a
//! window of ℤ, together with the *declared* infimum `c` of the (conceptually
//! infinite) environment and the single-site law `Q0` it averages to. `c` is
//! metadata: the true infimum over ℤ need not be attained inside the window.

mod law;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use law::{Atom, DensityLaw, DensityShape, DisorderLaw};

use crate::lattice::{Site, Window};
use crate::rng;

const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EnvError {
    #[error("window [{0}, {1}] is empty")]
    EmptyWindow(Site, Site),
    #[error("disorder value {0} outside (0, 1]")]
    ValueOutOfRange(f64),
    #[error("invalid disorder law: {0}")]
    InvalidLaw(String),
    #[error("exponent kappa = {0} must exceed 1")]
    KappaTooSmall(f64),
    #[error("declared infimum c = {c} exceeds {bound}")]
    InfimumTooLarge { c: f64, bound: f64 },
    #[error("explicit environment has {got} values for a window of {expected} sites")]
    LengthMismatch { expected: usize, got: usize },
    #[error("half-window of length {n} exceeds the environment window")]
    OutsideWindow { n: usize },
}

/// Defect values `α_n` placed on the deterministic defect sequence `x_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DefectRule {
    /// `α_n = min(1, c + 1/(|n|+2))`.
    #[default]
    Decay,
    Constant { value: f64 },
}

impl DefectRule {
    fn value(&self, n: i64, c: f64) -> f64 {
        match self {
            DefectRule::Decay => (c + 1.0 / (n.unsigned_abs() as f64 + 2.0)).min(1.0),
            DefectRule::Constant { value } => *value,
        }
    }
}

/// How to construct an environment. The window and seed are supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    /// `α(x)` i.i.d. with law `q0`; `c = inf supp q0`.
    Iid { q0: DisorderLaw },
    /// Quantile construction along the defect sequence `x_n = sgn(n)⌊|n|^κ⌋`.
    Deterministic {
        q0: DisorderLaw,
        kappa: f64,
        /// Defaults to `inf supp q0`.
        #[serde(default)]
        c: Option<f64>,
        #[serde(default)]
        defect: DefectRule,
    },
    /// User-supplied values. Either `alpha` lists every site of the window from
    /// the left, or every site takes `fill` except those in `overrides`.
    Explicit {
        #[serde(default)]
        alpha: Vec<f64>,
        #[serde(default)]
        fill: Option<f64>,
        #[serde(default, with = "site_map")]
        overrides: BTreeMap<Site, f64>,
        /// Defaults to the minimum over the window.
        #[serde(default)]
        c: Option<f64>,
        /// Defaults to the empirical law of the window.
        #[serde(default)]
        q0: Option<DisorderLaw>,
    },
}

/// Site-keyed maps with JSON string keys; parsed by hand because tagged
/// enums buffer their content and lose integer-key support.
mod site_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::lattice::Site;

    pub fn serialize<S: Serializer>(m: &BTreeMap<Site, f64>, s: S) -> Result<S::Ok, S::Error> {
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Site, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.trim().parse::<Site>().map(|x| (x, v)).map_err(|_| D::Error::custom(format!("bad site key `{k}`"))))
            .collect()
    }
}

/// JSON document describing an environment: the construction plus window and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(flatten)]
    pub construction: Construction,
    pub window: Window,
    #[serde(default)]
    pub seed: u64,
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<Environment, EnvError> {
        build_environment(&self.construction, self.window, self.seed)
    }
}

/// Provenance of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Iid { seed: u64 },
    Deterministic { kappa: f64 },
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentDump", into = "EnvironmentDump")]
pub struct Environment {
    window: Window,
    alpha: Vec<f64>,
    c: f64,
    law: DisorderLaw,
    provenance: Provenance,
}

/// Serialized form: `alpha` as a site → value map.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EnvironmentDump {
    window: Window,
    c: f64,
    law: DisorderLaw,
    provenance: Provenance,
    alpha: BTreeMap<Site, f64>,
}

impl TryFrom<EnvironmentDump> for Environment {
    type Error = EnvError;
    fn try_from(d: EnvironmentDump) -> Result<Self, EnvError> {
        let alpha: Vec<f64> = d
            .window
            .sites()
            .map(|x| d.alpha.get(&x).copied().unwrap_or(f64::NAN))
            .collect();
        Environment::from_parts(d.window, alpha, d.c, d.law, d.provenance)
    }
}

impl From<Environment> for EnvironmentDump {
    fn from(e: Environment) -> Self {
        let alpha = e.window.sites().zip(e.alpha.iter().copied()).collect();
        EnvironmentDump {
            window: e.window,
            c: e.c,
            law: e.law,
            provenance: e.provenance,
            alpha,
        }
    }
}

impl Environment {
    /// Validates every invariant of an environment.
    pub fn from_parts(
        window: Window,
        alpha: Vec<f64>,
        c: f64,
        law: DisorderLaw,
        provenance: Provenance,
    ) -> Result<Self, EnvError> {
        if window.is_empty() {
            return Err(EnvError::EmptyWindow(window.left, window.right));
        }
        if alpha.len() != window.len() {
            return Err(EnvError::LengthMismatch {
                expected: window.len(),
                got: alpha.len(),
            });
        }
        law.validate()?;
        if let Some(&bad) = alpha.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(EnvError::ValueOutOfRange(bad));
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(EnvError::ValueOutOfRange(c));
        }
        let window_min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
        if c > window_min + ORDER_TOL {
            return Err(EnvError::InfimumTooLarge { c, bound: window_min });
        }
        let inf_supp = law.inf_support();
        if c > inf_supp + ORDER_TOL {
            return Err(EnvError::InfimumTooLarge { c, bound: inf_supp });
        }
        Ok(Self {
            window,
            alpha,
            c,
            law,
            provenance,
        })
    }

    /// Homogeneous environment `α ≡ 1`.
    pub fn homogeneous(window: Window) -> Self {
        Self::from_parts(
            window,
            vec![1.0; window.len()],
            1.0,
            DisorderLaw::dirac(1.0),
            Provenance::Explicit,
        )
        .expect("homogeneous environment is valid")
    }

    /// `α ≡ 1` except at `slow` sites, with `Q0 = δ_1` and `c` the slowest value.
    pub fn with_slow_sites(window: Window, slow: &[(Site, f64)]) -> Result<Self, EnvError> {
        let mut alpha = vec![1.0; window.len()];
        let mut c: f64 = 1.0;
        for &(x, v) in slow {
            if window.contains(x) {
                alpha[window.index(x)] = v;
            }
            c = c.min(v);
        }
        Self::from_parts(window, alpha, c, DisorderLaw::dirac(1.0), Provenance::Explicit)
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// `α(x)`; panics outside the window.
    #[inline]
    pub fn alpha(&self, x: Site) -> f64 {
        self.alpha[self.window.index(x)]
    }

    #[inline]
    pub fn alpha_at_index(&self, i: usize) -> f64 {
        self.alpha[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha
    }

    /// Declared infimum of the full environment.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn law(&self) -> &DisorderLaw {
        &self.law
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn window_min(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copy with `α(x)` replaced at the given sites (law and `c` unchanged
    /// unless a new value undercuts `c`).
    pub fn with_overrides(&self, overrides: &[(Site, f64)]) -> Result<Self, EnvError> {
        let mut alpha = self.alpha.clone();
        let mut c = self.c;
        for &(x, v) in overrides {
            if !self.window.contains(x) {
                continue;
            }
            alpha[self.window.index(x)] = v;
            c = c.min(v);
        }
        Self::from_parts(self.window, alpha, c, self.law.clone(), self.provenance.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Defect sequence `x_n = 1{n≠0} sgn(n) ⌊|n|^κ⌋`.
pub fn defect_site(n: i64, kappa: f64) -> Site {
    if n == 0 {
        0
    } else {
        let m = (n.unsigned_abs() as f64).powf(kappa).floor() as i64;
        n.signum() * m
    }
}

/// Builds an environment; a pure function of its arguments.
pub fn build_environment(
    construction: &Construction,
    window: Window,
    seed: u64,
) -> Result<Environment, EnvError> {
    if window.is_empty() {
        return Err(EnvError::EmptyWindow(window.left, window.right));
    }
    match construction {
        Construction::Iid { q0 } => {
            q0.validate()?;
            let mut rng = rng::seeded(seed);
            let alpha: Vec<f64> = (0..window.len()).map(|_| q0.sample(&mut rng)).collect();
            Environment::from_parts(
                window,
                alpha,
                q0.inf_support(),
                q0.clone(),
                Provenance::Iid { seed },
            )
        }
        Construction::Deterministic {
            q0,
            kappa,
            c,
            defect,
        } => {
            q0.validate()?;
            if !(*kappa > 1.0) {
                return Err(EnvError::KappaTooSmall(*kappa));
            }
            let inf_supp = q0.inf_support();
            let c = c.unwrap_or(inf_supp);
            if c > inf_supp + ORDER_TOL {
                return Err(EnvError::InfimumTooLarge { c, bound: inf_supp });
            }
            let alpha = deterministic_values(q0, *kappa, c, defect, window)?;
            Environment::from_parts(
                window,
                alpha,
                c,
                q0.clone(),
                Provenance::Deterministic { kappa: *kappa },
            )
        }
        Construction::Explicit {
            alpha,
            fill,
            overrides,
            c,
            q0,
        } => {
            let mut values = if alpha.is_empty() {
                vec![fill.unwrap_or(1.0); window.len()]
            } else {
                if alpha.len() != window.len() {
                    return Err(EnvError::LengthMismatch {
                        expected: window.len(),
                        got: alpha.len(),
                    });
                }
                alpha.clone()
            };
            for (&x, &v) in overrides {
                if window.contains(x) {
                    values[window.index(x)] = v;
                }
            }
            if let Some(&bad) = values.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
                return Err(EnvError::ValueOutOfRange(bad));
            }
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let law = match q0 {
                Some(l) => l.clone(),
                None => empirical_law(&values),
            };
            Environment::from_parts(window, values, c.unwrap_or(min), law, Provenance::Explicit)
        }
    }
}

fn deterministic_values(
    q0: &DisorderLaw,
    kappa: f64,
    c: f64,
    defect: &DefectRule,
    window: Window,
) -> Result<Vec<f64>, EnvError> {
    let replace_defects = c < q0.inf_support();
    // defect indices n whose segment [x_n, x_{n+1}) meets the window
    let mut n = 0i64;
    while defect_site(n, kappa) > window.left {
        n -= 1;
    }
    let mut alpha = Vec::with_capacity(window.len());
    let mut x = window.left;
    while x <= window.right {
        let (lo, hi) = (defect_site(n, kappa), defect_site(n + 1, kappa));
        if x >= hi {
            n += 1;
            continue;
        }
        let value = if x == lo && replace_defects {
            let v = defect.value(n, c);
            if !(v > c && v <= 1.0) {
                return Err(EnvError::ValueOutOfRange(v));
            }
            v
        } else {
            let u = (x - lo) as f64 / (hi - lo) as f64;
            q0.quantile(u)
        };
        alpha.push(value);
        x += 1;
    }
    Ok(alpha)
}

fn empirical_law(values: &[f64]) -> DisorderLaw {
    let dist = DiscreteDistribution::from_samples(values.iter().copied());
    DisorderLaw::Atoms(
        dist.atoms
            .into_iter()
            .map(|(value, weight)| Atom { value, weight })
            .collect(),
    )
}

/// Finitely supported probability distribution on `(0, 1]`, atoms sorted by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Self {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        let mut total = 0usize;
        for v in samples {
            // positive floats order like their bit patterns
            *counts.entry(v.to_bits()).or_default() += 1;
            total += 1;
        }
        let atoms = counts
            .into_iter()
            .map(|(bits, k)| (f64::from_bits(bits), k as f64 / total as f64))
            .collect();
        Self { atoms }
    }

    pub fn weight_of(&self, value: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|(v, _)| *v == value)
            .map(|(_, w)| *w)
            .sum()
    }

    pub fn cdf(&self, a: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|(v, _)| *v <= a)
            .map(|(_, w)| *w)
            .sum()
    }

    /// Total variation distance to an atomic law; `None` if `law` has a density
    /// (the distance is then identically 1).
    pub fn tv_distance(&self, law: &DisorderLaw) -> Option<f64> {
        let target = law.sorted_atoms()?;
        let mut diff = 0.0;
        for &(v, w) in &self.atoms {
            let q = target.iter().find(|a| a.value == v).map_or(0.0, |a| a.weight);
            diff += (w - q).abs();
        }
        for a in &target {
            if !self.atoms.iter().any(|(v, _)| *v == a.value) {
                diff += a.weight;
            }
        }
        Some(0.5 * diff)
    }

    /// Kolmogorov distance `sup_a |F_emp(a) − F(a)|`, usable for any law.
    pub fn ks_distance(&self, law: &DisorderLaw) -> f64 {
        let mut points: Vec<f64> = self.atoms.iter().map(|(v, _)| *v).collect();
        points.extend(law.breakpoints());
        let mut worst: f64 = 0.0;
        for a in points {
            worst = worst.max((self.cdf(a) - law.cdf(a)).abs());
            let below = a - a * f64::EPSILON * 4.0;
            worst = worst.max((self.cdf(below) - law.cdf(below)).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Empirical law of `α` over `[0, n]` (right) or `[-n, 0]` (left).
pub fn empirical_disorder(
    env: &Environment,
    n: usize,
    side: Side,
) -> Result<DiscreteDistribution, EnvError> {
    let w = env.window();
    let range = match side {
        Side::Right => Window::new(0, n as Site),
        Side::Left => Window::new(-(n as Site), 0),
    };
    if !w.contains_window(&range) {
        return Err(EnvError::OutsideWindow { n });
    }
    Ok(DiscreteDistribution::from_samples(
        range.sites().map(|x| env.alpha(x)),
    ))
}

/// Nearest near-critical sites around the origin.
///
/// `left = sup{x ≤ 0 : α(x) ≤ c + ε}` and `right = inf{x ≥ 0 : α(x) ≤ c + ε}`,
/// searched inside the window only; `None` stands for `-∞` / `+∞` when no such
/// site exists within the window (the true value may lie beyond it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectBounds {
    pub left: Option<Site>,
    pub right: Option<Site>,
    pub eps: f64,
}

pub fn defect_bounds(env: &Environment, eps: f64) -> DefectBounds {
    let w = env.window();
    let level = env.c() + eps;
    let slow = |x: &Site| env.alpha(*x) <= level;
    let left = if w.left <= 0 {
        (w.left..=0.min(w.right)).rev().find(slow)
    } else {
        None
    };
    let right = if w.right >= 0 {
        (0.max(w.left)..=w.right).find(slow)
    } else {
        None
    };
    DefectBounds { left, right, eps }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atoms() -> DisorderLaw {
        DisorderLaw::atoms(&[(1.0, 0.5), (0.6, 0.5)])
    }

    #[test]
    fn explicit_homogeneous() {
        let env = build_environment(
            &Construction::Explicit {
                alpha: vec![],
                fill: Some(1.0),
                overrides: BTreeMap::new(),
                c: None,
                q0: None,
            },
            Window::new(-10, 10),
            0,
        )
        .unwrap();
        assert_eq!(env.c(), 1.0);
        assert!(env.values().iter().all(|&a| a == 1.0));
        assert_eq!(env.values().len(), 21);
    }

    #[test]
    fn deterministic_defect_sites_for_kappa_two() {
        let sites: Vec<Site> = (-3..=3).map(|n| defect_site(n, 2.0)).collect();
        assert_eq!(sites, vec![-9, -4, -1, 0, 1, 4, 9]);
        let q0 = DisorderLaw::atoms(&[(0.8, 0.5), (1.0, 0.5)]);
        let env = build_environment(
            &Construction::Deterministic {
                q0,
                kappa: 2.0,
                c: Some(0.5),
                defect: DefectRule::Decay,
            },
            Window::new(-20, 20),
            0,
        )
        .unwrap();
        // defect sites carry c + 1/(|n|+2), everything else lies in supp Q0
        let expected_defects = [(-4, 0.5 + 0.25), (-1, 0.5 + 1.0 / 3.0), (0, 1.0), (1, 0.5 + 1.0 / 3.0), (4, 0.75), (9, 0.7)];
        for (x, v) in expected_defects {
            assert!((env.alpha(x) - v).abs() < 1e-15, "site {x}: {}", env.alpha(x));
        }
        for x in env.window().sites() {
            let is_defect = (-5..=5).any(|n| defect_site(n, 2.0) == x);
            if !is_defect {
                assert!(env.alpha(x) == 0.8 || env.alpha(x) == 1.0);
            }
        }
        // u(x) on [4, 9): 0, .2, .4, .6, .8 -> quantile 0.8 below 1/2, 1.0 from 1/2 on
        assert_eq!(env.alpha(5), 0.8);
        assert_eq!(env.alpha(6), 0.8);
        assert_eq!(env.alpha(7), 1.0);
        assert_eq!(env.alpha(8), 1.0);
    }

    #[test]
    fn construction_errors() {
        let q0 = two_atoms();
        let det = |kappa| Construction::Deterministic {
            q0: q0.clone(),
            kappa,
            c: None,
            defect: DefectRule::Decay,
        };
        assert_eq!(
            build_environment(&det(1.0), Window::new(0, 5), 0),
            Err(EnvError::KappaTooSmall(1.0))
        );
        assert!(matches!(
            build_environment(&det(2.0), Window::new(3, 2), 0),
            Err(EnvError::EmptyWindow(3, 2))
        ));
        let bad = Construction::Iid {
            q0: DisorderLaw::atoms(&[(1.5, 1.0)]),
        };
        assert_eq!(
            build_environment(&bad, Window::new(0, 5), 0),
            Err(EnvError::ValueOutOfRange(1.5))
        );
    }

    #[test]
    fn iid_is_pure_in_its_inputs() {
        let cons = Construction::Iid { q0: two_atoms() };
        let a = build_environment(&cons, Window::new(-50, 50), 11).unwrap();
        let b = build_environment(&cons, Window::new(-50, 50), 11).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = build_environment(&cons, Window::new(-50, 50), 12).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn dump_and_reload() {
        let cons = Construction::Iid { q0: two_atoms() };
        let env = build_environment(&cons, Window::new(-5, 5), 3).unwrap();
        let json = env.to_json();
        assert!(json.contains("\"-5\""));
        let back = Environment::from_json(&json).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn defect_bounds_examples() {
        let env = Environment::homogeneous(Window::new(-10, 10));
        let b = defect_bounds(&env, 0.1);
        assert_eq!((b.left, b.right), (Some(0), Some(0)));

        let env = Environment::with_slow_sites(Window::new(-10, 10), &[(0, 0.5)]).unwrap();
        let b = defect_bounds(&env, 0.1);
        assert_eq!((b.left, b.right), (Some(0), Some(0)));

        let env = Environment::with_slow_sites(Window::new(-10, 10), &[(-3, 0.5), (4, 0.55)]).unwrap();
        let b = defect_bounds(&env, 0.1);
        assert_eq!((b.left, b.right), (Some(-3), Some(4)));
        let b = defect_bounds(&env, 0.01);
        assert_eq!((b.left, b.right), (Some(-3), None));
    }

    #[test]
    fn empirical_disorder_homogeneous_and_out_of_window() {
        let env = Environment::homogeneous(Window::new(-100, 100));
        let d = empirical_disorder(&env, 100, Side::Right).unwrap();
        assert_eq!(d.atoms, vec![(1.0, 1.0)]);
        assert_eq!(d.tv_distance(&DisorderLaw::dirac(1.0)), Some(0.0));
        assert_eq!(
            empirical_disorder(&env, 101, Side::Left),
            Err(EnvError::OutsideWindow { n: 101 })
        );
    }
}
