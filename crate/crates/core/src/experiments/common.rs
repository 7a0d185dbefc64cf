use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InitialCondition};
use super::ExperimentError;
use crate::env::{EnvironmentSpec, Environment};
use crate::hydro::Piecewise;
use crate::lattice::{Site, Window};
use crate::measures::{marginal_with_gap, sample_product_with, FluxModel, RateFunction, ThetaMarginal};
use crate::rng::ZrpRng;
use crate::sim::{make_source, BoundaryMode, Configuration, Occupancy};

/// One pass/fail line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `null` in JSON for `−∞`.
    #[serde(with = "lower_bound")]
    pub lower: f64,
    /// `null` in JSON for `+∞`.
    #[serde(with = "upper_bound")]
    pub upper: f64,
    pub pass: bool,
}

macro_rules! open_bound {
    ($name:ident, $inf:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                if v.is_finite() {
                    s.serialize_f64(*v)
                } else {
                    s.serialize_none()
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                Ok(Option::<f64>::deserialize(d)?.unwrap_or($inf))
            }
        }
    };
}

open_bound!(lower_bound, f64::NEG_INFINITY);
open_bound!(upper_bound, f64::INFINITY);

impl Check {
    pub fn within(name: &str, value: f64, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), value, lower, upper, pass: value >= lower && value <= upper }
    }

    pub fn below(name: &str, value: f64, upper: f64) -> Self {
        Self::within(name, value, f64::NEG_INFINITY, upper)
    }

    pub fn above(name: &str, value: f64, lower: f64) -> Self {
        Self::within(name, value, lower, f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub window: Window,
    pub replicas: u64,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(cfg: &ExperimentConfig, window: Window) -> Self {
        Self {
            experiment: cfg.kind().into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            window,
            replicas: cfg.replicas,
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.into(), serde_json::to_value(value).expect("metric serializes"));
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.pass;
        self.checks.push(c);
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(|v| v.as_f64())
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A CSV table emitted next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: Report,
    pub tables: Vec<Table>,
}

impl ExperimentOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Environment, rates and the homogenised flux on a simulation window.
pub struct Model {
    pub env: Arc<Environment>,
    pub g: RateFunction,
    pub p: f64,
    pub flux: FluxModel,
}

impl Model {
    pub fn build(cfg: &ExperimentConfig, window: Window) -> Result<Self, ExperimentError> {
        let spec = EnvironmentSpec { construction: cfg.environment.clone(), window, seed: cfg.env_seed };
        let env = spec.build()?;
        Self::with_env(cfg, env)
    }

    pub fn with_env(cfg: &ExperimentConfig, env: Environment) -> Result<Self, ExperimentError> {
        let flux = FluxModel::new(&cfg.g, env.law(), env.c(), cfg.p)?;
        Ok(Self { env: Arc::new(env), g: cfg.g.clone(), p: cfg.p, flux })
    }

    pub fn c(&self) -> f64 {
        self.env.c()
    }

    /// `R̄⁻¹(ρ)` below the plateau onset, `c` at or above it.
    pub fn fugacity_for_density(&self, rho: f64) -> Result<f64, ExperimentError> {
        if rho >= self.flux.plateau_onset() {
            return Ok(self.c());
        }
        Ok(self.flux.rbar().inverse(rho)?.min(self.c()))
    }

    pub fn is_supercritical(&self, rho: f64) -> bool {
        rho >= self.flux.plateau_onset()
    }

    /// `θ_{β/α(x)}`.
    pub fn marginal_at(&self, x: Site, beta: f64) -> Result<ThetaMarginal, ExperimentError> {
        let a = self.env.alpha(x);
        if beta > a {
            return Err(ExperimentError::Config(format!("fugacity {beta} exceeds α({x}) = {a}")));
        }
        if beta == a {
            return Err(ExperimentError::Config(format!("site {x} is critical: θ_1 is not a law")));
        }
        Ok(marginal_with_gap(&self.g, beta / a, (a - beta) / a)?)
    }
}

/// Aborts unless `roi` plus the propagation margins fits inside `window`.
/// An edge carrying `∞` needs no margin: nothing passes through it.
pub fn check_light_cone(
    window: Window,
    roi: (Site, Site),
    horizon: f64,
    speed: f64,
    p: f64,
    infinite_edges: (bool, bool),
) -> Result<(), ExperimentError> {
    let reach = (speed * horizon).ceil() as Site;
    let need_left = if infinite_edges.0 { 0 } else { reach };
    let need_right = if infinite_edges.1 { 0 } else if p < 1.0 { reach } else { 1 };
    if roi.0 - window.left < need_left || window.right - roi.1 < need_right {
        return Err(ExperimentError::LightCone(format!(
            "region [{}, {}] with horizon {horizon} and speed {speed} needs margins ({need_left}, {need_right}) inside [{}, {}]",
            roi.0, roi.1, window.left, window.right
        )));
    }
    Ok(())
}

/// Smallest window around `roi` passing [`check_light_cone`].
pub fn light_cone_window(roi: (Site, Site), horizon: f64, speed: f64, p: f64) -> Window {
    let reach = (speed * horizon).ceil() as Site;
    let right = if p < 1.0 { reach } else { 1 };
    Window::new(roi.0 - reach, roi.1 + right)
}

/// `η(x) = ⌊N∫_{L/N}^{(x+1)/N} ρ_0⌋ − ⌊N∫_{L/N}^{x/N} ρ_0⌋` on the window `[L, R]`.
pub fn cumulative_rounding(profile: &Piecewise, scaling: u64, window: Window) -> Vec<u32> {
    let n = scaling as f64;
    let left = window.left as f64 / n;
    let mut prev = 0.0f64;
    window
        .sites()
        .map(|x| {
            let cum = (n * profile.integral(left, (x + 1) as f64 / n) + 1e-9).floor();
            let v = (cum - prev).max(0.0) as u32;
            prev = cum;
            v
        })
        .collect()
}

/// Initial configuration on `window` (closed boundaries).
pub fn realize_initial(
    ic: &InitialCondition,
    model: &Model,
    window: Window,
    scaling: u64,
    rng: &mut ZrpRng,
) -> Result<Configuration, ExperimentError> {
    let bad = |e: String| ExperimentError::Config(e);
    match ic {
        InitialCondition::Empty => Ok(Configuration::empty(window, BoundaryMode::Closed)),
        InitialCondition::Constant { n } => Configuration::from_counts(window, &vec![*n; window.len()]).map_err(bad),
        InitialCondition::Pattern { pattern, right_empty } => {
            if pattern.is_empty() {
                return Err(bad("empty pattern".into()));
            }
            let k = pattern.len() as Site;
            let counts: Vec<u32> = window
                .sites()
                .map(|x| if *right_empty && x >= 0 { 0 } else { pattern[x.rem_euclid(k) as usize] })
                .collect();
            Configuration::from_counts(window, &counts).map_err(bad)
        }
        InitialCondition::Product { rho } => {
            let beta = model.fugacity_for_density(*rho)?;
            Ok(sample_product_with(&model.env, &model.g, |_| beta, window, rng)?)
        }
        InitialCondition::ProductFugacity { beta } => {
            Ok(sample_product_with(&model.env, &model.g, |_| *beta, window, rng)?)
        }
        InitialCondition::Profile { profile } => {
            profile.validate()?;
            Configuration::from_counts(window, &cumulative_rounding(profile, scaling, window)).map_err(bad)
        }
        InitialCondition::Source { y } => Ok(make_source(*y, window)?),
    }
}

/// Runs `f` on replicas `0..n` in parallel; results keep replica order.
pub fn run_replicas<T: Send>(
    n: u64,
    f: impl Fn(u64) -> Result<T, ExperimentError> + Sync + Send,
) -> Result<Vec<T>, ExperimentError> {
    (0..n).into_par_iter().map(f).collect()
}

pub fn occupancy_value(o: Occupancy) -> Result<u64, ExperimentError> {
    o.finite().map(u64::from).ok_or_else(|| ExperimentError::Config("infinite occupancy at a sampled site".into()))
}

/// `pmf(0..len)` of `θ`, padded so that the table covers the histogram.
pub fn pmf_table(th: &ThetaMarginal, len: usize) -> Vec<f64> {
    let n = len.max(th.tail_cut() as usize + 1);
    (0..n as u64).map(|k| th.pmf(k)).collect()
}

/// `site,n,empirical,theta` rows.
pub fn marginal_csv(rows: &[(Site, Vec<f64>, Vec<f64>)]) -> String {
    let mut s = String::from("site,n,empirical,theta\n");
    for (x, emp, th) in rows {
        for n in 0..emp.len().max(th.len()) {
            let e = emp.get(n).copied().unwrap_or(0.0);
            let t = th.get(n).copied().unwrap_or(0.0);
            if e == 0.0 && t < 1e-12 {
                continue;
            }
            s.push_str(&format!("{x},{n},{e},{t}\n"));
        }
    }
    s
}
