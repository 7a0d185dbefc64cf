use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::Construction;
use crate::hydro::Piecewise;
use crate::lattice::Site;
use crate::measures::RateFunction;

fn default_g() -> RateFunction {
    RateFunction::mm1()
}

fn default_speed() -> f64 {
    3.0
}

fn homogeneous() -> Construction {
    Construction::Explicit { alpha: vec![], fill: Some(1.0), overrides: BTreeMap::new(), c: None, q0: None }
}

/// One experiment run: model, initial data, sizes and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Environment construction; the window is sized by the experiment.
    #[serde(default = "homogeneous")]
    pub environment: Construction,
    #[serde(default)]
    pub env_seed: u64,
    #[serde(default = "default_g")]
    pub g: RateFunction,
    pub p: f64,
    pub replicas: u64,
    pub seed: u64,
    /// Propagation speed bound used for window sizing.
    #[serde(default = "default_speed")]
    pub light_cone_speed: f64,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn kind(&self) -> &'static str {
        self.experiment.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    HydroCompare(HydroCompare),
    LocalEquilibrium(LocalEquilibrium),
    CesaroMarginal(CesaroMarginal),
    Convergence(Convergence),
    CurrentChecks(CurrentChecks),
    Condensation(Condensation),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::HydroCompare(_) => "hydro_compare",
            Experiment::LocalEquilibrium(_) => "local_equilibrium",
            Experiment::CesaroMarginal(_) => "cesaro_marginal",
            Experiment::Convergence(_) => "convergence",
            Experiment::CurrentChecks(_) => "current_checks",
            Experiment::Condensation(_) => "condensation",
        }
    }
}

/// Initial configurations. Sites outside the simulation window are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Empty,
    /// `η ≡ n`.
    Constant { n: u32 },
    /// `η(x) = pattern[x mod len]`; with `right_empty`, zero on `x ≥ 0`.
    Pattern {
        pattern: Vec<u32>,
        #[serde(default)]
        right_empty: bool,
    },
    /// `μ^{α,ρ}`: product measure with fugacity `R̄⁻¹(ρ)` (or `c` above the plateau onset).
    Product { rho: f64 },
    /// Product measure at an explicit fugacity.
    ProductFugacity { beta: f64 },
    /// Cumulative rounding of the macroscopic profile `ρ_0(x/N)`.
    Profile { profile: Piecewise },
    /// `∞` on `x ≤ y`, empty to the right.
    Source { y: Site },
}

impl InitialCondition {
    /// Left Cesàro density, when it is defined by the specification alone.
    pub fn left_density(&self) -> Option<f64> {
        match self {
            InitialCondition::Empty => Some(0.0),
            InitialCondition::Constant { n } => Some(*n as f64),
            InitialCondition::Pattern { pattern, .. } => {
                Some(pattern.iter().map(|&v| v as f64).sum::<f64>() / pattern.len() as f64)
            }
            InitialCondition::Product { rho } => Some(*rho),
            InitialCondition::Profile { profile } => profile.values.first().copied(),
            InitialCondition::ProductFugacity { .. } | InitialCondition::Source { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroCompare {
    pub profile: Piecewise,
    pub scaling: u64,
    /// Macroscopic time.
    pub time: f64,
    /// Macroscopic region compared, `[a, b]`.
    pub roi: (f64, f64),
    pub cell_width: f64,
    pub pde_dx: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Largest accepted L1 distance of the replica-averaged profile.
    #[serde(default = "five_percent")]
    pub tolerance: f64,
}

fn five_percent() -> f64 {
    0.05
}

fn default_cfl() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEquilibrium {
    pub initial: InitialCondition,
    pub scaling: u64,
    pub time: f64,
    /// Macroscopic position `u`; the test box is `⌊Nu⌋ + offsets`.
    #[serde(default)]
    pub position: f64,
    #[serde(default = "origin")]
    pub offsets: Vec<Site>,
    /// Overrides the hydrodynamic density at `(t, u)`.
    #[serde(default)]
    pub density: Option<f64>,
    /// Largest accepted total-variation distance per site.
    #[serde(default = "five_percent")]
    pub tolerance: f64,
}

fn origin() -> Vec<Site> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesaroMarginal {
    pub initial: InitialCondition,
    pub scaling: u64,
    pub time: f64,
    pub deltas: Vec<f64>,
    /// Macroscopic positions `[u_0, u_1]` of the pooled site set.
    pub positions: (f64, f64),
    /// Microscopic time between samples.
    pub sample_every: f64,
    /// Fugacity of the reference marginal; defaults to `c`.
    #[serde(default)]
    pub fugacity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub initial: InitialCondition,
    pub sites: Vec<Site>,
    /// Base microscopic time `T`; marginals are recorded at each `k·T`.
    pub base_time: f64,
    #[serde(default = "default_multipliers")]
    pub multipliers: Vec<f64>,
    /// Overrides the left density of the initial condition.
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(default)]
    pub gamma_tracking: Option<GammaTracking>,
    /// Largest accepted total-variation distance at the last time.
    #[serde(default = "five_percent")]
    pub tolerance: f64,
}

fn default_multipliers() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

/// Second-class particles: `per_site` particles removed on `[left, right]`
/// from the lower configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTracking {
    pub left: Site,
    pub right: Site,
    pub per_site: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurrentSetup {
    /// Stationary `μ_β` on `[−half_width, half_width]` between reservoirs whose rate is `β`.
    Stationary { beta: f64, half_width: Site },
    /// `η^{*,y}` on `[y − 1, right]`.
    Source { y: Site, right: Site },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverSpec {
    pub start: Site,
    #[serde(default)]
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentChecks {
    pub setup: CurrentSetup,
    pub horizon: f64,
    pub observers: Vec<ObserverSpec>,
    /// Number of recorded points per trajectory.
    #[serde(default = "default_records")]
    pub records: usize,
    /// Largest accepted relative deviation of the mean rate from its target.
    #[serde(default = "two_percent")]
    pub tolerance: f64,
}

fn two_percent() -> f64 {
    0.02
}

fn default_records() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condensation {
    pub initial: InitialCondition,
    #[serde(default)]
    pub control: Option<InitialCondition>,
    pub horizon: f64,
    /// Site of the slow queue.
    #[serde(default)]
    pub slow_site: Site,
    /// Downstream site whose outgoing current is measured.
    pub current_site: Site,
    /// Fast site whose marginal is compared with the critical law.
    pub marginal_site: Site,
    /// Fraction of the horizon after which rates and marginals are measured.
    #[serde(default = "half")]
    pub burn_in: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Largest accepted relative deviation of the downstream current.
    #[serde(default = "five_percent")]
    pub current_tolerance: f64,
    /// Largest accepted total-variation distance of the fast-site marginal.
    #[serde(default = "eight_percent")]
    pub marginal_tolerance: f64,
}

fn eight_percent() -> f64 {
    0.08
}

fn half() -> f64 {
    0.5
}

fn default_samples() -> usize {
    50
}
