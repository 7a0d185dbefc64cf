//! Config-driven experiments comparing simulations with the exact
//! hydrodynamic, equilibrium and condensation predictions.

mod common;
mod condensation;
mod config;
mod currents;
mod equilibrium;
mod hydro_compare;

pub use common::{
    check_light_cone, cumulative_rounding, light_cone_window, realize_initial, run_replicas, Check,
    ExperimentOutput, Model, Report, Table,
};
pub use config::{
    CesaroMarginal, Condensation, Convergence, CurrentChecks, CurrentSetup, Experiment, ExperimentConfig,
    GammaTracking, HydroCompare, InitialCondition, LocalEquilibrium, ObserverSpec,
};

use crate::env::EnvError;
use crate::hydro::HydroError;
use crate::measures::MeasureError;
use crate::sim::SimError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("light-cone violation: {0}")]
    LightCone(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hydro(#[from] HydroError),
}

fn validate(cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    if !(cfg.p > 0.5 && cfg.p <= 1.0) {
        return Err(ExperimentError::Config(format!("p = {} must lie in (1/2, 1]", cfg.p)));
    }
    if cfg.replicas == 0 {
        return Err(ExperimentError::Config("at least one replica is required".into()));
    }
    if !(cfg.light_cone_speed > 1.0) {
        return Err(ExperimentError::Config("light-cone speed must exceed 1".into()));
    }
    Ok(())
}

/// Runs the experiment described by `cfg`. The output depends only on `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    validate(cfg)?;
    match &cfg.experiment {
        Experiment::HydroCompare(e) => hydro_compare::run(cfg, e),
        Experiment::LocalEquilibrium(e) => equilibrium::run_local_equilibrium(cfg, e),
        Experiment::CesaroMarginal(e) => equilibrium::run_cesaro_marginal(cfg, e),
        Experiment::Convergence(e) => equilibrium::run_convergence(cfg, e),
        Experiment::CurrentChecks(e) => currents::run(cfg, e),
        Experiment::Condensation(e) => condensation::run(cfg, e),
    }
}
