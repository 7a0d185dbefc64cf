//! Harris-coupled simulation of zero-range processes on finite windows.

mod config;
pub mod io;
mod observer;
mod run;
mod state;

pub use config::{BoundaryMode, Configuration, Occupancy};
pub use observer::{CurrentObserver, ObserverPath};
pub use run::{make_source, simulate, CurrentRecord, Observations, Simulation, Snapshot};
pub use state::{
    cumulative_f, discrepancies, discrepancies_between, CoupledState, Discrepancies, Dynamics,
    ExtInt, HarrisEvent, Ledger, TaggedParticle, MAX_CONFIGS,
};

use crate::lattice::Site;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("jump probability p = {0} must lie in (1/2, 1]")]
    InvalidDrift(f64),
    #[error("no configurations to couple")]
    NoConfigurations,
    #[error("at most {MAX_CONFIGS} coupled configurations are supported, got {0}")]
    TooManyConfigurations(usize),
    #[error("empty window")]
    EmptyWindow,
    #[error("coupled configurations must share one window")]
    WindowMismatch,
    #[error("environment does not cover the simulation window")]
    EnvironmentTooSmall,
    #[error("designated pair must name two distinct configurations")]
    BadPair,
    #[error("class levels must be pointwise nested")]
    NotNested,
    #[error("class decomposition requires finite occupancies")]
    InfiniteClass,
    #[error("no class {0}")]
    NoSuchClass(usize),
    #[error("no particle with label {0}")]
    NoSuchLabel(u64),
    #[error("observer path must have ordered unit moves")]
    BadPath,
    #[error("observer path crosses the infinite site {site} at time {time}")]
    InfiniteCrossing { site: Site, time: f64 },
    #[error("invalid horizon {0}")]
    InvalidHorizon(f64),
    #[error("site {0} outside the window")]
    OutsideWindow(Site),
    #[error("{0}")]
    Config(String),
}
