//! Invariant measures of the disordered process: single-site marginals,
//! the averaged density map `R̄`, and the hydrodynamic flux.

mod flux;
mod product;
pub mod quadrature;
mod rate;
mod rbar;
mod theta;

pub use flux::{flux_eval, FluxFunction, FluxModel, DEFAULT_FLUX_POINTS};
pub use product::{sample_product, sample_product_with};
pub use rate::RateFunction;
pub use rbar::{rbar, rbar_inverse, rho_critical, Rbar};
pub use theta::{
    marginal, marginal_with_gap, mean_density, mean_density_with_gap, open_unit, ThetaMarginal,
    TAIL_EPS,
};

use crate::lattice::Site;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("invalid rate function: {0}")]
    InvalidRate(String),
    #[error("fugacity {0} outside the admissible range")]
    BetaOutOfRange(f64),
    #[error("density {rho} outside [0, ρ_c = {rho_c}]")]
    DensityOutOfRange { rho: f64, rho_c: f64 },
    #[error("jump probability p = {0} must lie in (1/2, 1]")]
    InvalidDrift(f64),
    #[error("invalid disorder law: {0}")]
    InvalidLaw(String),
    #[error("invalid flux table: {0}")]
    InvalidTable(String),
    #[error("window not covered by the environment")]
    OutsideEnvironment,
    #[error("fugacity {beta} exceeds α({site}) = {alpha}")]
    FugacityAboveRate { site: Site, beta: f64, alpha: f64 },
}
