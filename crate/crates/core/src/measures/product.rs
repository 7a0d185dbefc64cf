use rand::Rng;

use super::theta::{marginal_with_gap, open_unit};
use super::{MeasureError, RateFunction};
use crate::env::Environment;
use crate::lattice::{Site, Window};
use crate::sim::{BoundaryMode, Configuration, Occupancy};

/// Draw from `μ_β = ⊗ θ_{β/α(x)}` on `window`. A site with `α(x) = β` carries
/// the `∞` sentinel. Exactly one uniform is consumed per site, so equal seeds
/// couple draws at different `β` monotonically.
pub fn sample_product<R: Rng + ?Sized>(
    env: &Environment,
    g: &RateFunction,
    beta: f64,
    window: Window,
    rng: &mut R,
) -> Result<Configuration, MeasureError> {
    sample_product_with(env, g, |_| beta, window, rng)
}

/// Product measure `⊗ θ_{λ(x)/α(x)}` for a site-dependent fugacity `λ`.
pub fn sample_product_with<R: Rng + ?Sized>(
    env: &Environment,
    g: &RateFunction,
    fugacity: impl Fn(Site) -> f64,
    window: Window,
    rng: &mut R,
) -> Result<Configuration, MeasureError> {
    if !env.window().contains_window(&window) {
        return Err(MeasureError::OutsideEnvironment);
    }
    let mut occ = Vec::with_capacity(window.len());
    for x in window.sites() {
        let lam = fugacity(x);
        let a = env.alpha(x);
        let u = open_unit(rng);
        if lam > a || lam < 0.0 {
            return Err(MeasureError::FugacityAboveRate { site: x, beta: lam, alpha: a });
        }
        if lam == a {
            occ.push(Occupancy::Infinite);
            continue;
        }
        let th = marginal_with_gap(g, lam / a, (a - lam) / a)?;
        let n = th.quantile(u);
        occ.push(Occupancy::Finite(u32::try_from(n).unwrap_or(u32::MAX)));
    }
    Ok(Configuration::from_occupancies(window, BoundaryMode::Closed, occ)
        .expect("one value per site"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn infinite_where_rate_equals_fugacity() {
        let w = Window::new(0, 4);
        let env = Environment::with_slow_sites(w, &[(2, 0.5)]).unwrap();
        let g = RateFunction::mm1();
        let c = sample_product(&env, &g, 0.5, w, &mut seeded(1)).unwrap();
        assert_eq!(c.infinite_sites(), vec![2]);
        assert!(sample_product(&env, &g, 0.6, w, &mut seeded(1)).is_err());
    }

    #[test]
    fn shared_seed_gives_ordered_draws() {
        let w = Window::new(0, 200);
        let env = Environment::homogeneous(w);
        let g = RateFunction::new(vec![0.0, 0.3, 0.7, 1.0]).unwrap();
        let lo = sample_product(&env, &g, 0.3, w, &mut seeded(9)).unwrap();
        let hi = sample_product(&env, &g, 0.8, w, &mut seeded(9)).unwrap();
        assert!(lo.le(&hi));
    }
}
