use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use zrplab_core::env::{DisorderLaw, Environment, Provenance};
use zrplab_core::jackson::*;
use zrplab_core::lattice::{Site, Window};
use zrplab_core::measures::{marginal, RateFunction};
use zrplab_core::rng::{replica_rng, seeded};
use zrplab_core::sim::{Configuration, CoupledState, Dynamics, Simulation};
use zrplab_core::stats::{tv_distance, Histogram};

// direct evaluation of the two-point formula as printed, no rearrangement
fn lambda_oracle(kl: f64, kr: f64, l: i64, r: i64, x: i64, p: f64) -> f64 {
    let rho = (1.0 - p) / p;
    let pw = |e: i64| if e == 0 { 1.0 } else { rho.powi(e as i32) };
    ((kr - kl) * pw(r - x) + kl - kr * pw(r - l)) / (1.0 - pw(r - l))
}

fn env_from(window: Window, alpha: Vec<f64>, c: f64) -> Environment {
    let law = DisorderLaw::atoms(&[(1.0, 1.0)]);
    Environment::from_parts(window, alpha, c, law, Provenance::Explicit).unwrap()
}

#[test]
fn lambda_matches_printed_formula() {
    let mut rng = seeded(17);
    for _ in 0..200 {
        let n = rng.gen_range(2..12);
        let l = rng.gen_range(-5..5);
        let kappa: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let p = rng.gen_range(0.51..0.999);
        let lp = lambda_profile(l, &kappa, p).unwrap();
        let r = l + n as i64 - 1;
        for x in l..=r {
            let want = lambda_oracle(kappa[0], kappa[n - 1], l, r, x, p);
            assert!((lp.at(x) - want).abs() < 1e-12, "x={x}: {} vs {want}", lp.at(x));
        }
    }
}

#[test]
fn equal_boundary_rates_give_constant_lambda() {
    for p in [0.55, 0.7, 0.9, 1.0] {
        let lp = lambda_profile(3, &[0.6, 0.2, 5.0, 0.9, 0.6], p).unwrap();
        assert!(lp.lam.iter().all(|v| (v - 0.6).abs() < 1e-14), "{:?}", lp.lam);
    }
}

#[test]
fn recurrence_examples() {
    assert!(check_recurrent(-2, &[0.5, 1.0, 1.0, 1.0, 0.5], 0.7));
    assert!(!check_recurrent(0, &[0.4, 0.45, 0.3, 0.8], 0.75));
    let mut rng = seeded(5);
    for _ in 0..100 {
        let n = rng.gen_range(3..15);
        let kl = rng.gen_range(0.1..1.0);
        let kr = rng.gen_range(0.1..1.0);
        let floor = f64::max(kl, kr) + 0.01;
        let mut kappa: Vec<f64> = (0..n).map(|_| rng.gen_range(floor..floor + 1.0)).collect();
        kappa[0] = kl;
        kappa[n - 1] = kr;
        assert!(check_recurrent(0, &kappa, rng.gen_range(0.51..=1.0)));
    }
}

#[test]
fn mm1_marginals_are_geometric() {
    let mu = invariant_product(0, &[0.3, 1.0, 0.7, 0.9, 0.6], 0.8, &RateFunction::mm1()).unwrap();
    let lp = lambda_profile(0, &[0.3, 1.0, 0.7, 0.9, 0.6], 0.8).unwrap();
    let kappa = [0.3, 1.0, 0.7, 0.9, 0.6];
    for x in 1..4 {
        let b = lp.at(x) / kappa[x as usize];
        for n in 0..20 {
            let geo = (1.0 - b) * b.powi(n as i32);
            assert!((mu.marginal(x).pmf(n) - geo).abs() < 1e-14);
        }
    }
}

#[test]
fn vanishing_fugacity_gives_empty_queues() {
    let mu = invariant_product(0, &[1e-10, 1.0, 1.0, 1e-10], 0.8, &RateFunction::linear_capped(3)).unwrap();
    for x in 1..3 {
        assert!(mu.marginal(x).pmf(0) > 1.0 - 1e-9);
    }
}

#[test]
fn product_measure_is_stationary() {
    let kappa = [0.5, 1.0, 1.0, 1.0, 0.5];
    let g = RateFunction::mm1();
    let net = OpenNetwork::new(-2, kappa.to_vec(), 0.7).unwrap();
    let mut worst: f64 = 0.0;
    for x in -1..=1 {
        for k in 0..=30 {
            worst = worst.max(net.stationarity_residual(&g, x, k, DEFAULT_TRUNC).unwrap().abs());
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
    let pert: Vec<f64> = net.fugacities().iter().map(|b| b * 1.1).collect();
    let mu = net.product_with(&g, &pert).unwrap();
    let mut control: f64 = 0.0;
    for x in -1..=1 {
        for k in 0..=30 {
            control = control.max(net.residual_under(&mu, &g, x, k, DEFAULT_TRUNC).unwrap().abs());
        }
    }
    assert!(control > 1e-3, "{control:e}");
}

#[test]
fn stationary_for_general_rates_and_inhomogeneous_kappa() {
    let g = RateFunction::new(vec![0.0, 0.3, 0.8, 1.0]).unwrap();
    let mut rng = seeded(99);
    for _ in 0..5 {
        let n = rng.gen_range(3..7);
        let mut kappa: Vec<f64> = (0..n).map(|_| rng.gen_range(0.8..1.5)).collect();
        kappa[0] = rng.gen_range(0.1..0.4);
        kappa[n - 1] = rng.gen_range(0.1..0.4);
        let net = OpenNetwork::new(0, kappa, rng.gen_range(0.55..=1.0)).unwrap();
        let report = verification_report(&net, &g, 10).unwrap();
        assert!(report.recurrent);
        assert!(report.max_residual.unwrap() < 1e-8, "{report:?}");
    }
}

#[test]
fn report_serializes() {
    let net = OpenNetwork::new(-2, vec![0.5, 1.0, 1.0, 1.0, 0.5], 0.7).unwrap();
    let report = verification_report(&net, &RateFunction::mm1(), 5).unwrap();
    let v: serde_json::Value = serde_json::to_value(&report).unwrap();
    assert_eq!(v["sites"].as_array().unwrap().len(), 5);
    assert!(v["sites"][0]["fugacity"].is_null());
    assert!((v["sites"][2]["fugacity"].as_f64().unwrap() - 0.5).abs() < 1e-14);
    assert_eq!(v["recurrent"], true);
    let bad = OpenNetwork::new(0, vec![0.5, 0.4, 0.5], 0.7).unwrap();
    let report = verification_report(&bad, &RateFunction::mm1(), 5).unwrap();
    assert!(!report.recurrent && report.max_residual.is_none());
}

#[test]
fn truncation_with_finite_right_defect() {
    let w = Window::new(-10, 10);
    let mut alpha = vec![1.0; w.len()];
    alpha[w.index(-3)] = 0.3;
    alpha[w.index(5)] = 0.32;
    let env = env_from(w, alpha, 0.3);
    let t = truncate_environment(&env, 0.05, 0.8).unwrap();
    assert_eq!((t.l, t.r, t.r_prime), (-3, 5, 5));
    assert_eq!(t.alpha_tilde.values(), env.values());
}

#[test]
fn truncation_falls_back_to_inverse_eps() {
    let w = Window::new(-10, 30);
    let mut alpha = vec![1.0; w.len()];
    alpha[w.index(-2)] = 0.3;
    let env = env_from(w, alpha, 0.3);
    let t = truncate_environment(&env, 0.05, 0.8).unwrap();
    assert_eq!((t.l, t.r, t.r_prime), (-2, 20, 20));
    assert_eq!(t.alpha_tilde.values(), env.values());
    let short = env_from(Window::new(-10, 15), vec![0.3; 26], 0.3);
    let mut vals = vec![1.0; 26];
    vals[0] = 0.3;
    let short = env_from(short.window(), vals, 0.3);
    assert!(matches!(truncate_environment(&short, 0.05, 0.8), Err(JacksonError::WindowTooSmall(_))));
    let no_left = env_from(Window::new(-5, 30), vec![1.0; 36], 0.3);
    assert!(matches!(truncate_environment(&no_left, 0.05, 0.8), Err(JacksonError::WindowTooSmall(_))));
}

#[test]
fn truncated_profile_agrees_with_original() {
    let mut rng = seeded(2024);
    let c = 0.3;
    let eps = 0.05;
    let mut moved = 0;
    for _ in 0..300 {
        let w = Window::new(-30, 40);
        let mut alpha: Vec<f64> = w
            .sites()
            .map(|x| {
                if x < 0 {
                    rng.gen_range(c..1.0)
                } else {
                    rng.gen_range(c + eps + 1e-3..c + eps + 0.15)
                }
            })
            .collect();
        let a_l = rng.gen_range(-30..0);
        alpha[w.index(a_l)] = c + rng.gen_range(0.0..eps);
        alpha[w.index(20)] = rng.gen_range(0.4..1.0);
        let env = env_from(w, alpha, c);
        let p = rng.gen_range(0.51..=1.0);
        let t = truncate_environment(&env, eps, p).unwrap();
        assert_eq!(t.r, 20);
        assert!(t.l >= a_l);
        let full = OpenNetwork::from_environment(&env, t.l, t.r, p).unwrap().lambda_profile();
        let cut = t.network(p).unwrap().lambda_profile();
        for x in t.l..=t.r_prime {
            assert!((full.at(x) - cut.at(x)).abs() < 1e-12, "x={x}");
        }
        for x in w.sites().filter(|&x| x != t.r_prime) {
            assert_eq!(t.alpha_tilde.alpha(x), env.alpha(x));
        }
        if t.r_prime < t.r {
            moved += 1;
            assert_eq!(t.alpha_tilde.alpha(t.r_prime), full.at(t.r_prime));
            assert!(t.network(p).unwrap().check_recurrent());
        }
    }
    assert!(moved > 30, "only {moved} instances exercised r' < r");
}

fn reservoir_marginals(kappa: &[f64], l: Site, p: f64, g: &RateFunction, horizon: f64, replicas: u64) -> Vec<Histogram> {
    let w = Window::new(l, l + kappa.len() as Site - 1);
    let env = Arc::new(env_from(w, kappa.to_vec(), kappa.iter().copied().fold(f64::INFINITY, f64::min)));
    let dynamics = Dynamics::new(p, g.clone()).unwrap();
    let mut hists = vec![Histogram::default(); kappa.len() - 2];
    for rep in 0..replicas {
        let init = Configuration::from_counts(w, &vec![0; w.len()]).unwrap().into_reservoir();
        let state = CoupledState::new(dynamics.clone(), env.clone(), vec![init]).unwrap();
        let mut sim = Simulation::new(state, vec![], replica_rng(31, rep));
        let mut t = 0.0;
        while t < horizon {
            t += 1.0;
            sim.run_until(t).unwrap();
            for (i, x) in (w.left + 1..w.right).enumerate() {
                hists[i].add(sim.state().config(0).get(x).finite().unwrap() as u64);
            }
        }
    }
    hists
}

fn worst_tv(hists: &[Histogram], net: &OpenNetwork, g: &RateFunction) -> f64 {
    let mu = net.invariant_product(g).unwrap();
    hists
        .iter()
        .zip(mu.marginals())
        .map(|(h, m)| {
            let target: Vec<f64> = (0..h.counts.len().max(200) as u64).map(|n| m.pmf(n)).collect();
            tv_distance(&h.pmf(), &target)
        })
        .fold(0.0, f64::max)
}

#[test]
fn reservoir_simulation_reaches_product_measure() {
    let kappa = [0.4, 1.0, 0.8, 1.0, 0.7];
    let p = 0.75;
    let g = RateFunction::mm1();
    let net = OpenNetwork::new(0, kappa.to_vec(), p).unwrap();
    let tvs: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&h| worst_tv(&reservoir_marginals(&kappa, 0, p, &g, h, 200), &net, &g))
        .collect();
    assert!(tvs[0] > tvs[1] && tvs[1] > tvs[2], "{tvs:?}");
    assert!(tvs[2] < 0.03, "{tvs:?}");
    let mm = marginal(&g, 0.5).unwrap();
    assert!((mm.mean() - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn lambda_is_monotone_between_boundary_rates(
        n in 2usize..40,
        kl in 0.01f64..2.0,
        kr in 0.01f64..2.0,
        p in 0.5001f64..=1.0,
        l in -50i64..50,
    ) {
        let mut kappa = vec![1.0; n];
        kappa[0] = kl;
        kappa[n - 1] = kr;
        let lp = lambda_profile(l, &kappa, p).unwrap();
        let (lo, hi) = (kl.min(kr), kl.max(kr));
        for v in &lp.lam {
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
        for pair in lp.lam.windows(2) {
            if kr >= kl {
                prop_assert!(pair[1] >= pair[0] - 1e-12);
            } else {
                prop_assert!(pair[1] <= pair[0] + 1e-12);
            }
        }
        prop_assert_eq!(lp.at(l), kl);
        prop_assert_eq!(lp.at(l + n as i64 - 1), kr);
    }

    #[test]
    fn lambda_solves_the_traffic_equations(
        n in 3usize..30,
        kl in 0.01f64..2.0,
        kr in 0.01f64..2.0,
        p in 0.5001f64..=1.0,
    ) {
        let mut kappa = vec![1.0; n];
        kappa[0] = kl;
        kappa[n - 1] = kr;
        let lp = lambda_profile(0, &kappa, p).unwrap();
        let q = 1.0 - p;
        for x in 1..n as i64 - 1 {
            let balance = p * lp.at(x - 1) + q * lp.at(x + 1) - lp.at(x);
            prop_assert!(balance.abs() < 1e-12, "x={} balance={}", x, balance);
        }
    }
}
