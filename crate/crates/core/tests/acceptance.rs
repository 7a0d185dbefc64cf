//! Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use zrplab_core::env::{Construction, DisorderLaw};
use zrplab_core::experiments::*;
use zrplab_core::hydro::Piecewise;
use zrplab_core::jackson::{lambda_profile, OpenNetwork, DEFAULT_TRUNC};
use zrplab_core::measures::{marginal, rbar, rbar_inverse, rho_critical, RateFunction};

const JACKSON_RESIDUAL_MAX: f64 = 1e-8;
const JACKSON_CONTROL_MIN: f64 = 1e-3;
const LAMBDA_TOL: f64 = 1e-12;
const CURRENT_BIAS_MAX: f64 = 0.015;
const SOURCE_REL_TOL: f64 = 0.02;
const HYDRO_L1_MAX: f64 = 0.05;
const GODUNOV_L1_MAX: f64 = 0.01;
const LOCAL_EQ_TV_MAX: f64 = 0.05;
const ESCAPE_CURRENT_REL_TOL: f64 = 0.05;
const ESCAPE_TV_MAX: f64 = 0.08;
const THETA_NORM_TOL: f64 = 1e-12;
const RBAR_ROUNDTRIP_TOL: f64 = 1e-10;
const RHO_C_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn base(p: f64, replicas: u64, seed: u64, experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        environment: Construction::Explicit { alpha: vec![], fill: Some(1.0), overrides: BTreeMap::new(), c: None, q0: None },
        env_seed: 0,
        g: RateFunction::mm1(),
        p,
        replicas,
        seed,
        light_cone_speed: 3.0,
        experiment,
    }
}

fn slow_site() -> Construction {
    Construction::Explicit {
        alpha: vec![],
        fill: Some(1.0),
        overrides: [(0, 0.5)].into_iter().collect(),
        c: None,
        q0: Some(DisorderLaw::dirac(1.0)),
    }
}

fn mean_of(r: &Report, key: &str) -> f64 {
    r.metrics[key]["mean"].as_f64().unwrap()
}

fn se_of(r: &Report, key: &str) -> f64 {
    r.metrics[key]["se"].as_f64().unwrap()
}

fn jackson_stationarity() -> Outcome {
    let g = RateFunction::mm1();
    let net = OpenNetwork::new(-2, vec![0.5, 1.0, 1.0, 1.0, 0.5], 0.7).unwrap();
    let mut worst: f64 = 0.0;
    let mut control: f64 = 0.0;
    let pert: Vec<f64> = net.fugacities().iter().map(|b| b * 1.1).collect();
    let mu = net.product_with(&g, &pert).unwrap();
    for x in -1..=1 {
        for k in 0..=30 {
            worst = worst.max(net.stationarity_residual(&g, x, k, DEFAULT_TRUNC).unwrap().abs());
            control = control.max(net.residual_under(&mu, &g, x, k, DEFAULT_TRUNC).unwrap().abs());
        }
    }
    outcome(
        worst < JACKSON_RESIDUAL_MAX && control > JACKSON_CONTROL_MIN,
        format!("max residual {worst:.2e} < {JACKSON_RESIDUAL_MAX:e}; perturbed {control:.2e} > {JACKSON_CONTROL_MIN:e}"),
    )
}

fn lambda_exactness() -> Outcome {
    let lp = lambda_profile(0, &[0.4, 0.9, 0.8], 0.75).unwrap();
    let worked = (lp.at(1) - 0.5).abs();
    let mut flat: f64 = 0.0;
    for p in [0.55, 0.7, 0.85, 1.0] {
        for k in [0.2, 0.6, 1.0] {
            let lp = lambda_profile(-3, &[k, 0.1, 0.9, 2.0, 0.3, k], p).unwrap();
            flat = flat.max(lp.lam.iter().map(|v| (v - k).abs()).fold(0.0, f64::max));
        }
    }
    outcome(
        worked < LAMBDA_TOL && flat < LAMBDA_TOL,
        format!("|λ(1) − 0.5| = {worked:.1e}; constancy error {flat:.1e} (tol {LAMBDA_TOL:e})"),
    )
}

fn equilibrium_current() -> Outcome {
    let cfg = base(
        1.0,
        50,
        101,
        Experiment::CurrentChecks(CurrentChecks {
            setup: CurrentSetup::Stationary { beta: 0.5, half_width: 50 },
            horizon: 1e4,
            observers: vec![ObserverSpec { start: 0, velocity: 0.0 }],
            records: 10,
            tolerance: CURRENT_BIAS_MAX / 0.5,
        }),
    );
    let r = run_experiment(&cfg).unwrap().report;
    let (m, se) = (mean_of(&r, "observer_0_rate"), se_of(&r, "observer_0_rate"));
    let pass = (m - 0.5).abs() <= 3.0 * se && (m - 0.5).abs() < CURRENT_BIAS_MAX;
    outcome(pass, format!("mean {m:.5} ± {se:.5} (3·SE band covers 0.5, |bias| < {CURRENT_BIAS_MAX})"))
}

fn source_current() -> Outcome {
    let cfg = base(
        1.0,
        20,
        102,
        Experiment::CurrentChecks(CurrentChecks {
            setup: CurrentSetup::Source { y: 0, right: 200 },
            horizon: 1e4,
            observers: vec![ObserverSpec { start: 0, velocity: 0.0 }],
            records: 10,
            tolerance: SOURCE_REL_TOL,
        }),
    );
    let r = run_experiment(&cfg).unwrap().report;
    let m = mean_of(&r, "mass_right_rate");
    outcome((m - 1.0).abs() < SOURCE_REL_TOL, format!("t⁻¹·mass right of 0 = {m:.5}, within {SOURCE_REL_TOL} of 1"))
}

fn hydrodynamic_limit() -> Outcome {
    let cfg = base(
        1.0,
        20,
        103,
        Experiment::HydroCompare(HydroCompare {
            profile: Piecewise { breakpoints: vec![0.0], values: vec![1.0, 0.0] },
            scaling: 1000,
            time: 1.0,
            roi: (-0.25, 1.25),
            cell_width: 0.05,
            pde_dx: 1.0 / 400.0,
            cfl: 0.9,
            tolerance: HYDRO_L1_MAX,
        }),
    );
    let r = run_experiment(&cfg).unwrap().report;
    let sim = r.get_f64("l1_mean_vs_exact").unwrap();
    let pde = r.get_f64("l1_pde_vs_exact").unwrap();
    outcome(
        sim < HYDRO_L1_MAX && pde < GODUNOV_L1_MAX,
        format!("L1(simulation, exact) = {sim:.4} < {HYDRO_L1_MAX}; L1(Godunov, exact) = {pde:.4} < {GODUNOV_L1_MAX}"),
    )
}

fn local_equilibrium() -> Outcome {
    let cfg = base(
        1.0,
        2000,
        104,
        Experiment::LocalEquilibrium(LocalEquilibrium {
            initial: InitialCondition::Pattern { pattern: vec![1, 0], right_empty: false },
            scaling: 500,
            time: 1.0,
            position: 0.0,
            offsets: vec![0],
            density: None,
            tolerance: LOCAL_EQ_TV_MAX,
        }),
    );
    let r = run_experiment(&cfg).unwrap().report;
    let tv = r.get_f64("max_tv").unwrap();
    let beta = r.get_f64("fugacity").unwrap();
    let pass = tv < LOCAL_EQ_TV_MAX && (beta - 1.0 / 3.0).abs() < 1e-9;
    outcome(pass, format!("site-0 TV to geometric(β = {beta:.6}) = {tv:.4} < {LOCAL_EQ_TV_MAX}"))
}

fn mass_escape() -> Outcome {
    let mut cfg = base(
        1.0,
        50,
        105,
        Experiment::Condensation(Condensation {
            initial: InitialCondition::Constant { n: 3 },
            control: Some(InitialCondition::Pattern { pattern: vec![1, 0], right_empty: false }),
            horizon: 1000.0,
            slow_site: 0,
            current_site: 10,
            marginal_site: 5,
            burn_in: 0.5,
            samples: 50,
            current_tolerance: ESCAPE_CURRENT_REL_TOL,
            marginal_tolerance: ESCAPE_TV_MAX,
        }),
    );
    cfg.environment = slow_site();
    let r = run_experiment(&cfg).unwrap().report;
    let cur = mean_of(&r, "downstream_current");
    let tv = r.get_f64("marginal_tv").unwrap();
    let (cs, cse) = (mean_of(&r, "control_slope"), se_of(&r, "control_slope"));
    let slope = mean_of(&r, "slow_site_slope");
    let pass = (cur / 0.5 - 1.0).abs() < ESCAPE_CURRENT_REL_TOL
        && tv < ESCAPE_TV_MAX
        && r.find_check("control_slope_covers_zero").unwrap().pass
        && r.find_check("slow_site_growth").unwrap().pass;
    outcome(
        pass,
        format!(
            "downstream current {cur:.4} (0.5 ± {ESCAPE_CURRENT_REL_TOL}·0.5); fast-site TV {tv:.4} < {ESCAPE_TV_MAX}; \
             slow-site slope {slope:.4}; control slope {cs:.5} ± {cse:.5}"
        ),
    )
}

fn pathwise_coupling() -> Outcome {
    let failures: Vec<String> = (0..100u64).filter_map(|run| common::coupling_run(run).err()).collect();
    outcome(
        failures.is_empty(),
        format!(
            "{}/100 runs satisfy order, discrepancy, current identity and comparison checks{}",
            100 - failures.len(),
            if failures.is_empty() { String::new() } else { format!(": {}", failures.join("; ")) }
        ),
    )
}

fn measure_machinery() -> Outcome {
    let rates = [
        RateFunction::mm1(),
        RateFunction::linear_capped(3),
        RateFunction::new(vec![0.0, 0.5, 1.0]).unwrap(),
        RateFunction::new(vec![0.0, 0.2, 0.3, 0.9, 1.0]).unwrap(),
    ];
    let mut norm: f64 = 0.0;
    for g in &rates {
        for k in 0..=99 {
            let th = marginal(g, k as f64 / 100.0).unwrap();
            // far past the cut the remaining geometric tail is below f64 resolution
            let total: f64 = (0..=4 * th.tail_cut() + 100).map(|n| th.pmf(n)).sum();
            norm = norm.max((total - 1.0).abs());
        }
    }
    let g = RateFunction::mm1();
    let tri = DisorderLaw::power(0.5, 1.0, 1.0);
    let atoms = DisorderLaw::atoms(&[(0.5, 0.3), (0.8, 0.2), (1.0, 0.5)]);
    let mut roundtrip: f64 = 0.0;
    for law in [&tri, &atoms] {
        let rc = rho_critical(&g, law).unwrap();
        for k in 1..200 {
            let rho = (k as f64 / 200.0) * rc.min(20.0);
            let b = rbar_inverse(&g, law, rho).unwrap();
            roundtrip = roundtrip.max((rbar(&g, law, b).unwrap() - rho).abs());
        }
    }
    // ∫_{1/2}^{1} 8(a − 1/2) · (1/2)/(a − 1/2) da = 2
    let rc = rho_critical(&g, &tri).unwrap();
    let pass = norm < THETA_NORM_TOL && roundtrip < RBAR_ROUNDTRIP_TOL && (rc - 2.0).abs() < RHO_C_TOL;
    outcome(
        pass,
        format!(
            "θ normalization {norm:.1e} < {THETA_NORM_TOL:e}; R̄ roundtrip {roundtrip:.1e} < {RBAR_ROUNDTRIP_TOL:e}; ρ_c = {rc:.9} (2 ± {RHO_C_TOL:e})"
        ),
    )
}

fn cesaro_trend() -> Outcome {
    let mut cfg = base(
        1.0,
        50,
        106,
        Experiment::CesaroMarginal(CesaroMarginal {
            initial: InitialCondition::Constant { n: 3 },
            scaling: 1000,
            time: 1.0,
            deltas: vec![0.2, 0.1, 0.05],
            positions: (0.11, 0.12),
            sample_every: 1.0,
            fugacity: None,
        }),
    );
    cfg.environment = slow_site();
    let r = run_experiment(&cfg).unwrap().report;
    let tv: Vec<f64> = serde_json::from_value(r.metrics["tv"].clone()).unwrap();
    let pass = tv.windows(2).all(|w| w[1] <= w[0]);
    outcome(pass, format!("TV to θ_c over δ = 0.2, 0.1, 0.05: {:.4}, {:.4}, {:.4}", tv[0], tv[1], tv[2]))
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("jackson-stationarity", Duration::from_secs(5), jackson_stationarity),
        ("lambda-exactness", Duration::from_secs(5), lambda_exactness),
        ("equilibrium-current", Duration::from_secs(120), equilibrium_current),
        ("source-current", Duration::from_secs(120), source_current),
        ("hydrodynamic-limit", Duration::from_secs(300), hydrodynamic_limit),
        ("local-equilibrium", Duration::from_secs(600), local_equilibrium),
        ("mass-escape", Duration::from_secs(600), mass_escape),
        ("pathwise-coupling", Duration::from_secs(120), pathwise_coupling),
        ("measure-machinery", Duration::from_secs(60), measure_machinery),
        ("cesaro-trend", Duration::from_secs(600), cesaro_trend),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
