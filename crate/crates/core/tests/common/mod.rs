#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use zrplab_core::env::{DisorderLaw, Environment, Provenance};
use zrplab_core::lattice::{Site, Window};
use zrplab_core::measures::RateFunction;
use zrplab_core::rng::{replica_rng, seeded, ZrpRng};
use zrplab_core::sim::{
    cumulative_f, discrepancies, make_source, simulate, Configuration, CoupledState, CurrentObserver, Dynamics,
    ExtInt, ObserverPath,
};

pub fn random_counts(rng: &mut ZrpRng, n: usize, max: u32) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(0..=max)).collect()
}

pub fn random_env(rng: &mut ZrpRng, w: Window) -> Arc<Environment> {
    let vals: Vec<f64> = w.sites().map(|_| if rng.gen_bool(0.3) { 0.5 } else { 1.0 }).collect();
    let c = vals.iter().cloned().fold(1.0, f64::min);
    let law = DisorderLaw::atoms(&[(0.5, 0.3), (1.0, 0.7)]);
    Arc::new(Environment::from_parts(w, vals, c.min(0.5), law, Provenance::Explicit).unwrap())
}

pub fn rate_family(i: usize) -> RateFunction {
    match i % 3 {
        0 => RateFunction::mm1(),
        1 => RateFunction::linear_capped(3),
        _ => RateFunction::new(vec![0.0, 0.25, 0.8, 1.0]).unwrap(),
    }
}

fn ext_sub(a: ExtInt, b: ExtInt) -> Option<ExtInt> {
    use ExtInt::*;
    match (a, b) {
        (Finite(x), Finite(y)) => Some(Finite(x - y)),
        (PosInf, PosInf) | (NegInf, NegInf) => None,
        (PosInf, _) | (_, NegInf) => Some(PosInf),
        (NegInf, _) | (_, PosInf) => Some(NegInf),
    }
}

/// `0 ∨ sup_x [F_{x0}(x, a) − F_{x0}(x, b)]` over the window; `None` if undefined.
fn comparison_bound(x0: Site, a: &Configuration, b: &Configuration) -> Option<ExtInt> {
    let mut best = ExtInt::Finite(0);
    for x in a.window().sites() {
        let d = ext_sub(cumulative_f(x0, x, a), cumulative_f(x0, x, b))?;
        best = best.max(d);
    }
    Some(best)
}

fn comparison_holds(gap: i64, bound: ExtInt) -> bool {
    match bound {
        ExtInt::PosInf => true,
        ExtInt::Finite(b) => gap >= -b,
        ExtInt::NegInf => unreachable!(),
    }
}

const MOVES: [(f64, i64); 6] = [(2.0, 1), (4.0, 1), (7.5, -1), (9.0, 1), (12.0, 1), (15.0, -1)];

fn path_position(t: f64) -> Site {
    -3 + MOVES.iter().filter(|m| m.0 <= t).map(|m| m.1 as Site).sum::<Site>()
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// One seeded coupled run of `η ≤ ξ`, an unrelated `ζ` and a source, checking
/// conservation, order preservation, monotone discrepancies, the current
/// identity between two bonds and the current comparison bounds.
pub fn coupling_run(run: u64) -> Result<(), String> {
    let mut rng = replica_rng(0xC0FFEE, run);
    let w = Window::new(-15, 15);
    let n = w.len();
    let env = random_env(&mut rng, w);
    let p = [0.6, 0.8, 1.0][run as usize % 3];
    let dynamics = Dynamics::new(p, rate_family(run as usize)).unwrap();
    let eta0 = random_counts(&mut rng, n, 3);
    let xi0: Vec<u32> = eta0.iter().map(|e| e + rng.gen_range(0..=2)).collect();
    let zeta0 = random_counts(&mut rng, n, 4);
    let y = rng.gen_range(-5..=5);
    let configs = vec![
        Configuration::from_counts(w, &eta0).unwrap(),
        Configuration::from_counts(w, &xi0).unwrap(),
        Configuration::from_counts(w, &zeta0).unwrap(),
        make_source(y, w).unwrap(),
    ];
    let initial = configs.clone();
    let state = CoupledState::new(dynamics, env, configs).unwrap().with_pair(0, 1).unwrap();
    let d0 = discrepancies(&state).unwrap().total.finite().unwrap();
    let path = ObserverPath::Moving { start: -3, moves: MOVES.iter().map(|&(t, s)| (t, s as i8)).collect() };
    let mut observers = vec![
        CurrentObserver::constant(y, 4),
        CurrentObserver::constant(-8, 4),
        CurrentObserver::constant(6, 4),
        CurrentObserver::new(path, 4).unwrap(),
    ];
    // the moving path never enters the source region when y is small enough
    let moving_ok = y < -3;
    if !moving_ok {
        observers.pop();
    }
    let times: Vec<f64> = (1..=100).map(|k| 0.2 * k as f64).collect();
    let (state, _, obs) = simulate(state, 20.0, seeded(run), observers, &times).map_err(|e| e.to_string())?;

    let mass0: Vec<u64> = initial.iter().take(3).map(|c| c.finite_mass()).collect();
    let mut prev_d = d0;
    for snap in &obs.snapshots {
        let c = &snap.configs;
        for k in 0..3 {
            ensure!(c[k].finite_mass() == mass0[k], "conservation, run {run}");
        }
        ensure!(c[0].le(&c[1]), "attractiveness, run {run}");
        let d: u32 = c[0]
            .occupancies()
            .iter()
            .zip(c[1].occupancies())
            .map(|(e, x)| x.excess_over(*e).finite().unwrap())
            .sum();
        ensure!(d <= prev_d, "D increased in run {run}");
        prev_d = d;
    }
    ensure!(state.ledger().coalescences == (d0 - prev_d) as u64, "coalescence ledger, run {run}");

    for snap in &obs.snapshots {
        let rec_t = snap.time;
        let recs: Vec<_> = obs.currents.iter().filter(|r| r.time == rec_t).collect();
        // Γ_b − Γ_a = Σ_{a<x≤b} (η_0 − η_t) for the two constant observers at −8 < 6
        for k in 0..3 {
            let lhs = recs[2].gamma[k] - recs[1].gamma[k];
            let m0 = initial[k].mass_on(-7, 6).finite().unwrap() as i64;
            let mt = snap.configs[k].mass_on(-7, 6).finite().unwrap() as i64;
            ensure!(lhs == m0 - mt, "current identity, run {run}");
        }
        ensure!(recs[0].gamma[2] <= recs[0].gamma[3], "source domination, run {run}");
        ensure!(recs[0].gamma[0] <= recs[0].gamma[3], "source domination, run {run}");
        for r in &recs {
            let x0 = if r.observer == 3 { -3 } else { [y, -8, 6][r.observer] };
            for a in 0..3 {
                for b in 0..4 {
                    if a == b {
                        continue;
                    }
                    if let Some(bound) = comparison_bound(x0, &initial[a], &initial[b]) {
                        ensure!(
                            comparison_holds(r.gamma[a] - r.gamma[b], bound),
                            "current comparison, run {run} observer {} pair {a},{b}",
                            r.observer
                        );
                    }
                    if b < 3 {
                        if let Some(bound) = comparison_bound(x0, &initial[b], &initial[a]) {
                            ensure!(comparison_holds(r.gamma[b] - r.gamma[a], bound), "current comparison, run {run}");
                        }
                    }
                }
            }
        }
        // moving path: Γ = Σ_{x > x_t} η_t − Σ_{x > x_0} η_0
        if moving_ok {
            let r = recs[3];
            let xt = path_position(rec_t);
            for k in 0..3 {
                let now = snap.configs[k].mass_on(xt + 1, w.right).finite().unwrap() as i64;
                let then = initial[k].mass_on(-2, w.right).finite().unwrap() as i64;
                ensure!(r.gamma[k] == now - then, "moving current, run {run}");
            }
        }
    }
    Ok(())
}
