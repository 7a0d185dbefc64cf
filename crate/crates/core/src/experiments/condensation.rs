use super::common::*;
use super::config::{Condensation, ExperimentConfig, InitialCondition};
use super::ExperimentError;
use crate::lattice::Window;
use crate::rng::replica_rng;
use crate::sim::{CoupledState, CurrentObserver, Dynamics, Simulation};
use crate::stats::{linear_slope, tv_distance, Histogram, MeanSe};

struct Trace {
    /// `occ(slow)` at each sample time.
    slow: Vec<f64>,
    /// Currents into and out of the slow site and at the downstream site over the measurement period.
    inflow: i64,
    outflow: i64,
    downstream: i64,
    marginal: Histogram,
}

fn trace(
    cfg: &ExperimentConfig,
    e: &Condensation,
    model: &Model,
    window: Window,
    initial: &InitialCondition,
    times: &[f64],
    replica: u64,
) -> Result<Trace, ExperimentError> {
    let mut rng = replica_rng(cfg.seed, replica);
    let init = realize_initial(initial, model, window, 1, &mut rng)?;
    let dynamics = Dynamics::new(cfg.p, cfg.g.clone())?;
    let state = CoupledState::new(dynamics, model.env.clone(), vec![init])?;
    let observers = vec![
        CurrentObserver::constant(e.slow_site - 1, 1),
        CurrentObserver::constant(e.slow_site, 1),
        CurrentObserver::constant(e.current_site, 1),
    ];
    let mut sim = Simulation::new(state, observers, rng);
    let mut slow = Vec::with_capacity(times.len());
    let mut marginal = Histogram::default();
    let mut first = [0i64; 3];
    for (i, &t) in times.iter().enumerate() {
        sim.run_until(t)?;
        if i == 0 {
            for (k, o) in sim.observers().iter().enumerate() {
                first[k] = o.gamma(0);
            }
        }
        let c = sim.state().config(0);
        slow.push(occupancy_value(c.get(e.slow_site))? as f64);
        marginal.add(occupancy_value(c.get(e.marginal_site))?);
    }
    let g: Vec<i64> = sim.observers().iter().map(|o| o.gamma(0)).collect();
    Ok(Trace {
        slow,
        inflow: g[0] - first[0],
        outflow: g[1] - first[1],
        downstream: g[2] - first[2],
        marginal,
    })
}

pub fn run(cfg: &ExperimentConfig, e: &Condensation) -> Result<ExperimentOutput, ExperimentError> {
    if !(e.horizon > 0.0) || !(e.burn_in >= 0.0 && e.burn_in < 1.0) || e.samples < 2 {
        return Err(ExperimentError::Config("horizon > 0, burn_in in [0, 1) and samples ≥ 2 are required".into()));
    }
    let lo = e.slow_site.min(e.current_site).min(e.marginal_site) - 1;
    let hi = e.slow_site.max(e.current_site).max(e.marginal_site) + 1;
    let window = light_cone_window((lo, hi), e.horizon, cfg.light_cone_speed, cfg.p);
    check_light_cone(window, (lo, hi), e.horizon, cfg.light_cone_speed, cfg.p, (false, false))?;
    let model = Model::build(cfg, window)?;
    let c = model.c();
    let t0 = e.burn_in * e.horizon;
    let span = e.horizon - t0;
    let times: Vec<f64> = (0..=e.samples).map(|k| t0 + span * k as f64 / e.samples as f64).collect();

    let runs = run_replicas(cfg.replicas, |r| trace(cfg, e, &model, window, &e.initial, &times, r))?;
    let mut report = Report::new(cfg, window);
    let summarize = |runs: &[Trace]| {
        let slopes: Vec<f64> = runs.iter().map(|t| linear_slope(&times, &t.slow).0).collect();
        MeanSe::of(&slopes)
    };
    let slope = summarize(&runs);
    let baseline = MeanSe::of(&runs.iter().map(|t| (t.inflow - t.outflow) as f64 / span).collect::<Vec<_>>());
    let current = MeanSe::of(&runs.iter().map(|t| t.downstream as f64 / span).collect::<Vec<_>>());
    let target = (2.0 * cfg.p - 1.0) * c;
    let mut hist = Histogram::default();
    for t in &runs {
        hist.merge(&t.marginal);
    }
    let th = model.marginal_at(e.marginal_site, c)?;
    let theta = pmf_table(&th, hist.counts.len());
    let tv = tv_distance(&hist.pmf(), &theta);

    report.metric("slow_site_slope", slope);
    report.metric("mass_balance_baseline", baseline);
    report.metric("downstream_current", current);
    report.metric("downstream_target", target);
    report.metric("marginal_tv", tv);
    report.check(Check::below("downstream_current_relative_error", (current.mean / target - 1.0).abs(), e.current_tolerance));
    report.check(Check::below("fast_site_marginal_tv", tv, e.marginal_tolerance));
    report.check(Check::above("slow_site_growth", slope.mean, 0.5 * baseline.mean.max(0.0)));

    let mut occ_csv = String::from("run,time,occ\n");
    let mean_trace = |runs: &[Trace]| -> Vec<f64> {
        (0..times.len()).map(|i| runs.iter().map(|t| t.slow[i]).sum::<f64>() / runs.len() as f64).collect()
    };
    for (t, v) in times.iter().zip(mean_trace(&runs)) {
        occ_csv.push_str(&format!("main,{t},{v}\n"));
    }

    if let Some(ctrl) = &e.control {
        let runs = run_replicas(cfg.replicas, |r| trace(cfg, e, &model, window, ctrl, &times, r))?;
        let s = summarize(&runs);
        report.metric("control_slope", s);
        let (lo, hi) = s.band();
        report.check(Check::within("control_slope_covers_zero", 0.0, lo.min(-1e-3), hi.max(1e-3)));
        for (t, v) in times.iter().zip(mean_trace(&runs)) {
            occ_csv.push_str(&format!("control,{t},{v}\n"));
        }
    }
    let rows = vec![(e.marginal_site, hist.pmf(), theta)];
    Ok(ExperimentOutput {
        report,
        tables: vec![
            Table { name: "occupancy.csv".into(), csv: occ_csv },
            Table { name: "marginals.csv".into(), csv: marginal_csv(&rows) },
        ],
    })
}
