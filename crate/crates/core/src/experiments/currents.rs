use super::common::*;
use super::config::{CurrentChecks, CurrentSetup, ExperimentConfig};
use super::ExperimentError;
use crate::lattice::{Site, Window};
use crate::measures::sample_product_with;
use crate::rng::replica_rng;
use crate::sim::{io, make_source, CoupledState, CurrentObserver, CurrentRecord, Dynamics, ObserverPath, Simulation};
use crate::stats::MeanSe;

pub fn run(cfg: &ExperimentConfig, e: &CurrentChecks) -> Result<ExperimentOutput, ExperimentError> {
    if !(e.horizon > 0.0) || e.observers.is_empty() || e.records == 0 {
        return Err(ExperimentError::Config("horizon, observers and records must be positive".into()));
    }
    let (window, finite_side) = match e.setup {
        CurrentSetup::Stationary { beta, half_width } => {
            if half_width < 1 || !(beta > 0.0) {
                return Err(ExperimentError::Config("stationary setup needs β > 0 and half_width ≥ 1".into()));
            }
            (Window::new(-half_width, half_width), (-half_width, half_width - 1))
        }
        CurrentSetup::Source { y, right } => {
            if right <= y {
                return Err(ExperimentError::Config("source setup needs right > y".into()));
            }
            (Window::new(y - 1, right), (y, right - 1))
        }
    };
    for o in &e.observers {
        let end = o.start + (o.velocity * e.horizon).trunc() as Site;
        for x in [o.start, end] {
            if x < finite_side.0 || x > finite_side.1 {
                return Err(ExperimentError::LightCone(format!("observer bond at {x} leaves [{}, {}]", finite_side.0, finite_side.1)));
            }
        }
    }
    let base = Model::build(cfg, window)?;
    let model = match e.setup {
        CurrentSetup::Stationary { beta, .. } => {
            Model::with_env(cfg, base.env.with_overrides(&[(window.left, beta), (window.right, beta)])?)?
        }
        CurrentSetup::Source { .. } => base,
    };
    let q = 1.0 - cfg.p;
    let c = model.c();
    let dynamics = Dynamics::new(cfg.p, cfg.g.clone())?;
    let record_times: Vec<f64> = (1..=e.records).map(|k| e.horizon * k as f64 / e.records as f64).collect();

    let per: Vec<(Vec<i64>, u64, Vec<CurrentRecord>)> = run_replicas(cfg.replicas, |r| {
        let mut rng = replica_rng(cfg.seed, r);
        let init = match e.setup {
            CurrentSetup::Stationary { beta, .. } => {
                sample_product_with(&model.env, &model.g, |_| beta, window, &mut rng)?.into_reservoir()
            }
            CurrentSetup::Source { y, .. } => make_source(y, window)?,
        };
        let observers = e
            .observers
            .iter()
            .map(|o| CurrentObserver::new(ObserverPath::linear(o.start, o.velocity, e.horizon), 1))
            .collect::<Result<Vec<_>, _>>()?;
        let state = CoupledState::new(dynamics.clone(), model.env.clone(), vec![init])?;
        let mut sim = Simulation::new(state, observers, rng);
        let mut recs = Vec::new();
        for &t in &record_times {
            sim.run_until(t)?;
            for (k, ob) in sim.observers().iter().enumerate() {
                recs.push(CurrentRecord { time: t, observer: k, gamma: ob.gammas() });
            }
        }
        let gammas = sim.observers().iter().map(|o| o.gamma(0)).collect();
        let mass_right = match e.setup {
            CurrentSetup::Source { y, .. } => sim.state().config(0).mass_on(y + 1, window.right).finite().unwrap_or(0) as u64,
            CurrentSetup::Stationary { .. } => 0,
        };
        Ok((gammas, mass_right, recs))
    })?;

    let mut report = Report::new(cfg, window);
    for (k, o) in e.observers.iter().enumerate() {
        let rates: Vec<f64> = per.iter().map(|(g, _, _)| g[k] as f64 / e.horizon).collect();
        let m = MeanSe::of(&rates);
        let key = format!("observer_{k}");
        report.metric(&format!("{key}_rate"), m);
        match e.setup {
            CurrentSetup::Stationary { beta, .. } => {
                let rho = model.flux.rbar().eval(beta)?;
                let target = (cfg.p - q) * beta - o.velocity * rho;
                report.metric(&format!("{key}_target"), target);
                let (lo, hi) = m.band();
                report.check(Check::within(&format!("{key}_band_covers_target"), target, lo, hi));
                report.check(Check::below(&format!("{key}_bias"), (m.mean - target).abs(), e.tolerance * target.abs().max(1e-12)));
            }
            CurrentSetup::Source { .. } => {
                let end = o.start + (o.velocity * e.horizon).trunc() as Site;
                let bound = (cfg.p - q) * c + cfg.p * (model.env.alpha(end) - c);
                report.metric(&format!("{key}_upper_bound"), bound);
                report.check(Check::below(&format!("{key}_below_bound"), m.mean, bound + 3.0 * m.se));
            }
        }
    }
    if let CurrentSetup::Source { y, .. } = e.setup {
        let rates: Vec<f64> = per.iter().map(|(_, m, _)| *m as f64 / e.horizon).collect();
        let m = MeanSe::of(&rates);
        let bound = (cfg.p - q) * c + cfg.p * (model.env.alpha(y) - c);
        report.metric("mass_right_rate", m);
        report.metric("mass_right_bound", bound);
        if cfg.p == 1.0 {
            report.check(Check::below("mass_right_relative_error", (m.mean / bound - 1.0).abs(), e.tolerance));
        } else {
            report.check(Check::below("mass_right_below_bound", m.mean, bound + 3.0 * m.se));
        }
    }
    let mut buf = Vec::new();
    io::write_current_header(&mut buf, 1).expect("write to memory");
    for (r, (_, _, recs)) in per.iter().enumerate() {
        io::write_currents(&mut buf, r as u64, recs).expect("write to memory");
    }
    let csv = String::from_utf8(buf).expect("ascii output");
    Ok(ExperimentOutput { report, tables: vec![Table { name: "currents.csv".into(), csv }] })
}
