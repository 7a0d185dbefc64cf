use std::fmt::Write;

use super::common::*;
use super::config::{ExperimentConfig, HydroCompare};
use super::ExperimentError;
use crate::hydro::{evolve, GridProfile, RiemannFan};
use crate::lattice::Site;
use crate::measures::{FluxFunction, DEFAULT_FLUX_POINTS};
use crate::rng::replica_rng;
use crate::sim::{simulate, Configuration, CoupledState, Dynamics};
use crate::stats::MeanSe;

/// `(1/(b − a)) ∫_a^b` of a piecewise-constant grid profile.
fn grid_average(g: &GridProfile, a: f64, b: f64) -> f64 {
    let i0 = (((a - g.x_min) / g.dx).floor().max(0.0)) as usize;
    let i1 = (((b - g.x_min) / g.dx).ceil() as usize).min(g.cells());
    let mut total = 0.0;
    for i in i0..i1 {
        let lo = (g.x_min + i as f64 * g.dx).max(a);
        let hi = (g.x_min + (i + 1) as f64 * g.dx).min(b);
        if hi > lo {
            total += g.values[i] * (hi - lo);
        }
    }
    total / (b - a)
}

fn profile_csv(xs: &[f64], vals: &[f64]) -> String {
    let mut s = String::from("x,rho\n");
    for (x, v) in xs.iter().zip(vals) {
        let _ = writeln!(s, "{x},{v}");
    }
    s
}

pub fn run(cfg: &ExperimentConfig, e: &HydroCompare) -> Result<ExperimentOutput, ExperimentError> {
    if e.scaling == 0 || !(e.time > 0.0) || !(e.roi.1 > e.roi.0) || !(e.cell_width > 0.0) || !(e.pde_dx > 0.0) {
        return Err(ExperimentError::Config("scaling, time, roi, cell_width and pde_dx must be positive".into()));
    }
    e.profile.validate()?;
    let n = e.scaling as f64;
    let horizon = n * e.time;
    let cell_sites_f = n * e.cell_width;
    let cell_sites = cell_sites_f.round() as Site;
    if cell_sites < 1 || (cell_sites_f - cell_sites as f64).abs() > 1e-9 {
        return Err(ExperimentError::Config("N · cell_width must be a positive integer".into()));
    }
    let cells = ((e.roi.1 - e.roi.0) / e.cell_width).round() as usize;
    let a = (n * e.roi.0).floor() as Site;
    let b = a + cells as Site * cell_sites - 1;
    let window = light_cone_window((a, b), horizon, cfg.light_cone_speed, cfg.p);
    check_light_cone(window, (a, b), horizon, cfg.light_cone_speed, cfg.p, (false, false))?;

    let model = Model::build(cfg, window)?;
    let flux = FluxFunction::tabulate(model.flux.clone(), DEFAULT_FLUX_POINTS)?;
    let top = e.profile.values.iter().copied().fold(0.0, f64::max);
    if top > flux.rho_max() {
        return Err(ExperimentError::Config(format!("density {top} beyond the flux table (ρ_max = {})", flux.rho_max())));
    }
    let init = Configuration::from_counts(window, &cumulative_rounding(&e.profile, e.scaling, window))
        .map_err(ExperimentError::Config)?;
    let dynamics = Dynamics::new(cfg.p, cfg.g.clone())?;

    let per_replica: Vec<Vec<f64>> = run_replicas(cfg.replicas, |r| {
        let state = CoupledState::new(dynamics.clone(), model.env.clone(), vec![init.clone()])?;
        let (state, _, _) = simulate(state, horizon, replica_rng(cfg.seed, r), vec![], &[])?;
        let c = state.config(0);
        (0..cells)
            .map(|k| {
                let lo = a + k as Site * cell_sites;
                let m = c.mass_on(lo, lo + cell_sites - 1);
                let m = m.finite().ok_or_else(|| ExperimentError::Config("infinite mass in a cell".into()))?;
                Ok(m as f64 / cell_sites as f64)
            })
            .collect()
    })?;
    let cell_lo: Vec<f64> = (0..cells).map(|k| (a + k as Site * cell_sites) as f64 / n).collect();
    let centers: Vec<f64> = cell_lo.iter().map(|x| x + 0.5 * e.cell_width).collect();
    let mean_profile: Vec<f64> = (0..cells)
        .map(|k| per_replica.iter().map(|p| p[k]).sum::<f64>() / per_replica.len() as f64)
        .collect();

    let x_min = window.left as f64 / n;
    let x_max = (window.right + 1) as f64 / n;
    let pde_cells = ((x_max - x_min) / e.pde_dx).round() as usize;
    let initial = GridProfile::from_piecewise(&e.profile, x_min, x_max, pde_cells)?;
    let pde = evolve(&flux, &initial, e.time, e.cfl)?;
    let pde_cells_avg: Vec<f64> = cell_lo.iter().map(|&lo| grid_average(&pde, lo, lo + e.cell_width)).collect();

    let l1 = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).abs()).sum::<f64>() * e.cell_width;
    let replica_l1: Vec<f64> = per_replica.iter().map(|p| l1(p, &pde_cells_avg)).collect();
    let replica_l1 = MeanSe::of(&replica_l1);
    let l1_pde = l1(&mean_profile, &pde_cells_avg);

    let mut report = Report::new(cfg, window);
    report.metric("cells", cells);
    report.metric("cell_sites", cell_sites);
    report.metric("l1_replica_vs_pde", replica_l1);
    report.metric("l1_mean_vs_pde", l1_pde);
    report.metric("pde_steps_dx", e.pde_dx);

    let mut tables = vec![
        Table { name: "profile_sim.csv".into(), csv: profile_csv(&centers, &mean_profile) },
        Table {
            name: "profile_pde.csv".into(),
            csv: profile_csv(&pde.centers().collect::<Vec<_>>(), &pde.values),
        },
    ];

    if let ([b0], [rl, rr]) = (e.profile.breakpoints.as_slice(), e.profile.values.as_slice()) {
        let fan = RiemannFan::new(*rl, *rr);
        let exact = |x: f64| fan.density(&flux, e.time, x - b0);
        let sub = 50;
        let exact_cells: Vec<f64> = cell_lo
            .iter()
            .map(|&lo| (0..sub).map(|j| exact(lo + (j as f64 + 0.5) * e.cell_width / sub as f64)).sum::<f64>() / sub as f64)
            .collect();
        let l1_exact = l1(&mean_profile, &exact_cells);
        let pde_exact = pde.l1_error(e.roi.0, e.roi.1, exact);
        report.metric("l1_mean_vs_exact", l1_exact);
        report.metric("l1_pde_vs_exact", pde_exact);
        report.check(Check::below("profile_l1_vs_exact", l1_exact, e.tolerance));
        let fine: Vec<f64> = (0..=400).map(|i| e.roi.0 + (e.roi.1 - e.roi.0) * i as f64 / 400.0).collect();
        let vals: Vec<f64> = fine.iter().map(|&x| exact(x)).collect();
        tables.push(Table { name: "profile_exact.csv".into(), csv: profile_csv(&fine, &vals) });
    } else {
        report.check(Check::below("profile_l1_vs_pde", l1_pde, e.tolerance));
    }
    Ok(ExperimentOutput { report, tables })
}
