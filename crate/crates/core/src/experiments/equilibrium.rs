use std::collections::BTreeMap;

use super::common::*;
use super::config::{CesaroMarginal, Convergence, ExperimentConfig, InitialCondition, LocalEquilibrium};
use super::ExperimentError;
use crate::hydro::{evolve, riemann_exact, GridProfile, Piecewise};
use crate::lattice::{Site, Window};
use crate::measures::{FluxFunction, ThetaMarginal, DEFAULT_FLUX_POINTS};
use crate::rng::replica_rng;
use crate::sim::{CoupledState, Dynamics, Simulation};
use crate::stats::{tv_distance, Histogram};

/// Smallest accepted fraction of tracked second-class particles right of the origin at the last time.
pub const GAMMA_CROSSED_MIN: f64 = 0.9;

fn source_edges(ic: &InitialCondition) -> bool {
    matches!(ic, InitialCondition::Source { .. })
}

/// Hydrodynamic density bounds `(ρ_*, ρ^*)` at `(t, u)`.
fn hydro_density(
    model: &Model,
    profile: &Piecewise,
    window: Window,
    scaling: u64,
    t: f64,
    u: f64,
) -> Result<(f64, f64), ExperimentError> {
    let flux = FluxFunction::tabulate(model.flux.clone(), DEFAULT_FLUX_POINTS)?;
    if let ([b0], [rl, rr]) = (profile.breakpoints.as_slice(), profile.values.as_slice()) {
        let v = riemann_exact(&flux, *rl, *rr, (u - b0) / t);
        return Ok((v.lower, v.upper));
    }
    let n = scaling as f64;
    let (lo, hi) = (window.left as f64 / n, (window.right + 1) as f64 / n);
    let cells = ((hi - lo) * 400.0).round() as usize;
    let g = evolve(&flux, &GridProfile::from_piecewise(profile, lo, hi, cells)?, t, 0.9)?;
    let v = g.at(u);
    Ok((v, v))
}

fn histogram_rows(model: &Model, sites: &[Site], hists: &[Histogram], beta: f64) -> Result<(Vec<f64>, Vec<(Site, Vec<f64>, Vec<f64>)>), ExperimentError> {
    let mut tvs = Vec::new();
    let mut rows = Vec::new();
    for (x, h) in sites.iter().zip(hists) {
        let th = model.marginal_at(*x, beta)?;
        let target = pmf_table(&th, h.counts.len());
        let emp = h.pmf();
        tvs.push(tv_distance(&emp, &target));
        rows.push((*x, emp, target));
    }
    Ok((tvs, rows))
}

/// Average of the per-site reference laws, padded to `len`.
fn mixture(rows: &[(Site, Vec<f64>, Vec<f64>)], len: usize) -> Vec<f64> {
    let len = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max(len);
    let mut mix = vec![0.0; len];
    for (_, _, th) in rows {
        for (m, v) in mix.iter_mut().zip(th) {
            *m += v / rows.len() as f64;
        }
    }
    mix
}

/// TV between the empirical law of `(η(x), η(y))` and `θ_x ⊗ θ_y`.
fn joint_tv(pairs: &[(u64, u64)], tx: &ThetaMarginal, ty: &ThetaMarginal) -> f64 {
    let k = pairs.iter().map(|(a, b)| a.max(b) + 1).max().unwrap_or(1).max(tx.tail_cut()).max(ty.tail_cut()) as usize;
    let mut counts = vec![0u64; k * k];
    for &(a, b) in pairs {
        counts[a as usize * k + b as usize] += 1;
    }
    let n = pairs.len() as f64;
    let mut covered = 0.0;
    let mut diff = 0.0;
    for a in 0..k {
        for b in 0..k {
            let q = tx.pmf(a as u64) * ty.pmf(b as u64);
            covered += q;
            diff += (counts[a * k + b] as f64 / n - q).abs();
        }
    }
    0.5 * (diff + (1.0 - covered).max(0.0))
}

pub fn run_local_equilibrium(cfg: &ExperimentConfig, e: &LocalEquilibrium) -> Result<ExperimentOutput, ExperimentError> {
    if e.scaling == 0 || !(e.time > 0.0) || e.offsets.is_empty() {
        return Err(ExperimentError::Config("scaling, time and offsets must be nonempty/positive".into()));
    }
    let n = e.scaling as f64;
    let horizon = n * e.time;
    let xn = (n * e.position).floor() as Site;
    let mut sites: Vec<Site> = e.offsets.iter().map(|z| xn + z).collect();
    sites.sort_unstable();
    sites.dedup();
    let roi = (sites[0], *sites.last().unwrap());
    let window = light_cone_window(roi, horizon, cfg.light_cone_speed, cfg.p);
    check_light_cone(window, roi, horizon, cfg.light_cone_speed, cfg.p, (source_edges(&e.initial), false))?;
    let model = Model::build(cfg, window)?;

    let (rho_lo, rho_hi) = match (e.density, &e.initial) {
        (Some(r), _) => (r, r),
        (None, InitialCondition::Profile { profile }) => hydro_density(&model, profile, window, e.scaling, e.time, e.position)?,
        (None, InitialCondition::Pattern { right_empty: true, .. }) => {
            return Err(ExperimentError::Config("half-empty pattern needs an explicit density".into()))
        }
        (None, ic) => {
            let r = ic.left_density().ok_or_else(|| ExperimentError::Config("initial condition has no density; set `density`".into()))?;
            (r, r)
        }
    };

    let dynamics = Dynamics::new(cfg.p, cfg.g.clone())?;
    let samples: Vec<Vec<u64>> = run_replicas(cfg.replicas, |r| {
        let mut rng = replica_rng(cfg.seed, r);
        let init = realize_initial(&e.initial, &model, window, e.scaling, &mut rng)?;
        let state = CoupledState::new(dynamics.clone(), model.env.clone(), vec![init])?;
        let mut sim = Simulation::new(state, vec![], rng);
        sim.run_until(horizon)?;
        sites.iter().map(|&x| occupancy_value(sim.state().config(0).get(x))).collect()
    })?;
    let mut hists = vec![Histogram::default(); sites.len()];
    for s in &samples {
        for (h, &v) in hists.iter_mut().zip(s) {
            h.add(v);
        }
    }

    let mut report = Report::new(cfg, window);
    report.metric("sites", &sites);
    report.metric("density_lower", rho_lo);
    report.metric("density_upper", rho_hi);
    let mut tables = Vec::new();
    let targets: Vec<(&str, f64)> = if rho_lo == rho_hi { vec![("", rho_lo)] } else { vec![("_lower", rho_lo), ("_upper", rho_hi)] };
    let mut best = f64::INFINITY;
    for (suffix, rho) in targets {
        let beta = model.fugacity_for_density(rho)?;
        let (tvs, rows) = histogram_rows(&model, &sites, &hists, beta)?;
        let worst = tvs.iter().copied().fold(0.0, f64::max);
        best = best.min(worst);
        report.metric(&format!("fugacity{suffix}"), beta);
        report.metric(&format!("supercritical{suffix}"), model.is_supercritical(rho));
        report.metric(&format!("tv{suffix}"), &tvs);
        report.metric(&format!("max_tv{suffix}"), worst);
        if sites.len() >= 2 {
            let pairs: Vec<(u64, u64)> = samples.iter().map(|s| (s[0], s[1])).collect();
            let jt = joint_tv(&pairs, &model.marginal_at(sites[0], beta)?, &model.marginal_at(sites[1], beta)?);
            report.metric(&format!("joint_tv{suffix}"), jt);
        }
        tables.push(Table { name: format!("marginals{suffix}.csv"), csv: marginal_csv(&rows) });
    }
    report.check(Check::below("marginal_tv", best, e.tolerance));
    Ok(ExperimentOutput { report, tables })
}

pub fn run_cesaro_marginal(cfg: &ExperimentConfig, e: &CesaroMarginal) -> Result<ExperimentOutput, ExperimentError> {
    if e.scaling == 0 || !(e.time > 0.0) || e.deltas.is_empty() || !(e.sample_every > 0.0) {
        return Err(ExperimentError::Config("scaling, time, deltas and sample_every must be positive".into()));
    }
    if e.deltas.iter().any(|d| !(*d > 0.0 && *d <= e.time)) {
        return Err(ExperimentError::Config("each δ must lie in (0, t]".into()));
    }
    let n = e.scaling as f64;
    let horizon = n * e.time;
    let sites: Vec<Site> = ((n * e.positions.0).floor() as Site..=(n * e.positions.1).floor() as Site).collect();
    let roi = (sites[0], *sites.last().unwrap());
    let window = light_cone_window(roi, horizon, cfg.light_cone_speed, cfg.p);
    check_light_cone(window, roi, horizon, cfg.light_cone_speed, cfg.p, (source_edges(&e.initial), false))?;
    let model = Model::build(cfg, window)?;
    let beta = e.fugacity.unwrap_or(model.c());

    let dmax = e.deltas.iter().copied().fold(0.0, f64::max);
    let start = horizon - n * dmax;
    let mut times: Vec<f64> = Vec::new();
    let mut s = horizon;
    while s > start {
        times.push(s);
        s -= e.sample_every;
    }
    times.reverse();
    let nd = e.deltas.len();
    let dynamics = Dynamics::new(cfg.p, cfg.g.clone())?;
    let per: Vec<(Vec<Histogram>, Histogram)> = run_replicas(cfg.replicas, |r| {
        let mut rng = replica_rng(cfg.seed, r);
        let init = realize_initial(&e.initial, &model, window, e.scaling, &mut rng)?;
        let state = CoupledState::new(dynamics.clone(), model.env.clone(), vec![init])?;
        let mut sim = Simulation::new(state, vec![], rng);
        let mut hs = vec![Histogram::default(); nd];
        let mut last = Histogram::default();
        for &t in &times {
            sim.run_until(t)?;
            let c = sim.state().config(0);
            for &x in &sites {
                let v = occupancy_value(c.get(x))?;
                for (k, d) in e.deltas.iter().enumerate() {
                    if t > horizon - n * d {
                        hs[k].add(v);
                    }
                }
                if t == horizon {
                    last.add(v);
                }
            }
        }
        Ok((hs, last))
    })?;
    let mut hists = vec![Histogram::default(); nd];
    let mut instant = Histogram::default();
    for (hs, last) in &per {
        for (a, b) in hists.iter_mut().zip(hs) {
            a.merge(b);
        }
        instant.merge(last);
    }
    // pooled reference: mixture of the per-site laws
    let margs = sites.iter().map(|&x| model.marginal_at(x, beta)).collect::<Result<Vec<_>, _>>()?;
    let len = hists.iter().map(|h| h.counts.len()).max().unwrap_or(1).max(instant.counts.len());
    let cut = margs.iter().map(|m| m.tail_cut() as usize + 1).max().unwrap_or(1).max(len);
    let target: Vec<f64> = (0..cut as u64).map(|k| margs.iter().map(|m| m.pmf(k)).sum::<f64>() / margs.len() as f64).collect();

    let tvs: Vec<f64> = hists.iter().map(|h| tv_distance(&h.pmf(), &target)).collect();
    let tv_instant = tv_distance(&instant.pmf(), &target);
    let avg_vs_instant: Vec<f64> = hists.iter().map(|h| tv_distance(&h.pmf(), &instant.pmf())).collect();
    let mut order: Vec<usize> = (0..nd).collect();
    order.sort_by(|&i, &j| e.deltas[j].total_cmp(&e.deltas[i]));
    let nonincreasing = order.windows(2).all(|w| tvs[w[1]] <= tvs[w[0]]);

    let mut report = Report::new(cfg, window);
    report.metric("sites", (sites[0], *sites.last().unwrap()));
    report.metric("fugacity", beta);
    report.metric("deltas", &e.deltas);
    report.metric("tv", &tvs);
    report.metric("tv_instant", tv_instant);
    report.metric("tv_average_vs_instant", &avg_vs_instant);
    report.metric("samples_per_delta", hists.iter().map(|h| h.total()).collect::<Vec<_>>());
    report.check(Check::within("tv_nonincreasing_as_delta_shrinks", nonincreasing as u8 as f64, 1.0, 1.0));
    let mut csv = String::from("delta,n,empirical,theta\n");
    for (d, h) in e.deltas.iter().zip(&hists) {
        let emp = h.pmf();
        for k in 0..emp.len().max(target.len()) {
            let a = emp.get(k).copied().unwrap_or(0.0);
            let b = target.get(k).copied().unwrap_or(0.0);
            if a > 0.0 || b >= 1e-12 {
                csv.push_str(&format!("{d},{k},{a},{b}\n"));
            }
        }
    }
    Ok(ExperimentOutput { report, tables: vec![Table { name: "cesaro.csv".into(), csv }] })
}

pub fn run_convergence(cfg: &ExperimentConfig, e: &Convergence) -> Result<ExperimentOutput, ExperimentError> {
    if e.sites.is_empty() || !(e.base_time > 0.0) || e.multipliers.is_empty() {
        return Err(ExperimentError::Config("sites, base_time and multipliers must be nonempty/positive".into()));
    }
    let mut times: Vec<f64> = e.multipliers.iter().map(|m| m * e.base_time).collect();
    times.sort_by(f64::total_cmp);
    let horizon = *times.last().unwrap();
    let mut sites = e.sites.clone();
    sites.sort_unstable();
    sites.dedup();
    let mut roi = (sites[0], *sites.last().unwrap());
    if let Some(gt) = &e.gamma_tracking {
        if gt.left > gt.right || gt.per_site == 0 {
            return Err(ExperimentError::Config("empty γ-tracking block".into()));
        }
        roi = (roi.0.min(gt.left), roi.1.max(gt.right).max(0));
    }
    let window = light_cone_window(roi, horizon, cfg.light_cone_speed, cfg.p);
    check_light_cone(window, roi, horizon, cfg.light_cone_speed, cfg.p, (source_edges(&e.initial), false))?;
    let model = Model::build(cfg, window)?;
    let rho = e
        .density
        .or_else(|| e.initial.left_density())
        .ok_or_else(|| ExperimentError::Config("initial condition has no left density; set `density`".into()))?;
    let beta = model.fugacity_for_density(rho)?;

    let dynamics = Dynamics::new(cfg.p, cfg.g.clone())?;
    type Sample = (Vec<Vec<u64>>, Vec<(usize, usize)>);
    let per: Vec<Sample> = run_replicas(cfg.replicas, |r| {
        let mut rng = replica_rng(cfg.seed, r);
        let init = realize_initial(&e.initial, &model, window, 1, &mut rng)?;
        let mut state = CoupledState::new(dynamics.clone(), model.env.clone(), vec![init.clone()])?;
        let mut tracked = 0u64;
        if let Some(gt) = &e.gamma_tracking {
            let mut lower = init.clone();
            for x in gt.left..=gt.right {
                let v = occupancy_value(lower.get(x))? as u32;
                let removed = v.min(gt.per_site);
                tracked += removed as u64;
                lower.set(x, crate::sim::Occupancy::Finite(v - removed));
            }
            state = CoupledState::new(dynamics.clone(), model.env.clone(), vec![init.clone(), lower.clone()])?
                .with_pair(0, 1)?
                .with_classes(vec![lower])?;
            if tracked > 0 {
                let labels: Vec<u64> = (0..tracked).collect();
                state = state.track_class(2, &labels)?;
            }
        }
        let mut sim = Simulation::new(state, vec![], rng);
        let mut occ = Vec::with_capacity(times.len());
        let mut crossed = Vec::with_capacity(times.len());
        for &t in &times {
            sim.run_until(t)?;
            let c = sim.state().config(0);
            occ.push(sites.iter().map(|&x| occupancy_value(c.get(x))).collect::<Result<Vec<_>, _>>()?);
            let tags = sim.state().tagged();
            crossed.push((tags.iter().filter(|p| p.position > 0).count(), tags.len()));
        }
        Ok((occ, crossed))
    })?;

    let mut report = Report::new(cfg, window);
    report.metric("density", rho);
    report.metric("fugacity", beta);
    report.metric("supercritical", model.is_supercritical(rho));
    report.metric("times", &times);
    let mut worst = Vec::new();
    let mut pooled = Vec::new();
    let mut csv = String::from("time,site,n,empirical,theta\n");
    for (ti, t) in times.iter().enumerate() {
        let mut hists = vec![Histogram::default(); sites.len()];
        for (occ, _) in &per {
            for (h, &v) in hists.iter_mut().zip(&occ[ti]) {
                h.add(v);
            }
        }
        let (tvs, rows) = histogram_rows(&model, &sites, &hists, beta)?;
        worst.push(tvs.iter().copied().fold(0.0, f64::max));
        let mut all = Histogram::default();
        for h in &hists {
            all.merge(h);
        }
        let mix = mixture(&rows, all.counts.len());
        pooled.push(tv_distance(&all.pmf(), &mix));
        for (x, emp, th) in rows {
            for k in 0..emp.len().max(th.len()) {
                let a = emp.get(k).copied().unwrap_or(0.0);
                let b = th.get(k).copied().unwrap_or(0.0);
                if a > 0.0 || b >= 1e-12 {
                    csv.push_str(&format!("{t},{x},{k},{a},{b}\n"));
                }
            }
        }
    }
    let decreasing = pooled.windows(2).all(|w| w[1] <= w[0]);
    report.metric("max_tv", &worst);
    report.metric("pooled_tv", &pooled);
    report.check(Check::within("tv_decreasing", decreasing as u8 as f64, 1.0, 1.0));
    report.check(Check::below("final_tv", *pooled.last().unwrap(), e.tolerance));
    if e.gamma_tracking.is_some() {
        let fractions: Vec<f64> = (0..times.len())
            .map(|ti| {
                let (c, n) = per.iter().fold((0usize, 0usize), |(c, n), (_, cr)| (c + cr[ti].0, n + cr[ti].1));
                if n == 0 { f64::NAN } else { c as f64 / n as f64 }
            })
            .collect();
        let tracked: usize = per.iter().map(|(_, cr)| cr[0].1).sum();
        report.metric("gamma_tracked", tracked);
        report.metric("gamma_crossed_fraction", &fractions);
        let last = *fractions.last().unwrap();
        report.check(Check::above("gamma_crossed_fraction_final", if last.is_nan() { 0.0 } else { last }, GAMMA_CROSSED_MIN));
    }
    let mut by_time = BTreeMap::new();
    for (t, w) in times.iter().zip(&pooled) {
        by_time.insert(format!("{t}"), *w);
    }
    report.metric("pooled_tv_by_time", by_time);
    Ok(ExperimentOutput { report, tables: vec![Table { name: "convergence.csv".into(), csv }] })
}
