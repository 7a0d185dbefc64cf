//! Entropy solutions of `∂_t ρ + ∂_x f(ρ) = 0` for a nondecreasing flux table:
//! a Godunov finite-volume scheme and the exact self-similar Riemann solution.

use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::measures::FluxFunction;

/// Inflation of the table slope used for the CFL bound.
pub const SLOPE_SAFETY: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HydroError {
    #[error("CFL number {0} must lie in (0, 1)")]
    InvalidCfl(f64),
    #[error("unstable parameters: {0}")]
    Unstable(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

fn check_range(f: &FluxFunction, rho: f64) {
    if rho > f.rho_max() && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("density {rho} beyond flux table (ρ_max = {}), flux clamped", f.rho_max());
    }
}

/// Cell averages on a uniform grid of `[x_min, x_min + n·dx]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProfile {
    pub x_min: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    pub time: f64,
}

/// Piecewise-constant initial data: `values[i]` on `(breakpoints[i−1], breakpoints[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piecewise {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl Piecewise {
    pub fn validate(&self) -> Result<(), HydroError> {
        if self.values.len() != self.breakpoints.len() + 1 {
            return Err(HydroError::InvalidProfile("need one more value than breakpoints".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HydroError::InvalidProfile("breakpoints must increase".into()));
        }
        if self.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(HydroError::InvalidProfile("densities must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn at(&self, x: f64) -> f64 {
        self.values[self.breakpoints.partition_point(|b| *b <= x)]
    }

    /// `∫_a^b ρ_0`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut lo = a;
        for (i, &v) in self.values.iter().enumerate() {
            let hi = self.breakpoints.get(i).copied().unwrap_or(f64::INFINITY).min(b);
            if hi > lo {
                total += v * (hi - lo);
                lo = hi;
            }
            if lo >= b {
                break;
            }
        }
        total
    }
}

impl GridProfile {
    pub fn new(x_min: f64, x_max: f64, cells: usize, values: Vec<f64>) -> Result<Self, HydroError> {
        if cells == 0 || !(x_max > x_min) || values.len() != cells {
            return Err(HydroError::InvalidGrid(format!("[{x_min}, {x_max}] with {cells} cells")));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(HydroError::InvalidProfile("densities must be finite and nonnegative".into()));
        }
        Ok(Self { x_min, dx: (x_max - x_min) / cells as f64, values, time: 0.0 })
    }

    /// Exact cell averages of piecewise-constant data.
    pub fn from_piecewise(pc: &Piecewise, x_min: f64, x_max: f64, cells: usize) -> Result<Self, HydroError> {
        pc.validate()?;
        let dx = (x_max - x_min) / cells as f64;
        let values = (0..cells)
            .map(|i| {
                let a = x_min + i as f64 * dx;
                pc.integral(a, a + dx) / dx
            })
            .collect();
        Self::new(x_min, x_max, cells, values)
    }

    /// Midpoint samples of `rho`.
    pub fn from_fn(x_min: f64, x_max: f64, cells: usize, rho: impl Fn(f64) -> f64) -> Result<Self, HydroError> {
        let dx = (x_max - x_min) / cells as f64;
        let values = (0..cells).map(|i| rho(x_min + (i as f64 + 0.5) * dx)).collect();
        Self::new(x_min, x_max, cells, values)
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.dx * self.values.len() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.center(i))
    }

    /// Value of the cell containing `x` (clamped to the grid).
    pub fn at(&self, x: f64) -> f64 {
        let i = ((x - self.x_min) / self.dx).floor().clamp(0.0, (self.values.len() - 1) as f64);
        self.values[i as usize]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx
    }

    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// `∫ |ρ − σ|` over `[a, b]`, with `σ` evaluated at cell centres.
    pub fn l1_error(&self, a: f64, b: f64, sigma: impl Fn(f64) -> f64) -> f64 {
        self.centers()
            .zip(&self.values)
            .filter(|(x, _)| *x >= a && *x <= b)
            .map(|(x, v)| (v - sigma(x)).abs())
            .sum::<f64>()
            * self.dx
    }

    /// Averages over blocks of `factor` cells.
    pub fn coarsen(&self, factor: usize) -> Result<Self, HydroError> {
        if factor == 0 || self.values.len() % factor != 0 {
            return Err(HydroError::InvalidGrid(format!("cannot coarsen {} cells by {factor}", self.values.len())));
        }
        let values = self.values.chunks(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect();
        Ok(Self { x_min: self.x_min, dx: self.dx * factor as f64, values, time: self.time })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,rho")?;
        for (x, v) in self.centers().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }

    /// Reads `x,rho` rows of cell centres on a uniform grid.
    pub fn read_csv(text: &str) -> Result<Self, HydroError> {
        let mut xs = Vec::new();
        let mut vals = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(|s| s.trim().parse::<f64>());
            match (parts.next(), parts.next()) {
                (Some(Ok(x)), Some(Ok(v))) => {
                    xs.push(x);
                    vals.push(v);
                }
                _ => return Err(HydroError::InvalidProfile(format!("bad row {}", i + 1))),
            }
        }
        if xs.len() < 2 {
            return Err(HydroError::InvalidGrid("need at least two cells".into()));
        }
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        if xs.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.abs().max(1.0)) {
            return Err(HydroError::InvalidGrid("cell centres must be uniformly spaced".into()));
        }
        let x_min = xs[0] - 0.5 * dx;
        let n = xs.len();
        Self::new(x_min, x_min + dx * n as f64, n, vals)
    }
}

/// Exact Riemann flux: `min_{[ρ_l, ρ_r]} f` if `ρ_l ≤ ρ_r`, else `max_{[ρ_r, ρ_l]} f`.
pub fn godunov_flux(f: &FluxFunction, rho_left: f64, rho_right: f64) -> f64 {
    check_range(f, rho_left.max(rho_right));
    let (a, b) = if rho_left <= rho_right { (rho_left, rho_right) } else { (rho_right, rho_left) };
    let nodes = f.nodes();
    let vals = f.values();
    let i0 = nodes.partition_point(|r| *r <= a);
    let i1 = nodes.partition_point(|r| *r < b);
    let inner = vals[i0..i1.max(i0)].iter().copied();
    let ends = [f.eval(a), f.eval(b)];
    if rho_left <= rho_right {
        inner.chain(ends).fold(f64::INFINITY, f64::min)
    } else {
        inner.chain(ends).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Godunov flux for a nondecreasing `f`: the upwind value `f(ρ_l)`.
#[inline]
pub fn godunov_flux_upwind(f: &FluxFunction, rho_left: f64) -> f64 {
    f.eval(rho_left)
}

/// Inflow and outflow through the two grid ends during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFluxes {
    pub influx: f64,
    pub outflux: f64,
}

/// One conservative update with outflow (zero-gradient) boundaries.
pub fn step(f: &FluxFunction, values: &mut [f64], fluxes: &mut Vec<f64>, dx: f64, dt: f64, upwind: bool) -> StepFluxes {
    let n = values.len();
    fluxes.clear();
    fluxes.reserve(n + 1);
    let g = |a: f64, b: f64| if upwind { godunov_flux_upwind(f, a) } else { godunov_flux(f, a, b) };
    fluxes.push(g(values[0], values[0]));
    for i in 1..n {
        fluxes.push(g(values[i - 1], values[i]));
    }
    fluxes.push(g(values[n - 1], values[n - 1]));
    let lam = dt / dx;
    for i in 0..n {
        values[i] -= lam * (fluxes[i + 1] - fluxes[i]);
    }
    StepFluxes { influx: fluxes[0], outflux: fluxes[n] }
}

/// Result of [`evolve_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub profile: GridProfile,
    pub steps: usize,
    pub dt: f64,
    /// `∫ (F_in − F_out) dt` through the grid ends.
    pub boundary_mass: f64,
}

/// Advances `profile` by time `t` with time step `cfl·dx / (1.1·max slope)`.
pub fn evolve(f: &FluxFunction, profile: &GridProfile, t: f64, cfl: f64) -> Result<GridProfile, HydroError> {
    evolve_detailed(f, profile, t, cfl).map(|e| e.profile)
}

pub fn evolve_detailed(f: &FluxFunction, profile: &GridProfile, t: f64, cfl: f64) -> Result<Evolution, HydroError> {
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(HydroError::InvalidCfl(cfl));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(HydroError::Unstable(format!("horizon {t}")));
    }
    let slope = SLOPE_SAFETY * f.max_slope();
    if !slope.is_finite() {
        return Err(HydroError::Unstable("flux slope is not finite".into()));
    }
    let dt_max = if slope > 0.0 { cfl * profile.dx / slope } else { f64::INFINITY };
    let steps = if t == 0.0 { 0 } else { (t / dt_max).ceil().max(1.0) as usize };
    let dt = if steps == 0 { 0.0 } else { t / steps as f64 };
    if steps > 0 && dt * slope > profile.dx {
        return Err(HydroError::Unstable(format!("dt = {dt} violates the CFL bound")));
    }
    let upwind = f.is_nondecreasing();
    let mut values = profile.values.clone();
    let mut fluxes = Vec::new();
    let mut boundary_mass = 0.0;
    for _ in 0..steps {
        let s = step(f, &mut values, &mut fluxes, profile.dx, dt, upwind);
        boundary_mass += (s.influx - s.outflux) * dt;
    }
    for v in &mut values {
        if *v < 0.0 && *v > -1e-12 {
            *v = 0.0;
        }
    }
    Ok(Evolution {
        profile: GridProfile { x_min: profile.x_min, dx: profile.dx, values, time: profile.time + t },
        steps,
        dt,
        boundary_mass,
    })
}

/// Self-similar Riemann solution at `ξ = x/t`: `lower`/`upper` are the inf/sup
/// of the optimiser set and `value` the left limit in `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiemannValue {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiemannFan {
    pub rho_left: f64,
    pub rho_right: f64,
}

impl RiemannFan {
    pub fn new(rho_left: f64, rho_right: f64) -> Self {
        Self { rho_left, rho_right }
    }

    pub fn at(&self, f: &FluxFunction, xi: f64) -> RiemannValue {
        riemann_exact(f, self.rho_left, self.rho_right, xi)
    }

    /// Entropy solution at `(t, x)` for `t > 0`.
    pub fn density(&self, f: &FluxFunction, t: f64, x: f64) -> f64 {
        self.at(f, x / t).value
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// For `ρ_l ≥ ρ_r` the optimisers of `r ↦ f(r) − ξr` over `[ρ_r, ρ_l]` are
/// maximisers; for `ρ_l < ρ_r` they are minimisers over `[ρ_l, ρ_r]`.
pub fn riemann_exact(f: &FluxFunction, rho_l: f64, rho_r: f64, xi: f64) -> RiemannValue {
    if rho_l == rho_r {
        return RiemannValue { value: rho_l, lower: rho_l, upper: rho_l };
    }
    let decreasing = rho_l > rho_r;
    let (a, b) = if decreasing { (rho_r, rho_l) } else { (rho_l, rho_r) };
    let sign = if decreasing { 1.0 } else { -1.0 };
    let (lower, upper) = argmax_bounds(f, a, b, |r, fr| sign * (fr - xi * r));
    let value = if decreasing { upper } else { lower };
    RiemannValue { value, lower, upper }
}

/// `(inf, sup) argmax_{r ∈ [0, ρ]} [f(r) − (u/t) r]`.
pub fn riemann_source_limits(f: &FluxFunction, rho: f64, t: f64, u: f64) -> (f64, f64) {
    assert!(t > 0.0, "t must be positive");
    if rho <= 0.0 {
        return (0.0, 0.0);
    }
    let v = riemann_exact(f, rho, 0.0, u / t);
    (v.lower, v.upper)
}

/// Inf and sup of the maximiser set of `h(r, f(r))` over `[a, b]`: a sweep of
/// the table nodes (exact for the interpolant), refined against the exact
/// model where one is attached.
fn argmax_bounds(f: &FluxFunction, a: f64, b: f64, h: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    check_range(f, b);
    let nodes = f.nodes();
    let i0 = nodes.partition_point(|r| *r <= a);
    let i1 = nodes.partition_point(|r| *r < b);
    let mut cand = Vec::with_capacity(i1.saturating_sub(i0) + 2);
    cand.push(a);
    cand.extend_from_slice(&nodes[i0..i1.max(i0)]);
    cand.push(b);
    let exact = f.model().is_some();
    let fe = |r: f64| if exact { f.eval_exact(r) } else { f.eval(r) };
    let hv: Vec<f64> = cand.iter().map(|&r| h(r, fe(r))).collect();
    let top = hv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + top.abs());
    let first = hv.iter().position(|v| *v >= top - tol).unwrap();
    let last = hv.iter().rposition(|v| *v >= top - tol).unwrap();
    if !exact {
        return (cand[first], cand[last]);
    }
    let hx = |r: f64| h(r, fe(r));
    if first == last {
        let lo = cand[first.saturating_sub(1)];
        let hi = cand[(first + 1).min(cand.len() - 1)];
        let r = golden_max(&hx, lo, hi);
        let best = if hx(r) > hv[first] { r } else { cand[first] };
        return (best, best);
    }
    // plateau: locate the edges where h drops below its maximum
    let edge = |inside: f64, outside: f64| {
        let (mut i, mut o) = (inside, outside);
        for _ in 0..80 {
            let m = 0.5 * (i + o);
            if hx(m) >= top - tol {
                i = m;
            } else {
                o = m;
            }
        }
        i
    };
    let lower = if first > 0 { edge(cand[first], cand[first - 1]) } else { cand[first] };
    let upper = if last + 1 < cand.len() { edge(cand[last], cand[last + 1]) } else { cand[last] };
    (lower, upper)
}

fn golden_max(h: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut h1, mut h2) = (h(x1), h(x2));
    for _ in 0..100 {
        if hi - lo < 1e-13 * (1.0 + hi.abs()) {
            break;
        }
        if h1 < h2 {
            lo = x1;
            x1 = x2;
            h1 = h2;
            x2 = lo + GOLDEN * (hi - lo);
            h2 = h(x2);
        } else {
            hi = x2;
            x2 = x1;
            h2 = h1;
            x1 = hi - GOLDEN * (hi - lo);
            h1 = h(x1);
        }
    }
    0.5 * (lo + hi)
}
