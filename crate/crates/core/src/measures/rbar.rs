use super::theta::mean_density_with_gap;
use super::{MeasureError, RateFunction};
use crate::env::{Atom, DisorderLaw};

const ORDER: usize = 8;
const MAX_GEOMETRIC_PANELS: usize = 180;
const DIVERGENCE_CUTOFF: f64 = 1e12;
const INVERSE_TOL: f64 = 1e-12;

/// `R̄(β) = ∫ R(β/a) Q0(da)` for a fixed rate function and disorder law.
///
/// Quadrature nodes and density weights do not depend on `β` and are built once.
#[derive(Debug, Clone)]
pub struct Rbar {
    g: RateFunction,
    law: DisorderLaw,
    kind: Kind,
    lo: f64,
}

#[derive(Debug, Clone)]
enum Kind {
    Atoms(Vec<Atom>),
    Density {
        /// `(offset, a, weight × density)` for panels away from the lower edge.
        main: Vec<(f64, f64, f64)>,
        /// Dyadically shrinking panels `[h 2^{-k-1}, h 2^{-k}]` toward the lower edge.
        geometric: Vec<Vec<(f64, f64, f64)>>,
    },
}

/// Mean of `θ_{β/a}` evaluated with `1 − β/a = (a − β)/a` from the offset form.
#[inline]
fn r_at(g: &RateFunction, beta: f64, a: f64, a_minus_beta: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    if a_minus_beta <= 0.0 {
        return f64::INFINITY;
    }
    let b = beta / a;
    let gap = a_minus_beta / a;
    if g.saturation() == 1 {
        return b / gap;
    }
    mean_density_with_gap(g, b.min(1.0 - gap).max(0.0), gap).unwrap_or(f64::INFINITY)
}

impl Rbar {
    pub fn new(g: &RateFunction, law: &DisorderLaw) -> Result<Self, MeasureError> {
        law.validate().map_err(|e| MeasureError::InvalidLaw(e.to_string()))?;
        let lo = law.inf_support();
        let kind = match law.sorted_atoms() {
            Some(atoms) => Kind::Atoms(atoms),
            None => {
                let hi = law.sup_support();
                let width = hi - lo;
                let (xs, ws) = super::quadrature::gauss_legendre(ORDER);
                let node = |s: f64| law.density_at_offset(s).unwrap_or(0.0);

                let mut cuts: Vec<f64> = law
                    .breakpoints()
                    .into_iter()
                    .map(|e| e - lo)
                    .filter(|s| *s > 0.0 && *s < width)
                    .collect();
                cuts.push(0.0);
                cuts.push(width);
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let panels_total = (law.quadrature_nodes() / ORDER).max(8);
                let mut main = Vec::new();
                let mut first_panel = width;
                for seg in cuts.windows(2) {
                    let (a0, b0) = (seg[0], seg[1]);
                    let n = ((panels_total as f64 * (b0 - a0) / width).ceil() as usize).max(1);
                    let h = (b0 - a0) / n as f64;
                    for j in 0..n {
                        let pa = a0 + j as f64 * h;
                        let pb = if j + 1 == n { b0 } else { pa + h };
                        if pa == 0.0 {
                            first_panel = pb;
                            continue;
                        }
                        push_panel(&mut main, &xs, &ws, pa, pb, lo, &node);
                    }
                }
                let mut geometric = Vec::with_capacity(MAX_GEOMETRIC_PANELS);
                let mut hi_edge = first_panel;
                for _ in 0..MAX_GEOMETRIC_PANELS {
                    let lo_edge = 0.5 * hi_edge;
                    let mut panel = Vec::with_capacity(ORDER);
                    push_panel(&mut panel, &xs, &ws, lo_edge, hi_edge, lo, &node);
                    geometric.push(panel);
                    hi_edge = lo_edge;
                }
                Kind::Density { main, geometric }
            }
        };
        Ok(Self { g: g.clone(), law: law.clone(), kind, lo })
    }

    pub fn rate(&self) -> &RateFunction {
        &self.g
    }

    pub fn law(&self) -> &DisorderLaw {
        &self.law
    }

    /// `inf supp Q0`, the right end of the domain of `R̄`.
    pub fn inf_support(&self) -> f64 {
        self.lo
    }

    /// `R̄(β)` for `β ∈ [0, inf supp Q0]`; `+∞` when the integral diverges.
    pub fn eval(&self, beta: f64) -> Result<f64, MeasureError> {
        if !(beta >= 0.0 && beta <= self.lo) {
            return Err(MeasureError::BetaOutOfRange(beta));
        }
        let d0 = self.lo - beta;
        match &self.kind {
            Kind::Atoms(atoms) => {
                let mut total = 0.0;
                for at in atoms {
                    let r = r_at(&self.g, beta, at.value, at.value - beta);
                    if !r.is_finite() {
                        return Ok(f64::INFINITY);
                    }
                    total += at.weight * r;
                }
                Ok(total)
            }
            Kind::Density { main, geometric } => {
                if beta == 0.0 {
                    return Ok(0.0);
                }
                let mut total = 0.0;
                for &(s, a, wd) in main {
                    total += wd * r_at(&self.g, beta, a, d0 + s);
                }
                let mut prev = f64::NAN;
                let mut last = 0.0;
                let mut quiet = 0;
                let mut exhausted = true;
                for (k, panel) in geometric.iter().enumerate() {
                    let c: f64 = panel
                        .iter()
                        .map(|&(s, a, wd)| wd * r_at(&self.g, beta, a, d0 + s))
                        .sum();
                    if !c.is_finite() {
                        return Ok(f64::INFINITY);
                    }
                    total += c;
                    if total > DIVERGENCE_CUTOFF {
                        return Ok(f64::INFINITY);
                    }
                    prev = last;
                    last = c;
                    if k >= 4 && c <= 1e-17 * total {
                        quiet += 1;
                        if quiet >= 3 {
                            exhausted = false;
                            break;
                        }
                    } else {
                        quiet = 0;
                    }
                }
                if exhausted && last > 0.0 {
                    let ratio = last / prev;
                    if !(ratio < 0.999) {
                        return Ok(f64::INFINITY);
                    }
                    total += last * ratio / (1.0 - ratio);
                }
                Ok(total)
            }
        }
    }

    /// `ρ_c(Q0) = R̄(inf supp Q0)`, possibly infinite.
    pub fn critical(&self) -> f64 {
        self.eval(self.lo).expect("inf supp is in the domain")
    }

    /// `R̄⁻¹(ρ)` for `0 ≤ ρ < ρ_c` (or `ρ ≤ ρ_c` when `ρ_c` is finite).
    pub fn inverse(&self, rho: f64) -> Result<f64, MeasureError> {
        self.inverse_in(rho, 0.0, self.lo)
    }

    /// [`Rbar::inverse`] with the root known to lie in `[b_lo, b_hi]`.
    pub fn inverse_in(&self, rho: f64, b_lo: f64, b_hi: f64) -> Result<f64, MeasureError> {
        if !(rho >= 0.0) {
            return Err(MeasureError::DensityOutOfRange { rho, rho_c: f64::NAN });
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        let mut a = b_lo.max(0.0);
        let mut b = b_hi.min(self.lo);
        let mut fa = self.eval(a)? - rho;
        let mut fb = self.eval(b)? - rho;
        if fa > 0.0 {
            return self.inverse_in(rho, 0.0, b);
        }
        if fb < 0.0 {
            if b < self.lo {
                return self.inverse_in(rho, a, self.lo);
            }
            return Err(MeasureError::DensityOutOfRange { rho, rho_c: fb + rho });
        }
        if fb == 0.0 {
            return Ok(b);
        }
        // Illinois regula falsi, falling back to bisection when the upper
        // value is infinite or progress stalls.
        let tol = INVERSE_TOL * rho.max(1.0);
        let mut side = 0i32;
        for _ in 0..400 {
            let width = b - a;
            let x = if fb.is_finite() {
                let t = a - fa * width / (fb - fa);
                if t > a && t < b {
                    t
                } else {
                    a + 0.5 * width
                }
            } else {
                a + 0.5 * width
            };
            let fx = self.eval(x)? - rho;
            if fx.abs() < tol {
                return Ok(x);
            }
            if fx < 0.0 {
                a = x;
                fa = fx;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = x;
                fb = fx;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
            if b - a <= 4.0 * f64::EPSILON * b.max(1e-300) {
                break;
            }
            // force a bisection when regula falsi shrinks the bracket too little
            if b - a > 0.75 * width {
                let m = a + 0.5 * (b - a);
                let fm = self.eval(m)? - rho;
                if fm.abs() < tol {
                    return Ok(m);
                }
                if fm < 0.0 {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                    fb = fm;
                }
                side = 0;
            }
        }
        Ok(if fa.abs() <= fb.abs() { a } else { b })
    }
}

fn push_panel(
    out: &mut Vec<(f64, f64, f64)>,
    xs: &[f64],
    ws: &[f64],
    pa: f64,
    pb: f64,
    lo: f64,
    density: &impl Fn(f64) -> f64,
) {
    let half = 0.5 * (pb - pa);
    let mid = 0.5 * (pa + pb);
    for (x, w) in xs.iter().zip(ws) {
        let s = mid + half * x;
        out.push((s, lo + s, w * half * density(s)));
    }
}

/// `R̄(β)`.
pub fn rbar(g: &RateFunction, q0: &DisorderLaw, beta: f64) -> Result<f64, MeasureError> {
    Rbar::new(g, q0)?.eval(beta)
}

/// `ρ_c(Q0) = R̄(inf supp Q0)`.
pub fn rho_critical(g: &RateFunction, q0: &DisorderLaw) -> Result<f64, MeasureError> {
    Ok(Rbar::new(g, q0)?.critical())
}

/// `R̄⁻¹(ρ)`, accurate to `|R̄(β) − ρ| < 1e-10`.
pub fn rbar_inverse(g: &RateFunction, q0: &DisorderLaw, rho: f64) -> Result<f64, MeasureError> {
    Rbar::new(g, q0)?.inverse(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_density_closed_forms() {
        let g = RateFunction::mm1();
        let law = DisorderLaw::power(0.5, 1.0, 1.0);
        let rb = Rbar::new(&g, &law).unwrap();
        let want = 1.0 - 0.5 * 3f64.ln();
        assert!((rb.eval(0.25).unwrap() - want).abs() < 1e-12);
        assert!((rb.critical() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_density_diverges_at_edge() {
        let g = RateFunction::mm1();
        let law = DisorderLaw::uniform(0.5, 1.0);
        let rb = Rbar::new(&g, &law).unwrap();
        assert_eq!(rb.critical(), f64::INFINITY);
        for beta in [0.1f64, 0.3, 0.45, 0.4999, 0.5 - 1e-9] {
            let want = 2.0 * beta * ((1.0 - beta) / (0.5 - beta)).ln();
            let got = rb.eval(beta).unwrap();
            assert!((got - want).abs() < 1e-10 * want, "{beta}: {got} vs {want}");
        }
    }

    #[test]
    fn atoms_and_domain() {
        let g = RateFunction::mm1();
        let law = DisorderLaw::atoms(&[(0.5, 0.5), (1.0, 0.5)]);
        let rb = Rbar::new(&g, &law).unwrap();
        assert_eq!(rb.critical(), f64::INFINITY);
        let beta = 0.25;
        let want = 0.5 * (0.5 / 0.5) + 0.5 * (0.25 / 0.75);
        assert!((rb.eval(beta).unwrap() - want).abs() < 1e-15);
        assert!(rb.eval(0.6).is_err());
        let b = rb.inverse(3.0).unwrap();
        assert!((rb.eval(b).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn inverse_roundtrip_on_density() {
        let g = RateFunction::mm1();
        let law = DisorderLaw::power(0.5, 1.0, 1.0);
        let rb = Rbar::new(&g, &law).unwrap();
        for rho in [1e-6, 0.3, 1.0, 1.9, 1.999] {
            let b = rb.inverse(rho).unwrap();
            assert!((rb.eval(b).unwrap() - rho).abs() < 1e-10);
        }
        assert!(rb.inverse(2.5).is_err());
    }
}
