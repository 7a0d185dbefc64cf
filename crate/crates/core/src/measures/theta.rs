use rand::Rng;

use super::{MeasureError, RateFunction};

/// Tail mass below which the support of a marginal is considered exhausted.
pub const TAIL_EPS: f64 = 1e-12;

/// Single-site law `θ_β(n) = β^n / (g(1)⋯g(n)) / Z(β)`.
///
/// Past the saturation index the weights are geometric with ratio `β`, so
/// the partition function and the moments are evaluated in closed form.
#[derive(Debug, Clone)]
pub struct ThetaMarginal {
    beta: f64,
    gap: f64,
    head: Vec<f64>,
    tail_mass: f64,
    mean: f64,
}

/// `θ_β` for `β ∈ [0, 1)`.
pub fn marginal(g: &RateFunction, beta: f64) -> Result<ThetaMarginal, MeasureError> {
    marginal_with_gap(g, beta, 1.0 - beta)
}

/// As [`marginal`] with `gap = 1 − β` supplied by the caller, which keeps full
/// relative precision when `β` is within rounding of 1.
pub fn marginal_with_gap(
    g: &RateFunction,
    beta: f64,
    gap: f64,
) -> Result<ThetaMarginal, MeasureError> {
    if !(0.0..1.0).contains(&beta) || !(gap > 0.0) {
        return Err(MeasureError::BetaOutOfRange(beta));
    }
    let ns = g.saturation();
    let vals = g.values();
    if beta == 0.0 {
        let mut head = vec![0.0; ns + 1];
        head[0] = 1.0;
        return Ok(ThetaMarginal { beta, gap, head, tail_mass: 0.0, mean: 0.0 });
    }
    let lb = beta.ln();
    let mut logw = Vec::with_capacity(ns + 1);
    let mut acc = 0.0;
    logw.push(0.0);
    for (n, gn) in vals.iter().enumerate().skip(1) {
        acc += gn.ln();
        logw.push(n as f64 * lb - acc);
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let nsf = ns as f64;
    let mut z = w[ns] / gap;
    let mut m = w[ns] * (nsf / gap + beta / (gap * gap));
    for (n, wn) in w.iter().enumerate().take(ns) {
        z += wn;
        m += n as f64 * wn;
    }
    let head: Vec<f64> = w.iter().map(|v| v / z).collect();
    let tail_mass = head[ns] / gap;
    Ok(ThetaMarginal { beta, gap, head, tail_mass, mean: m / z })
}

/// `R(β)`, the mean of `θ_β`; `+∞` at `β = 1`.
pub fn mean_density(g: &RateFunction, beta: f64) -> Result<f64, MeasureError> {
    mean_density_with_gap(g, beta, 1.0 - beta)
}

pub fn mean_density_with_gap(g: &RateFunction, beta: f64, gap: f64) -> Result<f64, MeasureError> {
    if beta == 1.0 || gap == 0.0 {
        return Ok(f64::INFINITY);
    }
    marginal_with_gap(g, beta, gap).map(|t| t.mean)
}

impl ThetaMarginal {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Normalizing constant relative to `Z(0) = 1`.
    pub fn partition(&self) -> f64 {
        1.0 / self.head[0]
    }

    pub fn saturation(&self) -> usize {
        self.head.len() - 1
    }

    pub fn pmf(&self, n: u64) -> f64 {
        let ns = self.saturation();
        if (n as usize) <= ns {
            self.head[n as usize]
        } else {
            self.head[ns] * self.beta.powf((n - ns as u64) as f64)
        }
    }

    /// `P(η ≥ n)`.
    pub fn survival(&self, n: u64) -> f64 {
        let ns = self.saturation() as u64;
        if n >= ns {
            self.tail_mass * self.beta.powf((n - ns) as f64)
        } else {
            self.head[n as usize..self.saturation()].iter().sum::<f64>() + self.tail_mass
        }
    }

    pub fn cdf(&self, n: u64) -> f64 {
        1.0 - self.survival(n + 1)
    }

    /// Smallest `N` with `P(η ≥ N) < 1e-12`.
    pub fn tail_cut(&self) -> u64 {
        let ns = self.saturation();
        for n in 0..=ns {
            if self.survival(n as u64) < TAIL_EPS {
                return n as u64;
            }
        }
        let k = ((TAIL_EPS / self.tail_mass).ln() / self.beta.ln()).floor().max(0.0) as u64;
        let mut n = ns as u64 + k;
        while self.survival(n) >= TAIL_EPS {
            n += 1;
        }
        while n > ns as u64 && self.survival(n - 1) < TAIL_EPS {
            n -= 1;
        }
        n
    }

    /// Inverse-CDF draw from a single uniform `u ∈ (0, 1)`. Monotone in `u`
    /// and in `β`, which gives the monotone coupling of product measures.
    pub fn quantile(&self, u: f64) -> u64 {
        let ns = self.saturation();
        let mut cum = 0.0;
        for n in 0..ns {
            cum += self.head[n];
            if u < cum {
                return n as u64;
            }
        }
        let rest = (1.0 - u) / self.tail_mass;
        if rest >= 1.0 {
            return ns as u64;
        }
        let l = rest.ln() / self.beta.ln();
        if !l.is_finite() {
            return ns as u64;
        }
        ns as u64 + l.floor() as u64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.quantile(open_unit(rng))
    }

    /// `1 − β` as stored.
    pub fn gap(&self) -> f64 {
        self.gap
    }
}

/// Uniform on the open interval `(0, 1)` with 53 random bits.
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
