use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{Configuration, Finite, Infinite, Occupancy};
use super::SimError;
use crate::env::Environment;
use crate::lattice::{Site, Window};
use crate::measures::RateFunction;

/// Nearest-neighbour jump law: right with probability `p`, left with `q = 1 − p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub p: f64,
    pub g: RateFunction,
}

impl Dynamics {
    pub fn new(p: f64, g: RateFunction) -> Result<Self, SimError> {
        if !(p > 0.5 && p <= 1.0) {
            return Err(SimError::InvalidDrift(p));
        }
        Ok(Self { p, g })
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

/// One potential jump of the Harris system: at time `t`, a particle at `x`
/// attempts a jump to `x + z`; configuration `η` accepts iff `u ≤ α(x) g(η(x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisEvent {
    pub t: f64,
    pub x: Site,
    pub u: f64,
    pub z: i8,
}

/// Discrepancy and coalescence accounting for the designated pair `(η, ξ)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    /// Decrease of `D = Σ (ξ − η)⁺` summed over events.
    pub coalescences: u64,
    /// Increase of `D` (only possible when the two environments differ).
    pub creations: u64,
    /// A `ξ` particle landing on an unmatched `η` particle.
    pub rule_one: u64,
    /// An `η` particle landing on an unmatched `ξ` particle.
    pub rule_two: u64,
    /// A matched `ξ` particle switching to a lower-class unmatched `η` particle.
    pub rematches: u64,
    /// Coalescences split by the class of the `η` particle involved; index 0 is class 1.
    pub by_class: Vec<u64>,
}

/// A tagged particle of a fixed class; labels rank particles from left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedParticle {
    pub label: u64,
    pub position: Site,
    pub right_jumps: u64,
    pub left_jumps: u64,
}

#[derive(Debug, Clone)]
struct TagTracker {
    class: usize,
    tree: Fenwick,
    tracked: Vec<TaggedParticle>,
}

#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<i64>,
}

impl Fenwick {
    fn from_counts(counts: &[i64]) -> Self {
        let n = counts.len();
        let mut tree = vec![0i64; n + 1];
        for (i, &c) in counts.iter().enumerate() {
            tree[i + 1] += c;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        Self { tree }
    }

    fn add(&mut self, i: usize, delta: i64) {
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    /// Sum of counts at indices `0..=i`.
    fn prefix(&self, i: usize) -> i64 {
        let mut k = i + 1;
        let mut s = 0;
        while k > 0 {
            s += self.tree[k];
            k &= k - 1;
        }
        s
    }

    /// Smallest index whose prefix sum exceeds `rank`.
    fn find(&self, rank: i64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0usize;
        let mut rem = rank;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Several configurations on a common window driven by one Harris system.
#[derive(Debug, Clone)]
pub struct CoupledState {
    dynamics: Dynamics,
    window: Window,
    configs: Vec<Configuration>,
    envs: Vec<Arc<Environment>>,
    rates: Vec<Arc<[f64]>>,
    pair: Option<(usize, usize)>,
    ladder: Vec<usize>,
    ledger: Ledger,
    tags: Option<TagTracker>,
}

pub const MAX_CONFIGS: usize = 64;

fn rates_on(env: &Environment, window: Window) -> Result<Arc<[f64]>, SimError> {
    if !env.window().contains_window(&window) {
        return Err(SimError::EnvironmentTooSmall);
    }
    Ok(window.sites().map(|x| env.alpha(x)).collect::<Vec<_>>().into())
}

impl CoupledState {
    /// All configurations in the same environment.
    pub fn new(
        dynamics: Dynamics,
        env: Arc<Environment>,
        configs: Vec<Configuration>,
    ) -> Result<Self, SimError> {
        let pairs = configs.into_iter().map(|c| (env.clone(), c)).collect();
        Self::with_environments(dynamics, pairs)
    }

    /// One environment per configuration.
    pub fn with_environments(
        dynamics: Dynamics,
        pairs: Vec<(Arc<Environment>, Configuration)>,
    ) -> Result<Self, SimError> {
        if pairs.is_empty() {
            return Err(SimError::NoConfigurations);
        }
        if pairs.len() > MAX_CONFIGS {
            return Err(SimError::TooManyConfigurations(pairs.len()));
        }
        let window = pairs[0].1.window();
        if window.is_empty() {
            return Err(SimError::EmptyWindow);
        }
        let mut envs = Vec::new();
        let mut rates: Vec<Arc<[f64]>> = Vec::new();
        let mut configs = Vec::new();
        for (env, c) in pairs {
            if c.window() != window {
                return Err(SimError::WindowMismatch);
            }
            let r = match envs.iter().position(|e| Arc::ptr_eq(e, &env)) {
                Some(k) => rates[k].clone(),
                None => rates_on(&env, window)?,
            };
            envs.push(env);
            rates.push(r);
            configs.push(c);
        }
        Ok(Self {
            dynamics,
            window,
            configs,
            envs,
            rates,
            pair: None,
            ledger: Ledger::default(),
            ladder: Vec::new(),
            tags: None,
        })
    }

    /// Designates `(η, ξ) = (configs[eta], configs[xi])` for discrepancy accounting.
    pub fn with_pair(mut self, eta: usize, xi: usize) -> Result<Self, SimError> {
        if eta >= self.configs.len() || xi >= self.configs.len() || eta == xi {
            return Err(SimError::BadPair);
        }
        self.pair = Some((eta, xi));
        Ok(self)
    }

    /// Splits the designated `η` into classes: `lower` holds `η^1 ≤ … ≤ η^{n−1}`,
    /// and `η^n = η`. Class-`k` particles are `η^k − η^{k−1}`.
    pub fn with_classes(mut self, lower: Vec<Configuration>) -> Result<Self, SimError> {
        let (eta, _) = self.pair.ok_or(SimError::BadPair)?;
        if self.configs.len() + lower.len() > MAX_CONFIGS {
            return Err(SimError::TooManyConfigurations(self.configs.len() + lower.len()));
        }
        let top = &self.configs[eta];
        if !top.is_finite() || lower.iter().any(|c| !c.is_finite()) {
            return Err(SimError::InfiniteClass);
        }
        let mut chain: Vec<&Configuration> = lower.iter().collect();
        chain.push(top);
        for w in chain.windows(2) {
            if w[0].window() != self.window || !w[0].le(w[1]) {
                return Err(SimError::NotNested);
            }
        }
        let env = self.envs[eta].clone();
        let rate = self.rates[eta].clone();
        let mut ladder = Vec::with_capacity(lower.len() + 1);
        for c in lower {
            ladder.push(self.configs.len());
            self.configs.push(c);
            self.envs.push(env.clone());
            self.rates.push(rate.clone());
        }
        ladder.push(eta);
        self.ledger.by_class = vec![0; ladder.len()];
        self.ladder = ladder;
        Ok(self)
    }

    /// Follows particles of `class` (1-based) with the given left-to-right labels.
    pub fn track_class(mut self, class: usize, labels: &[u64]) -> Result<Self, SimError> {
        if class == 0 || class > self.ladder.len() {
            return Err(SimError::NoSuchClass(class));
        }
        let counts = self.class_counts(class);
        let tree = Fenwick::from_counts(&counts);
        let total: i64 = counts.iter().sum();
        let mut labels: Vec<u64> = labels.to_vec();
        labels.sort_unstable();
        labels.dedup();
        let mut tracked = Vec::with_capacity(labels.len());
        for &l in &labels {
            if l as i64 >= total {
                return Err(SimError::NoSuchLabel(l));
            }
            let i = tree.find(l as i64);
            tracked.push(TaggedParticle {
                label: l,
                position: self.window.site(i),
                right_jumps: 0,
                left_jumps: 0,
            });
        }
        self.tags = Some(TagTracker { class, tree, tracked });
        Ok(self)
    }

    fn class_counts(&self, class: usize) -> Vec<i64> {
        let hi = &self.configs[self.ladder[class - 1]];
        (0..self.window.len())
            .map(|i| {
                let top = hi.occupancies()[i].finite().unwrap() as i64;
                let below = if class >= 2 {
                    self.configs[self.ladder[class - 2]].occupancies()[i].finite().unwrap() as i64
                } else {
                    0
                };
                top - below
            })
            .collect()
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn config(&self, k: usize) -> &Configuration {
        &self.configs[k]
    }

    pub fn environment(&self, k: usize) -> &Arc<Environment> {
        &self.envs[k]
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn pair(&self) -> Option<(usize, usize)> {
        self.pair
    }

    /// Indices of `η^1, …, η^n` in [`CoupledState::configs`].
    pub fn ladder(&self) -> &[usize] {
        &self.ladder
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn tagged(&self) -> &[TaggedParticle] {
        self.tags.as_ref().map(|t| t.tracked.as_slice()).unwrap_or(&[])
    }

    /// Current site of the tracked class particle with rank `label`.
    pub fn locate_label(&self, label: u64) -> Option<Site> {
        let t = self.tags.as_ref()?;
        let total = t.tree.prefix(self.window.len() - 1);
        if label as i64 >= total {
            return None;
        }
        Some(self.window.site(t.tree.find(label as i64)))
    }

    #[inline]
    fn accepts(&self, k: usize, i: usize, u: f64) -> bool {
        let o = self.configs[k].occupancies()[i];
        o != Finite(0) && u <= self.rates[k][i] * self.dynamics.g.at_occupancy(o)
    }

    /// Applies one Harris event to every configuration; returns the bit mask of
    /// configurations in which a particle actually moved.
    pub fn apply_event(&mut self, e: &HarrisEvent) -> u64 {
        let w = self.window;
        if !w.contains(e.x) {
            return 0;
        }
        let target = e.x + e.z as Site;
        if !w.contains(target) {
            return 0;
        }
        let i = w.index(e.x);
        let j = w.index(target);
        if self.pair.is_some() {
            self.record(i, j, e.u, e.z);
        }
        let g = &self.dynamics.g;
        let mut mask = 0u64;
        for (k, (c, r)) in self.configs.iter_mut().zip(&self.rates).enumerate() {
            let occ = c.occupancies_mut();
            let o = occ[i];
            if o == Finite(0) || e.u > r[i] * g.at_occupancy(o) {
                continue;
            }
            occ[i] = o.decremented();
            occ[j] = occ[j].incremented();
            mask |= 1 << k;
        }
        mask
    }

    fn record(&mut self, i: usize, j: usize, u: f64, z: i8) {
        let (a, b) = self.pair.unwrap();
        let eta_i = self.configs[a].occupancies()[i];
        let eta_j = self.configs[a].occupancies()[j];
        let xi_i = self.configs[b].occupancies()[i];
        let xi_j = self.configs[b].occupancies()[j];
        let eta_moves = self.accepts(a, i, u);
        let xi_moves = self.accepts(b, i, u);

        let finite = [eta_i, eta_j, xi_i, xi_j].iter().all(|o| !o.is_infinite());
        if finite && eta_moves != xi_moves {
            let d = |e: Occupancy, x: Occupancy| x.excess_over(e).finite().unwrap() as i64;
            let before = d(eta_i, xi_i) + d(eta_j, xi_j);
            let (ei, ej) = if eta_moves {
                (eta_i.decremented(), eta_j.incremented())
            } else {
                (eta_i, eta_j)
            };
            let (xi2, xj2) = if xi_moves {
                (xi_i.decremented(), xi_j.incremented())
            } else {
                (xi_i, xi_j)
            };
            let after = d(ei, xi2) + d(ej, xj2);
            if after < before {
                self.ledger.coalescences += (before - after) as u64;
            } else {
                self.ledger.creations += (after - before) as u64;
            }
        }

        if self.ladder.is_empty() {
            return;
        }
        // lowest class whose level accepts; all higher levels accept too
        let mover = self.ladder.iter().position(|&k| self.accepts(k, i, u)).map(|l| l + 1);
        let unmatched_class = |s: &Self| {
            s.ladder
                .iter()
                .position(|&k| s.configs[k].occupancies()[j] > xi_j)
                .map(|l| l + 1)
        };
        match (mover, xi_moves) {
            (None, true) if eta_j > xi_j => {
                if let Some(k) = unmatched_class(self) {
                    self.ledger.by_class[k - 1] += 1;
                    self.ledger.rule_one += 1;
                }
            }
            (Some(c), false) if xi_j > eta_j => {
                self.ledger.by_class[c - 1] += 1;
                self.ledger.rule_two += 1;
            }
            (Some(c), true) if eta_j > xi_j => {
                if let Some(k) = unmatched_class(self) {
                    if c > k {
                        self.ledger.rematches += 1;
                    }
                }
            }
            _ => {}
        }
        if let (Some(c), Some(tags)) = (mover, self.tags.as_mut()) {
            if c == tags.class {
                // highest label at x jumps right, lowest jumps left
                let label = if z > 0 {
                    tags.tree.prefix(i) - 1
                } else {
                    tags.tree.prefix(i - 1)
                } as u64;
                tags.tree.add(i, -1);
                tags.tree.add(j, 1);
                if let Ok(k) = tags.tracked.binary_search_by_key(&label, |t| t.label) {
                    let t = &mut tags.tracked[k];
                    t.position = self.window.site(j);
                    if z > 0 {
                        t.right_jumps += 1;
                    } else {
                        t.left_jumps += 1;
                    }
                }
            }
        }
    }

    /// Class index (1-based) of each `η` particle at `x`, lowest first, and the
    /// number of them matched with `ξ` particles.
    pub fn classes_at(&self, x: Site) -> Option<(Vec<usize>, u32)> {
        let (_, b) = self.pair?;
        if self.ladder.is_empty() {
            return None;
        }
        let i = self.window.index(x);
        let mut classes = Vec::new();
        let mut prev = 0u32;
        for (l, &k) in self.ladder.iter().enumerate() {
            let v = self.configs[k].occupancies()[i].finite()?;
            for _ in prev..v {
                classes.push(l + 1);
            }
            prev = v;
        }
        let xi = self.configs[b].occupancies()[i];
        let matched = match xi {
            Finite(n) => n.min(prev),
            Infinite => prev,
        };
        Some((classes, matched))
    }
}

/// Positive parts `β = (η − ξ)⁺`, `γ = (ξ − η)⁺` and `D = Σ γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancies {
    pub beta: Vec<Occupancy>,
    pub gamma: Vec<Occupancy>,
    pub total: Occupancy,
}

pub fn discrepancies(state: &CoupledState) -> Result<Discrepancies, SimError> {
    let (a, b) = state.pair.ok_or(SimError::BadPair)?;
    Ok(discrepancies_between(&state.configs[a], &state.configs[b]))
}

pub fn discrepancies_between(eta: &Configuration, xi: &Configuration) -> Discrepancies {
    let beta: Vec<Occupancy> = eta
        .occupancies()
        .iter()
        .zip(xi.occupancies())
        .map(|(e, x)| e.excess_over(*x))
        .collect();
    let gamma: Vec<Occupancy> = eta
        .occupancies()
        .iter()
        .zip(xi.occupancies())
        .map(|(e, x)| x.excess_over(*e))
        .collect();
    let mut total = 0u64;
    let mut inf = false;
    for g in &gamma {
        match g {
            Finite(n) => total += *n as u64,
            Infinite => inf = true,
        }
    }
    let total = if inf { Infinite } else { Finite(total as u32) };
    Discrepancies { beta, gamma, total }
}

/// Integer or `±∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExtInt {
    NegInf,
    Finite(i64),
    PosInf,
}

impl ExtInt {
    pub fn finite(self) -> Option<i64> {
        match self {
            ExtInt::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// `F_{x0}(x, η)`: `Σ_{y=x0+1}^{x} η(y)` for `x > x0`, `−Σ_{y=x}^{x0} η(y)` otherwise.
pub fn cumulative_f(x0: Site, x: Site, config: &Configuration) -> ExtInt {
    if x > x0 {
        match config.mass_on(x0 + 1, x) {
            Finite(n) => ExtInt::Finite(n as i64),
            Infinite => ExtInt::PosInf,
        }
    } else {
        match config.mass_on(x, x0) {
            Finite(n) => ExtInt::Finite(-(n as i64)),
            Infinite => ExtInt::NegInf,
        }
    }
}
