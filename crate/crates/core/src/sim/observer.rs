use serde::{Deserialize, Serialize};

use super::config::Occupancy;
use super::state::CoupledState;
use super::SimError;
use crate::lattice::Site;

/// Piecewise-constant nearest-neighbour path `s ↦ x_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverPath {
    Constant(Site),
    /// Unit moves `(time, ±1)` in increasing time order.
    Moving { start: Site, moves: Vec<(f64, i8)> },
}

impl ObserverPath {
    /// Path `x_s = start + ⌊v s⌋` (or `⌈v s⌉` for `v < 0`) up to `horizon`.
    pub fn linear(start: Site, v: f64, horizon: f64) -> Self {
        if v == 0.0 {
            return ObserverPath::Constant(start);
        }
        let n = (v.abs() * horizon).floor() as usize;
        let step = if v > 0.0 { 1 } else { -1 };
        let moves = (1..=n).map(|k| (k as f64 / v.abs(), step)).collect();
        ObserverPath::Moving { start, moves }
    }

    pub fn start(&self) -> Site {
        match self {
            ObserverPath::Constant(x) => *x,
            ObserverPath::Moving { start, .. } => *start,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if let ObserverPath::Moving { moves, .. } = self {
            let ordered = moves.windows(2).all(|w| w[0].0 <= w[1].0);
            let unit = moves.iter().all(|m| m.1 == 1 || m.1 == -1);
            if !ordered || !unit || moves.iter().any(|m| !(m.0 >= 0.0)) {
                return Err(SimError::BadPath);
            }
        }
        Ok(())
    }
}

/// Net rightward current across the bond `(x_s, x_s + 1)`, kept separately for
/// every coupled configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentObserver {
    path: ObserverPath,
    position: Site,
    next_move: usize,
    jump_part: Vec<i64>,
    motion_part: Vec<i64>,
}

impl CurrentObserver {
    pub fn new(path: ObserverPath, configs: usize) -> Result<Self, SimError> {
        path.validate()?;
        Ok(Self {
            position: path.start(),
            path,
            next_move: 0,
            jump_part: vec![0; configs],
            motion_part: vec![0; configs],
        })
    }

    pub fn constant(x: Site, configs: usize) -> Self {
        Self::new(ObserverPath::Constant(x), configs).expect("constant paths are valid")
    }

    pub fn path(&self) -> &ObserverPath {
        &self.path
    }

    pub fn position(&self) -> Site {
        self.position
    }

    /// `Γ` for configuration `k`.
    pub fn gamma(&self, k: usize) -> i64 {
        self.jump_part[k] + self.motion_part[k]
    }

    pub fn gammas(&self) -> Vec<i64> {
        (0..self.jump_part.len()).map(|k| self.gamma(k)).collect()
    }

    /// Contribution of particle jumps across the path.
    pub fn jump_part(&self, k: usize) -> i64 {
        self.jump_part[k]
    }

    /// Contribution of the path sweeping over particles.
    pub fn motion_part(&self, k: usize) -> i64 {
        self.motion_part[k]
    }

    pub(crate) fn next_move_time(&self) -> Option<f64> {
        match &self.path {
            ObserverPath::Constant(_) => None,
            ObserverPath::Moving { moves, .. } => moves.get(self.next_move).map(|m| m.0),
        }
    }

    /// Executes the pending path move: crossing from `x` to `x ± 1` counts the
    /// particles at `max(x, x ± 1)` with the opposite sign.
    pub(crate) fn advance_path(&mut self, state: &CoupledState, time: f64) -> Result<(), SimError> {
        let ObserverPath::Moving { moves, .. } = &self.path else {
            return Ok(());
        };
        let (_, dx) = moves[self.next_move];
        let from = self.position;
        let to = from + dx as Site;
        let site = from.max(to);
        for (k, c) in state.configs().iter().enumerate() {
            match c.get_or_zero(site) {
                Occupancy::Finite(n) => self.motion_part[k] -= dx as i64 * n as i64,
                Occupancy::Infinite => return Err(SimError::InfiniteCrossing { site, time }),
            }
        }
        self.position = to;
        self.next_move += 1;
        Ok(())
    }

    #[inline]
    pub(crate) fn on_jump(&mut self, from: Site, z: i8, mask: u64) {
        let delta = if z > 0 && from == self.position {
            1
        } else if z < 0 && from == self.position + 1 {
            -1
        } else {
            return;
        };
        let mut m = mask;
        while m != 0 {
            let k = m.trailing_zeros() as usize;
            self.jump_part[k] += delta;
            m &= m - 1;
        }
    }
}
