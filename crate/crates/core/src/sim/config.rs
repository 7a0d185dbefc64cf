use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::lattice::{Site, Window};

/// Number of particles at a site; `Infinite` marks a source or reservoir with
/// `∞ ± 1 = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Finite(u32),
    Infinite,
}

pub use Occupancy::{Finite, Infinite};

impl Occupancy {
    pub const ZERO: Occupancy = Finite(0);

    #[inline]
    pub fn is_infinite(self) -> bool {
        matches!(self, Infinite)
    }

    #[inline]
    pub fn finite(self) -> Option<u32> {
        match self {
            Finite(n) => Some(n),
            Infinite => None,
        }
    }

    #[inline]
    pub fn incremented(self) -> Self {
        match self {
            Finite(n) => Finite(n + 1),
            Infinite => Infinite,
        }
    }

    #[inline]
    pub fn decremented(self) -> Self {
        match self {
            Finite(n) => {
                debug_assert!(n > 0, "removing a particle from an empty site");
                Finite(n - 1)
            }
            Infinite => Infinite,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Finite(n) => n as f64,
            Infinite => f64::INFINITY,
        }
    }

    /// `(self − other)⁺` with `∞ − ∞ = 0`.
    pub fn excess_over(self, other: Occupancy) -> Occupancy {
        match (self, other) {
            (Finite(a), Finite(b)) => Finite(a.saturating_sub(b)),
            (Infinite, Finite(_)) => Infinite,
            (_, Infinite) => Finite(0),
        }
    }
}

impl PartialOrd for Occupancy {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Occupancy {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Finite(a), Finite(b)) => a.cmp(b),
            (Finite(_), Infinite) => Ordering::Less,
            (Infinite, Finite(_)) => Ordering::Greater,
            (Infinite, Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finite(n) => write!(f, "{n}"),
            Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Occupancy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") {
            Ok(Infinite)
        } else {
            t.parse::<u32>().map(Finite).map_err(|e| format!("{t:?}: {e}"))
        }
    }
}

impl Serialize for Occupancy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Finite(n) => s.serialize_u32(*n),
            Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Occupancy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u32),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Finite(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Boundary treatment of a finite window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Jumps leaving the window are suppressed; mass is conserved.
    Closed,
    /// Both end sites hold `∞`: they inject at rate `α(end)` times the jump
    /// probability toward the interior and absorb everything that reaches them.
    Reservoir,
}

/// Particle configuration on a finite window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    window: Window,
    mode: BoundaryMode,
    occ: Vec<Occupancy>,
}

impl Configuration {
    pub fn empty(window: Window, mode: BoundaryMode) -> Self {
        let mut c = Self { window, mode, occ: vec![Occupancy::ZERO; window.len()] };
        c.apply_mode();
        c
    }

    pub fn from_occupancies(
        window: Window,
        mode: BoundaryMode,
        occ: Vec<Occupancy>,
    ) -> Result<Self, String> {
        if occ.len() != window.len() {
            return Err(format!("{} values for a window of {} sites", occ.len(), window.len()));
        }
        let mut c = Self { window, mode, occ };
        c.apply_mode();
        Ok(c)
    }

    pub fn from_counts(window: Window, counts: &[u32]) -> Result<Self, String> {
        Self::from_occupancies(
            window,
            BoundaryMode::Closed,
            counts.iter().map(|&n| Finite(n)).collect(),
        )
    }

    fn apply_mode(&mut self) {
        if self.mode == BoundaryMode::Reservoir && !self.occ.is_empty() {
            self.occ[0] = Infinite;
            let n = self.occ.len();
            self.occ[n - 1] = Infinite;
        }
    }

    /// Same interior with reservoirs installed at both ends.
    pub fn into_reservoir(mut self) -> Self {
        self.mode = BoundaryMode::Reservoir;
        self.apply_mode();
        self
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    #[inline]
    pub fn get(&self, x: Site) -> Occupancy {
        self.occ[self.window.index(x)]
    }

    /// Occupancy, or zero outside the window.
    pub fn get_or_zero(&self, x: Site) -> Occupancy {
        if self.window.contains(x) {
            self.get(x)
        } else {
            Occupancy::ZERO
        }
    }

    pub fn set(&mut self, x: Site, v: Occupancy) {
        let i = self.window.index(x);
        self.occ[i] = v;
    }

    pub fn occupancies(&self) -> &[Occupancy] {
        &self.occ
    }

    pub(crate) fn occupancies_mut(&mut self) -> &mut [Occupancy] {
        &mut self.occ
    }

    /// Total mass on `[a, b] ∩ window`.
    pub fn mass_on(&self, a: Site, b: Site) -> Occupancy {
        let lo = a.max(self.window.left);
        let hi = b.min(self.window.right);
        let mut total: u64 = 0;
        for x in lo..=hi {
            match self.get(x) {
                Finite(n) => total += n as u64,
                Infinite => return Infinite,
            }
        }
        Finite(total as u32)
    }

    /// Mass on finite sites only.
    pub fn finite_mass(&self) -> u64 {
        self.occ.iter().filter_map(|o| o.finite()).map(u64::from).sum()
    }

    pub fn infinite_sites(&self) -> Vec<Site> {
        self.occ
            .iter()
            .enumerate()
            .filter(|(_, o)| o.is_infinite())
            .map(|(i, _)| self.window.site(i))
            .collect()
    }

    /// Pointwise `self ≤ other`.
    pub fn le(&self, other: &Configuration) -> bool {
        self.window == other.window && self.occ.iter().zip(&other.occ).all(|(a, b)| a <= b)
    }

    pub fn is_finite(&self) -> bool {
        self.occ.iter().all(|o| !o.is_infinite())
    }
}
