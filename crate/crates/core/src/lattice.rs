//! Finite windows of the integer lattice.

use serde::{Deserialize, Serialize};

/// A lattice site.
pub type Site = i64;

/// Inclusive integer interval `[left, right]` standing in for a piece of ℤ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[Site; 2]", into = "[Site; 2]")]
pub struct Window {
    pub left: Site,
    pub right: Site,
}

impl Window {
    pub fn new(left: Site, right: Site) -> Self {
        Self { left, right }
    }

    pub fn is_empty(&self) -> bool {
        self.left > self.right
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.right - self.left + 1) as usize
        }
    }

    pub fn contains(&self, x: Site) -> bool {
        self.left <= x && x <= self.right
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        other.is_empty() || (self.contains(other.left) && self.contains(other.right))
    }

    /// Offset of `x` into a vector indexed from `left`. Caller guarantees containment.
    #[inline]
    pub fn index(&self, x: Site) -> usize {
        debug_assert!(self.contains(x), "site {x} outside {self:?}");
        (x - self.left) as usize
    }

    #[inline]
    pub fn site(&self, index: usize) -> Site {
        self.left + index as Site
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        self.left..=self.right
    }
}

impl From<[Site; 2]> for Window {
    fn from(v: [Site; 2]) -> Self {
        Window::new(v[0], v[1])
    }
}

impl From<Window> for [Site; 2] {
    fn from(w: Window) -> Self {
        [w.left, w.right]
    }
}
