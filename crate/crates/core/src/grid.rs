//! Uniform time and space grids.
//!
//! Controls live on coarse time grids, solvers on fine ones; the only
//! relation the code ever relies on is exact divisibility of interval
//! counts, so both types keep the extent and the count and derive the
//! mesh width on demand.

use crate::error::{Error, Result};
use serde::Serialize;

const REL_TOL: f64 = 1e-12;

/// Uniform partition of [0, T] into `n_t` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    n_t: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_t: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::GridMismatch(format!(
                "time horizon must be positive, got {horizon}"
            )));
        }
        if n_t == 0 {
            return Err(Error::GridMismatch("time grid needs at least one interval".into()));
        }
        Ok(Self { horizon, n_t })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_intervals(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    /// Time of level `k`, k = 0..=n_t.
    pub fn level_time(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n_t);
        self.horizon * k as f64 / self.n_t as f64
    }

    /// Index of the interval containing `t`, clamped to the grid.
    pub fn interval_of(&self, t: f64) -> usize {
        let raw = (t / self.dt()).floor();
        (raw.max(0.0) as usize).min(self.n_t - 1)
    }

    pub fn same_extent(&self, other: &TimeGrid) -> bool {
        (self.horizon - other.horizon).abs() <= REL_TOL * self.horizon.max(other.horizon)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_t == other.n_t && self.same_extent(other)
    }

    /// True when `self` refines `coarse`: same horizon, counts divide.
    pub fn is_refinement_of(&self, coarse: &TimeGrid) -> bool {
        self.same_extent(coarse) && self.n_t % coarse.n_t == 0
    }
}

/// Uniform cell partition of [0, L]; states are cell averages at centers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpaceGrid {
    length: f64,
    n_x: usize,
}

impl SpaceGrid {
    pub fn new(length: f64, n_x: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::GridMismatch(format!(
                "domain length must be positive, got {length}"
            )));
        }
        if n_x < 2 {
            return Err(Error::GridMismatch("space grid needs at least two cells".into()));
        }
        Ok(Self { length, n_x })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_cells(&self) -> usize {
        self.n_x
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_x);
        (i as f64 + 0.5) * self.dx()
    }

    pub fn same_as(&self, other: &SpaceGrid) -> bool {
        self.n_x == other.n_x
            && (self.length - other.length).abs() <= REL_TOL * self.length.max(other.length)
    }
}
