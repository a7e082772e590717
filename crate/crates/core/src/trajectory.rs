//! Dense state storage for both solvers.

use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use ndarray::{Array3, ArrayView2, ArrayViewMut2};
use std::io::Write;

/// Magic bytes of the binary trajectory dump.
pub const TRAJECTORY_MAGIC: [u8; 4] = *b"HYP1";

/// Cell values of an n-component state at every time level:
/// `data[[k, i, c]]` is component `c` in cell `i` at level `k`.
/// Components 0..r carry negative speeds, r..n positive ones.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    split: usize,
    data: Array3<f64>,
    solver_tag: String,
}

impl StateTrajectory {
    pub fn zeros(
        tgrid: TimeGrid,
        sgrid: SpaceGrid,
        n_components: usize,
        split: usize,
        solver_tag: &str,
    ) -> Self {
        Self {
            tgrid,
            sgrid,
            split,
            data: Array3::zeros((tgrid.n_intervals() + 1, sgrid.n_cells(), n_components)),
            solver_tag: solver_tag.to_string(),
        }
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn space_grid(&self) -> &SpaceGrid {
        &self.sgrid
    }

    pub fn num_components(&self) -> usize {
        self.data.dim().2
    }

    pub fn num_levels(&self) -> usize {
        self.data.dim().0
    }

    /// Number of leading components with negative transport speed.
    pub fn split(&self) -> usize {
        self.split
    }

    pub fn solver_tag(&self) -> &str {
        &self.solver_tag
    }

    pub fn level(&self, k: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), k)
    }

    pub fn level_mut(&mut self, k: usize) -> ArrayViewMut2<'_, f64> {
        self.data.index_axis_mut(ndarray::Axis(0), k)
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn same_layout(&self, other: &StateTrajectory) -> bool {
        self.tgrid.same_as(&other.tgrid)
            && self.sgrid.same_as(&other.sgrid)
            && self.num_components() == other.num_components()
    }

    /// Errors with the offending level on the first non-finite entry.
    pub fn check_finite(&self) -> Result<()> {
        for k in 0..self.num_levels() {
            if self.level(k).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { step: Some(k) });
            }
        }
        Ok(())
    }

    /// Long-format CSV: one `t,x,component,value` line per entry.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,x,component,value")?;
        for k in 0..self.num_levels() {
            let t = self.tgrid.level_time(k);
            let level = self.level(k);
            for i in 0..self.sgrid.n_cells() {
                let x = self.sgrid.center(i);
                for c in 0..self.num_components() {
                    writeln!(out, "{t},{x},{c},{v}", v = level[[i, c]])?;
                }
            }
        }
        Ok(())
    }

    /// Binary dump: 32-byte header (magic, n, levels, cells as u32 LE,
    /// then dt and dx as f64 LE) followed by the level-major f64 payload.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(&TRAJECTORY_MAGIC)?;
        out.write_all(&(self.num_components() as u32).to_le_bytes())?;
        out.write_all(&(self.num_levels() as u32).to_le_bytes())?;
        out.write_all(&(self.sgrid.n_cells() as u32).to_le_bytes())?;
        out.write_all(&self.tgrid.dt().to_le_bytes())?;
        out.write_all(&self.sgrid.dx().to_le_bytes())?;
        for v in self.data.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}
