//! Control representations.
//!
//! A relaxed control is a piecewise-constant map into the probability
//! simplex: one row of M mode weights per time interval. A binary control
//! picks exactly one mode per interval and embeds into the relaxed set as
//! unit rows. Continuous controls carry box-constrained real vectors.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use ndarray::{Array2, ArrayView1};

/// Row-sum tolerance below which a row counts as feasible as-is.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Euclidean projection of one row onto the probability simplex,
/// by the sorted-threshold rule.
pub fn project_simplex_row(row: &mut [f64]) {
    let m = row.len();
    debug_assert!(m > 0);
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for v in row.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Projects every row of an N_t x M matrix onto the simplex.
pub fn project_simplex_rows(grid: TimeGrid, mut values: Array2<f64>) -> Result<RelaxedControl> {
    if values.nrows() != grid.n_intervals() {
        return Err(Error::GridMismatch(format!(
            "control matrix has {} rows for {} intervals",
            values.nrows(),
            grid.n_intervals()
        )));
    }
    if values.ncols() == 0 {
        return Err(Error::InvalidControl("control needs at least one mode".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidControl("non-finite control entry".into()));
    }
    for mut row in values.rows_mut() {
        project_simplex_row(row.as_slice_mut().expect("contiguous row"));
    }
    Ok(RelaxedControl { grid, values })
}

fn row_feasible(row: ArrayView1<f64>, tol: f64) -> bool {
    let sum: f64 = row.sum();
    (sum - 1.0).abs() <= tol && row.iter().all(|&v| (-tol..=1.0 + tol).contains(&v))
}

/// Piecewise-constant simplex-valued control.
#[derive(Debug, Clone)]
pub struct RelaxedControl {
    grid: TimeGrid,
    values: Array2<f64>,
}

impl RelaxedControl {
    /// Accepts the matrix, projecting any row that misses the simplex by
    /// more than the tolerance (gradient loops drift; inputs get repaired,
    /// not rejected). Non-finite entries are an error.
    pub fn new(grid: TimeGrid, values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidControl("non-finite control entry".into()));
        }
        let mut ctrl = project_simplex_rows(grid, values.clone())?;
        for (k, row) in values.rows().into_iter().enumerate() {
            if row_feasible(row, SIMPLEX_TOL) {
                ctrl.values.row_mut(k).assign(&row);
            }
        }
        Ok(ctrl)
    }

    /// Uniform weights 1/M on every interval.
    pub fn uniform(grid: TimeGrid, num_modes: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::InvalidControl("control needs at least one mode".into()));
        }
        let w = 1.0 / num_modes as f64;
        Ok(Self {
            grid,
            values: Array2::from_elem((grid.n_intervals(), num_modes), w),
        })
    }

    /// Constant row on every interval.
    pub fn constant(grid: TimeGrid, row: &[f64]) -> Result<Self> {
        let mut values = Array2::zeros((grid.n_intervals(), row.len()));
        for mut r in values.rows_mut() {
            for (dst, &src) in r.iter_mut().zip(row) {
                *dst = src;
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn num_modes(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.values.row(k)
    }

    /// Weight of mode `j` on the interval containing time `t`.
    pub fn weight_at(&self, t: f64, j: usize) -> f64 {
        self.values[[self.grid.interval_of(t), j]]
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.values.rows().into_iter().all(|r| row_feasible(r, tol))
    }

    /// True when every entry sits within `tol` of 0 or 1.
    pub fn is_binary(&self, tol: f64) -> bool {
        self.values
            .iter()
            .all(|&v| v.abs() <= tol || (v - 1.0).abs() <= tol)
    }
}

/// One active mode per interval (0-based index into the mode list).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryControl {
    grid: TimeGrid,
    active: Vec<usize>,
    num_modes: usize,
}

impl BinaryControl {
    pub fn new(grid: TimeGrid, active: Vec<usize>, num_modes: usize) -> Result<Self> {
        if active.len() != grid.n_intervals() {
            return Err(Error::GridMismatch(format!(
                "{} mode picks for {} intervals",
                active.len(),
                grid.n_intervals()
            )));
        }
        if num_modes == 0 || active.iter().any(|&j| j >= num_modes) {
            return Err(Error::InvalidControl(format!(
                "mode index out of range (num_modes = {num_modes})"
            )));
        }
        Ok(Self {
            grid,
            active,
            num_modes,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn active_modes(&self) -> &[usize] {
        &self.active
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    /// Embedding as unit simplex rows.
    pub fn to_relaxed(&self) -> RelaxedControl {
        let mut values = Array2::zeros((self.active.len(), self.num_modes));
        for (k, &j) in self.active.iter().enumerate() {
            values[[k, j]] = 1.0;
        }
        RelaxedControl {
            grid: self.grid,
            values,
        }
    }
}

/// Piecewise-constant control with values in a closed box.
#[derive(Debug, Clone)]
pub struct ControlBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBox {
    pub fn empty() -> Self {
        Self {
            lower: vec![],
            upper: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }
}

#[derive(Debug, Clone)]
pub struct ContinuousControl {
    grid: TimeGrid,
    values: Vec<Vec<f64>>,
}

impl ContinuousControl {
    pub fn new(grid: TimeGrid, values: Vec<Vec<f64>>, bounds: &ControlBox) -> Result<Self> {
        if values.len() != grid.n_intervals() {
            return Err(Error::GridMismatch(format!(
                "{} control values for {} intervals",
                values.len(),
                grid.n_intervals()
            )));
        }
        for v in &values {
            if !bounds.contains(v, 1e-12) {
                return Err(Error::InvalidControl(
                    "continuous control leaves the admissible box".into(),
                ));
            }
        }
        Ok(Self { grid, values })
    }

    /// Zero-dimensional control for systems without a continuous input.
    pub fn none(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![vec![]; grid.n_intervals()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.grid.interval_of(t)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive active-set QP oracle for the simplex projection: tries
    /// every support set, solves the equality-constrained projection in
    /// closed form, and keeps the unique KKT-consistent candidate.
    fn project_oracle(u: &[f64]) -> Vec<f64> {
        let m = u.len();
        let mut best: Option<Vec<f64>> = None;
        for mask in 1u32..(1 << m) {
            let support: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
            let s = support.len() as f64;
            let shift = (support.iter().map(|&j| u[j]).sum::<f64>() - 1.0) / s;
            let mut x = vec![0.0; m];
            let mut ok = true;
            for &j in &support {
                x[j] = u[j] - shift;
                if x[j] < -1e-12 {
                    ok = false;
                }
            }
            // KKT: multipliers of the pinned coordinates must be nonnegative.
            for j in 0..m {
                if mask >> j & 1 == 0 && u[j] - shift > 1e-12 {
                    ok = false;
                }
            }
            if ok {
                best = Some(x);
            }
        }
        best.expect("some support set is KKT-consistent")
    }

    #[test]
    fn projection_fixes_feasible_points() {
        let mut row = [0.25, 0.5, 0.25];
        project_simplex_row(&mut row);
        assert!((row[0] - 0.25).abs() < 1e-15);
        assert!((row[1] - 0.5).abs() < 1e-15);
        assert!((row[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn projection_known_cases() {
        let mut a = [1.0, 0.0];
        project_simplex_row(&mut a);
        assert_eq!(a, [1.0, 0.0]);

        let mut b = [2.0, 2.0];
        project_simplex_row(&mut b);
        assert!((b[0] - 0.5).abs() < 1e-15 && (b[1] - 0.5).abs() < 1e-15);

        let mut c = [1.2, -0.1, 0.3];
        project_simplex_row(&mut c);
        let oracle = project_oracle(&[1.2, -0.1, 0.3]);
        for (x, y) in c.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-12, "{c:?} vs {oracle:?}");
        }
    }

    #[test]
    fn projection_matches_active_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [2usize, 3, 5] {
            for _ in 0..200 {
                let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mut fast = u.clone();
                project_simplex_row(&mut fast);
                let slow = project_oracle(&u);
                let sum: f64 = fast.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(fast.iter().all(|&v| v >= 0.0));
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-10, "u={u:?} fast={fast:?} slow={slow:?}");
                }
            }
        }
    }

    #[test]
    fn projection_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut row: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..2.0)).collect();
            project_simplex_row(&mut row);
            let once = row.clone();
            project_simplex_row(&mut row);
            for (a, b) in once.iter().zip(&row) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn relaxed_control_repairs_bad_rows() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let values =
            Array2::from_shape_vec((2, 2), vec![0.5, 0.5, 0.9, 0.4]).unwrap();
        let ctrl = RelaxedControl::new(grid, values).unwrap();
        assert!(ctrl.is_feasible(SIMPLEX_TOL));
        // First row was feasible and must pass through untouched.
        assert_eq!(ctrl.values()[[0, 0]], 0.5);
        assert!((ctrl.row(1).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relaxed_control_rejects_non_finite() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let values = Array2::from_shape_vec((1, 2), vec![f64::NAN, 0.5]).unwrap();
        assert!(RelaxedControl::new(grid, values).is_err());
    }

    #[test]
    fn binary_embedding_is_unit_rows() {
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let alpha = BinaryControl::new(grid, vec![0, 2, 1], 3).unwrap();
        let beta = alpha.to_relaxed();
        assert!(beta.is_feasible(0.0));
        assert!(beta.is_binary(0.0));
        assert_eq!(beta.values()[[0, 0]], 1.0);
        assert_eq!(beta.values()[[1, 2]], 1.0);
        assert_eq!(beta.values()[[2, 1]], 1.0);
        assert_eq!(beta.values().sum(), 3.0);
    }

    #[test]
    fn binary_control_checks_mode_range() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        assert!(BinaryControl::new(grid, vec![0, 3], 3).is_err());
        assert!(BinaryControl::new(grid, vec![0], 3).is_err());
    }

    #[test]
    fn continuous_control_box_checked() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let bounds = ControlBox {
            lower: vec![-1.0],
            upper: vec![1.0],
        };
        assert!(ContinuousControl::new(grid, vec![vec![0.0], vec![0.5]], &bounds).is_ok());
        assert!(ContinuousControl::new(grid, vec![vec![0.0], vec![1.5]], &bounds).is_err());
    }
}
