//! Terminal-tracking cost, the backward adjoint sweep for the
//! flux-switching problem, and the reduced gradient with respect to the
//! mode weights, plus a finite-difference oracle for validating it.
//!
//! The backward sweep is the exact transpose of the forward splitting
//! scheme: the implicit source step transposes to
//!
//!   q~ = q / (1 + r),    p~ = p + r (2 beta - 1) eta q~,    r = dt/kappa,
//!
//! with eta taken at the later time level (the source step leaves eta
//! unchanged, so the stored value is the exact linearization point), and
//! the upwind transport transposes to the mirrored upwind update on the
//! dual characteristic variables z1 = p - a q, z2 = p + a q. Up to
//! quadrature this discretizes the continuous adjoint system
//!
//!   -p_t - a^2 q_x = kappa^{-1} q (2 beta - 1) eta,
//!   -q_t - p_x = -kappa^{-1} q,
//!   p(T) = -(eta(T) - target),  q(T) = 0,
//!
//! and because it is the exact transpose, directional derivatives agree
//! with finite differences of the discrete cost to roundoff, not just to
//! discretization order.
//!
//! Sign note: the reduced derivative that matches finite differences is
//!
//!   dJ/dbeta(t) = -INT q(t,x) eta(t,x)^2 / kappa dx
//!
//! (with the terminal condition above); the positive-sign variant fails
//! the self-test by a factor of -1. The discrete step derivative carries
//! the factor dt/(kappa + dt) rather than dt/kappa, which matters
//! whenever dt is not << kappa.

use crate::burgers::BurgersProblem;
use crate::control::RelaxedControl;
use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::trajectory::StateTrajectory;
use ndarray::{Array2, Array3};

/// Multipliers (p, q) on the same grids as the forward state.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    /// (level, cell, component) with components (p, q).
    data: Array3<f64>,
}

impl AdjointTrajectory {
    pub fn time_grid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn space_grid(&self) -> &SpaceGrid {
        &self.sgrid
    }

    pub fn p(&self, k: usize, i: usize) -> f64 {
        self.data[[k, i, 0]]
    }

    pub fn q(&self, k: usize, i: usize) -> f64 {
        self.data[[k, i, 1]]
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Largest |p| or |q| anywhere.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Derivative of the reduced cost with respect to the scalar mode weight
/// (the "+" flux weight), one time-averaged value per control interval.
#[derive(Debug, Clone)]
pub struct GradientVector {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl GradientVector {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Finite-dimensional partials for the full two-column weight rows:
    /// the scalar density v_K spreads as (+ v_K dt / 2, - v_K dt / 2).
    pub fn full_rows(&self) -> Array2<f64> {
        let dt = self.grid.dt();
        let mut rows = Array2::zeros((self.values.len(), 2));
        for (k, &v) in self.values.iter().enumerate() {
            rows[[k, 0]] = 0.5 * v * dt;
            rows[[k, 1]] = -0.5 * v * dt;
        }
        rows
    }

    /// Directional derivative against per-interval row perturbations.
    pub fn directional(&self, direction: &Array2<f64>) -> Result<f64> {
        let rows = self.full_rows();
        if rows.dim() != direction.dim() {
            return Err(Error::GridMismatch(format!(
                "direction shape {:?} vs gradient shape {:?}",
                direction.dim(),
                rows.dim()
            )));
        }
        Ok(rows.iter().zip(direction.iter()).map(|(g, d)| g * d).sum())
    }
}

fn eta_level(state: &StateTrajectory, k: usize) -> Vec<f64> {
    BurgersProblem::eta_slice(state.level(k))
}

/// Tracking cost 1/2 INT (eta(T) - target)^2 dx, trapezoidal rule with
/// periodic closure (which collapses to dx * sum on uniform centers).
pub fn tracking_cost(state: &StateTrajectory, target: &[f64]) -> Result<f64> {
    if state.num_components() != 2 {
        return Err(Error::GridMismatch(
            "tracking cost needs the two-component relaxation state".into(),
        ));
    }
    if target.len() != state.space_grid().n_cells() {
        return Err(Error::GridMismatch(format!(
            "target has {} samples for {} cells",
            target.len(),
            state.space_grid().n_cells()
        )));
    }
    state.check_finite()?;
    let eta = eta_level(state, state.num_levels() - 1);
    let dx = state.space_grid().dx();
    let sum: f64 = eta
        .iter()
        .zip(target)
        .map(|(e, t)| {
            let d = e - t;
            d * d
        })
        .sum();
    Ok(0.5 * dx * sum)
}

/// One backward step from level k+1 to level k, given eta at level k+1.
/// b = (weight of flux+) - (weight of flux-), r = dt/kappa, c = a dt/dx.
fn adjoint_step(
    p: &mut [f64],
    q: &mut [f64],
    eta_next: &[f64],
    b: f64,
    r: f64,
    c: f64,
    a: f64,
    z1: &mut Vec<f64>,
    z2: &mut Vec<f64>,
) {
    let cells = p.len();
    z1.clear();
    z2.clear();
    for i in 0..cells {
        let qt = q[i] / (1.0 + r);
        let pt = p[i] + r * b * eta_next[i] * qt;
        z1.push(pt - a * qt);
        z2.push(pt + a * qt);
    }
    for i in 0..cells {
        let left = z1[(i + cells - 1) % cells];
        let right = z2[(i + 1) % cells];
        let n1 = (1.0 - c) * z1[i] + c * left;
        let n2 = (1.0 - c) * z2[i] + c * right;
        p[i] = 0.5 * (n1 + n2);
        q[i] = (n2 - n1) / (2.0 * a);
    }
}

/// Backward sweep producing the multipliers for a forward trajectory.
/// `beta` must be the control the trajectory was computed with.
pub fn solve_adjoint(
    problem: &BurgersProblem,
    state: &StateTrajectory,
    beta: &RelaxedControl,
    target: &[f64],
) -> Result<AdjointTrajectory> {
    if state.num_components() != 2 || beta.num_modes() != 2 {
        return Err(Error::GridMismatch(
            "adjoint sweep expects the two-mode relaxation system".into(),
        ));
    }
    let tgrid = *state.time_grid();
    let sgrid = *state.space_grid();
    if target.len() != sgrid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "target has {} samples for {} cells",
            target.len(),
            sgrid.n_cells()
        )));
    }
    if !tgrid.is_refinement_of(beta.grid()) {
        return Err(Error::GridMismatch(
            "state time grid must refine the control grid".into(),
        ));
    }
    state.check_finite()?;

    let n_t = tgrid.n_intervals();
    let cells = sgrid.n_cells();
    let ratio = n_t / beta.grid().n_intervals();
    let dt = tgrid.dt();
    let r = dt / problem.kappa;
    let c = problem.a * dt / sgrid.dx();
    if c > 1.0 + 1e-12 {
        return Err(Error::UnstableStep { courant: c });
    }

    let mut data = Array3::zeros((n_t + 1, cells, 2));
    let eta_final = eta_level(state, n_t);
    let mut p: Vec<f64> = eta_final
        .iter()
        .zip(target)
        .map(|(e, t)| -(e - t))
        .collect();
    let mut q = vec![0.0; cells];
    for i in 0..cells {
        data[[n_t, i, 0]] = p[i];
    }

    let mut z1 = Vec::with_capacity(cells);
    let mut z2 = Vec::with_capacity(cells);
    for k in (0..n_t).rev() {
        let row = beta.row(k / ratio);
        let b = row[0] - row[1];
        let eta_next = eta_level(state, k + 1);
        adjoint_step(&mut p, &mut q, &eta_next, b, r, c, problem.a, &mut z1, &mut z2);
        for i in 0..cells {
            data[[k, i, 0]] = p[i];
            data[[k, i, 1]] = q[i];
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step: None });
    }
    Ok(AdjointTrajectory {
        tgrid,
        sgrid,
        data,
    })
}

/// Reduced derivative with respect to the "+" flux weight: per control
/// interval, the time average of -dx sum_i q_i eta_i^2 / (kappa + dt).
pub fn reduced_gradient(
    problem: &BurgersProblem,
    state: &StateTrajectory,
    adjoint: &AdjointTrajectory,
    control_grid: &TimeGrid,
) -> Result<GradientVector> {
    let tgrid = state.time_grid();
    if !tgrid.same_as(adjoint.time_grid())
        || !state.space_grid().same_as(adjoint.space_grid())
    {
        return Err(Error::GridMismatch(
            "state and adjoint live on different grids".into(),
        ));
    }
    if !tgrid.is_refinement_of(control_grid) {
        return Err(Error::GridMismatch(
            "state time grid must refine the control grid".into(),
        ));
    }
    let n_t = tgrid.n_intervals();
    let cells = state.space_grid().n_cells();
    let ratio = n_t / control_grid.n_intervals();
    let dt = tgrid.dt();
    let dx = state.space_grid().dx();
    let weight = dx * dt / (problem.kappa + dt);

    let mut values = vec![0.0; control_grid.n_intervals()];
    for k in 0..n_t {
        let eta = eta_level(state, k + 1);
        let mut s = 0.0;
        for i in 0..cells {
            s += adjoint.q(k + 1, i) * eta[i] * eta[i];
        }
        values[k / ratio] -= weight * s;
    }
    let dt_ctrl = control_grid.dt();
    for v in values.iter_mut() {
        *v /= dt_ctrl;
        if !v.is_finite() {
            return Err(Error::NonFiniteState { step: None });
        }
    }
    Ok(GradientVector {
        grid: *control_grid,
        values,
    })
}

/// Checks that a perturbation direction keeps beta strictly inside the
/// feasible set for step size h: rows must sum to zero and the perturbed
/// entries must stay in [0, 1].
fn check_perturbation(beta: &RelaxedControl, direction: &Array2<f64>, h: f64) -> Result<()> {
    let values = beta.values();
    if direction.dim() != values.dim() {
        return Err(Error::InfeasiblePerturbation(format!(
            "direction shape {:?} vs control shape {:?}",
            direction.dim(),
            values.dim()
        )));
    }
    for (k, row) in direction.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if sum.abs() > 1e-12 {
            return Err(Error::InfeasiblePerturbation(format!(
                "direction row {k} sums to {sum}, breaking the weight budget"
            )));
        }
        for (j, &d) in row.iter().enumerate() {
            let lo = values[[k, j]] - h * d.abs();
            let hi = values[[k, j]] + h * d.abs();
            if lo < -1e-12 || hi > 1.0 + 1e-12 {
                return Err(Error::InfeasiblePerturbation(format!(
                    "entry ({k},{j}) leaves [0,1] under step {h}"
                )));
            }
        }
    }
    Ok(())
}

/// Central finite difference of an objective along a tangent direction.
/// The perturbed controls are used as-is (no projection), so the caller
/// must keep beta in the interior relative to h.
pub fn fd_directional<F>(
    objective: F,
    beta: &RelaxedControl,
    direction: &Array2<f64>,
    h: f64,
) -> Result<f64>
where
    F: Fn(&RelaxedControl) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::Config(format!("fd step must be positive, got {h}")));
    }
    check_perturbation(beta, direction, h)?;
    if direction.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let grid = *beta.grid();
    let plus = RelaxedControl::new(grid, beta.values() + &(direction * h))?;
    let minus = RelaxedControl::new(grid, beta.values() - &(direction * h))?;
    Ok((objective(&plus)? - objective(&minus)?) / (2.0 * h))
}
