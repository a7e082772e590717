//! Upwind finite-volume forward solver.
//!
//! Each step applies Godunov splitting: first the advective part with a
//! component-wise first-order upwind update, then the (possibly stiff)
//! source by implicit Euler solved per cell. Inflow ghost values come from
//! the boundary coupling applied to first/last-cell outflow traces, so a
//! periodic problem and the identity coupling produce identical updates.

use crate::control::{ContinuousControl, RelaxedControl};
use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::system::SystemSpec;
use crate::trajectory::StateTrajectory;
use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Inflow traces from the block coupling G and data d(t).
    CoupledG,
    /// Inflow equals the opposite-end outflow; ignores G and d.
    Periodic,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub cfl: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub boundary_kind: BoundaryKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            boundary_kind: BoundaryKind::CoupledG,
        }
    }
}

/// Ghost values feeding the upwind stencils at both walls.
#[derive(Debug, Clone)]
pub struct InflowTraces {
    /// y_- at x = L, one value per component with negative speed.
    pub minus_at_l: Vec<f64>,
    /// y_+ at x = 0, one value per component with positive speed.
    pub plus_at_0: Vec<f64>,
}

/// Largest stable time grid for the given CFL number, with dt shrunk so
/// the horizon divides evenly.
pub fn derive_time_grid(spec: &SystemSpec, sgrid: &SpaceGrid, cfl: f64) -> Result<TimeGrid> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::Config(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    let vmax = spec.max_speed((0..sgrid.n_cells()).map(|i| sgrid.center(i)));
    if vmax <= 0.0 {
        return Err(Error::DegenerateSpeeds);
    }
    let dt_raw = cfl * sgrid.dx() / vmax;
    let n_t = ((spec.horizon() / dt_raw) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    TimeGrid::new(spec.horizon(), n_t)
}

/// Like [`derive_time_grid`], but rounds the interval count up to a
/// multiple of the control grid so solver steps never straddle a control
/// jump.
pub fn derive_time_grid_aligned(
    spec: &SystemSpec,
    sgrid: &SpaceGrid,
    cfl: f64,
    control: &TimeGrid,
) -> Result<TimeGrid> {
    let base = derive_time_grid(spec, sgrid, cfl)?;
    if !base.same_extent(control) {
        return Err(Error::GridMismatch(
            "control horizon differs from the system horizon".into(),
        ));
    }
    let nc = control.n_intervals();
    let n_t = base.n_intervals().div_ceil(nc) * nc;
    TimeGrid::new(spec.horizon(), n_t)
}

/// Outflow traces -> inflow ghost values at time `t`.
pub fn apply_boundary(
    level: ArrayView2<f64>,
    spec: &SystemSpec,
    t: f64,
    kind: BoundaryKind,
) -> InflowTraces {
    let (n, r) = (spec.n(), spec.r());
    let last = level.nrows() - 1;
    let minus_at_0: Vec<f64> = (0..r).map(|c| level[[0, c]]).collect();
    let plus_at_l: Vec<f64> = (r..n).map(|c| level[[last, c]]).collect();
    match kind {
        BoundaryKind::Periodic => InflowTraces {
            minus_at_l: minus_at_0,
            plus_at_0: plus_at_l,
        },
        BoundaryKind::CoupledG => {
            let (mut minus_at_l, mut plus_at_0) = spec.boundary().apply(&minus_at_0, &plus_at_l);
            let d = spec.boundary_data(t);
            debug_assert_eq!(d.len(), n);
            for (i, v) in minus_at_l.iter_mut().enumerate() {
                *v += d[i];
            }
            for (i, v) in plus_at_0.iter_mut().enumerate() {
                *v += d[r + i];
            }
            InflowTraces {
                minus_at_l,
                plus_at_0,
            }
        }
    }
}

/// Speeds at every cell center, laid out (cell, component).
fn sample_speeds(spec: &SystemSpec, sgrid: &SpaceGrid) -> Array2<f64> {
    let mut speeds = Array2::zeros((sgrid.n_cells(), spec.n()));
    for i in 0..sgrid.n_cells() {
        let lam = spec.lambda(sgrid.center(i));
        for (c, &l) in lam.iter().enumerate() {
            speeds[[i, c]] = l;
        }
    }
    speeds
}

fn transport_with_speeds(
    level: ArrayView2<f64>,
    speeds: &Array2<f64>,
    r: usize,
    dx: f64,
    dt: f64,
    inflow: &InflowTraces,
) -> Result<Array2<f64>> {
    let (cells, n) = level.dim();
    let nu = dt / dx;
    let mut courant_max = 0.0f64;
    let mut out = Array2::zeros((cells, n));
    for c in 0..n {
        if c < r {
            // Negative speed: information comes from the right.
            for k in 0..cells {
                let (coef, right) = if k + 1 == cells {
                    (speeds[[k, c]], inflow.minus_at_l[c])
                } else {
                    (0.5 * (speeds[[k, c]] + speeds[[k + 1, c]]), level[[k + 1, c]])
                };
                courant_max = courant_max.max(nu * coef.abs());
                out[[k, c]] = level[[k, c]] - nu * coef * (right - level[[k, c]]);
            }
        } else {
            for k in 0..cells {
                let (coef, left) = if k == 0 {
                    (speeds[[k, c]], inflow.plus_at_0[c - r])
                } else {
                    (0.5 * (speeds[[k - 1, c]] + speeds[[k, c]]), level[[k - 1, c]])
                };
                courant_max = courant_max.max(nu * coef.abs());
                out[[k, c]] = level[[k, c]] - nu * coef * (level[[k, c]] - left);
            }
        }
    }
    if courant_max > 1.0 + 1e-12 {
        return Err(Error::UnstableStep {
            courant: courant_max,
        });
    }
    Ok(out)
}

/// One upwind transport step of the advective part. Interface speeds are
/// arithmetic means of the adjacent centers (one-sided at the walls).
pub fn transport_step(
    level: ArrayView2<f64>,
    spec: &SystemSpec,
    sgrid: &SpaceGrid,
    dt: f64,
    inflow: &InflowTraces,
) -> Result<Array2<f64>> {
    let speeds = sample_speeds(spec, sgrid);
    transport_with_speeds(level, &speeds, spec.r(), sgrid.dx(), dt, inflow)
}

/// Solves the dense n x n system in place; returns false on a vanishing
/// pivot. n is tiny here, so partial-pivot elimination is plenty.
fn gauss_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return false;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for j in row + 1..n {
            s -= a[row * n + j] * b[j];
        }
        b[row] = s / a[row * n + row];
    }
    true
}

/// Per-cell implicit Euler solve z = y + dt * sum_j beta_j f(z, u, j) by
/// Newton iteration with the analytic Jacobian when available.
pub fn source_step_newton(
    level: ArrayView2<f64>,
    spec: &SystemSpec,
    u: &[f64],
    beta_row: &[f64],
    dt: f64,
    config: &SolverConfig,
) -> Result<Array2<f64>> {
    let (cells, n) = level.dim();
    let mut out = Array2::zeros((cells, n));
    let mut z = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut jac = vec![0.0; n * n];
    for cell in 0..cells {
        let y: Vec<f64> = (0..n).map(|c| level[[cell, c]]).collect();
        z.copy_from_slice(&y);
        let mut converged = false;
        let mut last_res = f64::INFINITY;
        for _it in 0..=config.newton_max_iter {
            let f = spec.aggregated_source(&z, u, beta_row);
            let mut rmax = 0.0f64;
            for i in 0..n {
                resid[i] = z[i] - y[i] - dt * f[i];
                rmax = rmax.max(resid[i].abs());
            }
            last_res = rmax;
            if rmax <= config.newton_tol {
                converged = true;
                break;
            }
            let jf = spec.aggregated_jacobian(&z, u, beta_row);
            for row in 0..n {
                for col in 0..n {
                    let id = if row == col { 1.0 } else { 0.0 };
                    jac[row * n + col] = id - dt * jf[row * n + col];
                }
            }
            if !gauss_solve(&mut jac, &mut resid, n) {
                return Err(Error::NewtonDivergence {
                    cell,
                    residual: rmax,
                    iters: config.newton_max_iter,
                });
            }
            for i in 0..n {
                z[i] -= resid[i];
            }
        }
        if !converged {
            return Err(Error::NewtonDivergence {
                cell,
                residual: last_res,
                iters: config.newton_max_iter,
            });
        }
        for c in 0..n {
            out[[cell, c]] = z[c];
        }
    }
    Ok(out)
}

/// Implicit source step; uses the system's closed-form step when it
/// provides one, Newton otherwise.
pub fn source_step_implicit(
    level: ArrayView2<f64>,
    spec: &SystemSpec,
    u: &[f64],
    beta_row: &[f64],
    dt: f64,
    config: &SolverConfig,
) -> Result<Array2<f64>> {
    if let Some(step) = spec.implicit_step() {
        let (cells, n) = level.dim();
        let mut out = Array2::zeros((cells, n));
        for cell in 0..cells {
            let y: Vec<f64> = (0..n).map(|c| level[[cell, c]]).collect();
            let z = step(&y, u, beta_row, dt);
            debug_assert_eq!(z.len(), n);
            for c in 0..n {
                out[[cell, c]] = z[c];
            }
        }
        return Ok(out);
    }
    source_step_newton(level, spec, u, beta_row, dt, config)
}

pub(crate) fn check_control_grids(
    spec: &SystemSpec,
    u: &ContinuousControl,
    beta: &RelaxedControl,
    tgrid: &TimeGrid,
) -> Result<(usize, usize)> {
    if beta.num_modes() != spec.num_modes() {
        return Err(Error::GridMismatch(format!(
            "control has {} modes, system has {}",
            beta.num_modes(),
            spec.num_modes()
        )));
    }
    if !tgrid.is_refinement_of(beta.grid()) {
        return Err(Error::GridMismatch(
            "solver time grid must refine the mode-weight grid".into(),
        ));
    }
    if !tgrid.is_refinement_of(u.grid()) {
        return Err(Error::GridMismatch(
            "solver time grid must refine the continuous-control grid".into(),
        ));
    }
    if (tgrid.horizon() - spec.horizon()).abs() > 1e-12 * spec.horizon() {
        return Err(Error::GridMismatch(
            "time grid horizon differs from the system horizon".into(),
        ));
    }
    Ok((
        tgrid.n_intervals() / u.grid().n_intervals(),
        tgrid.n_intervals() / beta.grid().n_intervals(),
    ))
}

/// Forward solve of the full system under the given controls. Controls
/// live on coarse grids that the solver grid refines; they are held
/// constant across sub-steps.
pub fn solve_forward(
    spec: &SystemSpec,
    u: &ContinuousControl,
    beta: &RelaxedControl,
    tgrid: &TimeGrid,
    sgrid: &SpaceGrid,
    config: &SolverConfig,
) -> Result<StateTrajectory> {
    let (ratio_u, ratio_b) = check_control_grids(spec, u, beta, tgrid)?;
    if (sgrid.length() - spec.length()).abs() > 1e-12 * spec.length() {
        return Err(Error::GridMismatch(
            "space grid length differs from the system length".into(),
        ));
    }

    let mut traj = StateTrajectory::zeros(*tgrid, *sgrid, spec.n(), spec.r(), "fv");
    for i in 0..sgrid.n_cells() {
        let y0 = spec.initial().eval(sgrid.center(i));
        for (c, v) in y0.iter().enumerate() {
            traj.level_mut(0)[[i, c]] = *v;
        }
    }

    let speeds = sample_speeds(spec, sgrid);
    let dt = tgrid.dt();
    for k in 0..tgrid.n_intervals() {
        let t = tgrid.level_time(k);
        let level = traj.level(k).to_owned();
        let inflow = apply_boundary(level.view(), spec, t, config.boundary_kind);
        let transported =
            transport_with_speeds(level.view(), &speeds, spec.r(), sgrid.dx(), dt, &inflow)?;
        let beta_row = beta.row(k / ratio_b);
        let sourced = source_step_implicit(
            transported.view(),
            spec,
            u.value(k / ratio_u),
            beta_row.as_slice().expect("contiguous row"),
            dt,
            config,
        )?;
        if sourced.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: Some(k + 1) });
        }
        traj.level_mut(k + 1).assign(&sourced);
    }
    Ok(traj)
}
