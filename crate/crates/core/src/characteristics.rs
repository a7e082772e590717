//! Characteristic-flow solution oracle.
//!
//! For the diagonal system, the value of component i at (tau, sigma) is
//! whatever its backward characteristic carries in from the initial line
//! or the boundary, plus the source integrated along that curve. The map
//! sending an iterate to these evaluations has the solution as its unique
//! fixed point and contracts in the exponentially weighted norm of
//! [`crate::norms::dag_norm`] once the weight outweighs the source's
//! Lipschitz constant, so Picard iteration gives a solver whose error
//! sources (ODE tracing, trapezoidal quadrature, bilinear interpolation)
//! are disjoint from the finite-volume ones. That makes it a cross-check,
//! not a production path: the quadrature cannot resolve stiff sources, so
//! runs with dt much larger than the relaxation time belong to the FV
//! solver.
//!
//! Values on the inflow side of a wall depend on the *new* iterate's
//! outflow traces at earlier times. The sweep therefore walks time levels
//! in order and, within each level, computes the two wall traces before
//! any interior value. A trace curve re-enters the wall set no sooner
//! than one full domain crossing, so the recursion stays causal as long
//! as the time step is below the shortest crossing time; that is checked
//! when the curves are traced and violations are reported as config
//! errors rather than silently reading stale data.

use crate::control::{ContinuousControl, RelaxedControl};
use crate::error::{Error, Result};
use crate::fv::check_control_grids;
use crate::grid::{SpaceGrid, TimeGrid};
use crate::norms::dag_norm;
use crate::system::SystemSpec;
use crate::trajectory::StateTrajectory;
use ndarray::{Array2, ArrayView2};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitFace {
    Initial,
    Left,
    Right,
}

/// Backward characteristic of one component through one anchor point.
#[derive(Debug, Clone)]
pub struct CharacteristicCurve {
    pub component: usize,
    pub anchor_time: f64,
    pub anchor_pos: f64,
    /// Sample times, descending from the anchor. The exit point is kept
    /// separately and is not part of the sampled path.
    pub times: Vec<f64>,
    /// Positions matching `times`; all lie in [0, L].
    pub positions: Vec<f64>,
    pub exit_time: f64,
    pub exit_pos: f64,
    pub exit: ExitFace,
}

fn rk4_step(speed: &impl Fn(f64) -> f64, s: f64, h: f64) -> f64 {
    let k1 = speed(s);
    let k2 = speed(s + 0.5 * h * k1);
    let k3 = speed(s + 0.5 * h * k2);
    let k4 = speed(s + h * k3);
    s + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
}

/// Traces component `component` backward from `(tau, sigma)` with RK4
/// steps of size `dt_ode` until the curve leaves through the initial
/// line or a wall; a wall exit is located by bisecting the step, to
/// 1e-12 of the horizon. Speeds may be probed slightly outside [0, L]
/// by the RK4 stages near a wall.
pub fn trace_characteristic(
    spec: &SystemSpec,
    component: usize,
    tau: f64,
    sigma: f64,
    dt_ode: f64,
) -> Result<CharacteristicCurve> {
    if component >= spec.n() {
        return Err(Error::Config(format!(
            "component {component} out of range for an n = {} system",
            spec.n()
        )));
    }
    let (length, horizon) = (spec.length(), spec.horizon());
    if !(0.0..=horizon).contains(&tau) || !(0.0..=length).contains(&sigma) {
        return Err(Error::Config(format!(
            "anchor ({tau}, {sigma}) lies outside [0, {horizon}] x [0, {length}]"
        )));
    }
    if !(dt_ode > 0.0 && dt_ode.is_finite()) {
        return Err(Error::Config(format!(
            "ODE step must be positive and finite, got {dt_ode}"
        )));
    }
    let speed = |x: f64| spec.lambda(x)[component];
    let bisect_tol = 1e-12 * horizon;

    let mut times = vec![tau];
    let mut positions = vec![sigma];
    let mut s_cur = sigma;
    let mut m = 0usize;
    loop {
        let t_cur = times[m];
        if t_cur <= 0.0 {
            return Ok(CharacteristicCurve {
                component,
                anchor_time: tau,
                anchor_pos: sigma,
                times,
                positions,
                exit_time: 0.0,
                exit_pos: s_cur,
                exit: ExitFace::Initial,
            });
        }
        let h = dt_ode.min(t_cur);
        let s_try = rk4_step(&speed, s_cur, -h);
        if !(0.0..=length).contains(&s_try) {
            // The wall crossing happens within this step; shrink the
            // step until the landing point sits on the wall.
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > bisect_tol {
                let mid = 0.5 * (lo + hi);
                if (0.0..=length).contains(&rk4_step(&speed, s_cur, -mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let exit = if s_try < 0.0 {
                ExitFace::Left
            } else {
                ExitFace::Right
            };
            return Ok(CharacteristicCurve {
                component,
                anchor_time: tau,
                anchor_pos: sigma,
                times,
                positions,
                exit_time: t_cur - 0.5 * (lo + hi),
                exit_pos: if exit == ExitFace::Left { 0.0 } else { length },
                exit,
            });
        }
        m += 1;
        s_cur = s_try;
        // Recompute instead of accumulating, so level times stay exact;
        // a clipped final step lands on the initial line.
        let t_next = if h < dt_ode {
            0.0
        } else {
            tau - m as f64 * dt_ode
        };
        times.push(t_next);
        positions.push(s_cur);
    }
}

/// Curve data reduced to what the sweep needs: in-domain positions at
/// whole-step offsets behind the anchor, and the wall exit if there is
/// one. Speeds do not depend on time, so one traced path serves every
/// anchor level at the same position.
struct TablePath {
    /// `positions[m]` is the position m whole steps before the anchor.
    positions: Vec<f64>,
    /// Lateral exit: (time before the anchor, wall position, face).
    wall: Option<(f64, f64, ExitFace)>,
}

impl TablePath {
    fn from_curve(curve: CharacteristicCurve, tau: f64) -> Self {
        let wall = match curve.exit {
            ExitFace::Initial => None,
            face => Some((tau - curve.exit_time, curve.exit_pos, face)),
        };
        Self {
            positions: curve.positions,
            wall,
        }
    }
}

struct TraceTable {
    /// Per component: the path anchored at its outflow wall (x = 0 for
    /// the leading r components, x = L for the rest).
    walls: Vec<TablePath>,
    /// Per component, one path anchored at each cell center.
    centers: Vec<Vec<TablePath>>,
}

impl TraceTable {
    fn build(spec: &SystemSpec, tgrid: &TimeGrid, sgrid: &SpaceGrid) -> Result<Self> {
        let dt = tgrid.dt();
        let horizon = tgrid.horizon();
        let mut walls = Vec::with_capacity(spec.n());
        let mut centers = Vec::with_capacity(spec.n());
        for comp in 0..spec.n() {
            let wall_pos = if comp < spec.r() { 0.0 } else { spec.length() };
            let path = TablePath::from_curve(
                trace_characteristic(spec, comp, horizon, wall_pos, dt)?,
                horizon,
            );
            if let Some((rho, _, _)) = path.wall {
                if rho < dt * (1.0 - 1e-12) {
                    return Err(Error::Config(format!(
                        "time step {dt:.6e} breaks the boundary recursion: the component \
                         {comp} trace re-enters a wall after only {rho:.6e}; refine the \
                         time grid below the domain crossing time"
                    )));
                }
            }
            walls.push(path);
            let mut per_cell = Vec::with_capacity(sgrid.n_cells());
            for i in 0..sgrid.n_cells() {
                per_cell.push(TablePath::from_curve(
                    trace_characteristic(spec, comp, horizon, sgrid.center(i), dt)?,
                    horizon,
                ));
            }
            centers.push(per_cell);
        }
        Ok(Self { walls, centers })
    }
}

/// Linear interpolation of every component of one time level at x,
/// wrapping across the ends when the coupling is periodic and clamping
/// into the boundary half-cells otherwise.
fn interp_level(
    level: ArrayView2<f64>,
    sgrid: &SpaceGrid,
    periodic: bool,
    x: f64,
    out: &mut [f64],
) {
    let n_cells = sgrid.n_cells();
    let pos = x / sgrid.dx() - 0.5;
    let (i0, i1, theta) = if periodic {
        let p = pos.rem_euclid(n_cells as f64);
        let base = p.floor();
        let i0 = (base as usize).min(n_cells - 1);
        (i0, (i0 + 1) % n_cells, p - base)
    } else if pos <= 0.0 {
        (0, 0, 0.0)
    } else if pos >= (n_cells - 1) as f64 {
        (n_cells - 1, n_cells - 1, 0.0)
    } else {
        let base = pos.floor();
        let i0 = base as usize;
        (i0, i0 + 1, pos - base)
    };
    for (c, o) in out.iter_mut().enumerate() {
        *o = (1.0 - theta) * level[[i0, c]] + theta * level[[i1, c]];
    }
}

/// Time interpolation of the wall-trace rows, capped at `max_level` so
/// a sweep never reads traces it has not produced yet.
fn trace_row_at(traces: &Array2<f64>, tgrid: &TimeGrid, t: f64, max_level: usize, out: &mut [f64]) {
    let pos = (t / tgrid.dt()).clamp(0.0, max_level as f64);
    let j0 = (pos.floor() as usize).min(max_level.saturating_sub(1));
    let j1 = (j0 + 1).min(max_level);
    let theta = (pos - j0 as f64).clamp(0.0, 1.0);
    for (c, o) in out.iter_mut().enumerate() {
        *o = (1.0 - theta) * traces[[j0, c]] + theta * traces[[j1, c]];
    }
}

struct PsiSweep<'a> {
    spec: &'a SystemSpec,
    y_old: &'a StateTrajectory,
    u: &'a ContinuousControl,
    beta: &'a RelaxedControl,
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    periodic: bool,
}

impl PsiSweep<'_> {
    /// One evaluation of the transformation: component `comp` at level
    /// `k` along `path`. `traces` holds the new iterate's wall rows,
    /// valid up to `trace_max`.
    fn eval_point(
        &self,
        comp: usize,
        k: usize,
        path: &TablePath,
        traces: &Array2<f64>,
        trace_max: usize,
    ) -> f64 {
        let n = self.spec.n();
        let r = self.spec.r();
        let tau_k = self.tgrid.level_time(k);

        // Resolve where the backward curve leaves the domain and how
        // many whole-step nodes lie on it.
        let lateral = match path.wall {
            Some((rho, wpos, _)) if rho < tau_k => Some((tau_k - rho, wpos)),
            _ => None,
        };
        let (val, m_use, final_node) = match lateral {
            Some((t_star, wpos)) => {
                let mut row = vec![0.0; n];
                trace_row_at(traces, &self.tgrid, t_star, trace_max, &mut row);
                let (minus_in, plus_in) = self.spec.boundary().apply(&row[..r], &row[r..]);
                let d = self.spec.boundary_data(t_star);
                let y_in = if comp < r {
                    minus_in[comp] + d[comp]
                } else {
                    plus_in[comp - r] + d[comp]
                };
                (y_in, path.positions.len() - 1, Some((t_star, wpos)))
            }
            None => {
                // Initial-line exit; if the wall sample at offset k was
                // never stored the curve grazes the corner, so the wall
                // position is the limit.
                let pos = if k < path.positions.len() {
                    path.positions[k]
                } else {
                    path.wall.map(|(_, wpos, _)| wpos).unwrap_or(path.positions[path.positions.len() - 1])
                };
                let m_use = (path.positions.len() - 1).min(k);
                let final_node = if m_use < k { Some((0.0, pos)) } else { None };
                (self.spec.initial().eval(pos)[comp], m_use, final_node)
            }
        };

        if m_use == 0 && final_node.is_none() {
            return val;
        }

        // Trapezoidal source integral along the curve, walking the
        // whole-step nodes from the anchor down and finishing with the
        // off-level exit node if there is one.
        let mut y_hi = vec![0.0; n];
        let mut y_lo = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        interp_level(
            self.y_old.level(k),
            &self.sgrid,
            self.periodic,
            path.positions[0],
            &mut y_hi,
        );
        let mut t_hi = tau_k;
        let mut integral = 0.0;
        let mut carry: Option<((usize, usize), f64)> = None;
        for m in 1..=m_use {
            let t_lo = self.tgrid.level_time(k - m);
            interp_level(
                self.y_old.level(k - m),
                &self.sgrid,
                self.periodic,
                path.positions[m],
                &mut y_lo,
            );
            integral += self.segment(comp, t_hi, t_lo, &y_hi, &y_lo, &mut carry);
            std::mem::swap(&mut y_hi, &mut y_lo);
            t_hi = t_lo;
        }
        if let Some((t_star, pos)) = final_node {
            if t_star < t_hi {
                self.interp_spacetime(t_star, pos, &mut y_lo, &mut scratch);
                integral += self.segment(comp, t_hi, t_star, &y_hi, &y_lo, &mut carry);
            }
        }
        val + integral
    }

    /// Bilinear lookup in the old iterate at an off-level time.
    fn interp_spacetime(&self, t: f64, x: f64, out: &mut [f64], scratch: &mut [f64]) {
        let n_t = self.tgrid.n_intervals();
        let pos = (t / self.tgrid.dt()).clamp(0.0, n_t as f64);
        let j0 = (pos.floor() as usize).min(n_t.saturating_sub(1));
        let theta = pos - j0 as f64;
        interp_level(self.y_old.level(j0), &self.sgrid, self.periodic, x, out);
        if theta > 0.0 {
            interp_level(
                self.y_old.level(j0 + 1),
                &self.sgrid,
                self.periodic,
                x,
                scratch,
            );
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o = (1.0 - theta) * *o + theta * *s;
            }
        }
    }

    /// One trapezoid segment, controls frozen at the segment midpoint.
    /// `carry` memoizes the source value at the node shared with the
    /// previous segment while the controls stay on the same intervals.
    fn segment(
        &self,
        comp: usize,
        t_hi: f64,
        t_lo: f64,
        y_hi: &[f64],
        y_lo: &[f64],
        carry: &mut Option<((usize, usize), f64)>,
    ) -> f64 {
        let h = t_hi - t_lo;
        if h <= 0.0 {
            return 0.0;
        }
        let tm = 0.5 * (t_hi + t_lo);
        let bi = self.beta.grid().interval_of(tm);
        let ui = self.u.grid().interval_of(tm);
        let row = self.beta.row(bi);
        let b = row.as_slice().expect("contiguous weight row");
        let u_val = self.u.value(ui);
        let f_hi = match carry {
            Some(((pb, pu), f)) if *pb == bi && *pu == ui => *f,
            _ => self.spec.aggregated_source(y_hi, u_val, b)[comp],
        };
        let f_lo = self.spec.aggregated_source(y_lo, u_val, b)[comp];
        *carry = Some(((bi, ui), f_lo));
        0.5 * h * (f_hi + f_lo)
    }
}

fn apply_with_table(
    y: &StateTrajectory,
    spec: &SystemSpec,
    u: &ContinuousControl,
    beta: &RelaxedControl,
    k_weight: f64,
    table: &TraceTable,
) -> Result<(StateTrajectory, f64)> {
    let tgrid = *y.time_grid();
    let sgrid = *y.space_grid();
    let n = spec.n();
    let n_t = tgrid.n_intervals();
    let sweep = PsiSweep {
        spec,
        y_old: y,
        u,
        beta,
        tgrid,
        sgrid,
        periodic: spec.effectively_periodic(),
    };
    let mut new = StateTrajectory::zeros(tgrid, sgrid, n, spec.r(), "characteristics");
    let mut traces = Array2::<f64>::zeros((n_t + 1, n));
    for k in 0..=n_t {
        // Wall traces first: interior points at this level interpolate
        // them at exit times in the last step window.
        for comp in 0..n {
            traces[[k, comp]] =
                sweep.eval_point(comp, k, &table.walls[comp], &traces, k.saturating_sub(1));
        }
        for i in 0..sgrid.n_cells() {
            for comp in 0..n {
                new.level_mut(k)[[i, comp]] =
                    sweep.eval_point(comp, k, &table.centers[comp][i], &traces, k);
            }
        }
    }
    new.check_finite()?;

    let mut diff = StateTrajectory::zeros(tgrid, sgrid, n, spec.r(), "characteristics");
    for k in 0..=n_t {
        let d = &new.level(k) - &y.level(k);
        diff.level_mut(k).assign(&d);
    }
    let residual = dag_norm(&diff, k_weight)?;
    Ok((new, residual))
}

fn validate_setup(
    spec: &SystemSpec,
    u: &ContinuousControl,
    beta: &RelaxedControl,
    tgrid: &TimeGrid,
    sgrid: &SpaceGrid,
) -> Result<()> {
    check_control_grids(spec, u, beta, tgrid)?;
    if (sgrid.length() - spec.length()).abs() > 1e-12 * spec.length() {
        return Err(Error::GridMismatch(
            "space grid length differs from the system length".into(),
        ));
    }
    Ok(())
}

/// One application of the integral transformation to `y`, together with
/// the distance to `y` in the weighted norm. Traces every curve from
/// scratch; iterative callers go through [`solve_fixed_point`], which
/// traces once.
pub fn apply_psi(
    y: &StateTrajectory,
    spec: &SystemSpec,
    u: &ContinuousControl,
    beta: &RelaxedControl,
    k_weight: f64,
) -> Result<(StateTrajectory, f64)> {
    validate_setup(spec, u, beta, y.time_grid(), y.space_grid())?;
    if y.num_components() != spec.n() {
        return Err(Error::GridMismatch(format!(
            "trajectory has {} components, system has {}",
            y.num_components(),
            spec.n()
        )));
    }
    if !(k_weight.is_finite() && k_weight >= 0.0) {
        return Err(Error::Config(format!(
            "norm weight must be a finite non-negative number, got {k_weight}"
        )));
    }
    let table = TraceTable::build(spec, y.time_grid(), y.space_grid())?;
    apply_with_table(y, spec, u, beta, k_weight, &table)
}

/// Norm weight that makes the transformation a contraction, from the
/// sampled column-sum Lipschitz constant of the per-mode sources over
/// the data range, doubled, times the boundary coupling gain.
pub fn auto_contraction_k(spec: &SystemSpec, u: &ContinuousControl) -> f64 {
    let n = spec.n();
    let mut scale = 1.0f64;
    for m in 0..=128 {
        let x = spec.length() * m as f64 / 128.0;
        for v in spec.initial().eval(x) {
            scale = scale.max(2.0 * v.abs());
        }
        let t = spec.horizon() * m as f64 / 128.0;
        for v in spec.boundary_data(t) {
            scale = scale.max(2.0 * v.abs());
        }
    }
    let u_rows: Vec<Vec<f64>> = if u.value(0).is_empty() {
        vec![vec![]]
    } else {
        (0..u.grid().n_intervals()).map(|k| u.value(k).to_vec()).collect()
    };
    let samples: Vec<Vec<f64>> = if n <= 6 {
        (0..3usize.pow(n as u32))
            .map(|code| {
                let mut c = code;
                (0..n)
                    .map(|_| {
                        let d = c % 3;
                        c /= 3;
                        [-scale, 0.0, scale][d]
                    })
                    .collect()
            })
            .collect()
    } else {
        let mut pts = vec![vec![0.0; n]];
        for i in 0..n {
            for sign in [-1.0, 1.0] {
                let mut v = vec![0.0; n];
                v[i] = sign * scale;
                pts.push(v);
            }
        }
        pts
    };
    let n_modes = spec.num_modes();
    let mut l_f = 0.0f64;
    for j in 0..n_modes {
        let mut e = vec![0.0; n_modes];
        e[j] = 1.0;
        for y in &samples {
            for u_val in &u_rows {
                let jac = spec.aggregated_jacobian(y, u_val, &e);
                for col in 0..n {
                    let s: f64 = (0..n).map(|row| jac[row * n + col].abs()).sum();
                    l_f = l_f.max(s);
                }
            }
        }
    }
    2.0 * l_f * spec.boundary().row_sum_norm().max(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointDiagnostics {
    pub k_weight: f64,
    /// Weighted-norm distance between successive iterates, one per sweep.
    pub residuals: Vec<f64>,
    /// Ratios of successive residuals; the observed contraction factors.
    pub factors: Vec<f64>,
}

impl FixedPointDiagnostics {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }
}

/// Picard iteration of the transformation from the zero trajectory until
/// the weighted residual drops to `tol`. `k_weight = None` selects the
/// weight via [`auto_contraction_k`].
#[allow(clippy::too_many_arguments)]
pub fn solve_fixed_point(
    spec: &SystemSpec,
    u: &ContinuousControl,
    beta: &RelaxedControl,
    tgrid: &TimeGrid,
    sgrid: &SpaceGrid,
    k_weight: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(StateTrajectory, FixedPointDiagnostics)> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Config("need at least one sweep".into()));
    }
    validate_setup(spec, u, beta, tgrid, sgrid)?;
    let k = match k_weight {
        Some(k) if k.is_finite() && k >= 0.0 => k,
        Some(k) => {
            return Err(Error::Config(format!(
                "norm weight must be a finite non-negative number, got {k}"
            )))
        }
        None => auto_contraction_k(spec, u),
    };
    let table = TraceTable::build(spec, tgrid, sgrid)?;
    let mut y = StateTrajectory::zeros(*tgrid, *sgrid, spec.n(), spec.r(), "characteristics");
    let mut diag = FixedPointDiagnostics {
        k_weight: k,
        residuals: Vec::new(),
        factors: Vec::new(),
    };
    for _ in 0..max_iter {
        let (next, res) = apply_with_table(&y, spec, u, beta, k, &table)?;
        if let Some(&prev) = diag.residuals.last() {
            if prev > 0.0 {
                diag.factors.push(res / prev);
            }
        }
        diag.residuals.push(res);
        y = next;
        if res <= tol {
            return Ok((y, diag));
        }
    }
    Err(Error::FixedPointStall {
        max_iter,
        residual: *diag.residuals.last().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::{BurgersProblem, Profile};
    use crate::control::ControlBox;
    use crate::fv::{solve_forward, SolverConfig};
    use crate::norms::l1_time_sup_distance;
    use crate::system::{BoundaryBlocks, PiecewiseData, SystemDef};
    use std::sync::Arc;

    fn wave_profiles(length: f64) -> Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync> {
        Arc::new(move |x| {
            let w = std::f64::consts::TAU * x / length;
            vec![2.0 + w.sin(), 0.5 * (2.0 * w).cos()]
        })
    }

    /// Two counter-propagating unit-speed waves, periodically coupled;
    /// optionally with the componentwise decay source f(y) = -y.
    fn two_wave_spec(length: f64, horizon: f64, decay: bool) -> SystemSpec {
        let source: Arc<crate::system::SourceFn> = if decay {
            Arc::new(|y, _, _| y.iter().map(|v| -v).collect())
        } else {
            Arc::new(|y, _, _| vec![0.0; y.len()])
        };
        let source_jacobian: Option<Arc<crate::system::SourceJacobianFn>> = decay.then(|| {
            Arc::new(|y: &[f64], _: &[f64], _: usize| {
                let n = y.len();
                let mut j = vec![0.0; n * n];
                for i in 0..n {
                    j[i * n + i] = -1.0;
                }
                j
            }) as Arc<crate::system::SourceJacobianFn>
        });
        SystemSpec::new(SystemDef {
            n: 2,
            r: 1,
            length,
            horizon,
            lambda: Arc::new(|_| vec![-1.0, 1.0]),
            lambda_lipschitz: 0.0,
            mode_labels: vec!["only".into()],
            source,
            source_jacobian,
            implicit_step: None,
            boundary: BoundaryBlocks::periodic(1, 2),
            boundary_data: PiecewiseData::zero(0.0, horizon, 2),
            initial: PiecewiseData::smooth(0.0, length, wave_profiles(length)).unwrap(),
            control_box: ControlBox::empty(),
        })
        .unwrap()
    }

    fn single_mode_controls(horizon: f64) -> (ContinuousControl, RelaxedControl) {
        let grid = TimeGrid::new(horizon, 1).unwrap();
        (
            ContinuousControl::none(grid),
            RelaxedControl::uniform(grid, 1).unwrap(),
        )
    }

    /// Exact trajectory of the periodic two-wave transport, componentwise
    /// shifted initial data, scaled by `amp(t)`.
    fn exact_two_wave(
        tgrid: TimeGrid,
        sgrid: SpaceGrid,
        length: f64,
        amp: impl Fn(f64) -> f64,
    ) -> StateTrajectory {
        let profile = wave_profiles(length);
        let mut exact = StateTrajectory::zeros(tgrid, sgrid, 2, 1, "oracle");
        for k in 0..exact.num_levels() {
            let t = tgrid.level_time(k);
            for i in 0..sgrid.n_cells() {
                let x = sgrid.center(i);
                let back = profile((x + t).rem_euclid(length));
                let fwd = profile((x - t).rem_euclid(length));
                exact.level_mut(k)[[i, 0]] = amp(t) * back[0];
                exact.level_mut(k)[[i, 1]] = amp(t) * fwd[1];
            }
        }
        exact
    }

    #[test]
    fn constant_speed_curves_exit_where_expected() {
        let spec = two_wave_spec(2.0, 2.0, false);

        // Positive unit speed from (1.0, 0.5): hits the left wall at 0.5.
        let c = trace_characteristic(&spec, 1, 1.0, 0.5, 0.25).unwrap();
        assert_eq!(c.exit, ExitFace::Left);
        assert!((c.exit_time - 0.5).abs() < 1e-9);
        assert_eq!(c.exit_pos, 0.0);
        for (t, s) in c.times.iter().zip(c.positions.iter()) {
            assert!((s - (0.5 + (t - 1.0))).abs() < 1e-12);
        }

        // Same component from (0.3, 0.5): leaves through the initial line.
        let c = trace_characteristic(&spec, 1, 0.3, 0.5, 0.25).unwrap();
        assert_eq!(c.exit, ExitFace::Initial);
        assert_eq!(c.exit_time, 0.0);
        assert!((c.exit_pos - 0.2).abs() < 1e-12);

        // Negative unit speed from (2.0, 1.0): walks right backward in
        // time, exits at x = L after covering the remaining half domain.
        let c = trace_characteristic(&spec, 0, 2.0, 1.0, 0.25).unwrap();
        assert_eq!(c.exit, ExitFace::Right);
        assert!((c.exit_time - 1.0).abs() < 1e-9);
        assert_eq!(c.exit_pos, 2.0);
    }

    #[test]
    fn trace_rejects_bad_anchors() {
        let spec = two_wave_spec(2.0, 1.0, false);
        assert!(trace_characteristic(&spec, 5, 0.5, 0.5, 0.1).is_err());
        assert!(trace_characteristic(&spec, 0, 1.5, 0.5, 0.1).is_err());
        assert!(trace_characteristic(&spec, 0, 0.5, 2.5, 0.1).is_err());
        assert!(trace_characteristic(&spec, 0, 0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn variable_speed_curve_matches_exponential() {
        // One rightward component with speed 1 + x on [0, 1]: the
        // backward curve through (tau, sigma) is (1+sigma) e^{t-tau} - 1,
        // reaching the left wall at tau - ln(1+sigma).
        let spec = SystemSpec::new(SystemDef {
            n: 1,
            r: 0,
            length: 1.0,
            horizon: 1.0,
            lambda: Arc::new(|x| vec![1.0 + x]),
            lambda_lipschitz: 1.0,
            mode_labels: vec!["only".into()],
            source: Arc::new(|y, _, _| vec![0.0; y.len()]),
            source_jacobian: None,
            implicit_step: None,
            boundary: BoundaryBlocks::zero(0, 1),
            boundary_data: PiecewiseData::zero(0.0, 1.0, 1),
            initial: PiecewiseData::zero(0.0, 1.0, 1),
            control_box: ControlBox::empty(),
        })
        .unwrap();
        let (tau, sigma) = (1.0, 0.8);
        let c = trace_characteristic(&spec, 0, tau, sigma, 1.0 / 256.0).unwrap();
        for (t, s) in c.times.iter().zip(c.positions.iter()) {
            let closed = (1.0 + sigma) * (t - tau).exp() - 1.0;
            assert!((s - closed).abs() < 1e-8, "at t = {t}: {s} vs {closed}");
        }
        assert_eq!(c.exit, ExitFace::Left);
        assert!((c.exit_time - (tau - (1.0 + sigma).ln())).abs() < 1e-8);
    }

    #[test]
    fn zero_data_is_an_exact_fixed_point() {
        // Decay source, zero initial and boundary data: every curve
        // carries zero and the source vanishes on it.
        let spec = SystemSpec::new(two_wave_def_for_zero()).unwrap();
        let (u, beta) = single_mode_controls(1.0);
        let tgrid = TimeGrid::new(1.0, 16).unwrap();
        let sgrid = SpaceGrid::new(2.0, 16).unwrap();
        let y0 = StateTrajectory::zeros(tgrid, sgrid, 2, 1, "characteristics");
        let (next, residual) = apply_psi(&y0, &spec, &u, &beta, 2.0).unwrap();
        assert_eq!(residual, 0.0);
        assert!(next.data().iter().all(|&v| v == 0.0));
    }

    fn two_wave_def_for_zero() -> SystemDef {
        SystemDef {
            n: 2,
            r: 1,
            length: 2.0,
            horizon: 1.0,
            lambda: Arc::new(|_| vec![-1.0, 1.0]),
            lambda_lipschitz: 0.0,
            mode_labels: vec!["only".into()],
            source: Arc::new(|y, _, _| y.iter().map(|v| -v).collect()),
            source_jacobian: None,
            implicit_step: None,
            boundary: BoundaryBlocks::periodic(1, 2),
            boundary_data: PiecewiseData::zero(0.0, 1.0, 2),
            initial: PiecewiseData::zero(0.0, 2.0, 2),
            control_box: ControlBox::empty(),
        }
    }

    #[test]
    fn pure_advection_converges_in_one_sweep() {
        let spec = two_wave_spec(2.0, 1.0, false);
        let (u, beta) = single_mode_controls(1.0);
        let tgrid = TimeGrid::new(1.0, 64).unwrap();
        let sgrid = SpaceGrid::new(2.0, 64).unwrap();
        let (sol, diag) =
            solve_fixed_point(&spec, &u, &beta, &tgrid, &sgrid, None, 1e-12, 4).unwrap();
        // With no source the transformation ignores its argument: the
        // second sweep reproduces the first bit for bit.
        assert_eq!(diag.k_weight, 0.0);
        assert_eq!(diag.residuals.len(), 2);
        assert_eq!(diag.residuals[1], 0.0);

        let exact = exact_two_wave(tgrid, sgrid, 2.0, |_| 1.0);
        let dist = l1_time_sup_distance(&sol, &exact).unwrap();
        assert!(dist < 5e-3, "transport error {dist}");
    }

    #[test]
    fn linear_decay_contracts_and_matches_the_exponential() {
        let spec = two_wave_spec(2.0, 1.0, true);
        let (u, beta) = single_mode_controls(1.0);
        assert!((auto_contraction_k(&spec, &u) - 2.0).abs() < 1e-12);

        let tgrid = TimeGrid::new(1.0, 48).unwrap();
        let sgrid = SpaceGrid::new(2.0, 48).unwrap();
        let (sol, diag) =
            solve_fixed_point(&spec, &u, &beta, &tgrid, &sgrid, None, 1e-10, 60).unwrap();

        let exact = exact_two_wave(tgrid, sgrid, 2.0, |t: f64| (-t).exp());
        let dist = l1_time_sup_distance(&sol, &exact).unwrap();
        assert!(dist < 5e-2, "decay error {dist}");

        // Every observed ratio of successive residuals stays below the
        // guaranteed contraction constant plus sampling slack.
        assert!(diag.residuals.len() >= 4);
        for (i, f) in diag.factors.iter().enumerate() {
            assert!(*f <= 0.6, "factor {i} = {f} out of {:?}", diag.factors);
        }
    }

    #[test]
    fn nonstiff_relaxation_agrees_with_the_fv_solver() {
        let problem = BurgersProblem {
            length: std::f64::consts::TAU,
            horizon: 0.5,
            a: 2.0,
            kappa: 1.0,
            eta0: Profile::Sine {
                mean: 1.0,
                amplitude: 0.5,
            },
            target: Profile::OneMinusSin,
        };
        let spec = problem.system_spec().unwrap();
        let control = TimeGrid::new(0.5, 4).unwrap();
        let u = ContinuousControl::none(control);
        let beta = RelaxedControl::constant(control, &[0.6, 0.4]).unwrap();

        // The gap between the two solvers is dominated by the upwind
        // scheme's first-order diffusion, so it shrinks under refinement.
        let mut dists = Vec::new();
        for cells in [32usize, 64] {
            let tgrid = TimeGrid::new(0.5, cells).unwrap();
            let sgrid = SpaceGrid::new(problem.length, cells).unwrap();
            let fv =
                solve_forward(&spec, &u, &beta, &tgrid, &sgrid, &SolverConfig::default()).unwrap();
            let (fp, diag) =
                solve_fixed_point(&spec, &u, &beta, &tgrid, &sgrid, None, 1e-9, 60).unwrap();
            assert!(diag.k_weight > 0.0);
            dists.push(l1_time_sup_distance(&fv, &fp).unwrap());
        }
        assert!(dists[0] < 0.25, "cross-solver distance {dists:?}");
        assert!(
            dists[1] < 0.7 * dists[0],
            "no decay under refinement: {dists:?}"
        );
    }

    #[test]
    fn oversized_step_breaks_the_boundary_recursion() {
        let spec = two_wave_spec(2.0, 3.0, false);
        let grid = TimeGrid::new(3.0, 1).unwrap();
        let (u, beta) = single_mode_controls(3.0);
        let sgrid = SpaceGrid::new(2.0, 8).unwrap();
        let y0 = StateTrajectory::zeros(grid, sgrid, 2, 1, "characteristics");
        let err = apply_psi(&y0, &spec, &u, &beta, 0.0);
        assert!(matches!(err, Err(Error::Config(_))), "{err:?}");

        // Two steps bring dt below the crossing time and the sweep runs.
        let grid = TimeGrid::new(3.0, 2).unwrap();
        let y0 = StateTrajectory::zeros(grid, sgrid, 2, 1, "characteristics");
        assert!(apply_psi(&y0, &spec, &u, &beta, 0.0).is_ok());
    }
}
