//! Projected gradient descent on the relaxed mode weights, plus the two
//! study harnesses: relax-round (optimize once, round onto coarser grids,
//! re-simulate) and the deviation-vs-state-distance gap study.
//!
//! The line search is Armijo backtracking seeded with a Barzilai-Borwein
//! step; acceptance requires J(b+) <= J(b) - (c1/s) ||b+ - b||^2, the
//! standard sufficient-decrease condition for projected gradients.
//! Accepted steps are therefore monotone in J.

use crate::adjoint::{reduced_gradient, solve_adjoint, tracking_cost};
use crate::burgers::BurgersProblem;
use crate::control::{project_simplex_rows, ContinuousControl, RelaxedControl};
use crate::error::{Error, Result};
use crate::fv::{solve_forward, SolverConfig};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::norms::l1_time_sup_distance;
use crate::rounding::sum_up_rounding;
use ndarray::Array2;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Step shrink factor per backtrack.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Tolerance on ||b - P(b - grad)|| / sqrt(N_t).
    pub stationarity_tol: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
            stationarity_tol: 1e-8,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::Config(format!("c1 must lie in (0,1), got {}", self.c1)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!(
                "backtrack factor must lie in (0,1), got {}",
                self.backtrack
            )));
        }
        if self.stationarity_tol <= 0.0 {
            return Err(Error::Config("stationarity tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub step_size: f64,
    pub pg_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Stationary,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub beta: RelaxedControl,
    pub cost: f64,
    pub log: Vec<IterationRecord>,
    pub reason: TerminationReason,
}

fn frob_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn projected(beta: &RelaxedControl, step: &Array2<f64>) -> Result<RelaxedControl> {
    project_simplex_rows(*beta.grid(), beta.values() - step)
}

/// Minimizes a smooth objective over per-interval simplex rows. The
/// objective returns the cost and its full-row gradient at the query
/// point. Generic so toy problems can exercise the loop without a PDE.
pub fn optimize_relaxed<F>(
    mut objective: F,
    initial: RelaxedControl,
    config: &OptimizeConfig,
) -> Result<OptimizeResult>
where
    F: FnMut(&RelaxedControl) -> Result<(f64, Array2<f64>)>,
{
    config.validate()?;
    let n_t = initial.grid().n_intervals() as f64;
    let mut beta = initial;
    let (mut cost, mut grad) = objective(&beta)?;
    let mut log = Vec::new();
    let mut prev: Option<(Array2<f64>, Array2<f64>)> = None; // (beta, grad)
    let mut step_size = 1.0;

    for iter in 1..=config.max_iters {
        let pg = projected(&beta, &grad)?;
        let pg_norm = frob_norm(&(beta.values() - pg.values())) / n_t.sqrt();
        if pg_norm <= config.stationarity_tol {
            return Ok(OptimizeResult {
                beta,
                cost,
                log,
                reason: TerminationReason::Stationary,
            });
        }

        // Barzilai-Borwein step from the previous accepted move.
        if let Some((b_prev, g_prev)) = &prev {
            let db = beta.values() - b_prev;
            let dg = &grad - g_prev;
            let num: f64 = db.iter().map(|v| v * v).sum();
            let den: f64 = db.iter().zip(dg.iter()).map(|(a, b)| a * b).sum();
            if den > 0.0 && num > 0.0 {
                step_size = (num / den).clamp(1e-12, 1e12);
            }
        }

        let mut s = step_size;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let candidate = projected(&beta, &(&grad * s))?;
            let move_norm2: f64 = (candidate.values() - beta.values())
                .iter()
                .map(|v| v * v)
                .sum();
            if move_norm2 == 0.0 {
                // Projection absorbed the whole step; the point is
                // stationary along this gradient.
                return Ok(OptimizeResult {
                    beta,
                    cost,
                    log,
                    reason: TerminationReason::Stationary,
                });
            }
            let (cand_cost, cand_grad) = objective(&candidate)?;
            if cand_cost <= cost - (config.c1 / s) * move_norm2 {
                accepted = Some((candidate, cand_cost, cand_grad, s));
                break;
            }
            s *= config.backtrack;
        }

        let Some((next, next_cost, next_grad, used)) = accepted else {
            return Ok(OptimizeResult {
                beta,
                cost,
                log,
                reason: TerminationReason::Stalled,
            });
        };
        prev = Some((beta.values().clone(), grad.clone()));
        beta = next;
        cost = next_cost;
        grad = next_grad;
        step_size = used;
        log.push(IterationRecord {
            iter,
            cost,
            step_size: used,
            pg_norm,
        });
    }

    Ok(OptimizeResult {
        beta,
        cost,
        log,
        reason: TerminationReason::MaxIters,
    })
}

/// Grids and solver settings shared by the study harnesses.
#[derive(Debug, Clone)]
pub struct StudyGrids {
    pub sgrid: SpaceGrid,
    /// Optimizer control grid.
    pub control: TimeGrid,
    /// Solver grid; must refine the control grid and every rounding grid.
    pub solver: TimeGrid,
}

/// Objective closure for the flux-switching problem: forward solve,
/// backward sweep, reduced gradient spread over full rows.
pub fn burgers_objective<'a>(
    problem: &'a BurgersProblem,
    grids: &'a StudyGrids,
    target: &'a [f64],
    solver_config: &'a SolverConfig,
) -> Result<impl FnMut(&RelaxedControl) -> Result<(f64, Array2<f64>)> + 'a> {
    let spec = problem.system_spec()?;
    Ok(move |beta: &RelaxedControl| {
        let u = ContinuousControl::none(*beta.grid());
        let traj = solve_forward(&spec, &u, beta, &grids.solver, &grids.sgrid, solver_config)?;
        let cost = tracking_cost(&traj, target)?;
        let adj = solve_adjoint(problem, &traj, beta, target)?;
        let grad = reduced_gradient(problem, &traj, &adj, beta.grid())?;
        Ok((cost, grad.full_rows()))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxRow {
    pub k: usize,
    pub dt: f64,
    /// Integrated deviation between the relaxed optimum and its rounding.
    pub epsilon: f64,
    /// Cost of the rounded binary control.
    pub j_v: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone)]
pub struct RelaxRoundReport {
    pub j_star: f64,
    pub beta_star: RelaxedControl,
    pub termination: TerminationReason,
    pub log: Vec<IterationRecord>,
    pub rows: Vec<RelaxRow>,
    pub alphas: Vec<crate::control::BinaryControl>,
    /// Final-time eta profiles: relaxed optimum first, then one per row.
    pub final_etas: Vec<Vec<f64>>,
}

pub(crate) fn rounding_grid(horizon: f64, dt: f64) -> Result<TimeGrid> {
    if dt <= 0.0 {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let q = horizon / dt;
    let n = q.round();
    if n < 1.0 || (q - n).abs() > 1e-9 * q.max(1.0) {
        return Err(Error::Config(format!(
            "rounding step {dt} does not divide the horizon {horizon}"
        )));
    }
    TimeGrid::new(horizon, n as usize)
}

/// Optimize once, then round the optimum onto each grid in `dt_sequence`,
/// re-simulate, and tabulate costs and gaps.
pub fn relax_round_study(
    problem: &BurgersProblem,
    grids: &StudyGrids,
    dt_sequence: &[f64],
    opt_config: &OptimizeConfig,
    solver_config: &SolverConfig,
    initial: RelaxedControl,
) -> Result<RelaxRoundReport> {
    let spec = problem.system_spec()?;
    let target = problem.target_samples(&grids.sgrid);
    for dt in dt_sequence {
        let g = rounding_grid(problem.horizon, *dt)?;
        if !grids.solver.is_refinement_of(&g) {
            return Err(Error::GridMismatch(format!(
                "solver grid ({} intervals) does not refine the rounding grid dt = {dt}",
                grids.solver.n_intervals()
            )));
        }
    }

    let objective = burgers_objective(problem, grids, &target, solver_config)?;
    let opt = optimize_relaxed(objective, initial, opt_config)?;
    let u = ContinuousControl::none(*opt.beta.grid());
    let relaxed_traj = solve_forward(
        &spec,
        &u,
        &opt.beta,
        &grids.solver,
        &grids.sgrid,
        solver_config,
    )?;
    let j_star = tracking_cost(&relaxed_traj, &target)?;
    let mut final_etas = vec![BurgersProblem::eta_slice(
        relaxed_traj.level(relaxed_traj.num_levels() - 1),
    )];

    let mut rows = Vec::new();
    let mut alphas = Vec::new();
    for (k, &dt) in dt_sequence.iter().enumerate() {
        let grid = rounding_grid(problem.horizon, dt)?;
        let report = sum_up_rounding(&opt.beta, &grid)?;
        let alpha_beta = report.binary.to_relaxed();
        let u_k = ContinuousControl::none(*alpha_beta.grid());
        let traj = solve_forward(
            &spec,
            &u_k,
            &alpha_beta,
            &grids.solver,
            &grids.sgrid,
            solver_config,
        )?;
        let j_v = tracking_cost(&traj, &target)?;
        let abs_gap = (j_star - j_v).abs();
        rows.push(RelaxRow {
            k: k + 1,
            dt,
            epsilon: report.deviation,
            j_v,
            abs_gap,
            rel_gap: abs_gap / j_star.max(1e-6),
        });
        final_etas.push(BurgersProblem::eta_slice(traj.level(traj.num_levels() - 1)));
        alphas.push(report.binary);
    }

    Ok(RelaxRoundReport {
        j_star,
        beta_star: opt.beta,
        termination: opt.reason,
        log: opt.log,
        rows,
        alphas,
        final_etas,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub k: usize,
    pub dt: f64,
    pub epsilon: f64,
    /// Sup-in-time L1-in-space distance between the two trajectories.
    pub distance: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct GapStudyReport {
    pub rows: Vec<GapRow>,
    pub max_ratio: f64,
}

/// For a fixed relaxed control, rounds onto each grid and measures how
/// far the resulting state moves, against the integrated deviation.
pub fn gap_study(
    spec: &crate::system::SystemSpec,
    grids: &StudyGrids,
    u: &ContinuousControl,
    beta: &RelaxedControl,
    dt_sequence: &[f64],
    solver_config: &SolverConfig,
) -> Result<GapStudyReport> {
    let base = solve_forward(spec, u, beta, &grids.solver, &grids.sgrid, solver_config)?;
    let mut rows = Vec::new();
    let mut max_ratio = 0.0f64;
    for (k, &dt) in dt_sequence.iter().enumerate() {
        let grid = rounding_grid(spec.horizon(), dt)?;
        if !grids.solver.is_refinement_of(&grid) {
            return Err(Error::GridMismatch(format!(
                "solver grid does not refine the rounding grid dt = {dt}"
            )));
        }
        let report = sum_up_rounding(beta, &grid)?;
        let rounded = report.binary.to_relaxed();
        let traj = solve_forward(
            spec,
            u,
            &rounded,
            &grids.solver,
            &grids.sgrid,
            solver_config,
        )?;
        let distance = l1_time_sup_distance(&base, &traj)?;
        let epsilon = report.deviation;
        let ratio = if epsilon > 0.0 {
            distance / epsilon
        } else if distance == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_ratio = max_ratio.max(ratio);
        rows.push(GapRow {
            k: k + 1,
            dt,
            epsilon,
            distance,
            ratio,
        });
    }
    Ok(GapStudyReport { rows, max_ratio })
}
