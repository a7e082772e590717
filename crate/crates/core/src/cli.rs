//! Command-line wiring: configuration in, CSV/JSON artifacts out.
//!
//! Every command loads the configuration (file, then flag overrides),
//! runs one library entry point, and writes its results into the output
//! directory through the atomic helpers in [`crate::io`]. Exit codes:
//! 0 success, 2 configuration or I/O problem, 3 numerical failure.

use crate::adjoint::{fd_directional, reduced_gradient, solve_adjoint, tracking_cost};
use crate::burgers::BurgersProblem;
use crate::characteristics::solve_fixed_point;
use crate::config::{Overrides, RunConfig, SolverChoice};
use crate::control::{ContinuousControl, RelaxedControl};
use crate::error::{Error, Result};
use crate::fv::{derive_time_grid_aligned, solve_forward, SolverConfig};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::io;
use crate::optimizer::{
    gap_study, optimize_relaxed, relax_round_study, rounding_grid, GapRow, RelaxRow, StudyGrids,
    TerminationReason,
};
use crate::rounding::sum_up_rounding;
use crate::system::SystemSpec;
use clap::{Parser, Subcommand};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;

/// Relative mismatch the self-test tolerates between the adjoint and
/// finite-difference directional derivatives.
const SELFTEST_REL_TOL: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(
    name = "miocp",
    version,
    about = "Mixed-integer optimal control of 1D semilinear hyperbolic systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
    /// Configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Problem preset (available: burgers-switch).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output directory override.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Spatial cell count override.
    #[arg(long, global = true)]
    pub nx: Option<usize>,
    /// CFL number override.
    #[arg(long, global = true)]
    pub cfl: Option<f64>,
    /// Relaxation time override.
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Cmd {
    /// Forward solve with fixed mode weights.
    Solve,
    /// Projected-gradient optimization of the relaxed weights.
    Optimize,
    /// Round a relaxed-control file onto each grid in dt_sequence.
    Round,
    /// Optimize once, round onto each grid, re-simulate, tabulate.
    Study,
    /// Deviation-vs-state-distance check for a fixed control.
    Gapcheck,
    /// Finite-difference check of the adjoint gradient.
    Selftest,
}

/// 2 for problems a user can fix in the inputs, 3 for numerics.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::GridMismatch(_)
        | Error::InvalidControl(_)
        | Error::InvalidSystem(_)
        | Error::InfeasiblePerturbation(_)
        | Error::Io(_) => 2,
        Error::NonFiniteState { .. }
        | Error::UnstableStep { .. }
        | Error::NewtonDivergence { .. }
        | Error::FixedPointStall { .. }
        | Error::DegenerateSpeeds => 3,
    }
}

pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&Overrides {
        preset: cli.preset.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        nx: cli.nx,
        cfl: cli.cfl,
        kappa: cli.kappa,
    })?;
    match cli.command {
        Cmd::Solve => cmd_solve(&cfg).map(|()| 0),
        Cmd::Optimize => cmd_optimize(&cfg).map(|()| 0),
        Cmd::Round => cmd_round(&cfg).map(|()| 0),
        Cmd::Study => cmd_study(&cfg).map(|()| 0),
        Cmd::Gapcheck => cmd_gapcheck(&cfg).map(|()| 0),
        Cmd::Selftest => cmd_selftest(&cfg),
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn solver_config(cfg: &RunConfig) -> SolverConfig {
    SolverConfig {
        cfl: cfg.cfl,
        ..SolverConfig::default()
    }
}

/// CFL-limited time grid whose interval count is a multiple of every
/// entry in `aligns`, so solver steps never straddle a control or
/// rounding-grid jump.
fn aligned_solver_grid(
    cfg: &RunConfig,
    spec: &SystemSpec,
    sgrid: &SpaceGrid,
    aligns: &[usize],
) -> Result<TimeGrid> {
    let align = aligns.iter().fold(1, |acc, &n| lcm(acc, n.max(1)));
    derive_time_grid_aligned(
        spec,
        sgrid,
        cfg.cfl,
        &TimeGrid::new(cfg.problem.horizon, align)?,
    )
}

fn build_grids(cfg: &RunConfig, spec: &SystemSpec, extra_aligns: &[usize]) -> Result<StudyGrids> {
    let sgrid = SpaceGrid::new(cfg.problem.length, cfg.nx)?;
    let control = TimeGrid::new(cfg.problem.horizon, cfg.control_intervals)?;
    let mut aligns = vec![cfg.control_intervals];
    aligns.extend_from_slice(extra_aligns);
    let solver = aligned_solver_grid(cfg, spec, &sgrid, &aligns)?;
    Ok(StudyGrids {
        sgrid,
        control,
        solver,
    })
}

/// The fixed control for solve/gapcheck: a file if one is configured,
/// otherwise the constant weights on the control grid.
fn load_solve_beta(cfg: &RunConfig, modes: usize) -> Result<RelaxedControl> {
    let beta = match &cfg.beta_file {
        Some(path) => io::read_beta_file(path)?,
        None => {
            if cfg.beta.len() != modes {
                return Err(Error::InvalidControl(format!(
                    "beta has {} weights for a {modes}-mode system",
                    cfg.beta.len()
                )));
            }
            let grid = TimeGrid::new(cfg.problem.horizon, cfg.control_intervals)?;
            return RelaxedControl::constant(grid, &cfg.beta);
        }
    };
    if beta.num_modes() != modes {
        return Err(Error::InvalidControl(format!(
            "control file has {} modes, the system has {modes}",
            beta.num_modes()
        )));
    }
    let horizon = cfg.problem.horizon;
    if (beta.grid().horizon() - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "control file horizon {} differs from the problem horizon {horizon}",
            beta.grid().horizon()
        )));
    }
    Ok(beta)
}

fn optimizer_initial(cfg: &RunConfig, modes: usize) -> Result<RelaxedControl> {
    let grid = TimeGrid::new(cfg.problem.horizon, cfg.control_intervals)?;
    match &cfg.initial_beta {
        None => RelaxedControl::uniform(grid, modes),
        Some(w) => {
            if w.len() != modes {
                return Err(Error::InvalidControl(format!(
                    "initial_beta has {} weights for a {modes}-mode system",
                    w.len()
                )));
            }
            RelaxedControl::constant(grid, w)
        }
    }
}

fn write_echo(cfg: &RunConfig) -> Result<()> {
    io::write_atomic(&cfg.out_dir.join("run_config.cfg"), cfg.echo().as_bytes())
}

fn termination_label(reason: TerminationReason) -> &'static str {
    match reason {
        TerminationReason::Stationary => "stationary",
        TerminationReason::MaxIters => "max_iters",
        TerminationReason::Stalled => "stalled",
    }
}

#[derive(Serialize)]
struct SolveSummary {
    solver: &'static str,
    cost: f64,
    sup_norm: f64,
    eta_mass_initial: f64,
    eta_mass_drift: f64,
    n_time_levels: usize,
    n_cells: usize,
    dt: f64,
    dx: f64,
    /// Spatial eta integral at every time level.
    eta_mass: Vec<f64>,
    config_echo: String,
}

fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.problem.system_spec()?;
    let beta = load_solve_beta(cfg, spec.num_modes())?;
    let sgrid = SpaceGrid::new(cfg.problem.length, cfg.nx)?;
    let tgrid = aligned_solver_grid(cfg, &spec, &sgrid, &[beta.grid().n_intervals()])?;
    let u = ContinuousControl::none(*beta.grid());

    let (traj, fp_diag) = match cfg.solver {
        SolverChoice::FiniteVolume => (
            solve_forward(&spec, &u, &beta, &tgrid, &sgrid, &solver_config(cfg))?,
            None,
        ),
        SolverChoice::Characteristics => {
            if cfg.problem.kappa < tgrid.dt() {
                eprintln!(
                    "warning: kappa = {} is below the time step {}; the characteristic \
                     fixed-point solver targets the non-stiff regime",
                    cfg.problem.kappa,
                    tgrid.dt()
                );
            }
            let (traj, diag) = solve_fixed_point(
                &spec,
                &u,
                &beta,
                &tgrid,
                &sgrid,
                cfg.k_weight,
                cfg.fp_tol,
                cfg.fp_max_iter,
            )?;
            (traj, Some(diag))
        }
    };

    let target = cfg.problem.target_samples(&sgrid);
    let cost = tracking_cost(&traj, &target)?;
    let dx = sgrid.dx();
    let eta_mass: Vec<f64> = (0..traj.num_levels())
        .map(|k| BurgersProblem::eta_mass(traj.level(k), dx))
        .collect();
    let drift = BurgersProblem::eta_mass_drift(&traj);
    let summary = SolveSummary {
        solver: cfg.solver.as_str(),
        cost,
        sup_norm: traj.data().iter().fold(0.0f64, |m, &v| m.max(v.abs())),
        eta_mass_initial: eta_mass[0],
        eta_mass_drift: drift,
        n_time_levels: traj.num_levels(),
        n_cells: sgrid.n_cells(),
        dt: tgrid.dt(),
        dx,
        eta_mass,
        config_echo: cfg.echo(),
    };

    let dir = &cfg.out_dir;
    io::write_atomic(
        &dir.join("trajectory.csv"),
        &io::render(|b| traj.write_csv(b))?,
    )?;
    io::write_atomic(
        &dir.join("trajectory.bin"),
        &io::render(|b| traj.write_binary(b))?,
    )?;
    io::write_json_atomic(&dir.join("summary.json"), &summary)?;
    if let Some(diag) = &fp_diag {
        io::write_json_atomic(&dir.join("fixed_point.json"), diag)?;
    }
    write_echo(cfg)?;
    println!(
        "solve: cost = {cost}, eta-mass drift = {drift:.2e}, {} levels x {} cells -> {}",
        summary.n_time_levels,
        summary.n_cells,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct OptimizeSummary {
    j_star: f64,
    iterations: usize,
    termination: TerminationReason,
    stalled: bool,
    config_echo: String,
}

fn cmd_optimize(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.problem.system_spec()?;
    let grids = build_grids(cfg, &spec, &[])?;
    let target = cfg.problem.target_samples(&grids.sgrid);
    let scfg = solver_config(cfg);
    let objective = crate::optimizer::burgers_objective(&cfg.problem, &grids, &target, &scfg)?;
    let initial = optimizer_initial(cfg, spec.num_modes())?;
    let result = optimize_relaxed(objective, initial, &cfg.optimize)?;

    let dir = &cfg.out_dir;
    io::write_atomic(
        &dir.join("beta_star.csv"),
        &io::render(|b| io::write_beta_csv(b, &result.beta))?,
    )?;
    io::write_atomic(
        &dir.join("iteration_log.csv"),
        &io::render(|b| io::write_iteration_log_csv(b, &result.log))?,
    )?;
    io::write_json_atomic(
        &dir.join("optimize.json"),
        &OptimizeSummary {
            j_star: result.cost,
            iterations: result.log.len(),
            termination: result.reason,
            stalled: result.reason == TerminationReason::Stalled,
            config_echo: cfg.echo(),
        },
    )?;
    write_echo(cfg)?;
    println!(
        "optimize: J* = {} after {} accepted steps ({}) -> {}",
        result.cost,
        result.log.len(),
        termination_label(result.reason),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct StudySummary<'a> {
    j_star: f64,
    termination: TerminationReason,
    iterations: usize,
    rows: &'a [RelaxRow],
    config_echo: String,
}

fn cmd_study(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.problem.system_spec()?;
    let counts = cfg.rounding_counts()?;
    let grids = build_grids(cfg, &spec, &counts)?;
    let initial = optimizer_initial(cfg, spec.num_modes())?;
    let report = relax_round_study(
        &cfg.problem,
        &grids,
        &cfg.dt_sequence,
        &cfg.optimize,
        &solver_config(cfg),
        initial,
    )?;

    let dir = &cfg.out_dir;
    io::write_atomic(
        &dir.join("study.csv"),
        &io::render(|b| io::write_study_csv(b, &report.rows))?,
    )?;
    io::write_json_atomic(
        &dir.join("study.json"),
        &StudySummary {
            j_star: report.j_star,
            termination: report.termination,
            iterations: report.log.len(),
            rows: &report.rows,
            config_echo: cfg.echo(),
        },
    )?;
    io::write_atomic(
        &dir.join("beta_star.csv"),
        &io::render(|b| io::write_beta_csv(b, &report.beta_star))?,
    )?;
    io::write_atomic(
        &dir.join("iteration_log.csv"),
        &io::render(|b| io::write_iteration_log_csv(b, &report.log))?,
    )?;
    for (i, alpha) in report.alphas.iter().enumerate() {
        io::write_atomic(
            &dir.join(format!("alpha_{}.csv", i + 1)),
            &io::render(|b| io::write_alpha_csv(b, alpha, spec.mode_labels()))?,
        )?;
    }
    // Final-time eta profiles: the relaxed optimum, then one per level;
    // together with the initial and target data these back the plots.
    for (i, eta) in report.final_etas.iter().enumerate() {
        let name = if i == 0 {
            "final_state_relaxed.csv".to_string()
        } else {
            format!("final_state_{i}.csv")
        };
        io::write_atomic(
            &dir.join(name),
            &io::render(|b| io::write_profile_csv(b, &grids.sgrid, eta))?,
        )?;
    }
    let eta0: Vec<f64> = (0..grids.sgrid.n_cells())
        .map(|i| cfg.problem.eta0.eval(grids.sgrid.center(i), cfg.problem.length))
        .collect();
    io::write_atomic(
        &dir.join("initial_eta.csv"),
        &io::render(|b| io::write_profile_csv(b, &grids.sgrid, &eta0))?,
    )?;
    io::write_atomic(
        &dir.join("target_eta.csv"),
        &io::render(|b| {
            io::write_profile_csv(b, &grids.sgrid, &cfg.problem.target_samples(&grids.sgrid))
        })?,
    )?;
    write_echo(cfg)?;
    println!(
        "study: J* = {} ({}), {} rounding levels -> {}",
        report.j_star,
        termination_label(report.termination),
        report.rows.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct GapSummary<'a> {
    rows: &'a [GapRow],
    max_ratio: f64,
    config_echo: String,
}

fn cmd_gapcheck(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.problem.system_spec()?;
    let beta = load_solve_beta(cfg, spec.num_modes())?;
    let mut aligns = cfg.rounding_counts()?;
    aligns.push(beta.grid().n_intervals());
    let sgrid = SpaceGrid::new(cfg.problem.length, cfg.nx)?;
    let solver = aligned_solver_grid(cfg, &spec, &sgrid, &aligns)?;
    let grids = StudyGrids {
        sgrid,
        control: *beta.grid(),
        solver,
    };
    let u = ContinuousControl::none(*beta.grid());
    let report = gap_study(
        &spec,
        &grids,
        &u,
        &beta,
        &cfg.dt_sequence,
        &solver_config(cfg),
    )?;

    let dir = &cfg.out_dir;
    io::write_atomic(
        &dir.join("gapcheck.csv"),
        &io::render(|b| io::write_gap_csv(b, &report.rows))?,
    )?;
    io::write_json_atomic(
        &dir.join("gapcheck.json"),
        &GapSummary {
            rows: &report.rows,
            max_ratio: report.max_ratio,
            config_echo: cfg.echo(),
        },
    )?;
    write_echo(cfg)?;
    println!(
        "gapcheck: max distance/deviation = {} over {} levels -> {}",
        report.max_ratio,
        report.rows.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RoundRow {
    k: usize,
    dt: f64,
    deviation: f64,
    bound: f64,
}

#[derive(Serialize)]
struct RoundSummary {
    rows: Vec<RoundRow>,
    config_echo: String,
}

fn cmd_round(cfg: &RunConfig) -> Result<()> {
    let input = cfg.round_input.as_ref().ok_or_else(|| {
        Error::Config("the round command needs `[round] input = <relaxed-control csv>`".into())
    })?;
    let beta = io::read_beta_file(input)?;
    let labels: Vec<String> = (0..beta.num_modes()).map(|j| format!("mode_{j}")).collect();

    let dir = &cfg.out_dir;
    let mut rows = Vec::new();
    for (i, &dt) in cfg.dt_sequence.iter().enumerate() {
        let grid = rounding_grid(beta.grid().horizon(), dt)?;
        let report = sum_up_rounding(&beta, &grid)?;
        io::write_atomic(
            &dir.join(format!("alpha_{}.csv", i + 1)),
            &io::render(|b| io::write_alpha_csv(b, &report.binary, &labels))?,
        )?;
        rows.push(RoundRow {
            k: i + 1,
            dt,
            deviation: report.deviation,
            bound: report.bound,
        });
    }

    let mut csv = String::from("k,dt,deviation,bound\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.k, r.dt, r.deviation, r.bound));
    }
    io::write_atomic(&dir.join("round.csv"), csv.as_bytes())?;
    io::write_json_atomic(
        &dir.join("round.json"),
        &RoundSummary {
            rows,
            config_echo: cfg.echo(),
        },
    )?;
    write_echo(cfg)?;
    println!(
        "round: {} grids from {} -> {}",
        cfg.dt_sequence.len(),
        input.display(),
        dir.display()
    );
    Ok(())
}

/// Adjoint gradient vs central finite differences along random tangent
/// directions; returns exit code 0 on agreement, 3 on mismatch.
fn cmd_selftest(cfg: &RunConfig) -> Result<i32> {
    let spec = cfg.problem.system_spec()?;
    let grids = build_grids(cfg, &spec, &[])?;
    let target = cfg.problem.target_samples(&grids.sgrid);
    let scfg = solver_config(cfg);
    let modes = spec.num_modes();
    let n_t = grids.control.n_intervals();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Random interior point: entries bounded away from the simplex edge
    // so central differences never leave [0, 1].
    let mut values = Array2::zeros((n_t, modes));
    for k in 0..n_t {
        let raw: Vec<f64> = (0..modes).map(|_| rng.gen_range(0.5..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        for (j, v) in raw.iter().enumerate() {
            values[[k, j]] = v / sum;
        }
    }
    let beta = RelaxedControl::new(grids.control, values)?;

    let u = ContinuousControl::none(grids.control);
    let state = solve_forward(&spec, &u, &beta, &grids.solver, &grids.sgrid, &scfg)?;
    let adjoint = solve_adjoint(&cfg.problem, &state, &beta, &target)?;
    let grad = reduced_gradient(&cfg.problem, &state, &adjoint, &grids.control)?;

    let objective = |b: &RelaxedControl| -> Result<f64> {
        let ub = ContinuousControl::none(*b.grid());
        let y = solve_forward(&spec, &ub, b, &grids.solver, &grids.sgrid, &scfg)?;
        tracking_cost(&y, &target)
    };

    let n_dirs = 10;
    let h = 1e-5;
    let mut failures = 0;
    for d in 1..=n_dirs {
        let mut dir = Array2::zeros((n_t, modes));
        for k in 0..n_t {
            let raw: Vec<f64> = (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean: f64 = raw.iter().sum::<f64>() / modes as f64;
            for (j, v) in raw.iter().enumerate() {
                dir[[k, j]] = v - mean;
            }
        }
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            dir.mapv_inplace(|v| v / norm);
        }
        let from_adjoint = grad.directional(&dir)?;
        let from_fd = fd_directional(objective, &beta, &dir, h)?;
        let rel = (from_adjoint - from_fd).abs() / from_fd.abs().max(1e-12);
        let ok = rel <= SELFTEST_REL_TOL && from_adjoint * from_fd >= 0.0;
        println!(
            "direction {d}: adjoint = {from_adjoint:+.6e}, fd = {from_fd:+.6e}, \
             rel_err = {rel:.2e} {}",
            if ok { "ok" } else { "MISMATCH" }
        );
        if !ok {
            failures += 1;
        }
    }
    if failures == 0 {
        println!("selftest: PASS ({n_dirs} directions)");
        Ok(0)
    } else {
        eprintln!("selftest: FAIL ({failures} of {n_dirs} directions)");
        Ok(3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::Profile;
    use std::fs;
    use std::path::Path;

    fn tiny_config(dir: &Path) -> RunConfig {
        RunConfig {
            problem: BurgersProblem {
                length: std::f64::consts::TAU,
                horizon: 1.0,
                a: 2.0,
                kappa: 1e-2,
                eta0: Profile::Sine {
                    mean: 1.0,
                    amplitude: 0.5,
                },
                target: Profile::OneMinusSin,
            },
            nx: 16,
            control_intervals: 4,
            dt_sequence: vec![0.5, 0.25],
            out_dir: dir.to_path_buf(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn exit_codes_split_config_from_numerics() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::GridMismatch("x".into())), 2);
        assert_eq!(
            exit_code(&Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "gone"
            ))),
            2
        );
        assert_eq!(exit_code(&Error::NonFiniteState { step: None }), 3);
        assert_eq!(exit_code(&Error::UnstableStep { courant: 2.0 }), 3);
        assert_eq!(
            exit_code(&Error::FixedPointStall {
                max_iter: 5,
                residual: 1.0
            }),
            3
        );
    }

    #[test]
    fn grid_alignment_covers_control_and_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let spec = cfg.problem.system_spec().unwrap();
        let counts = cfg.rounding_counts().unwrap();
        assert_eq!(counts, vec![2, 4]);
        let grids = build_grids(&cfg, &spec, &counts).unwrap();
        let n = grids.solver.n_intervals();
        assert_eq!(n % 4, 0);
        assert!(grids.solver.is_refinement_of(&grids.control));
        // CFL bound survives the round-up.
        assert!(grids.solver.dt() <= cfg.cfl * grids.sgrid.dx() / cfg.problem.a + 1e-15);
    }

    #[test]
    fn constant_beta_lands_on_the_control_grid() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let beta = load_solve_beta(&cfg, 2).unwrap();
        assert_eq!(beta.grid().n_intervals(), 4);
        assert_eq!(beta.values()[[2, 0]], 0.5);
        assert!(load_solve_beta(&cfg, 3).is_err());
    }

    #[test]
    fn solve_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        cmd_solve(&cfg).unwrap();
        for name in ["trajectory.csv", "trajectory.bin", "summary.json", "run_config.cfg"] {
            assert!(dir.path().join(name).is_file(), "{name} missing");
        }
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["solver"], "fv");
        assert!(summary["eta_mass_drift"].as_f64().unwrap() < 1e-10);
        let echo = fs::read_to_string(dir.path().join("run_config.cfg")).unwrap();
        assert_eq!(RunConfig::parse(&echo).unwrap(), cfg);
    }

    #[test]
    fn characteristics_solver_also_reports_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.problem.kappa = 1.0;
        cfg.solver = SolverChoice::Characteristics;
        cfg.nx = 12;
        cmd_solve(&cfg).unwrap();
        let diag: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("fixed_point.json")).unwrap())
                .unwrap();
        assert!(diag["residuals"].as_array().unwrap().len() >= 2);
    }

    #[test]
    fn optimize_writes_log_and_result() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.optimize.max_iters = 3;
        cmd_optimize(&cfg).unwrap();
        let log = fs::read_to_string(dir.path().join("iteration_log.csv")).unwrap();
        assert!(log.starts_with("iter,J,step_size,pg_norm"));
        let result: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("optimize.json")).unwrap())
                .unwrap();
        assert!(result["j_star"].as_f64().unwrap().is_finite());
        assert!(result["stalled"].is_boolean());
        let beta = io::read_beta_file(&dir.path().join("beta_star.csv")).unwrap();
        assert_eq!(beta.grid().n_intervals(), 4);
    }

    #[test]
    fn study_emits_the_full_artifact_set() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.optimize.max_iters = 2;
        cmd_study(&cfg).unwrap();
        for name in [
            "study.csv",
            "study.json",
            "beta_star.csv",
            "iteration_log.csv",
            "alpha_1.csv",
            "alpha_2.csv",
            "final_state_relaxed.csv",
            "final_state_1.csv",
            "final_state_2.csv",
            "initial_eta.csv",
            "target_eta.csv",
            "run_config.cfg",
        ] {
            assert!(dir.path().join(name).is_file(), "{name} missing");
        }
        let csv = fs::read_to_string(dir.path().join("study.csv")).unwrap();
        assert!(csv.starts_with("k,dt,epsilon,J_v,abs_gap,rel_gap\n"));
        assert_eq!(csv.lines().count(), 1 + cfg.dt_sequence.len());
    }

    #[test]
    fn gapcheck_reports_rows_and_ratio() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        cmd_gapcheck(&cfg).unwrap();
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("gapcheck.json")).unwrap())
                .unwrap();
        assert_eq!(report["rows"].as_array().unwrap().len(), 2);
        assert!(report["max_ratio"].as_f64().unwrap().is_finite());
    }

    #[test]
    fn round_requires_an_input_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        assert!(matches!(cmd_round(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn round_consumes_a_beta_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let beta = RelaxedControl::constant(grid, &[0.75, 0.25]).unwrap();
        let path = dir.path().join("beta_in.csv");
        io::write_atomic(&path, &io::render(|b| io::write_beta_csv(b, &beta)).unwrap()).unwrap();
        cfg.round_input = Some(path);
        cmd_round(&cfg).unwrap();
        let csv = fs::read_to_string(dir.path().join("round.csv")).unwrap();
        assert!(csv.starts_with("k,dt,deviation,bound\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(dir.path().join("alpha_1.csv").is_file());
        assert!(dir.path().join("alpha_2.csv").is_file());
        // Deviation never exceeds the (M-1) dt bound.
        for line in csv.lines().skip(1) {
            let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            assert!(f[2] <= f[3] + 1e-12, "{line}");
        }
    }

    #[test]
    fn selftest_passes_on_the_small_problem() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        assert_eq!(cmd_selftest(&cfg).unwrap(), 0);
    }
}
