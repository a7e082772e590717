use thiserror::Error;

/// Everything that can go wrong across solvers, rounding, and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite state{}", fmt_step(.step))]
    NonFiniteState { step: Option<usize> },

    #[error("degenerate speeds: max |lambda| vanishes on the sampled grid")]
    DegenerateSpeeds,

    #[error("unstable step requested: Courant number {courant:.6} exceeds 1")]
    UnstableStep { courant: f64 },

    #[error("Newton failed in cell {cell}: residual {residual:.3e} after {iters} iterations")]
    NewtonDivergence {
        cell: usize,
        residual: f64,
        iters: usize,
    },

    #[error("fixed point did not contract within {max_iter} sweeps (last residual {residual:.3e})")]
    FixedPointStall { max_iter: usize, residual: f64 },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("infeasible perturbation: {0}")]
    InfeasiblePerturbation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_step(step: &Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step {k}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
