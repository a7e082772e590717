//! Run configuration: flat key-value text with `[section]` headers.
//!
//! The format is line-based. `[section]` opens a section, `key = value`
//! assigns inside it, and lines starting with `#` are comments. Unknown
//! sections and keys are rejected so a typo fails loudly instead of
//! silently falling back to a default. `echo` renders the resolved
//! configuration in the same format; parsing an echo reproduces the
//! configuration exactly, which the tools rely on when they stamp their
//! output directories.
//!
//! Schema (defaults in parentheses):
//!
//! ```text
//! [problem]
//! preset = burgers-switch      # loads all problem fields; later keys override
//! length = 6.283185307179586
//! horizon = 3
//! a = 5
//! kappa = 0.00000001
//! eta0 = box:2                 # zero | constant:<c> | box:<amp> | one-minus-sin | sine:<mean>:<amp>
//! target = one-minus-sin
//!
//! [grid]
//! nx = 300
//! cfl = 0.5
//! control_intervals = 24
//!
//! [optimize]
//! max_iters = 500
//! c1 = 0.0001
//! backtrack = 0.5
//! max_backtracks = 30
//! stationarity_tol = 0.00000001
//! initial_beta = uniform       # or comma-separated weights
//!
//! [study]
//! dt_sequence = 1,0.5,0.25,0.125,0.0625
//!
//! [solve]
//! beta = 0.5,0.5               # constant weights for solve/gapcheck
//! beta_file = <path>           # optional; overrides beta
//! solver = fv                  # fv | characteristics
//! fp_tol = 0.0000000001
//! fp_max_iter = 64
//! k_weight = auto              # or a non-negative number
//!
//! [round]
//! input = <path>               # relaxed-control CSV for the round command
//!
//! [output]
//! dir = out
//!
//! [rng]
//! seed = 0
//! ```

use crate::burgers::{BurgersProblem, Profile};
use crate::error::{Error, Result};
use crate::optimizer::{rounding_grid, OptimizeConfig};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Forward solver selection for the solve command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    FiniteVolume,
    Characteristics,
}

impl SolverChoice {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "fv" => Ok(Self::FiniteVolume),
            "characteristics" => Ok(Self::Characteristics),
            other => Err(Error::Config(format!(
                "unknown solver {other:?} (expected fv or characteristics)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FiniteVolume => "fv",
            Self::Characteristics => "characteristics",
        }
    }
}

fn parse_profile(s: &str) -> Result<Profile> {
    let mut parts = s.split(':');
    let head = parts.next().unwrap_or("");
    let args: Vec<&str> = parts.collect();
    let num = |field: &str| -> Result<f64> {
        field
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number {field:?} in profile {s:?}")))
    };
    match (head, args.as_slice()) {
        ("zero", []) => Ok(Profile::Zero),
        ("one-minus-sin", []) => Ok(Profile::OneMinusSin),
        ("constant", [c]) => Ok(Profile::Constant(num(c)?)),
        ("box", [amp]) => Ok(Profile::BoxMiddle(num(amp)?)),
        ("sine", [mean, amp]) => Ok(Profile::Sine {
            mean: num(mean)?,
            amplitude: num(amp)?,
        }),
        _ => Err(Error::Config(format!(
            "unknown profile {s:?} (expected zero, constant:<c>, box:<amp>, \
             one-minus-sin, or sine:<mean>:<amp>)"
        ))),
    }
}

fn format_profile(p: &Profile) -> String {
    match p {
        Profile::Zero => "zero".into(),
        Profile::Constant(c) => format!("constant:{c}"),
        Profile::BoxMiddle(amp) => format!("box:{amp}"),
        Profile::OneMinusSin => "one-minus-sin".into(),
        Profile::Sine { mean, amplitude } => format!("sine:{mean}:{amplitude}"),
    }
}

fn parse_weights(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad weight {f:?}")))
        })
        .collect()
}

fn format_weights(w: &[f64]) -> String {
    w.iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Everything the command-line tools need for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: BurgersProblem,
    pub nx: usize,
    pub cfl: f64,
    pub control_intervals: usize,
    pub optimize: OptimizeConfig,
    /// Optimizer starting point; `None` means uniform weights.
    pub initial_beta: Option<Vec<f64>>,
    pub dt_sequence: Vec<f64>,
    /// Constant mode weights for the solve and gapcheck commands.
    pub beta: Vec<f64>,
    /// Optional relaxed-control CSV overriding `beta`.
    pub beta_file: Option<PathBuf>,
    pub solver: SolverChoice,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Weighted-norm exponent for the fixed-point solver; `None` = auto.
    pub k_weight: Option<f64>,
    /// Input control file for the round command.
    pub round_input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: BurgersProblem::flux_switching(),
            nx: 300,
            cfl: 0.5,
            control_intervals: 24,
            optimize: OptimizeConfig::default(),
            initial_beta: None,
            dt_sequence: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            beta: vec![0.5, 0.5],
            beta_file: None,
            solver: SolverChoice::FiniteVolume,
            fp_tol: 1e-10,
            fp_max_iter: 64,
            k_weight: None,
            round_input: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

const SECTIONS: [&str; 8] = [
    "problem", "grid", "optimize", "study", "solve", "round", "output", "rng",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = inner.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::Config(format!(
                        "line {lineno}: unknown section [{name}]"
                    )));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: expected `key = value`, got {line:?}"))
            })?;
            if section.is_empty() {
                return Err(Error::Config(format!(
                    "line {lineno}: key outside any [section]"
                )));
            }
            cfg.set(&section, key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {lineno}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let f = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("not a number: {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("not a non-negative integer: {v:?}")))
        };
        match (section, key) {
            ("problem", "preset") => match value {
                "burgers-switch" => self.problem = BurgersProblem::flux_switching(),
                other => {
                    return Err(Error::Config(format!(
                        "unknown preset {other:?} (available: burgers-switch)"
                    )))
                }
            },
            ("problem", "length") => self.problem.length = f(value)?,
            ("problem", "horizon") => self.problem.horizon = f(value)?,
            ("problem", "a") => self.problem.a = f(value)?,
            ("problem", "kappa") => self.problem.kappa = f(value)?,
            ("problem", "eta0") => self.problem.eta0 = parse_profile(value)?,
            ("problem", "target") => self.problem.target = parse_profile(value)?,
            ("grid", "nx") => self.nx = int(value)?,
            ("grid", "cfl") => self.cfl = f(value)?,
            ("grid", "control_intervals") => self.control_intervals = int(value)?,
            ("optimize", "max_iters") => self.optimize.max_iters = int(value)?,
            ("optimize", "c1") => self.optimize.c1 = f(value)?,
            ("optimize", "backtrack") => self.optimize.backtrack = f(value)?,
            ("optimize", "max_backtracks") => self.optimize.max_backtracks = int(value)?,
            ("optimize", "stationarity_tol") => self.optimize.stationarity_tol = f(value)?,
            ("optimize", "initial_beta") => {
                self.initial_beta = match value {
                    "uniform" => None,
                    list => Some(parse_weights(list)?),
                }
            }
            ("study", "dt_sequence") => self.dt_sequence = parse_weights(value)?,
            ("solve", "beta") => self.beta = parse_weights(value)?,
            ("solve", "beta_file") => self.beta_file = Some(PathBuf::from(value)),
            ("solve", "solver") => self.solver = SolverChoice::parse(value)?,
            ("solve", "fp_tol") => self.fp_tol = f(value)?,
            ("solve", "fp_max_iter") => self.fp_max_iter = int(value)?,
            ("solve", "k_weight") => {
                self.k_weight = match value {
                    "auto" => None,
                    v => Some(f(v)?),
                }
            }
            ("round", "input") => self.round_input = Some(PathBuf::from(value)),
            ("output", "dir") => self.out_dir = PathBuf::from(value),
            ("rng", "seed") => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("not a seed: {value:?}")))?
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?} in section [{section}]"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("length", self.problem.length)?;
        positive("horizon", self.problem.horizon)?;
        positive("a", self.problem.a)?;
        positive("kappa", self.problem.kappa)?;
        if self.nx < 2 {
            return Err(Error::Config(format!("nx must be at least 2, got {}", self.nx)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if self.control_intervals == 0 {
            return Err(Error::Config("control_intervals must be at least 1".into()));
        }
        self.optimize.validate()?;
        if self.dt_sequence.is_empty() {
            return Err(Error::Config("dt_sequence must not be empty".into()));
        }
        for &dt in &self.dt_sequence {
            rounding_grid(self.problem.horizon, dt)?;
        }
        check_simplex("beta", &self.beta)?;
        if let Some(w) = &self.initial_beta {
            check_simplex("initial_beta", w)?;
        }
        positive("fp_tol", self.fp_tol)?;
        if self.fp_max_iter == 0 {
            return Err(Error::Config("fp_max_iter must be at least 1".into()));
        }
        if let Some(k) = self.k_weight {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::Config(format!(
                    "k_weight must be non-negative or auto, got {k}"
                )));
            }
        }
        Ok(())
    }

    /// Renders the resolved configuration; `parse(echo()) == self`.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[problem]");
        let _ = writeln!(s, "length = {}", self.problem.length);
        let _ = writeln!(s, "horizon = {}", self.problem.horizon);
        let _ = writeln!(s, "a = {}", self.problem.a);
        let _ = writeln!(s, "kappa = {}", self.problem.kappa);
        let _ = writeln!(s, "eta0 = {}", format_profile(&self.problem.eta0));
        let _ = writeln!(s, "target = {}", format_profile(&self.problem.target));
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "nx = {}", self.nx);
        let _ = writeln!(s, "cfl = {}", self.cfl);
        let _ = writeln!(s, "control_intervals = {}", self.control_intervals);
        let _ = writeln!(s, "\n[optimize]");
        let _ = writeln!(s, "max_iters = {}", self.optimize.max_iters);
        let _ = writeln!(s, "c1 = {}", self.optimize.c1);
        let _ = writeln!(s, "backtrack = {}", self.optimize.backtrack);
        let _ = writeln!(s, "max_backtracks = {}", self.optimize.max_backtracks);
        let _ = writeln!(s, "stationarity_tol = {}", self.optimize.stationarity_tol);
        let initial = match &self.initial_beta {
            None => "uniform".to_string(),
            Some(w) => format_weights(w),
        };
        let _ = writeln!(s, "initial_beta = {initial}");
        let _ = writeln!(s, "\n[study]");
        let _ = writeln!(s, "dt_sequence = {}", format_weights(&self.dt_sequence));
        let _ = writeln!(s, "\n[solve]");
        let _ = writeln!(s, "beta = {}", format_weights(&self.beta));
        if let Some(p) = &self.beta_file {
            let _ = writeln!(s, "beta_file = {}", p.display());
        }
        let _ = writeln!(s, "solver = {}", self.solver.as_str());
        let _ = writeln!(s, "fp_tol = {}", self.fp_tol);
        let _ = writeln!(s, "fp_max_iter = {}", self.fp_max_iter);
        let kw = match self.k_weight {
            None => "auto".to_string(),
            Some(k) => k.to_string(),
        };
        let _ = writeln!(s, "k_weight = {kw}");
        if let Some(p) = &self.round_input {
            let _ = writeln!(s, "\n[round]");
            let _ = writeln!(s, "input = {}", p.display());
        }
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.out_dir.display());
        let _ = writeln!(s, "\n[rng]");
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// Command-line flag overrides, applied after file parsing.
    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if let Some(name) = &o.preset {
            self.set("problem", "preset", name)?;
        }
        if let Some(nx) = o.nx {
            self.nx = nx;
        }
        if let Some(cfl) = o.cfl {
            self.cfl = cfl;
        }
        if let Some(kappa) = o.kappa {
            self.problem.kappa = kappa;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dir) = &o.out {
            self.out_dir = dir.clone();
        }
        self.validate()
    }

    /// Interval counts of the rounding grids in `dt_sequence`.
    pub fn rounding_counts(&self) -> Result<Vec<usize>> {
        self.dt_sequence
            .iter()
            .map(|&dt| Ok(rounding_grid(self.problem.horizon, dt)?.n_intervals()))
            .collect()
    }
}

fn check_simplex(name: &str, w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Config(format!("{name} must not be empty")));
    }
    let sum: f64 = w.iter().sum();
    if !w.iter().all(|v| v.is_finite() && *v >= -1e-9) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{name} weights must be non-negative and sum to 1, got sum {sum}"
        )));
    }
    Ok(())
}

/// Flag values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub nx: Option<usize>,
    pub cfl: Option<f64>,
    pub kappa: Option<f64>,
}
