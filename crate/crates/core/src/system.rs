//! System description for 1D semilinear hyperbolic problems in diagonal
//! form:
//!
//!   y_t + Lambda(x) y_x = sum_j beta_j(t) f(y, u(t), mode_j)
//!
//! on (0,T) x (0,L), with Lambda = diag(lambda_1..lambda_n), lambda_i < 0
//! for the first r components and > 0 for the rest. Boundary coupling
//! feeds the outflow traces back into the inflow traces through a block
//! matrix G plus time-dependent data d, which covers periodic closure
//! (identity diagonal blocks) and reflection-type couplings alike.

use crate::control::ControlBox;
use crate::error::{Error, Result};
use std::sync::Arc;

pub type SpeedFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;
/// (y, u, mode) -> f(y, u, v_mode), one vector per call.
pub type SourceFn = dyn Fn(&[f64], &[f64], usize) -> Vec<f64> + Send + Sync;
/// Row-major n*n Jacobian of the source in y.
pub type SourceJacobianFn = dyn Fn(&[f64], &[f64], usize) -> Vec<f64> + Send + Sync;
/// Closed-form solve of y+ = y + dt * sum_j beta_j f(y+, u, j), for
/// systems whose implicit source step admits one: (y, u, beta_row, dt).
pub type ImplicitStepFn = dyn Fn(&[f64], &[f64], &[f64], f64) -> Vec<f64> + Send + Sync;

/// Piecewise-smooth vector-valued data with explicit breakpoints; the
/// breakpoint list starts and ends at the domain endpoints.
#[derive(Clone)]
pub struct PiecewiseData {
    breakpoints: Vec<f64>,
    eval: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
}

impl PiecewiseData {
    pub fn new(
        breakpoints: Vec<f64>,
        eval: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidSystem(
                "breakpoint list must at least contain the endpoints".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSystem(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { breakpoints, eval })
    }

    /// Smooth data: breakpoints are just the endpoints.
    pub fn smooth(
        start: f64,
        end: f64,
        eval: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    ) -> Result<Self> {
        Self::new(vec![start, end], eval)
    }

    pub fn zero(start: f64, end: f64, dim: usize) -> Self {
        Self {
            breakpoints: vec![start, end],
            eval: Arc::new(move |_| vec![0.0; dim]),
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        (self.eval)(s)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }
}

impl std::fmt::Debug for PiecewiseData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PiecewiseData")
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

/// Boundary coupling (y_-(t,L), y_+(t,0)) = G (y_-(t,0), y_+(t,L)) + d(t),
/// stored as the four blocks of G in row-major order.
#[derive(Debug, Clone)]
pub struct BoundaryBlocks {
    r: usize,
    n: usize,
    gmm: Vec<f64>, // r x r
    gmp: Vec<f64>, // r x (n-r)
    gpm: Vec<f64>, // (n-r) x r
    gpp: Vec<f64>, // (n-r) x (n-r)
}

impl BoundaryBlocks {
    pub fn new(
        r: usize,
        n: usize,
        gmm: Vec<f64>,
        gmp: Vec<f64>,
        gpm: Vec<f64>,
        gpp: Vec<f64>,
    ) -> Result<Self> {
        let p = n - r;
        if gmm.len() != r * r || gmp.len() != r * p || gpm.len() != p * r || gpp.len() != p * p {
            return Err(Error::InvalidSystem("boundary block shapes mismatch".into()));
        }
        Ok(Self {
            r,
            n,
            gmm,
            gmp,
            gpm,
            gpp,
        })
    }

    /// Zero coupling: inflow is pure boundary data.
    pub fn zero(r: usize, n: usize) -> Self {
        let p = n - r;
        Self {
            r,
            n,
            gmm: vec![0.0; r * r],
            gmp: vec![0.0; r * p],
            gpm: vec![0.0; p * r],
            gpp: vec![0.0; p * p],
        }
    }

    /// Periodic closure: y_-(t,L) = y_-(t,0) and y_+(t,0) = y_+(t,L).
    pub fn periodic(r: usize, n: usize) -> Self {
        let p = n - r;
        let mut b = Self::zero(r, n);
        for i in 0..r {
            b.gmm[i * r + i] = 1.0;
        }
        for i in 0..p {
            b.gpp[i * p + i] = 1.0;
        }
        b
    }

    /// Applies the coupling to the outflow traces; returns the inflow
    /// traces (y_- at x = L, y_+ at x = 0), before adding boundary data.
    pub fn apply(&self, minus_at_0: &[f64], plus_at_l: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (r, p) = (self.r, self.n - self.r);
        debug_assert_eq!(minus_at_0.len(), r);
        debug_assert_eq!(plus_at_l.len(), p);
        let mut minus_at_l = vec![0.0; r];
        for i in 0..r {
            for j in 0..r {
                minus_at_l[i] += self.gmm[i * r + j] * minus_at_0[j];
            }
            for j in 0..p {
                minus_at_l[i] += self.gmp[i * p + j] * plus_at_l[j];
            }
        }
        let mut plus_at_0 = vec![0.0; p];
        for i in 0..p {
            for j in 0..r {
                plus_at_0[i] += self.gpm[i * r + j] * minus_at_0[j];
            }
            for j in 0..p {
                plus_at_0[i] += self.gpp[i * p + j] * plus_at_l[j];
            }
        }
        (minus_at_l, plus_at_0)
    }

    /// Max absolute row sum over the full matrix.
    pub fn row_sum_norm(&self) -> f64 {
        let (r, p) = (self.r, self.n - self.r);
        let mut best = 0.0f64;
        for i in 0..r {
            let s: f64 = (0..r).map(|j| self.gmm[i * r + j].abs()).sum::<f64>()
                + (0..p).map(|j| self.gmp[i * p + j].abs()).sum::<f64>();
            best = best.max(s);
        }
        for i in 0..p {
            let s: f64 = (0..r).map(|j| self.gpm[i * r + j].abs()).sum::<f64>()
                + (0..p).map(|j| self.gpp[i * p + j].abs()).sum::<f64>();
            best = best.max(s);
        }
        best
    }

    pub fn is_periodic_pattern(&self) -> bool {
        let (r, p) = (self.r, self.n - self.r);
        let id = |v: &[f64], dim: usize| {
            v.iter().enumerate().all(|(idx, &x)| {
                let (i, j) = (idx / dim.max(1), idx % dim.max(1));
                if i == j {
                    (x - 1.0).abs() < 1e-14
                } else {
                    x.abs() < 1e-14
                }
            })
        };
        id(&self.gmm, r)
            && id(&self.gpp, p)
            && self.gmp.iter().all(|&x| x.abs() < 1e-14)
            && self.gpm.iter().all(|&x| x.abs() < 1e-14)
    }
}

/// Everything needed to pose the problem; validated into a [`SystemSpec`].
pub struct SystemDef {
    pub n: usize,
    /// Number of leading components with negative speed.
    pub r: usize,
    pub length: f64,
    pub horizon: f64,
    pub lambda: Arc<SpeedFn>,
    /// Declared Lipschitz constant of x -> lambda(x).
    pub lambda_lipschitz: f64,
    /// One human-readable label per mode; must be unique.
    pub mode_labels: Vec<String>,
    pub source: Arc<SourceFn>,
    pub source_jacobian: Option<Arc<SourceJacobianFn>>,
    pub implicit_step: Option<Arc<ImplicitStepFn>>,
    pub boundary: BoundaryBlocks,
    /// Boundary data d(t) = (d_-(t), d_+(t)), dimension n.
    pub boundary_data: PiecewiseData,
    /// Initial data on [0, L], dimension n.
    pub initial: PiecewiseData,
    pub control_box: ControlBox,
}

/// Validated problem description.
pub struct SystemSpec {
    def: SystemDef,
}

const VALIDATION_SAMPLES: usize = 129;

impl SystemSpec {
    pub fn new(def: SystemDef) -> Result<Self> {
        if def.n == 0 || def.r > def.n {
            return Err(Error::InvalidSystem(format!(
                "bad dimensions n = {}, r = {}",
                def.n, def.r
            )));
        }
        if !(def.length > 0.0 && def.horizon > 0.0) {
            return Err(Error::InvalidSystem("domain extents must be positive".into()));
        }
        if def.mode_labels.is_empty() {
            return Err(Error::InvalidSystem("at least one mode required".into()));
        }
        for (i, l) in def.mode_labels.iter().enumerate() {
            if def.mode_labels[..i].contains(l) {
                return Err(Error::InvalidSystem(format!("duplicate mode label {l:?}")));
            }
        }

        // Speed sign pattern and declared Lipschitz bound, on samples.
        let mut prev: Option<(f64, Vec<f64>)> = None;
        for s in 0..VALIDATION_SAMPLES {
            let x = def.length * s as f64 / (VALIDATION_SAMPLES - 1) as f64;
            let lam = (def.lambda)(x);
            if lam.len() != def.n {
                return Err(Error::InvalidSystem(format!(
                    "lambda returns {} components, expected {}",
                    lam.len(),
                    def.n
                )));
            }
            for (i, &l) in lam.iter().enumerate() {
                if !l.is_finite() || l == 0.0 {
                    return Err(Error::InvalidSystem(format!(
                        "lambda_{i}({x}) = {l} is not a nonzero finite speed"
                    )));
                }
                if (i < def.r) != (l < 0.0) {
                    return Err(Error::InvalidSystem(format!(
                        "lambda_{i}({x}) = {l} violates the sign split r = {}",
                        def.r
                    )));
                }
            }
            if let Some((xp, lp)) = prev {
                let h = x - xp;
                for i in 0..def.n {
                    if (lam[i] - lp[i]).abs() > def.lambda_lipschitz * h + 1e-9 {
                        return Err(Error::InvalidSystem(format!(
                            "lambda_{i} exceeds declared Lipschitz constant near x = {x}"
                        )));
                    }
                }
            }
            prev = Some((x, lam));
        }

        // f(0, u, j) = 0 for sample controls: zero stays a steady profile.
        let u_samples: Vec<Vec<f64>> = if def.control_box.dim() == 0 {
            vec![vec![]]
        } else {
            let mid: Vec<f64> = def
                .control_box
                .lower
                .iter()
                .zip(&def.control_box.upper)
                .map(|(&lo, &hi)| 0.5 * (lo + hi))
                .collect();
            vec![def.control_box.lower.clone(), mid, def.control_box.upper.clone()]
        };
        let zero = vec![0.0; def.n];
        for u in &u_samples {
            for j in 0..def.mode_labels.len() {
                let f0 = (def.source)(&zero, u, j);
                if f0.len() != def.n {
                    return Err(Error::InvalidSystem(format!(
                        "source returns {} components, expected {}",
                        f0.len(),
                        def.n
                    )));
                }
                if f0.iter().any(|v| v.abs() > 1e-9) {
                    return Err(Error::InvalidSystem(format!(
                        "source does not vanish at y = 0 for mode {j}"
                    )));
                }
            }
        }

        let (i0, i1) = def.initial.span();
        if i0.abs() > 1e-12 || (i1 - def.length).abs() > 1e-12 * def.length.max(1.0) {
            return Err(Error::InvalidSystem(
                "initial data breakpoints must span [0, L]".into(),
            ));
        }
        let (b0, b1) = def.boundary_data.span();
        if b0.abs() > 1e-12 || (b1 - def.horizon).abs() > 1e-12 * def.horizon.max(1.0) {
            return Err(Error::InvalidSystem(
                "boundary data breakpoints must span [0, T]".into(),
            ));
        }
        if def.boundary.n != def.n || def.boundary.r != def.r {
            return Err(Error::InvalidSystem("boundary block dimensions mismatch".into()));
        }

        Ok(Self { def })
    }

    pub fn n(&self) -> usize {
        self.def.n
    }

    pub fn r(&self) -> usize {
        self.def.r
    }

    pub fn length(&self) -> f64 {
        self.def.length
    }

    pub fn horizon(&self) -> f64 {
        self.def.horizon
    }

    pub fn num_modes(&self) -> usize {
        self.def.mode_labels.len()
    }

    pub fn mode_labels(&self) -> &[String] {
        &self.def.mode_labels
    }

    pub fn lambda(&self, x: f64) -> Vec<f64> {
        (self.def.lambda)(x)
    }

    pub fn lambda_lipschitz(&self) -> f64 {
        self.def.lambda_lipschitz
    }

    pub fn source(&self, y: &[f64], u: &[f64], mode: usize) -> Vec<f64> {
        (self.def.source)(y, u, mode)
    }

    /// Convex combination sum_j beta_j f(y, u, j). The loop always runs
    /// over every mode so that a binary row reproduces the single-mode
    /// source bit for bit.
    pub fn aggregated_source(&self, y: &[f64], u: &[f64], beta_row: &[f64]) -> Vec<f64> {
        debug_assert_eq!(beta_row.len(), self.num_modes());
        let mut out = vec![0.0; self.def.n];
        for (j, &w) in beta_row.iter().enumerate() {
            let f = self.source(y, u, j);
            for (o, v) in out.iter_mut().zip(f) {
                *o += w * v;
            }
        }
        out
    }

    /// Analytic Jacobian when provided, else central differences.
    pub fn aggregated_jacobian(&self, y: &[f64], u: &[f64], beta_row: &[f64]) -> Vec<f64> {
        let n = self.def.n;
        let mut jac = vec![0.0; n * n];
        if let Some(j_fn) = &self.def.source_jacobian {
            for (j, &w) in beta_row.iter().enumerate() {
                let jj = j_fn(y, u, j);
                debug_assert_eq!(jj.len(), n * n);
                for (dst, v) in jac.iter_mut().zip(jj) {
                    *dst += w * v;
                }
            }
        } else {
            let mut yp = y.to_vec();
            for col in 0..n {
                let h = 1e-7 * (1.0 + y[col].abs());
                yp[col] = y[col] + h;
                let fp = self.aggregated_source(&yp, u, beta_row);
                yp[col] = y[col] - h;
                let fm = self.aggregated_source(&yp, u, beta_row);
                yp[col] = y[col];
                for row in 0..n {
                    jac[row * n + col] = (fp[row] - fm[row]) / (2.0 * h);
                }
            }
        }
        jac
    }

    pub fn implicit_step(&self) -> Option<&Arc<ImplicitStepFn>> {
        self.def.implicit_step.as_ref()
    }

    pub fn boundary(&self) -> &BoundaryBlocks {
        &self.def.boundary
    }

    pub fn boundary_data(&self, t: f64) -> Vec<f64> {
        self.def.boundary_data.eval(t)
    }

    pub fn initial(&self) -> &PiecewiseData {
        &self.def.initial
    }

    pub fn control_box(&self) -> &ControlBox {
        &self.def.control_box
    }

    /// True when the boundary coupling is exactly the periodic pattern
    /// with vanishing data; spatial interpolation may then wrap around.
    pub fn effectively_periodic(&self) -> bool {
        if !self.def.boundary.is_periodic_pattern() {
            return false;
        }
        (0..17).all(|s| {
            let t = self.def.horizon * s as f64 / 16.0;
            self.boundary_data(t).iter().all(|v| v.abs() < 1e-14)
        })
    }

    /// Max |lambda_i(x_c)| over the given cell centers.
    pub fn max_speed(&self, centers: impl Iterator<Item = f64>) -> f64 {
        let mut best = 0.0f64;
        for x in centers {
            for l in self.lambda(x) {
                best = best.max(l.abs());
            }
        }
        best
    }
}

impl std::fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemSpec")
            .field("n", &self.def.n)
            .field("r", &self.def.r)
            .field("length", &self.def.length)
            .field("horizon", &self.def.horizon)
            .field("modes", &self.def.mode_labels)
            .finish()
    }
}
