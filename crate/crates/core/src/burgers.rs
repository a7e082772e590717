//! Flux-switching relaxation of Burgers' equation.
//!
//! The physical system is
//!
//!   eta_t + xi_x = 0,
//!   xi_t + a^2 eta_x = kappa^{-1} (g(eta, mode) - xi),
//!
//! with g(eta, 0) = +eta^2/2 and g(eta, 1) = -eta^2/2: the mode decides
//! which direction the limiting conservation law transports. The solver
//! works in characteristic variables w = (w_minus, w_plus) with
//!
//!   w_minus = (a eta - xi) / (2a)   (speed -a),
//!   w_plus  = (a eta + xi) / (2a)   (speed +a),
//!
//! so eta = w_minus + w_plus and xi = a (w_plus - w_minus). The source
//! leaves eta unchanged and is affine in xi, which yields a closed-form
//! implicit Euler step that stays exact for dt/kappa up to 1e8 and keeps
//! eta-mass conserved to roundoff.

use crate::control::ControlBox;
use crate::error::Result;
use crate::grid::SpaceGrid;
use crate::system::{BoundaryBlocks, PiecewiseData, SystemDef, SystemSpec};
use crate::trajectory::StateTrajectory;
use ndarray::ArrayView2;
use std::sync::Arc;

/// Scalar spatial profiles used for initial and target data.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    Constant(f64),
    /// `amplitude` on the middle half (L/4, 3L/4), zero outside.
    BoxMiddle(f64),
    /// 1 - sin(x).
    OneMinusSin,
    /// mean + amplitude * sin(x).
    Sine { mean: f64, amplitude: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant(c) => *c,
            Profile::BoxMiddle(amp) => {
                if x > 0.25 * length && x < 0.75 * length {
                    *amp
                } else {
                    0.0
                }
            }
            Profile::OneMinusSin => 1.0 - x.sin(),
            Profile::Sine { mean, amplitude } => mean + amplitude * x.sin(),
        }
    }

    /// Breakpoints of the profile on [0, L], endpoints included.
    pub fn breakpoints(&self, length: f64) -> Vec<f64> {
        match self {
            Profile::BoxMiddle(_) => vec![0.0, 0.25 * length, 0.75 * length, length],
            _ => vec![0.0, length],
        }
    }
}

/// Problem data for the switched Jin-Xin system on a periodic domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersProblem {
    pub length: f64,
    pub horizon: f64,
    pub a: f64,
    pub kappa: f64,
    pub eta0: Profile,
    pub target: Profile,
}

impl BurgersProblem {
    /// The reference configuration: L = 2 pi, T = 3, a = 5, kappa = 1e-8,
    /// eta0 = 2 on the middle half, target 1 - sin(x).
    pub fn flux_switching() -> Self {
        Self {
            length: std::f64::consts::TAU,
            horizon: 3.0,
            a: 5.0,
            kappa: 1e-8,
            eta0: Profile::BoxMiddle(2.0),
            target: Profile::OneMinusSin,
        }
    }

    pub fn eta_from_w(w_minus: f64, w_plus: f64) -> f64 {
        w_minus + w_plus
    }

    pub fn xi_from_w(&self, w_minus: f64, w_plus: f64) -> f64 {
        self.a * (w_plus - w_minus)
    }

    pub fn w_from_eta_xi(&self, eta: f64, xi: f64) -> (f64, f64) {
        let two_a = 2.0 * self.a;
        ((self.a * eta - xi) / two_a, (self.a * eta + xi) / two_a)
    }

    /// eta on one time level of a trajectory in w variables.
    pub fn eta_slice(level: ArrayView2<f64>) -> Vec<f64> {
        (0..level.nrows())
            .map(|i| level[[i, 0]] + level[[i, 1]])
            .collect()
    }

    /// Spatial integral of eta on one level (the conserved quantity).
    pub fn eta_mass(level: ArrayView2<f64>, dx: f64) -> f64 {
        Self::eta_slice(level).iter().sum::<f64>() * dx
    }

    /// Largest relative eta-mass drift over all levels of a trajectory.
    pub fn eta_mass_drift(traj: &StateTrajectory) -> f64 {
        let dx = traj.space_grid().dx();
        let m0 = Self::eta_mass(traj.level(0), dx);
        let scale = m0.abs().max(1.0);
        (0..traj.num_levels())
            .map(|k| (Self::eta_mass(traj.level(k), dx) - m0).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn target_samples(&self, sgrid: &SpaceGrid) -> Vec<f64> {
        (0..sgrid.n_cells())
            .map(|i| self.target.eval(sgrid.center(i), self.length))
            .collect()
    }

    /// The flux selected by mode j: +eta^2/2 or -eta^2/2.
    pub fn flux(eta: f64, mode: usize) -> f64 {
        let half_sq = 0.5 * eta * eta;
        if mode == 0 {
            half_sq
        } else {
            -half_sq
        }
    }

    /// Builds the diagonal-form system in w variables.
    pub fn system_spec(&self) -> Result<SystemSpec> {
        SystemSpec::new(self.build_def(true)?)
    }

    /// Same system without the closed-form step, for cross-checking the
    /// generic Newton path.
    pub fn system_spec_newton_only(&self) -> Result<SystemSpec> {
        SystemSpec::new(self.build_def(false)?)
    }

    fn build_def(&self, with_closed_form: bool) -> Result<SystemDef> {
        let (a, kappa) = (self.a, self.kappa);
        let two_a_kappa = 2.0 * a * kappa;
        let length = self.length;
        let eta0 = self.eta0.clone();

        let source = Arc::new(move |w: &[f64], _u: &[f64], mode: usize| {
            let eta = w[0] + w[1];
            let xi = a * (w[1] - w[0]);
            let s = (xi - Self::flux(eta, mode)) / two_a_kappa;
            vec![s, -s]
        });

        let jacobian = Arc::new(move |w: &[f64], _u: &[f64], mode: usize| {
            let eta = w[0] + w[1];
            let gp = if mode == 0 { eta } else { -eta };
            let d_minus = -(a + gp) / two_a_kappa;
            let d_plus = (a - gp) / two_a_kappa;
            vec![d_minus, d_plus, -d_minus, -d_plus]
        });

        // Implicit Euler step in closed form: eta is invariant and the
        // xi-equation is affine, xi+ = (xi + r * sum_j beta_j g_j) / (1+r).
        let implicit = Arc::new(move |w: &[f64], _u: &[f64], beta_row: &[f64], dt: f64| {
            let eta = w[0] + w[1];
            let xi = a * (w[1] - w[0]);
            let mut g_mix = 0.0;
            for (j, &b) in beta_row.iter().enumerate() {
                g_mix += b * Self::flux(eta, j);
            }
            let r = dt / kappa;
            let xi_new = (xi + r * g_mix) / (1.0 + r);
            let two_a = 2.0 * a;
            vec![(a * eta - xi_new) / two_a, (a * eta + xi_new) / two_a]
        });

        let initial = PiecewiseData::new(
            eta0.breakpoints(length),
            Arc::new(move |x| {
                let half = 0.5 * eta0.eval(x, length);
                vec![half, half]
            }),
        )?;

        Ok(SystemDef {
            n: 2,
            r: 1,
            length: self.length,
            horizon: self.horizon,
            lambda: Arc::new(move |_| vec![-a, a]),
            lambda_lipschitz: 0.0,
            mode_labels: vec!["flux+".into(), "flux-".into()],
            source,
            source_jacobian: Some(jacobian),
            implicit_step: with_closed_form.then_some(implicit),
            boundary: BoundaryBlocks::periodic(1, 2),
            boundary_data: PiecewiseData::zero(0.0, self.horizon, 2),
            initial,
            control_box: ControlBox::empty(),
        })
    }
}
