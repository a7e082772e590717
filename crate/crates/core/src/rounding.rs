//! Sum-up rounding of relaxed controls.
//!
//! Given simplex-valued weights beta on a fine grid, the rounding picks one
//! active mode per target interval by accumulating the integrated weight of
//! each mode and activating the one that is furthest behind its integral.
//! The running integral of beta - alpha then never exceeds (M-1) times the
//! target interval length, which is the lever every relaxation-gap bound
//! rests on.

use crate::control::{BinaryControl, RelaxedControl};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use serde::Serialize;

/// Outcome of one rounding pass.
#[derive(Debug, Clone)]
pub struct RoundingReport {
    pub binary: BinaryControl,
    /// Exact sup-in-time deviation of the running integral; never
    /// exceeds `bound`.
    pub deviation: f64,
    /// Guaranteed bound (M - 1) * dt of the target grid.
    pub bound: f64,
}

/// Mode schedule in terms of the system's mode labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModeSchedule {
    pub n_intervals: usize,
    pub labels: Vec<String>,
}

fn check_compatible(beta: &RelaxedControl, target: &TimeGrid) -> Result<usize> {
    let bg = beta.grid();
    if !bg.same_extent(target) {
        return Err(Error::GridMismatch(format!(
            "control horizon {} differs from target horizon {}",
            bg.horizon(),
            target.horizon()
        )));
    }
    let (nb, na) = (bg.n_intervals(), target.n_intervals());
    if nb % na != 0 && na % nb != 0 {
        return Err(Error::GridMismatch(format!(
            "target intervals {na} neither divide nor refine control intervals {nb}"
        )));
    }
    Ok(na)
}

/// Exact integral of each mode weight over target interval `k`.
fn interval_integrals(beta: &RelaxedControl, target: &TimeGrid, k: usize) -> Vec<f64> {
    let nb = beta.grid().n_intervals();
    let na = target.n_intervals();
    let m = beta.num_modes();
    let mut out = vec![0.0; m];
    if nb >= na {
        // Control grid refines the target: sum whole sub-intervals.
        let ratio = nb / na;
        let dtb = beta.grid().dt();
        for l in k * ratio..(k + 1) * ratio {
            for (j, v) in out.iter_mut().enumerate() {
                *v += beta.values()[[l, j]] * dtb;
            }
        }
    } else {
        // Target refines the control grid: constant on the whole interval.
        let ratio = na / nb;
        let dta = target.dt();
        for (j, v) in out.iter_mut().enumerate() {
            *v = beta.values()[[k / ratio, j]] * dta;
        }
    }
    out
}

/// Sum-up rounding of `beta` onto `target`. The grids must have the same
/// horizon and one interval count must divide the other.
pub fn sum_up_rounding(beta: &RelaxedControl, target: &TimeGrid) -> Result<RoundingReport> {
    let na = check_compatible(beta, target)?;
    let m = beta.num_modes();
    let dt = target.dt();

    let mut cumulative = vec![0.0; m]; // integral of beta_j up to current edge
    let mut activated = vec![0usize; m]; // how many intervals mode j has held
    let mut active = Vec::with_capacity(na);
    for k in 0..na {
        let ints = interval_integrals(beta, target, k);
        let mut best = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for j in 0..m {
            cumulative[j] += ints[j];
            let p = cumulative[j] - activated[j] as f64 * dt;
            // Strict comparison keeps the smallest index on ties.
            if p > best_p {
                best_p = p;
                best = j;
            }
        }
        activated[best] += 1;
        active.push(best);
    }

    let binary = BinaryControl::new(*target, active, m)?;
    let deviation = integrated_deviation(beta, &binary)?;
    Ok(RoundingReport {
        binary,
        deviation,
        bound: (m as f64 - 1.0) * dt,
    })
}

/// Exact value of max_j sup_t |int_0^t (beta_j - alpha_j) ds|.
///
/// Both controls are piecewise constant, so each running integral is
/// piecewise linear and attains its sup at a grid breakpoint of either
/// control; the merged breakpoints are walked with integer index
/// comparisons so no edge is ever missed to roundoff.
pub fn integrated_deviation(beta: &RelaxedControl, alpha: &BinaryControl) -> Result<f64> {
    if !beta.grid().same_extent(alpha.grid()) {
        return Err(Error::GridMismatch(
            "deviation of controls with different horizons".into(),
        ));
    }
    if beta.num_modes() != alpha.num_modes() {
        return Err(Error::GridMismatch(format!(
            "mode counts differ: {} vs {}",
            beta.num_modes(),
            alpha.num_modes()
        )));
    }
    let horizon = beta.grid().horizon();
    let (nb, na) = (
        beta.grid().n_intervals() as u64,
        alpha.grid().n_intervals() as u64,
    );
    let m = beta.num_modes();

    let mut integral = vec![0.0f64; m];
    let mut dev = 0.0f64;
    // Edge counters: next untouched breakpoint index of each grid.
    let (mut ib, mut ia) = (1u64, 1u64);
    let mut t_prev = 0.0;
    loop {
        // Next merged breakpoint, compared exactly via cross products.
        let beta_next = ib * na;
        let alpha_next = ia * nb;
        let (t_next, adv_b, adv_a) = if beta_next < alpha_next {
            (horizon * ib as f64 / nb as f64, true, false)
        } else if alpha_next < beta_next {
            (horizon * ia as f64 / na as f64, false, true)
        } else {
            (horizon * ib as f64 / nb as f64, true, true)
        };
        let len = t_next - t_prev;
        let kb = (ib - 1) as usize;
        let ka = (ia - 1) as usize;
        let picked = alpha.active_modes()[ka];
        for (j, acc) in integral.iter_mut().enumerate() {
            let a = if picked == j { 1.0 } else { 0.0 };
            *acc += (beta.values()[[kb, j]] - a) * len;
            dev = dev.max(acc.abs());
        }
        if adv_b {
            ib += 1;
        }
        if adv_a {
            ia += 1;
        }
        t_prev = t_next;
        if ib > nb || ia > na {
            break;
        }
    }
    Ok(dev)
}

/// Maps a binary control to the schedule of mode labels.
pub fn mode_sequence_to_v(alpha: &BinaryControl, mode_labels: &[String]) -> Result<ModeSchedule> {
    if mode_labels.len() != alpha.num_modes() {
        return Err(Error::InvalidControl(format!(
            "{} labels for {} modes",
            mode_labels.len(),
            alpha.num_modes()
        )));
    }
    Ok(ModeSchedule {
        n_intervals: alpha.grid().n_intervals(),
        labels: alpha
            .active_modes()
            .iter()
            .map(|&j| mode_labels[j].clone())
            .collect(),
    })
}

/// Inverse of [`mode_sequence_to_v`]; labels must be unique for this to be
/// well defined, which the system validation enforces.
pub fn v_to_mode_sequence(
    schedule: &ModeSchedule,
    grid: TimeGrid,
    mode_labels: &[String],
) -> Result<BinaryControl> {
    let active = schedule
        .labels
        .iter()
        .map(|l| {
            mode_labels
                .iter()
                .position(|m| m == l)
                .ok_or_else(|| Error::InvalidControl(format!("unknown mode label {l:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    BinaryControl::new(grid, active, mode_labels.len())
}
