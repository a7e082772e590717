//! Exponentially weighted trajectory norms.
//!
//! The working norm is sup over time levels of exp(-K t) times the spatial
//! L1 norm summed over components, with cell-average quadrature. K = 0
//! recovers the plain sup-in-time L1 norm; larger K discounts late times,
//! which is what makes the characteristic fixed-point map contractive.

use crate::error::{Error, Result};
use crate::trajectory::StateTrajectory;

/// Weighted norm sup_k exp(-K t_k) sum_c int |y_c(t_k, .)| dx.
pub fn dag_norm(y: &StateTrajectory, k_weight: f64) -> Result<f64> {
    y.check_finite()?;
    let dx = y.space_grid().dx();
    let mut sup = 0.0f64;
    for k in 0..y.num_levels() {
        let t = y.time_grid().level_time(k);
        let l1: f64 = y.level(k).iter().map(|v| v.abs()).sum::<f64>() * dx;
        sup = sup.max((-k_weight * t).exp() * l1);
    }
    Ok(sup)
}

/// Unweighted sup-in-time L1 distance between two trajectories on the
/// same grids.
pub fn l1_time_sup_distance(a: &StateTrajectory, b: &StateTrajectory) -> Result<f64> {
    if !a.same_layout(b) {
        return Err(Error::GridMismatch(
            "trajectories live on different grids".into(),
        ));
    }
    a.check_finite()?;
    b.check_finite()?;
    let dx = a.space_grid().dx();
    let mut sup = 0.0f64;
    for k in 0..a.num_levels() {
        let l1: f64 = a
            .level(k)
            .iter()
            .zip(b.level(k).iter())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            * dx;
        sup = sup.max(l1);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpaceGrid, TimeGrid};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grids() -> (TimeGrid, SpaceGrid) {
        (
            TimeGrid::new(1.0, 5).unwrap(),
            SpaceGrid::new(2.0, 8).unwrap(),
        )
    }

    fn random_traj(seed: u64) -> StateTrajectory {
        let (tg, sg) = grids();
        let mut traj = StateTrajectory::zeros(tg, sg, 2, 1, "test");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..traj.num_levels() {
            for v in traj.level_mut(k).iter_mut() {
                *v = rng.gen_range(-3.0..3.0);
            }
        }
        traj
    }

    /// Independent double-loop evaluation used as the oracle.
    fn dag_norm_oracle(y: &StateTrajectory, kw: f64) -> f64 {
        let mut best = 0.0f64;
        for k in 0..y.num_levels() {
            let mut l1 = 0.0;
            for i in 0..y.space_grid().n_cells() {
                for c in 0..y.num_components() {
                    l1 += y.level(k)[[i, c]].abs() * y.space_grid().dx();
                }
            }
            let t = y.time_grid().level_time(k);
            if (-kw * t).exp() * l1 > best {
                best = (-kw * t).exp() * l1;
            }
        }
        best
    }

    #[test]
    fn zero_trajectory_has_zero_norm() {
        let (tg, sg) = grids();
        let traj = StateTrajectory::zeros(tg, sg, 2, 1, "test");
        assert_eq!(dag_norm(&traj, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_one_single_component() {
        // One component identically 1 on [0,2]: L1 mass 2, sup at t = 0.
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let sg = SpaceGrid::new(2.0, 10).unwrap();
        let mut traj = StateTrajectory::zeros(tg, sg, 1, 0, "test");
        for k in 0..traj.num_levels() {
            traj.level_mut(k).fill(1.0);
        }
        for kw in [0.0, 0.7, 5.0] {
            assert!((dag_norm(&traj, kw).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_double_loop_oracle() {
        for seed in 0..20 {
            let traj = random_traj(seed);
            for kw in [0.0, 0.3, 2.0] {
                let fast = dag_norm(&traj, kw).unwrap();
                let slow = dag_norm_oracle(&traj, kw);
                assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
            }
        }
    }

    #[test]
    fn weight_sandwich() {
        // exp(-KT) * |y|_0 <= |y|_K <= |y|_0.
        for seed in 0..10 {
            let traj = random_traj(seed);
            let kw = 1.3;
            let n0 = dag_norm(&traj, 0.0).unwrap();
            let nk = dag_norm(&traj, kw).unwrap();
            let t_end = traj.time_grid().horizon();
            assert!(nk <= n0 + 1e-12);
            assert!(n0 <= (kw * t_end).exp() * nk + 1e-12);
        }
    }

    #[test]
    fn norm_axioms_hold() {
        let a = random_traj(3);
        let mut scaled = a.clone();
        for k in 0..scaled.num_levels() {
            scaled.level_mut(k).mapv_inplace(|v| -2.5 * v);
        }
        let na = dag_norm(&a, 0.8).unwrap();
        let ns = dag_norm(&scaled, 0.8).unwrap();
        assert!((ns - 2.5 * na).abs() < 1e-10 * ns.max(1.0));
    }

    #[test]
    fn distance_basics() {
        let a = random_traj(5);
        assert_eq!(l1_time_sup_distance(&a, &a).unwrap(), 0.0);

        // Shift by a constant c: distance is |c| * L at every level.
        let mut b = a.clone();
        for k in 0..b.num_levels() {
            b.level_mut(k).mapv_inplace(|v| v + 0.75);
        }
        let d = l1_time_sup_distance(&a, &b).unwrap();
        let expected = 0.75 * a.space_grid().length() * a.num_components() as f64;
        assert!((d - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn distance_rejects_mismatched_grids() {
        let a = random_traj(1);
        let tg = TimeGrid::new(1.0, 6).unwrap();
        let sg = SpaceGrid::new(2.0, 8).unwrap();
        let b = StateTrajectory::zeros(tg, sg, 2, 1, "test");
        assert!(matches!(
            l1_time_sup_distance(&a, &b),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = random_traj(2);
        a.level_mut(0)[[0, 0]] = f64::INFINITY;
        assert!(matches!(
            dag_norm(&a, 0.0),
            Err(Error::NonFiniteState { .. })
        ));
    }
}
