//! Randomized invariants over cascades with random rational weights.

use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;

use mfspec_core::enumerate::{enumerate_support, full_sweep};
use mfspec_core::levels::LevelRow;
use mfspec_core::partition_fn::{q_grid, q_zero_row, PartitionFunctionCurve};
use mfspec_core::weights::Weight;
use mfspec_core::{DyadicCube, MeasureModel, MeasureSpec, Mode, SetFunction, SetFunctionKind};

fn cascade(dim: usize, ints: &[i64]) -> MeasureModel {
    let total: i64 = ints.iter().sum();
    let weights = ints.iter().map(|&k| Weight::rational(k, total)).collect();
    MeasureSpec::cascade(dim, 1, weights).build().unwrap()
}

/// Dimension and `2^d` non-negative integer weights, at least one positive.
fn weights(allow_zero: bool) -> impl Strategy<Value = (usize, Vec<i64>)> {
    let lo = if allow_zero { 0 } else { 1 };
    (1usize..=2)
        .prop_flat_map(move |d| (Just(d), prop::collection::vec(lo..10i64, 1 << d)))
        .prop_filter("some mass", |(_, w)| w.iter().any(|&k| k > 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rows_convex_and_dirichlet_below_neumann((d, w) in weights(false)) {
        let m = Arc::new(cascade(d, &w));
        let j = SetFunction::new(SetFunctionKind::spectral(d), m).unwrap();
        let grid = q_grid(3.0, 0.1);
        let levels: Vec<u64> = (2..=8).collect();
        let nm = PartitionFunctionCurve::compute(&j, &levels, &grid, Mode::Neumann).unwrap();
        let dm = PartitionFunctionCurve::compute(&j, &levels, &grid, Mode::Dirichlet).unwrap();
        prop_assert!(nm.max_convexity_violation() <= 1e-8);
        prop_assert!(dm.max_convexity_violation() <= 1e-8);
        for (rn, rd) in nm.values.iter().zip(&dm.values) {
            for (a, b) in rn.iter().zip(rd) {
                prop_assert!(*b <= *a + 1e-12, "D {b} > N {a}");
            }
        }
    }

    #[test]
    fn decreasing_once_values_drop_below_one((d, w) in weights(false), n in 1u64..12) {
        let m = Arc::new(cascade(d, &w));
        let j = SetFunction::new(SetFunctionKind::spectral(d), m).unwrap();
        let row = LevelRow::build(&j, n, Mode::Neumann).unwrap();
        prop_assume!(row.log2_max() < 0.0);
        let grid = q_grid(3.0, 0.1);
        for pair in grid.windows(2) {
            prop_assert!(row.tau(pair[1]) - row.tau(pair[0]) <= -1e-10);
        }
    }

    #[test]
    fn sparse_enumeration_matches_sweep((d, w) in weights(true), n in 1u32..=4) {
        let m = cascade(d, &w);
        for mode in [Mode::Neumann, Mode::Dirichlet] {
            let sparse = enumerate_support(&m, n, mode, 1 << 16).unwrap();
            let mut full = full_sweep(&m, n, mode).unwrap();
            full.sort_by(|a, b| a.0.coords().cmp(b.0.coords()));
            prop_assert_eq!(sparse.len(), full.len());
            for (s, f) in sparse.iter().zip(&full) {
                prop_assert_eq!(&s.0, &f.0);
                assert_relative_eq!(s.1, f.1, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn children_add_up((d, w) in weights(true), n in 0u32..6, seed in any::<u64>()) {
        let m = cascade(d, &w);
        let support = enumerate_support(&m, n, Mode::Neumann, 1 << 16).unwrap();
        prop_assume!(!support.is_empty());
        let (cube, lm) = &support[(seed % support.len() as u64) as usize];
        let kids = m.child_log2_masses(cube, *lm).unwrap();
        let sum: f64 = kids.iter().map(|k| k.exp2()).sum();
        assert_relative_eq!(sum, lm.exp2(), max_relative = 1e-12);
        for (i, k) in kids.iter().enumerate() {
            let direct = m.log2_mass(&cube.child(i)).unwrap();
            prop_assert!((direct == f64::NEG_INFINITY && *k == f64::NEG_INFINITY) || (direct - k).abs() <= 1e-12);
        }
    }

    #[test]
    fn closed_moment_matches_enumeration((d, w) in weights(false), n in 1u64..=5, q in 0.0f64..3.0) {
        let m = cascade(d, &w);
        for mode in [Mode::Neumann, Mode::Dirichlet] {
            let Some(closed) = m.level_log2_moment(n, q, mode) else { continue };
            let cubes = enumerate_support(&m, n as u32, mode, 1 << 16).unwrap();
            let sum: f64 = cubes.iter().map(|(_, lm)| (q * lm).exp2()).sum();
            assert_relative_eq!(closed, sum.log2(), epsilon = 1e-10);
        }
    }

    #[test]
    fn scaling_shifts_tau_by_log_factor((d, w) in weights(false), c in 0.05f64..20.0, n in 1u64..40) {
        let base = Arc::new(cascade(d, &w));
        let scaled = Arc::new((*base).clone().scaled(c));
        let j0 = SetFunction::new(SetFunctionKind::spectral(d), base).unwrap();
        let j1 = SetFunction::new(SetFunctionKind::spectral(d), scaled).unwrap();
        let (r0, r1) = (LevelRow::build(&j0, n, Mode::Neumann).unwrap(), LevelRow::build(&j1, n, Mode::Neumann).unwrap());
        for q in [0.0, 0.5, 1.0, 2.5] {
            assert_relative_eq!(r1.tau(q) - r0.tau(q), q * c.log2() / n as f64, epsilon = 1e-9);
        }
    }
}

#[test]
fn scaled_zero_converges_to_unscaled() {
    let base = Arc::new(cascade(1, &[7, 3]));
    let scaled = Arc::new((*base).clone().scaled(5.0));
    let j0 = SetFunction::new(SetFunctionKind::spectral(1), base).unwrap();
    let j1 = SetFunction::new(SetFunctionKind::spectral(1), scaled).unwrap();
    let drift: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&n| {
            let z0 = q_zero_row(&LevelRow::build(&j0, n, Mode::Neumann).unwrap(), 1).unwrap();
            let z1 = q_zero_row(&LevelRow::build(&j1, n, Mode::Neumann).unwrap(), 1).unwrap();
            (z1 - z0).abs()
        })
        .collect();
    assert!(drift[0] > drift[1] && drift[1] > drift[2] && drift[2] < 1e-3, "{drift:?}");
}

#[test]
fn unit_cube_has_full_mass() {
    let m = cascade(2, &[1, 2, 3, 4]);
    assert_eq!(m.log2_mass(&DyadicCube::unit(2)).unwrap(), 0.0);
}
