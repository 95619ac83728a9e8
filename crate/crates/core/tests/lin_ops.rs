mod common;

use common::*;
use delay_lqgame::linalg::{self, BlockLayout, Matrix};
use delay_lqgame::model::{discretize, preset_generic, ContinuousPlant};
use delay_lqgame::Error;
use proptest::prelude::*;

fn generic_a() -> Matrix {
    Matrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -4.0])
}

fn rel_err(got: &Matrix, want: &Matrix) -> f64 {
    max_abs_diff(got, want) / linalg::max_abs(want).max(f64::MIN_POSITIVE)
}

#[test]
fn exp_matches_series_on_generic_plant() {
    let a = generic_a();
    let got = linalg::mat_exp(&a, 0.05).unwrap();
    assert!(rel_err(&got, &taylor_exp(&a, 0.05)) <= 1e-10);
}

#[test]
fn exp_matches_series_on_stiff_and_large_arguments() {
    let mut r = rng(11);
    for m in 1..=9 {
        let a = random_matrix(&mut r, m, m) * 3.0;
        for t in [1e-6, 0.01, 0.7, 4.0] {
            let got = linalg::mat_exp(&a, t).unwrap();
            assert!(rel_err(&got, &taylor_exp(&a, t)) <= 1e-10, "m={m} t={t}");
        }
    }
}

#[test]
fn exp_integral_matches_quadrature_on_generic_plant() {
    let a = generic_a();
    let eye = Matrix::identity(2, 2);
    let got = linalg::exp_integral(&a, 0.0, 0.05).unwrap();
    assert!(max_abs_diff(&got, &quad_exp_integral(&a, &eye, 0.0, 0.05)) <= 1e-8);
}

#[test]
fn exp_integral_rejects_bad_intervals() {
    let a = generic_a();
    assert!(matches!(
        linalg::exp_integral(&a, 0.2, 0.1),
        Err(Error::Interval { .. })
    ));
    assert!(matches!(
        linalg::exp_integral(&a, -0.1, 0.1),
        Err(Error::Interval { .. })
    ));
    assert_eq!(
        linalg::exp_integral(&a, 0.03, 0.03).unwrap(),
        Matrix::zeros(2, 2)
    );
}

#[test]
fn discretize_matches_oracle_on_generic_preset() {
    let plant = preset_generic().plant;
    let dp = discretize(&plant).unwrap();
    let (phi, g0, g1) = oracle_discretization(&plant);
    assert!(max_abs_diff(dp.phi(), &phi) <= 1e-8);
    for i in 0..2 {
        assert!(max_abs_diff(&dp.gamma0()[i], &g0[i]) <= 1e-8);
        assert!(max_abs_diff(&dp.gamma1()[i], &g1[i]) <= 1e-8);
    }
}

#[test]
fn discretize_matches_oracle_on_random_stable_plants() {
    let mut r = rng(21);
    for case in 0..10 {
        let m = 1 + case % 6;
        let plant = random_plant(&mut r, m, 1 + case % 2, 2);
        let dp = discretize(&plant).unwrap();
        let (phi, g0, g1) = oracle_discretization(&plant);
        assert!(max_abs_diff(dp.phi(), &phi) <= 1e-8, "case {case}");
        for i in 0..2 {
            assert!(max_abs_diff(&dp.gamma0()[i], &g0[i]) <= 1e-8, "case {case}");
            assert!(max_abs_diff(&dp.gamma1()[i], &g1[i]) <= 1e-8, "case {case}");
        }
    }
}

#[test]
fn solve_recovers_known_solution() {
    let mut r = rng(5);
    let a = random_matrix(&mut r, 5, 5) + Matrix::identity(5, 5) * 3.0;
    let x = random_matrix(&mut r, 5, 3);
    let got = linalg::solve(&a, &(&a * &x)).unwrap();
    assert!(rel_err(&got, &x) <= 1e-9);
}

#[test]
fn solve_reports_singular_pivot() {
    let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    let b = Matrix::identity(2, 2);
    assert!(matches!(linalg::solve(&a, &b), Err(Error::Singular { .. })));
}

#[test]
fn block_addressing_for_two_controllers() {
    let layout = BlockLayout::new(3, 2, 2);
    assert_eq!(layout.dim(), 7);
    let mut s = Matrix::zeros(7, 7);
    let block = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    linalg::block_set(&mut s, &layout, 2, 0, &block).unwrap();
    assert_eq!(s[(5, 0)], 1.0);
    assert_eq!(s[(6, 2)], 6.0);
    assert_eq!(linalg::block_get(&s, &layout, 2, 0).unwrap(), block);
    assert!(matches!(
        linalg::block_get(&s, &layout, 3, 0),
        Err(Error::BlockIndex { .. })
    ));
    assert!(linalg::block_set(&mut s, &layout, 1, 1, &block).is_err());
}

fn matrix_strategy(m: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-scale..scale, m * m).prop_map(move |v| Matrix::from_row_slice(m, m, &v))
}

fn square() -> impl Strategy<Value = Matrix> {
    (1usize..=6).prop_flat_map(|m| matrix_strategy(m, 2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_semigroup(a in square(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let lhs = linalg::mat_exp(&a, s + t).unwrap();
        let rhs = linalg::mat_exp(&a, s).unwrap() * linalg::mat_exp(&a, t).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-9 * (1.0 + linalg::max_abs(&lhs)));
    }

    #[test]
    fn exp_integral_is_additive(a in square(), x in 0.0f64..0.3, y in 0.0f64..0.3, z in 0.0f64..0.3) {
        let mut pts = [x, y, z];
        pts.sort_by(f64::total_cmp);
        let [lo, mid, hi] = pts;
        let whole = linalg::exp_integral(&a, lo, hi).unwrap();
        let split = linalg::exp_integral(&a, lo, mid).unwrap() + linalg::exp_integral(&a, mid, hi).unwrap();
        prop_assert!(max_abs_diff(&whole, &split) <= 1e-10);
    }

    #[test]
    fn exp_derivative_matches_finite_difference(a in square(), t in 0.0f64..1.0) {
        let step = 1e-5;
        let fd = (linalg::mat_exp(&a, t + step).unwrap() - linalg::mat_exp(&a, t - step).unwrap()) / (2.0 * step);
        let exact = &a * linalg::mat_exp(&a, t).unwrap();
        prop_assert!(max_abs_diff(&fd, &exact) <= 1e-6 * (1.0 + linalg::max_abs(&exact)));
    }

    #[test]
    fn solve_round_trip(
        m in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, m, m) + Matrix::identity(m, m) * (m as f64);
        let sv = a.clone().svd(false, false).singular_values;
        prop_assume!(sv.max() / sv.min() <= 1e6);
        let x = random_matrix(&mut r, m, 2);
        let got = linalg::solve(&a, &(&a * &x)).unwrap();
        prop_assert!(max_abs_diff(&got, &x) <= 1e-9 * linalg::max_abs(&x));
    }

    #[test]
    fn gamma_split_conserves_total_input(seed in any::<u64>(), m in 1usize..=6, frac in 0.0f64..0.999) {
        let mut r = rng(seed);
        let a = random_stable(&mut r, m);
        let b = random_matrix(&mut r, m, 2);
        let h = 0.05;
        let plant = ContinuousPlant::new(a.clone(), vec![b.clone()], vec![frac * h], h).unwrap();
        let dp = discretize(&plant).unwrap();
        let total = linalg::exp_integral(&a, 0.0, h).unwrap() * &b;
        prop_assert!(max_abs_diff(&(&dp.gamma0()[0] + &dp.gamma1()[0]), &total) <= 1e-9);
    }
}
