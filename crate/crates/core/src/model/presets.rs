//! Bundled experiment fixtures.

use super::{ContinuousPlant, DelaySweep, ExperimentConfig, GameWeights, Scheme};
use crate::linalg::Matrix;

/// Evenly spaced grid of `count` delays over `[0, max]`.
fn delay_axis(max: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| max * i as f64 / (count - 1) as f64)
        .collect()
}

/// Two-state plant `A = [[0, 1], [-3, -4]]` shared by two controllers on the
/// same input channel, `h = 0.05`, 50 steps, `Q = Q_N = 100 I`, `R = 1`.
pub fn preset_generic() -> ExperimentConfig {
    let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -4.0]);
    let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let plant = ContinuousPlant::new(a, vec![b.clone(), b], vec![0.01, 0.01], 0.05)
        .expect("generic plant is valid");
    let q = Matrix::identity(2, 2) * 100.0;
    let r = Matrix::identity(1, 1);
    let weights = GameWeights::new(
        vec![q.clone(), q.clone()],
        vec![q.clone(), q],
        vec![r.clone(), r],
        50,
    )
    .expect("generic weights are valid");
    let sweep = DelaySweep {
        delays_grid: vec![delay_axis(0.02, 6), delay_axis(0.02, 6)],
    };
    ExperimentConfig::new(
        plant,
        weights,
        vec![1.0, 0.0],
        Scheme::Proposed,
        Some(sweep),
    )
    .expect("generic preset is valid")
}

/// Parameters of one control area.
struct Area {
    kp: f64,
    tp: f64,
    tt: f64,
    tg: f64,
    droop: f64,
}

const LFC_AREA: Area = Area {
    kp: 1.0,
    tp: 0.2,
    tt: 0.3,
    tg: 0.08,
    droop: 0.2545,
};

const TIE_LINE_COEFFICIENT: f64 = 2.4;

/// Nine-state two-area load frequency control model with state
/// `[Δf1, ΔPg1, ΔXg1, Δf2, ΔPg2, ΔXg2, ΔPtie, ΔPc1, ΔPc2]`.
///
/// Controller `i` drives the rate of its own area's `ΔPci` integrator.
/// Both players weigh only the tie-line power deviation.
pub fn lfc_plant_matrix() -> Matrix {
    let (a1, a2) = (&LFC_AREA, &LFC_AREA);
    let t12 = TIE_LINE_COEFFICIENT;
    let mut a = Matrix::zeros(9, 9);
    // area 1
    a[(0, 0)] = -1.0 / a1.tp;
    a[(0, 1)] = a1.kp / a1.tp;
    a[(0, 6)] = a1.kp / a1.tp;
    a[(1, 1)] = -1.0 / a1.tt;
    a[(1, 2)] = 1.0 / a1.tt;
    a[(2, 0)] = -1.0 / (a1.droop * a1.tg);
    a[(2, 2)] = -1.0 / a1.tg;
    a[(2, 7)] = 1.0 / a1.tg;
    // area 2
    a[(3, 3)] = -1.0 / a2.tp;
    a[(3, 4)] = a2.kp / a2.tp;
    a[(3, 6)] = a2.kp / a2.tp;
    a[(4, 4)] = -1.0 / a2.tt;
    a[(4, 5)] = 1.0 / a2.tt;
    a[(5, 3)] = -1.0 / (a2.droop * a2.tg);
    a[(5, 5)] = -1.0 / a2.tg;
    a[(5, 8)] = 1.0 / a2.tg;
    // tie line
    a[(6, 0)] = t12;
    a[(6, 3)] = -t12;
    a
}

pub fn preset_lfc() -> ExperimentConfig {
    let a = lfc_plant_matrix();
    let mut b1 = Matrix::zeros(9, 1);
    b1[(7, 0)] = 1.0;
    let mut b2 = Matrix::zeros(9, 1);
    b2[(8, 0)] = 1.0;
    let plant = ContinuousPlant::new(a, vec![b1, b2], vec![0.004, 0.004], 0.01)
        .expect("LFC plant is valid");
    let mut q = Matrix::zeros(9, 9);
    q[(6, 6)] = 1.0;
    let r = Matrix::identity(1, 1);
    let weights = GameWeights::new(
        vec![q.clone(), q.clone()],
        vec![q.clone(), q],
        vec![r.clone(), r],
        LFC_HORIZON,
    )
    .expect("LFC weights are valid");
    let mut x0 = vec![0.0; 9];
    x0[0] = 0.1;
    let sweep = DelaySweep {
        delays_grid: vec![delay_axis(0.008, 4), delay_axis(0.008, 4)],
    };
    ExperimentConfig::new(plant, weights, x0, Scheme::Proposed, Some(sweep))
        .expect("LFC preset is valid")
}

const LFC_HORIZON: usize = 100;
