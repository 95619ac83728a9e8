//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the crate's numerical kernels; matrices are
//! plain nalgebra values and inverses use nalgebra's own LU.

#![allow(dead_code)]

use delay_lqgame::linalg::Matrix;
use delay_lqgame::model::{ContinuousPlant, DiscretePlant, GameWeights};
use delay_lqgame::synthesis::GainSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn inv(m: &Matrix) -> Matrix {
    m.clone().lu().try_inverse().expect("oracle inverse")
}

/// `e^{At}` by a scaled Taylor series with 40 terms, then repeated squaring.
pub fn taylor_exp(a: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    let at = a * t;
    let norm: f64 = at.iter().map(|v| v.abs()).sum();
    let mut squarings = 0;
    while norm / 2f64.powi(squarings) > 0.25 {
        squarings += 1;
    }
    let x = at / 2f64.powi(squarings);
    let mut sum = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=40 {
        term = &term * &x / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn simpson(a: f64, b: f64, fa: &Matrix, fm: &Matrix, fb: &Matrix) -> Matrix {
    (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> Matrix,
    a: f64,
    b: f64,
    fa: Matrix,
    fm: Matrix,
    fb: Matrix,
    whole: Matrix,
    tol: f64,
    depth: usize,
) -> Matrix {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, &fa, &flm, &fm);
    let right = simpson(m, b, &fm, &frm, &fb);
    let both = &left + &right;
    let err = max_abs_diff(&both, &whole);
    if depth == 0 || err <= 15.0 * tol {
        return &both + (&both - &whole) / 15.0;
    }
    let l = adaptive(f, a, m, fa, flm, fm.clone(), left, tol / 2.0, depth - 1);
    let r = adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
    l + r
}

/// Adaptive composite Simpson quadrature of a matrix-valued integrand.
pub fn quad(f: &dyn Fn(f64) -> Matrix, a: f64, b: f64, tol: f64) -> Matrix {
    if a == b {
        let shape = f(a).shape();
        return Matrix::zeros(shape.0, shape.1);
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(a, b, &fa, &fm, &fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `∫_a^b e^{As} ds · B` by quadrature over the Taylor exponential.
pub fn quad_exp_integral(a: &Matrix, b: &Matrix, lower: f64, upper: f64) -> Matrix {
    quad(&|s| taylor_exp(a, s) * b, lower, upper, 1e-13)
}

/// `(Φ, Γ_0, Γ_1)` of the delay-split discretization, computed by the oracles.
pub fn oracle_discretization(plant: &ContinuousPlant) -> (Matrix, Vec<Matrix>, Vec<Matrix>) {
    let h = plant.period();
    let phi = taylor_exp(plant.a(), h);
    let mut g0 = Vec::new();
    let mut g1 = Vec::new();
    for (b, &tau) in plant.b().iter().zip(plant.delays()) {
        g0.push(quad_exp_integral(plant.a(), b, 0.0, h - tau));
        g1.push(quad_exp_integral(plant.a(), b, h - tau, h));
    }
    (phi, g0, g1)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random Hurwitz matrix: diagonal shift past the Gershgorin radius.
pub fn random_stable(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
    let g = random_matrix(rng, m, m) * 2.0;
    let radius = g
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    g - Matrix::identity(m, m) * (radius + rng.gen_range(0.1..1.0))
}

pub fn random_psd(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
    let g = random_matrix(rng, m, m);
    g.transpose() * g
}

pub fn random_pd(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
    random_psd(rng, m) + Matrix::identity(m, m) * rng.gen_range(0.2..2.0)
}

/// Random stable plant with `p` controllers and delays in `(0, h)`.
pub fn random_plant(rng: &mut ChaCha8Rng, m: usize, n: usize, p: usize) -> ContinuousPlant {
    let h = rng.gen_range(0.01..0.2);
    let a = random_stable(rng, m);
    let b = (0..p).map(|_| random_matrix(rng, m, n)).collect();
    let delays = (0..p).map(|_| rng.gen_range(0.01..0.99) * h).collect();
    ContinuousPlant::new(a, b, delays, h).expect("random plant")
}

pub fn random_weights(
    rng: &mut ChaCha8Rng,
    m: usize,
    n: usize,
    p: usize,
    horizon: usize,
) -> GameWeights {
    let q = (0..p).map(|_| random_pd(rng, m)).collect();
    let qn = (0..p).map(|_| random_psd(rng, m)).collect();
    let r = (0..p).map(|_| random_pd(rng, n)).collect();
    GameWeights::new(q, qn, r, horizon).expect("random weights")
}

/// Textbook finite-horizon LQR: gains `K(k)` for `u = -K z` on
/// `z+ = F(k) z + G u` with cost `Σ zᵀQz + uᵀRu + z(N)ᵀQN z(N)`.
pub fn lqr_gains(
    f: &dyn Fn(usize) -> Matrix,
    g: &Matrix,
    q: &Matrix,
    qn: &Matrix,
    r: &Matrix,
    horizon: usize,
) -> Vec<Matrix> {
    let mut p = qn.clone();
    let mut gains = vec![Matrix::zeros(0, 0); horizon];
    for k in (0..horizon).rev() {
        let fk = f(k);
        let gtp = g.transpose() * &p;
        let k_gain = inv(&(r + &gtp * g)) * (&gtp * &fk);
        let mut next = q + fk.transpose() * &p * &fk - fk.transpose() * &p * g * &k_gain;
        next = (&next + next.transpose()) * 0.5;
        p = next;
        gains[k] = k_gain;
    }
    gains
}

fn diag_embed(w: &Matrix, dim: usize) -> Matrix {
    let mut out = Matrix::zeros(dim, dim);
    out.view_mut((0, 0), w.shape()).copy_from(w);
    out
}

/// Single delayed controller as LQR on `[x; u(k-1)]`:
/// dynamics `[[Φ, Γ1], [0, 0]]`, input `[Γ0; I]`, state cost `diag(Q, 0)`.
pub fn augmented_lqr(dp: &DiscretePlant, w: &GameWeights) -> Vec<Matrix> {
    let (m, n) = (dp.state_dim(), dp.input_dim());
    let dim = m + n;
    let mut f = Matrix::zeros(dim, dim);
    f.view_mut((0, 0), (m, m)).copy_from(dp.phi());
    f.view_mut((0, m), (m, n)).copy_from(&dp.gamma1()[0]);
    let mut g = Matrix::zeros(dim, n);
    g.view_mut((0, 0), (m, n)).copy_from(&dp.gamma0()[0]);
    g.view_mut((m, 0), (n, n)).fill_with_identity();
    lqr_gains(
        &|_| f.clone(),
        &g,
        &diag_embed(&w.q()[0], dim),
        &diag_embed(&w.q_terminal()[0], dim),
        &w.r()[0],
        w.horizon(),
    )
}

/// Augmented open loop `z+ = C z + Σ_j D_j u_j` with
/// `z = [x; u_1(k-1); ...; u_p(k-1)]`.
pub fn augmented_maps(dp: &DiscretePlant) -> (Matrix, Vec<Matrix>) {
    let (m, n, p) = (dp.state_dim(), dp.input_dim(), dp.controllers());
    let dim = m + p * n;
    let mut c = Matrix::zeros(dim, dim);
    c.view_mut((0, 0), (m, m)).copy_from(dp.phi());
    let mut ds = Vec::new();
    for j in 0..p {
        c.view_mut((0, m + j * n), (m, n))
            .copy_from(&dp.gamma1()[j]);
        let mut d = Matrix::zeros(dim, n);
        d.view_mut((0, 0), (m, n)).copy_from(&dp.gamma0()[j]);
        d.view_mut((m + j * n, 0), (n, n)).fill_with_identity();
        ds.push(d);
    }
    (c, ds)
}

/// Player `i`'s exact best-response gains (`u_i = -K z`) when every other
/// player follows `schedule`.
pub fn best_response(
    dp: &DiscretePlant,
    w: &GameWeights,
    schedule: &GainSchedule,
    i: usize,
) -> Vec<Matrix> {
    let (c, ds) = augmented_maps(dp);
    let dim = c.nrows();
    let f = |k: usize| {
        let mut fk = c.clone();
        for (j, d) in ds.iter().enumerate() {
            if j != i {
                fk += d * schedule.coefficients(k, j);
            }
        }
        fk
    };
    lqr_gains(
        &f,
        &ds[i],
        &diag_embed(&w.q()[i], dim),
        &diag_embed(&w.q_terminal()[i], dim),
        &w.r()[i],
        w.horizon(),
    )
}

/// Delay-free feedback Nash coefficients `u_i = A_i(k) x` found by
/// Gauss–Seidel best-response iteration at every step.
pub fn gauss_seidel_nash(dp: &DiscretePlant, w: &GameWeights) -> Vec<Vec<Matrix>> {
    let (m, n, p) = (dp.state_dim(), dp.input_dim(), dp.controllers());
    let gam = dp.gamma0();
    let mut s: Vec<Matrix> = w.q_terminal().to_vec();
    let mut out = vec![Vec::new(); w.horizon()];
    for k in (0..w.horizon()).rev() {
        let mut a = vec![Matrix::zeros(n, m); p];
        let mut converged = false;
        for _ in 0..100_000 {
            let mut change = 0.0f64;
            for i in 0..p {
                let mut others = dp.phi().clone();
                for j in (0..p).filter(|&j| j != i) {
                    others += &gam[j] * &a[j];
                }
                let lhs = &w.r()[i] + gam[i].transpose() * &s[i] * &gam[i];
                let new = -inv(&lhs) * gam[i].transpose() * &s[i] * others;
                change = change.max(max_abs_diff(&new, &a[i]));
                a[i] = new;
            }
            if change < 1e-15 {
                converged = true;
                break;
            }
        }
        assert!(
            converged,
            "best-response iteration did not converge at step {k}"
        );
        let mut closed = dp.phi().clone();
        for j in 0..p {
            closed += &gam[j] * &a[j];
        }
        for i in 0..p {
            let mut next = &w.q()[i]
                + a[i].transpose() * &w.r()[i] * &a[i]
                + closed.transpose() * &s[i] * &closed;
            next = (&next + next.transpose()) * 0.5;
            s[i] = next;
        }
        out[k] = a;
    }
    out
}

/// Largest entry-wise gap between two schedules' coefficient rows.
pub fn schedule_gap(a: &GainSchedule, b: &GainSchedule) -> f64 {
    assert_eq!(a.horizon(), b.horizon());
    assert_eq!(a.controllers(), b.controllers());
    let mut gap = 0.0f64;
    for k in 0..a.horizon() {
        for i in 0..a.controllers() {
            gap = gap.max(max_abs_diff(a.coefficients(k, i), b.coefficients(k, i)));
        }
    }
    gap
}
