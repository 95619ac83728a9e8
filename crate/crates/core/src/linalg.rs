//! Dense kernels used by discretization and gain synthesis.
//!
//! Storage and products come from `nalgebra`; the matrix exponential, its
//! integral and the pivoted solve are implemented here so that the
//! singularity threshold and the block layout of the augmented state are
//! under our control.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot threshold below which a solve is reported as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Padé(13) numerator/denominator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// 1-norm bound under which Padé(13) is accurate to double precision.
const THETA13: f64 = 5.371920351148152;

/// Builds a matrix from row-major nested rows, rejecting ragged or
/// non-finite input.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Dimension("matrix has no rows".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::Dimension("matrix has no columns".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation(
            "finite-entries",
            "matrix contains NaN or Inf",
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Row-major nested rows, the inverse of [`from_rows`].
pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn require_square(a: &Matrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// `e^{A t}` by scaling and squaring around a Padé(13) core.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = require_square(a, "exponent")?;
    if !t.is_finite() {
        return Err(Error::validation(
            "finite-entries",
            "time argument is not finite",
        ));
    }
    let scaled = a * t;
    let norm = one_norm(&scaled);
    if norm == 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = scaled / 2f64.powi(squarings);
    let mut result = pade13(&scaled)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

fn one_norm(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade13(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let b = &PADE13;
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    solve(&(&v - &u), &(&v + &u))
}

/// `∫_lower^upper e^{A s} ds`.
///
/// The antiderivative from zero is read off the top-right block of
/// `exp([[A, I], [0, 0]] t)`; a general interval is the difference of two
/// such evaluations.
pub fn exp_integral(a: &Matrix, lower: f64, upper: f64) -> Result<Matrix> {
    let n = require_square(a, "integrand exponent")?;
    if !(lower.is_finite() && upper.is_finite()) || lower < 0.0 || lower > upper {
        return Err(Error::Interval { lower, upper });
    }
    if lower == upper {
        return Ok(Matrix::zeros(n, n));
    }
    let upper_part = integral_from_zero(a, upper)?;
    if lower == 0.0 {
        return Ok(upper_part);
    }
    Ok(upper_part - integral_from_zero(a, lower)?)
}

fn integral_from_zero(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = a.nrows();
    let mut aug = Matrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    let e = mat_exp(&aug, t)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
///
/// A pivot smaller than `PIVOT_TOLERANCE * max|A|` is reported as
/// [`Error::Singular`] carrying its magnitude.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = require_square(a, "coefficient matrix")?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, expected {n}",
            b.nrows()
        )));
    }
    let scale = max_abs(a);
    let threshold = PIVOT_TOLERANCE * scale;
    let mut lu = a.clone();
    let mut x = b.clone();

    for col in 0..n {
        let (pivot_row, pivot_mag) =
            (col..n)
                .map(|r| (r, lu[(r, col)].abs()))
                .fold(
                    (col, -1.0),
                    |best, cand| if cand.1 > best.1 { cand } else { best },
                );
        if pivot_mag <= threshold || scale == 0.0 {
            return Err(Error::Singular { pivot: pivot_mag });
        }
        if pivot_row != col {
            lu.swap_rows(pivot_row, col);
            x.swap_rows(pivot_row, col);
        }
        let pivot = lu[(col, col)];
        for r in col + 1..n {
            let factor = lu[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            lu[(r, col)] = 0.0;
            for c in col + 1..n {
                lu[(r, c)] -= factor * lu[(col, c)];
            }
            for c in 0..x.ncols() {
                x[(r, c)] -= factor * x[(col, c)];
            }
        }
    }

    for col in (0..n).rev() {
        let pivot = lu[(col, col)];
        for c in 0..x.ncols() {
            let mut acc = x[(col, c)];
            for k in col + 1..n {
                acc -= lu[(col, k)] * x[(k, c)];
            }
            x[(col, c)] = acc / pivot;
        }
    }
    Ok(x)
}

/// Block layout `[M | N | N | ... | N]` of the augmented state
/// `[x; u_1(k-1); ...; u_p(k-1)]`. Block 0 is the plant state, block
/// `i + 1` is the previous input of controller `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub state_dim: usize,
    pub input_dim: usize,
    pub controllers: usize,
}

/// Position of one block inside a [`BlockLayout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockIndex {
    pub block_row: usize,
    pub block_col: usize,
    pub row_offset: usize,
    pub col_offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl BlockLayout {
    pub fn new(state_dim: usize, input_dim: usize, controllers: usize) -> Self {
        Self {
            state_dim,
            input_dim,
            controllers,
        }
    }

    pub fn blocks(&self) -> usize {
        self.controllers + 1
    }

    pub fn dim(&self) -> usize {
        self.state_dim + self.controllers * self.input_dim
    }

    fn span(&self, block: usize) -> (usize, usize) {
        if block == 0 {
            (0, self.state_dim)
        } else {
            (
                self.state_dim + (block - 1) * self.input_dim,
                self.input_dim,
            )
        }
    }

    pub fn index(&self, block_row: usize, block_col: usize) -> Result<BlockIndex> {
        if block_row >= self.blocks() || block_col >= self.blocks() {
            return Err(Error::BlockIndex {
                row: block_row,
                col: block_col,
                blocks: self.blocks(),
            });
        }
        let (row_offset, rows) = self.span(block_row);
        let (col_offset, cols) = self.span(block_col);
        Ok(BlockIndex {
            block_row,
            block_col,
            row_offset,
            col_offset,
            rows,
            cols,
        })
    }

    fn check(&self, s: &Matrix) -> Result<()> {
        let d = self.dim();
        if s.nrows() != d || s.ncols() != d {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, layout needs {d}x{d}",
                s.nrows(),
                s.ncols()
            )));
        }
        Ok(())
    }
}

pub fn block_get(s: &Matrix, layout: &BlockLayout, m: usize, n: usize) -> Result<Matrix> {
    layout.check(s)?;
    let idx = layout.index(m, n)?;
    Ok(
        s.view((idx.row_offset, idx.col_offset), (idx.rows, idx.cols))
            .into_owned(),
    )
}

pub fn block_set(
    s: &mut Matrix,
    layout: &BlockLayout,
    m: usize,
    n: usize,
    block: &Matrix,
) -> Result<()> {
    layout.check(s)?;
    let idx = layout.index(m, n)?;
    if block.nrows() != idx.rows || block.ncols() != idx.cols {
        return Err(Error::Dimension(format!(
            "block ({m}, {n}) is {}x{}, got {}x{}",
            idx.rows,
            idx.cols,
            block.nrows(),
            block.ncols()
        )));
    }
    s.view_mut((idx.row_offset, idx.col_offset), (idx.rows, idx.cols))
        .copy_from(block);
    Ok(())
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn asymmetry(m: &Matrix) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_positive_definite(m: &Matrix) -> bool {
    m.clone().cholesky().is_some()
}

/// Positive semi-definiteness by factorization of a slightly shifted copy.
pub fn is_positive_semidefinite(m: &Matrix) -> bool {
    let n = m.nrows();
    let shift = 1e-12 * (1.0 + max_abs(m));
    (m + Matrix::identity(n, n) * shift).cholesky().is_some()
}
