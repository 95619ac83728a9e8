//! Offline gain-schedule synthesis.
//!
//! Every controller applies `u_i(k) = A_i(k)x(k) + Σ_j B_j^i(k)u_j(k-1)`.
//! The schedule stores the coefficient row `[A_i | B_1^i | ... | B_p^i]`
//! acting on the augmented state `z(k) = [x(k); u_1(k-1); ...; u_p(k-1)]`;
//! the feedback gain `L_i(k)` with `u_i = -L_i z` is its negation.
//!
//! The backward recursion keeps one value matrix `S^i(k)` per controller,
//! the cost-to-go of controller `i` as a quadratic form in `z(k)`.

use crate::error::{Error, Result};
use crate::linalg::{self, BlockLayout, Matrix};
use crate::model::{DiscretePlant, GameWeights, Scheme};

/// Time-varying feedback coefficients for all controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    scheme: Scheme,
    layout: BlockLayout,
    /// `coefficients[k][i]` is `[A_i(k) | B_1^i(k) | ... | B_p^i(k)]`.
    coefficients: Vec<Vec<Matrix>>,
}

impl GainSchedule {
    pub fn new(
        scheme: Scheme,
        layout: BlockLayout,
        coefficients: Vec<Vec<Matrix>>,
    ) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Dimension("gain schedule has no steps".into()));
        }
        for (k, step) in coefficients.iter().enumerate() {
            if step.len() != layout.controllers {
                return Err(Error::Dimension(format!(
                    "step {k} has {} controllers, expected {}",
                    step.len(),
                    layout.controllers
                )));
            }
            for c in step {
                if c.nrows() != layout.input_dim || c.ncols() != layout.dim() {
                    return Err(Error::Dimension(format!(
                        "step {k} coefficient is {}x{}, expected {}x{}",
                        c.nrows(),
                        c.ncols(),
                        layout.input_dim,
                        layout.dim()
                    )));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(
                        "finite-entries",
                        format!("step {k} has non-finite gains"),
                    ));
                }
            }
        }
        Ok(Self {
            scheme,
            layout,
            coefficients,
        })
    }

    /// All-zero schedule, i.e. open loop.
    pub fn zeros(scheme: Scheme, layout: BlockLayout, horizon: usize) -> Self {
        let row = Matrix::zeros(layout.input_dim, layout.dim());
        Self {
            scheme,
            layout,
            coefficients: vec![vec![row; layout.controllers]; horizon],
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn horizon(&self) -> usize {
        self.coefficients.len()
    }

    pub fn controllers(&self) -> usize {
        self.layout.controllers
    }

    /// `[A_i(k) | B_1^i(k) | ... | B_p^i(k)]`.
    pub fn coefficients(&self, k: usize, i: usize) -> &Matrix {
        &self.coefficients[k][i]
    }

    pub fn a_coef(&self, k: usize, i: usize) -> Matrix {
        self.coefficients[k][i]
            .columns(0, self.layout.state_dim)
            .into_owned()
    }

    pub fn b_coef(&self, k: usize, i: usize, j: usize) -> Matrix {
        let n = self.layout.input_dim;
        self.coefficients[k][i]
            .columns(self.layout.state_dim + j * n, n)
            .into_owned()
    }

    /// `L_i(k)` with `u_i(k) = -L_i(k) z(k)`.
    pub fn gain(&self, k: usize, i: usize) -> Matrix {
        -&self.coefficients[k][i]
    }

    /// Embeds a single-controller schedule as controller `slot` of a
    /// `controllers`-controller schedule; every other controller is idle.
    pub fn lift(&self, slot: usize, controllers: usize) -> Result<Self> {
        if self.controllers() != 1 || slot >= controllers {
            return Err(Error::Dimension(format!(
                "cannot lift a {}-controller schedule into slot {slot} of {controllers}",
                self.controllers()
            )));
        }
        let (m, n) = (self.layout.state_dim, self.layout.input_dim);
        let layout = BlockLayout::new(m, n, controllers);
        let coefficients = self
            .coefficients
            .iter()
            .map(|step| {
                let src = &step[0];
                let mut own = Matrix::zeros(n, layout.dim());
                own.columns_mut(0, m).copy_from(&src.columns(0, m));
                own.columns_mut(m + slot * n, n)
                    .copy_from(&src.columns(m, n));
                (0..controllers)
                    .map(|i| {
                        if i == slot {
                            own.clone()
                        } else {
                            Matrix::zeros(n, layout.dim())
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            scheme: self.scheme,
            layout,
            coefficients,
        })
    }
}

/// Value matrices `S^i(k)` of one recursion step, one per controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMatrices {
    pub per_controller: Vec<Matrix>,
}

/// A schedule together with the value matrices `S^i(0..=N)` it was built from.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub schedule: GainSchedule,
    /// `values[k]` holds `S^i(k)`; `values[N]` is the terminal weight.
    pub values: Vec<ValueMatrices>,
}

/// Per-controller coefficients of the two-controller closed form at one
/// step. `a2 = b2 = c2` is the shared cross-coupling term.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficients {
    pub a1: Matrix,
    pub b1: Matrix,
    pub c1: Matrix,
    pub a2: Matrix,
    pub e: Matrix,
}

/// `D_i`: how `u_i(k)` enters `z(k+1)`.
pub(crate) fn input_map(dp: &DiscretePlant, i: usize) -> Matrix {
    let layout = dp.layout();
    let (m, n) = (layout.state_dim, layout.input_dim);
    let mut d = Matrix::zeros(layout.dim(), n);
    d.rows_mut(0, m).copy_from(&dp.gamma0()[i]);
    d.view_mut((m + i * n, 0), (n, n)).fill_with_identity();
    d
}

/// Open-loop part of every `C_i(k)`: top block row `[Φ | Γ_{1,1} | ... | Γ_{p,1}]`.
fn open_loop_map(dp: &DiscretePlant) -> Matrix {
    let layout = dp.layout();
    let (m, n) = (layout.state_dim, layout.input_dim);
    let mut c = Matrix::zeros(layout.dim(), layout.dim());
    c.view_mut((0, 0), (m, m)).copy_from(dp.phi());
    for (j, g1) in dp.gamma1().iter().enumerate() {
        c.view_mut((0, m + j * n), (m, n)).copy_from(g1);
    }
    c
}

fn embed_state_weight(w: &Matrix, layout: &BlockLayout) -> Matrix {
    let mut out = Matrix::zeros(layout.dim(), layout.dim());
    out.view_mut((0, 0), (layout.state_dim, layout.state_dim))
        .copy_from(w);
    out
}

fn terminal_values(w: &GameWeights, layout: &BlockLayout) -> ValueMatrices {
    ValueMatrices {
        per_controller: w
            .q_terminal()
            .iter()
            .map(|q| embed_state_weight(q, layout))
            .collect(),
    }
}

/// `S = P11 - Lᵀ P22 L` with `P11 = CᵀSC + Q11`, `P22 = DᵀSD + R`,
/// symmetrized.
fn value_update(
    closed: &Matrix,
    input: &Matrix,
    next: &Matrix,
    state_weight: &Matrix,
    input_weight: &Matrix,
    coef: &Matrix,
) -> Matrix {
    let p11 = closed.transpose() * next * closed + state_weight;
    let p22 = input.transpose() * next * input + input_weight;
    // L = -coef, so LᵀP22L = coefᵀP22coef
    let mut s = p11 - coef.transpose() * p22 * coef;
    linalg::symmetrize(&mut s);
    s
}

fn coupling(step: usize, controller: Option<usize>) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Singular { pivot } => Error::CouplingSingular {
            step,
            controller,
            pivot,
        },
        other => other,
    }
}

fn require_controllers(dp: &DiscretePlant, w: &GameWeights, expected: Option<usize>) -> Result<()> {
    w.check_against(dp)?;
    if let Some(p) = expected {
        if dp.controllers() != p {
            return Err(Error::Dimension(format!(
                "expected {p} controllers, plant has {}",
                dp.controllers()
            )));
        }
    }
    Ok(())
}

/// Closed-form coefficients of controller `i` (0 or 1) from `S^i(k+1)`.
pub fn step_coefficients(
    dp: &DiscretePlant,
    w: &GameWeights,
    next: &Matrix,
    i: usize,
) -> Result<StepCoefficients> {
    let layout = dp.layout();
    let j = 1 - i;
    let g0 = &dp.gamma0()[i];
    let s11 = linalg::block_get(next, &layout, 0, 0)?;
    let s_own_state = linalg::block_get(next, &layout, i + 1, 0)?;
    let s_state_other = linalg::block_get(next, &layout, 0, j + 1)?;
    let s_own_other = linalg::block_get(next, &layout, i + 1, j + 1)?;

    let d = input_map(dp, i);
    let e = d.transpose() * next * &d + &w.r()[i];
    let g = g0.transpose() * &s11 + s_own_state;
    let cross = &g * &dp.gamma0()[j] + g0.transpose() * s_state_other + s_own_other;

    let (m, n) = (layout.state_dim, layout.input_dim);
    let mut rhs = Matrix::zeros(n, m + 3 * n);
    rhs.columns_mut(0, m).copy_from(&(&g * dp.phi()));
    rhs.columns_mut(m, n).copy_from(&(&g * &dp.gamma1()[0]));
    rhs.columns_mut(m + n, n).copy_from(&(&g * &dp.gamma1()[1]));
    rhs.columns_mut(m + 2 * n, n).copy_from(&cross);
    let sol = linalg::solve(&e, &rhs)?;
    Ok(StepCoefficients {
        a1: sol.columns(0, m).into_owned(),
        b1: sol.columns(m, n).into_owned(),
        c1: sol.columns(m + n, n).into_owned(),
        a2: sol.columns(m + 2 * n, n).into_owned(),
        e,
    })
}

/// `[I - own.a2 · other.a2]⁻¹ [own.a2 · other_first - own_first]`.
fn coupled(
    own_a2: &Matrix,
    other_a2: &Matrix,
    own_first: &Matrix,
    other_first: &Matrix,
) -> Result<Matrix> {
    let n = own_a2.nrows();
    let lhs = Matrix::identity(n, n) - own_a2 * other_a2;
    linalg::solve(&lhs, &(own_a2 * other_first - own_first))
}

/// Two-controller recursion using the closed-form coupled coefficients.
pub fn synthesize_two_traced(dp: &DiscretePlant, w: &GameWeights) -> Result<Synthesis> {
    require_controllers(dp, w, Some(2))?;
    let layout = dp.layout();
    let (m, n) = (layout.state_dim, layout.input_dim);
    let horizon = w.horizon();
    let inputs = [input_map(dp, 0), input_map(dp, 1)];
    let state_weights: Vec<Matrix> = w
        .q()
        .iter()
        .map(|q| embed_state_weight(q, &layout))
        .collect();

    let mut values = vec![terminal_values(w, &layout)];
    let mut schedule = Vec::with_capacity(horizon);
    for k in (0..horizon).rev() {
        let next = &values
            .last()
            .expect("terminal values present")
            .per_controller;
        let c = [
            step_coefficients(dp, w, &next[0], 0).map_err(coupling(k, Some(0)))?,
            step_coefficients(dp, w, &next[1], 1).map_err(coupling(k, Some(1)))?,
        ];

        let mut coefs = Vec::with_capacity(2);
        for i in 0..2 {
            let j = 1 - i;
            let err = coupling(k, Some(i));
            let a = coupled(&c[i].a2, &c[j].a2, &c[i].a1, &c[j].a1).map_err(&err)?;
            let b_first = coupled(&c[i].a2, &c[j].a2, &c[i].b1, &c[j].b1).map_err(&err)?;
            let b_second = coupled(&c[i].a2, &c[j].a2, &c[i].c1, &c[j].c1).map_err(&err)?;
            let mut row = Matrix::zeros(n, layout.dim());
            row.columns_mut(0, m).copy_from(&a);
            row.columns_mut(m, n).copy_from(&b_first);
            row.columns_mut(m + n, n).copy_from(&b_second);
            coefs.push(row);
        }

        let mut updated = Vec::with_capacity(2);
        for i in 0..2 {
            let j = 1 - i;
            // C_i(k): the other controller's law substituted into the dynamics,
            // with its current input stored in its history slot.
            let other = &coefs[j];
            let mut closed = Matrix::zeros(layout.dim(), layout.dim());
            closed.view_mut((0, 0), (m, m)).copy_from(dp.phi());
            closed.view_mut((0, m), (m, n)).copy_from(&dp.gamma1()[0]);
            closed
                .view_mut((0, m + n), (m, n))
                .copy_from(&dp.gamma1()[1]);
            let pushed = &dp.gamma0()[j] * other;
            let mut top = closed.rows_mut(0, m);
            top += &pushed;
            closed.rows_mut(m + j * n, n).copy_from(other);
            updated.push(value_update(
                &closed,
                &inputs[i],
                &next[i],
                &state_weights[i],
                &w.r()[i],
                &coefs[i],
            ));
        }
        schedule.push(coefs);
        values.push(ValueMatrices {
            per_controller: updated,
        });
    }
    schedule.reverse();
    values.reverse();
    Ok(Synthesis {
        schedule: GainSchedule::new(Scheme::Proposed, layout, schedule)?,
        values,
    })
}

pub fn synthesize_two(dp: &DiscretePlant, w: &GameWeights) -> Result<GainSchedule> {
    synthesize_two_traced(dp, w).map(|s| s.schedule)
}

/// General-`p` recursion: the coupled best-response conditions of all
/// controllers are solved jointly at each step.
///
/// For controller `i`, with `K_n = [A_n | B_1^n | ... | B_p^n]`,
/// `E_i = D_iᵀS^iD_i + R_i` and `F_i^n = D_iᵀS^iD_n`:
///
/// `E_i K_i + Σ_{n≠i} F_i^n K_n = -D_iᵀ S^i C_open`.
pub fn synthesize_multi_traced(dp: &DiscretePlant, w: &GameWeights) -> Result<Synthesis> {
    require_controllers(dp, w, None)?;
    let layout = dp.layout();
    let p = layout.controllers;
    let n = layout.input_dim;
    let dim = layout.dim();
    let horizon = w.horizon();
    let inputs: Vec<Matrix> = (0..p).map(|i| input_map(dp, i)).collect();
    let open = open_loop_map(dp);
    let state_weights: Vec<Matrix> = w
        .q()
        .iter()
        .map(|q| embed_state_weight(q, &layout))
        .collect();

    let mut values = vec![terminal_values(w, &layout)];
    let mut schedule = Vec::with_capacity(horizon);
    for k in (0..horizon).rev() {
        let next = &values
            .last()
            .expect("terminal values present")
            .per_controller;

        let mut system = Matrix::zeros(p * n, p * n);
        let mut rhs = Matrix::zeros(p * n, dim);
        for i in 0..p {
            let weighted = inputs[i].transpose() * &next[i];
            for (col, d) in inputs.iter().enumerate() {
                let mut blk = &weighted * d;
                if col == i {
                    blk += &w.r()[i];
                    linalg::solve(&blk, &Matrix::identity(n, n)).map_err(coupling(k, Some(i)))?;
                }
                system.view_mut((i * n, col * n), (n, n)).copy_from(&blk);
            }
            rhs.rows_mut(i * n, n).copy_from(&(-(&weighted * &open)));
        }
        let stacked = linalg::solve(&system, &rhs).map_err(coupling(k, None))?;
        let coefs: Vec<Matrix> = (0..p)
            .map(|i| stacked.rows(i * n, n).into_owned())
            .collect();

        let updated = (0..p)
            .map(|i| {
                let mut closed = open.clone();
                for (other, coef) in coefs.iter().enumerate() {
                    if other != i {
                        closed += &inputs[other] * coef;
                    }
                }
                value_update(
                    &closed,
                    &inputs[i],
                    &next[i],
                    &state_weights[i],
                    &w.r()[i],
                    &coefs[i],
                )
            })
            .collect();
        schedule.push(coefs);
        values.push(ValueMatrices {
            per_controller: updated,
        });
    }
    schedule.reverse();
    values.reverse();
    Ok(Synthesis {
        schedule: GainSchedule::new(Scheme::Proposed, layout, schedule)?,
        values,
    })
}

pub fn synthesize_multi(dp: &DiscretePlant, w: &GameWeights) -> Result<GainSchedule> {
    synthesize_multi_traced(dp, w).map(|s| s.schedule)
}

/// One delayed controller: recursion on `[x(k); u(k-1)]` with
/// `C = [[Φ, Γ₁], [0, 0]]` and `D = [Γ₀; I]`.
pub fn synthesize_single_delayed_traced(dp: &DiscretePlant, w: &GameWeights) -> Result<Synthesis> {
    require_controllers(dp, w, Some(1))?;
    let layout = dp.layout();
    let (m, n) = (layout.state_dim, layout.input_dim);
    let closed = open_loop_map(dp);
    let input = input_map(dp, 0);
    let state_weight = embed_state_weight(&w.q()[0], &layout);
    let r = &w.r()[0];

    let mut values = vec![terminal_values(w, &layout)];
    let mut schedule = Vec::with_capacity(w.horizon());
    for k in (0..w.horizon()).rev() {
        let next = &values
            .last()
            .expect("terminal values present")
            .per_controller[0];
        let sd = next * &input;
        let p12 = sd.transpose() * &closed;
        let p22 = input.transpose() * &sd + r;
        let gain = linalg::solve(&p22, &p12).map_err(coupling(k, Some(0)))?;
        let coef = -gain;
        debug_assert_eq!(coef.shape(), (n, m + n));
        let s = value_update(&closed, &input, next, &state_weight, r, &coef);
        schedule.push(vec![coef]);
        values.push(ValueMatrices {
            per_controller: vec![s],
        });
    }
    schedule.reverse();
    values.reverse();
    Ok(Synthesis {
        schedule: GainSchedule::new(Scheme::SingleDelayed, layout, schedule)?,
        values,
    })
}

pub fn synthesize_single_delayed(dp: &DiscretePlant, w: &GameWeights) -> Result<GainSchedule> {
    synthesize_single_delayed_traced(dp, w).map(|s| s.schedule)
}

/// Two-controller feedback game without delays, on the plant state alone.
///
/// The returned schedule lives in the full augmented layout with zero
/// history coefficients so it can drive a delayed plant.
pub fn synthesize_delay_free_game_traced(dp: &DiscretePlant, w: &GameWeights) -> Result<Synthesis> {
    require_controllers(dp, w, Some(2))?;
    if let Some(i) = dp.gamma1().iter().position(|g| g.iter().any(|v| *v != 0.0)) {
        return Err(Error::Precondition(format!(
            "controller {} has a nonzero delayed input matrix; discretize with zero delays",
            i + 1
        )));
    }
    let layout = dp.layout();
    let (m, n) = (layout.state_dim, layout.input_dim);
    let phi = dp.phi();
    let gamma = dp.gamma0();

    let mut values: Vec<ValueMatrices> = vec![ValueMatrices {
        per_controller: w.q_terminal().to_vec(),
    }];
    let mut schedule = Vec::with_capacity(w.horizon());
    for k in (0..w.horizon()).rev() {
        let next = &values
            .last()
            .expect("terminal values present")
            .per_controller;
        let mut a1 = Vec::with_capacity(2);
        let mut a2 = Vec::with_capacity(2);
        let mut weight = Vec::with_capacity(2);
        for i in 0..2 {
            let gs = gamma[i].transpose() * &next[i];
            let e = &w.r()[i] + &gs * &gamma[i];
            let mut rhs = Matrix::zeros(n, m + n);
            rhs.columns_mut(0, m).copy_from(&(&gs * phi));
            rhs.columns_mut(m, n).copy_from(&(&gs * &gamma[1 - i]));
            let sol = linalg::solve(&e, &rhs).map_err(coupling(k, Some(i)))?;
            a1.push(sol.columns(0, m).into_owned());
            a2.push(sol.columns(m, n).into_owned());
            weight.push(e);
        }
        let gains = [
            coupled(&a2[0], &a2[1], &a1[0], &a1[1]).map_err(coupling(k, Some(0)))?,
            coupled(&a2[1], &a2[0], &a1[1], &a1[0]).map_err(coupling(k, Some(1)))?,
        ];
        let updated = (0..2)
            .map(|i| {
                let j = 1 - i;
                let acl = phi + &gamma[j] * &gains[j];
                let mut s = &w.q()[i] + acl.transpose() * &next[i] * &acl
                    - gains[i].transpose() * &weight[i] * &gains[i];
                linalg::symmetrize(&mut s);
                s
            })
            .collect();
        let coefs = gains
            .iter()
            .map(|a| {
                let mut row = Matrix::zeros(n, layout.dim());
                row.columns_mut(0, m).copy_from(a);
                row
            })
            .collect();
        schedule.push(coefs);
        values.push(ValueMatrices {
            per_controller: updated,
        });
    }
    schedule.reverse();
    values.reverse();
    Ok(Synthesis {
        schedule: GainSchedule::new(Scheme::DelayFreeGame, layout, schedule)?,
        values,
    })
}

pub fn synthesize_delay_free_game(dp: &DiscretePlant, w: &GameWeights) -> Result<GainSchedule> {
    synthesize_delay_free_game_traced(dp, w).map(|s| s.schedule)
}
