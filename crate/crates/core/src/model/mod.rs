//! Plant, delay and cost-weight data model.
//!
//! Plants are observed through an identity measurement map, so the state
//! `x(k)` is available to every controller at each sampling instant.

mod config;
mod presets;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, BlockLayout, Matrix};

pub use config::{load_config, DelaySpec, DelaySweep, ExperimentConfig, Scheme};
pub use presets::{preset_generic, preset_lfc};

/// Tolerance for `Γ₀ + Γ₁ = ∫₀ʰ e^{As} ds · B`.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// Largest asymmetry a weight matrix may carry before it is rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Continuous-time LTI plant with one delayed input channel per controller.
///
/// Delays are total delays (sensor-to-controller plus controller-to-actuator)
/// and must lie in `[0, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPlant {
    a: Matrix,
    b: Vec<Matrix>,
    delays: Vec<f64>,
    period: f64,
}

impl ContinuousPlant {
    pub fn new(a: Matrix, b: Vec<Matrix>, delays: Vec<f64>, period: f64) -> Result<Self> {
        let m = a.nrows();
        if a.ncols() != m {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.is_empty() {
            return Err(Error::validation(
                "controller-count",
                "at least one controller is required",
            ));
        }
        let n = b[0].ncols();
        for (i, bi) in b.iter().enumerate() {
            if bi.nrows() != m || bi.ncols() != n {
                return Err(Error::Dimension(format!(
                    "B[{i}] is {}x{}, expected {m}x{n}",
                    bi.nrows(),
                    bi.ncols()
                )));
            }
        }
        if delays.len() != b.len() {
            return Err(Error::Dimension(format!(
                "{} delays given for {} controllers",
                delays.len(),
                b.len()
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::validation(
                "positive-period",
                format!("h = {period}"),
            ));
        }
        check_delays(&delays, period)?;
        if a.iter()
            .chain(b.iter().flat_map(|m| m.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(Error::validation(
                "finite-entries",
                "plant matrices contain NaN or Inf",
            ));
        }
        Ok(Self {
            a,
            b,
            delays,
            period,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[Matrix] {
        &self.b
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn controllers(&self) -> usize {
        self.b.len()
    }

    /// Same plant with different delays.
    pub fn with_delays(&self, delays: &[f64]) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), delays.to_vec(), self.period)
    }
}

pub(crate) fn check_delays(delays: &[f64], period: f64) -> Result<()> {
    for (i, &tau) in delays.iter().enumerate() {
        if !(tau.is_finite() && tau >= 0.0 && tau < period) {
            return Err(Error::DelayBound {
                controller: i,
                delay: tau,
                period,
            });
        }
    }
    Ok(())
}

/// Sampled plant `x(k+1) = Φx(k) + Σ_i [Γ_{i,0}u_i(k) + Γ_{i,1}u_i(k-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlant {
    phi: Matrix,
    gamma0: Vec<Matrix>,
    gamma1: Vec<Matrix>,
}

impl DiscretePlant {
    pub fn new(phi: Matrix, gamma0: Vec<Matrix>, gamma1: Vec<Matrix>) -> Result<Self> {
        let m = phi.nrows();
        if phi.ncols() != m {
            return Err(Error::Dimension("Phi must be square".into()));
        }
        if gamma0.is_empty() || gamma0.len() != gamma1.len() {
            return Err(Error::Dimension(format!(
                "need one Gamma0 and one Gamma1 per controller, got {} and {}",
                gamma0.len(),
                gamma1.len()
            )));
        }
        let n = gamma0[0].ncols();
        for g in gamma0.iter().chain(gamma1.iter()) {
            if g.nrows() != m || g.ncols() != n {
                return Err(Error::Dimension(format!(
                    "Gamma is {}x{}, expected {m}x{n}",
                    g.nrows(),
                    g.ncols()
                )));
            }
        }
        Ok(Self {
            phi,
            gamma0,
            gamma1,
        })
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn gamma0(&self) -> &[Matrix] {
        &self.gamma0
    }

    pub fn gamma1(&self) -> &[Matrix] {
        &self.gamma1
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.gamma0[0].ncols()
    }

    pub fn controllers(&self) -> usize {
        self.gamma0.len()
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout::new(self.state_dim(), self.input_dim(), self.controllers())
    }

    /// The plant as seen by controller `i` alone.
    pub fn restrict(&self, i: usize) -> Result<Self> {
        if i >= self.controllers() {
            return Err(Error::Dimension(format!(
                "controller {i} out of range for {} controllers",
                self.controllers()
            )));
        }
        Self::new(
            self.phi.clone(),
            vec![self.gamma0[i].clone()],
            vec![self.gamma1[i].clone()],
        )
    }

    /// SHA-256 over dimensions and the exact bit patterns of Φ, Γ₀, Γ₁.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for d in [self.state_dim(), self.input_dim(), self.controllers()] {
            hasher.update((d as u64).to_le_bytes());
        }
        let all = std::iter::once(&self.phi)
            .chain(self.gamma0.iter())
            .chain(self.gamma1.iter());
        for m in all {
            for v in m.iter() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Zero-order-hold discretization with each input split at `h - τ_i`.
pub fn discretize(plant: &ContinuousPlant) -> Result<DiscretePlant> {
    let h = plant.period();
    check_delays(plant.delays(), h)?;
    let a = plant.a();
    let phi = linalg::mat_exp(a, h)?;
    let total = linalg::exp_integral(a, 0.0, h)?;

    let mut gamma0 = Vec::with_capacity(plant.controllers());
    let mut gamma1 = Vec::with_capacity(plant.controllers());
    for (i, (b, &tau)) in plant.b().iter().zip(plant.delays()).enumerate() {
        let split = h - tau;
        let g0 = linalg::exp_integral(a, 0.0, split)? * b;
        let g1 = linalg::exp_integral(a, split, h)? * b;
        let drift = linalg::max_abs(&(&g0 + &g1 - &total * b));
        if drift > CONSERVATION_TOLERANCE {
            return Err(Error::validation(
                "delay-split-conservation",
                format!("controller {i}: Gamma0 + Gamma1 deviates by {drift:e}"),
            ));
        }
        gamma0.push(g0);
        gamma1.push(g1);
    }
    DiscretePlant::new(phi, gamma0, gamma1)
}

/// Per-controller quadratic weights and the horizon length.
#[derive(Debug, Clone, PartialEq)]
pub struct GameWeights {
    q: Vec<Matrix>,
    q_terminal: Vec<Matrix>,
    r: Vec<Matrix>,
    horizon: usize,
}

impl GameWeights {
    /// Validates and symmetrizes the weights. State weights must be
    /// positive semi-definite and input weights positive definite.
    pub fn new(
        q: Vec<Matrix>,
        q_terminal: Vec<Matrix>,
        r: Vec<Matrix>,
        horizon: usize,
    ) -> Result<Self> {
        if q.is_empty() || q.len() != q_terminal.len() || q.len() != r.len() {
            return Err(Error::Dimension(format!(
                "weight lists have lengths Q={}, QN={}, R={}",
                q.len(),
                q_terminal.len(),
                r.len()
            )));
        }
        if horizon == 0 {
            return Err(Error::validation(
                "positive-horizon",
                "horizon must be at least 1",
            ));
        }
        let m = q[0].nrows();
        let n = r[0].nrows();
        let q = q
            .into_iter()
            .enumerate()
            .map(|(i, w)| checked_weight(w, m, "Q", i, Definiteness::SemiDefinite))
            .collect::<Result<Vec<_>>>()?;
        let q_terminal = q_terminal
            .into_iter()
            .enumerate()
            .map(|(i, w)| checked_weight(w, m, "QN", i, Definiteness::SemiDefinite))
            .collect::<Result<Vec<_>>>()?;
        let r = r
            .into_iter()
            .enumerate()
            .map(|(i, w)| checked_weight(w, n, "R", i, Definiteness::Definite))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            q,
            q_terminal,
            r,
            horizon,
        })
    }

    pub fn q(&self) -> &[Matrix] {
        &self.q
    }

    pub fn q_terminal(&self) -> &[Matrix] {
        &self.q_terminal
    }

    pub fn r(&self) -> &[Matrix] {
        &self.r
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn controllers(&self) -> usize {
        self.q.len()
    }

    pub fn state_dim(&self) -> usize {
        self.q[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.r[0].nrows()
    }

    /// Weights of controller `i` alone.
    pub fn restrict(&self, i: usize) -> Result<Self> {
        if i >= self.controllers() {
            return Err(Error::Dimension(format!("controller {i} out of range")));
        }
        Ok(Self {
            q: vec![self.q[i].clone()],
            q_terminal: vec![self.q_terminal[i].clone()],
            r: vec![self.r[i].clone()],
            horizon: self.horizon,
        })
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(
            self.q.clone(),
            self.q_terminal.clone(),
            self.r.clone(),
            horizon,
        )
    }

    /// Errors unless the weights fit `plant`.
    pub fn check_against(&self, plant: &DiscretePlant) -> Result<()> {
        if self.controllers() != plant.controllers()
            || self.state_dim() != plant.state_dim()
            || self.input_dim() != plant.input_dim()
        {
            return Err(Error::Dimension(format!(
                "weights are for p={}, M={}, N={} but plant has p={}, M={}, N={}",
                self.controllers(),
                self.state_dim(),
                self.input_dim(),
                plant.controllers(),
                plant.state_dim(),
                plant.input_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Definiteness {
    Definite,
    SemiDefinite,
}

fn checked_weight(
    mut w: Matrix,
    dim: usize,
    name: &str,
    i: usize,
    kind: Definiteness,
) -> Result<Matrix> {
    if w.nrows() != dim || w.ncols() != dim {
        return Err(Error::Dimension(format!(
            "{name}[{i}] is {}x{}, expected {dim}x{dim}",
            w.nrows(),
            w.ncols()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(
            "finite-entries",
            format!("{name}[{i}] contains NaN or Inf"),
        ));
    }
    let skew = linalg::asymmetry(&w);
    if skew > SYMMETRY_TOLERANCE * (1.0 + linalg::max_abs(&w)) {
        return Err(Error::validation(
            "symmetric-weight",
            format!("{name}[{i}] is not symmetric (asymmetry {skew:e})"),
        ));
    }
    linalg::symmetrize(&mut w);
    let ok = match kind {
        Definiteness::Definite => linalg::is_positive_definite(&w),
        Definiteness::SemiDefinite => linalg::is_positive_semidefinite(&w),
    };
    if !ok {
        let what = match kind {
            Definiteness::Definite => "positive-definite-weight",
            Definiteness::SemiDefinite => "positive-semidefinite-weight",
        };
        return Err(Error::validation(
            what,
            format!("{name}[{i}] fails factorization"),
        ));
    }
    Ok(w)
}
