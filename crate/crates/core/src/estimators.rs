//! Stochastic gradient oracles and the constants `(α, β, ρ, δ)` of the
//! unbiasedness / second-moment / variance-recursion assumption they satisfy.
//!
//! Every draw is keyed by `(seed, sample_count)`: the generator for the
//! `k`-th call is ChaCha8 seeded with `seed` on stream `k`, and the draws
//! inside one call happen in a fixed order (component index first, then the
//! reference-update coin for L-SVRG).

use rand::seq::index;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::functions::SmoothFn;
use crate::linops::Vector;

/// SAGA recomputes its running mean from the table this often.
pub const SAGA_REFRESH: u64 = 1000;

/// Smallest `α` reported for a zero smooth term.
pub const ALPHA_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    Full,
    /// Sampling without replacement; benchmark use only.
    Minibatch {
        #[serde(default = "default_batch")]
        size: usize,
    },
    Lsvrg { p: f64 },
    Saga,
}

fn default_batch() -> usize {
    16
}

impl EstimatorKind {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, EstimatorKind::Full)
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Full => "full",
            EstimatorKind::Minibatch { .. } => "minibatch",
            EstimatorKind::Lsvrg { .. } => "lsvrg",
            EstimatorKind::Saga => "saga",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub kind: EstimatorKind,
    /// `x̃` for L-SVRG.
    pub ref_point: Option<Vector>,
    pub ref_full_grad: Option<Vector>,
    /// `∇f_i(φ_i)` for SAGA.
    pub grad_table: Vec<Vector>,
    pub table_mean: Option<Vector>,
    pub seed: u64,
    pub sample_count: u64,
}

impl EstimatorState {
    /// A state that still needs [`EstimatorState::initialize`] before
    /// variance-reduced kinds can sample.
    pub fn uninitialized(kind: EstimatorKind, seed: u64) -> Self {
        EstimatorState {
            kind,
            ref_point: None,
            ref_full_grad: None,
            grad_table: Vec::new(),
            table_mean: None,
            seed,
            sample_count: 0,
        }
    }

    pub fn new(kind: EstimatorKind, f: &SmoothFn, x0: &Vector, seed: u64) -> Result<Self> {
        let mut s = Self::uninitialized(kind, seed);
        s.initialize(f, x0)?;
        Ok(s)
    }

    /// Sets `x̃ = x0` (L-SVRG) or fills the table at `x0` (SAGA).
    pub fn initialize(&mut self, f: &SmoothFn, x0: &Vector) -> Result<()> {
        check_dim(f.dim(), x0.len())?;
        match self.kind {
            EstimatorKind::Full => {}
            EstimatorKind::Minibatch { size } => {
                if size == 0 {
                    return Err(Error::InvalidParameter("minibatch size must be positive".into()));
                }
            }
            EstimatorKind::Lsvrg { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidParameter(format!("L-SVRG p must lie in (0, 1], got {p}")));
                }
                self.ref_point = Some(x0.clone());
                self.ref_full_grad = Some(f.grad(x0)?);
            }
            EstimatorKind::Saga => {
                self.grad_table = (0..f.components()).map(|i| f.grad_component(i, x0)).collect::<Result<_>>()?;
                self.table_mean = Some(mean(&self.grad_table, f.dim()));
            }
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.sample_count);
        rng
    }

    /// Draws `g` with `E[g | past] = ∇F(x)` and advances the state.
    pub fn sample(&mut self, f: &SmoothFn, x: &Vector) -> Result<Vector> {
        let n = f.components();
        let mut rng = self.rng();
        let g = match self.kind {
            EstimatorKind::Full => f.grad(x)?,
            EstimatorKind::Minibatch { size } => {
                if size >= n {
                    f.grad(x)?
                } else {
                    let mut g = Vector::zeros(f.dim());
                    for i in index::sample(&mut rng, n, size) {
                        g += f.grad_component(i, x)?;
                    }
                    g / size as f64
                }
            }
            EstimatorKind::Lsvrg { p } => {
                let (Some(x_ref), Some(g_ref)) = (&self.ref_point, &self.ref_full_grad) else {
                    return Err(Error::UninitializedTable);
                };
                check_dim(x_ref.len(), x.len())?;
                let zeta = rng.random_range(0..n);
                let g = f.grad_component(zeta, x)? - f.grad_component(zeta, x_ref)? + g_ref;
                if rng.random_bool(p) {
                    self.ref_point = Some(x.clone());
                    self.ref_full_grad = Some(f.grad(x)?);
                }
                g
            }
            EstimatorKind::Saga => {
                if self.grad_table.len() != n || self.table_mean.is_none() {
                    return Err(Error::UninitializedTable);
                }
                let zeta = rng.random_range(0..n);
                let fresh = f.grad_component(zeta, x)?;
                let mean_ref = self.table_mean.as_mut().expect("checked above");
                let g = &fresh - &self.grad_table[zeta] + &*mean_ref;
                *mean_ref += (&fresh - &self.grad_table[zeta]) / n as f64;
                self.grad_table[zeta] = fresh;
                if (self.sample_count + 1).is_multiple_of(SAGA_REFRESH) {
                    self.table_mean = Some(mean(&self.grad_table, f.dim()));
                }
                g
            }
        };
        self.sample_count += 1;
        Ok(g)
    }

    /// `σ²` at the current state: `(1/n)Σ‖∇f_i(x̃) − ∇f_i(x*)‖²` for L-SVRG,
    /// the table analogue for SAGA, zero for the full gradient.
    pub fn sigma_sq(&self, f: &SmoothFn, x_star: Option<&Vector>) -> Result<f64> {
        let x_star = x_star.ok_or(Error::MissingOracle)?;
        let n = f.components();
        match self.kind {
            EstimatorKind::Full | EstimatorKind::Minibatch { .. } => Ok(0.0),
            EstimatorKind::Lsvrg { .. } => {
                let x_ref = self.ref_point.as_ref().ok_or(Error::UninitializedTable)?;
                let mut s = 0.0;
                for i in 0..n {
                    s += (f.grad_component(i, x_ref)? - f.grad_component(i, x_star)?).norm_squared();
                }
                Ok(s / n as f64)
            }
            EstimatorKind::Saga => {
                if self.grad_table.len() != n {
                    return Err(Error::UninitializedTable);
                }
                let mut s = 0.0;
                for (i, gi) in self.grad_table.iter().enumerate() {
                    s += (gi - f.grad_component(i, x_star)?).norm_squared();
                }
                Ok(s / n as f64)
            }
        }
    }
}

fn mean(vs: &[Vector], dim: usize) -> Vector {
    let mut m = Vector::zeros(dim);
    for v in vs {
        m += v;
    }
    if !vs.is_empty() {
        m /= vs.len() as f64;
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Constants from the published analysis of this estimator.
    Published,
    /// Constants worked out here and validated by Monte Carlo.
    Derived,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub delta: f64,
    /// `β/ρ`.
    pub kappa: f64,
    pub provenance: Provenance,
}

impl AssumptionConstants {
    fn build(alpha: f64, beta: f64, rho: f64, delta: f64, provenance: Provenance) -> Self {
        AssumptionConstants { alpha: alpha.max(ALPHA_FLOOR), beta, rho, delta, kappa: beta / rho, provenance }
    }

    /// The `κ` used by the linear-rate Lyapunov functions, which need
    /// `κ > β/ρ` strictly: `2β/ρ`, or `0` when `β = 0` (no variance term).
    pub fn linear_kappa(&self) -> f64 {
        if self.beta == 0.0 {
            0.0
        } else {
            2.0 * self.beta / self.rho
        }
    }

    /// `1 − ρ + β/κ` at [`Self::linear_kappa`]; zero without a variance term.
    pub fn variance_rate(&self) -> f64 {
        if self.beta == 0.0 {
            0.0
        } else {
            1.0 - self.rho + self.beta / self.linear_kappa()
        }
    }
}

pub fn constants(kind: EstimatorKind, f: &SmoothFn) -> Result<AssumptionConstants> {
    let max_nu = f.max_component_nu();
    let n = f.components() as f64;
    Ok(match kind {
        EstimatorKind::Full => AssumptionConstants::build(f.nu(), 0.0, 1.0, 0.0, Provenance::Published),
        EstimatorKind::Lsvrg { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParameter(format!("L-SVRG p must lie in (0, 1], got {p}")));
            }
            let alpha = 2.0 * max_nu;
            AssumptionConstants::build(alpha, 2.0, p, alpha * p / 2.0, Provenance::Published)
        }
        EstimatorKind::Saga => AssumptionConstants::build(2.0 * max_nu, 2.0, 1.0 / n, max_nu / n, Provenance::Derived),
        EstimatorKind::Minibatch { .. } => {
            return Err(Error::InvalidParameter(
                "minibatch SGD has no variance-reduction constants; set the stepsize by hand".into(),
            ))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeMode {
    /// `γ ≤ 1/(2(α + κδ))`, the ergodic-rate condition.
    Ergodic,
    /// `γ ≤ 1/(α + κδ)`, the linear-rate condition.
    Linear,
}

pub fn max_stepsize(c: &AssumptionConstants, mode: StepsizeMode) -> f64 {
    let denom = c.alpha + c.kappa * c.delta;
    match mode {
        StepsizeMode::Ergodic => 1.0 / (2.0 * denom),
        StepsizeMode::Linear => 1.0 / denom,
    }
}

/// Largest `γ` admitted by the linear-rate theorems at `κ = linear_kappa`.
pub fn linear_stepsize(c: &AssumptionConstants) -> f64 {
    1.0 / (c.alpha + c.linear_kappa() * c.delta)
}
