use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::{Vector, RANK_THRESHOLD};

/// Smooth convex term of the objective, stored as a finite sum
/// `F = (1/n) Σ f_i` plus an optional ridge `(ridge/2)‖x‖²` that every
/// component carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothFn {
    kind: SmoothKind,
    ridge: f64,
    nu: f64,
    mu: f64,
    component_nu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SmoothKind {
    Zero {
        dim: usize,
    },
    /// `½ xᵀQx + qᵀx`, a single component.
    Quadratic { q_mat: DMatrix<f64>, q: Vector },
    /// `½‖Wx − a‖²`, split by rows: `f_i(x) = (n/2)(w_iᵀx − a_i)²`.
    LeastSquares {
        w: DMatrix<f64>,
        a: Vector,
        gram: DMatrix<f64>,
        wta: Vector,
    },
    /// Mean logistic loss with labels in `{0, 1}`.
    Logistic { w: DMatrix<f64>, labels: Vector },
}

fn sym_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let top = eig.max().max(0.0);
    // rounding-level eigenvalues of a singular matrix count as zero
    let low = eig.min();
    (if low > RANK_THRESHOLD * top { low } else { 0.0 }, top)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl SmoothFn {
    pub fn zero(dim: usize) -> Self {
        SmoothFn {
            kind: SmoothKind::Zero { dim },
            ridge: 0.0,
            nu: 0.0,
            mu: 0.0,
            component_nu: vec![0.0],
        }
    }

    /// `½ xᵀQx + qᵀx` for symmetric positive semidefinite `Q`.
    pub fn quadratic(q_mat: DMatrix<f64>, q: Vector) -> Result<Self> {
        check_dim(q_mat.nrows(), q.len())?;
        check_dim(q_mat.nrows(), q_mat.ncols())?;
        let asym = (&q_mat - q_mat.transpose()).amax();
        if asym > 1e-12 * q_mat.amax().max(1.0) {
            return Err(Error::InvalidParameter("quadratic form must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(q_mat.clone()).eigenvalues;
        if q_mat.nrows() > 0 && eig.min() < -1e-10 * eig.amax().max(1.0) {
            return Err(Error::InvalidParameter("quadratic form must be PSD".into()));
        }
        let (mu, nu) = sym_extremes(&q_mat);
        Ok(SmoothFn {
            kind: SmoothKind::Quadratic { q_mat, q },
            ridge: 0.0,
            nu,
            mu,
            component_nu: vec![nu],
        })
    }

    /// `½‖Wx − a‖²` with `ν = ‖WᵀW‖`.
    pub fn least_squares(w: DMatrix<f64>, a: Vector) -> Result<Self> {
        check_dim(w.nrows(), a.len())?;
        if w.nrows() == 0 {
            return Err(Error::InvalidParameter("least squares needs at least one row".into()));
        }
        let gram = w.tr_mul(&w);
        let wta = w.tr_mul(&a);
        let (mu, nu) = sym_extremes(&gram);
        let n = w.nrows() as f64;
        let component_nu = w.row_iter().map(|r| n * r.norm_squared()).collect();
        Ok(SmoothFn {
            kind: SmoothKind::LeastSquares { w, a, gram, wta },
            ridge: 0.0,
            nu,
            mu,
            component_nu,
        })
    }

    /// `(1/n) Σ −(a_i log h(w_iᵀx) + (1 − a_i) log(1 − h(w_iᵀx))) + (λ/2)‖x‖²`.
    pub fn logistic_l2(w: DMatrix<f64>, labels: Vector, lambda: f64) -> Result<Self> {
        check_dim(w.nrows(), labels.len())?;
        if w.nrows() == 0 {
            return Err(Error::InvalidParameter("logistic loss needs at least one row".into()));
        }
        if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
            return Err(Error::InvalidParameter("logistic labels must be 0 or 1".into()));
        }
        let n = w.nrows() as f64;
        let (_, top) = sym_extremes(&w.tr_mul(&w));
        let component_nu = w.row_iter().map(|r| r.norm_squared() / 4.0).collect();
        SmoothFn {
            kind: SmoothKind::Logistic { w, labels },
            ridge: 0.0,
            nu: top / (4.0 * n),
            mu: 0.0,
            component_nu,
        }
        .with_ridge(lambda)
    }

    /// Adds `(λ/2)‖x‖²` to every component.
    pub fn with_ridge(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("ridge must be ≥ 0, got {lambda}")));
        }
        self.ridge += lambda;
        self.nu += lambda;
        self.mu += lambda;
        for c in &mut self.component_nu {
            *c += lambda;
        }
        Ok(self)
    }

    pub fn kind(&self) -> &SmoothKind {
        &self.kind
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SmoothKind::Zero { dim } => *dim,
            SmoothKind::Quadratic { q, .. } => q.len(),
            SmoothKind::LeastSquares { w, .. } | SmoothKind::Logistic { w, .. } => w.ncols(),
        }
    }

    /// Number of components `n` in `F = (1/n) Σ f_i`.
    pub fn components(&self) -> usize {
        match &self.kind {
            SmoothKind::Zero { .. } | SmoothKind::Quadratic { .. } => 1,
            SmoothKind::LeastSquares { w, .. } | SmoothKind::Logistic { w, .. } => w.nrows(),
        }
    }

    /// Smoothness constant `ν`.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Strong convexity constant `μ_F`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn component_nu(&self) -> &[f64] {
        &self.component_nu
    }

    pub fn max_component_nu(&self) -> f64 {
        self.component_nu.iter().cloned().fold(0.0, f64::max)
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let base = match &self.kind {
            SmoothKind::Zero { .. } => 0.0,
            SmoothKind::Quadratic { q_mat, q } => 0.5 * x.dot(&(q_mat * x)) + q.dot(x),
            SmoothKind::LeastSquares { w, a, .. } => 0.5 * (w * x - a).norm_squared(),
            SmoothKind::Logistic { w, labels } => {
                let t = w * x;
                let n = labels.len() as f64;
                t.iter()
                    .zip(labels.iter())
                    .map(|(&t, &a)| softplus(t) - a * t)
                    .sum::<f64>()
                    / n
            }
        };
        Ok(base + 0.5 * self.ridge * x.norm_squared())
    }

    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        let mut g = match &self.kind {
            SmoothKind::Zero { dim } => Vector::zeros(*dim),
            SmoothKind::Quadratic { q_mat, q } => q_mat * x + q,
            SmoothKind::LeastSquares { gram, wta, .. } => gram * x - wta,
            SmoothKind::Logistic { w, labels } => {
                let t = w * x;
                let n = labels.len() as f64;
                let resid = Vector::from_fn(t.len(), |i, _| (sigmoid(t[i]) - labels[i]) / n);
                w.tr_mul(&resid)
            }
        };
        if self.ridge != 0.0 {
            g.axpy(self.ridge, x, 1.0);
        }
        Ok(g)
    }

    /// `f_i(x)` for the zero-based component index `i`.
    pub fn component_value(&self, i: usize, x: &Vector) -> Result<f64> {
        self.check_component(i, x)?;
        let base = match &self.kind {
            SmoothKind::Zero { .. } | SmoothKind::Quadratic { .. } => {
                return self.value(x);
            }
            SmoothKind::LeastSquares { w, a, .. } => {
                let n = w.nrows() as f64;
                0.5 * n * (w.row(i).dot(&x.transpose()) - a[i]).powi(2)
            }
            SmoothKind::Logistic { w, labels } => {
                let t = w.row(i).dot(&x.transpose());
                softplus(t) - labels[i] * t
            }
        };
        Ok(base + 0.5 * self.ridge * x.norm_squared())
    }

    /// `∇f_i(x)`; the mean over `i` equals [`SmoothFn::grad`].
    pub fn grad_component(&self, i: usize, x: &Vector) -> Result<Vector> {
        self.check_component(i, x)?;
        let (row, scale) = match &self.kind {
            SmoothKind::Zero { .. } | SmoothKind::Quadratic { .. } => return self.grad(x),
            SmoothKind::LeastSquares { w, a, .. } => {
                let n = w.nrows() as f64;
                let row = w.row(i);
                (row, n * (row.dot(&x.transpose()) - a[i]))
            }
            SmoothKind::Logistic { w, labels } => {
                let row = w.row(i);
                (row, sigmoid(row.dot(&x.transpose())) - labels[i])
            }
        };
        let mut g = row.transpose() * scale;
        if self.ridge != 0.0 {
            g.axpy(self.ridge, x, 1.0);
        }
        Ok(g)
    }

    fn check_component(&self, i: usize, x: &Vector) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let n = self.components();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        Ok(())
    }

    /// `(Q, q, c)` with `F(x) = ½xᵀQx + qᵀx + c`, ridge included. `None` for
    /// the logistic loss.
    pub fn quadratic_form(&self) -> Option<(DMatrix<f64>, Vector, f64)> {
        let n = self.dim();
        let (q_mat, q, c) = match &self.kind {
            SmoothKind::Zero { dim } => (DMatrix::zeros(*dim, *dim), Vector::zeros(*dim), 0.0),
            SmoothKind::Quadratic { q_mat, q } => (q_mat.clone(), q.clone(), 0.0),
            SmoothKind::LeastSquares { gram, wta, a, .. } => (gram.clone(), -wta.clone(), 0.5 * a.norm_squared()),
            SmoothKind::Logistic { .. } => return None,
        };
        Some((q_mat + DMatrix::identity(n, n) * self.ridge, q, c))
    }

    /// `D_F(x, x') = F(x) − F(x') − ⟨∇F(x'), x − x'⟩`.
    pub fn bregman(&self, x: &Vector, x_ref: &Vector) -> Result<f64> {
        Ok(self.value(x)? - self.value(x_ref)? - self.grad(x_ref)?.dot(&(x - x_ref)))
    }
}
