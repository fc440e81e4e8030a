//! Davis-Yin three-operator splitting and the two preconditioned operator
//! sets on `Z = X × Y` whose DYS iterations are PDDY, PD3O and the two
//! Condat-Vu forms.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::Vector;
use crate::problem::{ProblemSpec, SaddlePoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DysState {
    pub v: Vector,
    pub gamma: f64,
}

/// Everything one DYS iteration produces.
#[derive(Clone, Debug, PartialEq)]
pub struct DysStep {
    pub v: Vector,
    pub z: Vector,
    pub u: Vector,
    /// `C̃(z)`
    pub cz: Vector,
    pub v_next: Vector,
}

/// `z = J_{γB̃}(v)`, `u = J_{γÃ}(2z − v − γC̃(z))`, `v' = v + u − z`.
pub fn dys_step(
    resolvent_b: impl Fn(&Vector) -> Result<Vector>,
    resolvent_a: impl Fn(&Vector) -> Result<Vector>,
    apply_c: impl Fn(&Vector) -> Result<Vector>,
    state: &DysState,
) -> Result<DysStep> {
    let v = &state.v;
    let z = resolvent_b(v)?;
    let cz = apply_c(&z)?;
    let u = resolvent_a(&(&z * 2.0 - v - &cz * state.gamma))?;
    let v_next = v + &u - &z;
    Ok(DysStep { v: v.clone(), z, u, cz, v_next })
}

/// Three monotone operators with computable resolvents, in the metric given
/// by `inner`.
pub trait Splitting {
    fn gamma(&self) -> f64;
    /// `J_{γB̃}`, applied first.
    fn resolvent_b(&self, v: &Vector) -> Result<Vector>;
    /// `J_{γÃ}`
    fn resolvent_a(&self, v: &Vector) -> Result<Vector>;
    /// `C̃`
    fn apply_c(&self, z: &Vector) -> Result<Vector>;
    fn inner(&self, a: &Vector, b: &Vector) -> Result<f64> {
        Ok(a.dot(b))
    }
    /// The DYS fixed point `v* = z* + γb*` with `z* = (x*, y*)` and `b*` the
    /// element of `B̃(z*)` certified by the saddle point's subgradients.
    fn fixed_point(&self, saddle: &SaddlePoint) -> Result<Vector>;

    fn step(&self, state: &DysState) -> Result<DysStep> {
        dys_step(|v| self.resolvent_b(v), |v| self.resolvent_a(v), |z| self.apply_c(z), state)
    }
}

pub fn concat(x: &Vector, y: &Vector) -> Vector {
    let mut v = Vector::zeros(x.len() + y.len());
    v.rows_mut(0, x.len()).copy_from(x);
    v.rows_mut(x.len(), y.len()).copy_from(y);
    v
}

pub fn split(v: &Vector, primal_dim: usize) -> (Vector, Vector) {
    (v.rows(0, primal_dim).into_owned(), v.rows(primal_dim, v.len() - primal_dim).into_owned())
}

/// `‖y‖²_{γ,τ} = (γ/τ)‖y‖² − γ²‖L*y‖²`.
pub fn gamma_tau_norm_sq(spec: &ProblemSpec, y: &Vector, gamma: f64, tau: f64) -> Result<f64> {
    Ok(gamma / tau * y.norm_squared() - gamma * gamma * spec.l.adjoint_apply(y)?.norm_squared())
}

/// `⟨(x₁, y₁), (x₂, y₂)⟩_P = ⟨x₁, x₂⟩ + (γ/τ)⟨y₁, y₂⟩ − γ²⟨L*y₁, L*y₂⟩`.
pub fn p_inner(spec: &ProblemSpec, a: &Vector, b: &Vector, gamma: f64, tau: f64) -> Result<f64> {
    let n = spec.primal_dim();
    let (ax, ay) = split(a, n);
    let (bx, by) = split(b, n);
    let lay = spec.l.adjoint_apply(&ay)?;
    let lby = spec.l.adjoint_apply(&by)?;
    Ok(ax.dot(&bx) + gamma / tau * ay.dot(&by) - gamma * gamma * lay.dot(&lby))
}

pub fn p_norm_sq(spec: &ProblemSpec, v: &Vector, gamma: f64, tau: f64) -> Result<f64> {
    p_inner(spec, v, v, gamma, tau)
}

/// Which of the two primal-dual operators is resolved first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimalDualOrder {
    /// `DYS(P⁻¹B, P⁻¹A, P⁻¹C)`: `z = J_{γP⁻¹A}(v)`.
    Pddy,
    /// `DYS(P⁻¹A, P⁻¹B, P⁻¹C)`: `z = J_{γP⁻¹B}(v)`.
    Pd3o,
}

/// `A(x, y) = (L*y, −Lx + ∂H*(y))`, `B(x, y) = (∂R(x), 0)`,
/// `C(x, y) = (∇F(x), 0)` in the metric
/// `P = diag(I, (γ/τ)I − γ²LL*)`.
pub struct PrimalDualSplitting<'a> {
    pub spec: &'a ProblemSpec,
    pub gamma: f64,
    pub tau: f64,
    pub order: PrimalDualOrder,
}

impl PrimalDualSplitting<'_> {
    /// `y' = prox_{τH*}(y + τL(x − γL*y))`, `x' = x − γL*y'`.
    pub fn resolvent_pa(&self, v: &Vector) -> Result<Vector> {
        let (x, y) = split(v, self.spec.primal_dim());
        let l = &self.spec.l;
        let inner = &x - l.adjoint_apply(&y)? * self.gamma;
        let y_new = self.spec.h.prox_conjugate(&(&y + l.apply(&inner)? * self.tau), self.tau)?;
        let x_new = x - l.adjoint_apply(&y_new)? * self.gamma;
        Ok(concat(&x_new, &y_new))
    }

    /// `(prox_{γR}(x), y)`.
    pub fn resolvent_pb(&self, v: &Vector) -> Result<Vector> {
        let (x, y) = split(v, self.spec.primal_dim());
        Ok(concat(&self.spec.r.prox(&x, self.gamma)?, &y))
    }
}

impl Splitting for PrimalDualSplitting<'_> {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn resolvent_b(&self, v: &Vector) -> Result<Vector> {
        match self.order {
            PrimalDualOrder::Pddy => self.resolvent_pa(v),
            PrimalDualOrder::Pd3o => self.resolvent_pb(v),
        }
    }

    fn resolvent_a(&self, v: &Vector) -> Result<Vector> {
        match self.order {
            PrimalDualOrder::Pddy => self.resolvent_pb(v),
            PrimalDualOrder::Pd3o => self.resolvent_pa(v),
        }
    }

    fn apply_c(&self, z: &Vector) -> Result<Vector> {
        let (x, y) = split(z, self.spec.primal_dim());
        Ok(concat(&self.spec.f.grad(&x)?, &Vector::zeros(y.len())))
    }

    fn inner(&self, a: &Vector, b: &Vector) -> Result<f64> {
        p_inner(self.spec, a, b, self.gamma, self.tau)
    }

    fn fixed_point(&self, saddle: &SaddlePoint) -> Result<Vector> {
        let shift = match self.order {
            // P⁻¹A(z*) = (L*y*, 0) since h* = Lx*
            PrimalDualOrder::Pddy => self.spec.l.adjoint_apply(&saddle.y)?,
            PrimalDualOrder::Pd3o => saddle.r.clone(),
        };
        Ok(concat(&(&saddle.x + shift * self.gamma), &saddle.y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CondatVuForm {
    /// Resolves `Ā(x, y) = (∂R(x) + L*y, −Lx)` first.
    Alg31,
    /// Resolves `B̄(x, y) = (0, ∂H*(y))` first.
    Alg32,
}

/// `Ā`, `B̄` and `C` in the metric `Q = diag(K, I)`,
/// `K = (γ/τ)I − γ²L*L`. Here `τ` is the primal step and `γ` the dual one.
pub struct CondatVuSplitting<'a> {
    pub spec: &'a ProblemSpec,
    pub gamma: f64,
    pub tau: f64,
    pub form: CondatVuForm,
    k_mat: DMatrix<f64>,
    k_chol: Cholesky<f64, Dyn>,
}

impl<'a> CondatVuSplitting<'a> {
    /// Densifies `K`; meant for verification at small dimension.
    pub fn new(spec: &'a ProblemSpec, gamma: f64, tau: f64, form: CondatVuForm) -> Result<Self> {
        let n = spec.primal_dim();
        let ld = spec.l.to_dense();
        let k_mat = DMatrix::identity(n, n) * (gamma / tau) - ld.transpose() * &ld * (gamma * gamma);
        let k_chol = k_mat
            .clone()
            .cholesky()
            .ok_or_else(|| Error::StepsizeCondition("K = (γ/τ)I − γ²L*L is not positive definite".into()))?;
        Ok(CondatVuSplitting { spec, gamma, tau, form, k_mat, k_chol })
    }

    /// `x' = prox_{τR}((I − τγL*L)x − τL*y)`, `y' = y + γLx'`.
    pub fn resolvent_qa(&self, v: &Vector) -> Result<Vector> {
        let (x, y) = split(v, self.spec.primal_dim());
        let l = &self.spec.l;
        let arg = &x - l.gram_apply(&x)? * (self.tau * self.gamma) - l.adjoint_apply(&y)? * self.tau;
        let x_new = self.spec.r.prox(&arg, self.tau)?;
        let y_new = y + l.apply(&x_new)? * self.gamma;
        Ok(concat(&x_new, &y_new))
    }

    /// `(x, prox_{γH*}(y))`.
    pub fn resolvent_qb(&self, v: &Vector) -> Result<Vector> {
        let (x, y) = split(v, self.spec.primal_dim());
        Ok(concat(&x, &self.spec.h.prox_conjugate(&y, self.gamma)?))
    }
}

impl Splitting for CondatVuSplitting<'_> {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn resolvent_b(&self, v: &Vector) -> Result<Vector> {
        match self.form {
            CondatVuForm::Alg31 => self.resolvent_qa(v),
            CondatVuForm::Alg32 => self.resolvent_qb(v),
        }
    }

    fn resolvent_a(&self, v: &Vector) -> Result<Vector> {
        match self.form {
            CondatVuForm::Alg31 => self.resolvent_qb(v),
            CondatVuForm::Alg32 => self.resolvent_qa(v),
        }
    }

    fn apply_c(&self, z: &Vector) -> Result<Vector> {
        let (x, y) = split(z, self.spec.primal_dim());
        Ok(concat(&self.k_chol.solve(&self.spec.f.grad(&x)?), &Vector::zeros(y.len())))
    }

    fn inner(&self, a: &Vector, b: &Vector) -> Result<f64> {
        let n = self.spec.primal_dim();
        let (ax, ay) = split(a, n);
        let (bx, by) = split(b, n);
        Ok(ax.dot(&(&self.k_mat * bx)) + ay.dot(&by))
    }

    fn fixed_point(&self, saddle: &SaddlePoint) -> Result<Vector> {
        let l = &self.spec.l;
        let (bx, by) = match self.form {
            // Q⁻¹Ā(z*) = (K⁻¹(r* + L*y*), −Lx*)
            CondatVuForm::Alg31 => {
                (self.k_chol.solve(&(&saddle.r + l.adjoint_apply(&saddle.y)?)), -l.apply(&saddle.x)?)
            }
            // Q⁻¹B̄(z*) = (0, h*)
            CondatVuForm::Alg32 => (Vector::zeros(saddle.x.len()), saddle.h.clone()),
        };
        Ok(concat(&(&saddle.x + bx * self.gamma), &(&saddle.y + by * self.gamma)))
    }
}
