//! The composite problem `min F(x) + R(x) + H(Lx)` together with its
//! Lagrangian, duality gap and fixed-point (KKT) residuals.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::functions::{bregman_gap, BregmanTriple, Extended, ProxFn, SmoothFn};
use crate::linops::{LinOp, SpectralInfo, Vector};

/// Tolerance and iteration cap used when a problem computes its own spectral
/// information.
pub const SPECTRAL_TOL: f64 = 1e-9;
pub const SPECTRAL_MAX_ITER: usize = 2_000_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub f: SmoothFn,
    pub r: ProxFn,
    pub h: ProxFn,
    pub l: LinOp,
    /// `None` for a zero operator.
    pub spectral: Option<SpectralInfo>,
}

/// A primal-dual solution with the subgradients `r* ∈ ∂R(x*)` and
/// `h* ∈ ∂H*(y*)` that certify it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub x: Vector,
    pub y: Vector,
    pub r: Vector,
    pub h: Vector,
}

/// Largest optimality residual tolerated for a [`SaddlePoint`].
pub const SADDLE_TOL: f64 = 1e-6;

impl SaddlePoint {
    /// `(‖∇F(x*) + r* + L*y*‖, ‖−Lx* + h*‖)`.
    pub fn residuals(&self, f: &SmoothFn, l: &LinOp) -> Result<(f64, f64)> {
        let primal = f.grad(&self.x)? + &self.r + l.adjoint_apply(&self.y)?;
        let dual = &self.h - l.apply(&self.x)?;
        Ok((primal.norm(), dual.norm()))
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        let (a, b) = self.residuals(&spec.f, &spec.l)?;
        if a.max(b) > SADDLE_TOL {
            return Err(Error::NotASaddlePoint(a.max(b)));
        }
        Ok(())
    }
}

impl ProblemSpec {
    pub fn new(f: SmoothFn, r: ProxFn, h: ProxFn, l: LinOp) -> Result<Self> {
        check_dim(l.in_dim(), f.dim())?;
        // catches size mismatches in R and H early
        r.value(&Vector::zeros(f.dim()))?;
        h.prox(&Vector::zeros(l.out_dim()), 1.0)?;
        let spectral = match l.spectral_info(SPECTRAL_TOL, SPECTRAL_MAX_ITER) {
            Ok(info) => Some(info),
            Err(Error::RankZero) => None,
            Err(e) => return Err(e),
        };
        Ok(ProblemSpec { f, r, h, l, spectral })
    }

    pub fn primal_dim(&self) -> usize {
        self.l.in_dim()
    }

    pub fn dual_dim(&self) -> usize {
        self.l.out_dim()
    }

    /// `‖L‖²`, zero for the zero operator.
    pub fn op_norm_sq(&self) -> f64 {
        self.spectral.as_ref().map_or(0.0, |s| s.op_norm_sq)
    }

    pub fn omega(&self) -> Option<f64> {
        self.spectral.as_ref().and_then(|s| s.omega)
    }

    /// `F(x) + R(x) + H(Lx)`.
    pub fn objective(&self, x: &Vector) -> Result<Extended> {
        Ok(Extended::Finite(self.f.value(x)?) + self.r.value(x)? + self.h.value(&self.l.apply(x)?)?)
    }

    /// `ℒ(x, y) = (F + R)(x) − H*(y) + ⟨Lx, y⟩`. `Infeasible` when either
    /// `x ∉ dom R` or `y ∉ dom H*`.
    pub fn lagrangian(&self, x: &Vector, y: &Vector) -> Result<Extended> {
        let fr = Extended::Finite(self.f.value(x)?) + self.r.value(x)?;
        let hstar = self.h.conj_value(y)?;
        let coupling = self.l.apply(x)?.dot(y);
        Ok(match (fr, hstar) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a - b + coupling),
            _ => Extended::Infeasible,
        })
    }

    /// `ℒ(x, y*) − ℒ(x*, y)`; `Infeasible` means the gap is undefined.
    pub fn duality_gap(&self, x: &Vector, y: &Vector, saddle: &SaddlePoint) -> Result<Extended> {
        saddle.validate(self)?;
        let upper = self.lagrangian(x, &saddle.y)?;
        let lower = self.lagrangian(&saddle.x, y)?;
        Ok(match (upper, lower) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a - b),
            _ => Extended::Infeasible,
        })
    }

    pub fn bregman_gap(&self, x: &Vector, y: &Vector, saddle: &SaddlePoint) -> Result<BregmanTriple> {
        bregman_gap(&self.f, &self.r, &self.h, &self.l, x, y, saddle)
    }

    /// Fixed-point residuals
    /// `(‖x − prox_{γR}(x − γ(∇F(x) + L*y))‖, ‖y − prox_{τH*}(y + τLx)‖)`.
    pub fn kkt_residual(&self, x: &Vector, y: &Vector, gamma: f64, tau: f64) -> Result<(f64, f64)> {
        let primal_in = x - (self.f.grad(x)? + self.l.adjoint_apply(y)?) * gamma;
        let primal = (x - self.r.prox(&primal_in, gamma)?).norm();
        let dual_in = y + self.l.apply(x)? * tau;
        let dual = (y - self.h.prox_conjugate(&dual_in, tau)?).norm();
        Ok((primal, dual))
    }

    /// The stronger gap `P(x) + D(y)` with `P = F + R + H∘L` and
    /// `D = (F + R)*∘(−L*) + H*`. Only available for a strongly convex
    /// quadratic `F` and `R = 0`, where `F*` has a closed form.
    pub fn primal_dual_gap(&self, x: &Vector, y: &Vector) -> Result<Option<f64>> {
        if self.r != ProxFn::Zero {
            return Ok(None);
        }
        let Some((q_mat, q, constant)) = self.f.quadratic_form() else {
            return Ok(None);
        };
        let Some(chol) = q_mat.cholesky() else {
            return Ok(None);
        };
        // F(x) = ½xᵀQx + qᵀx + c  ⇒  F*(u) = ½(u − q)ᵀQ⁻¹(u − q) − c
        let u = -self.l.adjoint_apply(y)? - &q;
        let fstar = 0.5 * u.dot(&chol.solve(&u)) - constant;
        let primal = self.objective(x)?;
        let hstar = self.h.conj_value(y)?;
        Ok(match (primal, hstar) {
            (Extended::Finite(p), Extended::Finite(h)) => Some(p + fstar + h),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn v(d: &[f64]) -> Vector {
        Vector::from_column_slice(d)
    }

    #[test]
    fn feasibility_lagrangian_is_linear() {
        let b = v(&[1., -1.]);
        let l = LinOp::Dense(DMatrix::from_row_slice(2, 3, &[1., 0., 2., 0., 1., 1.]));
        let spec = ProblemSpec::new(SmoothFn::zero(3), ProxFn::Zero, ProxFn::IndicatorPoint { b: b.clone() }, l.clone())
            .unwrap();
        let x = v(&[0.3, 2.0, -1.0]);
        let y = v(&[0.7, -0.2]);
        let expect = (l.apply(&x).unwrap() - &b).dot(&y);
        assert!((spec.lagrangian(&x, &y).unwrap().finite().unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn quadratic_lagrangian_ignores_zero_operator() {
        let spec = ProblemSpec::new(
            SmoothFn::quadratic(DMatrix::identity(2, 2), Vector::zeros(2)).unwrap(),
            ProxFn::Zero,
            ProxFn::Zero,
            LinOp::Zero { in_dim: 2, out_dim: 1 },
        )
        .unwrap();
        assert!(spec.spectral.is_none());
        let x = v(&[3., 4.]);
        assert_eq!(spec.lagrangian(&x, &v(&[0.])).unwrap(), Extended::Finite(12.5));
        assert_eq!(spec.lagrangian(&Vector::zeros(2), &v(&[0.])).unwrap(), Extended::Finite(0.0));
        // y outside dom H* = {0}
        assert_eq!(spec.lagrangian(&x, &v(&[1.])).unwrap(), Extended::Infeasible);
    }

    #[test]
    fn kkt_residual_reductions() {
        let a = v(&[1., 2.]);
        let f = SmoothFn::quadratic(DMatrix::identity(2, 2), -a.clone()).unwrap();
        let spec = ProblemSpec::new(f, ProxFn::Zero, ProxFn::Zero, LinOp::Zero { in_dim: 2, out_dim: 2 }).unwrap();
        let x = v(&[0., 0.]);
        let (rp, rd) = spec.kkt_residual(&x, &Vector::zeros(2), 0.5, 1.0).unwrap();
        assert!((rp - 0.5 * a.norm()).abs() < 1e-15);
        assert_eq!(rd, 0.0);

        let b = v(&[1., 3.]);
        let lico = ProblemSpec::new(
            SmoothFn::zero(2),
            ProxFn::Zero,
            ProxFn::IndicatorPoint { b: b.clone() },
            LinOp::Identity(2),
        )
        .unwrap();
        let x = v(&[0.5, 0.5]);
        let tau = 0.3;
        let (_, rd) = lico.kkt_residual(&x, &Vector::zeros(2), 1.0, tau).unwrap();
        assert!((rd - tau * (&x - &b).norm()).abs() < 1e-15);
    }

    #[test]
    fn saddle_of_constrained_quadratic() {
        // min ½‖x‖² − aᵀx  s.t. x = 0  ⇒  x* = 0, y* = a
        let a = v(&[1., -2.]);
        let f = SmoothFn::quadratic(DMatrix::identity(2, 2), -a.clone()).unwrap();
        let spec = ProblemSpec::new(f, ProxFn::Zero, ProxFn::IndicatorPoint { b: Vector::zeros(2) }, LinOp::Identity(2))
            .unwrap();
        let saddle = SaddlePoint { x: Vector::zeros(2), y: a.clone(), r: Vector::zeros(2), h: Vector::zeros(2) };
        saddle.validate(&spec).unwrap();
        assert_eq!(spec.duality_gap(&saddle.x, &saddle.y, &saddle).unwrap(), Extended::Finite(0.0));
        assert_eq!(spec.kkt_residual(&saddle.x, &saddle.y, 0.7, 0.9).unwrap(), (0.0, 0.0));
    }
}
