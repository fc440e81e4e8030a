//! Both forms of the Condat-Vu iteration. `tau` is the primal step and
//! `gamma` the dual step.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::Vector;
use crate::problem::ProblemSpec;

use super::dys::CondatVuForm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondatVuState {
    pub form: CondatVuForm,
    /// `Alg31`: `(x^{k−1}, d^k)`; `Alg32`: `(x^k, y^{k−1})`.
    pub x: Vector,
    pub y: Vector,
    pub gamma: f64,
    pub tau: f64,
}

impl CondatVuState {
    /// Rejects steps violating `ν/2 < 1/τ − γ‖L‖²` unless `allow` is set.
    pub fn new(
        spec: &ProblemSpec,
        form: CondatVuForm,
        x0: Vector,
        y0: Vector,
        gamma: f64,
        tau: f64,
        allow: bool,
    ) -> Result<Self> {
        check_dim(spec.primal_dim(), x0.len())?;
        check_dim(spec.dual_dim(), y0.len())?;
        if !(gamma > 0.0 && gamma.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("stepsizes must be positive, got γ={gamma}, τ={tau}")));
        }
        let slack = 1.0 / tau - gamma * spec.op_norm_sq() - spec.f.nu() / 2.0;
        if slack <= 0.0 {
            let msg = format!("ν/2 < 1/τ − γ‖L‖² fails by {}", -slack);
            if !allow {
                return Err(Error::StepsizeCondition(msg));
            }
            warn!("{msg}; running outside the convergence theory");
        }
        Ok(CondatVuState { form, x: x0, y: y0, gamma, tau })
    }
}

/// One primal and one dual update.
///
/// ```text
/// Alg31:  x⁺ = prox_{τR}(x − τ∇F(x) − τL*d)
///         d⁺ = prox_{γH*}(d + γL(2x⁺ − x))
/// Alg32:  y⁺ = prox_{γH*}(y + γLx)
///         x⁺ = prox_{τR}(x − τ∇F(x) − τL*(2y⁺ − y))
/// ```
pub fn condat_vu_step(spec: &ProblemSpec, state: &CondatVuState) -> Result<CondatVuState> {
    let (gamma, tau) = (state.gamma, state.tau);
    let l = &spec.l;
    let grad = spec.f.grad(&state.x)?;
    let (x, y) = match state.form {
        CondatVuForm::Alg31 => {
            let x = spec.r.prox(&(&state.x - grad * tau - l.adjoint_apply(&state.y)? * tau), tau)?;
            let ext = &x * 2.0 - &state.x;
            let y = spec.h.prox_conjugate(&(&state.y + l.apply(&ext)? * gamma), gamma)?;
            (x, y)
        }
        CondatVuForm::Alg32 => {
            let y = spec.h.prox_conjugate(&(&state.y + l.apply(&state.x)? * gamma), gamma)?;
            let ext = &y * 2.0 - &state.y;
            let x = spec.r.prox(&(&state.x - grad * tau - l.adjoint_apply(&ext)? * tau), tau)?;
            (x, y)
        }
    };
    Ok(CondatVuState { form: state.form, x, y, gamma, tau })
}
