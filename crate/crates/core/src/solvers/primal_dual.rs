//! Stochastic PDDY and PD3O.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linops::Vector;
use crate::problem::ProblemSpec;

use super::GradientOracle;

/// Checks `γ > 0`, `τ > 0` and `γτ‖L‖² < 1`. With `allow` set the last
/// condition only warns.
pub fn check_primal_dual_steps(spec: &ProblemSpec, gamma: f64, tau: f64, allow: bool) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("stepsizes must be positive, got γ={gamma}, τ={tau}")));
    }
    let prod = gamma * tau * spec.op_norm_sq();
    if prod >= 1.0 {
        let msg = format!("γτ‖L‖² = {prod} must be < 1");
        if !allow {
            return Err(Error::StepsizeCondition(msg));
        }
        warn!("{msg}; running outside the convergence theory");
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PddyState {
    pub p: Vector,
    pub y: Vector,
    pub gamma: f64,
    pub tau: f64,
    /// `x^k` and `s^{k+1}` of the last step.
    pub last_x: Option<Vector>,
    pub last_s: Option<Vector>,
}

impl PddyState {
    pub fn new(spec: &ProblemSpec, p0: Vector, y0: Vector, gamma: f64, tau: f64, allow: bool) -> Result<Self> {
        check_dim(spec.primal_dim(), p0.len())?;
        check_dim(spec.dual_dim(), y0.len())?;
        check_primal_dual_steps(spec, gamma, tau, allow)?;
        Ok(PddyState { p: p0, y: y0, gamma, tau, last_x: None, last_s: None })
    }
}

/// One iteration of the stochastic PDDY algorithm:
///
/// ```text
/// y⁺ = prox_{τH*}(y + τL(p − γL*y))
/// x  = p − γL*y⁺
/// s⁺ = prox_{γR}(2x − p − γg),  g ≈ ∇F(x)
/// p⁺ = p + s⁺ − x
/// ```
pub fn pddy_step(spec: &ProblemSpec, oracle: &mut impl GradientOracle, state: &PddyState) -> Result<PddyState> {
    let (gamma, tau) = (state.gamma, state.tau);
    let l = &spec.l;
    let arg = &state.p - l.adjoint_apply(&state.y)? * gamma;
    let y = spec.h.prox_conjugate(&(&state.y + l.apply(&arg)? * tau), tau)?;
    let x = &state.p - l.adjoint_apply(&y)? * gamma;
    let g = oracle.gradient(&x)?;
    let s = spec.r.prox(&(&x * 2.0 - &state.p - g * gamma), gamma)?;
    let p = &state.p + &s - &x;
    Ok(PddyState { p, y, gamma, tau, last_x: Some(x), last_s: Some(s) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pd3oState {
    pub p: Vector,
    pub y: Vector,
    pub gamma: f64,
    pub tau: f64,
    pub last_x: Option<Vector>,
}

impl Pd3oState {
    pub fn new(spec: &ProblemSpec, p0: Vector, y0: Vector, gamma: f64, tau: f64, allow: bool) -> Result<Self> {
        check_dim(spec.primal_dim(), p0.len())?;
        check_dim(spec.dual_dim(), y0.len())?;
        check_primal_dual_steps(spec, gamma, tau, allow)?;
        Ok(Pd3oState { p: p0, y: y0, gamma, tau, last_x: None })
    }
}

/// One iteration of the stochastic PD3O algorithm:
///
/// ```text
/// x  = prox_{γR}(p)
/// w  = 2x − p − γg,  g ≈ ∇F(x)
/// y⁺ = prox_{τH*}(y + τL(w − γL*y))
/// p⁺ = x − γg − γL*y⁺
/// ```
pub fn pd3o_step(spec: &ProblemSpec, oracle: &mut impl GradientOracle, state: &Pd3oState) -> Result<Pd3oState> {
    let (gamma, tau) = (state.gamma, state.tau);
    let l = &spec.l;
    let x = spec.r.prox(&state.p, gamma)?;
    let g = oracle.gradient(&x)?;
    let w = &x * 2.0 - &state.p - &g * gamma;
    let arg = &w - l.adjoint_apply(&state.y)? * gamma;
    let y = spec.h.prox_conjugate(&(&state.y + l.apply(&arg)? * tau), tau)?;
    let p = &x - g * gamma - l.adjoint_apply(&y)? * gamma;
    Ok(Pd3oState { p, y, gamma, tau, last_x: Some(x) })
}
