//! Iteration schemes as pure step functions over explicit state records, and
//! a run loop with ergodic averaging and metric logging.

mod condat_vu;
pub mod dys;
mod linear;
mod primal_dual;
mod run;

pub use condat_vu::{condat_vu_step, CondatVuState};
pub use dys::{dys_step, CondatVuForm, DysState, DysStep, PrimalDualOrder, Splitting};
pub use linear::{
    constraint_rhs, destroy_step, licosgd_step, prilicosgd_step, DecentralizedProblem, DestroyState, LicoState,
    NodeOracles, PriLicoState, CONSERVATION_TOL,
};
pub use primal_dual::{check_primal_dual_steps, pd3o_step, pddy_step, Pd3oState, PddyState};
pub use run::{
    resolve_steps, run, run_destroy, run_from, write_trace, Divergence, RunConfig, RunTrace, SolverKind, SolverState,
    TraceRecord, DIVERGENCE_NORM,
};

use crate::error::Result;
use crate::estimators::EstimatorState;
use crate::functions::SmoothFn;
use crate::linops::Vector;

/// Source of the gradient estimate `g^{k+1}` used in place of `∇F(x^k)`.
pub trait GradientOracle {
    fn gradient(&mut self, x: &Vector) -> Result<Vector>;
}

/// The exact gradient.
pub struct Exact<'a>(pub &'a SmoothFn);

impl GradientOracle for Exact<'_> {
    fn gradient(&mut self, x: &Vector) -> Result<Vector> {
        self.0.grad(x)
    }
}

/// Draws from an estimator state.
pub struct Sampled<'a> {
    pub f: &'a SmoothFn,
    pub est: &'a mut EstimatorState,
}

impl GradientOracle for Sampled<'_> {
    fn gradient(&mut self, x: &Vector) -> Result<Vector> {
        self.est.sample(self.f, x)
    }
}
