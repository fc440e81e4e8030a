//! Stochastic primal-dual proximal splitting.
//!
//! Solves `min_x F(x) + R(x) + H(Lx)` where `F` is smooth (possibly
//! accessed through a stochastic, variance-reduced gradient oracle), `R` and
//! `H` are proximable and `L` is linear. All algorithms are instances of
//! Davis-Yin three-operator splitting in a preconditioned metric:
//!
//! * [`solvers::pddy_step`] and [`solvers::pd3o_step`]
//! * both forms of the Condat-Vu iteration ([`solvers::condat_vu_step`])
//! * [`solvers::licosgd_step`] / [`solvers::prilicosgd_step`] for `Lx = b`
//! * [`solvers::destroy_step`] for decentralized consensus over a gossip graph
//!
//! The [`oracle`] module holds independent ground-truth solvers and the
//! harnesses that check convergence bounds on recorded traces, and
//! [`certify`] bundles those checks into the pass/fail suite run by the
//! `pdsplit certify` command.

// `!(x > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod certify;
pub mod error;
pub mod estimators;
pub mod functions;
pub mod linops;
pub mod oracle;
pub mod problem;
pub mod solvers;

pub use error::{Error, Result};
pub use linops::{LinOp, SpectralInfo, Vector};
pub use problem::{ProblemSpec, SaddlePoint};
