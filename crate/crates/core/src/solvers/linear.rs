//! Linearly constrained minimization `min F(x) s.t. Lx = b` (LiCoSGD), its
//! primal-only form PriLiCoSGD, and the decentralized instance DESTROY.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimators::{EstimatorKind, EstimatorState};
use crate::functions::{ProxFn, SmoothFn};
use crate::linops::{smallest_positive_eig, LinOp, Vector, RANK_THRESHOLD};
use crate::problem::ProblemSpec;

use super::primal_dual::check_primal_dual_steps;
use super::GradientOracle;

/// The constraint vector `b` of a spec with `R = 0` and `H = ι_b`.
pub fn constraint_rhs(spec: &ProblemSpec) -> Result<&Vector> {
    match (&spec.r, &spec.h) {
        (ProxFn::Zero, ProxFn::IndicatorPoint { b }) => Ok(b),
        _ => Err(Error::InvalidParameter("linearly constrained solvers need R = 0 and H = ι_b".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LicoState {
    pub x: Vector,
    pub y: Vector,
    pub gamma: f64,
    pub tau: f64,
}

impl LicoState {
    pub fn new(spec: &ProblemSpec, x0: Vector, y0: Vector, gamma: f64, tau: f64, allow: bool) -> Result<Self> {
        constraint_rhs(spec)?;
        check_dim(spec.primal_dim(), x0.len())?;
        check_dim(spec.dual_dim(), y0.len())?;
        check_primal_dual_steps(spec, gamma, tau, allow)?;
        Ok(LicoState { x: x0, y: y0, gamma, tau })
    }
}

/// ```text
/// w  = x − γg
/// y⁺ = y + τL(w − γL*y) − τb
/// x⁺ = w − γL*y⁺
/// ```
pub fn licosgd_step(spec: &ProblemSpec, oracle: &mut impl GradientOracle, state: &LicoState) -> Result<LicoState> {
    let b = constraint_rhs(spec)?;
    let (gamma, tau) = (state.gamma, state.tau);
    let l = &spec.l;
    let w = &state.x - oracle.gradient(&state.x)? * gamma;
    let arg = &w - l.adjoint_apply(&state.y)? * gamma;
    let y = &state.y + (l.apply(&arg)? - b) * tau;
    let x = w - l.adjoint_apply(&y)? * gamma;
    Ok(LicoState { x, y, gamma, tau })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriLicoState {
    pub x: Vector,
    /// `a = L*y`
    pub a: Vector,
    pub gamma: f64,
    pub tau: f64,
}

/// ```text
/// t  = x − γg
/// a⁺ = a + τW(t − γa) − τc
/// x⁺ = t − γa⁺
/// ```
/// with `W = L*L` and `c = L*b`.
pub fn prilicosgd_step(
    w: &LinOp,
    c: &Vector,
    oracle: &mut impl GradientOracle,
    state: &PriLicoState,
) -> Result<PriLicoState> {
    let (gamma, tau) = (state.gamma, state.tau);
    let t = &state.x - oracle.gradient(&state.x)? * gamma;
    let a = &state.a + (w.apply(&(&t - &state.a * gamma))? - c) * tau;
    let x = t - &a * gamma;
    Ok(PriLicoState { x, a, gamma, tau })
}

/// `min Σ_i f_i(x)` over a connected graph with gossip matrix `Ŵ`, each node
/// holding a local copy `x_i ∈ R^d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecentralizedProblem {
    pub locals: Vec<SmoothFn>,
    pub gossip: DMatrix<f64>,
    pub block_dim: usize,
    /// `‖Ŵ‖`
    pub w_norm: f64,
    /// `ω(Ŵ)`, the smallest positive eigenvalue; zero for a single node.
    pub w_omega: f64,
}

impl DecentralizedProblem {
    pub fn new(locals: Vec<SmoothFn>, gossip: DMatrix<f64>) -> Result<Self> {
        let n = locals.len();
        if n == 0 {
            return Err(Error::InvalidParameter("no nodes".into()));
        }
        check_dim(n, gossip.nrows())?;
        let block_dim = locals[0].dim();
        for f in &locals {
            check_dim(block_dim, f.dim())?;
        }
        // validates symmetry, PSD and the ones-kernel
        LinOp::gossip_kron(gossip.clone(), block_dim)?;
        let eig: Vec<f64> = SymmetricEigen::new(gossip.clone()).eigenvalues.iter().cloned().collect();
        let w_norm = eig.iter().cloned().fold(0.0, f64::max);
        let (w_omega, nullity) = if n == 1 {
            (0.0, 1)
        } else {
            let omega = smallest_positive_eig(&eig, w_norm).map_err(|_| Error::DisconnectedGraph)?;
            (omega, eig.iter().filter(|&&e| e <= RANK_THRESHOLD * w_norm).count())
        };
        if nullity != 1 {
            return Err(Error::DisconnectedGraph);
        }
        Ok(DecentralizedProblem { locals, gossip, block_dim, w_norm, w_omega })
    }

    pub fn nodes(&self) -> usize {
        self.locals.len()
    }

    /// `Ŵ ⊗ I_d`.
    pub fn lifted_operator(&self) -> LinOp {
        LinOp::GossipKron { what: self.gossip.clone(), block_dim: self.block_dim }
    }

    /// Seed of node `i`'s estimator for a run seeded with `seed`.
    pub fn node_seed(seed: u64, i: usize) -> u64 {
        seed ^ (i as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }

    pub fn estimators(&self, kind: EstimatorKind, x0: &[Vector], seed: u64) -> Result<Vec<EstimatorState>> {
        check_dim(self.nodes(), x0.len())?;
        self.locals
            .iter()
            .zip(x0)
            .enumerate()
            .map(|(i, (f, x))| EstimatorState::new(kind, f, x, Self::node_seed(seed, i)))
            .collect()
    }

    /// `Σ_i f_i(x_i)`
    pub fn lifted_value(&self, xs: &[Vector]) -> Result<f64> {
        self.locals.iter().zip(xs).map(|(f, x)| f.value(x)).sum()
    }
}

/// Gradient of the block-separable `F(x̃) = Σ_i f_i(x_i)` through per-node
/// estimators.
pub struct NodeOracles<'a> {
    pub locals: &'a [SmoothFn],
    pub ests: &'a mut [EstimatorState],
}

impl GradientOracle for NodeOracles<'_> {
    fn gradient(&mut self, x: &Vector) -> Result<Vector> {
        let d = self.locals.first().map_or(0, |f| f.dim());
        check_dim(d * self.locals.len(), x.len())?;
        let mut g = Vector::zeros(x.len());
        for (i, (f, est)) in self.locals.iter().zip(self.ests.iter_mut()).enumerate() {
            let xi = x.rows(i * d, d).into_owned();
            g.rows_mut(i * d, d).copy_from(&est.sample(f, &xi)?);
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DestroyState {
    pub x: Vec<Vector>,
    pub a: Vec<Vector>,
    /// `t_i` of the last round.
    pub t: Vec<Vector>,
    pub gamma: f64,
    pub tau: f64,
}

/// Tolerance for `Σ_i a_i = 0`.
pub const CONSERVATION_TOL: f64 = 1e-10;

impl DestroyState {
    pub fn new(
        problem: &DecentralizedProblem,
        x0: Vec<Vector>,
        a0: Vec<Vector>,
        gamma: f64,
        tau: f64,
        allow: bool,
    ) -> Result<Self> {
        let n = problem.nodes();
        check_dim(n, x0.len())?;
        check_dim(n, a0.len())?;
        let d = problem.block_dim;
        for v in x0.iter().chain(&a0) {
            check_dim(d, v.len())?;
        }
        let total: Vector = a0.iter().fold(Vector::zeros(d), |s, a| s + a);
        let scale = a0.iter().map(|a| a.amax()).fold(1.0, f64::max);
        if total.amax() > CONSERVATION_TOL * scale {
            return Err(Error::InvalidParameter("initial dual variables must sum to zero".into()));
        }
        if !(gamma > 0.0) || !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("stepsizes must be positive, got γ={gamma}, τ={tau}")));
        }
        let prod = gamma * tau * problem.w_norm;
        if prod >= 1.0 {
            let msg = format!("γτ‖Ŵ‖ = {prod} must be < 1");
            if !allow {
                return Err(Error::StepsizeCondition(msg));
            }
            warn!("{msg}; running outside the convergence theory");
        }
        Ok(DestroyState { x: x0, t: vec![Vector::zeros(d); n], a: a0, gamma, tau })
    }

    /// The node copies stacked into one vector of `(R^d)^N`.
    pub fn stacked(vs: &[Vector]) -> Vector {
        let d = vs.first().map_or(0, |v| v.len());
        let mut out = Vector::zeros(d * vs.len());
        for (i, v) in vs.iter().enumerate() {
            out.rows_mut(i * d, d).copy_from(v);
        }
        out
    }

    pub fn unstack(v: &Vector, d: usize) -> Vec<Vector> {
        (0..v.len() / d).map(|i| v.rows(i * d, d).into_owned()).collect()
    }
}

/// One synchronous round. Node `i` reads `t_j` and `a_j` only from its
/// neighbours (`Ŵ_ij ≠ 0`).
pub fn destroy_step(
    problem: &DecentralizedProblem,
    ests: &mut [EstimatorState],
    state: &DestroyState,
) -> Result<DestroyState> {
    let n = problem.nodes();
    check_dim(n, ests.len())?;
    let (gamma, tau) = (state.gamma, state.tau);
    let what = &problem.gossip;
    let mut t = Vec::with_capacity(n);
    for ((est, local), x) in ests.iter_mut().zip(&problem.locals).zip(&state.x) {
        let g = est.sample(local, x)?;
        t.push(x - g * gamma);
    }
    let mut a = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for i in 0..n {
        let wii = what[(i, i)];
        let mut ai = &state.a[i] * (1.0 - tau * gamma * wii) + &t[i] * (tau * wii);
        for j in 0..n {
            let wij = what[(i, j)];
            if j != i && wij != 0.0 {
                ai += (&t[j] - &state.a[j] * gamma) * (tau * wij);
            }
        }
        x.push(&t[i] - &ai * gamma);
        a.push(ai);
    }
    Ok(DestroyState { x, a, t, gamma, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::Exact;

    fn shifted_quadratic(c: &[f64]) -> SmoothFn {
        let d = c.len();
        SmoothFn::quadratic(DMatrix::identity(d, d), -Vector::from_column_slice(c)).unwrap()
    }

    #[test]
    fn identity_constraint_dual_limit() {
        // min ½‖x − a‖² s.t. x = 0: x* = 0, y* = a
        let a = Vector::from_column_slice(&[2., -1.]);
        let f = SmoothFn::quadratic(DMatrix::identity(2, 2), -a.clone()).unwrap();
        let spec = ProblemSpec::new(f, ProxFn::Zero, ProxFn::IndicatorPoint { b: Vector::zeros(2) }, LinOp::Identity(2))
            .unwrap();
        let mut st = LicoState::new(&spec, Vector::from_element(2, 1.0), Vector::zeros(2), 0.5, 1.0, false).unwrap();
        for _ in 0..300 {
            st = licosgd_step(&spec, &mut Exact(&spec.f), &st).unwrap();
        }
        assert!(st.x.amax() < 1e-10);
        assert!((&st.y - &a).amax() < 1e-10);
    }

    #[test]
    fn lico_rejects_non_constraint_specs() {
        let spec = ProblemSpec::new(SmoothFn::zero(2), ProxFn::L1 { lambda: 1.0 }, ProxFn::Zero, LinOp::Identity(2)).unwrap();
        assert!(LicoState::new(&spec, Vector::zeros(2), Vector::zeros(2), 0.1, 0.1, false).is_err());
    }

    #[test]
    fn single_node_is_gradient_descent() {
        let f = shifted_quadratic(&[1., 2.]);
        let prob = DecentralizedProblem::new(vec![f.clone()], DMatrix::zeros(1, 1)).unwrap();
        let x0 = vec![Vector::zeros(2)];
        let mut ests = prob.estimators(EstimatorKind::Full, &x0, 0).unwrap();
        let mut st = DestroyState::new(&prob, x0, vec![Vector::zeros(2)], 0.5, 1.0, false).unwrap();
        let mut x = Vector::zeros(2);
        for _ in 0..10 {
            st = destroy_step(&prob, &mut ests, &st).unwrap();
            x = &x - f.grad(&x).unwrap() * 0.5;
            assert!((&st.x[0] - &x).amax() < 1e-15);
        }
    }

    #[test]
    fn two_node_path_reaches_average_of_minimizers() {
        let c1 = [1., 0., 4.];
        let c2 = [3., -2., 0.];
        let lap = DMatrix::from_row_slice(2, 2, &[1., -1., -1., 1.]);
        let prob = DecentralizedProblem::new(vec![shifted_quadratic(&c1), shifted_quadratic(&c2)], lap).unwrap();
        let x0 = vec![Vector::zeros(3), Vector::zeros(3)];
        let mut ests = prob.estimators(EstimatorKind::Full, &x0, 0).unwrap();
        let mut st = DestroyState::new(&prob, x0, vec![Vector::zeros(3); 2], 0.5, 0.9, false).unwrap();
        for _ in 0..500 {
            st = destroy_step(&prob, &mut ests, &st).unwrap();
            let total = &st.a[0] + &st.a[1];
            assert!(total.amax() < 1e-10);
        }
        let target = Vector::from_column_slice(&[2., -1., 2.]);
        for xi in &st.x {
            assert!((xi - &target).amax() < 1e-10);
        }
    }

    #[test]
    fn disconnected_graph_rejected() {
        let mut w = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 1), (2, 3)] {
            w[(i, i)] += 1.0;
            w[(j, j)] += 1.0;
            w[(i, j)] = -1.0;
            w[(j, i)] = -1.0;
        }
        let locals = vec![shifted_quadratic(&[0.]); 4];
        assert!(matches!(DecentralizedProblem::new(locals, w), Err(Error::DisconnectedGraph)));
    }
}
