//! Independent reference solutions and the harnesses that check iterates
//! against the convergence theorems.

mod rates;

pub use rates::{
    check_fundamental_equality, dys_trace, verify_destroy_rate, verify_ergodic_bound, verify_linear_rate,
    RateReport, RateTheorem, ENVELOPE_FLOOR, MIN_SEEDS,
};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::functions::ProxFn;
use crate::linops::{LinOp, Vector};
use crate::problem::{ProblemSpec, SaddlePoint};
use crate::solvers::{
    condat_vu_step, pd3o_step, resolve_steps, CondatVuForm, CondatVuState, DecentralizedProblem, Exact, Pd3oState,
    RunConfig, SolverKind,
};

/// Largest certificate component an [`OracleSolution`] may carry.
pub const CERTIFICATE_TOL: f64 = 1e-8;

/// Iterations [`solve_composite_reference`] spends by default.
pub const DEFAULT_REFERENCE_ITERS: usize = 1_000_000;

/// Largest chain length accepted by [`fused_lasso_exhaustive`].
pub const EXHAUSTIVE_MAX_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    DenseKkt,
    /// Two different deterministic solvers run until their limits agree.
    LongRunConsensus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x_star: Vector,
    pub y_star: Vector,
    /// `r* ∈ ∂R(x*)`
    pub r_star: Vector,
    /// `h* ∈ ∂H*(y*)`
    pub h_star: Vector,
    pub method: OracleMethod,
    /// `(‖∇F(x*) + r* + L*y*‖, ‖h* − Lx*‖)`
    pub certificate: (f64, f64),
}

impl OracleSolution {
    pub fn saddle(&self) -> SaddlePoint {
        SaddlePoint {
            x: self.x_star.clone(),
            y: self.y_star.clone(),
            r: self.r_star.clone(),
            h: self.h_star.clone(),
        }
    }

    fn certified(saddle: SaddlePoint, spec: &ProblemSpec, method: OracleMethod) -> Result<Self> {
        let certificate = saddle.residuals(&spec.f, &spec.l)?;
        if certificate.0.max(certificate.1) > CERTIFICATE_TOL {
            return Err(Error::NoCertifiedReference(format!(
                "optimality residuals ({:e}, {:e}) exceed {CERTIFICATE_TOL:e}",
                certificate.0, certificate.1
            )));
        }
        Ok(OracleSolution {
            x_star: saddle.x,
            y_star: saddle.y,
            r_star: saddle.r,
            h_star: saddle.h,
            method,
            certificate,
        })
    }
}

/// Minimum-norm solution of the symmetric system `M s = rhs` through an
/// eigendecomposition; returns the null space basis alongside.
fn symmetric_lstsq(m: &DMatrix<f64>, rhs: &Vector) -> (Vector, Vec<Vector>) {
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.amax();
    let cut = 1e-12 * top.max(f64::MIN_POSITIVE);
    let mut sol = Vector::zeros(rhs.len());
    let mut null = Vec::new();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let u = eig.eigenvectors.column(i);
        if lam.abs() > cut {
            sol += u * (u.dot(rhs) / lam);
        } else {
            null.push(u.into_owned());
        }
    }
    (sol, null)
}

/// Solves `min ½xᵀQx + qᵀx s.t. Lx = b` through the KKT system
/// `[[Q, L*], [L, 0]] (x, y) = (−q, b)`. When `L` is rank deficient the
/// minimum-norm solution is taken, which puts `y` in `ran(L)`.
pub fn solve_eq_qp(q_mat: &DMatrix<f64>, q: &Vector, l: &LinOp, b: &Vector) -> Result<OracleSolution> {
    let n = q.len();
    let m = b.len();
    check_dim(n, q_mat.nrows())?;
    check_dim(n, l.in_dim())?;
    check_dim(m, l.out_dim())?;
    let ld = l.to_dense();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(q_mat);
    kkt.view_mut((0, n), (n, m)).copy_from(&ld.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(&ld);
    let mut rhs = Vector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&-q);
    rhs.rows_mut(n, m).copy_from(b);
    let (sol, null) = symmetric_lstsq(&kkt, &rhs);
    // a null direction with a primal part means Q is singular on ker(L)
    if null.iter().any(|u| u.rows(0, n).norm() > 1e-8) {
        return Err(Error::SingularKkt);
    }
    let x = sol.rows(0, n).into_owned();
    let y = sol.rows(n, m).into_owned();
    let stationarity = (q_mat * &x + q + ld.tr_mul(&y)).norm();
    let feasibility = (&ld * &x - b).norm();
    let scale = 1.0 + q.norm() + b.norm();
    if feasibility > 1e-9 * scale {
        return Err(Error::InvalidParameter(format!("b is not in ran(L): ‖Lx − b‖ = {feasibility:e}")));
    }
    Ok(OracleSolution {
        x_star: x,
        y_star: y,
        r_star: Vector::zeros(n),
        h_star: b.clone(),
        method: OracleMethod::DenseKkt,
        certificate: (stationarity, feasibility),
    })
}

/// Dense solve for specs whose optimality system is linear: `F` quadratic
/// or least squares, `R ∈ {0, (μ/2)‖·‖²}` and `H ∈ {0, (λ/2)‖·‖², ι_b}`.
pub fn solve_dense_reference(spec: &ProblemSpec) -> Result<OracleSolution> {
    let (q_mat, q, _) = spec
        .f
        .quadratic_form()
        .ok_or_else(|| Error::InvalidParameter("dense reference needs a quadratic F".into()))?;
    let n = spec.primal_dim();
    let mu_r = match &spec.r {
        ProxFn::Zero => 0.0,
        ProxFn::SqL2 { lambda } => *lambda,
        _ => return Err(Error::InvalidParameter("dense reference needs R = 0 or a squared norm".into())),
    };
    let q_mat = q_mat + DMatrix::identity(n, n) * mu_r;
    if let ProxFn::IndicatorPoint { b } = &spec.h {
        let sol = solve_eq_qp(&q_mat, &q, &spec.l, b)?;
        let saddle = SaddlePoint { r: &sol.x_star * mu_r, ..sol.saddle() };
        return OracleSolution::certified(saddle, spec, OracleMethod::DenseKkt);
    }
    let lambda_h = match &spec.h {
        ProxFn::Zero => 0.0,
        ProxFn::SqL2 { lambda } => *lambda,
        _ => return Err(Error::InvalidParameter("dense reference needs H = 0, a squared norm or ι_b".into())),
    };
    let ld = spec.l.to_dense();
    let system = &q_mat + ld.tr_mul(&ld) * lambda_h;
    let x = system.cholesky().ok_or(Error::SingularKkt)?.solve(&-&q);
    let lx = &ld * &x;
    let saddle = SaddlePoint { y: &lx * lambda_h, r: &x * mu_r, h: lx, x };
    OracleSolution::certified(saddle, spec, OracleMethod::DenseKkt)
}

/// Reads a saddle point off a primal-dual pair through one forward-backward
/// pass: `r* = (input − output)/γ` of `prox_{γR}` and likewise for `H*`, so
/// the subgradients are exact and the residuals measure the distance to
/// optimality.
pub fn extract_saddle(spec: &ProblemSpec, x: &Vector, y: &Vector, gamma: f64, tau: f64) -> Result<SaddlePoint> {
    let x_in = x - (spec.f.grad(x)? + spec.l.adjoint_apply(y)?) * gamma;
    let x_out = spec.r.prox(&x_in, gamma)?;
    let r = (&x_in - &x_out) / gamma;
    let y_in = y + spec.l.apply(&x_out)? * tau;
    let y_out = spec.h.prox_conjugate(&y_in, tau)?;
    let h = (&y_in - &y_out) / tau;
    Ok(SaddlePoint { x: x_out, y: y_out, r, h })
}

/// Runs deterministic Condat-Vu and PD3O at their default stepsizes for at
/// most `iters` iterations and certifies the result when the two limits
/// agree to [`CERTIFICATE_TOL`].
pub fn solve_composite_reference(spec: &ProblemSpec, iters: usize) -> Result<OracleSolution> {
    let (g_pd, t_pd) = resolve_steps(spec, &RunConfig::new(SolverKind::Pd3o, 0))?;
    let (g_cv, t_cv) = resolve_steps(spec, &RunConfig::new(SolverKind::CondatVu32, 0))?;
    let x0 = Vector::zeros(spec.primal_dim());
    let y0 = Vector::zeros(spec.dual_dim());
    let mut pd = Pd3oState::new(spec, x0.clone(), y0.clone(), g_pd, t_pd, false)?;
    let mut cv = CondatVuState::new(spec, CondatVuForm::Alg32, x0, y0, g_cv, t_cv, false)?;
    let check = |pd: &Pd3oState, cv: &CondatVuState| -> Result<(SaddlePoint, SaddlePoint)> {
        let x_pd = spec.r.prox(&pd.p, g_pd)?;
        let a = extract_saddle(spec, &x_pd, &pd.y, g_pd, t_pd)?;
        let b = extract_saddle(spec, &cv.x, &cv.y, t_cv, g_cv)?;
        Ok((a, b))
    };
    let stop = |a: &SaddlePoint, b: &SaddlePoint| -> Result<bool> {
        let scale = 1.0 + a.x.norm();
        let ra = a.residuals(&spec.f, &spec.l)?;
        let rb = b.residuals(&spec.f, &spec.l)?;
        Ok(ra.0.max(ra.1).max(rb.0).max(rb.1) <= 1e-12 * scale && (&a.x - &b.x).norm() <= 1e-11 * scale)
    };
    let mut done = 0;
    while done < iters {
        let chunk = 100.min(iters - done);
        for _ in 0..chunk {
            pd = pd3o_step(spec, &mut Exact(&spec.f), &pd)?;
            cv = condat_vu_step(spec, &cv)?;
        }
        done += chunk;
        let (a, b) = check(&pd, &cv)?;
        if a.x.iter().chain(b.x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NoCertifiedReference(format!("non-finite iterate after {done} iterations")));
        }
        if stop(&a, &b)? {
            break;
        }
    }
    let (a, b) = check(&pd, &cv)?;
    let gap = (&a.x - &b.x).norm();
    if gap > CERTIFICATE_TOL {
        return Err(Error::NoCertifiedReference(format!("PD3O and Condat-Vu limits differ by {gap:e}")));
    }
    OracleSolution::certified(a, spec, OracleMethod::LongRunConsensus)
}

/// `argmin ½xᵀQx + qᵀx + λ₁‖Dx‖₁` over `R^p`, `p ≤ 8`, with `D` the first
/// difference and `Q ≻ 0`, by enumerating the sign patterns of `Dx`. Each
/// pattern fixes the zero differences and the linear term, leaving an
/// equality-constrained quadratic; the true minimizer is one of the
/// candidates.
pub fn fused_lasso_exhaustive(q_mat: &DMatrix<f64>, q: &Vector, lambda1: f64) -> Result<Vector> {
    let p = q.len();
    check_dim(p, q_mat.nrows())?;
    if p == 0 || p > EXHAUSTIVE_MAX_DIM {
        return Err(Error::InvalidParameter(format!("exhaustive search supports 1 ≤ p ≤ {EXHAUSTIVE_MAX_DIM}")));
    }
    let d = LinOp::FirstDifference(p).to_dense();
    let objective = |x: &Vector| 0.5 * x.dot(&(q_mat * x)) + q.dot(x) + lambda1 * (&d * x).abs().sum();
    let mut best: Option<(f64, Vector)> = None;
    let patterns = 3usize.pow((p - 1) as u32);
    for code in 0..patterns {
        let mut c = code;
        let mut signs = vec![0.0; p - 1];
        for s in signs.iter_mut() {
            *s = (c % 3) as f64 - 1.0;
            c /= 3;
        }
        let s = Vector::from_vec(signs);
        let zero_rows: Vec<usize> = (0..p - 1).filter(|&i| s[i] == 0.0).collect();
        let lin = q + d.tr_mul(&s) * lambda1;
        let x = if zero_rows.is_empty() {
            q_mat.clone().cholesky().ok_or(Error::SingularKkt)?.solve(&-&lin)
        } else {
            let rows = d.select_rows(&zero_rows);
            solve_eq_qp(q_mat, &lin, &LinOp::Dense(rows), &Vector::zeros(zero_rows.len()))?.x_star
        };
        let val = objective(&x);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, x));
        }
    }
    Ok(best.expect("at least one pattern").1)
}

/// Minimizer of `Σ_i f_i(x)` for quadratic or least-squares locals, by a
/// centralized dense solve.
pub fn solve_decentralized_reference(problem: &DecentralizedProblem) -> Result<Vector> {
    let d = problem.block_dim;
    let mut q_sum = DMatrix::zeros(d, d);
    let mut lin = Vector::zeros(d);
    for f in &problem.locals {
        let (q_mat, q, _) =
            f.quadratic_form().ok_or_else(|| Error::InvalidParameter("centralized reference needs quadratic locals".into()))?;
        q_sum += q_mat;
        lin += q;
    }
    Ok(q_sum.cholesky().ok_or(Error::SingularKkt)?.solve(&-lin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::SmoothFn;

    fn v(d: &[f64]) -> Vector {
        Vector::from_column_slice(d)
    }

    #[test]
    fn eq_qp_identity_case() {
        let sol = solve_eq_qp(&DMatrix::identity(3, 3), &Vector::zeros(3), &LinOp::Identity(3), &Vector::zeros(3)).unwrap();
        assert!(sol.x_star.amax() < 1e-15 && sol.y_star.amax() < 1e-15);
    }

    #[test]
    fn eq_qp_zero_sum_projection() {
        let a = v(&[3., -1.]);
        let l = LinOp::Dense(DMatrix::from_row_slice(1, 2, &[1., 1.]));
        let sol = solve_eq_qp(&DMatrix::identity(2, 2), &-a.clone(), &l, &v(&[0.])).unwrap();
        assert!((&sol.x_star - v(&[2., -2.])).amax() < 1e-12);
        assert!((sol.y_star[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eq_qp_rank_deficient_dual_in_range() {
        // rows repeat, so ker(Lᵀ) = span(1, −1)
        let l = LinOp::Dense(DMatrix::from_row_slice(2, 2, &[1., 1., 1., 1.]));
        let sol = solve_eq_qp(&DMatrix::identity(2, 2), &v(&[-3., 1.]), &l, &v(&[1., 1.])).unwrap();
        assert!((sol.y_star[0] - sol.y_star[1]).abs() < 1e-12);
        assert!(sol.certificate.0.max(sol.certificate.1) < 1e-12);
    }

    #[test]
    fn eq_qp_rejects_singular_and_infeasible() {
        let l = LinOp::Dense(DMatrix::from_row_slice(1, 2, &[1., 0.]));
        let q_sing = DMatrix::from_row_slice(2, 2, &[1., 0., 0., 0.]);
        assert!(matches!(solve_eq_qp(&q_sing, &Vector::zeros(2), &l, &v(&[1.])), Err(Error::SingularKkt)));
        let l2 = LinOp::Dense(DMatrix::from_row_slice(2, 2, &[1., 1., 1., 1.]));
        assert!(solve_eq_qp(&DMatrix::identity(2, 2), &Vector::zeros(2), &l2, &v(&[1., -1.])).is_err());
    }

    #[test]
    fn composite_reference_without_nonsmooth_terms() {
        let qm = DMatrix::from_row_slice(3, 3, &[3., 1., 0., 1., 2., 0.5, 0., 0.5, 1.5]);
        let q = v(&[1., -2., 0.5]);
        let f = SmoothFn::quadratic(qm.clone(), q.clone()).unwrap();
        let spec = ProblemSpec::new(f, ProxFn::Zero, ProxFn::Zero, LinOp::FirstDifference(3)).unwrap();
        let sol = solve_composite_reference(&spec, 200_000).unwrap();
        let direct = qm.cholesky().unwrap().solve(&-q);
        assert!((&sol.x_star - direct).amax() < 1e-8);
    }

    #[test]
    fn composite_reference_orthonormal_lasso() {
        // ½‖x − c‖² + λ‖x‖₁ through H = λ‖·‖₁, L = I: x* = soft(c, λ)
        let c = v(&[2.0, -0.3, 0.7, -1.5]);
        let f = SmoothFn::quadratic(DMatrix::identity(4, 4), -c.clone()).unwrap();
        let spec = ProblemSpec::new(f, ProxFn::Zero, ProxFn::L1 { lambda: 0.5 }, LinOp::Identity(4)).unwrap();
        let sol = solve_composite_reference(&spec, 200_000).unwrap();
        let soft = c.map(|t| t.signum() * (t.abs() - 0.5).max(0.0));
        assert!((&sol.x_star - soft).amax() < 1e-8);
    }

    #[test]
    fn exhaustive_fused_lasso_matches_composite_reference() {
        let w = DMatrix::from_row_slice(
            6,
            5,
            &[
                1., 0., 2., 0., 1., 0., 1., 0., -1., 0., 2., 1., 0., 0., 1., 0., 0., 1., 1., 0., 1., -1., 0., 0., 3., 0.,
                2., 1., 1., 0.,
            ],
        );
        let a = v(&[3., -1., 2., 0., 4., 1.]);
        let f = SmoothFn::least_squares(w, a).unwrap().with_ridge(0.5).unwrap();
        let (qm, q, _) = f.quadratic_form().unwrap();
        let exact = fused_lasso_exhaustive(&qm, &q, 1.0).unwrap();
        let spec = ProblemSpec::new(f, ProxFn::Zero, ProxFn::L1 { lambda: 1.0 }, LinOp::FirstDifference(5)).unwrap();
        let sol = solve_composite_reference(&spec, 1_000_000).unwrap();
        assert!((&sol.x_star - exact).amax() < 1e-8);
    }

    #[test]
    fn dense_reference_handles_smooth_h() {
        let f = SmoothFn::quadratic(DMatrix::identity(3, 3), v(&[1., 0., -1.])).unwrap();
        let spec =
            ProblemSpec::new(f, ProxFn::SqL2 { lambda: 0.5 }, ProxFn::SqL2 { lambda: 2.0 }, LinOp::FirstDifference(3))
                .unwrap();
        let sol = solve_dense_reference(&spec).unwrap();
        let (g, t) = (0.3, 0.4);
        let (kp, kd) = spec.kkt_residual(&sol.x_star, &sol.y_star, g, t).unwrap();
        assert!(kp.max(kd) < 1e-12);
    }

    #[test]
    fn decentralized_reference_is_mean_for_unit_quadratics() {
        let locals: Vec<SmoothFn> = [1.0, 2.0, 6.0]
            .iter()
            .map(|&c| SmoothFn::quadratic(DMatrix::identity(1, 1), v(&[-c])).unwrap())
            .collect();
        let lap = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        let problem = DecentralizedProblem::new(locals, lap).unwrap();
        assert!((solve_decentralized_reference(&problem).unwrap()[0] - 3.0).abs() < 1e-14);
    }
}
