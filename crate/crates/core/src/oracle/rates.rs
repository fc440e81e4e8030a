use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{linear_stepsize, max_stepsize, AssumptionConstants, StepsizeMode};
use crate::linops::{Vector, RANK_THRESHOLD};
use crate::problem::{ProblemSpec, SaddlePoint};
use crate::solvers::dys::{concat, gamma_tau_norm_sq, p_norm_sq, DysState, DysStep, Splitting};
use crate::solvers::{constraint_rhs, DecentralizedProblem, DestroyState, RunTrace, SolverKind, TraceRecord};

/// Stochastic checks need at least this many seeds.
pub const MIN_SEEDS: usize = 20;

/// Envelope values below `ENVELOPE_FLOOR · (1 + ‖v*‖²)` are at the rounding
/// level of the Lyapunov function and are not compared.
pub const ENVELOPE_FLOOR: f64 = 1e-24;

/// Relative slack on deterministic linear envelopes.
const LINEAR_REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateTheorem {
    /// Ergodic duality gap of PD3O.
    #[serde(rename = "Thm2_PD3O")]
    Thm2Pd3o,
    /// Ergodic Bregman gap of PDDY.
    #[serde(rename = "Thm3_PDDY")]
    Thm3Pddy,
    #[serde(rename = "Thm4_LiCo")]
    Thm4LiCo,
    /// LiCoSGD rate carried over to DESTROY through `L = W^{1/2}`.
    #[serde(rename = "Thm4_DESTROY")]
    Thm4Destroy,
    #[serde(rename = "ThmA_PD3O_linear")]
    ThmAPd3oLinear,
    #[serde(rename = "ThmA_PDDY_linear")]
    ThmAPddyLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub theorem: RateTheorem,
    /// Contraction factor of the linear theorems; `None` for ergodic bounds.
    pub r_theoretical: Option<f64>,
    /// Largest per-iteration contraction between consecutive logged records.
    pub r_empirical: Option<f64>,
    pub bound_violations: usize,
    /// Smallest relative slack `(bound − observed)/bound` over the checked
    /// records with `k ≥ 1`.
    pub margin: f64,
    pub checked: usize,
    pub seeds: usize,
    /// `V⁰`
    pub v0: f64,
    /// The stepsizes lie outside the theorem's conditions.
    pub out_of_theorem: bool,
}

impl RateReport {
    pub fn passed(&self) -> bool {
        self.bound_violations == 0 && self.checked > 0
    }
}

/// Runs the generic iteration for `iters` steps from `v0`.
pub fn dys_trace(s: &impl Splitting, v0: Vector, iters: usize) -> Result<Vec<DysStep>> {
    let mut state = DysState { v: v0, gamma: s.gamma() };
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let step = s.step(&state)?;
        state.v = step.v_next.clone();
        out.push(step);
    }
    Ok(out)
}

/// Worst relative residual of
///
/// ```text
/// ‖v⁺ − v*‖² = ‖v − v*‖² − 2γ⟨b − b*, z − z*⟩ − 2γ⟨C̃z − C̃z*, z − z*⟩
///              − 2γ⟨a⁺ − a*, u⁺ − u*⟩ − γ²‖a⁺ + b − a* − b*‖² + γ²‖C̃z − C̃z*‖²
/// ```
///
/// in the splitting's metric, with `b = (v − z)/γ ∈ B̃(z)` and
/// `a⁺ = (2z − v − γC̃z − u)/γ ∈ Ã(u)` read off the steps.
pub fn check_fundamental_equality(s: &impl Splitting, steps: &[DysStep], saddle: &SaddlePoint) -> Result<f64> {
    let g = s.gamma();
    let v_star = s.fixed_point(saddle)?;
    let z_star = concat(&saddle.x, &saddle.y);
    let c_star = s.apply_c(&z_star)?;
    let b_star = (&v_star - &z_star) / g;
    let a_star = (&z_star - &v_star - &c_star * g) / g;
    let ip = |a: &Vector, b: &Vector| s.inner(a, b);
    let mut worst: f64 = 0.0;
    for st in steps {
        let b = (&st.v - &st.z) / g;
        let a = (&st.z * 2.0 - &st.v - &st.cz * g - &st.u) / g;
        let dz = &st.z - &z_star;
        let dc = &st.cz - &c_star;
        let dv = &st.v - &v_star;
        let dab = &a + &b - &a_star - &b_star;
        let terms = [
            ip(&dv, &dv)?,
            -2.0 * g * ip(&(&b - &b_star), &dz)?,
            -2.0 * g * ip(&dc, &dz)?,
            -2.0 * g * ip(&(&a - &a_star), &(&st.u - &z_star))?,
            -g * g * ip(&dab, &dab)?,
            g * g * ip(&dc, &dc)?,
        ];
        let dn = &st.v_next - &v_star;
        let lhs = ip(&dn, &dn)?;
        let rhs: f64 = terms.iter().sum();
        let scale = lhs.abs() + terms.iter().map(|t| t.abs()).sum::<f64>();
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

fn require_keep(rec: &TraceRecord) -> Result<()> {
    if rec.y.is_none() {
        return Err(Error::InvalidParameter("rate checks need traces run with keep_iterates".into()));
    }
    Ok(())
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_traces(traces: &[RunTrace], stochastic: bool) -> Result<()> {
    let first = traces.first().ok_or_else(|| Error::InvalidParameter("no traces".into()))?;
    if stochastic && traces.len() < MIN_SEEDS {
        return Err(Error::InvalidParameter(format!(
            "stochastic bounds hold in expectation; average at least {MIN_SEEDS} seeds, got {}",
            traces.len()
        )));
    }
    for t in traces {
        if t.diverged.is_some() {
            return Err(Error::InvalidParameter("a trace diverged".into()));
        }
        if t.records.len() != first.records.len() || t.records.iter().zip(&first.records).any(|(a, b)| a.k != b.k) {
            return Err(Error::InvalidParameter("traces must log the same iterations".into()));
        }
        if t.config.solver != first.config.solver || t.config.gamma != first.config.gamma || t.config.tau != first.config.tau
        {
            return Err(Error::InvalidParameter("traces must share solver and stepsizes".into()));
        }
    }
    require_keep(&first.records[0])
}

fn steps(trace: &RunTrace) -> (f64, f64) {
    (trace.config.gamma.expect("resolved"), trace.config.tau.expect("resolved"))
}

/// Checks the `O(1/k)` ergodic bound `gap_k ≤ V⁰/(kγ)` with
/// `V⁰ = ‖v⁰ − v*‖²_P + γ²κσ₀²` at every logged `k ≥ 1`: the duality gap
/// for PD3O, the Bregman sum with `D_R` at `s̄` for PDDY. Over several
/// seeds the mean gap must stay below the bound plus three standard errors.
pub fn verify_ergodic_bound(
    spec: &ProblemSpec,
    traces: &[RunTrace],
    saddle: &SaddlePoint,
    constants: &AssumptionConstants,
) -> Result<RateReport> {
    let stochastic = constants.beta > 0.0;
    check_traces(traces, stochastic)?;
    let first = &traces[0];
    let (gamma, tau) = steps(first);
    let (theorem, fix_shift) = match first.config.solver {
        SolverKind::Pd3o => (RateTheorem::Thm2Pd3o, saddle.r.clone()),
        SolverKind::Pddy => (RateTheorem::Thm3Pddy, spec.l.adjoint_apply(&saddle.y)?),
        other => {
            return Err(Error::InvalidParameter(format!("ergodic bounds cover PD3O and PDDY, not {}", other.name())))
        }
    };
    let rec0 = &first.records[0];
    let p0 = rec0.p.as_ref().ok_or_else(|| Error::InvalidParameter("record 0 lacks p".into()))?;
    let v_star = concat(&(&saddle.x + fix_shift * gamma), &saddle.y);
    let dv = concat(p0, rec0.y.as_ref().expect("checked")) - &v_star;
    let sigma0 = if constants.kappa > 0.0 { rec0.sigma_sq.ok_or(Error::MissingOracle)? } else { 0.0 };
    let v0 = p_norm_sq(spec, &dv, gamma, tau)? + gamma * gamma * constants.kappa * sigma0;

    let mut violations = 0;
    let mut margin = f64::INFINITY;
    let mut checked = 0;
    for i in 1..first.records.len() {
        let k = first.records[i].k;
        let gaps = traces
            .iter()
            .map(|t| {
                let r = &t.records[i];
                match theorem {
                    RateTheorem::Thm2Pd3o => r.duality_gap,
                    _ => r.bregman_gap,
                }
                .ok_or_else(|| Error::Undefined(format!("gap missing at k={k}; run with a reference saddle point")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mean, se) = mean_se(&gaps);
        let bound = v0 / (k as f64 * gamma);
        if mean > bound + 3.0 * se {
            violations += 1;
        }
        margin = margin.min((bound - mean) / bound);
        checked += 1;
    }
    let out_of_theorem = gamma > max_stepsize(constants, StepsizeMode::Ergodic) * (1.0 + 1e-12)
        || gamma * tau * spec.op_norm_sq() >= 1.0;
    Ok(RateReport {
        theorem,
        r_theoretical: None,
        r_empirical: None,
        bound_violations: violations,
        margin,
        checked,
        seeds: traces.len(),
        v0,
        out_of_theorem,
    })
}

fn hypothesis(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::HypothesisUnmet(what.into()))
    }
}

type Lyapunov = Box<dyn Fn(&TraceRecord) -> Result<f64>>;

fn envelope_report(
    theorem: RateTheorem,
    r: f64,
    series: Vec<Vec<f64>>,
    ks: &[usize],
    scale: f64,
    out_of_theorem: bool,
) -> RateReport {
    let seeds = series.len();
    let per_k: Vec<(f64, f64)> = (0..ks.len()).map(|i| mean_se(&series.iter().map(|s| s[i]).collect::<Vec<_>>())).collect();
    let v0 = per_k[0].0;
    let floor = ENVELOPE_FLOOR * scale;
    let mut violations = 0;
    let mut checked = 0;
    let mut margin = f64::INFINITY;
    for (i, &k) in ks.iter().enumerate() {
        let env = r.powi(k as i32) * v0;
        if env < floor {
            break;
        }
        let (mean, se) = per_k[i];
        if mean > env * (1.0 + LINEAR_REL_TOL) + 3.0 * se {
            violations += 1;
        }
        // k = 0 holds with equality
        if k > 0 {
            margin = margin.min((env - mean) / env);
        }
        checked += 1;
    }
    let mut r_emp: Option<f64> = None;
    for i in 1..ks.len() {
        let (a, b) = (per_k[i - 1].0, per_k[i].0);
        if a < floor || b < floor {
            break;
        }
        let ratio = (b / a).powf(1.0 / (ks[i] - ks[i - 1]) as f64);
        r_emp = Some(r_emp.map_or(ratio, |m| m.max(ratio)));
    }
    RateReport {
        theorem,
        r_theoretical: Some(r),
        r_empirical: r_emp,
        bound_violations: violations,
        margin,
        checked,
        seeds,
        v0,
        out_of_theorem,
    }
}

/// Checks `V^k ≤ r^k V⁰` for the linear-rate theorems. `κ` is taken as
/// [`AssumptionConstants::linear_kappa`]. Fails with
/// [`Error::HypothesisUnmet`] when the problem lacks the strong convexity or
/// smoothness the theorem needs.
pub fn verify_linear_rate(
    spec: &ProblemSpec,
    traces: &[RunTrace],
    saddle: &SaddlePoint,
    constants: &AssumptionConstants,
    theorem: RateTheorem,
) -> Result<RateReport> {
    let stochastic = constants.beta > 0.0;
    let first = traces.first().ok_or_else(|| Error::InvalidParameter("no traces".into()))?;
    let (gamma, tau) = steps(first);
    let kappa = constants.linear_kappa();
    let l2 = spec.op_norm_sq();
    let mu_f = spec.f.mu();
    let mu_r = spec.r.mu();
    let mu_hs = spec.h.conj_mu();
    let expected_solver = match theorem {
        RateTheorem::Thm4LiCo => SolverKind::LiCoSgd,
        RateTheorem::ThmAPd3oLinear => SolverKind::Pd3o,
        RateTheorem::ThmAPddyLinear => SolverKind::Pddy,
        _ => return Err(Error::InvalidParameter("not a linear-rate theorem for ProblemSpec traces".into())),
    };
    let mut out_of_theorem = gamma > linear_stepsize(constants) * (1.0 + 1e-12) || gamma * tau * l2 >= 1.0;
    let (r, lyap_y, p_shift): (f64, f64, Option<Vector>) = match theorem {
        RateTheorem::Thm4LiCo => {
            constraint_rhs(spec).map_err(|_| Error::HypothesisUnmet("R = 0 and H = ι_b".into()))?;
            hypothesis(mu_f > 0.0, "μ_F > 0")?;
            let omega = spec.omega().ok_or_else(|| Error::HypothesisUnmet("ω(L*L) > 0".into()))?;
            let w = 1.0 + tau * gamma * omega;
            ((1.0 - gamma * mu_f).max(constants.variance_rate()).max(1.0 / w), w, None)
        }
        RateTheorem::ThmAPd3oLinear => {
            let lambda = spec.r.smooth_lambda().ok_or_else(|| Error::HypothesisUnmet("R λ-smooth".into()))?;
            let mu = mu_f + 2.0 * mu_r;
            hypothesis(mu > 0.0, "μ_F + 2μ_R > 0")?;
            hypothesis(mu_hs > 0.0, "μ_{H*} > 0 (H smooth)")?;
            let w = 1.0 + 2.0 * tau * mu_hs;
            let contraction = 1.0 - gamma * mu / (1.0 + gamma * lambda).powi(2);
            (contraction.max(constants.variance_rate()).max(1.0 / w), w, Some(saddle.r.clone()))
        }
        RateTheorem::ThmAPddyLinear => {
            hypothesis(mu_r > 0.0, "μ_R > 0")?;
            hypothesis(mu_hs > 0.0, "μ_{H*} > 0 (H smooth)")?;
            if gamma * gamma * l2 * mu_r > mu_hs {
                out_of_theorem = true;
            }
            let eta = (2.0 * (mu_hs - gamma * gamma * l2 * mu_r)).max(0.0);
            let w = 1.0 + tau * eta;
            let r = (1.0 / (1.0 + gamma * mu_r)).max(constants.variance_rate()).max(1.0 / w);
            (r, w, Some(spec.l.adjoint_apply(&saddle.y)?))
        }
        _ => unreachable!(),
    };
    check_traces(traces, stochastic)?;
    if first.config.solver != expected_solver {
        return Err(Error::InvalidParameter(format!("{theorem:?} needs {} traces", expected_solver.name())));
    }
    let primal_weight = if theorem == RateTheorem::ThmAPddyLinear { 1.0 + gamma * mu_r } else { 1.0 };
    let primal_star = match &p_shift {
        Some(shift) => &saddle.x + shift * gamma,
        None => saddle.x.clone(),
    };
    let spec_c = spec.clone();
    let y_star = saddle.y.clone();
    let ps = primal_star.clone();
    let lyap: Lyapunov = Box::new(move |rec: &TraceRecord| {
        let primal = if p_shift.is_some() { rec.p.as_ref() } else { rec.x.as_ref() }
            .ok_or_else(|| Error::InvalidParameter("rate checks need traces run with keep_iterates".into()))?;
        let y = rec.y.as_ref().expect("checked");
        let sigma = if kappa > 0.0 { rec.sigma_sq.ok_or(Error::MissingOracle)? } else { 0.0 };
        Ok(primal_weight * (primal - &ps).norm_squared()
            + lyap_y * gamma_tau_norm_sq(&spec_c, &(y - &y_star), gamma, tau)?
            + kappa * gamma * gamma * sigma)
    });
    let series = traces
        .iter()
        .map(|t| t.records.iter().map(&lyap).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let ks: Vec<usize> = first.records.iter().map(|r| r.k).collect();
    let scale = 1.0 + primal_star.norm_squared() + saddle.y.norm_squared();
    Ok(envelope_report(theorem, r, series, &ks, scale, out_of_theorem))
}

/// The LiCoSGD rate for DESTROY, seen as PriLiCoSGD on `F(x̃) = Σ f_i(x_i)`
/// with `L = (Ŵ ⊗ I)^{1/2}`: `‖L‖² = ‖Ŵ‖`, `ω(L*L) = ω(Ŵ)`, and the dual
/// norm of `y ∈ ran(L)` is `‖y‖² = aᵀ(Ŵ ⊗ I)⁺a` with `a = L*y`.
pub fn verify_destroy_rate(
    problem: &DecentralizedProblem,
    traces: &[RunTrace],
    x_star: &Vector,
    constants: &AssumptionConstants,
) -> Result<RateReport> {
    let stochastic = constants.beta > 0.0;
    check_traces(traces, stochastic)?;
    let first = &traces[0];
    if first.config.solver != SolverKind::Destroy {
        return Err(Error::InvalidParameter("DESTROY rate needs DESTROY traces".into()));
    }
    let (gamma, tau) = steps(first);
    let mu_f = problem.locals.iter().map(|f| f.mu()).fold(f64::INFINITY, f64::min);
    hypothesis(mu_f > 0.0, "μ_F > 0")?;
    hypothesis(problem.w_omega > 0.0, "ω(Ŵ) > 0")?;
    let kappa = constants.linear_kappa();
    let w = 1.0 + tau * gamma * problem.w_omega;
    let r = (1.0 - gamma * mu_f).max(constants.variance_rate()).max(1.0 / w);
    let out_of_theorem = gamma > linear_stepsize(constants) * (1.0 + 1e-12) || gamma * tau * problem.w_norm >= 1.0;

    let eig = SymmetricEigen::new(problem.gossip.clone());
    let cut = RANK_THRESHOLD * problem.w_norm;
    let n = problem.nodes();
    let mut w_pinv = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cut {
            let u = eig.eigenvectors.column(i);
            w_pinv += u * u.transpose() / lam;
        }
    }
    let d = problem.block_dim;
    let x_tilde = DestroyState::stacked(&vec![x_star.clone(); n]);
    let a_star = DestroyState::stacked(
        &problem.locals.iter().map(|f| f.grad(x_star).map(|g| -g)).collect::<Result<Vec<_>>>()?,
    );
    let pinv_apply = |a: &Vector| {
        let blocks = DestroyState::unstack(a, d);
        let out: Vec<Vector> =
            (0..n).map(|i| (0..n).fold(Vector::zeros(d), |s, j| s + &blocks[j] * w_pinv[(i, j)])).collect();
        DestroyState::stacked(&out)
    };
    let series = traces
        .iter()
        .map(|t| {
            t.records
                .iter()
                .map(|rec| {
                    require_keep(rec)?;
                    let x = rec.x.as_ref().expect("kept with y");
                    let da = rec.y.as_ref().expect("checked") - &a_star;
                    let dual = gamma / tau * da.dot(&pinv_apply(&da)) - gamma * gamma * da.norm_squared();
                    let sigma = if kappa > 0.0 { rec.sigma_sq.ok_or(Error::MissingOracle)? } else { 0.0 };
                    Ok((x - &x_tilde).norm_squared() + w * dual + kappa * gamma * gamma * sigma)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let ks: Vec<usize> = first.records.iter().map(|r| r.k).collect();
    let scale = 1.0 + x_tilde.norm_squared() + a_star.norm_squared();
    Ok(envelope_report(RateTheorem::Thm4Destroy, r, series, &ks, scale, out_of_theorem))
}
