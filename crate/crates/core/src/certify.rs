//! Numerical certification of the solvers: identities, estimator contracts,
//! rate bounds and infrastructure checks, grouped into suites. Shared by
//! `pdsplit certify` and the acceptance test target.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{self, format_libsvm, gaussian, parse_libsvm, BenchProblem, BenchSpec, Graph, Instance};
use crate::error::{Error, Result};
use crate::estimators::{constants, linear_stepsize, EstimatorKind, EstimatorState};
use crate::functions::{ProxFn, SmoothFn};
use crate::linops::{LinOp, Vector};
use crate::oracle::{
    check_fundamental_equality, dys_trace, solve_composite_reference, solve_decentralized_reference,
    solve_dense_reference, verify_destroy_rate, verify_ergodic_bound, verify_linear_rate, RateReport, RateTheorem,
    DEFAULT_REFERENCE_ITERS, MIN_SEEDS,
};
use crate::problem::{ProblemSpec, SaddlePoint};
use crate::solvers::dys::{concat, CondatVuSplitting, PrimalDualSplitting};
use crate::solvers::{
    condat_vu_step, destroy_step, pd3o_step, pddy_step, prilicosgd_step, resolve_steps, run, run_destroy,
    write_trace, CondatVuForm, CondatVuState, DecentralizedProblem, DestroyState, Exact, NodeOracles, Pd3oState,
    PddyState, PrimalDualOrder, PriLicoState, RunConfig, RunTrace, SolverKind,
};

/// Wall-clock budget of the whole suite, seconds.
pub const TOTAL_BUDGET_S: f64 = 300.0;
/// Wall-clock budget of the cross-solver agreement check, seconds.
pub const CROSS_SOLVER_BUDGET_S: f64 = 30.0;
/// Monte-Carlo draws per estimator check.
pub const MC_SAMPLES: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Identities,
    Estimators,
    Rates,
    Solvers,
    Infrastructure,
    All,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Estimators => "estimators",
            Suite::Rates => "rates",
            Suite::Solvers => "solvers",
            Suite::Infrastructure => "infrastructure",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Suite::Identities, Suite::Estimators, Suite::Rates, Suite::Solvers, Suite::Infrastructure, Suite::All]
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: Suite,
    /// Acceptance criterion number, when the check backs one.
    pub criterion: Option<u8>,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u128,
}

type Outcome = Result<(bool, String)>;

struct Check {
    suite: Suite,
    criterion: u8,
    name: &'static str,
    run: fn() -> Outcome,
}

const CHECKS: &[Check] = &[
    Check { suite: Suite::Identities, criterion: 2, name: "dys_equivalence", run: dys_equivalence },
    Check { suite: Suite::Identities, criterion: 3, name: "lemma3_identity", run: lemma3_identity },
    Check { suite: Suite::Identities, criterion: 3, name: "lemma3_detects_faults", run: lemma3_detects_faults },
    Check { suite: Suite::Identities, criterion: 10, name: "moreau_identity", run: moreau_identity },
    Check { suite: Suite::Identities, criterion: 10, name: "adjoint", run: adjoint },
    Check { suite: Suite::Estimators, criterion: 8, name: "estimator_full", run: estimator_full },
    Check { suite: Suite::Estimators, criterion: 8, name: "estimator_lsvrg", run: estimator_lsvrg },
    Check { suite: Suite::Estimators, criterion: 8, name: "estimator_saga", run: estimator_saga },
    Check { suite: Suite::Rates, criterion: 4, name: "pd3o_ergodic_full", run: pd3o_ergodic_full },
    Check { suite: Suite::Rates, criterion: 4, name: "pd3o_ergodic_lsvrg", run: pd3o_ergodic_lsvrg },
    Check { suite: Suite::Rates, criterion: 5, name: "pddy_ergodic_full", run: pddy_ergodic_full },
    Check { suite: Suite::Rates, criterion: 5, name: "pddy_ergodic_lsvrg", run: pddy_ergodic_lsvrg },
    Check { suite: Suite::Rates, criterion: 6, name: "lico_linear_full", run: lico_linear_full },
    Check { suite: Suite::Rates, criterion: 6, name: "lico_linear_lsvrg", run: lico_linear_lsvrg },
    Check { suite: Suite::Rates, criterion: 6, name: "lico_limit", run: lico_limit },
    Check { suite: Suite::Rates, criterion: 7, name: "pd3o_linear_full", run: pd3o_linear_full },
    Check { suite: Suite::Rates, criterion: 7, name: "pd3o_linear_lsvrg", run: pd3o_linear_lsvrg },
    Check { suite: Suite::Rates, criterion: 7, name: "pddy_linear_full", run: pddy_linear_full },
    Check { suite: Suite::Rates, criterion: 7, name: "pddy_linear_lsvrg", run: pddy_linear_lsvrg },
    Check { suite: Suite::Rates, criterion: 9, name: "destroy_rate", run: destroy_rate },
    Check { suite: Suite::Solvers, criterion: 1, name: "cross_solver_agreement", run: cross_solver_agreement },
    Check { suite: Suite::Solvers, criterion: 9, name: "destroy_consensus", run: destroy_consensus },
    Check { suite: Suite::Solvers, criterion: 9, name: "destroy_is_prilico", run: destroy_is_prilico },
    Check { suite: Suite::Infrastructure, criterion: 10, name: "firm_nonexpansiveness", run: firm_nonexpansive },
    Check { suite: Suite::Infrastructure, criterion: 10, name: "spectral_info", run: spectral_vs_dense },
    Check { suite: Suite::Infrastructure, criterion: 10, name: "libsvm_round_trip", run: libsvm_round_trip },
    Check { suite: Suite::Infrastructure, criterion: 10, name: "run_determinism", run: run_determinism },
];

/// Runs every check of `suite`. A check that errors counts as failed. The
/// full suite closes with a wall-clock check against [`TOTAL_BUDGET_S`].
pub fn run_suite(suite: Suite) -> Vec<CheckResult> {
    run_suite_with(suite, None, |_| {})
}

/// Names of all checks, in execution order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

/// As [`run_suite`], keeping only checks whose name contains `filter` and
/// calling `progress` after each check.
pub fn run_suite_with(suite: Suite, filter: Option<&str>, mut progress: impl FnMut(&CheckResult)) -> Vec<CheckResult> {
    let start = Instant::now();
    let mut out = Vec::new();
    let selected = CHECKS
        .iter()
        .filter(|c| suite == Suite::All || c.suite == suite)
        .filter(|c| filter.is_none_or(|f| c.name.contains(f)));
    for check in selected {
        let t = Instant::now();
        let (passed, detail) = match (check.run)() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let res = CheckResult {
            suite: check.suite,
            criterion: Some(check.criterion),
            name: check.name.to_string(),
            passed,
            detail,
            elapsed_ms: t.elapsed().as_millis(),
        };
        progress(&res);
        out.push(res);
    }
    if suite == Suite::All && filter.is_none() {
        let secs = start.elapsed().as_secs_f64();
        let res = CheckResult {
            suite: Suite::Infrastructure,
            criterion: Some(10),
            name: "total_time".into(),
            passed: secs < TOTAL_BUDGET_S,
            detail: format!("{secs:.1} s (budget {TOTAL_BUDGET_S} s)"),
            elapsed_ms: 0,
        };
        progress(&res);
        out.push(res);
    }
    out
}

// ---- problem catalog ----

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    gaussian(rng, n, 1).column(0).into_owned()
}

/// Wide least squares (not strongly convex) with `λ‖x‖₁ + λ₁‖Dx‖₁`.
fn sparse_fused(seed: u64) -> Result<ProblemSpec> {
    let mut r = rng(seed);
    let (n, p) = (15, 30);
    let w = gaussian(&mut r, n, p);
    let a = gaussian_vec(&mut r, n);
    ProblemSpec::new(
        SmoothFn::least_squares(w, a)?,
        ProxFn::L1 { lambda: 0.2 },
        ProxFn::L1 { lambda: 0.5 },
        LinOp::FirstDifference(p),
    )
}

/// Strongly convex `F`, smooth strongly convex `R`, quadratic `H`.
fn smooth_quadratic(seed: u64) -> Result<ProblemSpec> {
    let mut r = rng(seed);
    let w = gaussian(&mut r, 10, 8);
    let a = gaussian_vec(&mut r, 10);
    let l = gaussian(&mut r, 6, 8) * 0.5;
    ProblemSpec::new(
        SmoothFn::least_squares(w, a)?.with_ridge(0.5)?,
        ProxFn::SqL2 { lambda: 0.5 },
        ProxFn::SqL2 { lambda: 2.0 },
        LinOp::Dense(l),
    )
}

/// `min F(x)` s.t. `Lx = b`, `d = 20`, `m = 5`, `F` a ridge least squares
/// over 8 rows.
fn equality_qp(seed: u64) -> Result<ProblemSpec> {
    let mut r = rng(seed);
    let (d, m) = (20, 5);
    let w = gaussian(&mut r, 8, d);
    let a = gaussian_vec(&mut r, 8);
    let l = gaussian(&mut r, m, d);
    let x0 = gaussian_vec(&mut r, d);
    let b = &l * x0;
    ProblemSpec::new(
        SmoothFn::least_squares(w, a)?.with_ridge(1.0)?,
        ProxFn::Zero,
        ProxFn::IndicatorPoint { b },
        LinOp::Dense(l),
    )
}

fn ring_network() -> Result<DecentralizedProblem> {
    let problem = BenchProblem::DecentralizedQuadratic { nodes: 10, graph: Graph::Ring, d: 5, seed: 3, ridge: 0.1 };
    match bench::generate(&problem)?.instance {
        Instance::Decentralized(p) => Ok(p),
        Instance::Composite(_) => unreachable!("decentralized generator"),
    }
}

fn cross_solver_instance() -> Result<ProblemSpec> {
    let problem = BenchProblem::FusedLasso { n: 100, p: 50, seed: 7, lambda: 0.1, lambda1: 5.0 };
    match bench::generate(&problem)?.instance {
        Instance::Composite(spec) => Ok(spec),
        Instance::Decentralized(_) => unreachable!("composite generator"),
    }
}

/// `‖a − b‖∞ / max(1, ‖a‖∞)`.
fn rel_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / a.amax().max(1.0)
}

fn summarize(r: &RateReport) -> String {
    let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    format!(
        "{} violations / {} checked, margin {:.3e}, seeds {}, V0 {:.3e}, r_th {}, r_emp {}{}",
        r.bound_violations,
        r.checked,
        r.margin,
        r.seeds,
        r.v0,
        fmt_opt(r.r_theoretical),
        fmt_opt(r.r_empirical),
        if r.out_of_theorem { ", OUT OF THEOREM" } else { "" }
    )
}

fn seeded_runs(spec: &ProblemSpec, base: &RunConfig, seeds: usize, saddle: &SaddlePoint) -> Result<Vec<RunTrace>> {
    (0..seeds as u64).map(|seed| run(spec, &RunConfig { seed, ..base.clone() }, Some(saddle))).collect()
}

// ---- identities ----

const DYS_ITERS: usize = 1000;
const DYS_TOL: f64 = 1e-12;

fn dys_equivalence() -> Outcome {
    let spec = sparse_fused(21)?;
    let (n, m) = (spec.primal_dim(), spec.dual_dim());
    let mut r = rng(22);
    let p0 = gaussian_vec(&mut r, n);
    let y0 = gaussian_vec(&mut r, m);
    let v0 = concat(&p0, &y0);
    let mut worst = [0.0f64; 4];

    let (g, t) = resolve_steps(&spec, &RunConfig::new(SolverKind::Pddy, 0))?;
    let split = PrimalDualSplitting { spec: &spec, gamma: g, tau: t, order: PrimalDualOrder::Pddy };
    let steps = dys_trace(&split, v0.clone(), DYS_ITERS)?;
    let mut st = PddyState::new(&spec, p0.clone(), y0.clone(), g, t, false)?;
    for step in &steps {
        st = pddy_step(&spec, &mut Exact(&spec.f), &st)?;
        worst[0] = worst[0].max(rel_diff(&step.v_next, &concat(&st.p, &st.y)));
    }

    let split = PrimalDualSplitting { spec: &spec, gamma: g, tau: t, order: PrimalDualOrder::Pd3o };
    let steps = dys_trace(&split, v0.clone(), DYS_ITERS)?;
    let mut st = Pd3oState::new(&spec, p0.clone(), y0.clone(), g, t, false)?;
    for step in &steps {
        st = pd3o_step(&spec, &mut Exact(&spec.f), &st)?;
        worst[1] = worst[1].max(rel_diff(&step.v_next, &concat(&st.p, &st.y)));
    }

    // Alg31 tracks (z_x, u_y) of the generic iteration, Alg32 (u_x, z_y).
    let (g, t) = resolve_steps(&spec, &RunConfig::new(SolverKind::CondatVu31, 0))?;
    for (slot, form) in [(2, CondatVuForm::Alg31), (3, CondatVuForm::Alg32)] {
        let split = CondatVuSplitting::new(&spec, g, t, form)?;
        let steps = dys_trace(&split, v0.clone(), DYS_ITERS)?;
        let view = |s: &crate::solvers::DysStep| match form {
            CondatVuForm::Alg31 => concat(&s.z.rows(0, n).into_owned(), &s.u.rows(n, m).into_owned()),
            CondatVuForm::Alg32 => concat(&s.u.rows(0, n).into_owned(), &s.z.rows(n, m).into_owned()),
        };
        let init = view(&steps[0]);
        let mut st = CondatVuState::new(
            &spec,
            form,
            init.rows(0, n).into_owned(),
            init.rows(n, m).into_owned(),
            g,
            t,
            false,
        )?;
        for step in &steps[1..] {
            st = condat_vu_step(&spec, &st)?;
            worst[slot] = worst[slot].max(rel_diff(&view(step), &concat(&st.x, &st.y)));
        }
    }
    let passed = worst.iter().all(|&w| w <= DYS_TOL);
    Ok((
        passed,
        format!(
            "max rel diff over {DYS_ITERS} iters: pddy {:.2e}, pd3o {:.2e}, cv31 {:.2e}, cv32 {:.2e} (tol {DYS_TOL:e})",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

const LEMMA3_ITERS: usize = 100;
const LEMMA3_TOL: f64 = 1e-8;

fn lemma3_residuals() -> Result<Vec<(&'static str, f64)>> {
    let mut out = Vec::new();
    let mut r = rng(31);

    let spec = sparse_fused(11)?;
    let saddle = solve_composite_reference(&spec, DEFAULT_REFERENCE_ITERS)?.saddle();
    let (g, t) = resolve_steps(&spec, &RunConfig::new(SolverKind::Pd3o, 0))?;
    let s = PrimalDualSplitting { spec: &spec, gamma: g, tau: t, order: PrimalDualOrder::Pd3o };
    let v0 = gaussian_vec(&mut r, spec.primal_dim() + spec.dual_dim());
    out.push(("pd3o/sparse_fused", check_fundamental_equality(&s, &dys_trace(&s, v0, LEMMA3_ITERS)?, &saddle)?));

    let spec = smooth_quadratic(12)?;
    let saddle = solve_dense_reference(&spec)?.saddle();
    let (g, t) = resolve_steps(&spec, &RunConfig::new(SolverKind::Pddy, 0))?;
    let s = PrimalDualSplitting { spec: &spec, gamma: g, tau: t, order: PrimalDualOrder::Pddy };
    let v0 = gaussian_vec(&mut r, spec.primal_dim() + spec.dual_dim());
    out.push(("pddy/smooth_quadratic", check_fundamental_equality(&s, &dys_trace(&s, v0, LEMMA3_ITERS)?, &saddle)?));

    let spec = equality_qp(13)?;
    let saddle = solve_dense_reference(&spec)?.saddle();
    let (g, t) = resolve_steps(&spec, &RunConfig::new(SolverKind::CondatVu32, 0))?;
    for (label, form) in [("cv31/equality_qp", CondatVuForm::Alg31), ("cv32/equality_qp", CondatVuForm::Alg32)] {
        let s = CondatVuSplitting::new(&spec, g, t, form)?;
        let v0 = gaussian_vec(&mut r, spec.primal_dim() + spec.dual_dim());
        out.push((label, check_fundamental_equality(&s, &dys_trace(&s, v0, LEMMA3_ITERS)?, &saddle)?));
    }
    Ok(out)
}

fn lemma3_identity() -> Outcome {
    let res = lemma3_residuals()?;
    let passed = res.iter().all(|(_, r)| *r <= LEMMA3_TOL);
    let detail = res.iter().map(|(n, r)| format!("{n} {r:.2e}")).collect::<Vec<_>>().join(", ");
    Ok((passed, format!("{detail} (tol {LEMMA3_TOL:e})")))
}

/// The identity check must notice a perturbed resolvent output.
fn lemma3_detects_faults() -> Outcome {
    let spec = smooth_quadratic(12)?;
    let saddle = solve_dense_reference(&spec)?.saddle();
    let (g, t) = resolve_steps(&spec, &RunConfig::new(SolverKind::Pddy, 0))?;
    let s = PrimalDualSplitting { spec: &spec, gamma: g, tau: t, order: PrimalDualOrder::Pddy };
    let v0 = gaussian_vec(&mut rng(32), spec.primal_dim() + spec.dual_dim());
    let mut steps = dys_trace(&s, v0, 10)?;
    let clean = check_fundamental_equality(&s, &steps, &saddle)?;
    steps[5].u[0] += 1e-3;
    let faulty = check_fundamental_equality(&s, &steps, &saddle)?;
    Ok((clean <= LEMMA3_TOL && faulty > 1e3 * LEMMA3_TOL, format!("clean {clean:.2e}, perturbed u {faulty:.2e}")))
}

fn prox_catalog(dim: usize) -> Vec<ProxFn> {
    let mut r = rng(41);
    let half = dim / 2;
    vec![
        ProxFn::Zero,
        ProxFn::L1 { lambda: 0.7 },
        ProxFn::SqL2 { lambda: 1.3 },
        ProxFn::GroupL2 { groups: vec![(0..half).collect(), (half..dim).collect()], lambda: 0.9 },
        ProxFn::L2NormSum { blocks: vec![half, dim - half], lambda: 1.1 },
        ProxFn::IndicatorPoint { b: gaussian_vec(&mut r, dim) },
    ]
}

fn moreau_identity() -> Outcome {
    let dim = 7;
    let mut r = rng(42);
    let mut worst: f64 = 0.0;
    for h in prox_catalog(dim) {
        for tau in [0.3, 1.0, 4.0] {
            for _ in 0..20 {
                let v = gaussian_vec(&mut r, dim) * 3.0;
                let lhs = h.prox_conjugate(&v, tau)? + h.prox(&(&v / tau), 1.0 / tau)? * tau;
                worst = worst.max(rel_diff(&v, &lhs));
            }
        }
    }
    Ok((worst <= 1e-12, format!("max rel residual {worst:.2e} (tol 1e-12)")))
}

fn operator_catalog() -> Result<Vec<(&'static str, LinOp)>> {
    let mut r = rng(51);
    let ring = bench::laplacian(Graph::Ring, 6, 0)?;
    Ok(vec![
        ("identity", LinOp::Identity(9)),
        ("zero", LinOp::Zero { in_dim: 9, out_dim: 4 }),
        ("dense", LinOp::Dense(gaussian(&mut r, 7, 9))),
        ("first_difference", LinOp::FirstDifference(9)),
        ("group_selector", LinOp::group_selector(9, bench::grid_groups(3))?),
        ("gossip_kron", LinOp::gossip_kron(ring, 2)?),
        ("vstack", LinOp::vstack(vec![LinOp::Dense(gaussian(&mut r, 3, 9)), LinOp::FirstDifference(9)])?),
    ])
}

fn adjoint() -> Outcome {
    let mut r = rng(52);
    let mut worst: f64 = 0.0;
    for (_, op) in operator_catalog()? {
        for _ in 0..20 {
            let x = gaussian_vec(&mut r, op.in_dim());
            let y = gaussian_vec(&mut r, op.out_dim());
            let lx = op.apply(&x)?;
            let ly = op.adjoint_apply(&y)?;
            let scale = (lx.norm() * y.norm()).max(x.norm() * ly.norm()).max(1.0);
            worst = worst.max((lx.dot(&y) - x.dot(&ly)).abs() / scale);
        }
    }
    Ok((worst <= 1e-12, format!("max |⟨Lx,y⟩ − ⟨x,L*y⟩| relative {worst:.2e} (tol 1e-12)")))
}

// ---- estimators ----

/// Sample mean and standard error.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Draws `g` from independent copies of `base` (seeds `0..MC_SAMPLES`) at a
/// fixed `x`, and checks unbiasedness, the second-moment bound and the
/// variance recursion at an arbitrary reference point.
fn monte_carlo(f: &SmoothFn, base: &EstimatorState, x: &Vector, x_ref: &Vector) -> Outcome {
    let c = constants(base.kind, f)?;
    let grad = f.grad(x)?;
    let grad_ref = f.grad(x_ref)?;
    let d_f = f.bregman(x, x_ref)?;
    let sigma = base.sigma_sq(f, Some(x_ref))?;
    let dim = f.dim();
    let mut coords = vec![Vec::with_capacity(MC_SAMPLES as usize); dim];
    let mut second = Vec::with_capacity(MC_SAMPLES as usize);
    let mut sigma_next = Vec::with_capacity(MC_SAMPLES as usize);
    for seed in 0..MC_SAMPLES {
        let mut st = base.clone();
        st.seed = seed;
        let g = st.sample(f, x)?;
        for (j, col) in coords.iter_mut().enumerate() {
            col.push(g[j]);
        }
        second.push((&g - &grad_ref).norm_squared());
        sigma_next.push(st.sigma_sq(f, Some(x_ref))?);
    }
    // rounding floor of a mean over MC_SAMPLES terms
    let floor = grad.amax().max(1.0) * 1e-10;
    let mut bias_ok = true;
    let mut worst_z: f64 = 0.0;
    for (j, col) in coords.iter().enumerate() {
        let (m, se) = mean_se(col);
        let dev = (m - grad[j]).abs();
        bias_ok &= dev <= 3.0 * se + floor;
        if dev > floor {
            worst_z = worst_z.max(dev / se);
        }
    }
    let (m2, se2) = mean_se(&second);
    let bound2 = 2.0 * c.alpha * d_f + c.beta * sigma;
    let (ms, ses) = mean_se(&sigma_next);
    let bound_s = (1.0 - c.rho) * sigma + 2.0 * c.delta * d_f;
    let tol = |b: f64| b.abs() * 1e-12;
    let moment_ok = m2 - 3.0 * se2 <= bound2 + tol(bound2);
    let recursion_ok = ms - 3.0 * ses <= bound_s + tol(bound_s);
    Ok((
        bias_ok && moment_ok && recursion_ok,
        format!(
            "{:?} constants: bias max z {worst_z:.2}; E‖g−∇F(x*)‖² {m2:.4e} ± {se2:.1e} vs {bound2:.4e}; \
             Eσ⁺² {ms:.4e} ± {ses:.1e} vs {bound_s:.4e}",
            c.provenance
        ),
    ))
}

fn estimator_problem() -> Result<(SmoothFn, Vector, Vector)> {
    let mut r = rng(61);
    let f = SmoothFn::least_squares(gaussian(&mut r, 6, 4), gaussian_vec(&mut r, 6))?.with_ridge(0.1)?;
    let x = gaussian_vec(&mut r, 4);
    let x_ref = gaussian_vec(&mut r, 4);
    Ok((f, x, x_ref))
}

fn estimator_full() -> Outcome {
    let (f, x, x_ref) = estimator_problem()?;
    let base = EstimatorState::new(EstimatorKind::Full, &f, &x_ref, 0)?;
    monte_carlo(&f, &base, &x, &x_ref)
}

fn estimator_lsvrg() -> Outcome {
    let (f, x, x_ref) = estimator_problem()?;
    let start = gaussian_vec(&mut rng(62), f.dim());
    let base = EstimatorState::new(EstimatorKind::Lsvrg { p: 0.3 }, &f, &start, 0)?;
    monte_carlo(&f, &base, &x, &x_ref)
}

fn estimator_saga() -> Outcome {
    let (f, x, x_ref) = estimator_problem()?;
    let mut r = rng(63);
    let mut base = EstimatorState::new(EstimatorKind::Saga, &f, &gaussian_vec(&mut r, f.dim()), 999)?;
    // spread the table over several points
    for _ in 0..30 {
        base.sample(&f, &gaussian_vec(&mut r, f.dim()))?;
    }
    monte_carlo(&f, &base, &x, &x_ref)
}

// ---- rates ----

const ERGODIC_ITERS: usize = 10_000;

fn ergodic(solver: SolverKind, stochastic: bool) -> Outcome {
    let spec = sparse_fused(11)?;
    let saddle = solve_composite_reference(&spec, DEFAULT_REFERENCE_ITERS)?.saddle();
    let estimator = if stochastic {
        EstimatorKind::Lsvrg { p: 1.0 / spec.f.components() as f64 }
    } else {
        EstimatorKind::Full
    };
    let base = RunConfig { estimator, log_every: 10, keep_iterates: true, ..RunConfig::new(solver, ERGODIC_ITERS) };
    let traces = seeded_runs(&spec, &base, if stochastic { MIN_SEEDS } else { 1 }, &saddle)?;
    let report = verify_ergodic_bound(&spec, &traces, &saddle, &constants(estimator, &spec.f)?)?;
    Ok((report.passed() && !report.out_of_theorem, summarize(&report)))
}

fn pd3o_ergodic_full() -> Outcome {
    ergodic(SolverKind::Pd3o, false)
}

fn pd3o_ergodic_lsvrg() -> Outcome {
    ergodic(SolverKind::Pd3o, true)
}

fn pddy_ergodic_full() -> Outcome {
    ergodic(SolverKind::Pddy, false)
}

fn pddy_ergodic_lsvrg() -> Outcome {
    ergodic(SolverKind::Pddy, true)
}

const LICO_ITERS: usize = 5000;

fn lico(stochastic: bool) -> Outcome {
    let spec = equality_qp(13)?;
    let saddle = solve_dense_reference(&spec)?.saddle();
    let estimator = if stochastic { EstimatorKind::Lsvrg { p: 0.2 } } else { EstimatorKind::Full };
    let c = constants(estimator, &spec.f)?;
    let gamma = linear_stepsize(&c);
    let base = RunConfig {
        gamma: Some(gamma),
        tau: Some(0.99 / (gamma * spec.op_norm_sq())),
        estimator,
        log_every: if stochastic { 10 } else { 1 },
        keep_iterates: true,
        ..RunConfig::new(SolverKind::LiCoSgd, LICO_ITERS)
    };
    let traces = seeded_runs(&spec, &base, if stochastic { MIN_SEEDS } else { 1 }, &saddle)?;
    let report = verify_linear_rate(&spec, &traces, &saddle, &c, RateTheorem::Thm4LiCo)?;
    Ok((report.passed() && !report.out_of_theorem, summarize(&report)))
}

fn lico_linear_full() -> Outcome {
    lico(false)
}

fn lico_linear_lsvrg() -> Outcome {
    lico(true)
}

fn lico_limit() -> Outcome {
    let spec = equality_qp(13)?;
    let oracle = solve_dense_reference(&spec)?;
    let gamma = linear_stepsize(&constants(EstimatorKind::Full, &spec.f)?);
    let config = RunConfig {
        gamma: Some(gamma),
        tau: Some(0.99 / (gamma * spec.op_norm_sq())),
        log_every: 100,
        ..RunConfig::new(SolverKind::LiCoSgd, 20_000)
    };
    let trace = run(&spec, &config, None)?;
    let x = trace.final_state.primal();
    let err = (&x - &oracle.x_star).norm();
    Ok((err <= 1e-8, format!("‖x − x*‖ = {err:.2e} after {} iterations (tol 1e-8)", trace.last().k)))
}

fn linear_primal_dual(solver: SolverKind, stochastic: bool) -> Outcome {
    let spec = smooth_quadratic(12)?;
    let saddle = solve_dense_reference(&spec)?.saddle();
    let estimator = if stochastic { EstimatorKind::Lsvrg { p: 0.2 } } else { EstimatorKind::Full };
    let c = constants(estimator, &spec.f)?;
    let l2 = spec.op_norm_sq();
    let mut gamma = linear_stepsize(&c);
    let theorem = if solver == SolverKind::Pd3o {
        RateTheorem::ThmAPd3oLinear
    } else {
        // η = 2(μ_H* − γ²‖L‖²μ_R) must stay positive
        gamma = gamma.min(0.7 * (spec.h.conj_mu() / (l2 * spec.r.mu())).sqrt());
        RateTheorem::ThmAPddyLinear
    };
    let base = RunConfig {
        gamma: Some(gamma),
        tau: Some(0.99 / (gamma * l2)),
        estimator,
        log_every: if stochastic { 5 } else { 1 },
        keep_iterates: true,
        ..RunConfig::new(solver, 2000)
    };
    let traces = seeded_runs(&spec, &base, if stochastic { MIN_SEEDS } else { 1 }, &saddle)?;
    let report = verify_linear_rate(&spec, &traces, &saddle, &c, theorem)?;
    Ok((report.passed() && !report.out_of_theorem, summarize(&report)))
}

fn pd3o_linear_full() -> Outcome {
    linear_primal_dual(SolverKind::Pd3o, false)
}

fn pd3o_linear_lsvrg() -> Outcome {
    linear_primal_dual(SolverKind::Pd3o, true)
}

fn pddy_linear_full() -> Outcome {
    linear_primal_dual(SolverKind::Pddy, false)
}

fn pddy_linear_lsvrg() -> Outcome {
    linear_primal_dual(SolverKind::Pddy, true)
}

fn destroy_steps(problem: &DecentralizedProblem) -> Result<(f64, f64)> {
    let gamma = problem
        .locals
        .iter()
        .map(|f| constants(EstimatorKind::Full, f).map(|c| linear_stepsize(&c)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok((gamma, 0.99 / (gamma * problem.w_norm)))
}

fn destroy_config(problem: &DecentralizedProblem, iters: usize, log_every: usize) -> Result<RunConfig> {
    let (gamma, tau) = destroy_steps(problem)?;
    Ok(RunConfig {
        gamma: Some(gamma),
        tau: Some(tau),
        log_every,
        keep_iterates: true,
        ..RunConfig::new(SolverKind::Destroy, iters)
    })
}

fn destroy_rate() -> Outcome {
    let problem = ring_network()?;
    let x_star = solve_decentralized_reference(&problem)?;
    let trace = run_destroy(&problem, &destroy_config(&problem, 3000, 1)?, Some(&x_star))?;
    let locals_c = constants(EstimatorKind::Full, &problem.locals[0])?;
    let c = problem.locals[1..].iter().try_fold(locals_c, |acc, f| {
        constants(EstimatorKind::Full, f).map(|c| if c.alpha > acc.alpha { c } else { acc })
    })?;
    let report = verify_destroy_rate(&problem, &[trace], &x_star, &c)?;
    Ok((report.passed() && !report.out_of_theorem, summarize(&report)))
}

// ---- solvers ----

fn cross_solver_agreement() -> Outcome {
    let start = Instant::now();
    let spec = cross_solver_instance()?;
    let solvers = [SolverKind::Pddy, SolverKind::Pd3o, SolverKind::CondatVu31, SolverKind::CondatVu32];
    let mut xs = Vec::new();
    let mut worst_kkt: f64 = 0.0;
    let mut iters = Vec::new();
    for solver in solvers {
        let config = RunConfig { stop_kkt: Some(1e-10), log_every: 100, ..RunConfig::new(solver, 200_000) };
        let trace = run(&spec, &config, None)?;
        let last = trace.last();
        worst_kkt = worst_kkt.max(last.kkt_primal.max(last.kkt_dual));
        iters.push(format!("{} {}", solver.name(), last.k));
        xs.push(trace.final_state.primal());
    }
    let mut worst_gap: f64 = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            worst_gap = worst_gap.max((&xs[i] - &xs[j]).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst_gap <= 1e-6 && worst_kkt <= 1e-8 && secs < CROSS_SOLVER_BUDGET_S,
        format!(
            "max ‖x − x′‖ {worst_gap:.2e}, max kkt {worst_kkt:.2e}, {secs:.1} s; iterations: {}",
            iters.join(", ")
        ),
    ))
}

fn destroy_consensus() -> Outcome {
    let problem = ring_network()?;
    let x_star = solve_decentralized_reference(&problem)?;
    let config = RunConfig { keep_iterates: false, ..destroy_config(&problem, 20_000, 100)? };
    let trace = run_destroy(&problem, &config, Some(&x_star))?;
    let dist = trace.last().dist_to_oracle.ok_or(Error::MissingOracle)?;
    Ok((dist <= 1e-7, format!("max_i ‖x_i − x*‖ = {dist:.2e} after {} rounds (tol 1e-7)", trace.last().k)))
}

fn destroy_is_prilico() -> Outcome {
    let problem = ring_network()?;
    let (gamma, tau) = destroy_steps(&problem)?;
    let (n, d) = (problem.nodes(), problem.block_dim);
    let zeros = vec![Vector::zeros(d); n];
    let mut state = DestroyState::new(&problem, zeros.clone(), zeros.clone(), gamma, tau, false)?;
    let mut ests = problem.estimators(EstimatorKind::Full, &zeros, 0)?;
    let mut oracle_ests = problem.estimators(EstimatorKind::Full, &zeros, 0)?;
    let w = problem.lifted_operator();
    let c = Vector::zeros(n * d);
    let mut pri = PriLicoState { x: Vector::zeros(n * d), a: Vector::zeros(n * d), gamma, tau };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        state = destroy_step(&problem, &mut ests, &state)?;
        let mut oracle = NodeOracles { locals: &problem.locals, ests: &mut oracle_ests };
        pri = prilicosgd_step(&w, &c, &mut oracle, &pri)?;
        worst = worst
            .max(rel_diff(&pri.x, &DestroyState::stacked(&state.x)))
            .max(rel_diff(&pri.a, &DestroyState::stacked(&state.a)));
    }
    Ok((worst <= 1e-12, format!("max rel diff over 1000 rounds {worst:.2e} (tol 1e-12)")))
}

// ---- infrastructure ----

fn firm_nonexpansive() -> Outcome {
    let dim = 7;
    let mut r = rng(71);
    let mut worst: f64 = 0.0;
    for h in prox_catalog(dim) {
        for gamma in [0.2, 1.0, 5.0] {
            for _ in 0..50 {
                let a = gaussian_vec(&mut r, dim) * 2.0;
                let b = gaussian_vec(&mut r, dim) * 2.0;
                let pa = h.prox(&a, gamma)?;
                let pb = h.prox(&b, gamma)?;
                let dp = &pa - &pb;
                let excess = dp.norm_squared() - dp.dot(&(&a - &b));
                worst = worst.max(excess / (&a - &b).norm_squared());
            }
        }
    }
    Ok((worst <= 1e-12, format!("max (‖Pa−Pb‖² − ⟨Pa−Pb, a−b⟩)/‖a−b‖² = {worst:.2e}")))
}

fn spectral_vs_dense() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (name, op) in operator_catalog()? {
        if op.is_zero() {
            continue;
        }
        let info = op.spectral_info(1e-12, 1_000_000)?;
        let dense = op.to_dense();
        // GossipKron reports the spectrum of Ŵ ⊗ I itself
        let gram = if matches!(op, LinOp::GossipKron { .. }) { dense } else { dense.transpose() * &dense };
        let eig: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().cloned().collect();
        let top = eig.iter().cloned().fold(0.0, f64::max);
        let omega = eig.iter().cloned().filter(|&e| e > 1e-10 * top).fold(f64::INFINITY, f64::min);
        let e_norm = (info.op_norm_sq - top).abs() / top;
        let e_omega = info.omega.map_or(f64::INFINITY, |w| (w - omega).abs() / omega);
        worst = worst.max(e_norm).max(e_omega);
        lines.push(format!("{name} {:.1e}/{:.1e}", e_norm, e_omega));
    }
    Ok((worst <= 1e-6, format!("rel err ‖L‖²/ω: {} (tol 1e-6)", lines.join(", "))))
}

const LIBSVM_SAMPLE: &str = "1 1:0.5 3:2\n0\n-1 2:-1.25 4:3e-7\n1 1:1 2:2 3:3 4:4\n0 4:0.1\n";

fn libsvm_round_trip() -> Outcome {
    let (w, labels) = parse_libsvm(LIBSVM_SAMPLE, Some(4))?;
    let text = format_libsvm(&w, &labels)?;
    let (w2, labels2) = parse_libsvm(&text, Some(4))?;
    let again = format_libsvm(&w2, &labels2)?;
    let passed = text == again && w == w2 && labels == labels2 && w.nrows() == 5;
    Ok((passed, format!("{} lines, {} bytes canonical", w.nrows(), text.len())))
}

fn scratch_dir(tag: &str) -> Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("pdsplit-certify-{}-{tag}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// CSV text with the `wall_ns` column removed.
pub fn strip_wall_ns(csv_text: &str) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| &headers[i] != "wall_ns").collect();
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(keep.iter().map(|&i| &headers[i]))?;
    for rec in reader.records() {
        let rec = rec?;
        writer.write_record(keep.iter().map(|&i| &rec[i]))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn traces_in(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().expect("file").to_string_lossy().into_owned();
            out.push((name, strip_wall_ns(&fs::read_to_string(&path)?)?));
        }
    }
    out.sort();
    Ok(out)
}

fn run_determinism() -> Outcome {
    let bench = BenchSpec {
        id: "determinism".into(),
        problem: BenchProblem::FusedLasso { n: 40, p: 20, seed: 5, lambda: 0.1, lambda1: 1.0 },
        solvers: vec![SolverKind::Pd3o, SolverKind::Pddy],
        estimators: vec![EstimatorKind::Full, EstimatorKind::Lsvrg { p: 0.05 }, EstimatorKind::Saga],
        iters: 300,
        seeds: vec![1, 2],
        log_every: 10,
        gamma: None,
        tau: None,
        grid: None,
        oracle: true,
    };
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let dir = scratch_dir(tag)?;
        bench::run_bench(&bench, Some(&dir))?;
        outputs.push(traces_in(&dir)?);
        fs::remove_dir_all(&dir)?;
    }
    // a trace written straight from a run must match too
    let spec = cross_solver_instance()?;
    let config = RunConfig { estimator: EstimatorKind::Saga, seed: 4, ..RunConfig::new(SolverKind::Pd3o, 100) };
    let dir = scratch_dir("c")?;
    let p1 = write_trace(&run(&spec, &config, None)?, &dir, "one")?;
    let p2 = write_trace(&run(&spec, &config, None)?, &dir, "two")?;
    let same_direct = strip_wall_ns(&fs::read_to_string(p1)?)? == strip_wall_ns(&fs::read_to_string(p2)?)?;
    fs::remove_dir_all(&dir)?;
    let files = outputs[0].len();
    Ok((
        files > 0 && outputs[0] == outputs[1] && same_direct,
        format!("{files} bench traces compared byte for byte without wall_ns; direct rerun identical: {same_direct}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::Identities, Suite::Estimators, Suite::Rates, Suite::Solvers, Suite::Infrastructure, Suite::All] {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn every_criterion_has_a_check() {
        for c in 1..=10u8 {
            assert!(CHECKS.iter().any(|k| k.criterion == c), "criterion {c}");
        }
    }

    #[test]
    fn strip_wall_ns_drops_column() {
        let s = strip_wall_ns("k,objective,wall_ns\n0,1.5,123\n1,1.25,456\n").unwrap();
        assert_eq!(s, "k,objective\n0,1.5\n1,1.25\n");
    }

    #[test]
    fn mean_se_known_values() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
