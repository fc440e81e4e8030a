use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{constants, max_stepsize, EstimatorKind, EstimatorState, StepsizeMode};
use crate::linops::Vector;
use crate::problem::{ProblemSpec, SaddlePoint};

use super::condat_vu::{condat_vu_step, CondatVuState};
use super::dys::CondatVuForm;
use super::linear::{
    constraint_rhs, destroy_step, licosgd_step, DecentralizedProblem, DestroyState, LicoState,
};
use super::primal_dual::{pd3o_step, pddy_step, Pd3oState, PddyState};
use super::Sampled;

/// A run aborts once any iterate norm exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Iterations between two checks of the LiCoSGD feasibility monitor.
const FEASIBILITY_WINDOW: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "pddy")]
    Pddy,
    #[serde(rename = "pd3o")]
    Pd3o,
    #[serde(rename = "condat_vu_31")]
    CondatVu31,
    #[serde(rename = "condat_vu_32")]
    CondatVu32,
    #[serde(rename = "licosgd")]
    LiCoSgd,
    #[serde(rename = "destroy")]
    Destroy,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Pddy => "pddy",
            SolverKind::Pd3o => "pd3o",
            SolverKind::CondatVu31 => "condat_vu_31",
            SolverKind::CondatVu32 => "condat_vu_32",
            SolverKind::LiCoSgd => "licosgd",
            SolverKind::Destroy => "destroy",
        }
    }

    fn is_condat_vu(&self) -> bool {
        matches!(self, SolverKind::CondatVu31 | SolverKind::CondatVu32)
    }
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::Full
}

fn default_log_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub solver: SolverKind,
    /// Defaults to the largest stepsize of the ergodic theorem (PDDY, PD3O,
    /// LiCoSGD, DESTROY) or to a step satisfying the Condat-Vu condition.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Defaults to `0.99/(γ‖L‖²)`.
    #[serde(default)]
    pub tau: Option<f64>,
    pub iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Turns stepsize-condition violations into warnings.
    #[serde(default)]
    pub allow_out_of_theorem: bool,
    /// Stop at the first logged iteration whose KKT residuals are both below
    /// this.
    #[serde(default)]
    pub stop_kkt: Option<f64>,
    /// Store iterates and averages in every record.
    #[serde(default)]
    pub keep_iterates: bool,
}

impl RunConfig {
    pub fn new(solver: SolverKind, iters: usize) -> Self {
        RunConfig {
            solver,
            gamma: None,
            tau: None,
            iters,
            seed: 0,
            estimator: EstimatorKind::Full,
            log_every: 1,
            allow_out_of_theorem: false,
            stop_kkt: None,
            keep_iterates: false,
        }
    }
}

/// One logged iteration. `k` counts completed iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub x: Option<Vector>,
    pub y: Option<Vector>,
    /// The DYS primal variable (PDDY, PD3O).
    pub p: Option<Vector>,
    pub x_avg: Option<Vector>,
    pub y_avg: Option<Vector>,
    /// PDDY only.
    pub s_avg: Option<Vector>,
    pub objective: Option<f64>,
    /// `ℒ(x̄, y*) − ℒ(x*, ȳ)` at the ergodic averages.
    pub duality_gap: Option<f64>,
    /// `D_F(x̄) + D_{H*}(ȳ) + D_R(s̄)` (PDDY) or `D_F + D_R + D_{H*}` at
    /// `(x̄, ȳ)` (others).
    pub bregman_gap: Option<f64>,
    pub kkt_primal: f64,
    pub kkt_dual: f64,
    pub dist_to_oracle: Option<f64>,
    pub sigma_sq: Option<f64>,
    pub wall_ns: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub iteration: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolverState {
    Pddy(PddyState),
    Pd3o(Pd3oState),
    CondatVu(CondatVuState),
    LiCo(LicoState),
    Destroy(DestroyState),
}

impl SolverState {
    /// The latest primal iterate (`x^k`; node copies stacked for DESTROY).
    pub fn primal(&self) -> Vector {
        match self {
            SolverState::Pddy(s) => s.last_x.clone().unwrap_or_else(|| s.p.clone()),
            SolverState::Pd3o(s) => s.last_x.clone().unwrap_or_else(|| s.p.clone()),
            SolverState::CondatVu(s) => s.x.clone(),
            SolverState::LiCo(s) => s.x.clone(),
            SolverState::Destroy(s) => DestroyState::stacked(&s.x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    /// The configuration with resolved stepsizes.
    pub config: RunConfig,
    pub records: Vec<TraceRecord>,
    pub diverged: Option<Divergence>,
    pub warnings: Vec<String>,
    pub final_state: SolverState,
    pub final_estimator: Vec<EstimatorState>,
}

impl RunTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial record")
    }
}

/// `(γ, τ)` for a run: explicit values win, defaults fill the rest.
pub fn resolve_steps(spec: &ProblemSpec, config: &RunConfig) -> Result<(f64, f64)> {
    let l2 = spec.op_norm_sq();
    let nu = spec.f.nu().max(f64::MIN_POSITIVE);
    if config.solver.is_condat_vu() {
        // τ primal, γ dual: ν/2 < 1/τ − γ‖L‖²
        let (gamma, tau) = match (config.gamma, config.tau) {
            (Some(g), Some(t)) => (g, t),
            (None, Some(t)) => (if l2 > 0.0 { 0.99 * (1.0 / t - nu / 2.0) / l2 } else { 1.0 }, t),
            (Some(g), None) => (g, 0.99 / (nu / 2.0 + g * l2)),
            (None, None) => {
                let t = 1.0 / nu;
                (if l2 > 0.0 { 0.99 * nu / (2.0 * l2) } else { 1.0 }, t)
            }
        };
        return Ok((gamma, tau));
    }
    let gamma = match config.gamma {
        Some(g) => g,
        None => match config.estimator {
            EstimatorKind::Minibatch { .. } => 0.01 / nu,
            kind => max_stepsize(&constants(kind, &spec.f)?, StepsizeMode::Ergodic),
        },
    };
    let tau = match config.tau {
        Some(t) => t,
        None if l2 > 0.0 => 0.99 / (gamma * l2),
        None => 1.0,
    };
    Ok((gamma, tau))
}

fn default_state(spec: &ProblemSpec, config: &RunConfig, gamma: f64, tau: f64) -> Result<SolverState> {
    let x0 = Vector::zeros(spec.primal_dim());
    let y0 = Vector::zeros(spec.dual_dim());
    let allow = config.allow_out_of_theorem;
    Ok(match config.solver {
        SolverKind::Pddy => SolverState::Pddy(PddyState::new(spec, x0, y0, gamma, tau, allow)?),
        SolverKind::Pd3o => SolverState::Pd3o(Pd3oState::new(spec, x0, y0, gamma, tau, allow)?),
        SolverKind::CondatVu31 | SolverKind::CondatVu32 => {
            let form = if config.solver == SolverKind::CondatVu31 { CondatVuForm::Alg31 } else { CondatVuForm::Alg32 };
            SolverState::CondatVu(CondatVuState::new(spec, form, x0, y0, gamma, tau, allow)?)
        }
        SolverKind::LiCoSgd => SolverState::LiCo(LicoState::new(spec, x0, y0, gamma, tau, allow)?),
        SolverKind::Destroy => {
            return Err(Error::InvalidParameter("DESTROY runs on a DecentralizedProblem; use run_destroy".into()))
        }
    })
}

/// Runs from the default start `p⁰ = 0, y⁰ = 0`.
pub fn run(spec: &ProblemSpec, config: &RunConfig, reference: Option<&SaddlePoint>) -> Result<RunTrace> {
    let (gamma, tau) = resolve_steps(spec, config)?;
    let init = default_state(spec, config, gamma, tau)?;
    run_from(spec, config, reference, init)
}

/// Running sum based average.
#[derive(Default)]
struct Average {
    mean: Option<Vector>,
    count: usize,
}

impl Average {
    fn push(&mut self, v: &Vector) {
        self.count += 1;
        match &mut self.mean {
            None => self.mean = Some(v.clone()),
            Some(m) => *m += (v - &*m) / self.count as f64,
        }
    }
}

/// Primal/dual view of a solver state for logging.
struct View {
    x: Vector,
    y: Vector,
    p: Option<Vector>,
}

fn check_finite(k: usize, vs: &[&Vector]) -> Option<Divergence> {
    for v in vs {
        if v.iter().any(|e| !e.is_finite()) {
            return Some(Divergence { iteration: k, reason: "non-finite iterate".into() });
        }
        let n = v.norm();
        if n > DIVERGENCE_NORM {
            return Some(Divergence { iteration: k, reason: format!("iterate norm {n:e} exceeds {DIVERGENCE_NORM:e}") });
        }
    }
    None
}

/// Resumes from `init`; `config.solver` must match the state.
pub fn run_from(
    spec: &ProblemSpec,
    config: &RunConfig,
    reference: Option<&SaddlePoint>,
    init: SolverState,
) -> Result<RunTrace> {
    if config.solver.is_condat_vu() && !config.estimator.is_deterministic() {
        return Err(Error::StochasticCondatVu);
    }
    if let Some(r) = reference {
        r.validate(spec)?;
    }
    let (gamma, tau) = match &init {
        SolverState::Pddy(s) => (s.gamma, s.tau),
        SolverState::Pd3o(s) => (s.gamma, s.tau),
        SolverState::CondatVu(s) => (s.gamma, s.tau),
        SolverState::LiCo(s) => (s.gamma, s.tau),
        SolverState::Destroy(_) => {
            return Err(Error::InvalidParameter("DESTROY runs on a DecentralizedProblem; use run_destroy".into()))
        }
    };
    let mut resolved = config.clone();
    resolved.gamma = Some(gamma);
    resolved.tau = Some(tau);
    // primal and dual prox steps used by the KKT residual
    let (kkt_g, kkt_t) = if config.solver.is_condat_vu() { (tau, gamma) } else { (gamma, tau) };

    let x_init = match &init {
        SolverState::Pddy(s) => s.p.clone(),
        SolverState::Pd3o(s) => spec.r.prox(&s.p, s.gamma)?,
        SolverState::CondatVu(s) => s.x.clone(),
        SolverState::LiCo(s) => s.x.clone(),
        SolverState::Destroy(_) => unreachable!(),
    };
    let mut est = EstimatorState::new(config.estimator, &spec.f, &x_init, config.seed)?;
    let mut state = init;
    let (mut xa, mut ya, mut sa) = (Average::default(), Average::default(), Average::default());
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut diverged = None;
    let start = Instant::now();
    let log_every = config.log_every.max(1);
    let lico_b = if config.solver == SolverKind::LiCoSgd { Some(constraint_rhs(spec)?.clone()) } else { None };
    let mut last_feas: Option<f64> = None;
    let mut warned = false;

    let view = |state: &SolverState, x_hint: &Vector| -> View {
        match state {
            SolverState::Pddy(s) => View { x: s.last_x.clone().unwrap_or_else(|| x_hint.clone()), y: s.y.clone(), p: Some(s.p.clone()) },
            SolverState::Pd3o(s) => View { x: s.last_x.clone().unwrap_or_else(|| x_hint.clone()), y: s.y.clone(), p: Some(s.p.clone()) },
            SolverState::CondatVu(s) => View { x: s.x.clone(), y: s.y.clone(), p: None },
            SolverState::LiCo(s) => View { x: s.x.clone(), y: s.y.clone(), p: None },
            SolverState::Destroy(_) => unreachable!(),
        }
    };

    let make_record = |k: usize,
                       v: &View,
                       xa: &Average,
                       ya: &Average,
                       sa: &Average,
                       est: &EstimatorState,
                       wall: u64|
     -> Result<TraceRecord> {
        let (kkt_primal, kkt_dual) = spec.kkt_residual(&v.x, &v.y, kkt_g, kkt_t)?;
        let objective = spec.objective(&v.x)?.finite();
        let mut duality_gap = None;
        let mut bregman = None;
        let mut dist = None;
        let mut sigma = None;
        if let Some(star) = reference {
            dist = Some((&v.x - &star.x).norm());
            sigma = Some(est.sigma_sq(&spec.f, Some(&star.x))?);
            if let (Some(xm), Some(ym)) = (&xa.mean, &ya.mean) {
                duality_gap = spec.duality_gap(xm, ym, star)?.finite();
                bregman = match spec.bregman_gap(xm, ym, star) {
                    Ok(t) => match &sa.mean {
                        Some(sm) => spec.bregman_gap(sm, ym, star).ok().map(|ts| t.d_f + t.d_hstar + ts.d_r),
                        None => Some(t.sum()),
                    },
                    Err(Error::Undefined(_)) => None,
                    Err(e) => return Err(e),
                };
            }
        }
        let keep = config.keep_iterates;
        Ok(TraceRecord {
            k,
            x: keep.then(|| v.x.clone()),
            y: keep.then(|| v.y.clone()),
            p: if keep { v.p.clone() } else { None },
            x_avg: if keep { xa.mean.clone() } else { None },
            y_avg: if keep { ya.mean.clone() } else { None },
            s_avg: if keep { sa.mean.clone() } else { None },
            objective,
            duality_gap,
            bregman_gap: bregman,
            kkt_primal,
            kkt_dual,
            dist_to_oracle: dist,
            sigma_sq: sigma,
            wall_ns: wall,
        })
    };

    records.push(make_record(0, &view(&state, &x_init), &xa, &ya, &sa, &est, 0)?);
    for k in 1..=config.iters {
        // LiCoSGD and Condat-Vu average the iterate they step from
        match &state {
            SolverState::CondatVu(s) => xa.push(&s.x),
            SolverState::LiCo(s) => xa.push(&s.x),
            _ => {}
        }
        let mut oracle = Sampled { f: &spec.f, est: &mut est };
        state = match &state {
            SolverState::Pddy(s) => {
                let n = pddy_step(spec, &mut oracle, s)?;
                xa.push(n.last_x.as_ref().expect("set by step"));
                sa.push(n.last_s.as_ref().expect("set by step"));
                ya.push(&n.y);
                SolverState::Pddy(n)
            }
            SolverState::Pd3o(s) => {
                let n = pd3o_step(spec, &mut oracle, s)?;
                xa.push(n.last_x.as_ref().expect("set by step"));
                ya.push(&n.y);
                SolverState::Pd3o(n)
            }
            SolverState::CondatVu(s) => {
                let n = condat_vu_step(spec, s)?;
                ya.push(&n.y);
                SolverState::CondatVu(n)
            }
            SolverState::LiCo(s) => {
                let n = licosgd_step(spec, &mut oracle, s)?;
                ya.push(&n.y);
                SolverState::LiCo(n)
            }
            SolverState::Destroy(_) => unreachable!(),
        };
        let v = view(&state, &x_init);
        let mut check: Vec<&Vector> = vec![&v.x, &v.y];
        if let Some(p) = &v.p {
            check.push(p);
        }
        if let Some(d) = check_finite(k, &check) {
            diverged = Some(d);
            break;
        }
        if let Some(b) = &lico_b {
            if k % FEASIBILITY_WINDOW == 0 {
                let feas = (spec.l.apply(&v.x)? - b).norm();
                if let Some(prev) = last_feas {
                    if feas >= prev && feas > 1e-10 && !warned {
                        let msg = format!(
                            "‖Lx − b‖ did not decrease over iterations {}..{k} ({prev:e} → {feas:e}); b may lie outside ran(L)",
                            k - FEASIBILITY_WINDOW
                        );
                        warn!("{msg}");
                        warnings.push(msg);
                        warned = true;
                    }
                }
                last_feas = Some(feas);
            }
        }
        if k % log_every == 0 || k == config.iters {
            let rec = make_record(k, &v, &xa, &ya, &sa, &est, start.elapsed().as_nanos() as u64)?;
            let done = config.stop_kkt.is_some_and(|t| rec.kkt_primal.max(rec.kkt_dual) <= t);
            records.push(rec);
            if done {
                break;
            }
        }
    }
    Ok(RunTrace { config: resolved, records, diverged, warnings, final_state: state, final_estimator: vec![est] })
}

/// DESTROY from `x_i⁰ = 0`, `a_i⁰ = 0`. Records hold the stacked copies; the
/// KKT pair is `(‖∇F(x̃) + a‖, ‖(Ŵ ⊗ I)x̃‖)` and the distance to the oracle is
/// `max_i ‖x_i − x*‖`.
pub fn run_destroy(problem: &DecentralizedProblem, config: &RunConfig, x_star: Option<&Vector>) -> Result<RunTrace> {
    let n = problem.nodes();
    let d = problem.block_dim;
    let nu = problem.locals.iter().map(|f| f.nu()).fold(0.0, f64::max);
    let gamma = match config.gamma {
        Some(g) => g,
        None => match config.estimator {
            EstimatorKind::Minibatch { .. } => 0.01 / nu,
            kind => problem
                .locals
                .iter()
                .map(|f| constants(kind, f).map(|c| max_stepsize(&c, StepsizeMode::Ergodic)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        },
    };
    let tau = config.tau.unwrap_or(if problem.w_norm > 0.0 { 0.99 / (gamma * problem.w_norm) } else { 1.0 });
    let x0 = vec![Vector::zeros(d); n];
    let mut state = DestroyState::new(problem, x0.clone(), vec![Vector::zeros(d); n], gamma, tau, config.allow_out_of_theorem)?;
    let mut ests = problem.estimators(config.estimator, &x0, config.seed)?;
    let mut resolved = config.clone();
    resolved.gamma = Some(gamma);
    resolved.tau = Some(tau);
    let w = problem.lifted_operator();
    let start = Instant::now();
    let mut xa = Average::default();
    let mut records = Vec::new();
    let mut diverged = None;

    let record = |k: usize, st: &DestroyState, xa: &Average, ests: &[EstimatorState], wall: u64| -> Result<TraceRecord> {
        let xs = DestroyState::stacked(&st.x);
        let mut grad_plus_a = Vector::zeros(n * d);
        for i in 0..n {
            grad_plus_a.rows_mut(i * d, d).copy_from(&(problem.locals[i].grad(&st.x[i])? + &st.a[i]));
        }
        let dist = x_star.map(|xs_| st.x.iter().map(|xi| (xi - xs_).norm()).fold(0.0, f64::max));
        let sigma = match x_star {
            Some(xs_) => Some(
                problem.locals.iter().zip(ests).map(|(f, e)| e.sigma_sq(f, Some(xs_))).sum::<Result<f64>>()?,
            ),
            None => None,
        };
        let keep = config.keep_iterates;
        Ok(TraceRecord {
            k,
            x: keep.then(|| xs.clone()),
            y: keep.then(|| DestroyState::stacked(&st.a)),
            p: None,
            x_avg: if keep { xa.mean.clone() } else { None },
            y_avg: None,
            s_avg: None,
            objective: Some(problem.lifted_value(&st.x)?),
            duality_gap: None,
            bregman_gap: None,
            kkt_primal: grad_plus_a.norm(),
            kkt_dual: w.apply(&xs)?.norm(),
            dist_to_oracle: dist,
            sigma_sq: sigma,
            wall_ns: wall,
        })
    };

    records.push(record(0, &state, &xa, &ests, 0)?);
    let log_every = config.log_every.max(1);
    for k in 1..=config.iters {
        xa.push(&DestroyState::stacked(&state.x));
        state = destroy_step(problem, &mut ests, &state)?;
        let refs: Vec<&Vector> = state.x.iter().chain(&state.a).collect();
        if let Some(dv) = check_finite(k, &refs) {
            diverged = Some(dv);
            break;
        }
        if k % log_every == 0 || k == config.iters {
            let rec = record(k, &state, &xa, &ests, start.elapsed().as_nanos() as u64)?;
            let done = config.stop_kkt.is_some_and(|t| rec.kkt_primal.max(rec.kkt_dual) <= t);
            records.push(rec);
            if done {
                break;
            }
        }
    }
    Ok(RunTrace {
        config: resolved,
        records,
        diverged,
        warnings: Vec::new(),
        final_state: SolverState::Destroy(state),
        final_estimator: ests,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Writes `<stem>.csv` (one row per record) and `<stem>.json` (resolved
/// configuration, divergence and warnings) into `dir`. Returns the CSV path.
pub fn write_trace(trace: &RunTrace, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "k",
        "objective",
        "duality_gap",
        "kkt_primal",
        "kkt_dual",
        "dist_to_oracle",
        "sigma_sq",
        "wall_ns",
    ])?;
    for r in &trace.records {
        w.write_record([
            r.k.to_string(),
            opt(r.objective),
            opt(r.duality_gap),
            format!("{:e}", r.kkt_primal),
            format!("{:e}", r.kkt_dual),
            opt(r.dist_to_oracle),
            opt(r.sigma_sq),
            r.wall_ns.to_string(),
        ])?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Header<'a> {
        config: &'a RunConfig,
        records: usize,
        diverged: &'a Option<Divergence>,
        warnings: &'a [String],
    }
    let header = Header {
        config: &trace.config,
        records: trace.records.len(),
        diverged: &trace.diverged,
        warnings: &trace.warnings,
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&header)?)?;
    Ok(csv_path)
}
