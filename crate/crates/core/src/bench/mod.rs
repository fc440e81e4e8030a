//! Desk-scale problem generators, libsvm ingestion, benchmark runs and
//! stepsize grid search.

mod libsvm;

pub use libsvm::{binary_labels, format_libsvm, parse_libsvm, read_libsvm, write_libsvm};

use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{constants, max_stepsize, EstimatorKind, StepsizeMode};
use crate::functions::{ProxFn, SmoothFn};
use crate::linops::{LinOp, Vector};
use crate::oracle::{solve_composite_reference, solve_decentralized_reference, solve_dense_reference, DEFAULT_REFERENCE_ITERS};
use crate::problem::{ProblemSpec, SaddlePoint};
use crate::solvers::{run, run_destroy, write_trace, DecentralizedProblem, RunConfig, RunTrace, SolverKind};

/// Largest `n` or `p` a generator accepts.
pub const DESK_CAP: usize = 2000;

/// Attempts at drawing a connected Erdős–Rényi graph before giving up.
const ERDOS_ATTEMPTS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Graph {
    Ring,
    Path,
    Complete,
    Erdos { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchProblem {
    /// `½‖Wx − a‖² + (λ/2)‖x‖² + λ₁‖Dx‖₁` with the ridge folded into `F`.
    FusedLasso { n: usize, p: usize, seed: u64, lambda: f64, lambda1: f64 },
    /// Mean logistic loss `+ (λ/2)‖x‖² + λ₁ Σ_j ‖x_{G_j}‖` with overlapping
    /// groups. Without explicit groups `p` must be a square and each group is
    /// a pixel of the `√p × √p` grid with its 4-neighbours.
    GroupLassoLogistic {
        n: usize,
        p: usize,
        #[serde(default)]
        groups: Option<Vec<Vec<usize>>>,
        lambda: f64,
        lambda1: f64,
        seed: u64,
    },
    /// `½‖Wx − a‖² + λ‖x‖₁ + λ₁ Σ_i ‖L_i x‖` with `m` Gaussian blocks `L_i`.
    /// `λ` and `λ₁` default to `ν/(10n)` and `2ν/(nm)`.
    PcaLasso {
        n: usize,
        p: usize,
        m: usize,
        rows_per_block: usize,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        lambda1: Option<f64>,
        seed: u64,
    },
    /// Node `i` holds `½‖W_i x − a_i‖² + (ridge/2)‖x‖²` with
    /// `W_i ∈ R^{(d+2)×d}`; the gossip matrix is the graph Laplacian.
    DecentralizedQuadratic {
        nodes: usize,
        graph: Graph,
        d: usize,
        seed: u64,
        #[serde(default = "default_node_ridge")]
        ridge: f64,
    },
}

fn default_node_ridge() -> f64 {
    0.1
}

impl BenchProblem {
    pub fn name(&self) -> &'static str {
        match self {
            BenchProblem::FusedLasso { .. } => "fused_lasso",
            BenchProblem::GroupLassoLogistic { .. } => "group_lasso_logistic",
            BenchProblem::PcaLasso { .. } => "pca_lasso",
            BenchProblem::DecentralizedQuadratic { .. } => "decentralized_quadratic",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Instance {
    Composite(ProblemSpec),
    Decentralized(DecentralizedProblem),
}

/// A generated problem with the raw data behind it.
#[derive(Clone, Debug)]
pub struct Generated {
    pub instance: Instance,
    /// Smoothness constant of `F` (largest local one for decentralized
    /// problems).
    pub nu: f64,
    /// `(name, W, targets)` tables, written in libsvm format by `gen-data`.
    pub datasets: Vec<(String, DMatrix<f64>, Vector)>,
    /// Other dense matrices (the `L_i` stack, the gossip matrix).
    pub matrices: Vec<(String, DMatrix<f64>)>,
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // column-major fill order keeps the draw sequence fixed
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn check_caps(dims: &[usize], penalties: &[f64]) -> Result<()> {
    if let Some(&d) = dims.iter().find(|&&d| d == 0 || d > DESK_CAP) {
        return Err(Error::InvalidParameter(format!("dimension {d} outside 1..={DESK_CAP}")));
    }
    if let Some(&l) = penalties.iter().find(|&&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter(format!("penalty weight must be ≥ 0, got {l}")));
    }
    Ok(())
}

/// Pixel `(r, c)` of a `side × side` grid with its horizontal and vertical
/// neighbours: groups of 3, 4 or 5 coordinates.
pub fn grid_groups(side: usize) -> Vec<Vec<usize>> {
    let mut groups = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let mut g = vec![r * side + c];
            if r > 0 {
                g.push((r - 1) * side + c);
            }
            if r + 1 < side {
                g.push((r + 1) * side + c);
            }
            if c > 0 {
                g.push(r * side + c - 1);
            }
            if c + 1 < side {
                g.push(r * side + c + 1);
            }
            g.sort_unstable();
            groups.push(g);
        }
    }
    groups
}

/// Laplacian of a graph on `n` nodes; always connected.
pub fn laplacian(graph: Graph, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut adj = DMatrix::<f64>::zeros(n, n);
    let connect = |adj: &mut DMatrix<f64>, i: usize, j: usize| {
        adj[(i, j)] = 1.0;
        adj[(j, i)] = 1.0;
    };
    match graph {
        Graph::Ring => {
            for i in 0..n {
                if n > 1 && (i + 1) % n != i {
                    connect(&mut adj, i, (i + 1) % n);
                }
            }
        }
        Graph::Path => {
            for i in 0..n.saturating_sub(1) {
                connect(&mut adj, i, i + 1);
            }
        }
        Graph::Complete => {
            for i in 0..n {
                for j in i + 1..n {
                    connect(&mut adj, i, j);
                }
            }
        }
        Graph::Erdos { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParameter(format!("edge probability must lie in (0, 1], got {p}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for attempt in 0..ERDOS_ATTEMPTS {
                rng.set_stream(attempt);
                adj.fill(0.0);
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random_bool(p) {
                            connect(&mut adj, i, j);
                        }
                    }
                }
                if connected(&adj) {
                    break;
                }
                if attempt + 1 == ERDOS_ATTEMPTS {
                    return Err(Error::DisconnectedGraph);
                }
            }
        }
    }
    let deg = DMatrix::from_diagonal(&Vector::from_fn(n, |i, _| adj.row(i).sum()));
    Ok(deg - adj)
}

fn connected(adj: &DMatrix<f64>) -> bool {
    let n = adj.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if adj[(i, j)] != 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Builds the problem; identical input gives identical output.
pub fn generate(problem: &BenchProblem) -> Result<Generated> {
    match problem {
        &BenchProblem::FusedLasso { n, p, seed, lambda, lambda1 } => {
            check_caps(&[n, p], &[lambda, lambda1])?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = gaussian(&mut rng, n, p);
            // piecewise constant signal with four levels
            let x_true = Vector::from_fn(p, |i, _| [0.0, 2.0, -1.0, 1.0][(4 * i) / p]);
            let noise = gaussian(&mut rng, n, 1).column(0) * 0.1;
            let a = &w * &x_true + noise;
            let f = SmoothFn::least_squares(w.clone(), a.clone())?.with_ridge(lambda)?;
            let nu = f.nu();
            let spec = ProblemSpec::new(f, ProxFn::Zero, ProxFn::L1 { lambda: lambda1 }, LinOp::FirstDifference(p))?;
            Ok(Generated {
                instance: Instance::Composite(spec),
                nu,
                datasets: vec![("data".into(), w, a)],
                matrices: vec![],
            })
        }
        BenchProblem::GroupLassoLogistic { n, p, groups, lambda, lambda1, seed } => {
            check_caps(&[*n, *p], &[*lambda, *lambda1])?;
            let groups = match groups {
                Some(g) => g.clone(),
                None => {
                    let side = (*p as f64).sqrt().round() as usize;
                    if side * side != *p {
                        return Err(Error::InvalidParameter(format!("p = {p} is not a square; pass groups explicitly")));
                    }
                    grid_groups(side)
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let w = gaussian(&mut rng, *n, *p);
            let x_true = gaussian(&mut rng, *p, 1).column(0).into_owned();
            let t = &w * &x_true;
            let labels = t.map(|ti| if rng.random_bool(1.0 / (1.0 + (-ti).exp())) { 1.0 } else { 0.0 });
            let l = LinOp::group_selector(*p, groups.clone())?;
            let blocks = groups.iter().map(|g| g.len()).collect();
            let f = SmoothFn::logistic_l2(w.clone(), labels.clone(), *lambda)?;
            let nu = f.nu();
            let spec = ProblemSpec::new(f, ProxFn::Zero, ProxFn::L2NormSum { blocks, lambda: *lambda1 }, l)?;
            Ok(Generated { instance: Instance::Composite(spec), nu, datasets: vec![("data".into(), w, labels)], matrices: vec![] })
        }
        &BenchProblem::PcaLasso { n, p, m, rows_per_block, lambda, lambda1, seed } => {
            check_caps(&[n, p, m, rows_per_block], &[lambda.unwrap_or(0.0), lambda1.unwrap_or(0.0)])?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = gaussian(&mut rng, n, p);
            let a = gaussian(&mut rng, n, 1).column(0).into_owned();
            let blocks = gaussian(&mut rng, m * rows_per_block, p);
            let f = SmoothFn::least_squares(w.clone(), a.clone())?;
            let nu = f.nu();
            let lambda = lambda.unwrap_or(nu / (10.0 * n as f64));
            let lambda1 = lambda1.unwrap_or(2.0 * nu / (n * m) as f64);
            let spec = ProblemSpec::new(
                f,
                ProxFn::L1 { lambda },
                ProxFn::L2NormSum { blocks: vec![rows_per_block; m], lambda: lambda1 },
                LinOp::Dense(blocks.clone()),
            )?;
            Ok(Generated {
                instance: Instance::Composite(spec),
                nu,
                datasets: vec![("data".into(), w, a)],
                matrices: vec![("blocks".into(), blocks)],
            })
        }
        &BenchProblem::DecentralizedQuadratic { nodes, graph, d, seed, ridge } => {
            check_caps(&[nodes, d], &[ridge])?;
            let gossip = laplacian(graph, nodes, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ERDOS_ATTEMPTS);
            let mut locals = Vec::with_capacity(nodes);
            let mut datasets = Vec::with_capacity(nodes);
            for i in 0..nodes {
                let w = gaussian(&mut rng, d + 2, d);
                let a = gaussian(&mut rng, d + 2, 1).column(0).into_owned();
                locals.push(SmoothFn::least_squares(w.clone(), a.clone())?.with_ridge(ridge)?);
                datasets.push((format!("node{i}"), w, a));
            }
            let nu = locals.iter().map(|f| f.nu()).fold(0.0, f64::max);
            let problem = DecentralizedProblem::new(locals, gossip.clone())?;
            Ok(Generated { instance: Instance::Decentralized(problem), nu, datasets, matrices: vec![("gossip".into(), gossip)] })
        }
    }
}

fn default_tau_products() -> Vec<f64> {
    vec![0.5, 0.9, 0.99]
}

/// `γ = 1.5^j/ν` for each exponent `j`, and `τ` set by
/// `τγ‖L‖² = product`. For Condat-Vu the exponent grid sets the primal step
/// and the product the dual one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub gamma_exponents: Vec<i32>,
    #[serde(default = "default_tau_products")]
    pub tau_products: Vec<f64>,
}

fn default_log_every() -> usize {
    10
}

/// One JSON document describing a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub id: String,
    pub problem: BenchProblem,
    pub solvers: Vec<SolverKind>,
    pub estimators: Vec<EstimatorKind>,
    pub iters: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Fixed stepsizes for `run`; defaults per solver when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub grid: Option<Grid>,
    /// Solve for a reference point first, so traces carry the gap,
    /// distance and `σ²` columns.
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub bench_id: String,
    pub solver: SolverKind,
    pub estimator: EstimatorKind,
    pub gamma: f64,
    pub tau: f64,
    pub seed: u64,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub final_kkt: (f64, f64),
    pub diverged: Option<String>,
    pub out_of_theorem: bool,
    pub trace_path: Option<String>,
}

fn supported(instance: &Instance, solver: SolverKind, est: EstimatorKind) -> Result<bool> {
    match (instance, solver) {
        (Instance::Decentralized(_), SolverKind::Destroy) => {}
        (Instance::Decentralized(_), s) => {
            return Err(Error::InvalidParameter(format!("decentralized problems run with destroy, not {}", s.name())))
        }
        (Instance::Composite(_), SolverKind::Destroy) => {
            return Err(Error::InvalidParameter("destroy needs a decentralized problem".into()))
        }
        (Instance::Composite(_), SolverKind::CondatVu31 | SolverKind::CondatVu32) if !est.is_deterministic() => {
            warn!("skipping {} with the {} estimator: Condat-Vu is deterministic only", solver.name(), est.name());
            return Ok(false);
        }
        _ => {}
    }
    Ok(true)
}

fn out_of_theorem(instance: &Instance, solver: SolverKind, est: EstimatorKind, gamma: f64, tau: f64) -> bool {
    let gamma_cap = |f: &SmoothFn| constants(est, f).map(|c| max_stepsize(&c, StepsizeMode::Ergodic)).ok();
    match instance {
        Instance::Composite(spec) => {
            let l2 = spec.op_norm_sq();
            match solver {
                SolverKind::CondatVu31 | SolverKind::CondatVu32 => 1.0 / tau - gamma * l2 <= spec.f.nu() / 2.0,
                _ => gamma_cap(&spec.f).is_none_or(|cap| gamma > cap) || gamma * tau * l2 >= 1.0,
            }
        }
        Instance::Decentralized(p) => {
            p.locals.iter().any(|f| gamma_cap(f).is_none_or(|cap| gamma > cap)) || gamma * tau * p.w_norm >= 1.0
        }
    }
}

/// Solution the traces are measured against.
enum Reference {
    Saddle(SaddlePoint),
    Consensus(Vector),
}

fn reference(bench: &BenchSpec, instance: &Instance) -> Result<Option<Reference>> {
    if !bench.oracle {
        return Ok(None);
    }
    Ok(Some(match instance {
        Instance::Composite(spec) => {
            let sol = match solve_dense_reference(spec) {
                Ok(sol) => sol,
                Err(Error::InvalidParameter(_)) => solve_composite_reference(spec, DEFAULT_REFERENCE_ITERS)?,
                Err(e) => return Err(e),
            };
            Reference::Saddle(sol.saddle())
        }
        Instance::Decentralized(p) => Reference::Consensus(solve_decentralized_reference(p)?),
    }))
}

fn execute(instance: &Instance, config: &RunConfig, refr: Option<&Reference>) -> Result<RunTrace> {
    let saddle = match refr {
        Some(Reference::Saddle(s)) => Some(s),
        _ => None,
    };
    let consensus = match refr {
        Some(Reference::Consensus(x)) => Some(x),
        _ => None,
    };
    match instance {
        Instance::Composite(spec) => run(spec, config, saddle),
        Instance::Decentralized(p) => run_destroy(p, config, consensus),
    }
}

fn record(bench: &BenchSpec, trace: &RunTrace, out_of_theorem: bool, path: Option<String>) -> RunRecord {
    let last = trace.last();
    RunRecord {
        bench_id: bench.id.clone(),
        solver: trace.config.solver,
        estimator: trace.config.estimator,
        gamma: trace.config.gamma.expect("resolved"),
        tau: trace.config.tau.expect("resolved"),
        seed: trace.config.seed,
        iterations: last.k,
        final_objective: if trace.diverged.is_some() { None } else { last.objective },
        final_kkt: (last.kkt_primal, last.kkt_dual),
        diverged: trace.diverged.as_ref().map(|d| format!("iteration {}: {}", d.iteration, d.reason)),
        out_of_theorem,
        trace_path: path,
    }
}

fn trace_stem(bench: &BenchSpec, config: &RunConfig) -> String {
    format!("{}_{}_{}_seed{}", bench.id, config.solver.name(), config.estimator.name(), config.seed)
}

/// Runs every (solver, estimator, seed) combination at the configured or
/// default stepsizes. With `out` set, traces go to `<out>/<stem>.csv` and
/// the records to `<out>/summary.json`.
pub fn run_bench(bench: &BenchSpec, out: Option<&Path>) -> Result<Vec<RunRecord>> {
    let generated = generate(&bench.problem)?;
    let refr = reference(bench, &generated.instance)?;
    let mut records = Vec::new();
    for &solver in &bench.solvers {
        for &est in &bench.estimators {
            if !supported(&generated.instance, solver, est)? {
                continue;
            }
            for &seed in &bench.seeds {
                let config = RunConfig {
                    gamma: bench.gamma,
                    tau: bench.tau,
                    seed,
                    estimator: est,
                    log_every: bench.log_every,
                    ..RunConfig::new(solver, bench.iters)
                };
                let trace = execute(&generated.instance, &config, refr.as_ref())?;
                let path = match out {
                    Some(dir) => Some(write_trace(&trace, dir, &trace_stem(bench, &config))?.display().to_string()),
                    None => None,
                };
                let (g, t) = (trace.config.gamma.expect("resolved"), trace.config.tau.expect("resolved"));
                let oot = out_of_theorem(&generated.instance, solver, est, g, t);
                records.push(record(bench, &trace, oot, path));
            }
        }
    }
    if let Some(dir) = out {
        write_summary(dir, bench, &records)?;
    }
    Ok(records)
}

fn write_summary(dir: &Path, bench: &BenchSpec, records: &[RunRecord]) -> Result<()> {
    #[derive(Serialize)]
    struct Summary<'a> {
        bench: &'a BenchSpec,
        records: &'a [RunRecord],
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&Summary { bench, records })?)?;
    Ok(())
}

/// Sweeps the grid for each (solver, estimator) pair and keeps the point
/// with the lowest final objective averaged over seeds; diverged runs are
/// excluded. The returned record is that of the first seed with
/// `final_objective` replaced by the seed average. Every grid point runs
/// with the stepsize checks relaxed and carries its `out_of_theorem` flag.
pub fn grid_search(bench: &BenchSpec, out: Option<&Path>) -> Result<Vec<RunRecord>> {
    let grid = bench.grid.as_ref().ok_or_else(|| Error::InvalidParameter("bench has no grid".into()))?;
    if grid.gamma_exponents.is_empty() || grid.tau_products.is_empty() || bench.seeds.is_empty() {
        return Err(Error::InvalidParameter("grid is empty".into()));
    }
    let generated = generate(&bench.problem)?;
    let refr = reference(bench, &generated.instance)?;
    let norm_sq = match &generated.instance {
        Instance::Composite(spec) => spec.op_norm_sq(),
        Instance::Decentralized(p) => p.w_norm,
    };
    let mut best = Vec::new();
    let mut diagnostics = Vec::new();
    for &solver in &bench.solvers {
        for &est in &bench.estimators {
            if !supported(&generated.instance, solver, est)? {
                continue;
            }
            let mut winner: Option<(f64, RunRecord)> = None;
            for &j in &grid.gamma_exponents {
                for &prod in &grid.tau_products {
                    let step = 1.5f64.powi(j) / generated.nu;
                    let other = if norm_sq > 0.0 { prod / (step * norm_sq) } else { 1.0 };
                    let (gamma, tau) = match solver {
                        SolverKind::CondatVu31 | SolverKind::CondatVu32 => (other, step),
                        _ => (step, other),
                    };
                    let mut objectives = Vec::new();
                    let mut first = None;
                    for &seed in &bench.seeds {
                        let config = RunConfig {
                            gamma: Some(gamma),
                            tau: Some(tau),
                            seed,
                            estimator: est,
                            log_every: bench.log_every,
                            allow_out_of_theorem: true,
                            ..RunConfig::new(solver, bench.iters)
                        };
                        let trace = execute(&generated.instance, &config, refr.as_ref())?;
                        let oot = out_of_theorem(&generated.instance, solver, est, gamma, tau);
                        let path = match out {
                            Some(dir) => {
                                let stem = format!("{}_g{j}_t{prod}", trace_stem(bench, &config));
                                Some(write_trace(&trace, dir, &stem)?.display().to_string())
                            }
                            None => None,
                        };
                        let rec = record(bench, &trace, oot, path);
                        match rec.final_objective {
                            Some(o) if o.is_finite() => objectives.push(o),
                            _ => diagnostics.push(format!(
                                "{}/{} γ={gamma:e} τ={tau:e} seed {seed}: {}",
                                solver.name(),
                                est.name(),
                                rec.diverged.clone().unwrap_or_else(|| "no objective".into())
                            )),
                        }
                        first.get_or_insert(rec);
                    }
                    if objectives.len() != bench.seeds.len() {
                        continue;
                    }
                    let mean = objectives.iter().sum::<f64>() / objectives.len() as f64;
                    let mut rec = first.expect("at least one seed");
                    rec.final_objective = Some(mean);
                    if winner.as_ref().is_none_or(|(m, _)| mean < *m) {
                        winner = Some((mean, rec));
                    }
                }
            }
            match winner {
                Some((_, rec)) => best.push(rec),
                None => warn!("{}/{}: every grid point diverged", solver.name(), est.name()),
            }
        }
    }
    if best.is_empty() {
        return Err(Error::AllDiverged(diagnostics.join("; ")));
    }
    if let Some(dir) = out {
        write_summary(dir, bench, &best)?;
    }
    Ok(best)
}

/// Writes the generated data of `problem` into `dir`: `problem.json`, one
/// libsvm file per dataset and one CSV per extra matrix.
pub fn write_generated(problem: &BenchProblem, dir: &Path) -> Result<Generated> {
    let generated = generate(problem)?;
    fs::create_dir_all(dir)?;
    #[derive(Serialize)]
    struct Meta<'a> {
        problem: &'a BenchProblem,
        nu: f64,
    }
    fs::write(dir.join("problem.json"), serde_json::to_string_pretty(&Meta { problem, nu: generated.nu })?)?;
    for (name, w, a) in &generated.datasets {
        write_libsvm(dir.join(format!("{name}.svm")), w, a)?;
    }
    for (name, m) in &generated.matrices {
        crate::linops::write_matrix_csv(dir.join(format!("{name}.csv")), m)?;
    }
    Ok(generated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_lasso_structure() {
        let g = generate(&BenchProblem::FusedLasso { n: 8, p: 5, seed: 1, lambda: 0.1, lambda1: 0.5 }).unwrap();
        let Instance::Composite(spec) = g.instance else { panic!() };
        assert_eq!(spec.l, LinOp::FirstDifference(5));
        assert_eq!(spec.r, ProxFn::Zero);
        assert_eq!(spec.h, ProxFn::L1 { lambda: 0.5 });
        assert_eq!(spec.f.ridge(), 0.1);
    }

    #[test]
    fn grid_groups_sizes() {
        let groups = grid_groups(6);
        assert_eq!(groups.len(), 36);
        assert!(groups.iter().all(|g| (3..=5).contains(&g.len())));
        assert_eq!(groups.iter().filter(|g| g.len() == 3).count(), 4);
    }

    #[test]
    fn ring_laplacian() {
        let l = laplacian(Graph::Ring, 6, 0).unwrap();
        assert!((0..6).all(|i| l[(i, i)] == 2.0 && l.row(i).sum() == 0.0));
        let e = laplacian(Graph::Erdos { p: 0.5 }, 8, 3).unwrap();
        assert!(connected(&(DMatrix::from_diagonal(&e.diagonal()) - &e)));
    }

    #[test]
    fn caps_enforced() {
        assert!(generate(&BenchProblem::FusedLasso { n: 3000, p: 5, seed: 1, lambda: 0.1, lambda1: 0.5 }).is_err());
        assert!(generate(&BenchProblem::FusedLasso { n: 30, p: 5, seed: 1, lambda: -0.1, lambda1: 0.5 }).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let p = BenchProblem::PcaLasso { n: 20, p: 10, m: 3, rows_per_block: 4, lambda: None, lambda1: None, seed: 5 };
        let (a, b) = (generate(&p).unwrap(), generate(&p).unwrap());
        assert_eq!(a.datasets, b.datasets);
        assert_eq!(a.matrices, b.matrices);
    }
}
