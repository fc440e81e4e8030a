use pdsplit::bench::{self, gaussian, BenchProblem, BenchSpec, Graph, Grid, Instance};
use pdsplit::estimators::EstimatorKind;
use pdsplit::functions::{ProxFn, SmoothFn};
use pdsplit::oracle::{solve_decentralized_reference, solve_dense_reference};
use pdsplit::solvers::{run, run_destroy, DestroyState, RunConfig, SolverKind, SolverState};
use pdsplit::{Error, LinOp, ProblemSpec, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn smooth_problem() -> ProblemSpec {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let w = gaussian(&mut r, 10, 6);
    let a = gaussian(&mut r, 10, 1).column(0).into_owned();
    let l = gaussian(&mut r, 4, 6);
    ProblemSpec::new(
        SmoothFn::least_squares(w, a).unwrap().with_ridge(0.1).unwrap(),
        ProxFn::SqL2 { lambda: 0.4 },
        ProxFn::SqL2 { lambda: 1.5 },
        LinOp::Dense(l),
    )
    .unwrap()
}

fn constrained_problem() -> ProblemSpec {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let w = gaussian(&mut r, 6, 8);
    let a = gaussian(&mut r, 6, 1).column(0).into_owned();
    let l = gaussian(&mut r, 3, 8);
    let b = &l * gaussian(&mut r, 8, 1).column(0);
    ProblemSpec::new(
        SmoothFn::least_squares(w, a).unwrap().with_ridge(0.5).unwrap(),
        ProxFn::Zero,
        ProxFn::IndicatorPoint { b },
        LinOp::Dense(l),
    )
    .unwrap()
}

#[test]
fn deterministic_solvers_reach_the_dense_solution() {
    let spec = smooth_problem();
    let sol = solve_dense_reference(&spec).unwrap();
    for solver in [SolverKind::Pddy, SolverKind::Pd3o, SolverKind::CondatVu31, SolverKind::CondatVu32] {
        let trace = run(&spec, &RunConfig::new(solver, 20_000), None).unwrap();
        let x = trace.final_state.primal();
        assert!((&x - &sol.x_star).norm() < 1e-8, "{}: {}", solver.name(), (&x - &sol.x_star).norm());
    }
}

#[test]
fn lico_reaches_the_constrained_solution() {
    let spec = constrained_problem();
    let sol = solve_dense_reference(&spec).unwrap();
    let trace = run(&spec, &RunConfig { log_every: 500, ..RunConfig::new(SolverKind::LiCoSgd, 50_000) }, None).unwrap();
    let SolverState::LiCo(st) = &trace.final_state else { panic!("lico state") };
    assert!((&st.x - &sol.x_star).norm() < 1e-8);
    assert!((&st.y - &sol.y_star).norm() < 1e-6);
}

#[test]
fn variance_reduced_runs_converge() {
    let spec = smooth_problem();
    let sol = solve_dense_reference(&spec).unwrap();
    for est in [EstimatorKind::Lsvrg { p: 0.1 }, EstimatorKind::Saga] {
        for solver in [SolverKind::Pddy, SolverKind::Pd3o] {
            let cfg = RunConfig { estimator: est, seed: 3, log_every: 1000, ..RunConfig::new(solver, 60_000) };
            let trace = run(&spec, &cfg, Some(&sol.saddle())).unwrap();
            let dist = trace.last().dist_to_oracle.unwrap();
            assert!(dist < 1e-6, "{} {}: {dist}", solver.name(), est.name());
            assert!(trace.last().sigma_sq.unwrap() < 1e-10);
        }
    }
}

#[test]
fn minibatch_sgd_runs_without_constants() {
    let spec = smooth_problem();
    let cfg = RunConfig { estimator: EstimatorKind::Minibatch { size: 4 }, ..RunConfig::new(SolverKind::Pd3o, 200) };
    let trace = run(&spec, &cfg, None).unwrap();
    assert!(trace.diverged.is_none());
    assert!(trace.last().objective.unwrap().is_finite());
}

#[test]
fn destroy_reaches_consensus() {
    let g = bench::generate(&BenchProblem::DecentralizedQuadratic {
        nodes: 6,
        graph: Graph::Complete,
        d: 2,
        seed: 2,
        ridge: 0.3,
    })
    .unwrap();
    let Instance::Decentralized(p) = g.instance else { panic!() };
    let x_star = solve_decentralized_reference(&p).unwrap();
    let cfg = RunConfig { log_every: 100, ..RunConfig::new(SolverKind::Destroy, 5000) };
    let trace = run_destroy(&p, &cfg, Some(&x_star)).unwrap();
    assert!(trace.last().dist_to_oracle.unwrap() < 1e-8);
    let SolverState::Destroy(st) = &trace.final_state else { panic!() };
    let total = st.a.iter().fold(Vector::zeros(2), |s, a| s + a);
    assert!(total.amax() < 1e-10);
    assert_eq!(DestroyState::stacked(&st.x).len(), 12);
}

#[test]
fn stochastic_condat_vu_is_rejected() {
    let spec = smooth_problem();
    let cfg = RunConfig { estimator: EstimatorKind::Saga, ..RunConfig::new(SolverKind::CondatVu32, 10) };
    assert!(matches!(run(&spec, &cfg, None), Err(Error::StochasticCondatVu)));
}

#[test]
fn destroy_needs_a_decentralized_problem() {
    let spec = smooth_problem();
    assert!(run(&spec, &RunConfig::new(SolverKind::Destroy, 10), None).is_err());
}

#[test]
fn stop_kkt_ends_early() {
    let spec = smooth_problem();
    let cfg = RunConfig { stop_kkt: Some(1e-6), log_every: 10, ..RunConfig::new(SolverKind::Pd3o, 100_000) };
    let trace = run(&spec, &cfg, None).unwrap();
    let last = trace.last();
    assert!(last.k < 100_000);
    assert!(last.kkt_primal <= 1e-6 && last.kkt_dual <= 1e-6);
}

#[test]
fn seeds_control_stochastic_runs() {
    let spec = smooth_problem();
    let cfg = RunConfig { estimator: EstimatorKind::Saga, log_every: 10, ..RunConfig::new(SolverKind::Pddy, 200) };
    let strip = |t: &pdsplit::solvers::RunTrace| -> Vec<(usize, Option<f64>, f64)> {
        t.records.iter().map(|r| (r.k, r.objective, r.kkt_primal)).collect()
    };
    let a = run(&spec, &RunConfig { seed: 1, ..cfg.clone() }, None).unwrap();
    let b = run(&spec, &RunConfig { seed: 1, ..cfg.clone() }, None).unwrap();
    let c = run(&spec, &RunConfig { seed: 2, ..cfg }, None).unwrap();
    assert_eq!(strip(&a), strip(&b));
    assert_ne!(strip(&a), strip(&c));
}

#[test]
fn bench_run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = BenchSpec {
        id: "t".into(),
        problem: BenchProblem::FusedLasso { n: 20, p: 8, seed: 1, lambda: 0.1, lambda1: 0.5 },
        solvers: vec![SolverKind::Pd3o, SolverKind::CondatVu31],
        estimators: vec![EstimatorKind::Full, EstimatorKind::Saga],
        iters: 50,
        seeds: vec![0],
        log_every: 10,
        gamma: None,
        tau: None,
        grid: None,
        oracle: true,
    };
    let records = bench::run_bench(&spec, Some(dir.path())).unwrap();
    // Condat-Vu has no stochastic variant, so that pair is skipped
    assert_eq!(records.len(), 3);
    assert!(dir.path().join("summary.json").exists());
    for r in &records {
        let csv = std::fs::read_to_string(r.trace_path.as_ref().unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 1 + 6);
        assert!(csv.starts_with("k,objective,"));
        // with a reference every row carries the distance column
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        for row in rdr.records() {
            assert!(row.unwrap()[5].parse::<f64>().is_ok());
        }
    }
}

#[test]
fn grid_search_single_point_and_all_diverged() {
    let mut spec = BenchSpec {
        id: "g".into(),
        problem: BenchProblem::FusedLasso { n: 20, p: 8, seed: 1, lambda: 0.1, lambda1: 0.5 },
        solvers: vec![SolverKind::Pd3o],
        estimators: vec![EstimatorKind::Full],
        iters: 100,
        seeds: vec![0],
        log_every: 100,
        gamma: None,
        tau: None,
        grid: Some(Grid { gamma_exponents: vec![0], tau_products: vec![0.5] }),
        oracle: false,
    };
    let best = bench::grid_search(&spec, None).unwrap();
    assert_eq!(best.len(), 1);
    let nu = bench::generate(&spec.problem).unwrap().nu;
    assert!((best[0].gamma - 1.0 / nu).abs() < 1e-12 / nu);

    spec.iters = 3000;
    spec.grid = Some(Grid { gamma_exponents: vec![12, 14], tau_products: vec![0.5] });
    assert!(matches!(bench::grid_search(&spec, None), Err(Error::AllDiverged(_))));
}

#[test]
fn grid_search_skips_pairs_that_always_diverge() {
    let spec = BenchSpec {
        id: "g".into(),
        problem: BenchProblem::FusedLasso { n: 20, p: 8, seed: 1, lambda: 0.1, lambda1: 0.5 },
        solvers: vec![SolverKind::Pd3o],
        estimators: vec![EstimatorKind::Full, EstimatorKind::Saga],
        iters: 200,
        seeds: vec![0],
        log_every: 20,
        gamma: None,
        tau: None,
        grid: Some(Grid { gamma_exponents: vec![0], tau_products: vec![0.5] }),
        oracle: false,
    };
    let best = bench::grid_search(&spec, None).unwrap();
    assert_eq!(best.len(), 1);
    assert_eq!(best[0].estimator, EstimatorKind::Full);
}
