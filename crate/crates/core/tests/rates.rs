use pdsplit::bench::gaussian;
use pdsplit::estimators::{constants, linear_stepsize, EstimatorKind};
use pdsplit::functions::{ProxFn, SmoothFn};
use pdsplit::oracle::{
    check_fundamental_equality, dys_trace, solve_dense_reference, verify_ergodic_bound, verify_linear_rate, RateTheorem,
};
use pdsplit::solvers::dys::PrimalDualSplitting;
use pdsplit::solvers::{run, PrimalDualOrder, RunConfig, SolverKind};
use pdsplit::{Error, LinOp, ProblemSpec, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn problem(ridge: f64, rows: usize) -> ProblemSpec {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let w = gaussian(&mut r, rows, 6);
    let a = gaussian(&mut r, rows, 1).column(0).into_owned();
    let l = gaussian(&mut r, 3, 6) * 0.5;
    ProblemSpec::new(
        SmoothFn::least_squares(w, a).unwrap().with_ridge(ridge).unwrap(),
        ProxFn::SqL2 { lambda: 0.5 },
        ProxFn::SqL2 { lambda: 1.0 },
        LinOp::Dense(l),
    )
    .unwrap()
}

fn kept(solver: SolverKind, iters: usize) -> RunConfig {
    RunConfig { keep_iterates: true, ..RunConfig::new(solver, iters) }
}

#[test]
fn ergodic_bound_holds_and_flags_large_steps() {
    let spec = problem(0.0, 8);
    let saddle = solve_dense_reference(&spec).unwrap().saddle();
    let c = constants(EstimatorKind::Full, &spec.f).unwrap();
    let trace = run(&spec, &kept(SolverKind::Pd3o, 500), Some(&saddle)).unwrap();
    let report = verify_ergodic_bound(&spec, &[trace], &saddle, &c).unwrap();
    assert!(report.passed() && !report.out_of_theorem, "{report:?}");
    assert_eq!(report.theorem, RateTheorem::Thm2Pd3o);

    let gamma = 2.0 * trace_gamma(&spec);
    let cfg = RunConfig { gamma: Some(gamma), ..kept(SolverKind::Pddy, 200) };
    let trace = run(&spec, &cfg, Some(&saddle)).unwrap();
    let report = verify_ergodic_bound(&spec, &[trace], &saddle, &c).unwrap();
    assert!(report.out_of_theorem);
    assert_eq!(report.theorem, RateTheorem::Thm3Pddy);
}

fn trace_gamma(spec: &ProblemSpec) -> f64 {
    let t = run(spec, &RunConfig::new(SolverKind::Pd3o, 0), None).unwrap();
    t.config.gamma.unwrap()
}

#[test]
fn stochastic_checks_need_enough_seeds() {
    let spec = problem(0.0, 8);
    let saddle = solve_dense_reference(&spec).unwrap().saddle();
    let est = EstimatorKind::Lsvrg { p: 0.2 };
    let traces: Vec<_> = (0..5)
        .map(|s| run(&spec, &RunConfig { estimator: est, seed: s, ..kept(SolverKind::Pd3o, 50) }, Some(&saddle)).unwrap())
        .collect();
    let c = constants(est, &spec.f).unwrap();
    assert!(verify_ergodic_bound(&spec, &traces, &saddle, &c).is_err());
}

#[test]
fn iterates_are_required() {
    let spec = problem(0.0, 8);
    let saddle = solve_dense_reference(&spec).unwrap().saddle();
    let c = constants(EstimatorKind::Full, &spec.f).unwrap();
    let trace = run(&spec, &RunConfig::new(SolverKind::Pd3o, 20), Some(&saddle)).unwrap();
    assert!(verify_ergodic_bound(&spec, &[trace], &saddle, &c).is_err());
}

#[test]
fn linear_theorem_hypotheses_are_checked() {
    // rank-deficient W and no ridge: μ_F = 0, unique constrained minimizer
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let l = gaussian(&mut r, 2, 6);
    let b = &l * Vector::from_element(6, 1.0);
    let spec = ProblemSpec::new(
        SmoothFn::least_squares(gaussian(&mut r, 5, 6), Vector::zeros(5)).unwrap(),
        ProxFn::Zero,
        ProxFn::IndicatorPoint { b },
        LinOp::Dense(l),
    )
    .unwrap();
    let saddle = solve_dense_reference(&spec).unwrap().saddle();
    let c = constants(EstimatorKind::Full, &spec.f).unwrap();
    let trace = run(&spec, &kept(SolverKind::LiCoSgd, 20), Some(&saddle)).unwrap();
    assert!(matches!(
        verify_linear_rate(&spec, &[trace], &saddle, &c, RateTheorem::Thm4LiCo),
        Err(Error::HypothesisUnmet(_))
    ));
}

#[test]
fn tampered_trace_violates_the_envelope() {
    let spec = problem(0.2, 8);
    let saddle = solve_dense_reference(&spec).unwrap().saddle();
    let c = constants(EstimatorKind::Full, &spec.f).unwrap();
    let gamma = linear_stepsize(&c);
    let cfg = RunConfig { gamma: Some(gamma), tau: Some(0.99 / (gamma * spec.op_norm_sq())), ..kept(SolverKind::Pd3o, 300) };
    let mut trace = run(&spec, &cfg, Some(&saddle)).unwrap();
    let clean = verify_linear_rate(&spec, &[trace.clone()], &saddle, &c, RateTheorem::ThmAPd3oLinear).unwrap();
    assert!(clean.passed(), "{clean:?}");
    assert!(clean.r_empirical.unwrap() <= clean.r_theoretical.unwrap());
    // push a late iterate back towards the start
    let rec = &mut trace.records[100];
    rec.p = Some(rec.p.as_ref().unwrap() + Vector::from_element(6, 0.5));
    let bad = verify_linear_rate(&spec, &[trace], &saddle, &c, RateTheorem::ThmAPd3oLinear).unwrap();
    assert!(bad.bound_violations >= 1);
}

#[test]
fn fundamental_equality_detects_a_wrong_resolvent_output() {
    let spec = problem(0.1, 8);
    let saddle = solve_dense_reference(&spec).unwrap().saddle();
    let gamma = trace_gamma(&spec);
    let s = PrimalDualSplitting { spec: &spec, gamma, tau: 0.9 / (gamma * spec.op_norm_sq()), order: PrimalDualOrder::Pd3o };
    let mut steps = dys_trace(&s, Vector::from_element(9, 1.0), 30).unwrap();
    assert!(check_fundamental_equality(&s, &steps, &saddle).unwrap() < 1e-10);
    steps[12].z[2] += 1e-2;
    assert!(check_fundamental_equality(&s, &steps, &saddle).unwrap() > 1e-6);
}
