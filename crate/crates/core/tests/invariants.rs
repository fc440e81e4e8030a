use nalgebra::{DMatrix, SymmetricEigen};
use pdsplit::bench::{format_libsvm, parse_libsvm};
use pdsplit::estimators::{EstimatorKind, EstimatorState};
use pdsplit::functions::{ProxFn, SmoothFn};
use pdsplit::oracle::solve_dense_reference;
use pdsplit::solvers::dys::{concat, PrimalDualSplitting};
use pdsplit::solvers::{pd3o_step, pddy_step, Exact, Pd3oState, PddyState, PrimalDualOrder, Splitting};
use pdsplit::solvers::DysState;
use pdsplit::{LinOp, ProblemSpec, Vector};
use proptest::prelude::*;

fn vec_of(n: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-5.0..5.0f64, n).prop_map(Vector::from_vec)
}

fn mat_of(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

fn prox_strategy(dim: usize) -> impl Strategy<Value = ProxFn> {
    let half = dim / 2;
    prop_oneof![
        Just(ProxFn::Zero),
        (0.0..3.0f64).prop_map(|lambda| ProxFn::L1 { lambda }),
        (0.0..3.0f64).prop_map(|lambda| ProxFn::SqL2 { lambda }),
        (0.0..3.0f64).prop_map(move |lambda| ProxFn::GroupL2 {
            groups: vec![(0..half).collect(), (half..dim).collect()],
            lambda
        }),
        (0.0..3.0f64).prop_map(move |lambda| ProxFn::L2NormSum { blocks: vec![half, dim - half], lambda }),
        vec_of(dim).prop_map(|b| ProxFn::IndicatorPoint { b }),
    ]
}

fn op_strategy() -> impl Strategy<Value = LinOp> {
    prop_oneof![
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| mat_of(r, c).prop_map(LinOp::Dense)),
        (2usize..9).prop_map(LinOp::FirstDifference),
        prop::collection::vec(prop::collection::vec(0usize..6, 1..4), 1..5)
            .prop_map(|groups| LinOp::group_selector(6, groups).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_is_firmly_nonexpansive(h in prox_strategy(6), a in vec_of(6), b in vec_of(6), g in 0.01..10.0f64) {
        let pa = h.prox(&a, g).unwrap();
        let pb = h.prox(&b, g).unwrap();
        let dp = &pa - &pb;
        prop_assert!(dp.norm_squared() <= dp.dot(&(&a - &b)) + 1e-10 * (1.0 + (&a - &b).norm_squared()));
    }

    #[test]
    fn moreau_decomposition(h in prox_strategy(6), v in vec_of(6), t in 0.01..10.0f64) {
        let sum = h.prox_conjugate(&v, t).unwrap() + h.prox(&(&v / t), 1.0 / t).unwrap() * t;
        prop_assert!((&sum - &v).amax() <= 1e-9 * (1.0 + v.amax()));
    }

    #[test]
    fn adjoint_identity(op in op_strategy(), seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = pdsplit::bench::gaussian(&mut r, op.in_dim(), 1).column(0).into_owned();
        let y = pdsplit::bench::gaussian(&mut r, op.out_dim(), 1).column(0).into_owned();
        let lhs = op.apply(&x).unwrap().dot(&y);
        let rhs = x.dot(&op.adjoint_apply(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn power_iteration_matches_eigendecomposition(m in mat_of(5, 4)) {
        let op = LinOp::Dense(m.clone());
        let top = SymmetricEigen::new(m.tr_mul(&m)).eigenvalues.max();
        prop_assume!(top > 1e-6);
        let (est, _) = op.power_norm_sq(1e-12, 100_000).unwrap();
        prop_assert!((est - top).abs() <= 1e-6 * top);
    }

    #[test]
    fn libsvm_round_trip(
        entries in prop::collection::vec(prop::option::weighted(0.4, -1e3..1e3f64), 12),
        labels in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0, 2.5]), 3),
    ) {
        let w = DMatrix::from_fn(3, 4, |i, j| entries[i * 4 + j].unwrap_or(0.0));
        let labels = Vector::from_vec(labels);
        let text = format_libsvm(&w, &labels).unwrap();
        let (w2, l2) = parse_libsvm(&text, Some(4)).unwrap();
        prop_assert_eq!(&w2, &w);
        prop_assert_eq!(&l2, &labels);
        prop_assert_eq!(format_libsvm(&w2, &l2).unwrap(), text);
    }

    #[test]
    fn specialized_steps_follow_generic_iteration(
        w in mat_of(5, 4),
        l in mat_of(3, 4),
        lam in 0.0..2.0f64,
        v0 in vec_of(7),
        frac in 0.1..0.99f64,
    ) {
        let a = Vector::from_element(5, 1.0);
        let spec = ProblemSpec::new(
            SmoothFn::least_squares(w, a).unwrap().with_ridge(0.1).unwrap(),
            ProxFn::L1 { lambda: lam },
            ProxFn::L1 { lambda: 1.0 },
            LinOp::Dense(l),
        ).unwrap();
        prop_assume!(spec.op_norm_sq() > 1e-6);
        let gamma = 1.0 / spec.f.nu();
        let tau = frac / (gamma * spec.op_norm_sq());
        let p0 = v0.rows(0, 4).into_owned();
        let y0 = v0.rows(4, 3).into_owned();

        let s = PrimalDualSplitting { spec: &spec, gamma, tau, order: PrimalDualOrder::Pddy };
        let mut dys = DysState { v: v0.clone(), gamma };
        let mut st = PddyState::new(&spec, p0.clone(), y0.clone(), gamma, tau, false).unwrap();
        for _ in 0..20 {
            dys.v = s.step(&dys).unwrap().v_next;
            st = pddy_step(&spec, &mut Exact(&spec.f), &st).unwrap();
            prop_assert!((&dys.v - concat(&st.p, &st.y)).amax() <= 1e-10 * (1.0 + dys.v.amax()));
        }

        let s = PrimalDualSplitting { spec: &spec, gamma, tau, order: PrimalDualOrder::Pd3o };
        let mut dys = DysState { v: v0, gamma };
        let mut st = Pd3oState::new(&spec, p0, y0, gamma, tau, false).unwrap();
        for _ in 0..20 {
            dys.v = s.step(&dys).unwrap().v_next;
            st = pd3o_step(&spec, &mut Exact(&spec.f), &st).unwrap();
            prop_assert!((&dys.v - concat(&st.p, &st.y)).amax() <= 1e-10 * (1.0 + dys.v.amax()));
        }
    }

    #[test]
    fn gaps_are_nonnegative(x in vec_of(4), y in vec_of(3), w in mat_of(6, 4), l in mat_of(3, 4)) {
        let spec = ProblemSpec::new(
            SmoothFn::least_squares(w, Vector::from_element(6, 0.5)).unwrap(),
            ProxFn::SqL2 { lambda: 0.3 },
            ProxFn::SqL2 { lambda: 2.0 },
            LinOp::Dense(l),
        ).unwrap();
        let saddle = solve_dense_reference(&spec).unwrap().saddle();
        let gap = spec.duality_gap(&x, &y, &saddle).unwrap().finite().unwrap();
        let breg = spec.bregman_gap(&x, &y, &saddle).unwrap();
        let scale = 1e-9 * (1.0 + x.norm_squared() + y.norm_squared());
        prop_assert!(gap >= -scale);
        prop_assert!(breg.sum() >= -scale);
        prop_assert!((gap - breg.sum()).abs() <= 1e-8 * (1.0 + gap.abs()));
    }

    #[test]
    fn saga_table_mean_stays_consistent(xs in prop::collection::vec(vec_of(3), 1..30), seed in any::<u64>()) {
        let w = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let f = SmoothFn::least_squares(w, Vector::from_element(5, 1.0)).unwrap();
        let mut st = EstimatorState::new(EstimatorKind::Saga, &f, &Vector::zeros(3), seed).unwrap();
        for x in &xs {
            st.sample(&f, x).unwrap();
        }
        let mean = st.grad_table.iter().fold(Vector::zeros(3), |s, g| s + g) / 5.0;
        prop_assert!((&mean - st.table_mean.as_ref().unwrap()).amax() <= 1e-10 * (1.0 + mean.amax()));
    }

    #[test]
    fn full_estimator_is_the_gradient(x in vec_of(3), seed in any::<u64>()) {
        let w = DMatrix::from_fn(4, 3, |i, j| ((i + 2 * j) as f64).cos());
        let f = SmoothFn::least_squares(w, Vector::from_element(4, -1.0)).unwrap();
        let mut st = EstimatorState::new(EstimatorKind::Full, &f, &x, seed).unwrap();
        prop_assert_eq!(st.sample(&f, &x).unwrap(), f.grad(&x).unwrap());
    }
}
