use minmax_paging::fractional::CertifyOptions;
use minmax_paging::offline::{belady, greedy_lfd};
use minmax_paging::schedule::replay;
use minmax_paging::{certify, lq_cost, minmax_cost, run_fractional, Objective, PolicySpec, RequestTrace, SolverParams};
use proptest::prelude::*;

type Matrix = Vec<Vec<f64>>;

fn trace_strategy() -> impl Strategy<Value = RequestTrace> {
    (1usize..4, 2usize..8)
        .prop_flat_map(|(k, n)| (Just(k), Just(n), prop::collection::vec(1..=n as u32, 1..120)))
        .prop_map(|(k, n, reqs)| RequestTrace::new(k, n, reqs).unwrap())
}

fn policy_strategy() -> impl Strategy<Value = PolicySpec> {
    prop_oneof![
        Just(PolicySpec::Lru),
        Just(PolicySpec::Fifo),
        Just(PolicySpec::GreedyMinFaults),
        any::<u64>().prop_map(PolicySpec::Marking),
    ]
}

fn matrix(rows: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(prop::collection::vec(0.0f64..5.0, 1..4), rows)
}

fn shaped(shape: &[usize]) -> impl Strategy<Value = Matrix> {
    shape
        .iter()
        .map(|&j| prop::collection::vec(0.0f64..5.0, j))
        .collect::<Vec<_>>()
}

fn three_shaped() -> impl Strategy<Value = (Matrix, Matrix, Matrix)> {
    prop::collection::vec(1usize..4, 1..4).prop_flat_map(|shape| (shaped(&shape), shaped(&shape), shaped(&shape)))
}

proptest! {
    #[test]
    fn norm_sandwich(v in prop::collection::vec(0.0f64..100.0, 1..20), q in 1.0f64..16.0) {
        let inf = minmax_cost(&v);
        let lq = lq_cost(&v, q);
        prop_assert!(inf <= lq * (1.0 + 1e-12));
        prop_assert!(lq <= (v.len() as f64).powf(1.0 / q) * inf * (1.0 + 1e-12));
    }

    #[test]
    fn conjugate_facts(
        (x, w, bump) in three_shaped(),
        q in 1.1f64..8.0,
        gamma in 0.01f64..0.99,
    ) {
        let obj = Objective::power(q).unwrap();
        let larger: Vec<Vec<f64>> =
            w.iter().zip(&bump).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect()).collect();
        let fw = obj.conjugate(&w);
        prop_assert!(fw <= obj.conjugate(&larger) * (1.0 + 1e-12) + 1e-12);

        let fx = obj.eval(&x).unwrap();
        let inner: f64 = x.iter().flatten().zip(w.iter().flatten()).map(|(a, b)| a * b).sum();
        prop_assert!(fx + fw >= inner * (1.0 - 1e-12) - 1e-12);

        let e = q / (q - 1.0);
        let scaled: Vec<Vec<f64>> = w.iter().map(|r| r.iter().map(|v| gamma * v).collect()).collect();
        prop_assert!(obj.conjugate(&scaled) <= gamma.powf(e) * fw * (1.0 + 1e-9) + 1e-12);
        let grad: Vec<Vec<f64>> =
            obj.grad(&x).iter().map(|r| r.iter().map(|v| gamma * v).collect()).collect();
        prop_assert!(obj.conjugate(&grad) <= gamma.powf(e) * (q - 1.0) * fx * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn growth_equality(x in (1usize..5).prop_flat_map(matrix), q in 1.0f64..10.0) {
        let obj = Objective::power(q).unwrap();
        prop_assert!(obj.growth_check(&x));
    }

    #[test]
    fn fetch_and_eviction_counts_differ_by_at_most_one(trace in trace_strategy(), spec in policy_strategy()) {
        let mut policy = spec.build(trace.k(), trace.pages()).unwrap();
        let sched = minmax_paging::run_policy(policy.as_mut(), &trace).unwrap();
        for s in [sched, greedy_lfd(&trace).unwrap(), belady(&trace).unwrap()] {
            let costs = replay(&trace, &s.steps).unwrap();
            for (f, e) in costs.fetch.values().iter().zip(costs.eviction.values()) {
                prop_assert!(f - e == 0.0 || f - e == 1.0, "{} fetched {f} evicted {e}", s.algorithm);
            }
        }
    }

    #[test]
    fn offline_never_worse_than_online(trace in trace_strategy(), spec in policy_strategy()) {
        let mut policy = spec.build(trace.k(), trace.pages()).unwrap();
        let online = minmax_paging::run_policy(policy.as_mut(), &trace).unwrap();
        prop_assert!(belady(&trace).unwrap().total() <= online.total());
    }

    #[test]
    fn replay_is_deterministic(trace in trace_strategy(), spec in policy_strategy()) {
        let a = minmax_paging::run_policy(spec.build(trace.k(), trace.pages()).unwrap().as_mut(), &trace).unwrap();
        let b = minmax_paging::run_policy(spec.build(trace.k(), trace.pages()).unwrap().as_mut(), &trace).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fractional_solutions_certify(trace in trace_strategy()) {
        let obj = Objective::minmax(trace.pages());
        let params = SolverParams::new(trace.k(), obj.q()).with_horizon(trace.len());
        let rec = run_fractional(&trace, obj, params).unwrap();
        prop_assert_eq!(&rec, &run_fractional(&trace, obj, params).unwrap());
        let report = certify(&rec, &CertifyOptions::default()).unwrap();
        for c in report.checks() {
            prop_assert!(c.pass, "{} {:?}", c.name, c.first_violation);
        }
    }
}
