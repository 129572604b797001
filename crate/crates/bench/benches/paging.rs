use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use minmax_paging::rounding::{default_beta, discretize_quarter_k, round_deterministic, round_randomized};
use minmax_paging::{belady, greedy_lfd, run_fractional, run_policy, Objective, PolicySpec, SolverParams};
use minmax_paging_bench::{minmax_solution, uniform_trace};

fn fractional(c: &mut Criterion) {
    let mut group = c.benchmark_group("fractional");
    for k in [2usize, 8] {
        let trace = uniform_trace(k, 2_000);
        let obj = Objective::minmax(trace.pages());
        let params = SolverParams::new(k, obj.q()).with_horizon(trace.len());
        group.throughput(Throughput::Elements(trace.len() as u64));
        group.bench_with_input(BenchmarkId::new("minmax", k), &trace, |b, t| {
            b.iter(|| run_fractional(t, obj, params).unwrap())
        });
    }
    group.finish();
}

fn rounding(c: &mut Criterion) {
    let rec = minmax_solution(&uniform_trace(4, 2_000));
    let beta = default_beta(rec.header.pages, rec.header.k);
    let mut group = c.benchmark_group("rounding");
    group.bench_function("deterministic", |b| b.iter(|| round_deterministic(&rec).unwrap()));
    group.bench_function("randomized", |b| b.iter(|| round_randomized(&rec, beta, 7).unwrap()));
    group.bench_function("discretize", |b| b.iter(|| discretize_quarter_k(&rec)));
    group.finish();
}

fn policies(c: &mut Criterion) {
    let trace = uniform_trace(8, 20_000);
    let mut group = c.benchmark_group("policies");
    group.throughput(Throughput::Elements(trace.len() as u64));
    for spec in [
        PolicySpec::Lru,
        PolicySpec::Fifo,
        PolicySpec::Marking(1),
        PolicySpec::GreedyMinFaults,
    ] {
        group.bench_function(spec.to_string(), |b| {
            b.iter_batched(
                || spec.build(trace.k(), trace.pages()).unwrap(),
                |mut p| run_policy(p.as_mut(), &trace).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.bench_function("greedy-lfd", |b| b.iter(|| greedy_lfd(&trace).unwrap()));
    group.bench_function("belady", |b| b.iter(|| belady(&trace).unwrap()));
    group.finish();
}

criterion_group!(benches, fractional, rounding, policies);
criterion_main!(benches);
