use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use fingerloc::eval::{run_queries, Scheme};
use fingerloc::sim::{self, presets};
use fingerloc::{prepare_queries, Config, Method, Modules};

fn bench(c: &mut Criterion) {
    let mut env = presets::standard_mobile(1);
    env.random_walks.count = 2;
    let s = sim::simulate(&env, 1).unwrap();
    let mut config = Config::default();
    let queries: Vec<_> = prepare_queries(&s.traces, &config).into_iter().take(16).collect();

    let schemes = [
        ("dorfin", Scheme::Method(Method::Dorfin)),
        ("basic+df+ca+pf", Scheme::Modules(Modules { rr: false, ..Modules::ALL })),
    ];
    let mut group = c.benchmark_group("localize");
    group.sample_size(10);
    for (name, scheme) in schemes {
        for parallel in [false, true] {
            config.parallel = parallel;
            let mode = if parallel { "parallel" } else { "sequential" };
            group.bench_with_input(BenchmarkId::new(name, mode), &config, |b, cfg| {
                b.iter(|| run_queries(black_box(&s.map), black_box(&queries), scheme, cfg))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
