use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use claimcheck::embedding::StubEmbedder;
use claimcheck::evidence::select_all;
use claimcheck::{synthetic, Execution, SelectionConfig, Strategy};

fn selection(c: &mut Criterion) {
    let config = SelectionConfig::default();
    let embedder = StubEmbedder::default();
    for &n in &[200usize, 2000] {
        let dataset = synthetic::dataset(n, 7);
        for strategy in [Strategy::TopKBm25, Strategy::TopKSemantic] {
            let mut group = c.benchmark_group(format!("select/{strategy}"));
            group.throughput(Throughput::Elements(n as u64));
            group.sample_size(20);
            for execution in [Execution::Sequential, Execution::Parallel] {
                group.bench_with_input(
                    BenchmarkId::new(format!("{execution:?}").to_lowercase(), n),
                    &dataset,
                    |b, d| b.iter(|| select_all(d, strategy, &config, Some(&embedder), execution)),
                );
            }
            group.finish();
        }
    }
}

criterion_group!(benches, selection);
criterion_main!(benches);
