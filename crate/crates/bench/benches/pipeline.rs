use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use transdict::decoder::prune;
use transdict::{decode, train_class_lm, LmTrainConfig, SmoothingConfig};
use transdict_bench::{corpus, fixture, french};

fn decode_scaling(c: &mut Criterion) {
    let fx = fixture();
    let cfg = SmoothingConfig::default();
    let lattice = &fx.lattices[0];
    let english = &fx.english[0];
    let mut group = c.benchmark_group("decode");
    for n in [10, 20, 50, 100, 200] {
        let pruned = prune(lattice, n).unwrap();
        group.throughput(Throughput::Elements((n * pruned.len()) as u64));
        group.bench_with_input(BenchmarkId::new("n_best", n), &pruned, |b, l| {
            b.iter(|| decode(black_box(l), english, &fx.model, cfg, 1.0).unwrap())
        });
    }
    group.finish();
}

fn class_lm_em(c: &mut Criterion) {
    let corpus = corpus(1000);
    let sentences = french(&corpus);
    let cfg = LmTrainConfig {
        max_iters: 1,
        ..LmTrainConfig::default()
    };
    c.bench_function("class_lm_em_iteration_1000", |b| {
        b.iter(|| train_class_lm(black_box(&sentences), &corpus.lexicon, &cfg).unwrap())
    });
}

criterion_group!(benches, decode_scaling, class_lm_em);
criterion_main!(benches);
