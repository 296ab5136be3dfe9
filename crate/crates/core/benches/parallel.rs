use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wopt_core::data::rng::SplitMix64;
use wopt_core::data::{gen_synthetic, Dataset, SyntheticSpec};
use wopt_core::nn::Architecture;
use wopt_core::optimizer::{HyperParams, Trainer};
use wopt_core::Method;

fn dataset() -> Dataset {
    gen_synthetic(&SyntheticSpec {
        dim: 64,
        samples_train: 256,
        samples_test: 1,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .train
}

fn trainer(method: Method) -> Trainer {
    let net = Architecture::mlp(64, &[128, 64], 10)
        .build(&mut SplitMix64::new(1))
        .unwrap();
    let hyper = HyperParams {
        batch_size: 64,
        block_batches: 1_000_000,
        ..HyperParams::defaults(method)
    };
    Trainer::new(net, method, hyper).unwrap()
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = rayon::current_num_threads();
    let mut out = vec![(
        "1-thread".to_string(),
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap(),
    )];
    if default > 1 {
        out.push((
            format!("{default}-threads"),
            rayon::ThreadPoolBuilder::new()
                .num_threads(default)
                .build()
                .unwrap(),
        ));
    }
    out
}

fn train_batch(c: &mut Criterion) {
    let data = dataset();
    let idx: Vec<usize> = (0..64).collect();
    let mut group = c.benchmark_group("train_batch");
    for (label, pool) in pools() {
        for method in [Method::Baseline, Method::Evd] {
            let mut t = trainer(method);
            group.bench_with_input(BenchmarkId::new(method.as_str(), &label), &(), |b, _| {
                pool.install(|| b.iter(|| t.train_batch(&data, &idx).unwrap()))
            });
        }
    }
    group.finish();
}

fn block_update(c: &mut Criterion) {
    let data = dataset();
    let idx: Vec<usize> = (0..64).collect();
    let mut group = c.benchmark_group("block_update");
    for (label, pool) in pools() {
        for method in [Method::Evd, Method::Recursive] {
            let mut t = trainer(method);
            group.bench_with_input(BenchmarkId::new(method.as_str(), &label), &(), |b, _| {
                pool.install(|| {
                    b.iter(|| {
                        t.train_batch(&data, &idx).unwrap();
                        t.block_update().unwrap()
                    })
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, train_batch, block_update);
criterion_main!(benches);
