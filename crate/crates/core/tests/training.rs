use wopt_core::data::rng::SplitMix64;
use wopt_core::data::{gen_synthetic, Dataset, SyntheticSpec};
use wopt_core::linalg::Matrix;
use wopt_core::nn::{Architecture, LayerGradients, Network};
use wopt_core::optimizer::direct::DirectNetwork;
use wopt_core::optimizer::{HyperParams, Trainer};
use wopt_core::Method;

fn data(dim: usize, n: usize, seed: u64) -> Dataset {
    gen_synthetic(&SyntheticSpec {
        dim,
        classes: 4,
        samples_train: n,
        samples_test: 4,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .train
}

fn mlp(dim: usize, seed: u64) -> Network {
    Architecture::mlp(dim, &[12, 8], 4)
        .build(&mut SplitMix64::new(seed))
        .unwrap()
}

fn hyper(method: Method, batch: usize, block: usize) -> HyperParams {
    HyperParams {
        batch_size: batch,
        block_batches: block,
        eta: 0.05,
        weight_decay: 1e-3,
        ..HyperParams::defaults(method)
    }
}

/// Plain minibatch SGD with momentum and weight decay, written out longhand.
fn plain_sgd(
    net: &mut Network,
    ds: &Dataset,
    batches: &[Vec<usize>],
    eta: f64,
    mu: f64,
    wd: f64,
) -> Vec<f64> {
    let zero_means: Vec<Vec<f64>> = net.input_dims().iter().map(|&m| vec![0.0; m]).collect();
    let mut velocity: Vec<LayerGradients> = net.zero_gradients();
    let mut losses = Vec::new();
    for batch in batches {
        let mut total = net.zero_gradients();
        let mut loss = 0.0;
        for &i in batch {
            let mut g = net.zero_gradients();
            loss += net
                .loss_and_gradients(&ds.samples[i], ds.labels[i], &zero_means, &mut g)
                .unwrap()
                .0;
            for (t, s) in total.iter_mut().zip(&g) {
                for (a, b) in t.dw.iter_mut().zip(&s.dw) {
                    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                        *x += 1.0 * y;
                    }
                }
                for (x, y) in t.db.iter_mut().zip(&s.db) {
                    *x += y;
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        losses.push(loss * inv);
        for ((layer, v), g) in net.layers.iter_mut().zip(&mut velocity).zip(&total) {
            for ((w, vw), gw) in layer.weights.iter_mut().zip(&mut v.dw).zip(&g.dw) {
                for ((p, vv), &gg) in w.data_mut().iter_mut().zip(vw.data_mut()).zip(gw.data()) {
                    *vv = mu * *vv + (gg * inv + wd * *p);
                    *p -= eta * *vv;
                }
            }
            for ((p, vv), &gg) in layer.bias.iter_mut().zip(&mut v.db).zip(&g.db) {
                *vv = mu * *vv + (gg * inv + wd * *p);
                *p -= eta * *vv;
            }
        }
    }
    losses
}

fn batches(n: usize, b: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    order.chunks_exact(b).map(<[usize]>::to_vec).collect()
}

#[test]
fn baseline_is_plain_sgd_bit_for_bit() {
    let ds = data(6, 160, 1);
    let order = batches(ds.len(), 8, 2);
    let h = hyper(Method::Baseline, 8, 3);
    let mut reference = mlp(6, 3);
    let want = plain_sgd(
        &mut reference,
        &ds,
        &order,
        h.eta,
        h.momentum,
        h.weight_decay,
    );

    let mut trainer = Trainer::new(mlp(6, 3), Method::Baseline, h).unwrap();
    let got: Vec<f64> = order
        .iter()
        .map(|b| trainer.train_batch(&ds, b).unwrap().loss)
        .collect();
    assert_eq!(
        got.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        want.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(trainer.network, reference);
    assert!(trainer
        .layers
        .iter()
        .all(|s| s.whiten.t == Matrix::identity(s.whiten.dim())));
}

fn loss_trace(method: Method, threads: usize) -> Vec<u64> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let ds = data(6, 192, 4);
        let mut trainer = Trainer::new(mlp(6, 5), method, hyper(method, 16, 2)).unwrap();
        let mut rng = SplitMix64::new(6);
        (0..3)
            .map(|epoch| trainer.run_epoch(&ds, epoch, &mut rng).unwrap().to_bits())
            .collect()
    })
}

#[test]
fn identical_across_runs_and_thread_counts() {
    for method in Method::ALL {
        let one = loss_trace(method, 1);
        assert_eq!(one, loss_trace(method, 1), "{method}");
        assert_eq!(one, loss_trace(method, 4), "{method}");
    }
}

#[test]
fn network_function_survives_block_boundaries() {
    let ds = data(6, 256, 7);
    for method in [Method::Evd, Method::Recursive] {
        let (b, l) = (8, 4);
        let mut trainer = Trainer::new(mlp(6, 8), method, hyper(method, b, l)).unwrap();
        let probe: Vec<usize> = (200..232).collect();
        let mut next = 0;
        for _ in 0..3 {
            for _ in 0..l - 1 {
                let idx: Vec<usize> = (next..next + b).collect();
                trainer.train_batch(&ds, &idx).unwrap();
                next += b;
            }
            // The last batch of the block, by hand, so the boundary can be observed.
            let idx: Vec<usize> = (next..next + b).collect();
            next += b;
            trainer.hyper.block_batches = usize::MAX;
            trainer.train_batch(&ds, &idx).unwrap();
            trainer.hyper.block_batches = l;
            let before = outputs(&trainer, &ds, &probe);
            trainer.block_update().unwrap();
            let after = outputs(&trainer, &ds, &probe);
            let gap = before
                .iter()
                .zip(&after)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(gap < 1e-10, "{method}: {gap:e}");
        }
    }
}

fn outputs(trainer: &Trainer, ds: &Dataset, idx: &[usize]) -> Vec<f64> {
    let means = trainer.means();
    idx.iter()
        .flat_map(|&i| {
            trainer
                .network
                .forward(&ds.samples[i], &means)
                .unwrap()
                .logits
        })
        .collect()
}

#[test]
fn white_input_leaves_transform_near_identity() {
    let m = 8;
    for seed in 1..=5 {
        let mut rng = SplitMix64::new(seed);
        let ds = Dataset {
            samples: (0..512 * 40)
                .map(|_| {
                    Matrix::from_vec(1, m, (0..m).map(|_| rng.next_normal()).collect()).unwrap()
                })
                .collect(),
            labels: (0..512 * 40).map(|i| i % 4).collect(),
            classes: 4,
        };
        let h = HyperParams {
            eta: 1e-3,
            ..hyper(Method::Evd, 32, 16)
        };
        let mut trainer = Trainer::new(mlp(m, seed), Method::Evd, h).unwrap();
        for chunk in (0..ds.len()).collect::<Vec<_>>().chunks_exact(32) {
            trainer.train_batch(&ds, chunk).unwrap();
        }
        let dev = trainer.layers[0]
            .whiten
            .t
            .max_abs_diff(&Matrix::identity(m));
        assert!(dev < 0.05, "seed {seed}: {dev}");
    }
}

/// Negative control for the equivalence check: dropping the gradient
/// transform on one side makes the trajectories separate.
#[test]
fn equivalence_check_detects_a_missing_transform() {
    let m = 6;
    let ds = data(m, 64, 9);
    let mut rng = SplitMix64::new(10);
    let mut direct = DirectNetwork::new(mlp(m, 11));
    let mut t = Matrix::identity(m);
    for v in t.data_mut() {
        *v += 0.3 * rng.next_normal();
    }
    direct.set_whitening(0, t, vec![0.0; m]).unwrap();
    let h = HyperParams {
        momentum: 0.0,
        weight_decay: 0.0,
        ..hyper(Method::Evd, 8, 4)
    };
    // The transform is folded into the weights but never installed, so the
    // trainer keeps Q = I.
    let mut trainer = Trainer::new(direct.folded(), Method::Evd, h).unwrap();
    trainer.freeze_whitening = true;
    for s in 0..8 {
        let idx: Vec<usize> = (s * 8..(s + 1) * 8).collect();
        direct.train_batch(&ds, &idx, trainer.eta()).unwrap();
        trainer.train_batch(&ds, &idx).unwrap();
    }
    let folded = direct.folded();
    let gap = folded.layers[0].weights[0].max_abs_diff(&trainer.network.layers[0].weights[0]);
    assert!(gap > 1e-4, "{gap:e}");
}
