//! End-to-end runs: data loading, network construction, the epoch loop with
//! per-epoch metrics, and the steps-to-target-loss probe.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::rng::SplitMix64;
use crate::data::{gen_synthetic, load_cifar10_dir, read_wopt, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::macs::MacCounters;
use crate::metrics::MetricsRecord;
use crate::nn::Architecture;
use crate::optimizer::{HyperParams, Trainer};
use crate::Method;

/// Where the train and test sets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// A directory holding the six CIFAR-10 binary batch files.
    Cifar10 {
        dir: PathBuf,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
    },
    /// Two WOPT1 files.
    Files {
        train: PathBuf,
        test: PathBuf,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DataSource::Synthetic(spec) => {
                let data = gen_synthetic(spec)?;
                Ok((data.train, data.test))
            }
            DataSource::Cifar10 {
                dir,
                train_limit,
                test_limit,
            } => load_cifar10_dir(dir, *train_limit, *test_limit),
            DataSource::Files { train, test } => {
                let read = |p: &PathBuf| read_wopt(BufReader::new(File::open(p)?));
                Ok((read(train)?, read(test)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seed: u64,
    pub epochs: usize,
    /// Hidden widths when the samples are row vectors (MLP).
    pub hidden: Vec<usize>,
    pub data: DataSource,
    pub hyper: HyperParams,
}

impl ExperimentConfig {
    pub fn new(method: Method, data: DataSource) -> Self {
        Self {
            method,
            seed: 1,
            epochs: 5,
            hidden: vec![64],
            data,
            hyper: HyperParams::defaults(method),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden widths must be >= 1".into()));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        self.hyper.validate(self.method)
    }

    /// MLP for row-vector samples, the desk convnet for `1024×C` images.
    pub fn architecture(&self, train: &Dataset) -> Result<Architecture> {
        let (n, m) = train
            .sample_shape()
            .ok_or(Error::EmptyInput("training set"))?;
        match (n, m) {
            (1, m) => Ok(Architecture::mlp(m, &self.hidden, train.classes)),
            (1024, c) => Ok(Architecture::desk_convnet(c, train.classes)),
            (n, m) => Err(Error::InvalidParameter(format!(
                "no architecture for {n}x{m} samples (expected 1xM or 1024xC)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub method: Method,
    pub seed: u64,
    pub epochs: usize,
    pub steps: u64,
    pub blocks: u64,
    pub final_train_loss: f64,
    pub final_test_acc: f64,
    pub macs: MacCounters,
    pub wall_ms: u64,
    pub records: Vec<MetricsRecord>,
}

/// Trains for `cfg.epochs` epochs, calling `on_epoch` with each epoch's
/// metrics row as soon as it is available.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    mut on_epoch: impl FnMut(&MetricsRecord),
) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let arch = cfg.architecture(train)?;
    let mut rng = SplitMix64::new(cfg.seed);
    let network = arch.build(&mut rng.fork())?;
    let mut order_rng = rng.fork();
    let mut trainer = Trainer::new(network, cfg.method, cfg.hyper.clone())?;

    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut train_loss = f64::NAN;
    let mut test_acc = f64::NAN;
    for epoch in 0..cfg.epochs {
        train_loss = trainer.run_epoch(train, epoch, &mut order_rng)?;
        test_acc = trainer.evaluate(test)?.1;
        let wall_ms = start.elapsed().as_millis() as u64;
        let record = trainer.metrics_record(epoch, train_loss, test_acc, wall_ms)?;
        log::info!(
            "epoch {epoch}: loss {train_loss:.4} acc {test_acc:.4} kappa {:.3} rho {:.3}",
            record.kappa_mean,
            record.rho_mean
        );
        on_epoch(&record);
        records.push(record);
    }
    Ok(ExperimentSummary {
        method: cfg.method,
        seed: cfg.seed,
        epochs: cfg.epochs,
        steps: trainer.step,
        blocks: trainer.block,
        final_train_loss: train_loss,
        final_test_acc: test_acc,
        macs: trainer.macs,
        wall_ms: start.elapsed().as_millis() as u64,
        records,
    })
}

/// Settings of [`steps_to_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossProbe {
    pub target: f64,
    /// Batches between evaluations.
    pub every: u64,
    /// Give up after this many batches.
    pub max_steps: u64,
}

/// Batches until the mean loss on `probe_set` first drops below
/// `probe.target`, checked every `probe.every` batches, or `None` if that
/// does not happen within `probe.max_steps`. Batches are drawn from
/// reshuffled passes over `train`.
pub fn steps_to_loss(
    trainer: &mut Trainer,
    train: &Dataset,
    probe_set: &Dataset,
    probe: LossProbe,
    rng: &mut SplitMix64,
) -> Result<Option<u64>> {
    let b = trainer.hyper.batch_size;
    if train.len() < b {
        return Err(Error::EmptyInput("training set shorter than one batch"));
    }
    let every = probe.every.max(1);
    let mut order: Vec<usize> = Vec::new();
    let mut pos = 0;
    while trainer.step < probe.max_steps {
        if pos + b > order.len() {
            order = (0..train.len()).collect();
            rng.shuffle(&mut order);
            pos = 0;
        }
        trainer.train_batch(train, &order[pos..pos + b])?;
        pos += b;
        if trainer.step.is_multiple_of(every) && trainer.evaluate(probe_set)?.0 < probe.target {
            return Ok(Some(trainer.step));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let spec = SyntheticSpec {
            dim: 8,
            classes: 3,
            samples_train: 256,
            samples_test: 64,
            ..SyntheticSpec::default()
        };
        let mut cfg = ExperimentConfig::new(Method::Evd, DataSource::Synthetic(spec));
        cfg.epochs = 2;
        cfg.hidden = vec![16];
        cfg.hyper.batch_size = 16;
        cfg
    }

    #[test]
    fn runs_and_logs_every_epoch() {
        let cfg = tiny();
        let (train, test) = cfg.data.load().unwrap();
        let mut seen = 0;
        let summary = run_experiment(&cfg, &train, &test, |_| seen += 1).unwrap();
        assert_eq!(seen, 2);
        assert_eq!(summary.steps, 32);
        assert_eq!(summary.blocks, 8);
        assert!(summary.records.iter().all(|r| r.kappa_mean.is_finite()));
    }

    #[test]
    fn same_seed_same_summary() {
        let cfg = tiny();
        let (train, test) = cfg.data.load().unwrap();
        let a = run_experiment(&cfg, &train, &test, |_| {}).unwrap();
        let b = run_experiment(&cfg, &train, &test, |_| {}).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.rho_mean.to_bits(), y.rho_mean.to_bits());
        }
    }

    #[test]
    fn rejects_unknown_sample_shape() {
        let cfg = tiny();
        let ds = Dataset {
            samples: vec![crate::Matrix::zeros(3, 3)],
            labels: vec![0],
            classes: 2,
        };
        assert!(cfg.architecture(&ds).is_err());
    }

    #[test]
    fn probe_gives_up_at_cap() {
        let cfg = tiny();
        let (train, _) = cfg.data.load().unwrap();
        let mut rng = SplitMix64::new(2);
        let net = cfg.architecture(&train).unwrap().build(&mut rng).unwrap();
        let mut trainer = Trainer::new(net, Method::Baseline, cfg.hyper.clone()).unwrap();
        let probe = LossProbe {
            target: 0.0,
            every: 5,
            max_steps: 20,
        };
        assert_eq!(
            steps_to_loss(&mut trainer, &train, &train, probe, &mut rng).unwrap(),
            None
        );
        assert_eq!(trainer.step, 20);
    }
}
