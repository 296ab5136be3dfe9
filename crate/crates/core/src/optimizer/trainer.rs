use std::slice;

use super::{compensate_bias, sgd_step, transform_gradients, HyperParams, OptimizerConfig};
use crate::data::rng::SplitMix64;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::macs::MacCounters;
use crate::metrics::{aggregate_layers, layer_metrics, LayerMetrics, MetricsRecord};
use crate::moments::{BlockAccumulator, MomentState};
use crate::nn::{argmax, softmax_cross_entropy, GenericLinearLayer, LayerGradients, Network};
use crate::par;
use crate::recursive::{RecursiveState, StepReport};
use crate::zca::WhitenState;
use crate::Method;

/// Whitening and optimizer state of one layer.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub moments: MomentState,
    pub acc: BlockAccumulator,
    pub whiten: WhitenState,
    pub recursive: Option<RecursiveState>,
    pub velocity: LayerGradients,
    /// `T Φ_x Tᵀ` at the last block boundary, with the transform that was
    /// in force during that block.
    pub last_phi_y: Option<Matrix>,
    /// When false the layer trains as in the baseline: no centering, no
    /// gradient transform. Statistics are still tracked.
    pub whitened: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    /// Mean loss over the batch, before the update.
    pub loss: f64,
    pub block: Option<BlockReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    /// Index of the block that just closed.
    pub block: u64,
    pub macs: MacCounters,
    /// Recursive step of each layer, if any.
    pub steps: Vec<Option<StepReport>>,
}

/// Gradient-based whitening trainer.
///
/// The network's weights are the folded `W̃`; the forward pass subtracts
/// each layer's frozen mean, and every batch gradient is right-multiplied
/// by the layer's `Q_s` before the SGD update. Statistics are closed every
/// `L` batches.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub network: Network,
    pub layers: Vec<LayerState>,
    pub hyper: HyperParams,
    pub method: Method,
    /// Batches processed so far.
    pub step: u64,
    /// Blocks closed so far.
    pub block: u64,
    pub macs: MacCounters,
    pub loss_history: Vec<f64>,
    /// Keeps `T`, `Q_s` and the frozen means fixed at block boundaries.
    pub freeze_whitening: bool,
    eta: f64,
}

struct SampleOutcome {
    loss: f64,
    grads: Vec<LayerGradients>,
    accs: Vec<BlockAccumulator>,
}

impl Trainer {
    pub fn new(network: Network, method: Method, hyper: HyperParams) -> Result<Self> {
        hyper.validate(method)?;
        let layers = network
            .layers
            .iter()
            .map(|layer| {
                let m = layer.shape().m;
                Ok(LayerState {
                    moments: MomentState::new(m, hyper.alpha)?,
                    acc: BlockAccumulator::new(m),
                    whiten: WhitenState::new(m, hyper.beta, method)?,
                    recursive: match method {
                        Method::Recursive => Some(RecursiveState::new(m, hyper.recursive())?),
                        _ => None,
                    },
                    velocity: layer.zero_gradients(),
                    last_phi_y: None,
                    whitened: true,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let eta = hyper.eta;
        Ok(Self {
            network,
            layers,
            hyper,
            method,
            step: 0,
            block: 0,
            macs: MacCounters::default(),
            loss_history: Vec::new(),
            freeze_whitening: false,
            eta,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn set_eta(&mut self, eta: f64) {
        self.eta = eta;
    }

    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            eta: self.eta,
            ..self.hyper.optimizer(self.method)
        }
    }

    /// Frozen per-layer means used by the forward pass.
    pub fn means(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|s| s.whiten.frozen_mean.clone())
            .collect()
    }

    /// Installs a fixed transform and mean for layer `l`, with
    /// `Q = Q_s = TᵀT`. The layer's weights are not touched.
    pub fn inject_whitening(&mut self, l: usize, t: Matrix, mean: Vec<f64>) -> Result<()> {
        let state = self
            .layers
            .get_mut(l)
            .ok_or_else(|| Error::InvalidParameter(format!("no layer {l}")))?;
        let m = state.whiten.dim();
        t.require_shape("Trainer::inject_whitening", m, m)?;
        if mean.len() != m {
            return Err(crate::error::mismatch(
                "Trainer::inject_whitening mean",
                m,
                mean.len(),
            ));
        }
        let q = crate::zca::build_q(&t)?;
        state.whiten.t = t;
        state.whiten.q = q.clone();
        state.whiten.q_s = q;
        state.whiten.frozen_mean = mean;
        Ok(())
    }

    /// One SGD step on the samples `indices` of `data`.
    pub fn train_batch(&mut self, data: &Dataset, indices: &[usize]) -> Result<BatchReport> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("training batch"));
        }
        let means = self.means();
        let stride = self.hyper.subsample_stride;
        let network = &self.network;
        let outcomes = par::map_chunks(indices, 1, |_, chunk| -> Result<SampleOutcome> {
            let i = chunk[0];
            let mut grads = network.zero_gradients();
            let (loss, trace) =
                network.loss_and_gradients(&data.samples[i], data.labels[i], &means, &mut grads)?;
            let accs = trace
                .inputs
                .iter()
                .map(|x| {
                    let mut acc = BlockAccumulator::new(x.cols());
                    acc.accumulate(slice::from_ref(x), stride)?;
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleOutcome { loss, grads, accs })
        });

        let mut grads = self.network.zero_gradients();
        let mut loss = 0.0;
        for outcome in outcomes {
            let outcome = outcome?;
            loss += outcome.loss;
            for (total, g) in grads.iter_mut().zip(&outcome.grads) {
                total.add_assign(g);
            }
            for (state, acc) in self.layers.iter_mut().zip(&outcome.accs) {
                state.acc.merge(acc)?;
            }
        }
        let inv_b = 1.0 / indices.len() as f64;
        loss *= inv_b;
        if !loss.is_finite() {
            let err = Error::NonFinite(format!(
                "training loss at step {} (block {})",
                self.step, self.block
            ));
            // Point at the first layer whose parameters have already blown up.
            let bad = self.network.layers.iter().position(|l| {
                !(l.weights.iter().all(Matrix::is_finite) && l.bias.iter().all(|b| b.is_finite()))
            });
            return Err(match bad {
                Some(l) => err.at_layer(l, self.block),
                None => err,
            });
        }

        let cfg = self.optimizer();
        for (l, ((layer, state), g)) in self
            .network
            .layers
            .iter_mut()
            .zip(&mut self.layers)
            .zip(&mut grads)
            .enumerate()
        {
            g.scale(inv_b);
            if self.method != Method::Baseline && state.whitened {
                self.macs.gradient_transform += transform_gradients(g, &state.whiten.q_s)?;
            }
            sgd_step(layer, &mut state.velocity, g, &cfg).map_err(|e| e.at_layer(l, self.block))?;
        }

        self.step += 1;
        self.loss_history.push(loss);
        let block = if self.step.is_multiple_of(self.hyper.block_batches as u64) {
            Some(self.block_update()?)
        } else {
            None
        };
        Ok(BatchReport { loss, block })
    }

    /// Closes the current block on every layer.
    ///
    /// Per layer: finalize the moments, record `Φ_y` under the outgoing
    /// transform, compensate the bias for the mean change, rebuild `T` and
    /// `Q`, smooth `Q_s`, and advance the frozen mean.
    pub fn block_update(&mut self) -> Result<BlockReport> {
        let block = self.block;
        let method = self.method;
        let hyper = &self.hyper;
        let freeze = self.freeze_whitening;
        let mut work: Vec<_> = self
            .network
            .layers
            .iter_mut()
            .zip(&mut self.layers)
            .map(|(layer, state)| (layer, state, None))
            .collect();
        par::for_each_mut(&mut work, |_, (layer, state, out)| {
            *out = Some(close_layer_block(layer, state, method, hyper, freeze));
        });
        let mut macs = MacCounters::default();
        let mut steps = Vec::with_capacity(work.len());
        for (l, (_, _, out)) in work.into_iter().enumerate() {
            let (m, step) = out
                .expect("every layer visited")
                .map_err(|e| e.at_layer(l, block))?;
            macs += m;
            steps.push(step);
        }
        self.macs += macs;
        self.block += 1;
        Ok(BlockReport { block, macs, steps })
    }

    /// Mean loss and accuracy over `data`.
    pub fn evaluate(&self, data: &Dataset) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Err(Error::EmptyInput("evaluation set"));
        }
        let means = self.means();
        let network = &self.network;
        let results = par::map_range(data.len(), |i| -> Result<(f64, bool)> {
            let trace = network.forward(&data.samples[i], &means)?;
            let (loss, _) = softmax_cross_entropy(&trace.logits, data.labels[i])?;
            Ok((loss, argmax(&trace.logits) == data.labels[i]))
        });
        let (mut loss, mut hits) = (0.0, 0usize);
        for r in results {
            let (l, hit) = r?;
            loss += l;
            hits += hit as usize;
        }
        let n = data.len() as f64;
        Ok((loss / n, hits as f64 / n))
    }

    /// One pass over `data` in an order shuffled by `rng`, in full batches
    /// of `B`; a trailing partial batch is dropped. Returns the mean batch
    /// loss.
    pub fn run_epoch(&mut self, data: &Dataset, epoch: usize, rng: &mut SplitMix64) -> Result<f64> {
        self.eta = self.hyper.eta_at(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        let b = self.hyper.batch_size;
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks_exact(b) {
            total += self.train_batch(data, batch)?.loss;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::EmptyInput("epoch shorter than one batch"));
        }
        Ok(total / batches as f64)
    }

    /// κ, ρ and condition number of every layer that has closed a block.
    pub fn layer_metrics(&self) -> Result<Vec<LayerMetrics>> {
        self.layers
            .iter()
            .filter_map(|s| s.last_phi_y.as_ref())
            .map(layer_metrics)
            .collect()
    }

    /// A metrics row with layer-averaged κ, ρ and condition number; `NaN`
    /// while no block has been closed.
    pub fn metrics_record(
        &self,
        epoch: usize,
        train_loss: f64,
        test_acc: f64,
        wall_ms: u64,
    ) -> Result<MetricsRecord> {
        let per_layer = self.layer_metrics()?;
        let agg = |f: fn(&LayerMetrics) -> f64| -> Result<(f64, f64)> {
            if per_layer.is_empty() {
                return Ok((f64::NAN, f64::NAN));
            }
            aggregate_layers(&per_layer.iter().map(f).collect::<Vec<_>>())
        };
        let (kappa_mean, kappa_stderr) = agg(|m| m.kappa)?;
        let (rho_mean, rho_stderr) = agg(|m| m.rho)?;
        let (cond_mean, _) = agg(|m| m.cond)?;
        Ok(MetricsRecord {
            epoch,
            step: self.step,
            train_loss,
            test_acc,
            kappa_mean,
            kappa_stderr,
            rho_mean,
            rho_stderr,
            cond_mean,
            wall_ms,
        })
    }
}

fn close_layer_block(
    layer: &mut GenericLinearLayer,
    state: &mut LayerState,
    method: Method,
    hyper: &HyperParams,
    freeze: bool,
) -> Result<(MacCounters, Option<StepReport>)> {
    let mut macs = MacCounters::default();
    if state.acc.is_empty() {
        return Ok((macs, None));
    }
    state.moments.finalize_block(&mut state.acc)?;
    if !state.moments.cov.is_finite() {
        return Err(Error::NonFinite("input covariance".into()));
    }
    let mut phi_y = match method {
        _ if !state.whitened => state.moments.cov.clone(),
        Method::Baseline => state.moments.cov.clone(),
        _ => {
            let t = &state.whiten.t;
            t.matmul(&state.moments.cov).matmul(&t.transpose())
        }
    };
    phi_y.symmetrize();
    state.last_phi_y = Some(phi_y);

    if method == Method::Baseline || freeze || !state.whitened {
        return Ok((macs, None));
    }
    let mean_new = state.moments.mean.clone();
    compensate_bias(layer, &state.whiten.frozen_mean, &mean_new)?;
    state.whiten.frozen_mean = mean_new;

    let mut step = None;
    match method {
        Method::Evd => {
            macs.whitening_build += state.whiten.update_evd(&state.moments.cov, hyper.zca())?;
        }
        Method::Recursive => {
            let rec = state
                .recursive
                .as_mut()
                .expect("recursive state for recursive method");
            let report = rec.block_step(&state.moments.cov, state.moments.mean_power)?;
            macs.whitening_build += report.estimate_macs + report.update_macs;
            macs.covariance += report.covariance_macs;
            state.whiten.t = rec.t.clone();
            state.whiten.smooth_q(&rec.q)?;
            step = Some(report);
        }
        Method::Baseline => unreachable!(),
    }
    Ok((macs, step))
}
