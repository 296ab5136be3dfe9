//! Training orchestration: the gradient-side whitening transform, SGD with
//! momentum and weight decay, bias compensation at block boundaries, and
//! the direct-whitening reference path.

pub mod direct;
mod trainer;

pub use trainer::{BatchReport, BlockReport, LayerState, Trainer};

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;
use crate::nn::{GenericLinearLayer, LayerGradients};
use crate::recursive::RecursiveParams;
use crate::zca::ZcaParams;
use crate::Method;

/// SGD schedule for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Samples per batch, `B`.
    pub batch_size: usize,
    /// Batches per block, `L`.
    pub block_batches: usize,
    pub method: Method,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 || self.block_batches == 0 {
            return Err(Error::InvalidParameter(
                "batch_size and block_batches must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Every tunable of a run, optimizer and whitening alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub g_max: f64,
    pub c_rel: f64,
    pub c_abs: f64,
    pub block_batches: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs at which `eta` is divided by 10.
    pub lr_milestones: Vec<usize>,
    /// Every `stride`-th spatial position of a sample enters the moments.
    pub subsample_stride: usize,
    pub allow_amplify: bool,
    /// Blocks between fresh `T Φ_x Tᵀ` products on the recursive path.
    pub refresh_every: usize,
}

impl HyperParams {
    /// Per-method defaults: α, β, γ, δ, ε, g_max, c_rel, c_abs as in the
    /// published experiments, SGD at η = 0.1 with momentum 0.9 and weight
    /// decay 5e−4.
    pub fn defaults(method: Method) -> Self {
        let base = Self {
            alpha: 0.9,
            beta: 0.95,
            gamma: 0.99,
            delta: 0.25,
            epsilon: 1e-5,
            g_max: 10.0,
            c_rel: 0.025,
            c_abs: 1e-6,
            block_batches: 4,
            batch_size: 32,
            eta: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_milestones: Vec::new(),
            subsample_stride: 1,
            allow_amplify: false,
            refresh_every: 1,
        };
        match method {
            Method::Baseline | Method::Evd => base,
            Method::Recursive => Self {
                alpha: 0.1,
                beta: 0.1,
                ..base
            },
        }
    }

    pub fn optimizer(&self, method: Method) -> OptimizerConfig {
        OptimizerConfig {
            eta: self.eta,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            block_batches: self.block_batches,
            method,
        }
    }

    pub fn zca(&self) -> ZcaParams {
        ZcaParams {
            g_max: self.g_max,
            epsilon: self.epsilon,
        }
    }

    pub fn recursive(&self) -> RecursiveParams {
        RecursiveParams {
            gamma: self.gamma,
            delta: self.delta,
            c_rel: self.c_rel,
            c_abs: self.c_abs,
            epsilon: self.epsilon,
            allow_amplify: self.allow_amplify,
            refresh_every: self.refresh_every,
        }
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn eta_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_milestones.iter().filter(|&&e| epoch >= e).count();
        self.eta * 0.1f64.powi(drops as i32)
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        self.optimizer(method).validate()?;
        self.recursive().validate()?;
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1), got {v}"
                )))
            }
        };
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        if self.g_max.is_nan() || self.g_max < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "g_max must be >= 1, got {}",
                self.g_max
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.subsample_stride == 0 {
            return Err(Error::InvalidParameter(
                "subsample_stride must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Right-multiplies every weight gradient block by `Q_s`; the bias gradient
/// is left alone. Returns the multiply–accumulate count.
pub fn transform_gradients(grads: &mut LayerGradients, q_s: &Matrix) -> Result<u64> {
    let m = q_s.require_square()?;
    let mut macs = 0;
    for dw in &mut grads.dw {
        if dw.cols() != m {
            return Err(mismatch("transform_gradients", m, dw.cols()));
        }
        macs += dw.matmul_macs(q_s);
        *dw = dw.matmul(q_s);
    }
    Ok(macs)
}

/// `v ← μ v + (g + λ p)`, `p ← p − η v`, for weights and bias alike.
pub fn sgd_step(
    layer: &mut GenericLinearLayer,
    velocity: &mut LayerGradients,
    grads: &LayerGradients,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if grads.dw.len() != layer.weights.len() || velocity.dw.len() != layer.weights.len() {
        return Err(mismatch(
            "sgd_step weight blocks",
            layer.weights.len(),
            grads.dw.len(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("weight gradient".into()));
    }
    let (mu, wd, eta) = (cfg.momentum, cfg.weight_decay, cfg.eta);
    let update = |p: &mut [f64], v: &mut [f64], g: &[f64]| {
        for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = mu * *v + (g + wd * *p);
            *p -= eta * *v;
        }
    };
    for ((w, v), g) in layer
        .weights
        .iter_mut()
        .zip(&mut velocity.dw)
        .zip(&grads.dw)
    {
        update(w.data_mut(), v.data_mut(), g.data());
    }
    update(&mut layer.bias, &mut velocity.db, &grads.db);
    Ok(())
}

/// `b̃ ← b̃ + (1/R) Σ_{r,n} W̃_rn (μ_new − μ_old)`, which keeps
/// `W̃(x − μ) + b̃` unchanged when the frozen mean moves.
pub fn compensate_bias(
    layer: &mut GenericLinearLayer,
    mean_old: &[f64],
    mean_new: &[f64],
) -> Result<()> {
    let m = layer.shape().m;
    if mean_old.len() != m || mean_new.len() != m {
        return Err(mismatch(
            "compensate_bias",
            m,
            mean_old.len().max(mean_new.len()),
        ));
    }
    let shift: Vec<f64> = mean_new.iter().zip(mean_old).map(|(a, b)| a - b).collect();
    if shift.iter().all(|&d| d == 0.0) {
        return Ok(());
    }
    let delta = layer.mean_response(&shift);
    layer.bias.iter_mut().zip(delta).for_each(|(b, d)| *b += d);
    Ok(())
}
