//! Direct whitening: every layer input is transformed as `y = T (x − μ)`
//! before `z = W y + b`, and gradients flow back through `Tᵀ`. Slow by
//! construction; it is the reference the gradient-based trainer is checked
//! against.

use crate::data::Dataset;
use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    direct_whiten_backward, direct_whiten_forward, relu_backward_in_place, relu_in_place,
    softmax_cross_entropy, LayerGradients, Network,
};

#[derive(Debug, Clone)]
pub struct DirectNetwork {
    /// Unfolded weights `W` and biases `b`.
    pub network: Network,
    pub transforms: Vec<Matrix>,
    pub means: Vec<Vec<f64>>,
    /// MACs spent transforming activations and their gradients.
    pub transform_macs: u64,
}

struct DirectTrace {
    /// Raw inputs `x` of each layer.
    inputs: Vec<Matrix>,
    /// Whitened inputs `y` of each layer.
    whitened: Vec<Matrix>,
    logits: Vec<f64>,
}

impl DirectNetwork {
    /// Identity transforms and zero means.
    pub fn new(network: Network) -> Self {
        let dims = network.input_dims();
        Self {
            transforms: dims.iter().map(|&m| Matrix::identity(m)).collect(),
            means: dims.iter().map(|&m| vec![0.0; m]).collect(),
            network,
            transform_macs: 0,
        }
    }

    pub fn set_whitening(&mut self, l: usize, t: Matrix, mean: Vec<f64>) -> Result<()> {
        let m = *self
            .network
            .input_dims()
            .get(l)
            .ok_or_else(|| Error::InvalidParameter(format!("no layer {l}")))?;
        t.require_shape("DirectNetwork::set_whitening", m, m)?;
        if mean.len() != m {
            return Err(mismatch("DirectNetwork::set_whitening mean", m, mean.len()));
        }
        self.transforms[l] = t;
        self.means[l] = mean;
        Ok(())
    }

    /// The equivalent gradient-side network: `W̃_rn = W_rn T`, `b̃ = b`.
    pub fn folded(&self) -> Network {
        let mut net = self.network.clone();
        for (layer, t) in net.layers.iter_mut().zip(&self.transforms) {
            for w in &mut layer.weights {
                *w = w.matmul(t);
            }
        }
        net
    }

    fn forward(&self, x: &Matrix) -> Result<(DirectTrace, u64)> {
        let n_layers = self.network.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut whitened = Vec::with_capacity(n_layers);
        let mut macs = 0;
        let mut current = x.clone();
        for (l, layer) in self.network.layers.iter().enumerate() {
            let (y, c) = direct_whiten_forward(&current, &self.transforms[l], &self.means[l])?;
            macs += c;
            let zero = vec![0.0; y.cols()];
            let mut z = layer.forward(&y, &zero)?;
            if l + 1 < n_layers {
                relu_in_place(&mut z);
            }
            inputs.push(current);
            whitened.push(y);
            current = z;
        }
        Ok((
            DirectTrace {
                inputs,
                whitened,
                logits: current.row(0).to_vec(),
            },
            macs,
        ))
    }

    fn loss_and_gradients(
        &mut self,
        x: &Matrix,
        label: usize,
        grads: &mut [LayerGradients],
    ) -> Result<f64> {
        let (trace, mut macs) = self.forward(x)?;
        let (loss, dlogits) = softmax_cross_entropy(&trace.logits, label)?;
        let mut dz = Matrix::from_vec(1, dlogits.len(), dlogits)?;
        for l in (0..self.network.layers.len()).rev() {
            let y = &trace.whitened[l];
            let zero = vec![0.0; y.cols()];
            let dy = self.network.layers[l].accumulate_backward(y, &zero, &dz, &mut grads[l])?;
            let (mut dx, c) = direct_whiten_backward(&dy, &self.transforms[l])?;
            macs += c;
            if l > 0 {
                relu_backward_in_place(&mut dx, &trace.inputs[l]);
            }
            dz = dx;
        }
        self.transform_macs += macs;
        Ok(loss)
    }

    /// One plain SGD step, `W ← W − η ∂ℒ/∂W`, on the mean batch loss.
    pub fn train_batch(&mut self, data: &Dataset, indices: &[usize], eta: f64) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("training batch"));
        }
        let mut grads = self.network.zero_gradients();
        let mut loss = 0.0;
        for &i in indices {
            loss += self.loss_and_gradients(&data.samples[i], data.labels[i], &mut grads)?;
        }
        let inv_b = 1.0 / indices.len() as f64;
        for (layer, g) in self.network.layers.iter_mut().zip(&mut grads) {
            g.scale(inv_b);
            if !g.is_finite() {
                return Err(Error::NonFinite("direct-path gradient".into()));
            }
            for (w, dw) in layer.weights.iter_mut().zip(&g.dw) {
                w.axpy(-eta, dw);
            }
            layer
                .bias
                .iter_mut()
                .zip(&g.db)
                .for_each(|(b, d)| *b -= eta * d);
        }
        Ok(loss * inv_b)
    }

    pub fn loss(&self, x: &Matrix, label: usize) -> Result<f64> {
        let (trace, _) = self.forward(x)?;
        Ok(softmax_cross_entropy(&trace.logits, label)?.0)
    }
}
