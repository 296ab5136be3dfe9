use super::layer::{ConvSpec, GenericLinearLayer, LayerGradients};
use super::loss::{relu_backward_in_place, relu_in_place, softmax_cross_entropy};
use crate::data::rng::SplitMix64;
use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};

/// One convolution stage of a [`Architecture::Convnet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Network presets. Hidden layers use ReLU; the classifier head feeds a
/// softmax cross-entropy loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Architecture {
    Mlp {
        input: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
    /// Convolution stages followed by a head whose kernel spans the whole
    /// remaining feature map (`R = 1`, `N = h·w`).
    Convnet {
        channels: usize,
        height: usize,
        width: usize,
        stages: Vec<ConvStage>,
        classes: usize,
    },
}

impl Architecture {
    pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> Self {
        Architecture::Mlp {
            input,
            hidden: hidden.to_vec(),
            classes,
        }
    }

    /// Two stride-2 3×3 convolutions (8 and 16 channels) and a full-extent
    /// classifier head, for `channels×32×32` images.
    pub fn desk_convnet(channels: usize, classes: usize) -> Self {
        let stage = |out| ConvStage {
            out_channels: out,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        Architecture::Convnet {
            channels,
            height: 32,
            width: 32,
            stages: vec![stage(8), stage(16)],
            classes,
        }
    }

    /// `(N, M)` of one input sample.
    pub fn input_shape(&self) -> (usize, usize) {
        match self {
            Architecture::Mlp { input, .. } => (1, *input),
            Architecture::Convnet {
                channels,
                height,
                width,
                ..
            } => (height * width, *channels),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Architecture::Mlp { classes, .. } | Architecture::Convnet { classes, .. } => *classes,
        }
    }

    /// Layers with He-normal weights drawn from `rng`.
    pub fn build(&self, rng: &mut SplitMix64) -> Result<Network> {
        let mut layers = match self {
            Architecture::Mlp {
                input,
                hidden,
                classes,
            } => {
                let mut dims = vec![*input];
                dims.extend_from_slice(hidden);
                dims.push(*classes);
                dims.windows(2)
                    .map(|w| GenericLinearLayer::dense(w[0], w[1]))
                    .collect::<Vec<_>>()
            }
            Architecture::Convnet {
                channels,
                height,
                width,
                stages,
                classes,
            } => {
                let (mut c, mut h, mut w) = (*channels, *height, *width);
                let mut layers = Vec::new();
                for st in stages {
                    let spec = ConvSpec {
                        in_channels: c,
                        out_channels: st.out_channels,
                        kernel_h: st.kernel,
                        kernel_w: st.kernel,
                        stride: st.stride,
                        padding: st.padding,
                        input_h: h,
                        input_w: w,
                    };
                    layers.push(GenericLinearLayer::conv(&spec)?);
                    c = st.out_channels;
                    h = spec.output_h();
                    w = spec.output_w();
                }
                let head = ConvSpec {
                    in_channels: c,
                    out_channels: *classes,
                    kernel_h: h,
                    kernel_w: w,
                    stride: 1,
                    padding: 0,
                    input_h: h,
                    input_w: w,
                };
                layers.push(GenericLinearLayer::conv(&head)?);
                layers
            }
        };
        for layer in &mut layers {
            layer.init_he(rng);
        }
        Network::new(layers)
    }
}

/// Inputs seen by each layer during one forward pass, plus the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `inputs[l]` is what layer `l` consumed (post-ReLU for `l > 0`).
    pub inputs: Vec<Matrix>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<GenericLinearLayer>,
}

impl Network {
    pub fn new(layers: Vec<GenericLinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("network without layers"));
        }
        for pair in layers.windows(2) {
            let (a, b) = (pair[0].shape(), pair[1].shape());
            if a.r != b.n || a.s != b.m {
                return Err(mismatch(
                    "Network layer chaining",
                    format!("{}x{}", b.n, b.m),
                    format!("{}x{}", a.r, a.s),
                ));
            }
        }
        if layers.last().map(|l| l.shape().r) != Some(1) {
            return Err(Error::InvalidParameter(
                "classifier head must have R = 1".into(),
            ));
        }
        Ok(Self { layers })
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.shape().m).collect()
    }

    pub fn zero_gradients(&self) -> Vec<LayerGradients> {
        self.layers
            .iter()
            .map(GenericLinearLayer::zero_gradients)
            .collect()
    }

    /// Forward pass with per-layer frozen means.
    pub fn forward(&self, x: &Matrix, means: &[Vec<f64>]) -> Result<ForwardTrace> {
        if means.len() != self.layers.len() {
            return Err(mismatch(
                "Network::forward means",
                self.layers.len(),
                means.len(),
            ));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        let last = self.layers.len() - 1;
        for (l, (layer, mean)) in self.layers.iter().zip(means).enumerate() {
            let mut z = layer.forward(&current, mean)?;
            inputs.push(current);
            if l < last {
                relu_in_place(&mut z);
            }
            current = z;
        }
        Ok(ForwardTrace {
            inputs,
            logits: current.row(0).to_vec(),
        })
    }

    /// Backpropagates `dlogits`, adding parameter gradients into `grads`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        means: &[Vec<f64>],
        dlogits: &[f64],
        grads: &mut [LayerGradients],
    ) -> Result<Matrix> {
        let mut dz = Matrix::from_vec(1, dlogits.len(), dlogits.to_vec())?;
        for l in (0..self.layers.len()).rev() {
            let dx = self.layers[l].accumulate_backward(
                &trace.inputs[l],
                &means[l],
                &dz,
                &mut grads[l],
            )?;
            dz = dx;
            if l > 0 {
                relu_backward_in_place(&mut dz, &trace.inputs[l]);
            }
        }
        Ok(dz)
    }

    /// Loss of one labelled sample, accumulating its gradients.
    pub fn loss_and_gradients(
        &self,
        x: &Matrix,
        label: usize,
        means: &[Vec<f64>],
        grads: &mut [LayerGradients],
    ) -> Result<(f64, ForwardTrace)> {
        let trace = self.forward(x, means)?;
        let (loss, dlogits) = softmax_cross_entropy(&trace.logits, label)?;
        self.backward(&trace, means, &dlogits, grads)?;
        Ok((loss, trace))
    }

    pub fn loss(&self, x: &Matrix, label: usize, means: &[Vec<f64>]) -> Result<f64> {
        let trace = self.forward(x, means)?;
        Ok(softmax_cross_entropy(&trace.logits, label)?.0)
    }

    pub fn predict(&self, x: &Matrix, means: &[Vec<f64>]) -> Result<usize> {
        let trace = self.forward(x, means)?;
        Ok(argmax(&trace.logits))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_layer_shapes() {
        let mut rng = SplitMix64::new(3);
        let net = Architecture::mlp(32, &[64], 10).build(&mut rng).unwrap();
        assert_eq!(net.input_dims(), vec![32, 64]);
    }

    #[test]
    fn convnet_head_spans_feature_map() {
        let mut rng = SplitMix64::new(3);
        let net = Architecture::desk_convnet(3, 10).build(&mut rng).unwrap();
        let shapes: Vec<_> = net.layers.iter().map(|l| l.shape()).collect();
        assert_eq!(shapes[2].n, 64);
        assert_eq!(shapes[2].m, 16);
        assert_eq!(shapes[2].r, 1);
        assert_eq!(net.layers[2].weights.len(), 64);
    }

    #[test]
    fn rejects_bad_chaining() {
        let a = GenericLinearLayer::dense(3, 4);
        let b = GenericLinearLayer::dense(5, 2);
        assert!(Network::new(vec![a, b]).is_err());
    }
}
