use crate::data::rng::SplitMix64;
use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// One term `W_w x_input` of an output position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tap {
    pub input: usize,
    pub weight: usize,
}

/// `(M, N, S, R)`: input features, input positions, output features,
/// output positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub r: usize,
}

/// 2-D convolution geometry over a row-major `input_h × input_w` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub input_h: usize,
    pub input_w: usize,
}

impl ConvSpec {
    pub fn output_h(&self) -> usize {
        (self.input_h + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn output_w(&self) -> usize {
        (self.input_w + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.stride == 0 {
            return Err(Error::InvalidParameter(format!(
                "degenerate conv spec {self:?}"
            )));
        }
        if self.kernel_h == 0
            || self.kernel_w == 0
            || self.kernel_h > self.input_h + 2 * self.padding
            || self.kernel_w > self.input_w + 2 * self.padding
        {
            return Err(Error::InvalidParameter(format!(
                "kernel does not fit input: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `z_r = Σ_n W̃_rn (x_n − μ) + b̃`.
///
/// Only the nonzero blocks `W̃_rn` are listed, as taps. Distinct parameter
/// matrices live in `weights`; a tap refers to one by index, so a
/// convolution shares its `kernel_h·kernel_w` matrices across all output
/// positions. Zero-padded positions have no tap and contribute nothing, in
/// particular no `−W μ` term.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericLinearLayer {
    shape: LayerShape,
    /// Distinct `S×M` weight blocks.
    pub weights: Vec<Matrix>,
    pub bias: Vec<f64>,
    taps: Arc<Vec<Vec<Tap>>>,
}

impl GenericLinearLayer {
    /// Fully-connected layer (`N = R = 1`).
    pub fn dense(m: usize, s: usize) -> Self {
        Self::from_taps(
            LayerShape { m, n: 1, s, r: 1 },
            1,
            vec![vec![Tap {
                input: 0,
                weight: 0,
            }]],
        )
    }

    /// Every `(r, n)` pair has its own weight block `W̃_rn` at index `r·N + n`.
    pub fn full(m: usize, n: usize, s: usize, r: usize) -> Self {
        let taps = (0..r)
            .map(|ri| {
                (0..n)
                    .map(|ni| Tap {
                        input: ni,
                        weight: ri * n + ni,
                    })
                    .collect()
            })
            .collect();
        Self::from_taps(LayerShape { m, n, s, r }, r * n, taps)
    }

    /// Convolution with zero padding; weight `ki·kernel_w + kj` is the kernel
    /// tap at offset `(ki, kj)`.
    pub fn conv(spec: &ConvSpec) -> Result<Self> {
        spec.validate()?;
        let (oh, ow) = (spec.output_h(), spec.output_w());
        let mut taps = Vec::with_capacity(oh * ow);
        for orow in 0..oh {
            for ocol in 0..ow {
                let mut list = Vec::with_capacity(spec.kernel_h * spec.kernel_w);
                for ki in 0..spec.kernel_h {
                    let ih = (orow * spec.stride + ki) as isize - spec.padding as isize;
                    if ih < 0 || ih >= spec.input_h as isize {
                        continue;
                    }
                    for kj in 0..spec.kernel_w {
                        let iw = (ocol * spec.stride + kj) as isize - spec.padding as isize;
                        if iw < 0 || iw >= spec.input_w as isize {
                            continue;
                        }
                        list.push(Tap {
                            input: ih as usize * spec.input_w + iw as usize,
                            weight: ki * spec.kernel_w + kj,
                        });
                    }
                }
                taps.push(list);
            }
        }
        Ok(Self::from_taps(
            LayerShape {
                m: spec.in_channels,
                n: spec.input_h * spec.input_w,
                s: spec.out_channels,
                r: oh * ow,
            },
            spec.kernel_h * spec.kernel_w,
            taps,
        ))
    }

    fn from_taps(shape: LayerShape, n_weights: usize, taps: Vec<Vec<Tap>>) -> Self {
        Self {
            shape,
            weights: vec![Matrix::zeros(shape.s, shape.m); n_weights],
            bias: vec![0.0; shape.s],
            taps: Arc::new(taps),
        }
    }

    pub fn shape(&self) -> LayerShape {
        self.shape
    }

    pub fn taps(&self) -> &[Vec<Tap>] {
        &self.taps
    }

    /// Largest number of taps feeding one output position.
    pub fn fan_in(&self) -> usize {
        self.taps.iter().map(Vec::len).max().unwrap_or(0) * self.shape.m
    }

    /// He-normal weights, zero bias.
    pub fn init_he(&mut self, rng: &mut SplitMix64) {
        let std = (2.0 / self.fan_in().max(1) as f64).sqrt();
        for w in &mut self.weights {
            for x in w.data_mut() {
                *x = std * rng.next_normal();
            }
        }
        self.bias.fill(0.0);
    }

    pub fn zero_gradients(&self) -> LayerGradients {
        LayerGradients {
            dw: vec![Matrix::zeros(self.shape.s, self.shape.m); self.weights.len()],
            db: vec![0.0; self.shape.s],
        }
    }

    fn check_input(&self, x: &Matrix, mean: &[f64]) -> Result<()> {
        x.require_shape("GenericLinearLayer input", self.shape.n, self.shape.m)?;
        if mean.len() != self.shape.m {
            return Err(mismatch(
                "GenericLinearLayer mean",
                self.shape.m,
                mean.len(),
            ));
        }
        Ok(())
    }

    fn centered(x: &Matrix, mean: &[f64]) -> Matrix {
        let mut xc = x.clone();
        for n in 0..xc.rows() {
            for (a, &mu) in xc.row_mut(n).iter_mut().zip(mean) {
                *a -= mu;
            }
        }
        xc
    }

    /// `z` (`R×S`) for one sample `x` (`N×M`).
    pub fn forward(&self, x: &Matrix, mean: &[f64]) -> Result<Matrix> {
        self.check_input(x, mean)?;
        let xc = Self::centered(x, mean);
        let LayerShape { s, r, .. } = self.shape;
        let mut z = Matrix::zeros(r, s);
        for (ri, taps) in self.taps.iter().enumerate() {
            let zr = z.row_mut(ri);
            zr.copy_from_slice(&self.bias);
            for tap in taps {
                let w = &self.weights[tap.weight];
                let xn = xc.row(tap.input);
                for (si, zv) in zr.iter_mut().enumerate() {
                    *zv += dot(w.row(si), xn);
                }
            }
        }
        Ok(z)
    }

    /// Adds this sample's parameter gradients to `grads` and returns `∂ℒ/∂x`.
    pub fn accumulate_backward(
        &self,
        x: &Matrix,
        mean: &[f64],
        dz: &Matrix,
        grads: &mut LayerGradients,
    ) -> Result<Matrix> {
        self.check_input(x, mean)?;
        let LayerShape { m, n, s, r } = self.shape;
        dz.require_shape("GenericLinearLayer upstream gradient", r, s)?;
        if grads.dw.len() != self.weights.len() || grads.db.len() != s {
            return Err(mismatch(
                "LayerGradients",
                self.weights.len(),
                grads.dw.len(),
            ));
        }
        let xc = Self::centered(x, mean);
        let mut dx = Matrix::zeros(n, m);
        for (ri, taps) in self.taps.iter().enumerate() {
            let dzr = dz.row(ri);
            for (b, &g) in grads.db.iter_mut().zip(dzr) {
                *b += g;
            }
            for tap in taps {
                let w = &self.weights[tap.weight];
                let dw = &mut grads.dw[tap.weight];
                let xn = xc.row(tap.input);
                for (si, &g) in dzr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (d, &xv) in dw.row_mut(si).iter_mut().zip(xn) {
                        *d += g * xv;
                    }
                    for (d, &wv) in dx.row_mut(tap.input).iter_mut().zip(w.row(si)) {
                        *d += g * wv;
                    }
                }
            }
        }
        Ok(dx)
    }

    /// Single-sample backward pass.
    pub fn backward(
        &self,
        x: &Matrix,
        mean: &[f64],
        dz: &Matrix,
    ) -> Result<(LayerGradients, Matrix)> {
        let mut grads = self.zero_gradients();
        let dx = self.accumulate_backward(x, mean, dz, &mut grads)?;
        Ok((grads, dx))
    }

    /// `(1/R) Σ_{r,n} W̃_rn v`
    pub fn mean_response(&self, v: &[f64]) -> Vec<f64> {
        let s = self.shape.s;
        let mut counts = vec![0usize; self.weights.len()];
        for taps in self.taps.iter() {
            for tap in taps {
                counts[tap.weight] += 1;
            }
        }
        let mut out = vec![0.0; s];
        for (w, &count) in self.weights.iter().zip(&counts) {
            if count == 0 {
                continue;
            }
            let wv = w.matvec(v);
            for (o, x) in out.iter_mut().zip(wv) {
                *o += count as f64 * x;
            }
        }
        let inv_r = 1.0 / self.shape.r as f64;
        out.iter_mut().for_each(|o| *o *= inv_r);
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameter gradients with the same layout as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub dw: Vec<Matrix>,
    pub db: Vec<f64>,
}

impl LayerGradients {
    pub fn add_assign(&mut self, other: &LayerGradients) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            a.axpy(1.0, b);
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.dw {
            w.scale_mut(s);
        }
        self.db.iter_mut().for_each(|b| *b *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.dw.iter().all(Matrix::is_finite) && self.db.iter().all(|b| b.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.dw
            .iter()
            .map(Matrix::max_abs)
            .chain(self.db.iter().map(|b| b.abs()))
            .fold(0.0, f64::max)
    }
}
