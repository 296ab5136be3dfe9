//! Block-recursive estimation of per-layer input statistics.
//!
//! Samples are `N×M` matrices whose rows are the spatial feature vectors
//! `x_n`. Statistics are accumulated over one block of `L` batches, then
//! folded into the running estimates with factor `α`.

use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;

/// Raw sums of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAccumulator {
    pub sum_x: Vec<f64>,
    /// Raw (uncentered) second-moment sum `Σ x xᵀ`.
    pub sum_sq: Matrix,
    pub sum_pow: Vec<f64>,
    pub count: usize,
}

impl BlockAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            sum_x: vec![0.0; dim],
            sum_sq: Matrix::zeros(dim, dim),
            sum_pow: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.sum_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Adds every `stride`-th (sample, spatial) pair of the batch, counted in
    /// sample-major order starting at the first row of the first sample.
    pub fn accumulate(&mut self, batch: &[Matrix], stride: usize) -> Result<()> {
        if stride == 0 {
            return Err(Error::InvalidParameter(
                "subsample stride must be >= 1".into(),
            ));
        }
        let m = self.dim();
        for x in batch {
            if x.cols() != m {
                return Err(mismatch("BlockAccumulator::accumulate", m, x.cols()));
            }
        }
        let mut index = 0usize;
        for x in batch {
            for n in 0..x.rows() {
                if index.is_multiple_of(stride) {
                    self.add_vector(x.row(n));
                }
                index += 1;
            }
        }
        Ok(())
    }

    /// Adds a single feature vector.
    pub fn add_vector(&mut self, x: &[f64]) {
        let m = self.dim();
        debug_assert_eq!(x.len(), m);
        for i in 0..m {
            let xi = x[i];
            self.sum_x[i] += xi;
            self.sum_pow[i] += xi * xi;
            if xi == 0.0 {
                continue;
            }
            // Upper triangle only; mirrored when the block is finalized.
            let row = &mut self.sum_sq.row_mut(i)[i..];
            for (s, &xj) in row.iter_mut().zip(&x[i..]) {
                *s += xi * xj;
            }
        }
        self.count += 1;
    }

    /// Folds another shard of the same block into `self`.
    pub fn merge(&mut self, other: &BlockAccumulator) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(mismatch("BlockAccumulator::merge", self.dim(), other.dim()));
        }
        for (a, b) in self.sum_x.iter_mut().zip(&other.sum_x) {
            *a += b;
        }
        for (a, b) in self.sum_pow.iter_mut().zip(&other.sum_pow) {
            *a += b;
        }
        self.sum_sq.axpy(1.0, &other.sum_sq);
        self.count += other.count;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.sum_x.fill(0.0);
        self.sum_pow.fill(0.0);
        self.sum_sq.fill(0.0);
        self.count = 0;
    }

    /// Full symmetric `Σ x xᵀ`.
    pub fn second_moment(&self) -> Matrix {
        let mut s = self.sum_sq.clone();
        let m = self.dim();
        for i in 0..m {
            for j in 0..i {
                s[(i, j)] = s[(j, i)];
            }
        }
        s
    }
}

/// Running mean, covariance and per-feature power of one layer input.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub power: Vec<f64>,
    pub mean_power: f64,
    /// `-1` before the first block is finalized.
    pub block_index: i64,
    pub alpha: f64,
    power_initialized: bool,
}

impl MomentState {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            mean: vec![0.0; dim],
            cov: Matrix::zeros(dim, dim),
            power: vec![0.0; dim],
            mean_power: 0.0,
            block_index: -1,
            alpha,
            power_initialized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Closes the block: updates mean, covariance and power, advances the
    /// block index and resets the accumulator.
    ///
    /// The current-block deviation term is centered on the *updated* mean
    /// `μ(i) = α μ(i−1) + (1−α) m̄`, i.e. it equals
    /// `S/K − m̄μᵀ − μm̄ᵀ + μμᵀ` with `S = Σ x xᵀ` and `m̄ = Σ x / K`.
    pub fn finalize_block(&mut self, acc: &mut BlockAccumulator) -> Result<()> {
        if acc.is_empty() {
            return Err(Error::EmptyAccumulator);
        }
        if acc.dim() != self.dim() {
            return Err(mismatch(
                "MomentState::finalize_block",
                self.dim(),
                acc.dim(),
            ));
        }
        let m = self.dim();
        let k = acc.count as f64;
        let block_mean: Vec<f64> = acc.sum_x.iter().map(|s| s / k).collect();

        let first = self.block_index < 0;
        let new_mean: Vec<f64> = if first {
            block_mean.clone()
        } else {
            self.mean
                .iter()
                .zip(&block_mean)
                .map(|(old, cur)| self.alpha * old + (1.0 - self.alpha) * cur)
                .collect()
        };

        let second = acc.second_moment();
        let mut current = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                current[(i, j)] =
                    second[(i, j)] / k - block_mean[i] * new_mean[j] - new_mean[i] * block_mean[j]
                        + new_mean[i] * new_mean[j];
            }
        }

        if first {
            self.cov = current;
        } else {
            self.cov.scale_mut(self.alpha);
            self.cov.axpy(1.0 - self.alpha, &current);
        }
        self.cov.symmetrize();
        self.mean = new_mean;

        self.update_power(acc)?;
        self.block_index += 1;
        acc.reset();
        Ok(())
    }

    /// Recursive average of raw per-feature power; the first call takes the
    /// plain block average.
    pub fn update_power(&mut self, acc: &BlockAccumulator) -> Result<()> {
        if acc.is_empty() {
            return Err(Error::EmptyAccumulator);
        }
        if acc.dim() != self.dim() {
            return Err(mismatch("MomentState::update_power", self.dim(), acc.dim()));
        }
        let k = acc.count as f64;
        for (p, s) in self.power.iter_mut().zip(&acc.sum_pow) {
            let cur = s / k;
            *p = if self.power_initialized {
                self.alpha * *p + (1.0 - self.alpha) * cur
            } else {
                cur
            };
        }
        self.power_initialized = true;
        self.mean_power = self.power.iter().sum::<f64>() / self.dim() as f64;
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        self.block_index >= 0
    }
}
