//! Datasets: deterministic synthetic classification data with a controlled
//! covariance condition number, the CIFAR-10 binary format, and a flat
//! binary container for synthetic sets.

mod cifar;
pub mod rng;
mod synthetic;
mod wopt_file;

pub use cifar::{load_cifar10_binary, load_cifar10_dir, parse_cifar10, CIFAR10_RECORD_LEN};
pub use synthetic::{gen_synthetic, SyntheticData, SyntheticSpec};
pub use wopt_file::{read_wopt, write_wopt, WOPT_MAGIC};

use crate::linalg::Matrix;

/// Labelled samples, each an `N×M` matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Matrix>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(N, M)` of the first sample.
    pub fn sample_shape(&self) -> Option<(usize, usize)> {
        self.samples.first().map(Matrix::shape)
    }

    pub fn truncate(&mut self, len: usize) {
        self.samples.truncate(len);
        self.labels.truncate(len);
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}
