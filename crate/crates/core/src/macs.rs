//! Multiply–accumulate (MAC) counters for the whitening paths.

use serde::{Deserialize, Serialize};
use std::ops::AddAssign;

/// MACs spent by whitening-specific work, by category. Ordinary layer
/// forward/backward work is not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCounters {
    /// Right-multiplying weight gradients by `Q_s`.
    pub gradient_transform: u64,
    /// Building `T` and `Q` (eigendecomposition, or the recursive estimate
    /// and `O(M²)` update).
    pub whitening_build: u64,
    /// Forming `Φ_y = T Φ_x Tᵀ` for the recursive method.
    pub covariance: u64,
    /// Whitening activations and their gradients on the direct path.
    pub direct_transform: u64,
}

impl MacCounters {
    pub fn total(&self) -> u64 {
        self.gradient_transform + self.whitening_build + self.covariance + self.direct_transform
    }
}

impl AddAssign for MacCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.gradient_transform += rhs.gradient_transform;
        self.whitening_build += rhs.whitening_build;
        self.covariance += rhs.covariance;
        self.direct_transform += rhs.direct_transform;
    }
}
