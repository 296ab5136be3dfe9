//! Feature-whitening optimizers for neural-network training.
//!
//! Two reduced-complexity whitening methods are provided:
//!
//! * **EVD (ZCA) gradient-based whitening.** The whitening transform `T` is
//!   built from an eigendecomposition of the tracked input covariance and is
//!   never applied to activations. Instead the weight gradients of every
//!   batch are right-multiplied by `Q = TᵀT` (smoothed across blocks).
//! * **Recursive whitening.** No eigendecomposition: every block one
//!   high-power direction of the transformed covariance is attenuated and
//!   `Q` is refreshed with `O(M²)` work.
//!
//! The direct method (whitening activations in the forward pass and their
//! gradients in the backward pass) lives in [`optimizer::direct`] and serves
//! as the equivalence oracle for the gradient-based path.

pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod macs;
pub mod metrics;
pub mod moments;
pub mod nn;
pub mod optimizer;
pub mod par;
pub mod recursive;
pub mod verify;
pub mod zca;

pub use error::{Error, Result};
pub use linalg::{Matrix, SymEig};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which whitening method drives the gradient preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain SGD: `T = Q = Q_s = I` throughout.
    Baseline,
    /// ZCA transform from a symmetric eigendecomposition every block.
    Evd,
    /// One high-power subspace attenuated per block, `Q` updated in `O(M²)`.
    Recursive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Evd, Method::Recursive];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Evd => "evd",
            Method::Recursive => "recursive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Method::Baseline),
            "evd" => Ok(Method::Evd),
            "recursive" => Ok(Method::Recursive),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}
