//! Whiteness, normalized rank and cross-layer aggregation.

use crate::error::{Error, Result};
use crate::linalg::{condition_number, sym_evd, Matrix};
use crate::zca::estimate_signal_rank;
use serde::{Deserialize, Serialize};

/// One row of the per-epoch metric trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    pub test_acc: f64,
    pub kappa_mean: f64,
    pub kappa_stderr: f64,
    pub rho_mean: f64,
    pub rho_stderr: f64,
    pub cond_mean: f64,
    pub wall_ms: u64,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str =
        "epoch,step,train_loss,test_acc,kappa_mean,kappa_stderr,rho_mean,rho_stderr,cond_mean,wall_ms";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.step,
            self.train_loss,
            self.test_acc,
            self.kappa_mean,
            self.kappa_stderr,
            self.rho_mean,
            self.rho_stderr,
            self.cond_mean,
            self.wall_ms
        )
    }
}

/// `ρ = M / Σ_{m,m′} Φ_{mm′}² / (Φ_{mm} Φ_{m′m′})`, summed over all pairs
/// including the diagonal. 1 for diagonal `Φ`, `1/M` for fully correlated.
pub fn whiteness_rho(phi_y: &Matrix) -> Result<f64> {
    let m = phi_y.require_square()?;
    if m == 0 {
        return Err(Error::EmptyInput("whiteness of a 0x0 matrix"));
    }
    let d = phi_y.diag();
    if let Some(index) = d.iter().position(|&x| x <= 0.0 || x.is_nan()) {
        return Err(Error::ZeroDiagonal { index });
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c = phi_y[(i, j)];
            total += c * c / (d[i] * d[j]);
        }
    }
    Ok(m as f64 / total)
}

/// `κ = M̂_s / M` from the spectrum of `phi_y`.
pub fn normalized_rank_kappa(phi_y: &Matrix) -> Result<f64> {
    let m = phi_y.require_square()?;
    let eig = sym_evd(phi_y, 1e-12)?;
    let (rank, _) = estimate_signal_rank(&eig.eigenvalues)?;
    Ok(rank as f64 / m as f64)
}

/// Mean and standard error (population standard deviation over `√n`).
pub fn aggregate_layers(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("aggregate_layers"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt() / n.sqrt()))
}

/// κ, ρ and condition number of one layer's transformed covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub kappa: f64,
    pub rho: f64,
    pub cond: f64,
}

pub fn layer_metrics(phi_y: &Matrix) -> Result<LayerMetrics> {
    let m = phi_y.require_square()?;
    // Dead features (zero variance) would make ρ undefined; they carry no
    // correlation, so they are dropped from the whiteness computation.
    let live: Vec<usize> = (0..m).filter(|&i| phi_y[(i, i)] > 0.0).collect();
    let rho = if live.is_empty() {
        1.0
    } else {
        let mut sub = Matrix::zeros(live.len(), live.len());
        for (a, &i) in live.iter().enumerate() {
            for (b, &j) in live.iter().enumerate() {
                sub[(a, b)] = phi_y[(i, j)];
            }
        }
        // Each dead feature contributes only its unit self-term.
        let live_total = live.len() as f64 / whiteness_rho(&sub)?;
        m as f64 / (live_total + (m - live.len()) as f64)
    };
    let kappa = match normalized_rank_kappa(phi_y) {
        Ok(k) => k,
        Err(Error::ZeroSpectrum) => 1.0 / m as f64,
        Err(e) => return Err(e),
    };
    let cond = condition_number(phi_y, 1e-12)?;
    Ok(LayerMetrics { kappa, rho, cond })
}
