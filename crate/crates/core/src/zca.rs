//! ZCA whitening transform, gradient preconditioner `Q = TᵀT`, and its
//! inter-block smoothing.

use crate::error::{mismatch, Error, Result};
use crate::linalg::{sym_evd, Matrix, SymEig};
use crate::Method;

/// Per-direction gains applied in the eigenbasis, `T = V diag(√g) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSpec {
    pub gains: Vec<f64>,
    pub signal_rank: usize,
    pub epsilon: f64,
    pub g_max: f64,
}

impl GainSpec {
    /// Plain whitening gains `1 / max(λ_m, ε)` with no rank truncation or cap.
    pub fn uncapped(eigenvalues: &[f64], epsilon: f64) -> Self {
        Self {
            gains: eigenvalues.iter().map(|&l| 1.0 / l.max(epsilon)).collect(),
            signal_rank: eigenvalues.len(),
            epsilon,
            g_max: f64::INFINITY,
        }
    }
}

/// Entropy-exponent signal rank `round(exp(−Σ λ̄ ln λ̄))`, clamped to `[1, M]`.
///
/// Returns the rank together with the normalized spectrum `λ̄ = λ / Σλ`.
/// Negative eigenvalues (numerical noise on PSD input) are treated as zero.
pub fn estimate_signal_rank(eigenvalues: &[f64]) -> Result<(usize, Vec<f64>)> {
    let m = eigenvalues.len();
    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    if m == 0 || total <= 0.0 || !total.is_finite() {
        return Err(Error::ZeroSpectrum);
    }
    let normalized: Vec<f64> = eigenvalues.iter().map(|l| l.max(0.0) / total).collect();
    let entropy: f64 = normalized
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    let rank = (entropy.exp().round() as usize).clamp(1, m);
    Ok((rank, normalized))
}

/// Gains that keep the average input variance, capped at `g_max` inside the
/// signal subspace and equal to 1 outside it.
pub fn compute_gains(
    normalized: &[f64],
    signal_rank: usize,
    g_max: f64,
    epsilon: f64,
) -> Result<GainSpec> {
    let m = normalized.len();
    if signal_rank < 1 || signal_rank > m {
        return Err(Error::RankOutOfRange {
            rank: signal_rank,
            dim: m,
        });
    }
    let sum: f64 = normalized.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "normalized spectrum sums to {sum}"
        )));
    }
    let gains = normalized
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if i < signal_rank {
                (1.0 / (m as f64 * l.max(epsilon))).min(g_max)
            } else {
                1.0
            }
        })
        .collect();
    Ok(GainSpec {
        gains,
        signal_rank,
        epsilon,
        g_max,
    })
}

/// `T = V diag(√g) Vᵀ`, symmetric by construction.
pub fn build_whitening(eig: &SymEig, gains: &GainSpec) -> Result<Matrix> {
    if gains.gains.len() != eig.dim() {
        return Err(mismatch("build_whitening", eig.dim(), gains.gains.len()));
    }
    let root: Vec<f64> = gains.gains.iter().map(|g| g.sqrt()).collect();
    Ok(eig.reconstruct_with(&root))
}

/// Multiply–accumulate cost of [`build_whitening`].
pub fn build_whitening_macs(m: usize) -> u64 {
    // Upper triangle of V diag Vᵀ, two multiplies folded per term.
    (m * (m + 1) / 2 * m) as u64
}

/// `Q = TᵀT`
pub fn build_q(t: &Matrix) -> Result<Matrix> {
    t.require_square()?;
    let mut q = t.gram();
    q.symmetrize();
    Ok(q)
}

/// Hyperparameters of the EVD path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZcaParams {
    pub g_max: f64,
    pub epsilon: f64,
}

impl Default for ZcaParams {
    fn default() -> Self {
        Self {
            g_max: 10.0,
            epsilon: 1e-5,
        }
    }
}

/// Capped ZCA transform for a covariance matrix. Returns `None` when the
/// covariance carries no energy.
pub fn zca_transform(cov: &Matrix, params: ZcaParams) -> Result<Option<(Matrix, u64)>> {
    let m = cov.require_square()?;
    if cov.trace() <= 0.0 {
        return Ok(None);
    }
    let eig = sym_evd(cov, 1e-12)?;
    let (rank, normalized) = match estimate_signal_rank(&eig.eigenvalues) {
        Ok(r) => r,
        Err(Error::ZeroSpectrum) => return Ok(None),
        Err(e) => return Err(e),
    };
    let gains = compute_gains(&normalized, rank, params.g_max, params.epsilon)?;
    let t = build_whitening(&eig, &gains)?;
    Ok(Some((t, eig.macs + build_whitening_macs(m))))
}

/// Per-layer whitening state shared by all methods.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenState {
    pub t: Matrix,
    pub q: Matrix,
    pub q_s: Matrix,
    /// Mean subtracted in the forward pass during the current block.
    pub frozen_mean: Vec<f64>,
    pub beta: f64,
    pub method: Method,
}

impl WhitenState {
    pub fn new(dim: usize, beta: f64, method: Method) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in [0, 1), got {beta}"
            )));
        }
        Ok(Self {
            t: Matrix::identity(dim),
            q: Matrix::identity(dim),
            q_s: Matrix::identity(dim),
            frozen_mean: vec![0.0; dim],
            beta,
            method,
        })
    }

    pub fn dim(&self) -> usize {
        self.frozen_mean.len()
    }

    /// `Q_s ← β Q_s + (1−β) Q_new`; also stores `Q_new` as the current `Q`.
    pub fn smooth_q(&mut self, q_new: &Matrix) -> Result<()> {
        let m = self.dim();
        q_new.require_shape("WhitenState::smooth_q", m, m)?;
        if self.method == Method::Baseline {
            return Ok(());
        }
        self.q = q_new.clone();
        self.q_s.scale_mut(self.beta);
        self.q_s.axpy(1.0 - self.beta, q_new);
        self.q_s.symmetrize();
        Ok(())
    }

    /// Rebuilds `T`, `Q` from the covariance and smooths `Q_s`.
    ///
    /// A covariance with zero trace leaves the state untouched. Returns the
    /// multiply–accumulate count spent.
    pub fn update_evd(&mut self, cov: &Matrix, params: ZcaParams) -> Result<u64> {
        if self.method == Method::Baseline {
            return Ok(0);
        }
        let m = self.dim();
        cov.require_shape("WhitenState::update_evd", m, m)?;
        let Some((t, macs)) = zca_transform(cov, params)? else {
            log::warn!("degenerate covariance (zero trace); keeping previous transform");
            return Ok(0);
        };
        let q = build_q(&t)?;
        self.t = t;
        self.smooth_q(&q)?;
        Ok(macs + (m * m * m) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_spectrum_has_full_rank() {
        let (rank, norm) = estimate_signal_rank(&[1.0, 1.0]).unwrap();
        assert_eq!(rank, 2);
        assert_eq!(norm, vec![0.5, 0.5]);
    }

    #[test]
    fn single_direction_has_rank_one() {
        assert_eq!(estimate_signal_rank(&[1.0, 0.0]).unwrap().0, 1);
    }

    #[test]
    fn rank_of_eighty_twenty_split() {
        // exp(-(0.8 ln 0.8 + 0.2 ln 0.2)) = exp(0.50040) = 1.6494
        let (rank, _) = estimate_signal_rank(&[0.8, 0.2]).unwrap();
        assert_eq!(rank, 2);
    }

    #[test]
    fn all_zero_spectrum_rejected() {
        assert!(matches!(
            estimate_signal_rank(&[0.0, 0.0]),
            Err(Error::ZeroSpectrum)
        ));
    }

    #[test]
    fn gains_examples() {
        let g = compute_gains(&[0.5, 0.5], 2, 10.0, 1e-5).unwrap();
        assert_eq!(g.gains, vec![1.0, 1.0]);
        let g = compute_gains(&[0.8, 0.2], 2, 10.0, 1e-5).unwrap();
        assert!((g.gains[0] - 0.625).abs() < 1e-15 && (g.gains[1] - 2.5).abs() < 1e-15);
        let g = compute_gains(&[0.999, 0.001], 1, 10.0, 1e-5).unwrap();
        assert!((g.gains[0] - 1.0 / 1.998).abs() < 1e-15);
        assert_eq!(g.gains[1], 1.0);
    }

    #[test]
    fn gain_cap_binds() {
        let g = compute_gains(&[0.98, 0.02], 2, 10.0, 1e-5).unwrap();
        assert_eq!(g.gains[1], 10.0);
    }

    #[test]
    fn gains_rank_out_of_range() {
        assert!(compute_gains(&[0.5, 0.5], 0, 10.0, 1e-5).is_err());
        assert!(compute_gains(&[0.5, 0.5], 3, 10.0, 1e-5).is_err());
    }

    #[test]
    fn identity_covariance_gives_identity_transform() {
        let (t, _) = zca_transform(&Matrix::identity(3), ZcaParams::default())
            .unwrap()
            .unwrap();
        assert!(t.max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn diagonal_pure_whitening() {
        let phi = Matrix::from_diag(&[4.0, 1.0]);
        let eig = sym_evd(&phi, 1e-12).unwrap();
        let t = build_whitening(&eig, &GainSpec::uncapped(&eig.eigenvalues, 1e-5)).unwrap();
        assert!(t.max_abs_diff(&Matrix::from_diag(&[0.5, 1.0])) < 1e-15);
    }

    #[test]
    fn q_of_diagonal_transform() {
        let q = build_q(&Matrix::from_diag(&[0.5, 1.0])).unwrap();
        assert_eq!(q, Matrix::from_diag(&[0.25, 1.0]));
        assert_eq!(build_q(&Matrix::identity(2)).unwrap(), Matrix::identity(2));
        assert!(build_q(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn smoothing_examples() {
        let mut st = WhitenState::new(2, 0.0, Method::Evd).unwrap();
        let q = Matrix::from_diag(&[0.25, 1.0]);
        st.smooth_q(&q).unwrap();
        assert_eq!(st.q_s, q);

        let mut st = WhitenState::new(2, 0.95, Method::Evd).unwrap();
        st.smooth_q(&Matrix::identity(2)).unwrap();
        assert!(st.q_s.max_abs_diff(&Matrix::identity(2)) < 1e-15);

        let mut st = WhitenState::new(2, 0.5, Method::Evd).unwrap();
        st.smooth_q(&q).unwrap();
        assert_eq!(st.q_s, Matrix::from_diag(&[0.625, 1.0]));
        assert!(st.smooth_q(&Matrix::identity(3)).is_err());
    }

    #[test]
    fn baseline_stays_identity() {
        let mut st = WhitenState::new(2, 0.5, Method::Baseline).unwrap();
        st.update_evd(&Matrix::from_diag(&[9.0, 1.0]), ZcaParams::default())
            .unwrap();
        assert_eq!(st.t, Matrix::identity(2));
        assert_eq!(st.q_s, Matrix::identity(2));
    }

    #[test]
    fn zero_trace_keeps_previous_transform() {
        let mut st = WhitenState::new(2, 0.5, Method::Evd).unwrap();
        st.update_evd(&Matrix::from_diag(&[4.0, 1.0]), ZcaParams::default())
            .unwrap();
        let before = st.clone();
        let macs = st
            .update_evd(&Matrix::zeros(2, 2), ZcaParams::default())
            .unwrap();
        assert_eq!(macs, 0);
        assert_eq!(st, before);
    }

    #[test]
    fn average_variance_preserved() {
        let phi = Matrix::from_rows(&[[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.5]]);
        let (t, _) = zca_transform(&phi, ZcaParams::default()).unwrap().unwrap();
        let white = t.matmul(&phi).matmul(&t.transpose());
        assert!((white.trace() - phi.trace()).abs() < 1e-10);
    }
}
