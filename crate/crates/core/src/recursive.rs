//! EVD-free whitening by recursive condition-number reduction.
//!
//! Each block, one high-power direction `v_e` of the transformed-input
//! covariance `Φ_y` is located by column alignment, its power is pulled down
//! to `δ λ̄_x`, and the step `T̃ = I + a_e v_e v_eᵀ` is composed onto the
//! running transform with leakage towards identity:
//!
//! ```text
//! T(i) = γ T̃ T(i−1) + (1−γ) I = γ (T(i−1) + a_e v_e t_veᵀ) + (1−γ) I,   t_ve = T(i−1)ᵀ v_e
//! ```
//!
//! `Q = TᵀT` is then refreshed with rank-1/rank-2 updates only.

use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;
use crate::linalg::{dot, norm};

/// Estimated high-power direction of a covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate {
    /// Unit vector.
    pub v_e: Vec<f64>,
    /// `v_eᵀ Φ_y v_e`
    pub lambda_e: f64,
    /// Columns whose coherence with the pivot column passed the thresholds.
    pub column_set: Vec<usize>,
    /// Index of the column with the largest norm.
    pub pivot: usize,
    pub macs: u64,
}

/// Locates a high-power direction of `phi_y` by aligning and averaging the
/// columns coherent with the largest-norm column.
///
/// Ties for the largest column norm resolve to the lowest index.
pub fn estimate_high_power_subspace(
    phi_y: &Matrix,
    c_rel: f64,
    c_abs: f64,
) -> Result<SubspaceEstimate> {
    let m = phi_y.require_square()?;
    if m == 0 {
        return Err(Error::EmptyInput("high-power subspace of a 0x0 matrix"));
    }
    if phi_y.max_abs() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    // Φ_y is symmetric, so column m equals row m; rows are contiguous.
    let col = |j: usize| phi_y.row(j);
    let xi: Vec<f64> = (0..m).map(|j| norm(col(j))).collect();
    let mut pivot = 0;
    for (j, &x) in xi.iter().enumerate() {
        if x > xi[pivot] {
            pivot = j;
        }
    }
    let pivot_col = col(pivot);
    let c: Vec<f64> = (0..m).map(|j| dot(pivot_col, col(j))).collect();
    let mut macs = 2 * (m * m) as u64;

    let column_set: Vec<usize> = (0..m)
        .filter(|&j| j == pivot || c[j].abs() >= (c_rel * xi[pivot] * xi[j]).max(c_abs))
        .filter(|&j| c[j] != 0.0)
        .collect();
    if column_set.is_empty() {
        return Err(Error::DegenerateSubspace);
    }

    let mut v = vec![0.0; m];
    for &j in &column_set {
        let w = 1.0 / c[j];
        for (vi, &p) in v.iter_mut().zip(col(j)) {
            *vi += w * p;
        }
    }
    macs += (column_set.len() * m) as u64;
    let inv_count = 1.0 / column_set.len() as f64;
    v.iter_mut().for_each(|x| *x *= inv_count);
    let len = norm(&v);
    if len == 0.0 || !len.is_finite() {
        return Err(Error::DegenerateSubspace);
    }
    v.iter_mut().for_each(|x| *x /= len);

    let pv = phi_y.matvec(&v);
    let lambda_e = dot(&v, &pv);
    macs += (m * m + m) as u64;

    Ok(SubspaceEstimate {
        v_e: v,
        lambda_e,
        column_set,
        pivot,
        macs,
    })
}

/// Step gain and coefficient: `g_e = δ λ̄_x / max(λ_e, ε)`, `a_e = √g_e − 1`.
pub fn transform_step(
    est: &SubspaceEstimate,
    mean_power: f64,
    delta: f64,
    epsilon: f64,
) -> Result<(f64, f64)> {
    if mean_power < 0.0 || mean_power.is_nan() {
        return Err(Error::NegativePower(mean_power));
    }
    let g_e = delta * mean_power / est.lambda_e.max(epsilon);
    Ok((g_e.sqrt() - 1.0, g_e))
}

/// `I + a v vᵀ`, materialized for tests and diagnostics.
pub fn step_matrix(v_e: &[f64], a_e: f64) -> Matrix {
    let mut t = Matrix::outer(v_e, v_e);
    t.scale_mut(a_e);
    for i in 0..v_e.len() {
        t[(i, i)] += 1.0;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursiveParams {
    /// Leakage factor in `(0, 1]`.
    pub gamma: f64,
    /// Target power of the attenuated direction relative to `λ̄_x`.
    pub delta: f64,
    pub c_rel: f64,
    pub c_abs: f64,
    pub epsilon: f64,
    /// When false, directions already at or below the target power are left
    /// alone instead of being amplified.
    pub allow_amplify: bool,
    /// Recompute `Φ_y = T Φ_x Tᵀ` every this many blocks; in between the
    /// cached `Φ_y` is propagated through each step in `O(M²)`.
    pub refresh_every: usize,
}

impl Default for RecursiveParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            delta: 0.25,
            c_rel: 0.025,
            c_abs: 1e-6,
            epsilon: 1e-5,
            allow_amplify: false,
            refresh_every: 1,
        }
    }
}

impl RecursiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.delta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "delta must be > 0, got {}",
                self.delta
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.refresh_every == 0 {
            return Err(Error::InvalidParameter("refresh_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// What happened in one recursive block step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub a_e: f64,
    pub g_e: f64,
    pub lambda_e: f64,
    /// `false` when no usable direction was found and only leakage applied.
    pub stepped: bool,
    /// MACs spent estimating the subspace.
    pub estimate_macs: u64,
    /// MACs spent updating `T` and `Q`.
    pub update_macs: u64,
    /// MACs spent producing `Φ_y` (refresh or propagation).
    pub covariance_macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveState {
    pub t: Matrix,
    pub q: Matrix,
    pub params: RecursiveParams,
    phi_y: Option<Matrix>,
    blocks_since_refresh: usize,
}

impl RecursiveState {
    pub fn new(dim: usize, params: RecursiveParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            t: Matrix::identity(dim),
            q: Matrix::identity(dim),
            params,
            phi_y: None,
            blocks_since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.t.rows()
    }

    /// `max |Q − TᵀT|`, computed with a full `O(M³)` product.
    pub fn consistency_error(&self) -> f64 {
        self.q.max_abs_diff(&self.t.gram())
    }

    /// Applies one step `(v_e, a_e)` to `T` and `Q` in `O(M²)`.
    ///
    /// Fails with [`Error::StateCorruption`] when `Q` has drifted away from
    /// `TᵀT` beyond `1e−6` (relative), checked on a fixed probe vector.
    pub fn update(&mut self, v_e: &[f64], a_e: f64) -> Result<u64> {
        let m = self.dim();
        if v_e.len() != m {
            return Err(mismatch("RecursiveState::update", m, v_e.len()));
        }
        self.check_probe()?;
        let gamma = self.params.gamma;
        let (q, macs_q) = next_q(&self.q, &self.t, v_e, a_e, gamma);
        let (t, macs_t) = next_transform(&self.t, v_e, a_e, gamma);
        self.q = q;
        self.t = t;
        // t_ve is shared by both updates; count it once.
        Ok(macs_q + macs_t - (m * m) as u64)
    }

    fn check_probe(&self) -> Result<()> {
        let m = self.dim();
        let u = vec![1.0 / (m as f64).sqrt(); m];
        let qu = self.q.matvec(&u);
        let ttu = self.t.t_matvec(&self.t.matvec(&u));
        let dev = qu
            .iter()
            .zip(&ttu)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if dev > 1e-6 * self.q.max_abs().max(1.0) {
            return Err(Error::StateCorruption { deviation: dev });
        }
        Ok(())
    }

    /// `Φ_y` for the current transform: a fresh `T Φ_x Tᵀ` every
    /// `refresh_every` blocks, otherwise the cached estimate.
    pub fn transformed_covariance(&mut self, phi_x: &Matrix) -> Result<(Matrix, u64)> {
        let m = self.dim();
        phi_x.require_shape("RecursiveState::transformed_covariance", m, m)?;
        let due =
            self.phi_y.is_none() || self.blocks_since_refresh + 1 >= self.params.refresh_every;
        if due {
            let mut phi_y = self.t.matmul(phi_x).matmul(&self.t.transpose());
            phi_y.symmetrize();
            self.phi_y = Some(phi_y.clone());
            self.blocks_since_refresh = 0;
            Ok((phi_y, 2 * (m * m * m) as u64))
        } else {
            self.blocks_since_refresh += 1;
            Ok((self.phi_y.clone().expect("cached covariance"), 0))
        }
    }

    /// One full block: estimate the high-power subspace of `T Φ_x Tᵀ`,
    /// compute the step, update `T` and `Q`.
    pub fn block_step(&mut self, phi_x: &Matrix, mean_power: f64) -> Result<StepReport> {
        let (phi_y, covariance_macs) = self.transformed_covariance(phi_x)?;
        let p = self.params;
        let est = match estimate_high_power_subspace(&phi_y, p.c_rel, p.c_abs) {
            Ok(est) => Some(est),
            Err(Error::ZeroMatrix) | Err(Error::DegenerateSubspace) => None,
            Err(e) => return Err(e),
        };
        let Some(est) = est else {
            let v = vec![0.0; self.dim()];
            let update_macs = self.update(&v, 0.0)?;
            return Ok(StepReport {
                a_e: 0.0,
                g_e: 1.0,
                lambda_e: 0.0,
                stepped: false,
                estimate_macs: 0,
                update_macs,
                covariance_macs,
            });
        };
        let (mut a_e, mut g_e) = transform_step(&est, mean_power, p.delta, p.epsilon)?;
        if !p.allow_amplify && est.lambda_e <= p.delta * mean_power {
            a_e = 0.0;
            g_e = 1.0;
        }
        let update_macs = self.update(&est.v_e, a_e)?;
        let mut covariance_macs = covariance_macs;
        if p.refresh_every > 1 {
            covariance_macs += self.propagate_cache(&est.v_e, a_e, est.lambda_e);
        }
        Ok(StepReport {
            a_e,
            g_e,
            lambda_e: est.lambda_e,
            stepped: true,
            estimate_macs: est.macs,
            update_macs,
            covariance_macs,
        })
    }

    /// `Φ_y ← T̃ Φ_y T̃ᵀ` as a rank-2 update (leakage ignored).
    fn propagate_cache(&mut self, v: &[f64], a: f64, lambda_e: f64) -> u64 {
        let Some(phi) = self.phi_y.as_mut() else {
            return 0;
        };
        let m = v.len();
        let w = phi.matvec(v);
        for i in 0..m {
            for j in 0..m {
                phi[(i, j)] += a * (v[i] * w[j] + w[i] * v[j]) + a * a * lambda_e * v[i] * v[j];
            }
        }
        (m * m * 4) as u64
    }
}

/// `T(i) = γ (T(i−1) + a v tᵀ) + (1−γ) I` with `t = T(i−1)ᵀ v`.
pub fn next_transform(t_prev: &Matrix, v_e: &[f64], a_e: f64, gamma: f64) -> (Matrix, u64) {
    let m = v_e.len();
    let t_ve = t_prev.t_matvec(v_e);
    let mut t = t_prev.clone();
    for i in 0..m {
        let av = a_e * v_e[i];
        let row = t.row_mut(i);
        for (x, &tj) in row.iter_mut().zip(&t_ve) {
            *x = gamma * (*x + av * tj);
        }
        row[i] += 1.0 - gamma;
    }
    (t, 3 * (m * m) as u64)
}

/// `Q(i)` from `Q(i−1)` and `T(i−1)` using only outer products and additions:
///
/// ```text
/// Q(i) = γ² (Q + a(a+2) t tᵀ) + (1−γ)² I + γ(1−γ) (a (v tᵀ + t vᵀ) + T + Tᵀ)
/// ```
pub fn next_q(
    q_prev: &Matrix,
    t_prev: &Matrix,
    v_e: &[f64],
    a_e: f64,
    gamma: f64,
) -> (Matrix, u64) {
    let m = v_e.len();
    let t = t_prev.t_matvec(v_e);
    let g2 = gamma * gamma;
    let gl = gamma * (1.0 - gamma);
    let l2 = (1.0 - gamma) * (1.0 - gamma);
    let c = a_e * (a_e + 2.0);
    let mut q = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut x = g2 * (q_prev[(i, j)] + c * t[i] * t[j])
                + gl * (a_e * (v_e[i] * t[j] + t[i] * v_e[j]) + t_prev[(i, j)] + t_prev[(j, i)]);
            if i == j {
                x += l2;
            }
            q[(i, j)] = x;
        }
    }
    // t = Tᵀv, then seven multiply–accumulates per entry.
    (q, 8 * (m * m) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_evd;

    #[test]
    fn rank_one_recovers_direction() {
        let s5 = 5f64.sqrt();
        let v = [2.0 / s5, 1.0 / s5];
        let phi = Matrix::outer(&v, &v).scale(5.0);
        let est = estimate_high_power_subspace(&phi, 0.025, 1e-6).unwrap();
        assert!((est.v_e[0].abs() - 0.894_427_190_999_915_9).abs() < 1e-12);
        assert!((est.v_e[1].abs() - 0.447_213_595_499_957_9).abs() < 1e-12);
        assert!((est.lambda_e - 5.0).abs() < 1e-12);
        let principal = sym_evd(&phi, 1e-14).unwrap().eigenvectors.col(0);
        assert!((dot(&principal, &est.v_e).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_picks_dominant_axis() {
        let phi = Matrix::from_diag(&[9.0, 1.0]);
        let est = estimate_high_power_subspace(&phi, 0.025, 1e-6).unwrap();
        assert_eq!(est.pivot, 0);
        let angle = est.v_e[0].abs().min(1.0).acos().to_degrees();
        assert!(angle < 35.0);
    }

    #[test]
    fn isotropic_is_deterministic() {
        let phi = Matrix::identity(4);
        let a = estimate_high_power_subspace(&phi, 0.025, 1e-6).unwrap();
        let b = estimate_high_power_subspace(&phi, 0.025, 1e-6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pivot, 0);
        assert!((norm(&a.v_e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_rejected() {
        assert!(matches!(
            estimate_high_power_subspace(&Matrix::zeros(3, 3), 0.025, 1e-6),
            Err(Error::ZeroMatrix)
        ));
    }

    fn unit_estimate(v: Vec<f64>, lambda_e: f64) -> SubspaceEstimate {
        SubspaceEstimate {
            v_e: v,
            lambda_e,
            column_set: vec![0],
            pivot: 0,
            macs: 0,
        }
    }

    #[test]
    fn step_fixed_point_and_reduction() {
        let est = unit_estimate(vec![1.0, 0.0], 0.5);
        let (a, g) = transform_step(&est, 2.0, 0.25, 1e-5).unwrap();
        assert_eq!((a, g), (0.0, 1.0));

        let est = unit_estimate(vec![1.0, 0.0], 8.0);
        let (a, g) = transform_step(&est, 2.0, 0.25, 1e-5).unwrap();
        assert_eq!(g, 1.0 / 16.0);
        assert_eq!(a, -0.75);
        assert!(
            step_matrix(&[1.0, 0.0, 0.0], a).max_abs_diff(&Matrix::from_diag(&[0.25, 1.0, 1.0]))
                == 0.0
        );

        assert!(matches!(
            transform_step(&est, -1.0, 0.25, 1e-5),
            Err(Error::NegativePower(_))
        ));
    }

    #[test]
    fn transform_update_examples() {
        let t = Matrix::from_rows(&[[1.0, 0.2], [0.1, 0.9]]);
        let (same, _) = next_transform(&t, &[0.6, 0.8], 0.0, 1.0);
        assert_eq!(same, t);
        let (reset, _) = next_transform(&t, &[0.6, 0.8], -0.4, 0.0);
        assert_eq!(reset, Matrix::identity(2));
        let (half, _) = next_transform(&Matrix::identity(3), &[1.0, 0.0, 0.0], -0.5, 0.5);
        assert!(half.max_abs_diff(&Matrix::from_diag(&[0.75, 1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn q_update_without_leakage() {
        let t = Matrix::from_rows(&[[1.0, 0.2], [0.1, 0.9]]);
        let q = t.gram();
        let v = [0.6, 0.8];
        let (same, _) = next_q(&q, &t, &v, 0.0, 1.0);
        assert!(same.max_abs_diff(&q) < 1e-15);

        let a = -0.3;
        let (q1, _) = next_q(&q, &t, &v, a, 1.0);
        let tv = t.t_matvec(&v);
        let expect = q.add(&Matrix::outer(&tv, &tv).scale(a * (a + 2.0)));
        assert!(q1.max_abs_diff(&expect) < 1e-15);
        let (t1, _) = next_transform(&t, &v, a, 1.0);
        assert!(q1.max_abs_diff(&t1.gram()) < 1e-14);
    }

    #[test]
    fn update_detects_corrupted_q() {
        let mut st = RecursiveState::new(3, RecursiveParams::default()).unwrap();
        st.q[(0, 0)] = 5.0;
        assert!(matches!(
            st.update(&[1.0, 0.0, 0.0], -0.5),
            Err(Error::StateCorruption { .. })
        ));
    }

    #[test]
    fn params_validated() {
        let bad = RecursiveParams {
            gamma: 0.0,
            ..RecursiveParams::default()
        };
        assert!(RecursiveState::new(2, bad).is_err());
    }

    #[test]
    fn block_step_attenuates_dominant_direction() {
        let mut st = RecursiveState::new(
            2,
            RecursiveParams {
                gamma: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let phi = Matrix::from_diag(&[16.0, 1.0]);
        let rep = st.block_step(&phi, 8.5).unwrap();
        assert!(rep.stepped);
        let phi_y = st.t.matmul(&phi).matmul(&st.t.transpose());
        assert!((phi_y[(0, 0)] - 0.25 * 8.5).abs() < 1e-12);
        assert!((phi_y[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_step_does_not_amplify_by_default() {
        let mut st = RecursiveState::new(
            2,
            RecursiveParams {
                gamma: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let rep = st.block_step(&Matrix::identity(2), 100.0).unwrap();
        assert_eq!(rep.a_e, 0.0);
        assert_eq!(st.t, Matrix::identity(2));
    }
}
