//! Cyclic Jacobi eigendecomposition of real symmetric matrices.

use super::Matrix;
use crate::error::{Error, Result};

/// Eigendecomposition `A = V diag(λ) Vᵀ` of a symmetric matrix.
///
/// Eigenvalues are sorted in decreasing order and the columns of
/// `eigenvectors` are orthonormal. Each column is sign-normalized so that
/// its largest-magnitude entry is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    /// Number of Jacobi rotations applied.
    pub rotations: usize,
    /// Multiply–accumulate operations spent in the rotations.
    pub macs: u64,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(λ) Vᵀ`
    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(&self.eigenvalues)
    }

    /// `V diag(d) Vᵀ` for an arbitrary spectrum `d` on the same eigenbasis.
    pub fn reconstruct_with(&self, d: &[f64]) -> Matrix {
        let n = self.dim();
        assert_eq!(d.len(), n);
        let v = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v[(i, k)] * d[k] * v[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JacobiOptions {
    /// Absolute bound on the off-diagonal Frobenius norm at convergence.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_sweeps: 100,
        }
    }
}

/// Symmetric eigendecomposition with the default sweep budget.
pub fn sym_evd(a: &Matrix, tol: f64) -> Result<SymEig> {
    sym_evd_with(
        a,
        JacobiOptions {
            tol,
            ..JacobiOptions::default()
        },
    )
}

pub fn sym_evd_with(a: &Matrix, opts: JacobiOptions) -> Result<SymEig> {
    let n = a.require_square()?;
    if n == 0 {
        return Err(Error::EmptyInput("sym_evd on a 0x0 matrix"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("sym_evd input".into()));
    }
    let scale = a.max_abs();
    let asym = a.asymmetry();
    if asym > 1e-9 * scale.max(1.0) {
        return Err(Error::Asymmetric { max_diff: asym });
    }

    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let mut rotations = 0usize;
    let mut macs = 0u64;

    let fro = m.frobenius();
    // The off-diagonal mass must fall below both the caller's tolerance and a
    // relative floor; the floor is clamped at a few ulps of the norm.
    let target = opts.tol.min(1e-13 * fro).max(4.0 * f64::EPSILON * fro);

    let mut converged = fro == 0.0;
    let mut sweep = 0;
    while !converged {
        let off = off_diagonal_norm(&m);
        if off <= target {
            converged = true;
            break;
        }
        if sweep == opts.max_sweeps {
            break;
        }
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Skip rotations that cannot change the diagonal in floating point.
                let g = 100.0 * apq.abs();
                if sweep > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s, t, apq);
                rotations += 1;
                macs += 6 * n as u64;
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: opts.max_sweeps,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag = m.diag();
    // Stable sort keeps the Jacobi index order among ties.
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| diag[k]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut lead = 0.0f64;
        for i in 0..n {
            let x = v[(i, src)];
            if x.abs() > lead.abs() {
                lead = x;
            }
        }
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[(i, dst)] = sign * v[(i, src)];
        }
    }

    Ok(SymEig {
        eigenvalues,
        eigenvectors,
        rotations,
        macs,
    })
}

/// One two-sided Jacobi rotation zeroing `m[p][q]`, accumulated into `v`.
#[allow(clippy::too_many_arguments)]
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let n = m.rows();
    let tau = s / (1.0 + c);
    m[(p, p)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        let new_p = mkp - s * (mkq + tau * mkp);
        let new_q = mkq + s * (mkp - tau * mkq);
        m[(k, p)] = new_p;
        m[(p, k)] = new_p;
        m[(k, q)] = new_q;
        m[(q, k)] = new_q;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp - s * (vkq + tau * vkp);
        v[(k, q)] = vkq + s * (vkp - tau * vkq);
    }
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

/// `λ_max / max(λ_min, floor)`, never below 1.
pub fn condition_number(a: &Matrix, floor: f64) -> Result<f64> {
    let eig = sym_evd(a, 1e-12)?;
    let max = eig.eigenvalues[0];
    let min = *eig.eigenvalues.last().expect("non-empty spectrum");
    Ok((max / min.max(floor)).max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(v: &Matrix) -> f64 {
        v.gram().max_abs_diff(&Matrix::identity(v.rows()))
    }

    #[test]
    fn identity_is_its_own_decomposition() {
        let eig = sym_evd(&Matrix::identity(2), 1e-12).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0]);
        assert_eq!(eig.eigenvectors, Matrix::identity(2));
    }

    #[test]
    fn diagonal_input_sorted_descending() {
        let eig = sym_evd(&Matrix::from_diag(&[1.0, 4.0]), 1e-12).unwrap();
        assert_eq!(eig.eigenvalues, vec![4.0, 1.0]);
        assert_eq!(
            eig.eigenvectors,
            Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])
        );
    }

    #[test]
    fn two_by_two_coupled() {
        // Characteristic polynomial (2-λ)² - 1 = 0 gives λ = 3, 1.
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let eig = sym_evd(&a, 1e-12).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = eig.eigenvectors.col(0);
        let v1 = eig.eigenvectors.col(1);
        assert!((v0[0].abs() - h).abs() < 1e-14 && (v0[0] - v0[1]).abs() < 1e-14);
        assert!((v1[0].abs() - h).abs() < 1e-14 && (v1[0] + v1[1]).abs() < 1e-14);
        assert!(eig.reconstruct().max_abs_diff(&a) < 1e-14);
        assert!(orthonormality_error(&eig.eigenvectors) < 1e-14);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            sym_evd(&Matrix::zeros(2, 3), 1e-12),
            Err(Error::NotSquare { .. })
        ));
        let a = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]);
        assert!(matches!(sym_evd(&a, 1e-12), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn sweep_budget_exhaustion_reported() {
        let a = Matrix::from_rows(&[[1.0, 0.3, 0.2], [0.3, 2.0, 0.1], [0.2, 0.1, 3.0]]);
        let err = sym_evd_with(
            &a,
            JacobiOptions {
                tol: 1e-300,
                max_sweeps: 0,
            },
        );
        assert!(matches!(err, Err(Error::NoConvergence { sweeps: 0 })));
    }

    #[test]
    fn sign_convention_largest_component_non_negative() {
        let a = Matrix::from_rows(&[[1.0, -2.0, 0.0], [-2.0, 3.0, 0.5], [0.0, 0.5, -1.0]]);
        let eig = sym_evd(&a, 1e-12).unwrap();
        for j in 0..3 {
            let col = eig.eigenvectors.col(j);
            let lead = col
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(lead >= 0.0);
        }
    }

    #[test]
    fn condition_number_cases() {
        assert_eq!(condition_number(&Matrix::identity(3), 1e-12).unwrap(), 1.0);
        let c = condition_number(&Matrix::from_diag(&[100.0, 1.0]), 1e-12).unwrap();
        assert!((c - 100.0).abs() < 1e-12);
        let v = [0.6, 0.8];
        let rank1 = Matrix::outer(&v, &v);
        let c = condition_number(&rank1, 1e-12).unwrap();
        assert!((c - 1.0 / 1e-12).abs() / 1e12 < 1e-3);
        assert!(condition_number(&Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]), 1e-12).is_err());
    }
}
