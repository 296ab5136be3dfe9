use crate::error::{mismatch, Result};
use crate::linalg::Matrix;

/// `y_n = T (x_n − μ)` for every row of `x`; returns `y` and the MAC count.
pub fn direct_whiten_forward(x: &Matrix, t: &Matrix, mean: &[f64]) -> Result<(Matrix, u64)> {
    let m = t.require_square()?;
    if x.cols() != m || mean.len() != m {
        return Err(mismatch("direct_whiten_forward", m, x.cols()));
    }
    let mut y = Matrix::zeros(x.rows(), m);
    let mut xc = vec![0.0; m];
    for n in 0..x.rows() {
        for ((c, &a), &mu) in xc.iter_mut().zip(x.row(n)).zip(mean) {
            *c = a - mu;
        }
        let yr = y.row_mut(n);
        for (i, yv) in yr.iter_mut().enumerate() {
            *yv = t.row(i).iter().zip(&xc).map(|(a, b)| a * b).sum();
        }
    }
    Ok((y, (x.rows() * m * m) as u64))
}

/// `∂ℒ/∂x_n = Tᵀ ∂ℒ/∂y_n`, with `T` held constant.
pub fn direct_whiten_backward(dy: &Matrix, t: &Matrix) -> Result<(Matrix, u64)> {
    let m = t.require_square()?;
    if dy.cols() != m {
        return Err(mismatch("direct_whiten_backward", m, dy.cols()));
    }
    let mut dx = Matrix::zeros(dy.rows(), m);
    for n in 0..dy.rows() {
        let out = t.t_matvec(dy.row(n));
        dx.row_mut(n).copy_from_slice(&out);
    }
    Ok((dx, (dy.rows() * m * m) as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_transform_is_noop() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let (y, macs) = direct_whiten_forward(&x, &Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(y, x);
        assert_eq!(macs, 8);
        let (dx, _) = direct_whiten_backward(&x, &Matrix::identity(2)).unwrap();
        assert_eq!(dx, x);
    }

    #[test]
    fn diagonal_transform() {
        let t = Matrix::from_diag(&[0.5, 1.0]);
        let (y, _) =
            direct_whiten_forward(&Matrix::from_rows(&[[2.0, 3.0]]), &t, &[0.0, 0.0]).unwrap();
        assert_eq!(y.row(0), &[1.0, 3.0]);
        let (dx, _) = direct_whiten_backward(&Matrix::from_rows(&[[1.0, 1.0]]), &t).unwrap();
        assert_eq!(dx.row(0), &[0.5, 1.0]);
    }

    #[test]
    fn shape_mismatch() {
        let t = Matrix::identity(3);
        assert!(direct_whiten_forward(&Matrix::zeros(1, 2), &t, &[0.0; 2]).is_err());
        assert!(direct_whiten_backward(&Matrix::zeros(1, 2), &t).is_err());
    }
}
