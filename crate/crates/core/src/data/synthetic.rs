use super::rng::SplitMix64;
use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{sym_evd, Matrix};

/// Parameters of a synthetic classification set.
///
/// Population covariance `Σ = U diag(λ) Uᵀ` with `λ_k = cond^{(M−1−k)/(M−1)}`
/// rescaled to unit mean, `U` a seeded random orthonormal basis. Class means
/// sit on a sphere in input space; `separation` in `(0, 1)` is the largest
/// fraction of variance along any whitened direction explained by the class
/// means.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub classes: usize,
    pub cond: f64,
    pub samples_train: usize,
    pub samples_test: usize,
    pub seed: u64,
    pub separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            classes: 10,
            cond: 100.0,
            samples_train: 4096,
            samples_test: 1024,
            seed: 1,
            separation: 0.9,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cond < 1.0 || !self.cond.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cond must be >= 1, got {}",
                self.cond
            )));
        }
        if self.classes < 2 {
            return Err(Error::InvalidParameter("classes must be >= 2".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        if !(self.separation > 0.0 && self.separation < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "separation must lie in (0, 1), got {}",
                self.separation
            )));
        }
        Ok(())
    }
}

/// Generated split plus the population statistics it was drawn from.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    pub covariance: Matrix,
    pub mean: Vec<f64>,
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let m = spec.dim;
    let c = spec.classes;
    let mut rng = SplitMix64::new(spec.seed);

    let basis = random_orthonormal(m, &mut rng);
    let mut spectrum: Vec<f64> = (0..m)
        .map(|k| {
            if m == 1 {
                1.0
            } else {
                spec.cond.powf((m - 1 - k) as f64 / (m - 1) as f64)
            }
        })
        .collect();
    let mean_eig = spectrum.iter().sum::<f64>() / m as f64;
    spectrum.iter_mut().for_each(|l| *l /= mean_eig);

    let sqrt_diag = Matrix::from_diag(&spectrum.iter().map(|l| l.sqrt()).collect::<Vec<_>>());
    let cov_root = basis.matmul(&sqrt_diag).matmul(&basis.transpose());
    let mut covariance = basis
        .matmul(&Matrix::from_diag(&spectrum))
        .matmul(&basis.transpose());
    covariance.symmetrize();

    // Class centres on the unit sphere of input space. Their scatter S_b is
    // scaled so that Σ − S_b stays positive definite, with the largest
    // eigenvalue of Σ^{−1/2} S_b Σ^{−1/2} equal to `separation`.
    let mut centres: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            let mut v: Vec<f64> = (0..m).map(|_| rng.next_normal()).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            v
        })
        .collect();
    let centroid: Vec<f64> = (0..m)
        .map(|j| centres.iter().map(|v| v[j]).sum::<f64>() / c as f64)
        .collect();
    let mut scatter = Matrix::zeros(m, m);
    for v in &centres {
        let d: Vec<f64> = v.iter().zip(&centroid).map(|(a, b)| a - b).collect();
        scatter.axpy(1.0, &Matrix::outer(&d, &d));
    }
    scatter.scale_mut(1.0 / c as f64);
    let inv_root = Matrix::from_diag(&spectrum.iter().map(|l| 1.0 / l.sqrt()).collect::<Vec<_>>());
    let inv_cov_root = basis.matmul(&inv_root).matmul(&basis.transpose());
    let mut relative = inv_cov_root.matmul(&scatter).matmul(&inv_cov_root);
    relative.symmetrize();
    let top = sym_evd(&relative, 1e-12)?.eigenvalues[0];
    if top <= 0.0 {
        return Err(Error::DegenerateSubspace);
    }
    let radius = (spec.separation / top).sqrt();
    centres.iter_mut().flatten().for_each(|x| *x *= radius);

    // x = Σ^{1/2} (I − r² Σ^{−1/2} S_b Σ^{−1/2})^{1/2} g + μ_class has covariance Σ.
    let mut within = Matrix::identity(m).sub(&relative.scale(radius * radius));
    within.symmetrize();
    let eig = sym_evd(&within, 1e-12)?;
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let mixing = cov_root.matmul(&eig.reconstruct_with(&roots));

    let means = centres;
    let mean: Vec<f64> = centroid.iter().map(|x| x * radius).collect();

    let draw = |count: usize, rng: &mut SplitMix64| -> Dataset {
        let mut labels: Vec<usize> = (0..count).map(|i| i % c).collect();
        rng.shuffle(&mut labels);
        let samples = labels
            .iter()
            .map(|&l| {
                let g: Vec<f64> = (0..m).map(|_| rng.next_normal()).collect();
                let mut x = mixing.matvec(&g);
                x.iter_mut().zip(&means[l]).for_each(|(a, b)| *a += b);
                Matrix::from_vec(1, m, x).expect("row vector shape")
            })
            .collect();
        Dataset {
            samples,
            labels,
            classes: c,
        }
    };
    let train = draw(spec.samples_train, &mut rng);
    let test = draw(spec.samples_test, &mut rng);
    Ok(SyntheticData {
        train,
        test,
        covariance,
        mean,
    })
}

/// Modified Gram–Schmidt on the columns of a Gaussian matrix.
fn random_orthonormal(m: usize, rng: &mut SplitMix64) -> Matrix {
    let mut cols: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..m).map(|_| rng.next_normal()).collect())
        .collect();
    for j in 0..m {
        for k in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let p: f64 = done[k].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
            rest[0]
                .iter_mut()
                .zip(&done[k])
                .for_each(|(a, b)| *a -= p * b);
        }
        let n = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        cols[j].iter_mut().for_each(|x| *x /= n);
    }
    let mut u = Matrix::zeros(m, m);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            u[(i, j)] = v;
        }
    }
    u
}
