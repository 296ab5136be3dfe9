//! Oracle suites runnable from the command line. Each suite compares a fast
//! path against a slow, independent computation and reports one check per
//! invariant.

use std::fmt;
use std::str::FromStr;

use crate::data::rng::SplitMix64;
use crate::data::{gen_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::linalg::{sym_evd, Matrix};
use crate::nn::Architecture;
use crate::optimizer::direct::DirectNetwork;
use crate::optimizer::{HyperParams, Trainer};
use crate::recursive::{RecursiveParams, RecursiveState};
use crate::zca::{build_whitening, GainSpec};
use crate::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Equivalence,
    RecursiveQ,
    Whitening,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Equivalence, Suite::RecursiveQ, Suite::Whitening];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Equivalence => "equivalence",
            Suite::RecursiveQ => "recursiveq",
            Suite::Whitening => "whitening",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn bound(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value < limit,
            detail: format!("{value:.3e} (limit {limit:e})"),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    match suite {
        Suite::Equivalence => {
            let div = equivalence_divergence(50, 7)?;
            Ok(vec![Check::bound(
                "direct vs gradient trajectory, 50 steps",
                div,
                1e-9,
            )])
        }
        Suite::RecursiveQ => {
            let err = recursive_q_error(32, 100, 11)?;
            let slope = recursive_q_mac_exponent(&[16, 32, 64, 128], 13)?;
            Ok(vec![
                Check::bound("max |Q - T^T T| over 100 steps at M=32", err, 1e-10),
                Check::bound("MAC growth exponent of the Q update", slope, 2.3),
            ])
        }
        Suite::Whitening => {
            let err = whitening_error(100, 32, 17)?;
            Ok(vec![Check::bound(
                "max |T Phi T^T - I| over 100 SPD matrices",
                err,
                1e-8,
            )])
        }
    }
}

/// Symmetric positive definite `m×m` matrix with a log-uniform spectrum in
/// `[1, cond]` and a random eigenbasis.
pub fn random_spd(m: usize, cond: f64, rng: &mut SplitMix64) -> Result<Matrix> {
    let g = Matrix::from_vec(m, m, (0..m * m).map(|_| rng.next_normal()).collect())?;
    let mut sym = g.add(&g.transpose());
    sym.symmetrize();
    let basis = sym_evd(&sym, 1e-12)?;
    let spectrum: Vec<f64> = (0..m).map(|_| cond.powf(rng.next_f64())).collect();
    let mut a = basis.reconstruct_with(&spectrum);
    a.symmetrize();
    Ok(a)
}

/// Largest relative parameter gap between the direct path and the
/// gradient-based trainer after `steps` batches with a fixed, non-identity
/// transform installed in both.
pub fn equivalence_divergence(steps: usize, seed: u64) -> Result<f64> {
    let (m, batch, block) = (32, 16, 4);
    let spec = SyntheticSpec {
        dim: m,
        classes: 10,
        cond: 100.0,
        samples_train: steps * batch,
        samples_test: 10,
        seed,
        separation: 0.9,
    };
    let data = gen_synthetic(&spec)?.train;
    let mut rng = SplitMix64::new(seed ^ 0x5EED);
    let net = Architecture::mlp(m, &[64, 32], 10).build(&mut rng)?;

    let mut direct = DirectNetwork::new(net);
    for (l, dim) in direct.network.input_dims().into_iter().enumerate() {
        let scale = 0.3 / (dim as f64).sqrt();
        let mut t = Matrix::identity(dim);
        for v in t.data_mut() {
            *v += scale * rng.next_normal();
        }
        let mean = (0..dim).map(|_| 0.2 * rng.next_normal()).collect();
        direct.set_whitening(l, t, mean)?;
    }

    let hyper = HyperParams {
        batch_size: batch,
        block_batches: block,
        eta: 0.05,
        momentum: 0.0,
        weight_decay: 0.0,
        ..HyperParams::defaults(Method::Evd)
    };
    let mut trainer = Trainer::new(direct.folded(), Method::Evd, hyper)?;
    trainer.freeze_whitening = true;
    for l in 0..direct.transforms.len() {
        trainer.inject_whitening(l, direct.transforms[l].clone(), direct.means[l].clone())?;
    }

    for s in 0..steps {
        let idx: Vec<usize> = (s * batch..(s + 1) * batch).collect();
        direct.train_batch(&data, &idx, trainer.eta())?;
        trainer.train_batch(&data, &idx)?;
    }

    let folded = direct.folded();
    let mut worst = 0.0f64;
    for (a, b) in folded.layers.iter().zip(&trainer.network.layers) {
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            worst = worst.max(wa.max_abs_diff(wb) / wb.max_abs().max(f64::MIN_POSITIVE));
        }
        let bias_gap = a
            .bias
            .iter()
            .zip(&b.bias)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        let bias_scale = b
            .bias
            .iter()
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
            .max(1e-3);
        worst = worst.max(bias_gap / bias_scale);
    }
    Ok(worst)
}

fn random_unit(m: usize, rng: &mut SplitMix64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m).map(|_| rng.next_normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Worst `max |Q − TᵀT|` over `steps` random recursive updates, with `TᵀT`
/// formed by a full product after every step.
pub fn recursive_q_error(m: usize, steps: usize, seed: u64) -> Result<f64> {
    let mut rng = SplitMix64::new(seed);
    let mut state = RecursiveState::new(m, RecursiveParams::default())?;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let v = random_unit(m, &mut rng);
        let a = -0.9 + 1.4 * rng.next_f64();
        state.update(&v, a)?;
        worst = worst.max(state.q.max_abs_diff(&state.t.gram()));
    }
    Ok(worst)
}

/// MACs of one recursive `T`/`Q` update at dimension `m`.
pub fn recursive_update_macs(m: usize, seed: u64) -> Result<u64> {
    let mut rng = SplitMix64::new(seed);
    let mut state = RecursiveState::new(m, RecursiveParams::default())?;
    state.update(&random_unit(m, &mut rng), -0.5)
}

/// Least-squares slope of `log MACs` against `log M`.
pub fn recursive_q_mac_exponent(dims: &[usize], seed: u64) -> Result<f64> {
    let points = dims
        .iter()
        .map(|&m| {
            Ok((
                (m as f64).ln(),
                (recursive_update_macs(m, seed)? as f64).ln(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(log_log_slope(&points))
}

pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Worst `max |T Φ Tᵀ − I|` over `trials` random SPD matrices of size up to
/// `max_dim`, with uncapped gains.
pub fn whitening_error(trials: usize, max_dim: usize, seed: u64) -> Result<f64> {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let m = 1 + rng.below(max_dim);
        let cond = 10f64.powf(3.0 * rng.next_f64());
        let phi = random_spd(m, cond, &mut rng)?;
        let eig = sym_evd(&phi, 1e-14)?;
        let t = build_whitening(&eig, &GainSpec::uncapped(&eig.eigenvalues, 1e-300))?;
        let white = t.matmul(&phi).matmul(&t.transpose());
        worst = worst.max(white.max_abs_diff(&Matrix::identity(m)));
    }
    Ok(worst)
}
