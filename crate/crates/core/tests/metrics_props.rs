use proptest::prelude::*;
use wopt_core::data::rng::SplitMix64;
use wopt_core::linalg::Matrix;
use wopt_core::metrics::{layer_metrics, normalized_rank_kappa, whiteness_rho};
use wopt_core::verify::random_spd;

fn spd(seed: u64, m: usize) -> Matrix {
    random_spd(m, 50.0, &mut SplitMix64::new(seed)).unwrap()
}

fn permuted(a: &Matrix, perm: &[usize]) -> Matrix {
    let m = a.rows();
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = a[(perm[i], perm[j])];
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rho_ignores_feature_scaling(seed in 0u64..1000, m in 2usize..10, logs in prop::collection::vec(-3.0f64..3.0, 10)) {
        let a = spd(seed, m);
        let d: Vec<f64> = logs[..m].iter().map(|l| l.exp()).collect();
        let dm = Matrix::from_diag(&d);
        let scaled = dm.matmul(&a).matmul(&dm);
        let (r0, r1) = (whiteness_rho(&a).unwrap(), whiteness_rho(&scaled).unwrap());
        prop_assert!((r0 - r1).abs() <= 1e-12);
    }

    #[test]
    fn rho_ignores_feature_order(seed in 0u64..1000, m in 2usize..10) {
        let a = spd(seed, m);
        let mut perm: Vec<usize> = (0..m).collect();
        SplitMix64::new(seed + 1).shuffle(&mut perm);
        let (r0, r1) = (whiteness_rho(&a).unwrap(), whiteness_rho(&permuted(&a, &perm)).unwrap());
        prop_assert!((r0 - r1).abs() <= 1e-12);
    }

    #[test]
    fn rho_within_bounds(seed in 0u64..1000, m in 1usize..10) {
        let r = whiteness_rho(&spd(seed, m)).unwrap();
        prop_assert!(r <= 1.0 + 1e-12 && r >= 1.0 / m as f64 - 1e-12);
    }

    #[test]
    fn kappa_ignores_overall_scale(seed in 0u64..1000, m in 1usize..10, s in 1e-3f64..1e3) {
        let a = spd(seed, m);
        prop_assert_eq!(normalized_rank_kappa(&a).unwrap(), normalized_rank_kappa(&a.scale(s)).unwrap());
    }
}

#[test]
fn dead_features_keep_rho_defined() {
    let a = Matrix::from_diag(&[1.0, 0.0, 2.0]);
    let lm = layer_metrics(&a).unwrap();
    assert_eq!(lm.rho, 1.0);
    assert!(whiteness_rho(&a).is_err());
}
