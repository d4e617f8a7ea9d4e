//! Water-filling and spectral routines against the independent oracles.

use proptest::prelude::*;
use robust_iwf::{best_response, operator_norm_l2, spectral_radius, verify_kkt, Matrix};
use robust_iwf_validation as oracle;

fn instance() -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|k| {
        (
            prop::collection::vec(0.05f64..2.0, k),
            0.1f64..1.5,
            prop::collection::vec(0.05f64..1.2, k),
        )
    })
}

fn nonneg_matrix(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=max_n)
        .prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn best_response_beats_grid((s, p_max, mask) in instance()) {
        let br = best_response(&s, p_max, &mask).unwrap();
        let grid = oracle::grid_max_rate(&s, p_max, &mask, 1e-2);
        prop_assert!(oracle::rate(&s, &br.power) >= grid - 1e-9);
        prop_assert!(verify_kkt(&s, p_max, &mask, &br.power, br.lambda, 1e-8));
    }

    #[test]
    fn spectral_radius_matches_characteristic_root(a in nonneg_matrix(5)) {
        let rho = spectral_radius(&Matrix::from_rows(&a).unwrap(), 1e-10).unwrap();
        let exact = oracle::largest_real_eigenvalue(&a).unwrap();
        prop_assert!((rho - exact).abs() < 1e-8, "{} vs {}", rho, exact);
    }

    #[test]
    fn operator_norm_matches_jacobi(a in nonneg_matrix(6)) {
        let norm = operator_norm_l2(&Matrix::from_rows(&a).unwrap(), 1e-10).unwrap();
        prop_assert!((norm - oracle::spectral_norm(&a)).abs() < 1e-8);
    }

    #[test]
    fn symmetric_radius_matches_jacobi(a in nonneg_matrix(6)) {
        let n = a.len();
        let sym: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[i][j] + a[j][i]).collect()).collect();
        let rho = spectral_radius(&Matrix::from_rows(&sym).unwrap(), 1e-10).unwrap();
        let exact = oracle::symmetric_eigenvalues(&sym).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!((rho - exact).abs() < 1e-8);
    }
}

#[test]
fn three_channel_example_by_water_level_grid() {
    // scan the water level finely; the budget is met at mu = 3
    let s = [1.0, 2.0, 4.0];
    let spent = |mu: f64| s.iter().map(|v| (mu - v).clamp(0.0, 10.0)).sum::<f64>();
    let mu = (0..=600_000)
        .map(|i| 1.0 + i as f64 * 1e-5)
        .min_by(|a, b| (spent(*a) - 3.0).abs().total_cmp(&(spent(*b) - 3.0).abs()))
        .unwrap();
    let br = best_response(&s, 3.0, &[10.0; 3]).unwrap();
    assert!((br.water_level.unwrap() - mu).abs() < 1e-5);
    assert!((br.power[0] - 2.0).abs() < 1e-9 && (br.power[1] - 1.0).abs() < 1e-9);
    assert_eq!(br.power[2], 0.0);
}

#[test]
fn antidiagonal_norm_by_expansion() {
    // A^T A = diag(b^2, a^2)
    let (a, b) = (0.3, 0.7);
    let m = Matrix::from_rows(&[vec![0.0, a], vec![b, 0.0]]).unwrap();
    assert!((operator_norm_l2(&m, 1e-12).unwrap() - 0.7).abs() < 1e-10);
    assert!((spectral_radius(&m, 1e-12).unwrap() - (a * b).sqrt()).abs() < 1e-10);
}

#[test]
fn reducible_blocks() {
    // two decoupled blocks; the radius comes from the larger one
    let m = Matrix::from_rows(&[
        vec![0.2, 0.0, 0.0],
        vec![0.0, 0.0, 2.0],
        vec![0.0, 0.5, 0.0],
    ])
    .unwrap();
    assert!((spectral_radius(&m, 1e-12).unwrap() - 1.0).abs() < 1e-10);
    // upper triangular: eigenvalues on the diagonal
    let t = Matrix::from_rows(&[vec![0.3, 5.0], vec![0.0, 0.9]]).unwrap();
    assert!((spectral_radius(&t, 1e-12).unwrap() - 0.9).abs() < 1e-10);
}
