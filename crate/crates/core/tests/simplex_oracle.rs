//! Row updates of the neighbour graph against a brute-force active-set
//! solver for `min Σ d_j a_j + γ Σ a_j²` over the probability simplex.

use mvsc_core::neighbors::{estimate_gamma, row_update, DistanceTable, Variant};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Enumerates every support set, solves the equality-constrained problem on
/// it, and keeps the best KKT point.
fn active_set_oracle(d: &[f64], gamma: f64) -> Vec<f64> {
    let m = d.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let size = support.len() as f64;
        // a_j = (τ − d_j) / 2γ on the support, Σ a_j = 1.
        let tau = (2.0 * gamma + support.iter().map(|&j| d[j]).sum::<f64>()) / size;
        let mut a = vec![0.0; m];
        let mut ok = true;
        for &j in &support {
            a[j] = (tau - d[j]) / (2.0 * gamma);
            if a[j] < -1e-12 {
                ok = false;
            }
        }
        for j in 0..m {
            if mask & (1 << j) == 0 && d[j] < tau - 1e-12 {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let obj: f64 = (0..m).map(|j| d[j] * a[j] + gamma * a[j] * a[j]).sum();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, a));
        }
    }
    best.expect("a KKT point always exists").1
}

/// `γ = (k/2) d_(k+1) − ½ Σ_{j≤k} d_(j)`, written out independently.
fn neighbour_gamma(d: &[f64], k: usize) -> f64 {
    let mut s = d.to_vec();
    s.sort_by(f64::total_cmp);
    0.5 * k as f64 * s[k] - 0.5 * s[..k].iter().sum::<f64>()
}

#[test]
fn matches_active_set_oracle_on_random_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(7..=15);
        let k = rng.random_range(1..=5);
        let d: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.0..10.0)).collect();
        let gamma = neighbour_gamma(&d, k);
        let got = row_update(&d, k, gamma).unwrap();
        let want = active_set_oracle(&d, gamma);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        assert!(got.iter().filter(|&&x| x > 0.0).count() <= k);
    }
    assert!(worst <= 1e-8, "max abs error {worst:e}");
}

#[test]
fn arbitrary_gamma_still_gives_the_minimiser() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let m = rng.random_range(2..=12);
        let d: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..5.0)).collect();
        let gamma = rng.random_range(0.01..20.0);
        let got = row_update(&d, 1, gamma).unwrap();
        let want = active_set_oracle(&d, gamma);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn table_gamma_agrees_with_row_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 12;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let x = rng.random_range(0.0..4.0);
            d[(i, j)] = x;
            d[(j, i)] = x;
        }
    }
    let table = DistanceTable { d: d.clone(), variant: Variant::Mscan };
    let est = estimate_gamma(&table, 4).unwrap();
    for i in 0..n {
        let row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).collect();
        assert!((est.per_row[i] - neighbour_gamma(&row, 4).max(0.0)).abs() < 1e-12);
    }
    let mean = est.per_row.iter().sum::<f64>() / n as f64;
    assert!((est.global - mean).abs() < 1e-12);
}

proptest! {
    #[test]
    fn rows_lie_on_the_simplex(
        d in prop::collection::vec(0.0f64..100.0, 3..30),
        k in 1usize..6,
    ) {
        prop_assume!(k < d.len());
        let gamma = neighbour_gamma(&d, k).max(0.0);
        let a = row_update(&d, k, gamma).unwrap();
        let sum: f64 = a.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(a.iter().all(|&x| x >= 0.0));
        prop_assert!(a.iter().filter(|&&x| x > 0.0).count() <= k);
    }

    #[test]
    fn closer_points_never_get_less_weight(
        d in prop::collection::vec(0.0f64..10.0, 3..20),
        gamma in 0.01f64..10.0,
    ) {
        let a = row_update(&d, 1, gamma).unwrap();
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] < d[j] {
                    prop_assert!(a[i] >= a[j] - 1e-12);
                }
            }
        }
    }
}
