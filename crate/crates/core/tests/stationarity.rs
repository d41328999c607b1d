//! The closed-form `Z`, `P` and MSCAN updates must zero the gradient of
//! their subproblem objectives. Gradients are central differences of the
//! objectives written out directly.

use mvsc_core::admm::{update_p, update_z, AdmmState, ViewSystem};
use mvsc_core::neighbors::{update_similarity, DistanceTable, Variant};
use mvsc_core::{build_laplacian, mscan_update_z};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const RTOL: f64 = 1e-5;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn fd_gradient(f: impl Fn(&DMatrix<f64>) -> f64, at: &DMatrix<f64>) -> DMatrix<f64> {
    let h = 1e-4 * (1.0 + at.amax());
    let mut g = DMatrix::zeros(at.nrows(), at.ncols());
    let mut probe = at.clone();
    for j in 0..at.ncols() {
        for i in 0..at.nrows() {
            let x = at[(i, j)];
            probe[(i, j)] = x + h;
            let up = f(&probe);
            probe[(i, j)] = x - h;
            let down = f(&probe);
            probe[(i, j)] = x;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    g
}

/// Gradient norm at the candidate relative to the gradient norm at the origin.
fn relative_stationarity(f: impl Fn(&DMatrix<f64>) -> f64, at: &DMatrix<f64>) -> f64 {
    let origin = DMatrix::zeros(at.nrows(), at.ncols());
    let scale = fd_gradient(&f, &origin).norm().max(1e-12);
    fd_gradient(&f, at).norm() / scale
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, c: usize) -> AdmmState {
    let w = gaussian(rng, n, c).qr().q();
    AdmmState {
        z: gaussian(rng, n, n) * 0.3,
        p: gaussian(rng, n, c),
        w,
        paux: gaussian(rng, n, c),
        y1: gaussian(rng, n, c),
        y2: gaussian(rng, n, c),
        mu: rng.random_range(0.01..10.0),
    }
}

#[test]
fn z_update_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.random_range(3..=10);
        let c = rng.random_range(1..=n.min(4));
        let d = rng.random_range(2..=12);
        let alpha = rng.random_range(0.1..10.0);
        let x = gaussian(&mut rng, d, n);
        let sys = ViewSystem::new(0, &x, alpha).unwrap();
        let state = random_state(&mut rng, n, c);
        let z = update_z(&state, &sys).unwrap();
        let mu = state.mu;
        let f = |z: &DMatrix<f64>| {
            let fit = (&x - &x * z).norm_squared();
            let couple = &state.w - z.transpose() * &state.p + &state.y1 / mu;
            fit + alpha * z.norm_squared() + 0.5 * mu * couple.norm_squared()
        };
        let r = relative_stationarity(f, &z);
        assert!(r < RTOL, "n={n} c={c}: relative gradient {r:e}");
    }
}

#[test]
fn p_update_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(3..=10);
        let c = rng.random_range(1..=n.min(4));
        let d = rng.random_range(2..=12);
        let x = gaussian(&mut rng, d, n);
        let sys = ViewSystem::new(0, &x, rng.random_range(0.1..10.0)).unwrap();
        let state = random_state(&mut rng, n, c);
        let p = update_p(&state, &sys).unwrap();
        let mu = state.mu;
        let f = |p: &DMatrix<f64>| {
            let couple = &state.w - state.z.transpose() * p + &state.y1 / mu;
            let copy = &state.paux - p + &state.y2 / mu;
            0.5 * mu * (couple.norm_squared() + copy.norm_squared())
        };
        let r = relative_stationarity(f, &p);
        assert!(r < RTOL, "n={n} c={c}: relative gradient {r:e}");
    }
}

#[test]
fn mscan_update_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.random_range(4..=10);
        let d = rng.random_range(2..=12);
        let alpha = rng.random_range(0.1..10.0);
        let lambda = rng.random_range(0.0..5.0);
        let x = gaussian(&mut rng, d, n);
        let mut dist = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(0.0..3.0);
                dist[(i, j)] = v;
                dist[(j, i)] = v;
            }
        }
        let k = rng.random_range(1..=n - 2);
        let graph = update_similarity(&DistanceTable { d: dist, variant: Variant::Mscan }, k).unwrap();
        let a = graph.matrix().clone();
        let laplacian = build_laplacian(&graph).laplacian;
        let z = mscan_update_z(&x, &laplacian, alpha, lambda).unwrap();
        let f = |z: &DMatrix<f64>| {
            let mut graph_term = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if a[(i, j)] != 0.0 {
                        graph_term += a[(i, j)] * (z.column(i) - z.column(j)).norm_squared();
                    }
                }
            }
            (&x - &x * z).norm_squared() + alpha * z.norm_squared() + lambda * graph_term
        };
        let r = relative_stationarity(f, &z);
        assert!(r < RTOL, "n={n} d={d}: relative gradient {r:e}");
    }
}
