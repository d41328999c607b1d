//! Fixtures shared by the benchmarks.

use mvsc_core::neighbors::feature_distances;
use mvsc_core::{build_laplacian, generate_synthetic, update_similarity, MultiViewDataset, SyntheticSpec};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `n` points in `R^d`, half in each of two random `dim`-dimensional subspaces.
pub fn planted_subspaces(n: usize, d: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |r, c| DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let mut x = DMatrix::zeros(d, n);
    for s in 0..2 {
        let basis = gaussian(d, dim).qr().q();
        for i in (s * n / 2)..((s + 1) * n / 2) {
            x.set_column(i, &(&basis * gaussian(dim, 1)).column(0));
        }
    }
    x
}

/// Laplacian of the 9-neighbour graph on raw features.
pub fn feature_laplacian(views: &[DMatrix<f64>]) -> DMatrix<f64> {
    let graph = update_similarity(&feature_distances(views), 9).expect("enough points for k = 9");
    build_laplacian(&graph).laplacian
}

pub fn mixture(n: usize, corruption: f64) -> MultiViewDataset {
    generate_synthetic(&SyntheticSpec {
        n,
        corruption_fraction: corruption,
        seed: 1,
        ..SyntheticSpec::default()
    })
    .expect("valid synthetic spec")
}
