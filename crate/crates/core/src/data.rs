//! Multi-view datasets and the synthetic Gaussian-mixture generator.

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `V` views over the same `n` instances. View `v` is a `d_v × n` matrix whose
/// columns are instances.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<DMatrix<f64>>,
    labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<DMatrix<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::Invalid("dataset needs at least one view".into()))?;
        let n = first.ncols();
        if n == 0 {
            return Err(Error::Invalid("dataset has no instances".into()));
        }
        for (v, x) in views.iter().enumerate() {
            if x.ncols() != n {
                return Err(Error::Shape(format!(
                    "view {v} has {} columns, view 0 has {n}",
                    x.ncols()
                )));
            }
            if x.nrows() == 0 {
                return Err(Error::Invalid(format!("view {v} has no feature rows")));
            }
            if x.iter().any(|e| !e.is_finite()) {
                return Err(Error::Invalid(format!("view {v} contains a non-finite entry")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Shape(format!(
                    "{} labels for {n} instances",
                    labels.len()
                )));
            }
        }
        Ok(Self { views, labels })
    }

    pub fn n(&self) -> usize {
        self.views[0].ncols()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &DMatrix<f64> {
        &self.views[v]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.nrows()).collect()
    }
}

/// Parameters of the synthetic mixture generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub views: usize,
    pub clusters: usize,
    /// Feature dimension of every view.
    pub dim: usize,
    /// Per-coordinate offset between component means before rotation: two
    /// components sit at `∓(s/2)·𝟙`, so means are `s·√dim` apart.
    pub mean_separation: f64,
    /// Per-entry noise variance factor applied to corrupted columns.
    pub noise_sigma_scale: f64,
    pub corruption_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            views: 3,
            clusters: 2,
            dim: 10,
            mean_separation: 4.0,
            noise_sigma_scale: 0.3,
            corruption_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clusters < 2 {
            return Err(Error::Invalid("synthetic data needs at least 2 clusters".into()));
        }
        if self.n < self.clusters {
            return Err(Error::Invalid(format!(
                "n = {} is smaller than the cluster count {}",
                self.n, self.clusters
            )));
        }
        if self.views == 0 {
            return Err(Error::Invalid("synthetic data needs at least one view".into()));
        }
        if self.dim < self.clusters {
            return Err(Error::Invalid(format!(
                "dim = {} cannot host {} equidistant means",
                self.dim, self.clusters
            )));
        }
        if !(self.mean_separation >= 0.0 && self.mean_separation.is_finite()) {
            return Err(Error::Invalid("mean_separation must be finite and >= 0".into()));
        }
        if !(self.noise_sigma_scale >= 0.0 && self.noise_sigma_scale.is_finite()) {
            return Err(Error::Invalid("noise_sigma_scale must be finite and >= 0".into()));
        }
        check_fraction(self.corruption_fraction)
    }
}

fn check_fraction(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("corruption fraction {p} is outside [0, 1]")))
    }
}

/// Sizes of `clusters` components over `n` instances; they differ by at most one.
pub fn component_sizes(n: usize, clusters: usize) -> Vec<usize> {
    (0..clusters)
        .map(|k| n / clusters + usize::from(k < n % clusters))
        .collect()
}

/// Sample a dataset from per-view Gaussian mixtures with unit covariance.
///
/// Two components have means `∓(s/2)·𝟙`; more components use a regular
/// simplex with the same edge length `s·√dim`. Means are independently
/// rotated per view. Instance order is shuffled; labels are shared across views. If
/// `corruption_fraction > 0` the result is passed through [`corrupt`] with a
/// seed derived from `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MultiViewDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut labels: Vec<usize> = component_sizes(spec.n, spec.clusters)
        .into_iter()
        .enumerate()
        .flat_map(|(k, size)| std::iter::repeat_n(k, size))
        .collect();
    labels.shuffle(&mut rng);

    let edge = spec.mean_separation * (spec.dim as f64).sqrt();
    let edge_scale = edge / std::f64::consts::SQRT_2;
    let inv_c = 1.0 / spec.clusters as f64;
    let mut views = Vec::with_capacity(spec.views);
    for _ in 0..spec.views {
        let rotation = random_rotation(spec.dim, &mut rng);
        let means: Vec<_> = (0..spec.clusters)
            .map(|k| {
                let mut base = nalgebra::DVector::zeros(spec.dim);
                if spec.clusters == 2 {
                    let sign = if k == 0 { -0.5 } else { 0.5 };
                    base.fill(sign * spec.mean_separation);
                } else {
                    for j in 0..spec.clusters {
                        base[j] = edge_scale * (f64::from(u8::from(j == k)) - inv_c);
                    }
                }
                &rotation * base
            })
            .collect();
        let mut x = DMatrix::zeros(spec.dim, spec.n);
        for (i, &label) in labels.iter().enumerate() {
            for r in 0..spec.dim {
                let noise: f64 = StandardNormal.sample(&mut rng);
                x[(r, i)] = means[label][r] + noise;
            }
        }
        views.push(x);
    }

    let clean = MultiViewDataset::new(views, Some(labels))?;
    if spec.corruption_fraction > 0.0 {
        corrupt(
            &clean,
            spec.corruption_fraction,
            spec.noise_sigma_scale,
            spec.seed.wrapping_add(0x9E37_79B9_7F4A_7C15),
        )
    } else {
        Ok(clean)
    }
}

/// Haar-distributed orthogonal matrix from the QR factorisation of a Gaussian matrix.
fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Corrupt `⌊p·n⌋` uniformly chosen columns per view with additive Gaussian
/// noise whose per-entry variance is `sigma_scale · ‖x‖₂`.
///
/// Column subsets are drawn independently per view. Untouched columns are
/// copied bit for bit.
pub fn corrupt(
    data: &MultiViewDataset,
    fraction: f64,
    sigma_scale: f64,
    seed: u64,
) -> Result<MultiViewDataset> {
    check_fraction(fraction)?;
    if !(sigma_scale >= 0.0 && sigma_scale.is_finite()) {
        return Err(Error::Invalid("sigma_scale must be finite and >= 0".into()));
    }
    let n = data.n();
    let count = (fraction * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views = Vec::with_capacity(data.num_views());
    for x in data.views() {
        let mut out = x.clone();
        let mut chosen = index::sample(&mut rng, n, count).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            let norm = x.column(i).norm();
            let std = (sigma_scale * norm).sqrt();
            if std == 0.0 {
                continue;
            }
            let noise = Normal::new(0.0, std).map_err(|e| Error::Numeric(e.to_string()))?;
            for r in 0..x.nrows() {
                out[(r, i)] += noise.sample(&mut rng);
            }
        }
        views.push(out);
    }
    MultiViewDataset::new(views, data.labels.clone())
}
