//! Consensus graph update: projected pairwise distances, the per-row simplex
//! problem `min ‖a + d/(2γ)‖²  s.t. aᵀ1 = 1, a ≥ 0`, and neighbour-count driven
//! estimation of `γ`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;

/// Which distance the graph is learned from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Learned Mahalanobis metric: distances between columns of `P_vᵀ Z_v`.
    Mscam,
    /// Euclidean distances between columns of `Z_v`.
    Mscan,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Mscam => "mscam",
            Variant::Mscan => "mscan",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mscam" => Ok(Variant::Mscam),
            "mscan" => Ok(Variant::Mscan),
            other => Err(Error::Invalid(format!("unknown variant {other:?}"))),
        }
    }
}

/// Symmetric `n × n` table of `λ`-weighted squared distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    pub d: DMatrix<f64>,
    pub variant: Variant,
}

impl DistanceTable {
    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    /// Returns a copy with every distance multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        Self {
            d: &self.d * t,
            variant: self.variant,
        }
    }

    /// Off-diagonal distances of row `i` paired with their column index.
    fn row_without_self(&self, i: usize) -> (Vec<f64>, Vec<usize>) {
        let n = self.n();
        let mut dist = Vec::with_capacity(n - 1);
        let mut cols = Vec::with_capacity(n - 1);
        for j in (0..n).filter(|&j| j != i) {
            dist.push(self.d[(i, j)]);
            cols.push(j);
        }
        (dist, cols)
    }
}

/// `d_ij = λ Σ_v ‖f_i^v − f_j^v‖²` where `f^v` are the columns of `P_vᵀ Z_v`
/// (MSCAM) or of `Z_v` (MSCAN). Views are summed in order.
///
/// For MSCAN `ps` is ignored and may be empty.
pub fn pairwise_distances(
    zs: &[DMatrix<f64>],
    ps: &[DMatrix<f64>],
    lambda: f64,
    variant: Variant,
) -> Result<DistanceTable> {
    let first = zs
        .first()
        .ok_or_else(|| Error::Invalid("no views to measure distances on".into()))?;
    let n = first.ncols();
    let features: Vec<DMatrix<f64>> = match variant {
        Variant::Mscan => zs.to_vec(),
        Variant::Mscam => {
            if ps.len() != zs.len() {
                return Err(Error::Shape(format!(
                    "{} projections for {} representations",
                    ps.len(),
                    zs.len()
                )));
            }
            zs.iter()
                .zip(ps)
                .enumerate()
                .map(|(v, (z, p))| {
                    if z.nrows() != n || p.nrows() != n {
                        return Err(Error::Shape(format!(
                            "view {v}: Z is {}x{}, P is {}x{}, expected n = {n}",
                            z.nrows(),
                            z.ncols(),
                            p.nrows(),
                            p.ncols()
                        )));
                    }
                    Ok(p.transpose() * z)
                })
                .collect::<Result<_>>()?
        }
    };
    for (v, f) in features.iter().enumerate() {
        if f.ncols() != n {
            return Err(Error::Shape(format!("view {v} has {} columns, expected {n}", f.ncols())));
        }
    }
    Ok(DistanceTable {
        d: weighted_sq_distances(&features, lambda),
        variant,
    })
}

/// Raw-feature distances `Σ_v ‖x_i^v − x_j^v‖²` over data columns.
pub fn feature_distances(views: &[DMatrix<f64>]) -> DistanceTable {
    DistanceTable {
        d: weighted_sq_distances(views, 1.0),
        variant: Variant::Mscan,
    }
}

fn weighted_sq_distances(features: &[DMatrix<f64>], lambda: f64) -> DMatrix<f64> {
    let n = features[0].ncols();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let mut total = 0.0;
                    for f in features {
                        let (ci, cj) = (f.column(i), f.column(j));
                        let mut s = 0.0;
                        for (a, b) in ci.iter().zip(cj.iter()) {
                            s += (a - b) * (a - b);
                        }
                        total += s;
                    }
                    lambda * total
                })
                .collect()
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &x) in row.iter().enumerate() {
            let j = i + 1 + off;
            d[(i, j)] = x;
            d[(j, i)] = x;
        }
    }
    d
}

/// Per-row `γ_i` and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub per_row: Vec<f64>,
    pub global: f64,
}

/// How the row solver weights the quadratic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// Each row uses its own `γ_i`, giving exactly `k` neighbours per row.
    #[default]
    PerRow,
    /// Every row uses the mean `γ`.
    Averaged,
}

impl GammaEstimate {
    pub fn row_weights(&self, mode: GammaMode) -> Vec<f64> {
        match mode {
            GammaMode::PerRow => self.per_row.clone(),
            GammaMode::Averaged => vec![self.global; self.per_row.len()],
        }
    }
}

/// Indices of `dist` in ascending order, ties broken by ascending index.
fn ascending_order(dist: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order
}

fn check_neighbour_count(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Invalid("neighbour count k must be at least 1".into()));
    }
    if k + 1 > n.saturating_sub(1) {
        return Err(Error::Invalid(format!(
            "k = {k} needs at least k + 2 = {} instances, got {n}",
            k + 2
        )));
    }
    Ok(())
}

/// `γ_i = (k/2)·d_(i,k+1) − ½ Σ_{j≤k} d_(i,j)` over ascending off-diagonal
/// distances, and `γ = mean(γ_i)`.
pub fn estimate_gamma(table: &DistanceTable, k: usize) -> Result<GammaEstimate> {
    let n = table.n();
    check_neighbour_count(k, n)?;
    let per_row: Vec<f64> = (0..n)
        .map(|i| {
            let (dist, _) = table.row_without_self(i);
            let order = ascending_order(&dist);
            let head: f64 = order[..k].iter().map(|&j| dist[j]).sum();
            (0.5 * k as f64 * dist[order[k]] - 0.5 * head).max(0.0)
        })
        .collect();
    let global = per_row.iter().sum::<f64>() / n as f64;
    Ok(GammaEstimate { per_row, global })
}

/// Relative tolerance below which a candidate support entry counts as zero.
const SUPPORT_RTOL: f64 = 1e-12;

/// Exact minimiser of `‖a + d/(2γ)‖²` over the probability simplex.
///
/// With distances sorted ascending and `m` the support size, the solution is
/// `a_j = (−d_j/(2γ) + 1/m + Σ_{l≤m} d_l/(2mγ))₊`. When `γ` is the value
/// [`estimate_gamma`] derives for neighbour count `k`, `m = k` and the row
/// has at most `k` nonzeros. `γ = 0` selects the uniform distribution over
/// the minimal-distance entries among the `k` nearest.
pub fn row_update(dist: &[f64], k: usize, gamma: f64) -> Result<Vec<f64>> {
    let len = dist.len();
    if k == 0 || k > len {
        return Err(Error::Invalid(format!("k = {k} with {len} candidate neighbours")));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Invalid(format!("degenerate row: gamma = {gamma}")));
    }
    if let Some(bad) = dist.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Invalid(format!("distance {bad} is not a finite nonnegative value")));
    }
    let order = ascending_order(dist);
    let mut a = vec![0.0; len];

    if gamma == 0.0 {
        let best = dist[order[0]];
        let ties: Vec<usize> = order[..k].iter().copied().filter(|&j| dist[j] == best).collect();
        let w = 1.0 / ties.len() as f64;
        for j in ties {
            a[j] = w;
        }
        return Ok(a);
    }

    let two_gamma = 2.0 * gamma;
    let mut support = 1;
    let mut head = dist[order[0]];
    let mut support_sum = head;
    for (m, &j) in order.iter().enumerate().skip(1) {
        head += dist[j];
        let size = (m + 1) as f64;
        let slack = two_gamma + head - size * dist[j];
        if slack > SUPPORT_RTOL * (two_gamma + head) {
            support = m + 1;
            support_sum = head;
        } else {
            break;
        }
    }
    let shift = (two_gamma + support_sum) / support as f64;
    for &j in &order[..support] {
        a[j] = ((shift - dist[j]) / two_gamma).max(0.0);
    }
    Ok(a)
}

/// Solve every row with the given per-row weights. The diagonal stays zero.
pub fn solve_rows(table: &DistanceTable, k: usize, gammas: &[f64]) -> Result<SimilarityGraph> {
    let n = table.n();
    check_neighbour_count(k, n)?;
    if gammas.len() != n {
        return Err(Error::Shape(format!("{} gamma values for {n} rows", gammas.len())));
    }
    let rows: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (dist, cols) = table.row_without_self(i);
            row_update(&dist, k, gammas[i]).map(|a| (a, cols))
        })
        .collect::<Result<_>>()?;
    let mut a = DMatrix::zeros(n, n);
    for (i, (vals, cols)) in rows.into_iter().enumerate() {
        for (x, j) in vals.into_iter().zip(cols) {
            a[(i, j)] = x;
        }
    }
    Ok(SimilarityGraph::from_matrix_unchecked(a))
}

/// Estimate `γ` from the table, then solve each row with its own `γ_i`.
pub fn update_similarity(table: &DistanceTable, k: usize) -> Result<SimilarityGraph> {
    let gamma = estimate_gamma(table, k)?;
    solve_rows(table, k, &gamma.per_row)
}
