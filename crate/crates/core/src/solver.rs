//! Outer alternation between the per-view subspace problems and the
//! consensus graph, for both variants.
//!
//! The fitted objective is
//!
//! ```text
//! J = Σ_v (‖X_v − X_v Z_v‖² + α‖Z_v‖²) + Σ_ij d_ij a_ij + Σ_i γ_i ‖a_i‖²
//! ```
//!
//! with `d_ij = λ Σ_v ‖F_v(e_i − e_j)‖²`, `F_v = P_vᵀ Z_v` (MSCAM) or `Z_v`
//! (MSCAN). Since `Σ_ij a_ij ‖f_i − f_j‖² = 2 tr(F L Fᵀ)` for the Laplacian
//! `L` of the symmetrised graph, the subspace steps see the graph term with
//! weight `2λ`, which keeps both half-steps minimising the same `J`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmConfig, AdmmState, ViewSystem};
use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::graph::{
    build_laplacian, components_of_symmetric, default_eig_eps, zero_eigenvalue_multiplicity,
    SimilarityGraph, DEFAULT_EDGE_EPS,
};
use crate::linalg::sym_eigen;
use crate::metrics::{self, Scores};
use crate::neighbors::{
    estimate_gamma, feature_distances, pairwise_distances, solve_rows, DistanceTable, GammaMode,
    Variant,
};

pub const LAMBDA_MIN: f64 = 1e-6;
pub const LAMBDA_MAX: f64 = 1e6;

/// When the per-row `γ_i` are re-derived from the current distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSchedule {
    /// Estimated on the first subspace-based graph update and again only
    /// after `λ` changes, so consecutive iterations minimise one objective.
    #[default]
    Frozen,
    /// Re-estimated on every graph update.
    EveryIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub lambda: f64,
    /// Target number of clusters.
    pub c: usize,
    /// Neighbours per row of the graph.
    pub k: usize,
    pub variant: Variant,
    pub outer_max_iters: usize,
    /// Relative objective change below which the outer loop stops.
    pub outer_tol: f64,
    /// Halve `λ` when the graph has fewer than `c` components, double it
    /// when it has more.
    pub lambda_adapt: bool,
    pub gamma_mode: GammaMode,
    pub gamma_schedule: GammaSchedule,
    /// Continue each MSCAM subspace solve from the previous outer
    /// iteration's complete state, penalty and multipliers included.
    pub warm_start: bool,
    /// Inner solver settings; `alpha` and `lambda` are taken from the outer
    /// values.
    pub admm: AdmmConfig,
    /// Seeds the spectral fallback partition.
    pub seed: u64,
    pub edge_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda: 1.0,
            c: 2,
            k: 9,
            variant: Variant::Mscam,
            outer_max_iters: 30,
            outer_tol: 1e-4,
            lambda_adapt: true,
            gamma_mode: GammaMode::PerRow,
            gamma_schedule: GammaSchedule::Frozen,
            warm_start: true,
            admm: AdmmConfig::default(),
            seed: 0,
            edge_eps: DEFAULT_EDGE_EPS,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.c < 2 {
            return Err(Error::Invalid(format!("cluster count c = {} must be at least 2", self.c)));
        }
        if self.c >= n {
            return Err(Error::Invalid(format!(
                "cluster count c = {} must be smaller than n = {n}",
                self.c
            )));
        }
        if self.k == 0 || self.k + 2 > n {
            return Err(Error::Invalid(format!(
                "neighbour count k = {} must satisfy 1 <= k <= n - 2 = {}",
                self.k,
                n.saturating_sub(2)
            )));
        }
        if self.outer_max_iters == 0 {
            return Err(Error::Invalid("outer_max_iters must be positive".into()));
        }
        if self.outer_tol.is_nan() || self.outer_tol <= 0.0 {
            return Err(Error::Invalid(format!("outer_tol = {} must be > 0", self.outer_tol)));
        }
        if self.edge_eps.is_nan() || self.edge_eps < 0.0 {
            return Err(Error::Invalid(format!("edge_eps = {} must be >= 0", self.edge_eps)));
        }
        self.admm_config(self.lambda).validate()
    }

    fn admm_config(&self, lambda: f64) -> AdmmConfig {
        AdmmConfig {
            alpha: self.alpha,
            lambda: 2.0 * lambda,
            ..self.admm.clone()
        }
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub setup: f64,
    pub subspace: f64,
    pub graph: f64,
    pub labels: f64,
}

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    /// Connected components of the final graph.
    pub component_count: usize,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub graph: SimilarityGraph,
    /// The final graph has exactly `c` components and the labels are its
    /// component ids.
    pub converged: bool,
    /// Labels come from the spectral fallback.
    pub fallback: bool,
    pub metrics: Option<Scores>,
    pub outer_iterations: usize,
    pub lambda_trace: Vec<f64>,
    /// Inner iterations per outer iteration and view (MSCAM only).
    pub admm_iterations: Vec<Vec<usize>>,
    pub admm_converged: bool,
    /// Multiplicity of the zero eigenvalue of the final Laplacian.
    pub laplacian_nullity: usize,
    pub representations: Vec<DMatrix<f64>>,
    /// Per-view projections (MSCAM only).
    pub projections: Option<Vec<DMatrix<f64>>>,
    /// Row weights used by the last graph update.
    pub gammas: Vec<f64>,
    pub warnings: Vec<String>,
    pub timings: PhaseTimings,
}

/// `J` for the given representations, graph and row weights. `ps` is
/// required for MSCAM and ignored for MSCAN.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    views: &[DMatrix<f64>],
    zs: &[DMatrix<f64>],
    ps: Option<&[DMatrix<f64>]>,
    graph: &SimilarityGraph,
    alpha: f64,
    lambda: f64,
    gammas: &[f64],
    variant: Variant,
) -> Result<f64> {
    let n = graph.n();
    if views.len() != zs.len() {
        return Err(Error::Shape(format!("{} views but {} representations", views.len(), zs.len())));
    }
    if gammas.len() != n {
        return Err(Error::Shape(format!("{} gamma values for n = {n}", gammas.len())));
    }
    let laplacian = build_laplacian(graph).laplacian;
    let mut total = 0.0;
    for (v, (x, z)) in views.iter().zip(zs).enumerate() {
        if x.ncols() != n || z.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "view {v}: X is {}x{}, Z is {}x{}, graph has n = {n}",
                x.nrows(),
                x.ncols(),
                z.nrows(),
                z.ncols()
            )));
        }
        total += (x - x * z).norm_squared() + alpha * z.norm_squared();
        let f = match variant {
            Variant::Mscan => z.transpose(),
            Variant::Mscam => {
                let ps = ps.ok_or_else(|| Error::Invalid("MSCAM objective needs projections".into()))?;
                let p = ps
                    .get(v)
                    .ok_or_else(|| Error::Shape(format!("no projection for view {v}")))?;
                if p.nrows() != n {
                    return Err(Error::Shape(format!("view {v}: P has {} rows, expected {n}", p.nrows())));
                }
                z.transpose() * p
            }
        };
        total += 2.0 * lambda * (f.transpose() * &laplacian * &f).trace();
    }
    for (i, g) in gammas.iter().enumerate() {
        total += g * graph.row_norm_sq(i);
    }
    Ok(total)
}

/// Solves `(XᵀX + αI)Z + 2λ Z L = XᵀX` for symmetric PSD `L`.
pub fn mscan_update_z(
    x: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    alpha: f64,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let n = x.ncols();
    if laplacian.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "Laplacian is {:?}, data has n = {n}",
            laplacian.shape()
        )));
    }
    let sys = ViewSystem::new(0, x, alpha)?;
    let eig = sym_eigen(laplacian);
    Ok(sylvester_z(&sys, &eig, alpha, lambda))
}

/// `Z = V (H ∘ VᵀQ) Qᵀ` with `XᵀX = V diag(g) Vᵀ`, `L = Q diag(ℓ) Qᵀ` and
/// `H_ij = g_i / (g_i + α + 2λℓ_j)`.
fn sylvester_z(
    sys: &ViewSystem,
    (ell, q): &(DVector<f64>, DMatrix<f64>),
    alpha: f64,
    lambda: f64,
) -> DMatrix<f64> {
    let (g, v) = sys.spectrum();
    let mut m = v.transpose() * q;
    for j in 0..m.ncols() {
        let shift = alpha + 2.0 * lambda * ell[j].max(0.0);
        for i in 0..m.nrows() {
            let denom = g[i] + shift;
            m[(i, j)] *= if g[i] > 0.0 { g[i] / denom } else { 0.0 };
        }
    }
    v * m * q.transpose()
}

/// Connectivity feedback on `λ`, clamped to `[LAMBDA_MIN, LAMBDA_MAX]`.
pub fn adapt_lambda(component_count: usize, c: usize, lambda: f64) -> f64 {
    let next = match component_count.cmp(&c) {
        std::cmp::Ordering::Less => lambda / 2.0,
        std::cmp::Ordering::Greater => lambda * 2.0,
        std::cmp::Ordering::Equal => lambda,
    };
    next.clamp(LAMBDA_MIN, LAMBDA_MAX)
}

/// Labels from the graph and whether the spectral fallback was needed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub labels: Vec<usize>,
    pub component_count: usize,
    pub fallback: bool,
}

/// Component ids when the graph has exactly `c` components; otherwise a
/// `c`-way k-means partition of the rows of the `c` eigenvectors of `L` with
/// the smallest eigenvalues.
pub fn extract_labels(graph: &SimilarityGraph, c: usize, edge_eps: f64, seed: u64) -> Result<Extraction> {
    let a_sym = graph.symmetrized();
    let comps = components_of_symmetric(&a_sym, edge_eps);
    if comps.count == c {
        return Ok(Extraction {
            labels: comps.labels,
            component_count: comps.count,
            fallback: false,
        });
    }
    let n = graph.n();
    if c == 0 || c > n {
        return Err(Error::Invalid(format!("cannot split {n} points into {c} clusters")));
    }
    let bundle = build_laplacian(graph);
    let (_, vecs) = sym_eigen(&bundle.laplacian);
    let embedding = vecs.columns(0, c).into_owned();
    let labels = kmeans(&embedding, c, seed)?;
    Ok(Extraction {
        labels,
        component_count: comps.count,
        fallback: true,
    })
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 300;

/// Lloyd's algorithm on the rows of `points` with k-means++ seeding; the
/// best of several seeded restarts by inertia. Labels are renumbered in
/// order of first appearance.
pub fn kmeans(points: &DMatrix<f64>, c: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.nrows();
    let rows: Vec<DVector<f64>> = (0..n).map(|i| points.row(i).transpose()).collect();
    let mut distinct = 0;
    for i in 0..n {
        if (0..i).all(|j| (&rows[i] - &rows[j]).norm_squared() > 0.0) {
            distinct += 1;
            if distinct >= c {
                break;
            }
        }
    }
    if distinct < c {
        return Err(Error::OverConnected(format!(
            "graph over-connected: only {distinct} distinct spectral embeddings for c = {c}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (inertia, labels) = lloyd(&rows, c, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    Ok(renumber(&labels))
}

fn lloyd(rows: &[DVector<f64>], c: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = rows.len();
    let mut centers: Vec<DVector<f64>> = vec![rows[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = rows.iter().map(|r| (r - &centers[0]).norm_squared()).collect();
    while centers.len() < c {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            if nearest[chosen] == 0.0 {
                chosen = (0..n).rev().find(|&i| nearest[i] > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            nearest[i] = nearest[i].min((r - &centers[centers.len() - 1]).norm_squared());
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let (best, _) = centers
                .iter()
                .enumerate()
                .map(|(k, ctr)| (k, (r - ctr).norm_squared()))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (k, ctr) in centers.iter_mut().enumerate() {
            let members: Vec<&DVector<f64>> =
                rows.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(r, _)| r).collect();
            if !members.is_empty() {
                let mut sum = DVector::zeros(ctr.len());
                for m in &members {
                    sum += *m;
                }
                *ctr = sum / members.len() as f64;
            }
        }
    }
    let inertia = rows
        .iter()
        .zip(&labels)
        .map(|(r, &l)| (r - &centers[l]).norm_squared())
        .sum();
    (inertia, labels)
}

fn renumber(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Relative objective increase above which an MSCAM step is reported.
pub const MSCAM_INCREASE_WARN: f64 = 1e-3;

/// Alternate subspace solves and graph updates until the objective settles,
/// the graph has `c` components twice in a row, or `outer_max_iters`.
pub fn fit(data: &MultiViewDataset, config: &SolverConfig) -> Result<ClusteringResult> {
    let n = data.n();
    config.validate(n)?;
    let clock = Instant::now();
    let mut timings = PhaseTimings::default();
    let views = data.views();

    let reg_for = |lambda: f64| config.admm_config(lambda).z_regularizer();
    let build_systems = |reg: f64| -> Result<Vec<ViewSystem>> {
        views
            .par_iter()
            .enumerate()
            .map(|(v, x)| ViewSystem::new(v, x, reg))
            .collect()
    };
    let mut lambda = config.lambda;
    let mut reg = match config.variant {
        Variant::Mscam => reg_for(lambda),
        Variant::Mscan => config.alpha,
    };
    let mut systems = build_systems(reg)?;

    let init_table = feature_distances(views);
    let init_gamma = estimate_gamma(&init_table, config.k)?.row_weights(config.gamma_mode);
    let mut graph = solve_rows(&init_table, config.k, &init_gamma)?;
    timings.setup = clock.elapsed().as_secs_f64();

    let mut states: Vec<Option<AdmmState>> = vec![None; views.len()];
    let mut zs: Vec<DMatrix<f64>> = Vec::new();
    let mut ps: Vec<DMatrix<f64>> = Vec::new();
    let mut gammas: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut lambda_trace = Vec::new();
    let mut admm_iterations = Vec::new();
    let mut admm_converged = true;
    let mut warnings = Vec::new();
    let mut at_target = 0;
    let mut outer_iterations = 0;

    for outer in 1..=config.outer_max_iters {
        outer_iterations = outer;
        lambda_trace.push(lambda);
        let started = Instant::now();
        let laplacian = build_laplacian(&graph).laplacian;
        match config.variant {
            Variant::Mscam => {
                let admm_cfg = config.admm_config(lambda);
                let solved: Vec<admm::AdmmSolution> = systems
                    .par_iter()
                    .zip(states.par_iter())
                    .map(|(sys, prev)| {
                        let init = if config.warm_start { prev.clone() } else { None };
                        admm::solve_view(sys, &laplacian, config.c, &admm_cfg, init)
                    })
                    .collect::<Result<_>>()?;
                admm_iterations.push(solved.iter().map(|s| s.iterations).collect());
                for (v, s) in solved.iter().enumerate() {
                    if !s.converged {
                        admm_converged = false;
                        warnings.push(format!(
                            "outer iteration {outer}, view {v}: subspace solver stopped at the iteration limit"
                        ));
                    }
                }
                zs = solved.iter().map(|s| s.state.z.clone()).collect();
                ps = solved.iter().map(|s| s.state.p.clone()).collect();
                states = solved.into_iter().map(|s| Some(s.state)).collect();
            }
            Variant::Mscan => {
                let eig = sym_eigen(&laplacian);
                zs = systems
                    .par_iter()
                    .map(|sys| sylvester_z(sys, &eig, config.alpha, lambda))
                    .collect();
            }
        }
        timings.subspace += started.elapsed().as_secs_f64();

        let started = Instant::now();
        let table: DistanceTable = pairwise_distances(&zs, &ps, lambda, config.variant)?;
        let weights = match (&gammas, config.gamma_schedule) {
            (Some(w), GammaSchedule::Frozen) => w.clone(),
            _ => estimate_gamma(&table, config.k)?.row_weights(config.gamma_mode),
        };
        graph = solve_rows(&table, config.k, &weights)?;
        let value = objective(
            views,
            &zs,
            (config.variant == Variant::Mscam).then_some(ps.as_slice()),
            &graph,
            config.alpha,
            lambda,
            &weights,
            config.variant,
        )?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("objective is {value} at outer iteration {outer}")));
        }
        gammas = Some(weights);
        let count = components_of_symmetric(&graph.symmetrized(), config.edge_eps).count;
        timings.graph += started.elapsed().as_secs_f64();

        let previous = trace.last().copied();
        trace.push(value);
        if let Some(prev) = previous {
            let rise = (value - prev) / prev.abs().max(f64::MIN_POSITIVE);
            if config.variant == Variant::Mscam && rise > MSCAM_INCREASE_WARN {
                let msg = format!("outer iteration {outer}: objective rose by {rise:.3e} (relative)");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        log::debug!("outer {outer}: J = {value:.6e}, components = {count}, lambda = {lambda:e}");

        at_target = if count == config.c { at_target + 1 } else { 0 };
        if at_target >= 2 {
            break;
        }
        let next_lambda = if config.lambda_adapt {
            adapt_lambda(count, config.c, lambda)
        } else {
            lambda
        };
        if next_lambda == lambda {
            if let Some(prev) = previous {
                if (value - prev).abs() <= config.outer_tol * prev.abs() {
                    break;
                }
            }
        } else {
            lambda = next_lambda;
            gammas = None;
            states = vec![None; views.len()];
            if config.variant == Variant::Mscam && reg_for(lambda) != reg {
                reg = reg_for(lambda);
                systems = build_systems(reg)?;
            }
        }
    }

    let started = Instant::now();
    let extraction = extract_labels(&graph, config.c, config.edge_eps, config.seed)?;
    let bundle = build_laplacian(&graph);
    let laplacian_nullity = zero_eigenvalue_multiplicity(&bundle, default_eig_eps(n))?;
    let metrics = data
        .labels()
        .map(|truth| metrics::score(&extraction.labels, truth))
        .transpose()?;
    timings.labels = started.elapsed().as_secs_f64();
    if extraction.fallback {
        warnings.push(format!(
            "graph has {} components instead of {}; labels come from the spectral fallback",
            extraction.component_count, config.c
        ));
    }

    Ok(ClusteringResult {
        labels: extraction.labels,
        component_count: extraction.component_count,
        objective_trace: trace,
        graph,
        converged: !extraction.fallback,
        fallback: extraction.fallback,
        metrics,
        outer_iterations,
        lambda_trace,
        admm_iterations,
        admm_converged,
        laplacian_nullity,
        representations: zs,
        projections: (config.variant == Variant::Mscam).then_some(ps),
        gammas: gammas.unwrap_or_default(),
        warnings,
        timings,
    })
}
