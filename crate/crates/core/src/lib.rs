//! Multi-view subspace clustering with adaptive neighbours and a learned
//! Mahalanobis metric.
//!
//! Each view `X_v` (features × instances) gets a self-expressive
//! representation `Z_v` and, for the metric variant, a projection `P_v`. A
//! single consensus graph `A` is learned over all views so that its
//! connected components are the clusters.

pub mod admm;
pub mod data;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod neighbors;
pub mod solver;

pub use admm::{AdmmConfig, AdmmIterate, AdmmSolution, AdmmState, ViewSystem};
pub use data::{corrupt, generate_synthetic, MultiViewDataset, SyntheticSpec};
pub use error::{Error, Result};
pub use graph::{
    build_laplacian, connected_components, zero_eigenvalue_multiplicity, Components,
    LaplacianBundle, SimilarityGraph,
};
pub use io::{load_dataset, save_dataset, Manifest};
pub use metrics::{accuracy, nmi, NmiNormalization, Scores};
pub use neighbors::{
    estimate_gamma, pairwise_distances, row_update, update_similarity, DistanceTable,
    GammaEstimate, GammaMode, Variant,
};
pub use solver::{
    adapt_lambda, extract_labels, fit, mscan_update_z, objective, ClusteringResult, GammaSchedule,
    PhaseTimings, SolverConfig,
};
