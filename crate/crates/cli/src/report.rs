//! JSON run reports.

use std::path::Path;

use mvsc_core::{ClusteringResult, MultiViewDataset, PhaseTimings, Scores, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Shape and content hash of the input data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub n: usize,
    /// Feature dimension of each view.
    pub dims: Vec<usize>,
    pub labelled: bool,
    /// SHA-256 over the little-endian bytes of every view (column-major)
    /// followed by the labels.
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(data: &MultiViewDataset) -> Self {
        let mut h = Sha256::new();
        for x in data.views() {
            h.update((x.nrows() as u64).to_le_bytes());
            h.update((x.ncols() as u64).to_le_bytes());
            for v in x.iter() {
                h.update(v.to_le_bytes());
            }
        }
        if let Some(labels) = data.labels() {
            for &l in labels {
                h.update((l as u64).to_le_bytes());
            }
        }
        let sha256 = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            n: data.n(),
            dims: data.dims(),
            labelled: data.labels().is_some(),
            sha256,
        }
    }
}

/// What a run produced, without the dense matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub component_count: usize,
    pub laplacian_nullity: usize,
    pub converged: bool,
    pub fallback: bool,
    pub admm_converged: bool,
    pub outer_iterations: usize,
    pub objective_trace: Vec<f64>,
    pub lambda_trace: Vec<f64>,
    pub admm_iterations: Vec<Vec<usize>>,
    pub metrics: Option<Scores>,
    pub warnings: Vec<String>,
    pub labels: Vec<usize>,
}

impl From<&ClusteringResult> for ResultSummary {
    fn from(r: &ClusteringResult) -> Self {
        Self {
            component_count: r.component_count,
            laplacian_nullity: r.laplacian_nullity,
            converged: r.converged,
            fallback: r.fallback,
            admm_converged: r.admm_converged,
            outer_iterations: r.outer_iterations,
            objective_trace: r.objective_trace.clone(),
            lambda_trace: r.lambda_trace.clone(),
            admm_iterations: r.admm_iterations.clone(),
            metrics: r.metrics,
            warnings: r.warnings.clone(),
            labels: r.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: SolverConfig,
    pub dataset: Fingerprint,
    pub result: ResultSummary,
    /// Wall-clock seconds per phase. Only recorded on request so that
    /// reports of identical runs are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<PhaseTimings>,
}

impl RunReport {
    pub fn new(
        config: &SolverConfig,
        data: &MultiViewDataset,
        result: &ClusteringResult,
        with_timings: bool,
    ) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            dataset: Fingerprint::of(data),
            result: result.into(),
            timings: with_timings.then_some(result.timings),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("malformed report: {e}")))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }
}
