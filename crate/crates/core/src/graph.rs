//! Consensus similarity graph, its Laplacian, and component counting.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

/// Row-sum tolerance for a valid similarity matrix.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Default edge threshold: an edge `(i, j)` exists iff `A_sym[i, j] > DEFAULT_EDGE_EPS`.
pub const DEFAULT_EDGE_EPS: f64 = 1e-12;

/// Row-stochastic, nonnegative `n × n` matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    a: DMatrix<f64>,
}

impl SimilarityGraph {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let (n, m) = a.shape();
        if n != m || n == 0 {
            return Err(Error::Shape(format!("similarity matrix must be square, got {n}x{m}")));
        }
        for i in 0..n {
            if a[(i, i)] != 0.0 {
                return Err(Error::Invalid(format!("self-similarity a[{i},{i}] must be 0")));
            }
            let mut sum = 0.0;
            for j in 0..n {
                let x = a[(i, j)];
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::Invalid(format!("a[{i},{j}] = {x} is not a probability")));
                }
                sum += x;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { a })
    }

    pub(crate) fn from_matrix_unchecked(a: DMatrix<f64>) -> Self {
        Self { a }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn symmetrized(&self) -> DMatrix<f64> {
        symmetrize(&self.a)
    }

    /// `‖A‖²_F` restricted to row `i`.
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.a.row(i).norm_squared()
    }

    pub fn nonzeros_in_row(&self, i: usize) -> usize {
        self.a.row(i).iter().filter(|&&x| x > 0.0).count()
    }
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// `A_sym = (A + Aᵀ)/2`, its degree vector and `L = D − A_sym`.
#[derive(Debug, Clone)]
pub struct LaplacianBundle {
    pub a_sym: DMatrix<f64>,
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
}

pub fn build_laplacian(graph: &SimilarityGraph) -> LaplacianBundle {
    laplacian_of_symmetric(graph.symmetrized())
}

pub(crate) fn laplacian_of_symmetric(a_sym: DMatrix<f64>) -> LaplacianBundle {
    let n = a_sym.nrows();
    let degree = DVector::from_fn(n, |i, _| a_sym.row(i).sum());
    let mut laplacian = -a_sym.clone();
    for i in 0..n {
        laplacian[(i, i)] += degree[i];
    }
    LaplacianBundle {
        a_sym,
        degree,
        laplacian,
    }
}

/// Component count and a component id per node, ids assigned in order of
/// the smallest node index in each component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub count: usize,
    pub labels: Vec<usize>,
}

pub fn connected_components(graph: &SimilarityGraph, edge_eps: f64) -> Components {
    components_of_symmetric(&graph.symmetrized(), edge_eps)
}

pub(crate) fn components_of_symmetric(a_sym: &DMatrix<f64>, edge_eps: f64) -> Components {
    let n = a_sym.nrows();
    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if labels[j] == usize::MAX && a_sym[(i, j)] > edge_eps {
                    labels[j] = count;
                    queue.push_back(j);
                }
            }
        }
        count += 1;
    }
    Components { count, labels }
}

pub fn default_eig_eps(n: usize) -> f64 {
    1e-8 * n as f64
}

/// Number of Laplacian eigenvalues below `eig_eps`.
pub fn zero_eigenvalue_multiplicity(bundle: &LaplacianBundle, eig_eps: f64) -> Result<usize> {
    if eig_eps.is_nan() || eig_eps <= 0.0 {
        return Err(Error::Invalid(format!("eig_eps must be positive, got {eig_eps}")));
    }
    if bundle.laplacian.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("Laplacian has non-finite entries".into()));
    }
    let (values, _) = sym_eigen(&bundle.laplacian);
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("eigendecomposition produced non-finite values".into()));
    }
    Ok(values.iter().filter(|&&x| x < eig_eps).count())
}

/// Dump `A` as a dense CSV matrix.
pub fn write_graph_csv(graph: &SimilarityGraph, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_matrix_csv(path, graph.matrix())
}

/// Write the undirected edges of `A_sym` as `i,j,weight` lines with `i < j`.
pub fn write_edge_list(graph: &SimilarityGraph, path: impl AsRef<Path>, edge_eps: f64) -> Result<()> {
    let path = path.as_ref();
    let a_sym = graph.symmetrized();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        for i in 0..a_sym.nrows() {
            for j in (i + 1)..a_sym.ncols() {
                let w = a_sym[(i, j)];
                if w > edge_eps {
                    writeln!(out, "{i},{j},{w:?}")?;
                }
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
