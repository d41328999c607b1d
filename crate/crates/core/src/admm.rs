//! Per-view ADMM for the joint subspace-representation / projection problem
//!
//! ```text
//! min_{Z,P}  ‖X − XZ‖²_F + α‖Z‖²_F + λ tr(Pᵀ Z L Zᵀ P)   s.t.  Pᵀ Z Zᵀ P = I_c
//! ```
//!
//! split with `W = ZᵀP` (kept on the Stiefel manifold) and `Paux = P`, with
//! multipliers `Y1`, `Y2` and a penalty `μ` grown geometrically by `ρ`.
//!
//! The Mahalanobis matrix of the view is `P Pᵀ`; it is never formed.
//!
//! All linear systems are solved through a per-view [`ViewSystem`] holding
//! the eigendecomposition of `XᵀX`, so an iteration costs `O(n²c)` apart from
//! the Cholesky factorisation in the `W` update.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, all_finite, max_abs, orthonormality_defect, polar_factor, sym_eigen};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub alpha: f64,
    /// Weight of the graph term `tr(Wᵀ L W)`.
    pub lambda: f64,
    pub rho: f64,
    pub eps: f64,
    pub mu0: f64,
    pub max_iters: usize,
    /// Use `λI` instead of `αI` as the regulariser in the `Z` update, as the
    /// closed form is sometimes printed.
    pub literal_z_regularizer: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda: 1.0,
            rho: 1.1,
            eps: 1e-6,
            mu0: 1e-2,
            max_iters: 300,
            literal_z_regularizer: false,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!("alpha = {} must be >= 0", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return Err(Error::Invalid(format!("rho = {} must be > 1", self.rho)));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Invalid(format!("eps = {} must be > 0", self.eps)));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::Invalid(format!("mu0 = {} must be > 0", self.mu0)));
        }
        Ok(())
    }

    /// Regulariser used in the `Z` update.
    pub fn z_regularizer(&self) -> f64 {
        if self.literal_z_regularizer {
            self.lambda
        } else {
            self.alpha
        }
    }
}

/// Precomputed spectral data of one view: `XᵀX = V diag(g) Vᵀ`, plus the
/// ridge solution `(XᵀX + rI)⁻¹XᵀX` for the regulariser `r`.
#[derive(Debug, Clone)]
pub struct ViewSystem {
    view: usize,
    x: DMatrix<f64>,
    gram: DMatrix<f64>,
    evecs: DMatrix<f64>,
    evals: DVector<f64>,
    reg: f64,
    ridge: DMatrix<f64>,
}

impl ViewSystem {
    pub fn new(view: usize, x: &DMatrix<f64>, reg: f64) -> Result<Self> {
        let gram = x.transpose() * x;
        let (mut evals, evecs) = sym_eigen(&gram);
        evals.iter_mut().for_each(|g| *g = g.max(0.0));
        let top = evals.max().max(1.0);
        if evals.iter().any(|&g| g + reg <= 1e-14 * top) {
            return Err(Error::Singular {
                view,
                detail: "XᵀX + regulariser is not positive definite (alpha = 0 with rank-deficient data)"
                    .into(),
            });
        }
        let factors = evals.map(|g| g / (g + reg));
        let ridge = scaled_projection(&evecs, &factors);
        Ok(Self {
            view,
            x: x.clone(),
            gram,
            evecs,
            evals,
            reg,
            ridge,
        })
    }

    pub fn view(&self) -> usize {
        self.view
    }

    pub fn n(&self) -> usize {
        self.gram.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Eigenvalues of `XᵀX` (ascending, clamped at zero) and eigenvectors.
    pub fn spectrum(&self) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.evals, &self.evecs)
    }

    pub fn regularizer(&self) -> f64 {
        self.reg
    }

    /// `(XᵀX + rI)⁻¹ XᵀX`.
    pub fn ridge(&self) -> &DMatrix<f64> {
        &self.ridge
    }

    /// `V diag(h(g)) Vᵀ m`.
    fn apply_spectral(&self, m: &DMatrix<f64>, h: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut coeffs = self.evecs.transpose() * m;
        for (i, mut row) in coeffs.row_iter_mut().enumerate() {
            row *= h(self.evals[i]);
        }
        &self.evecs * coeffs
    }
}

/// `V diag(f) Vᵀ`.
fn scaled_projection(v: &DMatrix<f64>, f: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f[j];
    }
    scaled * v.transpose()
}

/// ADMM iterate for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    /// `n × n` subspace representation.
    pub z: DMatrix<f64>,
    /// `n × c` projection.
    pub p: DMatrix<f64>,
    /// `n × c` orthonormal auxiliary standing in for `ZᵀP`.
    pub w: DMatrix<f64>,
    /// `n × c` auxiliary copy of `P`.
    pub paux: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    pub mu: f64,
}

impl AdmmState {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn c(&self) -> usize {
        self.p.ncols()
    }

    /// `max |W − ZᵀP|`.
    pub fn coupling_residual(&self) -> f64 {
        max_abs(&(&self.w - self.z.transpose() * &self.p))
    }

    /// `max |Paux − P|`.
    pub fn copy_residual(&self) -> f64 {
        max_abs(&(&self.paux - &self.p))
    }

    fn check(&self) -> Result<()> {
        let (n, c) = (self.n(), self.c());
        let shapes = [
            (self.z.shape(), (n, n), "Z"),
            (self.p.shape(), (n, c), "P"),
            (self.w.shape(), (n, c), "W"),
            (self.paux.shape(), (n, c), "Paux"),
            (self.y1.shape(), (n, c), "Y1"),
            (self.y2.shape(), (n, c), "Y2"),
        ];
        for (got, want, name) in shapes {
            if got != want {
                return Err(Error::Shape(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Invalid(format!("penalty mu = {} must be > 0", self.mu)));
        }
        Ok(())
    }
}

/// Starting point near feasibility: ridge `Z₀`, `P₀` from the `c` leading
/// eigenvectors of `Z₀` rescaled so `Z₀ᵀP₀` is orthonormal, `W₀` the polar
/// factor of `Z₀ᵀP₀`, `Paux₀ = P₀`, zero multipliers and `μ = μ₀`.
pub fn initial_state(sys: &ViewSystem, c: usize, config: &AdmmConfig) -> Result<AdmmState> {
    let n = sys.n();
    if c == 0 || c > n {
        return Err(Error::Invalid(format!("projection width c = {c} must lie in 1..={n}")));
    }
    let z = sys.ridge.clone();
    let mut p = DMatrix::zeros(n, c);
    for k in 0..c {
        let idx = n - 1 - k;
        let f = sys.evals[idx] / (sys.evals[idx] + sys.reg);
        let scale = if f > 1e-12 { 1.0 / f } else { 1.0 };
        p.set_column(k, &(sys.evecs.column(idx) * scale));
    }
    let zp = z.transpose() * &p;
    let qr = zp.clone().qr();
    let r = qr.r();
    if (0..c).all(|k| r[(k, k)].abs() > 1e-12) {
        if let Some(r_inv) = r.try_inverse() {
            p = &p * r_inv;
        }
    }
    let w = polar_factor(&(z.transpose() * &p))?;
    Ok(AdmmState {
        paux: p.clone(),
        y1: DMatrix::zeros(n, c),
        y2: DMatrix::zeros(n, c),
        mu: config.mu0,
        z,
        p,
        w,
    })
}

/// `Z = (XᵀX + αI + (μ/2)PPᵀ)⁻¹ (XᵀX + P(μWᵀ + Y1ᵀ)/2)`.
///
/// Solved with the Woodbury identity on the cached factorisation of
/// `XᵀX + αI`; the `c × c` capacitance system is solved by Cholesky.
pub fn update_z(state: &AdmmState, sys: &ViewSystem) -> Result<DMatrix<f64>> {
    let mu = state.mu;
    let c = state.c();
    let p = &state.p;
    let reg = sys.reg;
    let k = &state.w.transpose() * mu + state.y1.transpose();
    let q = sys.apply_spectral(p, |g| 1.0 / (g + reg));
    let ptq = p.transpose() * &q;
    let cap = DMatrix::identity(c, c) * (2.0 / mu) + &ptq;
    let half_k = k * 0.5;
    let bic = &sys.ridge + &q * &half_k;
    let rhs = (&sys.ridge * p).transpose() + &ptq * &half_k;
    let cap_chol = cap.cholesky().ok_or_else(|| Error::Singular {
        view: sys.view,
        detail: "Z-update capacitance matrix is not positive definite".into(),
    })?;
    let z = bic - q * cap_chol.solve(&rhs);
    if !all_finite(&z) {
        return Err(Error::Numeric(format!("view {}: Z update produced non-finite values", sys.view)));
    }
    Ok(z)
}

/// `P = (ZZᵀ + I)⁻¹ (ZW + Paux + ZY1/μ + Y2/μ)`.
///
/// Solved column by column with conjugate gradients preconditioned by
/// `(Z_r Z_rᵀ + I)⁻¹`, `Z_r` being the ridge solution; `Z − Z_r` has rank at
/// most `c`, so the iteration terminates in at most `2c + 1` steps.
pub fn update_p(state: &AdmmState, sys: &ViewSystem) -> Result<DMatrix<f64>> {
    let mu = state.mu;
    let z = &state.z;
    let rhs = z * (&state.w + &state.y1 / mu) + &state.paux + &state.y2 / mu;
    let reg = sys.reg;
    let zt = z.transpose();
    let apply = |x: &DVector<f64>| z * (&zt * x) + x;
    let precond = |r: &DVector<f64>| {
        let m = DMatrix::from_column_slice(r.len(), 1, r.as_slice());
        let out = sys.apply_spectral(&m, |g| {
            let f = g / (g + reg);
            1.0 / (f * f + 1.0)
        });
        DVector::from_column_slice(out.as_slice())
    };
    let c = state.c();
    let mut p = DMatrix::zeros(state.n(), c);
    for j in 0..c {
        let b = rhs.column(j).clone_owned();
        let x0 = state.p.column(j).clone_owned();
        let x = linalg::pcg(apply, precond, &b, x0, 1e-14, 4 * c + 40);
        p.set_column(j, &x);
    }
    if !all_finite(&p) {
        return Err(Error::Numeric(format!("view {}: P update produced non-finite values", sys.view)));
    }
    Ok(p)
}

/// `Paux = P − Y2/μ`.
pub fn update_paux(state: &AdmmState) -> DMatrix<f64> {
    &state.p - &state.y2 / state.mu
}

/// Closed-form `W` step.
///
/// With `η = μ/(2λ)` and `E = ZᵀP − Y1/μ`: factor `L + ηI = RRᵀ` (lower
/// Cholesky), take the SVD `UΩVᵀ` of the `c × n` matrix `Eᵀ R⁻ᵀ R` and return
/// `W = V I_{n×c} Uᵀ`. For `λ = 0` this is the polar factor of `E`.
pub fn update_w(state: &AdmmState, laplacian: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let e = state.z.transpose() * &state.p - &state.y1 / state.mu;
    w_step(&e, laplacian, state.mu, lambda)
}

pub(crate) fn w_step(
    e: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    mu: f64,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let n = e.nrows();
    if laplacian.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "Laplacian is {:?}, expected {n}x{n}",
            laplacian.shape()
        )));
    }
    if lambda == 0.0 {
        return polar_factor(e);
    }
    let eta = mu / (2.0 * lambda);
    let mut shifted = laplacian.clone();
    for i in 0..n {
        shifted[(i, i)] += eta;
    }
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::Numeric("L + ηI is not positive definite".into()))?;
    let r = chol.l();
    let t = r
        .solve_lower_triangular(e)
        .ok_or_else(|| Error::Numeric("triangular solve in W update failed".into()))?;
    let b_t = r.transpose() * t;
    polar_factor(&b_t)
}

/// Objective of the `W` subproblem, `tr(WᵀLW) + η‖W − E‖²`.
pub fn w_subproblem_objective(
    w: &DMatrix<f64>,
    e: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    eta: f64,
) -> f64 {
    (w.transpose() * laplacian * w).trace() + eta * (w - e).norm_squared()
}

/// `Y1 += μ(W − ZᵀP)`, `Y2 += μ(Paux − P)`, `μ ← ρμ`.
pub fn update_multipliers(state: &AdmmState, rho: f64) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let mu = state.mu;
    let y1 = &state.y1 + (&state.w - state.z.transpose() * &state.p) * mu;
    let y2 = &state.y2 + (&state.paux - &state.p) * mu;
    (y1, y2, rho * mu)
}

/// One line of the ADMM trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmIterate {
    pub iteration: usize,
    /// `max |W − ZᵀP|` after the iteration.
    pub coupling_residual: f64,
    /// `max |Paux − P|` after the iteration.
    pub copy_residual: f64,
    /// Penalty used during the iteration.
    pub mu: f64,
    /// `max |WᵀW − I|` of the new `W`.
    pub orthonormality: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmSolution {
    pub state: AdmmState,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<AdmmIterate>,
}

impl AdmmSolution {
    pub fn write_trace_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for it in &self.trace {
            serde_json::to_writer(&mut out, it)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Run the five updates in the order `Z, P, Paux, W, multipliers` until
/// `max(‖W − ZᵀP‖_∞, ‖Paux − P‖_∞) < ε` or `max_iters`.
///
/// Starts from `init` when given (used as is, including `μ` and the
/// multipliers), otherwise from [`initial_state`]. Without convergence the
/// iterate with the smallest residual is returned and `converged` is false.
pub fn solve_view(
    sys: &ViewSystem,
    laplacian: &DMatrix<f64>,
    c: usize,
    config: &AdmmConfig,
    init: Option<AdmmState>,
) -> Result<AdmmSolution> {
    config.validate()?;
    let n = sys.n();
    if laplacian.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "Laplacian is {:?}, view {} has n = {n}",
            laplacian.shape(),
            sys.view
        )));
    }
    let mut state = match init {
        Some(s) => {
            s.check()?;
            if s.n() != n || s.c() != c {
                return Err(Error::Shape(format!(
                    "warm start is {}x{}, expected {n}x{c}",
                    s.n(),
                    s.c()
                )));
            }
            s
        }
        None => initial_state(sys, c, config)?,
    };

    let mut trace = Vec::new();
    let mut best: Option<(f64, AdmmState)> = None;
    for iteration in 1..=config.max_iters {
        let mu = state.mu;
        state.z = update_z(&state, sys)?;
        state.p = update_p(&state, sys)?;
        state.paux = update_paux(&state);
        state.w = update_w(&state, laplacian, config.lambda)?;
        let coupling = state.coupling_residual();
        let copy = state.copy_residual();
        trace.push(AdmmIterate {
            iteration,
            coupling_residual: coupling,
            copy_residual: copy,
            mu,
            orthonormality: orthonormality_defect(&state.w),
        });
        let (y1, y2, next_mu) = update_multipliers(&state, config.rho);
        state.y1 = y1;
        state.y2 = y2;
        state.mu = next_mu;
        if !all_finite(&state.y1) || !all_finite(&state.y2) {
            return Err(Error::Numeric(format!("view {}: multipliers diverged", sys.view)));
        }

        let residual = coupling.max(copy);
        if residual < config.eps {
            return Ok(AdmmSolution {
                state,
                iterations: iteration,
                converged: true,
                trace,
            });
        }
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, state.clone()));
        }
    }
    log::warn!(
        "view {}: ADMM did not reach eps = {:e} within {} iterations",
        sys.view,
        config.eps,
        config.max_iters
    );
    let state = best.map(|(_, s)| s).unwrap_or(state);
    Ok(AdmmSolution {
        state,
        iterations: config.max_iters,
        converged: false,
        trace,
    })
}
