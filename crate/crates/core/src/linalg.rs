//! Small dense linear-algebra helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
///
/// The input is symmetrised as `(M + Mᵀ)/2` before factoring.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        fix_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Flip `v` so that its largest-magnitude entry is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Orthonormal polar factor of a tall `n × c` matrix.
///
/// Computes the thin SVD of `eᵀ = U Ω Vᵀ` (a `c × n` matrix), normalises the
/// sign of every column of `U` so its largest-magnitude entry is positive, and
/// returns `V Uᵀ`.
pub fn polar_factor(e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, c) = e.shape();
    if c > n {
        return Err(Error::Shape(format!("polar factor needs a tall matrix, got {n}x{c}")));
    }
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite entry in polar factor input".into()));
    }
    let svd = e.transpose().svd(true, true);
    let mut u = svd.u.ok_or_else(|| Error::Numeric("SVD did not return U".into()))?;
    let mut v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not return Vᵀ".into()))?;
    for k in 0..u.ncols() {
        let col = u.column(k);
        let (mut best, mut neg) = (0.0_f64, false);
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                neg = x < 0.0;
            }
        }
        if neg {
            u.column_mut(k).neg_mut();
            v_t.row_mut(k).neg_mut();
        }
    }
    Ok(v_t.transpose() * u.transpose())
}

/// `max |WᵀW − I|`.
pub fn orthonormality_defect(w: &DMatrix<f64>) -> f64 {
    let gram = w.transpose() * w;
    let c = gram.nrows();
    let mut worst = 0.0_f64;
    for i in 0..c {
        for j in 0..c {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Preconditioned conjugate gradients for one right-hand side.
///
/// `apply` computes the SPD operator, `precond` an SPD approximation of its
/// inverse. Stops when `‖r‖ ≤ rtol · ‖b‖`.
pub(crate) fn pcg(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    precond: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    x0: DVector<f64>,
    rtol: f64,
    max_iters: usize,
) -> DVector<f64> {
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return DVector::zeros(b.len());
    }
    let mut x = x0;
    let mut r = b - apply(&x);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iters {
        if r.norm() <= rtol * b_norm {
            break;
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        z = precond(&r);
        let rz_next = r.dot(&z);
        let beta = rz_next / rz;
        p = &z + &p * beta;
        rz = rz_next;
    }
    x
}
