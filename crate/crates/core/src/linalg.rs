//! Dense complex linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.trace()
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    frobenius(&(a - a.adjoint()))
}

pub fn is_hermitian(a: &CMatrix, rel_tol: f64) -> bool {
    a.is_square() && hermiticity_defect(a) <= rel_tol * frobenius(a).max(1.0)
}

pub fn ensure_finite(a: &CMatrix) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn ensure_square(a: &CMatrix, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Eigendecomposition of a hermitian matrix with eigenvalues in ascending
/// order; column `k` of the returned matrix is the `k`-th eigenvector.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let sym = (a + a.adjoint()) * real(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 2 {
        return eigvals_2x2(a).to_vec();
    }
    eigh(a).0
}

/// Closed-form eigenvalues of a 2x2 hermitian matrix, ascending.
pub fn eigvals_2x2(a: &CMatrix) -> [f64; 2] {
    let p = a[(0, 0)].re;
    let q = a[(1, 1)].re;
    let off = (a[(0, 1)] + a[(1, 0)].conj()) * 0.5;
    let mean = 0.5 * (p + q);
    let half = 0.5 * (p - q);
    let r = (half * half + off.norm_sqr()).sqrt();
    [mean - r, mean + r]
}

/// `f(A)` for hermitian `A` through its spectral decomposition.
pub fn hermitian_function(a: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let (vals, vecs) = eigh(a);
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(vals.len(), vals.iter().map(|&x| f(x))));
    &vecs * diag * vecs.adjoint()
}

/// Matrix exponential of an arbitrary square matrix (Padé with scaling and squaring).
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    ensure_square(a, "exponent")?;
    ensure_finite(a)?;
    Ok(a.clone().exp())
}

/// Unitary propagator `exp(-i H t / hbar)` for hermitian `H`.
pub fn propagator(h: &CMatrix, t: f64, hbar: f64) -> Result<CMatrix> {
    ensure_square(h, "Hamiltonian")?;
    ensure_finite(h)?;
    if !is_hermitian(h, 1e-12) {
        return Err(Error::NotHermitian {
            defect: hermiticity_defect(h),
        });
    }
    Ok(hermitian_function(h, |e| (-I * e * t / hbar).exp()))
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    max_abs(&(u.adjoint() * u - identity(u.nrows())))
}

/// Column-stacking vectorisation: `vec(X)[i + n j] = X[i, j]`.
pub fn vectorize(x: &CMatrix) -> CVector {
    CVector::from_iterator(x.len(), x.iter().copied())
}

pub fn unvectorize(v: &CVector, n: usize) -> CMatrix {
    CMatrix::from_iterator(n, n, v.iter().copied())
}

/// Matrix of `X -> [H, X]` acting on column-stacked `vec(X)`.
pub fn commutator_superoperator(h: &CMatrix) -> CMatrix {
    let n = h.nrows();
    let id = identity(n);
    kron(&id, h) - kron(&h.transpose(), &id)
}

/// Orthonormal basis (columns) of the numerical null space, with the
/// rank threshold `rel_tol * sigma_max`.
pub fn null_space(a: &CMatrix, rel_tol: f64) -> CMatrix {
    let n = a.ncols();
    // SVD of A^H A keeps the full right singular basis even when A is wide.
    let gram = a.adjoint() * a;
    let (vals, vecs) = eigh(&gram);
    let top = vals.iter().copied().fold(0.0, f64::max).sqrt();
    let cols: Vec<usize> = (0..n)
        .filter(|&k| vals[k].max(0.0).sqrt() <= rel_tol * top.max(f64::MIN_POSITIVE))
        .collect();
    let mut out = CMatrix::zeros(n, cols.len());
    for (dst, &src) in cols.iter().enumerate() {
        out.set_column(dst, &vecs.column(src));
    }
    out
}

/// Row-major JSON form `{rows, cols, data: [[re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<&MatrixJson> for CMatrix {
    type Error = Error;

    fn try_from(j: &MatrixJson) -> Result<CMatrix> {
        if j.data.len() != j.rows * j.cols {
            return Err(Error::Dimension(format!(
                "matrix JSON has {} entries for {}x{}",
                j.data.len(),
                j.rows,
                j.cols
            )));
        }
        Ok(CMatrix::from_row_iterator(
            j.rows,
            j.cols,
            j.data.iter().map(|[re, im]| Complex64::new(*re, *im)),
        ))
    }
}

pub fn matrix_to_json(m: &CMatrix) -> String {
    serde_json::to_string(&MatrixJson::from(m)).expect("matrix serialisation")
}

pub fn matrix_from_json(s: &str) -> Result<CMatrix> {
    let j: MatrixJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
    CMatrix::try_from(&j)
}

/// Determinant through nalgebra's LU.
pub fn det(a: &CMatrix) -> Complex64 {
    a.clone().determinant()
}

/// Least-squares slope of `log(err)` against `log(n)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
