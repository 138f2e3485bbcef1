//! Time evolution: exact propagators, von Neumann evolution of density
//! matrices, Trotter time slicing, adiabatic propagation and qp symbols.

mod adiabatic;
mod symbols;

pub use adiabatic::{
    adiabatic_evolve, propagate, AdiabaticReport, PathFamily, StepControl, GAP_THRESHOLD,
};
pub use symbols::{
    hermite_functions, qp_star_product, qp_star_product_general, qp_symbol, Symbol, SymbolGrid, SymbolKernel,
    BOUNDARY_LIMIT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, FockSpec};
use crate::linalg::{self, real, CMatrix, I};

/// Propagator `U(t) = exp(−i H t / ħ)` for hermitian `H`.
pub fn expm(h: &CMatrix, t: f64, hbar: f64) -> Result<CMatrix> {
    linalg::propagator(h, t, hbar)
}

/// `K(t) = U K U†`.
pub fn evolve_density(k: &DensityMatrix, h: &CMatrix, t: f64, hbar: f64) -> Result<DensityMatrix> {
    if k.dim() != h.nrows() {
        return Err(Error::Dimension("state and Hamiltonian differ in size".into()));
    }
    let u = expm(h, t, hbar)?;
    let m = &u * k.matrix() * u.adjoint();
    // re-hermitize rounding only
    DensityMatrix::new((&m + m.adjoint()) * real(0.5))
}

/// Heisenberg picture `A(t) = U† A U`.
pub fn heisenberg(a: &CMatrix, h: &CMatrix, t: f64, hbar: f64) -> Result<CMatrix> {
    let u = expm(h, t, hbar)?;
    Ok(u.adjoint() * a * u)
}

/// `I_N(t) = (Π_j exp((t/N) H_j))^N` with factor 0 leftmost.
pub fn trotter_slices(factors: &[CMatrix], t: f64, n: usize) -> Result<CMatrix> {
    if factors.is_empty() {
        return Err(Error::Invalid("at least one factor required".into()));
    }
    if n == 0 {
        return Err(Error::Invalid("slice count must be at least 1".into()));
    }
    let d = factors[0].nrows();
    let mut step = linalg::identity(d);
    for f in factors {
        if f.nrows() != d || f.ncols() != d {
            return Err(Error::Dimension("Trotter factors differ in size".into()));
        }
        step *= linalg::expm(&(f * real(t / n as f64)))?;
    }
    Ok(matrix_power(&step, n))
}

fn matrix_power(m: &CMatrix, mut n: usize) -> CMatrix {
    let mut base = m.clone();
    let mut acc = linalg::identity(m.nrows());
    while n > 0 {
        if n & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        n >>= 1;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrotterRow {
    pub n: usize,
    /// Spectral norm `‖I_N − exp(t Σ H_j)‖`.
    pub error: f64,
    /// Largest singular value of `I_N`.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrotterReport {
    pub rows: Vec<TrotterRow>,
    /// Least-squares slope of `−log err` against `log N`.
    pub order: f64,
}

pub fn trotter_convergence(factors: &[CMatrix], t: f64, ns: &[usize]) -> Result<TrotterReport> {
    let total = factors
        .iter()
        .skip(1)
        .fold(factors.first().cloned().ok_or_else(|| Error::Invalid("no factors".into()))?, |acc, f| acc + f);
    let exact = linalg::expm(&(total * real(t)))?;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let approx = trotter_slices(factors, t, n)?;
        rows.push(TrotterRow {
            n,
            error: linalg::spectral_norm(&(&approx - &exact)),
            norm: linalg::spectral_norm(&approx),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let order = if rows.len() >= 2 { -linalg::loglog_slope(&xs, &ys) } else { f64::NAN };
    Ok(TrotterReport { rows, order })
}

/// Kinetic and potential generators `−i p²/2`, `−i q²/2` of the truncated
/// oscillator, with `q = (a + a†)/√2`, `p = (a − a†)/(i√2)`.
pub fn oscillator_split(cutoff: usize, hbar: f64) -> Result<[CMatrix; 2]> {
    let spec = FockSpec::bose_with_hbar(&[cutoff], hbar)?;
    let (q, p) = quadratures(&spec, 0)?;
    Ok([&p * &p * (-I * 0.5 / hbar), &q * &q * (-I * 0.5 / hbar)])
}

/// Truncated position and momentum for mode `k`.
pub fn quadratures(spec: &FockSpec, k: usize) -> Result<(CMatrix, CMatrix)> {
    let c = fock::creation_matrix(spec, k)?;
    let a = c.adjoint();
    let r = 0.5f64.sqrt();
    Ok(((&a + &c) * real(r), (&a - &c) * (-I * r)))
}

/// Named Hamiltonian builders used by the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    /// `ω (a†a/ħ + 1/2)` truncated at `cutoff`.
    Oscillator { cutoff: usize, omega: f64 },
    Diagonal { eps: Vec<f64> },
    /// `(ε/2) σ_z + (Δ/2) σ_x`.
    TwoLevel { eps: f64, delta: f64 },
    Custom { matrix: linalg::MatrixJson },
}

impl HamiltonianSpec {
    pub fn build(&self) -> Result<CMatrix> {
        let h = match self {
            HamiltonianSpec::Oscillator { cutoff, omega } => {
                let d = cutoff + 1;
                CMatrix::from_fn(d, d, |i, j| if i == j { real(omega * (i as f64 + 0.5)) } else { real(0.0) })
            }
            HamiltonianSpec::Diagonal { eps } => {
                let d = eps.len();
                CMatrix::from_fn(d, d, |i, j| if i == j { real(eps[i]) } else { real(0.0) })
            }
            HamiltonianSpec::TwoLevel { eps, delta } => CMatrix::from_row_slice(
                2,
                2,
                &[real(eps / 2.0), real(delta / 2.0), real(delta / 2.0), real(-eps / 2.0)],
            ),
            HamiltonianSpec::Custom { matrix } => CMatrix::try_from(matrix)?,
        };
        linalg::ensure_finite(&h)?;
        if h.is_empty() {
            return Err(Error::Dimension("empty Hamiltonian".into()));
        }
        if !linalg::is_hermitian(&h, 1e-12) {
            return Err(Error::NotHermitian {
                defect: linalg::hermiticity_defect(&h),
            });
        }
        Ok(h)
    }
}
