//! Truncated bosonic and exact fermionic Fock spaces.
//!
//! Basis vectors are occupation multi-indices in colexicographic order with
//! mode 0 running fastest, so a fermionic basis index is the occupation
//! bitmask itself.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, real, CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Bose,
    Fermi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawSpec")]
pub struct FockSpec {
    statistics: Statistics,
    modes: usize,
    cutoffs: Vec<usize>,
    hbar: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    statistics: Statistics,
    modes: usize,
    #[serde(default)]
    cutoffs: Option<Vec<usize>>,
    #[serde(default = "default_hbar")]
    hbar: f64,
}

fn default_hbar() -> f64 {
    1.0
}

impl TryFrom<RawSpec> for FockSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        match r.statistics {
            Statistics::Bose => {
                let cutoffs = r
                    .cutoffs
                    .ok_or_else(|| Error::InvalidSpec("bosonic spec needs cutoffs".into()))?;
                if cutoffs.len() != r.modes {
                    return Err(Error::InvalidSpec(format!(
                        "{} cutoffs for {} modes",
                        cutoffs.len(),
                        r.modes
                    )));
                }
                FockSpec::bose_with_hbar(&cutoffs, r.hbar)
            }
            Statistics::Fermi => {
                if let Some(c) = &r.cutoffs {
                    if c.len() != r.modes || c.iter().any(|&x| x != 1) {
                        return Err(Error::InvalidSpec("fermionic cutoffs must all be 1".into()));
                    }
                }
                let mut s = FockSpec::fermi(r.modes)?;
                if !(r.hbar > 0.0 && r.hbar.is_finite()) {
                    return Err(Error::InvalidSpec("hbar must be positive".into()));
                }
                s.hbar = r.hbar;
                Ok(s)
            }
        }
    }
}

/// Largest Hilbert-space dimension accepted for dense matrices.
pub const MAX_DIM: usize = 1 << 14;

impl FockSpec {
    pub fn bose(cutoffs: &[usize]) -> Result<Self> {
        Self::bose_with_hbar(cutoffs, 1.0)
    }

    pub fn bose_with_hbar(cutoffs: &[usize], hbar: f64) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::InvalidSpec("at least one mode required".into()));
        }
        if cutoffs.iter().any(|&c| c < 1) {
            return Err(Error::InvalidSpec("every cutoff must be at least 1".into()));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidSpec("hbar must be positive".into()));
        }
        let dim = cutoffs
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c + 1))
            .filter(|&d| d <= MAX_DIM)
            .ok_or_else(|| Error::InvalidSpec(format!("dimension exceeds {MAX_DIM}")))?;
        let _ = dim;
        Ok(FockSpec {
            statistics: Statistics::Bose,
            modes: cutoffs.len(),
            cutoffs: cutoffs.to_vec(),
            hbar,
        })
    }

    pub fn fermi(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidSpec("at least one mode required".into()));
        }
        if modes > 14 {
            return Err(Error::InvalidSpec(format!("dimension exceeds {MAX_DIM}")));
        }
        Ok(FockSpec {
            statistics: Statistics::Fermi,
            modes,
            cutoffs: vec![1; modes],
            hbar: 1.0,
        })
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidSpec("hbar must be positive".into()));
        }
        self.hbar = hbar;
        Ok(self)
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn is_bose(&self) -> bool {
        self.statistics == Statistics::Bose
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.iter().map(|c| c + 1).product()
    }

    pub fn check_mode(&self, k: usize) -> Result<()> {
        if k < self.modes {
            Ok(())
        } else {
            Err(Error::ModeOutOfRange {
                index: k,
                modes: self.modes,
            })
        }
    }

    pub fn index(&self, occ: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (n, c) in occ.iter().zip(&self.cutoffs) {
            idx += n * stride;
            stride *= c + 1;
        }
        idx
    }

    pub fn occupations(&self, mut idx: usize) -> Vec<usize> {
        self.cutoffs
            .iter()
            .map(|c| {
                let n = idx % (c + 1);
                idx /= c + 1;
                n
            })
            .collect()
    }

    /// True when every occupation is at most `cutoff - depth`.
    pub fn is_safe(&self, occ: &[usize], depth: usize) -> bool {
        occ.iter().zip(&self.cutoffs).all(|(n, c)| n + depth <= *c)
    }

    /// Basis indices of the subspace where all occupations are at most `cutoff - depth`.
    pub fn safe_indices(&self, depth: usize) -> Vec<usize> {
        if !self.is_bose() {
            return (0..self.dim()).collect();
        }
        (0..self.dim())
            .filter(|&i| self.is_safe(&self.occupations(i), depth))
            .collect()
    }

    pub fn same_space(&self, other: &FockSpec) -> bool {
        self.statistics == other.statistics && self.cutoffs == other.cutoffs && self.hbar == other.hbar
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    spec: FockSpec,
    amplitudes: CVector,
}

impl FockVector {
    pub fn new(spec: FockSpec, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != spec.dim() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for dimension {}",
                amplitudes.len(),
                spec.dim()
            )));
        }
        Ok(FockVector { spec, amplitudes })
    }

    pub fn vacuum(spec: &FockSpec) -> Self {
        Self::basis(spec, &vec![0; spec.modes()]).expect("vacuum is in range")
    }

    pub fn basis(spec: &FockSpec, occ: &[usize]) -> Result<Self> {
        if occ.len() != spec.modes() || occ.iter().zip(spec.cutoffs()).any(|(n, c)| n > c) {
            return Err(Error::InvalidSpec(format!("occupation {occ:?} outside the space")));
        }
        let mut v = CVector::zeros(spec.dim());
        v[spec.index(occ)] = real(1.0);
        Ok(FockVector {
            spec: spec.clone(),
            amplitudes: v,
        })
    }

    pub fn spec(&self) -> &FockSpec {
        &self.spec
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Inner product, linear in the first argument.
    pub fn inner(&self, other: &FockVector) -> Complex64 {
        other.amplitudes.dotc(&self.amplitudes)
    }

    pub fn normalized(&self) -> Result<FockVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(FockVector {
            spec: self.spec.clone(),
            amplitudes: &self.amplitudes / real(n),
        })
    }

    pub fn apply(&self, op: &CMatrix) -> FockVector {
        FockVector {
            spec: self.spec.clone(),
            amplitudes: op * &self.amplitudes,
        }
    }
}

/// Positive, unit-trace hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

pub const DENSITY_TOL: f64 = 1e-12;

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        linalg::ensure_square(&matrix, "density matrix")?;
        linalg::ensure_finite(&matrix)?;
        let scale = linalg::frobenius(&matrix);
        let herm = linalg::hermiticity_defect(&matrix);
        if herm > DENSITY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidDensity(format!("hermiticity defect {herm:e}")));
        }
        let tr = matrix.trace();
        if (tr - real(1.0)).norm() > DENSITY_TOL {
            return Err(Error::InvalidDensity(format!("trace {}", tr.re)));
        }
        let low = linalg::eigvalsh(&matrix)[0];
        if low < -DENSITY_TOL {
            return Err(Error::InvalidDensity(format!("eigenvalue {low:e}")));
        }
        Ok(DensityMatrix { matrix })
    }

    /// Normalizes a positive semidefinite matrix by its trace.
    pub fn from_unnormalized(matrix: CMatrix) -> Result<Self> {
        let tr = matrix.trace();
        if !(tr.re > 0.0) {
            return Err(Error::InvalidDensity("non-positive trace".into()));
        }
        let m = (&matrix + matrix.adjoint()) * real(0.5 / tr.re);
        Self::new(m)
    }

    pub fn pure(v: &CVector) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        let u = v / real(n);
        Self::new(&u * u.adjoint())
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix {
            matrix: linalg::identity(d) * real(1.0 / d as f64),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Tr(K A)`.
    pub fn expectation(&self, a: &CMatrix) -> Complex64 {
        (&self.matrix * a).trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        linalg::MatrixJson::from(&self.matrix).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = linalg::MatrixJson::deserialize(d)?;
        let m = CMatrix::try_from(&j).map_err(serde::de::Error::custom)?;
        DensityMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Matrix of the creation operator for mode `k` (0-based).
pub fn creation_matrix(spec: &FockSpec, k: usize) -> Result<CMatrix> {
    spec.check_mode(k)?;
    let d = spec.dim();
    let mut m = CMatrix::zeros(d, d);
    for col in 0..d {
        let mut occ = spec.occupations(col);
        match spec.statistics() {
            Statistics::Bose => {
                if occ[k] < spec.cutoffs()[k] {
                    let amp = (spec.hbar() * (occ[k] + 1) as f64).sqrt();
                    occ[k] += 1;
                    m[(spec.index(&occ), col)] = real(amp);
                }
            }
            Statistics::Fermi => {
                if occ[k] == 0 {
                    let parity: usize = occ[..k].iter().sum();
                    occ[k] = 1;
                    m[(spec.index(&occ), col)] = real(if parity.is_multiple_of(2) { 1.0 } else { -1.0 });
                }
            }
        }
    }
    Ok(m)
}

pub fn annihilation_matrix(spec: &FockSpec, k: usize) -> Result<CMatrix> {
    Ok(creation_matrix(spec, k)?.adjoint())
}

/// `a†_k a_k / ħ`, with integer spectrum.
pub fn number_operator(spec: &FockSpec, k: usize) -> Result<CMatrix> {
    spec.check_mode(k)?;
    let diag = (0..spec.dim()).map(|i| real(spec.occupations(i)[k] as f64));
    Ok(CMatrix::from_diagonal(&CVector::from_iterator(spec.dim(), diag)))
}

pub fn total_number_operator(spec: &FockSpec) -> CMatrix {
    let diag = (0..spec.dim()).map(|i| real(spec.occupations(i).iter().sum::<usize>() as f64));
    CMatrix::from_diagonal(&CVector::from_iterator(spec.dim(), diag))
}

/// `Σ ε_k N_k`: diagonal with eigenvalue `Σ n_k ε_k` on `|n⟩`.
pub fn quadratic_hamiltonian(spec: &FockSpec, eps: &[f64]) -> Result<CMatrix> {
    if eps.len() != spec.modes() {
        return Err(Error::Dimension(format!(
            "{} energies for {} modes",
            eps.len(),
            spec.modes()
        )));
    }
    let diag = (0..spec.dim()).map(|i| {
        let occ = spec.occupations(i);
        real(occ.iter().zip(eps).map(|(&n, e)| n as f64 * e).sum())
    });
    Ok(CMatrix::from_diagonal(&CVector::from_iterator(spec.dim(), diag)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CcrReport {
    /// Defect on the subspace with every occupation below its cutoff.
    pub safe: f64,
    /// Defect on the whole truncated space (bosons: `ħ(c+1)` at the top level).
    pub unrestricted: f64,
}

/// Commutation-relation defects. Bosons are checked against
/// `[a_k, a†_l] = ħ δ_kl`, fermions against `{a_k, a†_l} = δ_kl` and
/// `{a_k, a_l} = 0`.
pub fn ccr_defect(spec: &FockSpec) -> CcrReport {
    let m = spec.modes();
    let d = spec.dim();
    let ops: Vec<(CMatrix, CMatrix)> = (0..m)
        .map(|k| {
            let c = creation_matrix(spec, k).expect("mode in range");
            let a = c.adjoint();
            (a, c)
        })
        .collect();
    let safe_cols = spec.safe_indices(1);
    let mut safe = 0.0f64;
    let mut full = 0.0f64;
    let mut record = |defect: CMatrix| {
        full = full.max(linalg::spectral_norm(&defect));
        let mut restricted = CMatrix::zeros(d, safe_cols.len());
        for (j, &col) in safe_cols.iter().enumerate() {
            restricted.set_column(j, &defect.column(col));
        }
        safe = safe.max(linalg::spectral_norm(&restricted));
    };
    for k in 0..m {
        for l in 0..m {
            let (ak, _) = &ops[k];
            let (al, cl) = &ops[l];
            let delta = if k == l { 1.0 } else { 0.0 };
            match spec.statistics() {
                Statistics::Bose => {
                    record(linalg::commutator(ak, cl) - linalg::identity(d) * real(spec.hbar() * delta));
                }
                Statistics::Fermi => {
                    record(linalg::anticommutator(ak, cl) - linalg::identity(d) * real(delta));
                    record(linalg::anticommutator(ak, al));
                }
            }
        }
    }
    CcrReport {
        safe,
        unrestricted: full,
    }
}

fn require_bose(spec: &FockSpec) -> Result<()> {
    if spec.is_bose() {
        Ok(())
    } else {
        Err(Error::RequiresBose)
    }
}

/// Poisson vector `e^{f·a†/ħ}|0⟩` truncated to the given space: amplitudes
/// `Π f_k^{n_k} / sqrt(ħ^{n_k} n_k!)`, so that `a_k Θ = f_k Θ` below the
/// cutoff and `⟨Θ_λ, Θ_μ⟩ = exp(λ μ̄ / ħ)` before truncation.
pub fn poisson_vector(spec: &FockSpec, f: &[Complex64]) -> Result<FockVector> {
    require_bose(spec)?;
    if f.len() != spec.modes() {
        return Err(Error::Dimension(format!(
            "{} amplitudes for {} modes",
            f.len(),
            spec.modes()
        )));
    }
    let hbar = spec.hbar();
    let per_mode: Vec<Vec<Complex64>> = f
        .iter()
        .zip(spec.cutoffs())
        .map(|(fk, &c)| single_mode_poisson(*fk, c, hbar))
        .collect();
    let amps = (0..spec.dim()).map(|i| {
        spec.occupations(i)
            .iter()
            .zip(&per_mode)
            .map(|(&n, col)| col[n])
            .product::<Complex64>()
    });
    FockVector::new(spec.clone(), CVector::from_iterator(spec.dim(), amps))
}

fn single_mode_poisson(f: Complex64, cutoff: usize, hbar: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(cutoff + 1);
    let mut c = real(1.0);
    out.push(c);
    for n in 1..=cutoff {
        c *= f / (hbar * n as f64).sqrt();
        out.push(c);
    }
    out
}

/// Bound on `Σ_{n>c} |x|^n / n!`, the truncation error of `e^x` at order `c`.
pub fn exp_tail_bound(x: f64, c: usize) -> f64 {
    let x = x.abs();
    let mut term = 1.0;
    for n in 1..=c + 1 {
        term *= x / n as f64;
    }
    term * x.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenDefect {
    /// `‖(a_k − f_k)Θ‖ / ‖Θ‖`.
    pub defect: f64,
    /// Analytic bound from the cutoff layer.
    pub bound: f64,
}

/// Eigen-defect of a Poisson vector for mode `k`. Only the top layer
/// `n_k = c_k` contributes, which gives the bound
/// `|f_k|^{c_k+1}/sqrt(ħ^{c_k} c_k!) Π_{j≠k} e^{|f_j|²/2ħ} / ‖Θ‖`.
pub fn poisson_eigen_defect(spec: &FockSpec, f: &[Complex64], k: usize) -> Result<EigenDefect> {
    spec.check_mode(k)?;
    let theta = poisson_vector(spec, f)?;
    let a = annihilation_matrix(spec, k)?;
    let residual = &a * theta.amplitudes() - theta.amplitudes() * f[k];
    let norm = theta.norm();
    let hbar = spec.hbar();
    let c = spec.cutoffs()[k];
    let fk = f[k].norm();
    let mut top = fk;
    for n in 1..=c {
        top *= fk / (hbar * n as f64).sqrt();
    }
    let others: f64 = f
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, fj)| (fj.norm_sqr() / (2.0 * hbar)).exp())
        .product();
    Ok(EigenDefect {
        defect: residual.norm() / norm,
        bound: top * others / norm * (1.0 + 1e-12) + f64::EPSILON * fk,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRow {
    pub modes: usize,
    /// Product of single-mode series `Σ_n |f_k|^{2n}/(ħ^n n!)`.
    pub norm_sqr: f64,
    /// `exp(Σ_{k≤m} |f_k|²/ħ)`.
    pub closed_form: f64,
}

/// `‖Θ‖²` over growing mode counts. The series for each mode is summed to
/// convergence, so the table isolates growth in `m`, not truncation.
pub fn norm_divergence_demo(f: &[Complex64], m_list: &[usize], hbar: f64) -> Result<Vec<NormRow>> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidSpec("hbar must be positive".into()));
    }
    let needed = m_list.iter().copied().max().unwrap_or(0);
    if needed > f.len() {
        return Err(Error::Dimension(format!(
            "{} amplitudes for {} modes",
            f.len(),
            needed
        )));
    }
    let series: Vec<f64> = f[..needed]
        .iter()
        .map(|fk| {
            let x = fk.norm_sqr() / hbar;
            let (mut sum, mut term, mut n) = (1.0, 1.0, 0.0);
            while term > f64::EPSILON * sum * 1e-2 {
                n += 1.0;
                term *= x / n;
                sum += term;
            }
            sum
        })
        .collect();
    Ok(m_list
        .iter()
        .map(|&m| NormRow {
            modes: m,
            norm_sqr: series[..m].iter().product(),
            closed_form: (f[..m].iter().map(|z| z.norm_sqr()).sum::<f64>() / hbar).exp(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_mode_creation_matches_formula() {
        let s = FockSpec::bose(&[2]).unwrap();
        let c = creation_matrix(&s, 0).unwrap();
        let expect = CMatrix::from_row_slice(
            3,
            3,
            &[real(0.0), real(0.0), real(0.0), real(1.0), real(0.0), real(0.0), real(0.0), real(2f64.sqrt()), real(0.0)],
        );
        assert_eq!(c, expect);
    }

    #[test]
    fn fermion_pauli() {
        let s = FockSpec::fermi(1).unwrap();
        let c = creation_matrix(&s, 0).unwrap();
        assert_eq!(c, CMatrix::from_row_slice(2, 2, &[real(0.0), real(0.0), real(1.0), real(0.0)]));
        assert!(linalg::max_abs(&(&c * &c)) == 0.0);
    }

    #[test]
    fn vacuum_is_annihilated() {
        for s in [FockSpec::bose(&[3, 2]).unwrap(), FockSpec::fermi(3).unwrap()] {
            let v = FockVector::vacuum(&s);
            for k in 0..s.modes() {
                assert_eq!(v.apply(&annihilation_matrix(&s, k).unwrap()).norm(), 0.0);
            }
        }
    }

    #[test]
    fn ccr_defects() {
        let s = FockSpec::bose(&[5]).unwrap();
        let r = ccr_defect(&s);
        assert!(r.safe < 1e-14);
        assert!((r.unrestricted - 6.0).abs() < 1e-12);
        let s = FockSpec::bose_with_hbar(&[5], 0.25).unwrap();
        assert!((ccr_defect(&s).unrestricted - 1.5).abs() < 1e-12);
        let f = ccr_defect(&FockSpec::fermi(2).unwrap());
        assert_eq!(f.unrestricted, 0.0);
    }

    #[test]
    fn mode_out_of_range() {
        let s = FockSpec::bose(&[2]).unwrap();
        assert!(matches!(creation_matrix(&s, 1), Err(Error::ModeOutOfRange { .. })));
    }

    #[test]
    fn hamiltonian_eigenvalues() {
        let s = FockSpec::bose(&[3, 2]).unwrap();
        let h = quadratic_hamiltonian(&s, &[1.0, 3.0]).unwrap();
        let i = s.index(&[2, 1]);
        assert_eq!(h[(i, i)].re, 5.0);
        let f = FockSpec::fermi(2).unwrap();
        let mut spec: Vec<f64> = linalg::eigvalsh(&quadratic_hamiltonian(&f, &[1.0, 2.0]).unwrap());
        spec.iter_mut().for_each(|x| *x = x.round());
        assert_eq!(spec, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn poisson_overlap_closed_form() {
        let s = FockSpec::bose(&[40]).unwrap();
        let l = Complex64::new(1.3, -0.7);
        let m = Complex64::new(-0.4, 1.5);
        let a = poisson_vector(&s, &[l]).unwrap();
        let b = poisson_vector(&s, &[m]).unwrap();
        let exact = (l * m.conj()).exp();
        assert!((a.inner(&b) - exact).norm() < 1e-12);
        assert_eq!(poisson_vector(&s, &[real(0.0)]).unwrap(), FockVector::vacuum(&s));
    }

    #[test]
    fn poisson_rejects_fermions() {
        let s = FockSpec::fermi(1).unwrap();
        assert_eq!(poisson_vector(&s, &[real(1.0)]), Err(Error::RequiresBose));
    }

    #[test]
    fn eigen_defect_within_bound() {
        let s = FockSpec::bose_with_hbar(&[12, 9], 0.7).unwrap();
        let f = [Complex64::new(0.8, 0.3), Complex64::new(-0.5, 0.9)];
        for k in 0..2 {
            let d = poisson_eigen_defect(&s, &f, k).unwrap();
            assert!(d.defect <= d.bound, "{d:?}");
            assert!(d.bound < 1e-2);
        }
    }

    #[test]
    fn norm_demo_rows() {
        let ones = vec![real(1.0); 6];
        for row in norm_divergence_demo(&ones, &[1, 3, 6], 1.0).unwrap() {
            assert!((row.norm_sqr / (row.modes as f64).exp() - 1.0).abs() < 1e-13);
        }
        let inv: Vec<Complex64> = (1..=2000).map(|k| real(1.0 / k as f64)).collect();
        let last = norm_divergence_demo(&inv, &[2000], 1.0).unwrap()[0];
        let limit = (std::f64::consts::PI.powi(2) / 6.0).exp();
        assert!((last.closed_form - limit).abs() < 2e-3 * limit);
    }

    #[test]
    fn density_validation() {
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![real(1.2), real(-0.2)]));
        assert!(DensityMatrix::new(bad).is_err());
        let notrace = CMatrix::from_diagonal(&CVector::from_vec(vec![real(0.5), real(0.6)]));
        assert!(DensityMatrix::new(notrace).is_err());
        let nonherm = CMatrix::from_row_slice(2, 2, &[real(0.5), real(0.1), real(0.0), real(0.5)]);
        assert!(DensityMatrix::new(nonherm).is_err());
        assert!(DensityMatrix::new(linalg::identity(3) * real(1.0 / 3.0)).is_ok());
    }

    #[test]
    fn spec_json() {
        let s = FockSpec::bose(&[2, 3]).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"statistics":"bose","modes":2,"cutoffs":[2,3],"hbar":1.0}"#);
        assert_eq!(serde_json::from_str::<FockSpec>(&j).unwrap(), s);
        assert!(serde_json::from_str::<FockSpec>(r#"{"statistics":"bose","modes":1,"cutoffs":[0]}"#).is_err());
        assert!(serde_json::from_str::<FockSpec>(r#"{"statistics":"fermi","modes":1,"extra":1}"#).is_err());
    }

    fn small_bose() -> impl Strategy<Value = FockSpec> {
        (prop::collection::vec(1usize..5, 1..4), 0.1f64..3.0)
            .prop_map(|(c, h)| FockSpec::bose_with_hbar(&c, h).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bose_ccr_safe_subspace(spec in small_bose()) {
            prop_assert!(ccr_defect(&spec).safe <= 1e-12 * spec.hbar().max(1.0));
        }

        #[test]
        fn fermi_car_exact(m in 1usize..5) {
            let r = ccr_defect(&FockSpec::fermi(m).unwrap());
            prop_assert!(r.unrestricted <= 1e-12);
        }

        #[test]
        fn creation_raises_number(spec in small_bose(), k in 0usize..3) {
            let k = k % spec.modes();
            let n = total_number_operator(&spec);
            let c = creation_matrix(&spec, k).unwrap();
            let safe = spec.safe_indices(1);
            let defect = &n * &c - &c * &n - &c;
            for &col in &safe {
                prop_assert!(defect.column(col).norm() < 1e-12);
            }
        }
    }
}
