//! GNS construction for states on the full matrix algebra `M_d`, the
//! energy-shifted generator it induces, and the moment map onto density
//! matrices.
//!
//! The algebra is coordinatized by matrix units `E_ij`, flattened row-major.
//! With `⟨A, B⟩ = ω(B* A)` the Gram matrix on matrix units is
//! `G[(ij),(kl)] = δ_ik ρ_jl`, so its rank is `d · rank ρ`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::linalg::{self, c, real, CMatrix, CVector};

/// Relative eigenvalue threshold deciding the null space of the Gram matrix.
pub const GRAM_THRESHOLD: f64 = 1e-10;
pub const MAX_ALGEBRA_DIM: usize = 12;

#[derive(Debug, Clone)]
pub struct AlgebraState {
    rho: DensityMatrix,
}

impl AlgebraState {
    pub fn new(rho: DensityMatrix) -> Result<Self> {
        if rho.dim() == 0 || rho.dim() > MAX_ALGEBRA_DIM {
            return Err(Error::InvalidSpec(format!(
                "algebra dimension must lie in 1..={MAX_ALGEBRA_DIM}"
            )));
        }
        Ok(AlgebraState { rho })
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        Self::new(DensityMatrix::new(m)?)
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    /// `ω(A) = Tr ρ A`.
    pub fn apply(&self, a: &CMatrix) -> num_complex::Complex64 {
        self.rho.expectation(a)
    }
}

#[derive(Debug, Clone)]
pub struct GnsResult {
    dim: usize,
    /// Retained Gram eigenvalues, descending.
    weights: Vec<f64>,
    /// Matching eigenvectors of `Gᵀ`, one column per carrier direction.
    directions: CMatrix,
    theta: CVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GnsSummary {
    pub algebra_dim: usize,
    pub carrier_dim: usize,
    pub smallest_retained: f64,
    pub largest: f64,
}

fn gram(state: &AlgebraState) -> CMatrix {
    let d = state.dim();
    let rho = state.density().matrix();
    let n = d * d;
    let rows: Vec<Vec<num_complex::Complex64>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let (i, j) = (x / d, x % d);
            (0..n)
                .map(|y| {
                    let (k, l) = (y / d, y % d);
                    if i == k {
                        rho[(j, l)]
                    } else {
                        c(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    CMatrix::from_fn(n, n, |x, y| rows[x][y])
}

fn flatten(a: &CMatrix) -> CVector {
    let d = a.nrows();
    CVector::from_fn(d * d, |x, _| a[(x / d, x % d)])
}

fn unflatten(v: &CVector, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

/// Builds the carrier `M_d / N_ω` with its inner product, the cyclic vector
/// `θ = [1]` and the left-regular representation.
pub fn gns_construct(state: &AlgebraState) -> Result<GnsResult> {
    let d = state.dim();
    // ⟨A, B⟩ = b† Gᵀ a for coefficient vectors a, b
    let m = gram(state).transpose();
    let (vals, vecs) = linalg::eigh(&m);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::InvalidDensity("Gram matrix vanishes".into()));
    }
    let mut keep: Vec<usize> = (0..vals.len()).filter(|&s| vals[s] > GRAM_THRESHOLD * top).collect();
    keep.reverse();
    let weights: Vec<f64> = keep.iter().map(|&s| vals[s]).collect();
    let directions = CMatrix::from_fn(d * d, keep.len(), |x, t| vecs[(x, keep[t])]);
    let mut g = GnsResult {
        dim: d,
        weights,
        directions,
        theta: CVector::zeros(0),
    };
    g.theta = g.class_of(&linalg::identity(d));
    Ok(g)
}

impl GnsResult {
    pub fn algebra_dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn theta(&self) -> &CVector {
        &self.theta
    }

    pub fn summary(&self) -> GnsSummary {
        GnsSummary {
            algebra_dim: self.dim,
            carrier_dim: self.rank(),
            smallest_retained: self.weights.last().copied().unwrap_or(0.0),
            largest: self.weights.first().copied().unwrap_or(0.0),
        }
    }

    /// Carrier coordinates of the class `[A]`.
    pub fn class_of(&self, a: &CMatrix) -> CVector {
        let v = flatten(a);
        CVector::from_fn(self.rank(), |s, _| {
            let u = self.directions.column(s);
            u.dotc(&v) * self.weights[s].sqrt()
        })
    }

    /// Algebra element whose class is the `t`-th carrier basis vector.
    fn preimage(&self, t: usize) -> CMatrix {
        let u: CVector = self.directions.column(t).into_owned() / real(self.weights[t].sqrt());
        unflatten(&u, self.dim)
    }

    fn induced(&self, f: impl Fn(&CMatrix) -> CMatrix + Sync) -> CMatrix {
        let r = self.rank();
        let cols: Vec<CVector> = (0..r).into_par_iter().map(|t| self.class_of(&f(&self.preimage(t)))).collect();
        CMatrix::from_fn(r, r, |s, t| cols[t][s])
    }

    /// `Â [B] = [A B]`.
    pub fn represent(&self, a: &CMatrix) -> Result<CMatrix> {
        if a.nrows() != self.dim || a.ncols() != self.dim {
            return Err(Error::Dimension("operator does not belong to the algebra".into()));
        }
        Ok(self.induced(|b| a * b))
    }

    /// `|⟨Â θ, θ⟩ − ω(A)|`.
    pub fn expectation_defect(&self, state: &AlgebraState, a: &CMatrix) -> Result<f64> {
        let ah = self.represent(a)?;
        let v = self.theta.adjoint() * (&ah * &self.theta);
        Ok((v[(0, 0)] - state.apply(a)).norm())
    }

    /// Rank of `{[E_ij]}` inside the carrier; equals the carrier dimension
    /// when `θ` is cyclic.
    pub fn cyclic_rank(&self) -> usize {
        let d = self.dim;
        let span = CMatrix::from_fn(self.rank(), d * d, |s, x| {
            let mut e = CMatrix::zeros(d, d);
            e[(x / d, x % d)] = real(1.0);
            self.class_of(&e)[s]
        });
        nalgebra::linalg::SVD::new(span, false, false)
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-8)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InducedGenerator {
    /// `ω(H)`.
    pub energy: f64,
    /// Spectrum of the generator `[A] ↦ [HA − AH]` on the carrier, ascending.
    pub spectrum: Vec<f64>,
    /// `‖Ĥθ‖`, zero for a stationary state.
    pub theta_defect: f64,
    #[serde(skip)]
    pub matrix: CMatrix,
}

/// Generator of the one-parameter group `[A] ↦ [e^{iHt} A e^{−iHt}]` on the
/// GNS carrier of a stationary state.
pub fn induced_hamiltonian(state: &AlgebraState, h: &CMatrix) -> Result<InducedGenerator> {
    let d = state.dim();
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::Dimension("Hamiltonian does not belong to the algebra".into()));
    }
    if !linalg::is_hermitian(h, 1e-12) {
        return Err(Error::NotHermitian {
            defect: linalg::hermiticity_defect(h),
        });
    }
    let rho = state.density().matrix();
    let defect = linalg::max_abs(&linalg::commutator(h, rho));
    if defect > 1e-10 * linalg::max_abs(h).max(1.0) {
        return Err(Error::NotStationary { defect });
    }
    let gns = gns_construct(state)?;
    let gen = gns.induced(|a| h * a - a * h);
    let herm = (&gen + gen.adjoint()) * real(0.5);
    let theta_defect = (&gen * gns.theta()).norm();
    Ok(InducedGenerator {
        energy: state.apply(h).re,
        spectrum: linalg::eigvalsh(&herm),
        theta_defect,
        matrix: gen,
    })
}

fn check_unit(x: &CVector) -> Result<()> {
    let n = x.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid(format!("moment map needs a unit vector, norm {n}")));
    }
    Ok(())
}

/// `K_x = x x†`, the density matrix with `Tr K_x C = ⟨x, Cx⟩`.
pub fn moment_map(x: &CVector) -> Result<DensityMatrix> {
    check_unit(x)?;
    DensityMatrix::new(x * x.adjoint())
}

/// `μ_x(C) = ⟨x, Cx⟩` for each generator.
pub fn moment_values(x: &CVector, generators: &[CMatrix]) -> Result<Vec<f64>> {
    check_unit(x)?;
    generators
        .iter()
        .map(|g| {
            if g.nrows() != x.len() || g.ncols() != x.len() {
                return Err(Error::Dimension("generator does not act on the vector".into()));
            }
            Ok((x.adjoint() * g * x)[(0, 0)].re)
        })
        .collect()
}

pub fn pauli() -> [CMatrix; 3] {
    let (o, l, i) = (real(0.0), real(1.0), c(0.0, 1.0));
    [
        CMatrix::from_row_slice(2, 2, &[o, l, l, o]),
        CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        CMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
    ]
}

/// `(Tr Kσ_x, Tr Kσ_y, Tr Kσ_z)` for a qubit state.
pub fn bloch_vector(k: &DensityMatrix) -> Result<[f64; 3]> {
    if k.dim() != 2 {
        return Err(Error::Dimension("Bloch vectors need dimension 2".into()));
    }
    let [x, y, z] = pauli().map(|s| k.expectation(&s).re);
    Ok([x, y, z])
}

/// `(1 + v·σ) / 2`.
pub fn from_bloch(v: [f64; 3]) -> CMatrix {
    let [sx, sy, sz] = pauli();
    (linalg::identity(2) + sx * real(v[0]) + sy * real(v[1]) + sz * real(v[2])) * real(0.5)
}

/// `‖K_{Ux} − U K_x U†‖`.
pub fn equivariance_defect(x: &CVector, u: &CMatrix) -> Result<f64> {
    let kx = moment_map(x)?;
    let kux = moment_map(&(u * x))?;
    Ok(linalg::max_abs(&(kux.matrix() - u * kx.matrix() * u.adjoint())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    /// Largest `|Tr ρC − Tr ρ′C|` over the generators.
    pub max_difference: f64,
    /// Whether `i[C_a, C_b]` stays in the real span of the generators.
    pub lie_closed: bool,
    pub closure_defect: f64,
}

fn real_coordinates(m: &CMatrix) -> Vec<f64> {
    m.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Distance from `x` to the real span of `basis`, by least squares.
fn span_residual(basis: &[Vec<f64>], x: &[f64]) -> f64 {
    if basis.is_empty() {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let a = nalgebra::DMatrix::from_fn(x.len(), basis.len(), |i, j| basis[j][i]);
    let b = nalgebra::DVector::from_column_slice(x);
    let svd = nalgebra::linalg::SVD::new(a.clone(), true, true);
    let coef = svd.solve(&b, 1e-12).unwrap_or_else(|_| nalgebra::DVector::zeros(basis.len()));
    (a * coef - b).norm()
}

/// Whether `ρ` and `ρ′` give the same values on every generator, with a
/// report on whether the generators close under `i[·,·]`.
pub fn equivalence_quotient(rho: &DensityMatrix, rho2: &DensityMatrix, generators: &[CMatrix]) -> Result<EquivalenceReport> {
    if rho.dim() != rho2.dim() || generators.iter().any(|g| g.nrows() != rho.dim() || g.ncols() != rho.dim()) {
        return Err(Error::Dimension("states and generators differ in size".into()));
    }
    let max_difference = generators
        .iter()
        .map(|g| (rho.expectation(g) - rho2.expectation(g)).norm())
        .fold(0.0, f64::max);
    let basis: Vec<Vec<f64>> = generators.iter().map(real_coordinates).collect();
    let mut closure_defect = 0.0f64;
    for a in generators {
        for b in generators {
            let x = linalg::commutator(a, b) * c(0.0, 1.0);
            let scale = linalg::frobenius(a) * linalg::frobenius(b);
            if scale > 0.0 {
                closure_defect = closure_defect.max(span_residual(&basis, &real_coordinates(&x)) / scale);
            }
        }
    }
    Ok(EquivalenceReport {
        equivalent: max_difference <= 1e-10,
        max_difference,
        lie_closed: closure_defect <= 1e-10,
        closure_defect,
    })
}

/// Orthonormal hermitian basis of `M_d` under the trace form.
pub fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut e = CMatrix::zeros(d, d);
        e[(i, i)] = real(1.0);
        out.push(e);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            let mut x = CMatrix::zeros(d, d);
            x[(i, j)] = real(s);
            x[(j, i)] = real(s);
            out.push(x);
            let mut y = CMatrix::zeros(d, d);
            y[(i, j)] = c(0.0, -s);
            y[(j, i)] = c(0.0, s);
            out.push(y);
        }
    }
    out
}
