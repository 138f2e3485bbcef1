//! Equilibrium states at finite dimension: Gibbs states, entropy, free
//! energy, free gases, truncated correlations and the KMS condition.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockSpec, Statistics};
use crate::linalg::{self, c, real, CMatrix};
use crate::scalar::Coeff;

/// Eigenvalues below this are treated as zero inside logarithms.
pub const LOG_CLIP: f64 = 1e-15;

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Invalid(format!("β = {beta} must be positive and finite")));
    }
    Ok(())
}

fn check_hamiltonian(h: &CMatrix) -> Result<()> {
    linalg::ensure_square(h, "Hamiltonian")?;
    linalg::ensure_finite(h)?;
    if !linalg::is_hermitian(h, 1e-12) {
        return Err(Error::NotHermitian {
            defect: linalg::hermiticity_defect(h),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Gibbs {
    pub state: DensityMatrix,
    /// Lowest eigenvalue of `H`, subtracted before exponentiating.
    pub shift: f64,
    /// `Tr e^{−β(H − shift)}`.
    pub shifted_z: f64,
    pub log_z: f64,
    pub energies: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub beta: f64,
}

impl Gibbs {
    /// Populations in the eigenbasis, ascending energy.
    pub fn populations(&self) -> Vec<f64> {
        let w: Vec<f64> = self.energies.iter().map(|e| (-(e - self.shift) * self.beta).exp()).collect();
        w.iter().map(|x| x / self.shifted_z).collect()
    }
}

/// `K = e^{−βH} / Z`, evaluated in the eigenbasis of `H` with the spectrum
/// shifted to start at zero.
pub fn gibbs_state(h: &CMatrix, beta: f64) -> Result<Gibbs> {
    check_beta(beta)?;
    check_hamiltonian(h)?;
    let (energies, v) = linalg::eigh(h);
    let shift = energies[0];
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - shift)).exp()).collect();
    let shifted_z: f64 = w.iter().sum();
    let d = CMatrix::from_diagonal(&crate::linalg::CVector::from_iterator(
        w.len(),
        w.iter().map(|x| real(x / shifted_z)),
    ));
    let k = &v * d * v.adjoint();
    Ok(Gibbs {
        state: DensityMatrix::new((&k + k.adjoint()) * real(0.5))?,
        shift,
        shifted_z,
        log_z: shifted_z.ln() - beta * shift,
        energies,
        eigenvectors: v,
        beta,
    })
}

/// Gibbs populations in the eigenbasis, ascending energy.
pub fn gibbs_populations(h: &CMatrix, beta: f64) -> Result<Vec<f64>> {
    Ok(gibbs_state(h, beta)?.populations())
}

/// `S = −Tr K log K`, with `0 log 0 = 0`.
pub fn entropy(k: &DensityMatrix) -> f64 {
    k.eigenvalues()
        .into_iter()
        .filter(|&p| p > LOG_CLIP)
        .map(|p| -p * p.ln())
        .sum::<f64>()
        .max(0.0)
}

/// Hermitian logarithm of a state, eigenvalues clipped at `LOG_CLIP`.
pub fn log_state(k: &DensityMatrix) -> CMatrix {
    linalg::hermitian_function(k.matrix(), |p| real(p.max(LOG_CLIP).ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thermo {
    pub beta: f64,
    pub log_z: f64,
    pub energy: f64,
    pub entropy: f64,
    pub free_energy: f64,
}

pub fn thermodynamics(h: &CMatrix, beta: f64) -> Result<Thermo> {
    let g = gibbs_state(h, beta)?;
    let energy = g.state.expectation(h).re;
    Ok(Thermo {
        beta,
        log_z: g.log_z,
        energy,
        entropy: entropy(&g.state),
        free_energy: -g.log_z / beta,
    })
}

/// `F = −log Z / β`.
pub fn free_energy(h: &CMatrix, beta: f64) -> Result<f64> {
    Ok(-gibbs_state(h, beta)?.log_z / beta)
}

/// `−∂ log Z / ∂β` by a central difference of width `2 step`.
pub fn energy_by_difference(h: &CMatrix, beta: f64, step: f64) -> Result<f64> {
    if !(step > 0.0 && step < beta) {
        return Err(Error::Invalid("difference step must lie in (0, β)".into()));
    }
    let up = gibbs_state(h, beta + step)?.log_z;
    let down = gibbs_state(h, beta - step)?.log_z;
    Ok(-(up - down) / (2.0 * step))
}

/// `‖−log K − βH − log Z‖`, the matrix form of the Lagrangian stationarity
/// condition for the entropy at fixed trace and energy.
pub fn stationarity_defect(h: &CMatrix, beta: f64) -> Result<f64> {
    let g = gibbs_state(h, beta)?;
    let n = h.nrows();
    let r = -log_state(&g.state) - h * real(beta) - linalg::identity(n) * real(g.log_z);
    Ok(linalg::max_abs(&r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeGas {
    pub log_z: f64,
    pub z: f64,
    pub energy: f64,
    pub entropy: f64,
    pub free_energy: f64,
    pub occupations: Vec<f64>,
}

/// Closed forms for independent modes of energies `eps`.
pub fn free_gas(eps: &[f64], beta: f64, statistics: Statistics) -> Result<FreeGas> {
    check_beta(beta)?;
    if eps.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut log_z = 0.0;
    let mut occupations = Vec::with_capacity(eps.len());
    for &e in eps {
        let x = beta * e;
        match statistics {
            Statistics::Bose => {
                if x <= 0.0 {
                    return Err(Error::Invalid(format!("boson mode needs βε > 0, got {x}")));
                }
                // Z_i = 1 / (1 − e^{−βε})
                log_z -= (-(-x).exp()).ln_1p();
                occupations.push(1.0 / x.exp_m1());
            }
            Statistics::Fermi => {
                log_z += if x > 0.0 { (-x).exp().ln_1p() } else { -x + x.exp().ln_1p() };
                occupations.push(if x > 0.0 {
                    let y = (-x).exp();
                    y / (1.0 + y)
                } else {
                    1.0 / (1.0 + x.exp())
                });
            }
        }
    }
    let energy: f64 = eps.iter().zip(&occupations).map(|(e, n)| e * n).sum();
    Ok(FreeGas {
        log_z,
        z: log_z.exp(),
        energy,
        entropy: beta * energy + log_z,
        free_energy: -log_z / beta,
        occupations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactFermiGas {
    pub z: BigRational,
    pub occupations: Vec<BigRational>,
}

/// Closed form `Z = Π (1 + x_i)`, `n̄_i = x_i / (1 + x_i)` for Boltzmann
/// weights `x_i`, in exact arithmetic.
pub fn fermi_closed_exact(weights: &[BigRational]) -> ExactFermiGas {
    let one = BigRational::one();
    ExactFermiGas {
        z: weights.iter().fold(one.clone(), |acc, x| acc * (&one + x)),
        occupations: weights.iter().map(|x| x / (&one + x)).collect(),
    }
}

/// The same quantities as full traces over the `2^m` fermionic Fock basis.
pub fn fermi_trace_exact(weights: &[BigRational]) -> Result<ExactFermiGas> {
    let m = weights.len();
    if m > 16 {
        return Err(Error::InvalidSpec("exact fermionic trace limited to 16 modes".into()));
    }
    let spec = FockSpec::fermi(m)?;
    let mut z = BigRational::zero();
    let mut num = vec![BigRational::zero(); m];
    for j in 0..spec.dim() {
        let occ = spec.occupations(j);
        let w = occ
            .iter()
            .zip(weights)
            .filter(|(n, _)| **n == 1)
            .fold(BigRational::one(), |acc, (_, x)| acc * x);
        for k in 0..m {
            if occ[k] == 1 {
                num[k] += &w;
            }
        }
        z += w;
    }
    let occupations = num.into_iter().map(|x| x / &z).collect();
    Ok(ExactFermiGas { z, occupations })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoseTruncation {
    pub closed_z: f64,
    pub truncated_z: f64,
    /// Analytic bound `Z (1 − Π (1 − x_i^{c+1}))` on `Z − Z_c`.
    pub tail_bound: f64,
    pub closed_occupations: Vec<f64>,
    pub truncated_occupations: Vec<f64>,
}

/// Truncated Fock-space trace of `e^{−βH}` for free bosons against the
/// geometric closed form.
pub fn bose_truncation_check(eps: &[f64], beta: f64, cutoff: usize) -> Result<BoseTruncation> {
    let gas = free_gas(eps, beta, Statistics::Bose)?;
    let spec = FockSpec::bose(&vec![cutoff; eps.len()])?;
    let mut z = 0.0;
    let mut num = vec![0.0; eps.len()];
    for j in 0..spec.dim() {
        let occ = spec.occupations(j);
        let e: f64 = occ.iter().zip(eps).map(|(n, e)| *n as f64 * e).sum();
        let w = (-beta * e).exp();
        for (k, n) in occ.iter().enumerate() {
            num[k] += *n as f64 * w;
        }
        z += w;
    }
    let keep: f64 = eps.iter().map(|e| 1.0 - (-beta * e * (cutoff + 1) as f64).exp()).product();
    Ok(BoseTruncation {
        closed_z: gas.z,
        truncated_z: z,
        tail_bound: gas.z * (1.0 - keep),
        closed_occupations: gas.occupations,
        truncated_occupations: num.into_iter().map(|x| x / z).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub z: f64,
    pub energy: f64,
    pub entropy: f64,
    pub free_energy: f64,
    pub occupations: Vec<f64>,
}

/// Free-gas thermodynamics over a list of inverse temperatures.
pub fn sweep(eps: &[f64], statistics: Statistics, betas: &[f64]) -> Result<Vec<SweepRow>> {
    betas
        .par_iter()
        .map(|&beta| {
            let g = free_gas(eps, beta, statistics)?;
            Ok(SweepRow {
                beta,
                z: g.z,
                energy: g.energy,
                entropy: g.entropy,
                free_energy: g.free_energy,
                occupations: g.occupations,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KmsReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub defect: f64,
    /// `‖A‖ ‖B‖`, the natural size of either side.
    pub scale: f64,
}

/// Compares `⟨A(t) B⟩` with `⟨B A(t + iβ)⟩` in the state `k`, where
/// `A(z) = e^{izH} A e^{−izH}`. Both sides are formed in the eigenbasis of
/// `H`, so the complex-time factors are `e^{iz(E_m − E_n)}`.
pub fn kms_defect(h: &CMatrix, k: &DensityMatrix, a: &CMatrix, b: &CMatrix, beta: f64, t: f64) -> Result<KmsReport> {
    check_beta(beta)?;
    check_hamiltonian(h)?;
    let n = h.nrows();
    if [k.dim(), a.nrows(), a.ncols(), b.nrows(), b.ncols()].iter().any(|&x| x != n) {
        return Err(Error::Dimension("KMS operands differ in size".into()));
    }
    let (e, v) = linalg::eigh(h);
    let vt = v.adjoint();
    let (ka, aa, ba) = (&vt * k.matrix() * &v, &vt * a * &v, &vt * b * &v);
    let evolve = |z: Complex64| CMatrix::from_fn(n, n, |i, j| aa[(i, j)] * (c(0.0, 1.0) * z * (e[i] - e[j])).exp());
    let at = evolve(c(t, 0.0));
    let atb = evolve(c(t, beta));
    if !atb.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let lhs = (&ka * &at * &ba).trace();
    let rhs = (&ka * &ba * &atb).trace();
    Ok(KmsReport {
        lhs,
        rhs,
        defect: (lhs - rhs).norm(),
        scale: linalg::spectral_norm(a) * linalg::spectral_norm(b),
    })
}

/// KMS comparison in the Gibbs state of `H` at `β`.
pub fn kms_check(h: &CMatrix, a: &CMatrix, b: &CMatrix, beta: f64, t: f64) -> Result<KmsReport> {
    let g = gibbs_state(h, beta)?;
    kms_defect(h, &g.state, a, b, beta, t)
}

/// Set partitions of `items`, blocks in increasing order of first element
/// and each block in the original order.
pub fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let Some((&first, rest)) = items.split_first() else {
        return vec![Vec::new()];
    };
    let mut out = Vec::new();
    for p in set_partitions(rest) {
        // `first` alone, or prepended to one of the blocks
        let mut alone = vec![vec![first]];
        alone.extend(p.iter().cloned());
        out.push(alone);
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i].insert(0, first);
            q.sort();
            out.push(q);
        }
    }
    out
}

fn subsets(n: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (1u32..1 << n)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    all.sort_by_key(|s| s.len());
    all
}

/// Truncated (connected) correlations for every ordered sub-tuple of `n`
/// operators, from the ordinary moments: `w(S) = Σ_π Π_{B∈π} w^T(B)`.
pub fn truncated_from_moments<C: Coeff>(n: usize, moment: impl Fn(&[usize]) -> C) -> BTreeMap<Vec<usize>, C> {
    let mut wt: BTreeMap<Vec<usize>, C> = BTreeMap::new();
    for s in subsets(n) {
        let mut rest = C::zero();
        for p in set_partitions(&s) {
            if p.len() < 2 {
                continue;
            }
            let prod = p.iter().fold(C::one(), |acc, block| acc * wt[block].clone());
            rest = rest + prod;
        }
        let v = moment(&s) - rest;
        wt.insert(s, v);
    }
    wt
}

/// Sum over set partitions of products of truncated correlations.
pub fn reconstruct_moment<C: Coeff>(wt: &BTreeMap<Vec<usize>, C>, s: &[usize]) -> C {
    set_partitions(s)
        .iter()
        .fold(C::zero(), |acc, p| acc + p.iter().fold(C::one(), |x, b| x * wt[b].clone()))
}

pub const MAX_CORRELATION_ORDER: usize = 3;

/// Truncated correlations `w^T` of up to three operators in the state `k`;
/// keys are the 0-based positions of the operators taken, in order.
pub fn truncated_correlations(k: &DensityMatrix, ops: &[CMatrix]) -> Result<BTreeMap<Vec<usize>, Complex64>> {
    if ops.len() > MAX_CORRELATION_ORDER {
        return Err(Error::Invalid(format!(
            "truncated correlations are exposed up to order {MAX_CORRELATION_ORDER}"
        )));
    }
    if ops.iter().any(|a| a.nrows() != k.dim() || a.ncols() != k.dim()) {
        return Err(Error::Dimension("operators do not act on the state's space".into()));
    }
    Ok(truncated_from_moments(ops.len(), |s| {
        let prod = s.iter().fold(linalg::identity(k.dim()), |acc, &i| acc * &ops[i]);
        k.expectation(&prod)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{creation_matrix, quadratic_hamiltonian};
    use crate::scalar::rational_from_f64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMatrix {
        let z = CMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&z + z.adjoint()) * real(0.5)
    }

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_fn(v.len(), v.len(), |i, j| if i == j { real(v[i]) } else { real(0.0) })
    }

    #[test]
    fn trivial_hamiltonian() {
        let g = gibbs_state(&CMatrix::zeros(4, 4), 2.0).unwrap();
        assert!((g.log_z - 4f64.ln()).abs() < 1e-15);
        assert!((entropy(&g.state) - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn two_level_populations() {
        let p = gibbs_populations(&diag(&[0.0, 1.0]), 2f64.ln()).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn low_temperature_is_ground_state() {
        let h = diag(&[2.0, -1.0, 0.5]);
        let g = gibbs_state(&h, 200.0).unwrap();
        assert!((g.state.matrix()[(1, 1)].re - 1.0).abs() < 1e-12);
        assert!(entropy(&g.state) < 1e-12);
        // large β would overflow e^{−βH} without the shift
        assert!(gibbs_state(&(h * real(1e3)), 50.0).unwrap().log_z.is_finite());
    }

    #[test]
    fn thermodynamic_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let h = random_hermitian(6, &mut rng);
            let beta = rng.gen_range(0.2..3.0);
            let th = thermodynamics(&h, beta).unwrap();
            assert!((th.entropy - (beta * th.energy + th.log_z)).abs() < 1e-10);
            assert!((th.free_energy - (th.energy - th.entropy / beta)).abs() < 1e-10);
            let fd = energy_by_difference(&h, beta, 1e-4).unwrap();
            assert!((fd - th.energy).abs() < 1e-7);
            assert!(stationarity_defect(&h, beta).unwrap() < 1e-10);
            let g = gibbs_state(&h, beta).unwrap();
            let comm = linalg::commutator(g.state.matrix(), &h);
            assert!(linalg::max_abs(&comm) < 1e-12);
        }
    }

    #[test]
    fn entropy_is_maximal_at_fixed_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_hermitian(4, &mut rng);
        let g = gibbs_state(&h, 1.3).unwrap();
        let s0 = entropy(&g.state);
        let n = 4;
        let hn = linalg::frobenius(&h).powi(2);
        for _ in 0..100 {
            // traceless hermitian direction orthogonal to H
            let mut d = random_hermitian(n, &mut rng);
            d -= linalg::identity(n) * (d.trace() / n as f64);
            let h0 = &h - linalg::identity(n) * (h.trace() / n as f64);
            let h0n = linalg::frobenius(&h0).powi(2).max(hn * 1e-30);
            d -= &h0 * ((h0.adjoint() * &d).trace() / h0n);
            let low = g.state.eigenvalues()[0];
            let step = 0.9 * low / linalg::spectral_norm(&d);
            let k = DensityMatrix::new(g.state.matrix() + d * real(step)).unwrap();
            assert!((k.expectation(&h) - g.state.expectation(&h)).norm() < 1e-12);
            assert!(s0 - entropy(&k) >= -1e-13);
        }
    }

    #[test]
    fn trace_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_hermitian(4, &mut rng);
        let dk = random_hermitian(4, &mut rng);
        let eps = 1e-6;
        for p in [2, 3] {
            let pow = |m: &CMatrix| (1..p).fold(m.clone(), |acc, _| acc * m);
            let fd = ((pow(&(&k + &dk * real(eps))) - pow(&(&k - &dk * real(eps)))).trace() / (2.0 * eps)).re;
            let deriv = (1..p).fold(linalg::identity(4), |acc, _| acc * &k) * real(p as f64);
            let exact = (deriv * &dk).trace().re;
            assert!((fd - exact).abs() < 1e-7, "{fd} {exact}");
        }
    }

    #[test]
    fn occupations_at_ln2() {
        let eps = [1.0];
        let beta = 2f64.ln();
        let b = free_gas(&eps, beta, Statistics::Bose).unwrap();
        let f = free_gas(&eps, beta, Statistics::Fermi).unwrap();
        assert!((b.occupations[0] - 1.0).abs() < 1e-15);
        assert!((f.occupations[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(free_gas(&[-1.0], 1.0, Statistics::Bose).is_err());
    }

    #[test]
    fn fermi_exact_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [1, 5, 12] {
            let beta: f64 = rng.gen_range(0.1..2.0);
            let eps: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..3.0)).collect();
            let w: Vec<BigRational> = eps.iter().map(|e| rational_from_f64((-beta * e).exp()).unwrap()).collect();
            assert_eq!(fermi_closed_exact(&w), fermi_trace_exact(&w).unwrap());
        }
    }

    #[test]
    fn fermi_matches_matrix_trace() {
        let eps = [0.3, -0.4, 1.1];
        let beta = 1.7;
        let spec = FockSpec::fermi(3).unwrap();
        let h = quadratic_hamiltonian(&spec, &eps).unwrap();
        let th = thermodynamics(&h, beta).unwrap();
        let gas = free_gas(&eps, beta, Statistics::Fermi).unwrap();
        assert!((th.log_z - gas.log_z).abs() < 1e-13);
        assert!((th.energy - gas.energy).abs() < 1e-13);
    }

    #[test]
    fn bose_tail_bound() {
        for cutoff in [4, 10, 20] {
            let r = bose_truncation_check(&[0.5, 1.0, 1.5], 1.2, cutoff).unwrap();
            let gap = r.closed_z - r.truncated_z;
            assert!(gap >= -1e-12 && gap <= r.tail_bound * (1.0 + 1e-12) + 1e-14);
        }
    }

    #[test]
    fn kms_holds_for_gibbs_only() {
        let h = diag(&[0.0, 1.0]);
        let sx = CMatrix::from_row_slice(2, 2, &[real(0.0), real(1.0), real(1.0), real(0.0)]);
        let r = kms_check(&h, &sx, &sx, 1.0, 0.3).unwrap();
        assert!(r.defect <= 1e-12);
        let id = linalg::identity(2);
        let one = kms_check(&h, &id, &id, 1.0, 0.3).unwrap();
        assert!((one.lhs - real(1.0)).norm() < 1e-15 && (one.rhs - real(1.0)).norm() < 1e-15);
        let mut prev = r.defect;
        for bump in [0.05, 0.1, 0.2] {
            let p = gibbs_populations(&h, 1.0).unwrap();
            let k = DensityMatrix::new(diag(&[p[0] - bump, p[1] + bump])).unwrap();
            let d = kms_defect(&h, &k, &sx, &sx, 1.0, 0.3).unwrap().defect;
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn kms_random_dim_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_hermitian(8, &mut rng);
        let a = CMatrix::from_fn(8, 8, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let b = CMatrix::from_fn(8, 8, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let r = kms_check(&h, &a, &b, 0.8, 1.7).unwrap();
        assert!(r.defect <= 1e-12 * r.scale.max(1.0), "{}", r.defect);
    }

    #[test]
    fn partitions_of_three() {
        assert_eq!(set_partitions(&[0, 1, 2]).len(), 5);
        assert_eq!(set_partitions(&[0, 1, 2, 3]).len(), 15);
    }

    #[test]
    fn covariance_of_quadrature() {
        let spec = FockSpec::bose(&[30]).unwrap();
        let h = quadratic_hamiltonian(&spec, &[1.0]).unwrap();
        let g = gibbs_state(&h, 0.9).unwrap();
        let up = creation_matrix(&spec, 0).unwrap();
        let x = &up + up.adjoint();
        let wt = truncated_correlations(&g.state, &[x.clone(), x.clone()]).unwrap();
        let mean = g.state.expectation(&x);
        let cov = g.state.expectation(&(&x * &x)) - mean * mean;
        assert!((wt[&vec![0, 1]] - cov).norm() < 1e-12);
        assert!(truncated_correlations(&g.state, &vec![x; 4]).is_err());
    }

    #[test]
    fn product_state_has_no_cross_correlation() {
        let a1 = CMatrix::from_row_slice(2, 2, &[real(0.2), c(0.0, 1.0), c(0.0, -1.0), real(0.4)]);
        let b1 = CMatrix::from_row_slice(2, 2, &[real(1.0), real(0.5), real(0.5), real(-1.0)]);
        let r1 = DensityMatrix::new(diag(&[0.3, 0.7])).unwrap();
        let r2 = DensityMatrix::new(diag(&[0.6, 0.4])).unwrap();
        let k = DensityMatrix::new(linalg::kron(r1.matrix(), r2.matrix())).unwrap();
        let a = linalg::kron(&a1, &linalg::identity(2));
        let b = linalg::kron(&linalg::identity(2), &b1);
        let wt = truncated_correlations(&k, &[a, b]).unwrap();
        assert!(wt[&vec![0, 1]].norm() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn partition_reconstruction_exact(vals in proptest::collection::vec(-20i64..20, 7)) {
            // moments of the seven non-empty subsets of {0, 1, 2}, arbitrary
            let table = subsets(3);
            let moment = |s: &[usize]| {
                let i = table.iter().position(|t| t == s).unwrap();
                BigRational::from_integer(vals[i].into())
            };
            let wt = truncated_from_moments(3, moment);
            for s in &table {
                prop_assert_eq!(reconstruct_moment(&wt, s), moment(s));
            }
        }

        #[test]
        fn fermi_occupations_bounded(eps in proptest::collection::vec(-50.0f64..50.0, 1..6), beta in 0.01f64..20.0) {
            let g = free_gas(&eps, beta, Statistics::Fermi).unwrap();
            prop_assert!(g.occupations.iter().all(|&n| (0.0..=1.0).contains(&n)));
            prop_assert!(g.entropy >= -1e-12);
        }
    }
}
