//! Decoherence from random adiabatic phases.
//!
//! A Hamiltonian `H(λ, g)` is driven along `g(s)` with `g(0) = g(1) = 0` in
//! time `T = 1/α`. Each eigen-component picks up the phase
//! `θ_n(λ) = (1/α) ∫₀¹ E_n(λ, g(s)) ds` (units with ħ = 1), so in the
//! eigenbasis of `H(·, 0)` the density matrix maps to
//! `K_mn ↦ e^{−iβ_mn(λ)} K_mn` with `β_mn = θ_m − θ_n`. Averaging over `λ`
//! suppresses the off-diagonal entries and leaves the diagonal alone.

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::linalg::{self, real, CMatrix, CVector};
use crate::quad;
use num_complex::Complex64;

/// Levels closer than this along the path count as a crossing.
pub const CROSSING_THRESHOLD: f64 = 1e-8;

/// Trials per block in Monte Carlo reductions. Blocks are summed in index
/// order, so results do not depend on the thread count.
const BLOCK: usize = 4096;

const PHASE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaDistribution {
    /// All mass at one point.
    Degenerate { at: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Smooth compactly supported density `∝ exp(−1/(1 − x²))`,
    /// `x = (λ − center)/half_width`.
    Bump { center: f64, half_width: f64 },
    /// Empirical measure on the given points.
    Samples { points: Vec<f64> },
}

fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

impl LambdaDistribution {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            LambdaDistribution::Degenerate { at } => at.is_finite(),
            LambdaDistribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            LambdaDistribution::Bump { center, half_width } => center.is_finite() && *half_width > 0.0,
            LambdaDistribution::Samples { points } => !points.is_empty() && points.iter().all(|p| p.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad λ distribution {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            LambdaDistribution::Degenerate { at } => *at,
            LambdaDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            LambdaDistribution::Bump { center, half_width } => loop {
                // rejection from the uniform envelope, peak value e^{−1}
                let x = 2.0 * rng.gen::<f64>() - 1.0;
                if rng.gen::<f64>() < bump(x) * std::f64::consts::E {
                    return center + half_width * x;
                }
            },
            LambdaDistribution::Samples { points } => points[rng.gen_range(0..points.len())],
        }
    }

    /// `∫ f dμ` by adaptive quadrature (or exact sums for atomic measures).
    pub fn expectation(&self, f: impl Fn(f64) -> Complex64, tol: f64) -> Result<Complex64> {
        match self {
            LambdaDistribution::Degenerate { at } => Ok(f(*at)),
            LambdaDistribution::Uniform { lo, hi } => Ok(quad::adaptive(&f, *lo, *hi, tol * (hi - lo))? / (hi - lo)),
            LambdaDistribution::Bump { center, half_width } => {
                let norm = quad::adaptive(bump, -1.0, 1.0, 1e-15)?;
                let v = quad::adaptive(|x| f(center + half_width * x) * bump(x), -1.0, 1.0, tol * norm)?;
                Ok(v / norm)
            }
            LambdaDistribution::Samples { points } => {
                Ok(points.iter().map(|&p| f(p)).sum::<Complex64>() / points.len() as f64)
            }
        }
    }
}

/// Hamiltonian `H(λ, g)`.
pub type Family = Box<dyn Fn(f64, f64) -> CMatrix + Sync>;

pub struct PerturbationEnsemble {
    family: Family,
    path: Box<dyn Fn(f64) -> f64 + Sync>,
    distribution: LambdaDistribution,
    alpha: f64,
    trials: usize,
    seed: u64,
}

impl std::fmt::Debug for PerturbationEnsemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbationEnsemble")
            .field("distribution", &self.distribution)
            .field("alpha", &self.alpha)
            .field("trials", &self.trials)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    MonteCarlo,
    Quadrature,
}

#[derive(Debug, Clone, Serialize)]
pub struct BornReport {
    /// Averaged state in the eigenbasis of `H(·, 0)`.
    #[serde(skip)]
    pub averaged: DensityMatrix,
    /// Columns are the eigenvectors of `H(·, 0)`.
    #[serde(skip)]
    pub basis: CMatrix,
    pub probabilities: Vec<f64>,
    /// Frobenius norm of the off-diagonal part of the averaged state.
    pub offdiag: f64,
    /// Standard error of `offdiag` (zero for quadrature).
    pub stderr: f64,
    /// `⟨e^{−iβ_mn}⟩` in row `m`, column `n`.
    #[serde(skip)]
    pub factors: CMatrix,
}

impl PerturbationEnsemble {
    pub fn new(
        family: impl Fn(f64, f64) -> CMatrix + Sync + 'static,
        path: impl Fn(f64) -> f64 + Sync + 'static,
        distribution: LambdaDistribution,
        alpha: f64,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        distribution.validate()?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Invalid("alpha must be positive".into()));
        }
        if trials == 0 {
            return Err(Error::Invalid("at least one trial required".into()));
        }
        if path(0.0).abs() > 1e-12 || path(1.0).abs() > 1e-12 {
            return Err(Error::Invalid("path must vanish at both ends".into()));
        }
        let h0 = family(0.0, 0.0);
        linalg::ensure_square(&h0, "Hamiltonian")?;
        linalg::ensure_finite(&h0)?;
        if !linalg::is_hermitian(&h0, 1e-12) {
            return Err(Error::NotHermitian {
                defect: linalg::hermiticity_defect(&h0),
            });
        }
        Ok(PerturbationEnsemble {
            family: Box::new(family),
            path: Box::new(path),
            distribution,
            alpha,
            trials,
            seed,
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Invalid("alpha must be positive".into()));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        (self.family)(0.0, 0.0).nrows()
    }

    pub fn distribution(&self) -> &LambdaDistribution {
        &self.distribution
    }

    /// `θ_n(λ)` for every level, ascending in energy.
    pub fn phases(&self, lambda: f64) -> Result<Vec<f64>> {
        let worst = Cell::new((f64::INFINITY, 0.0));
        let e = quad::adaptive(
            |s| {
                let vals = linalg::eigvalsh(&(self.family)(lambda, (self.path)(s)));
                let gap = min_spacing(&vals);
                if gap < worst.get().0 {
                    worst.set((gap, s));
                }
                vals
            },
            0.0,
            1.0,
            PHASE_TOL,
        )?;
        let (gap, s) = worst.get();
        let (gap, s) = refine_gap(|s| spacing(&(self.family)(lambda, (self.path)(s))), gap, s);
        if gap < CROSSING_THRESHOLD {
            return Err(Error::GapCollapse { gap, s });
        }
        Ok(e.into_iter().map(|x| x / self.alpha).collect())
    }

    /// `β_mn(λ) = (1/α) ∫₀¹ (E_m − E_n) ds`; exactly zero on the diagonal.
    pub fn phase_functional(&self, lambda: f64, m: usize, n: usize) -> Result<f64> {
        let d = self.dim();
        if m >= d || n >= d {
            return Err(Error::ModeOutOfRange {
                index: m.max(n),
                modes: d,
            });
        }
        if m == n {
            return Ok(0.0);
        }
        let th = self.phases(lambda)?;
        Ok(th[m] - th[n])
    }

    fn lambda(&self, trial: usize) -> f64 {
        let mut rng = trial_rng(self.seed, trial);
        self.distribution.sample(&mut rng)
    }

    /// `⟨e^{−iβ_mn}⟩` and, for Monte Carlo, `⟨|e^{−iβ}|²⟩ − |⟨e^{−iβ}⟩|²`
    /// per entry divided by the trial count.
    fn factors(&self, estimator: Estimator) -> Result<(CMatrix, CMatrix)> {
        let d = self.dim();
        match estimator {
            Estimator::MonteCarlo => {
                let sum = block_sum(self.trials, d * d, |t, acc| {
                    let th = self.phases(self.lambda(t))?;
                    for m in 0..d {
                        for n in 0..d {
                            acc[m + d * n] += Complex64::from_polar(1.0, -(th[m] - th[n]));
                        }
                    }
                    Ok(())
                })?;
                let nt = self.trials as f64;
                let mean = CMatrix::from_fn(d, d, |m, n| sum[m + d * n] / nt);
                let var = CMatrix::from_fn(d, d, |m, n| {
                    let v = (1.0 - mean[(m, n)].norm_sqr()).max(0.0);
                    real(if nt > 1.0 { v / (nt - 1.0) } else { v })
                });
                Ok((mean, var))
            }
            Estimator::Quadrature => {
                let mut mean = CMatrix::from_element(d, d, real(1.0));
                for m in 0..d {
                    for n in 0..m {
                        let v = self.distribution.expectation(
                            |l| match self.phases(l) {
                                Ok(th) => Complex64::from_polar(1.0, -(th[m] - th[n])),
                                Err(_) => Complex64::new(f64::NAN, f64::NAN),
                            },
                            1e-11,
                        )?;
                        if !v.re.is_finite() || !v.im.is_finite() {
                            // surface the underlying crossing error
                            self.phases_on_support()?;
                            return Err(Error::NonFinite);
                        }
                        mean[(m, n)] = v;
                        mean[(n, m)] = v.conj();
                    }
                }
                Ok((mean, CMatrix::zeros(d, d)))
            }
        }
    }

    fn phases_on_support(&self) -> Result<()> {
        let pts: Vec<f64> = match &self.distribution {
            LambdaDistribution::Degenerate { at } => vec![*at],
            LambdaDistribution::Uniform { lo, hi } => (0..=64).map(|k| lo + (hi - lo) * k as f64 / 64.0).collect(),
            LambdaDistribution::Bump { center, half_width } => {
                (0..=64).map(|k| center + half_width * (2.0 * k as f64 / 64.0 - 1.0)).collect()
            }
            LambdaDistribution::Samples { points } => points.clone(),
        };
        for l in pts {
            self.phases(l)?;
        }
        Ok(())
    }

    /// Eigenbasis of `H(·, 0)`.
    pub fn basis(&self) -> CMatrix {
        linalg::eigh(&(self.family)(0.0, 0.0)).1
    }

    pub fn average_density(&self, k0: &DensityMatrix, estimator: Estimator) -> Result<BornReport> {
        let d = self.dim();
        if k0.dim() != d {
            return Err(Error::Dimension("state and Hamiltonian differ in size".into()));
        }
        let v = self.basis();
        let k = v.adjoint() * k0.matrix() * &v;
        let (mean, var) = self.factors(estimator)?;
        let mut avg = k.clone();
        let mut off = 0.0;
        let mut off_var = 0.0;
        for m in 0..d {
            for n in 0..d {
                if m != n {
                    avg[(m, n)] = mean[(m, n)] * k[(m, n)];
                    off += avg[(m, n)].norm_sqr();
                    off_var += var[(m, n)].re * k[(m, n)].norm_sqr();
                }
            }
        }
        let offdiag = off.sqrt();
        // the spread of the entries bounds the spread of their norm
        let stderr = off_var.sqrt();
        let probabilities = (0..d).map(|n| k[(n, n)].re).collect();
        Ok(BornReport {
            averaged: DensityMatrix::new(avg)?,
            basis: v,
            probabilities,
            offdiag,
            stderr,
            factors: mean,
        })
    }

    /// Averaged map on column-stacked `vec(K)` in the eigenbasis; it is
    /// diagonal with entries `⟨e^{−iβ_mn}⟩`.
    pub fn average_superoperator(&self, estimator: Estimator) -> Result<CMatrix> {
        let d = self.dim();
        let (mean, _) = self.factors(estimator)?;
        let diag = CVector::from_fn(d * d, |i, _| {
            let (m, n) = (i % d, i / d);
            if m == n {
                real(1.0)
            } else {
                mean[(m, n)]
            }
        });
        Ok(CMatrix::from_diagonal(&diag))
    }

    /// Common kernel of the commutator superoperators `[H(λ, g(s)), ·]` over
    /// sampled `λ` and a grid in `s`. Columns are orthonormal `vec` forms.
    pub fn robust_zero_modes(&self, lambda_samples: usize, s_points: usize) -> Result<CMatrix> {
        let d = self.dim();
        let mut blocks = vec![linalg::commutator_superoperator(&(self.family)(0.0, 0.0))];
        for t in 0..lambda_samples {
            let l = self.lambda(t);
            for k in 0..=s_points {
                let s = k as f64 / s_points.max(1) as f64;
                blocks.push(linalg::commutator_superoperator(&(self.family)(l, (self.path)(s))));
            }
        }
        let mut stacked = CMatrix::zeros(blocks.len() * d * d, d * d);
        for (b, m) in blocks.iter().enumerate() {
            stacked.view_mut((b * d * d, 0), (d * d, d * d)).copy_from(m);
        }
        Ok(linalg::null_space(&stacked, 1e-10))
    }
}

fn min_spacing(vals: &[f64]) -> f64 {
    vals.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn spacing(h: &CMatrix) -> f64 {
    min_spacing(&linalg::eigvalsh(h))
}

/// Golden-section search for the smallest level spacing near the worst
/// quadrature node; touching levels fall between nodes otherwise.
fn refine_gap(gap_at: impl Fn(f64) -> f64, gap: f64, s: f64) -> (f64, f64) {
    let mut best = (gap, s);
    let scan = 64;
    for k in 0..=scan {
        let t = k as f64 / scan as f64;
        let g = gap_at(t);
        if g < best.0 {
            best = (g, t);
        }
    }
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = ((best.1 - 1.0 / scan as f64).max(0.0), (best.1 + 1.0 / scan as f64).min(1.0));
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (gap_at(c), gap_at(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = gap_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = gap_at(d);
        }
    }
    for (g, t) in [(fc, c), (fd, d)] {
        if g < best.0 {
            best = (g, t);
        }
    }
    best
}

/// Per-trial generator: the master seed selects the key, the trial index
/// the stream, so trial `t` is reproducible on its own.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Sums `f` over trials in fixed-size blocks, then adds blocks in order.
fn block_sum(
    trials: usize,
    width: usize,
    f: impl Fn(usize, &mut [Complex64]) -> Result<()> + Sync,
) -> Result<Vec<Complex64>> {
    let blocks: Vec<Result<Vec<Complex64>>> = (0..trials.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![Complex64::new(0.0, 0.0); width];
            for t in b * BLOCK..((b + 1) * BLOCK).min(trials) {
                f(t, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Complex64::new(0.0, 0.0); width];
    for b in blocks {
        for (t, x) in total.iter_mut().zip(b?) {
            *t += x;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseAverage {
    pub mean: Complex64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `⟨e^{−iβ(λ)}⟩` for an arbitrary phase model.
pub fn monte_carlo_phase_average(
    distribution: &LambdaDistribution,
    trials: usize,
    seed: u64,
    beta: impl Fn(f64) -> f64 + Sync,
) -> Result<PhaseAverage> {
    distribution.validate()?;
    if trials == 0 {
        return Err(Error::Invalid("at least one trial required".into()));
    }
    let sum = block_sum(trials, 1, |t, acc| {
        let l = distribution.sample(&mut trial_rng(seed, t));
        acc[0] += Complex64::from_polar(1.0, -beta(l));
        Ok(())
    })?;
    let n = trials as f64;
    let mean = sum[0] / n;
    let var = (1.0 - mean.norm_sqr()).max(0.0);
    Ok(PhaseAverage {
        mean,
        stderr: if trials > 1 { (var / (n - 1.0)).sqrt() } else { var.sqrt() },
    })
}

/// `sin(x)/x` with the removable singularity filled.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorReport {
    pub projector: CMatrix,
    /// `‖P A‖` in the spectral norm.
    pub residual: f64,
    /// `‖P² − P‖`.
    pub idempotency: f64,
    /// Smallest nonzero `|Im λ|` of the generator.
    pub gap: f64,
}

/// Time average of `σ(t) = e^{tA}` against a Gaussian window of width
/// `t_max/6` on `[−t_max, t_max]`, evaluated by the trapezoidal rule on
/// `samples` nodes. Modes `e^{iωt}` are damped by `e^{−ω²τ²/2}`.
pub fn robust_projector(generator: &CMatrix, t_max: f64, samples: usize, tol: f64) -> Result<ProjectorReport> {
    linalg::ensure_square(generator, "generator")?;
    linalg::ensure_finite(generator)?;
    if !(t_max > 0.0 && t_max.is_finite()) || samples < 3 {
        return Err(Error::Invalid("need t_max > 0 and at least 3 samples".into()));
    }
    let d = generator.nrows();
    let scale = linalg::spectral_norm(generator);
    let skew = generator * crate::linalg::I;
    let eig: Vec<Complex64> = if linalg::is_hermitian(&skew, 1e-12) {
        // A = −iM with M hermitian: eigenvalues −iμ
        linalg::eigvalsh(&skew).into_iter().map(|m| Complex64::new(0.0, -m)).collect()
    } else {
        nalgebra::Schur::try_new(generator.clone(), f64::EPSILON, 10_000)
            .and_then(|s| s.eigenvalues())
            .ok_or(Error::NonFinite)?
            .iter()
            .copied()
            .collect()
    };
    let mut gap = f64::INFINITY;
    let mut top = 0.0f64;
    for z in eig.iter() {
        if z.re.abs() > 1e-9 * scale.max(1.0) {
            return Err(Error::NonImaginarySpectrum { re: z.re });
        }
        let w = z.im.abs();
        top = top.max(w);
        if w > 1e-9 * scale.max(1.0) {
            gap = gap.min(w);
        }
    }
    let tau = t_max / 6.0;
    let half = samples / 2;
    let dt = t_max / half.max(1) as f64;
    // trapezoid aliasing: the shifted frequency 2π/dt − ω must stay damped
    let alias = 2.0 * std::f64::consts::PI / dt - top;
    let resolution = if gap.is_finite() { (-(gap * tau).powi(2) / 2.0).exp() * gap } else { 0.0 };
    if top > 0.0 && alias * tau < 9.0 {
        return Err(Error::WindowTooShort {
            window: t_max,
            resolution: dt,
            requested: 2.0 * std::f64::consts::PI / (top + 9.0 / tau),
        });
    }
    let step = linalg::expm(&(generator * real(dt)))?;
    let back = linalg::expm(&(generator * real(-dt)))?;
    let w = |t: f64| (-t * t / (2.0 * tau * tau)).exp();
    let mut acc = linalg::identity(d) * real(w(0.0));
    let mut weight = w(0.0);
    let (mut fwd, mut bwd) = (linalg::identity(d), linalg::identity(d));
    for k in 1..=half {
        fwd = &step * &fwd;
        bwd = &back * &bwd;
        let wk = w(k as f64 * dt);
        acc += (&fwd + &bwd) * real(wk);
        weight += 2.0 * wk;
    }
    let p = acc * real(1.0 / weight);
    let residual = linalg::spectral_norm(&(&p * generator));
    let idempotency = linalg::spectral_norm(&(&p * &p - &p));
    if residual > tol {
        return Err(Error::Tolerance {
            tol,
            achieved: residual.max(resolution),
            hint: format!("; increase t_max beyond {t_max} (gap {gap:e})"),
        });
    }
    Ok(ProjectorReport {
        projector: p,
        residual,
        idempotency,
        gap,
    })
}

/// Named families `H(λ, g)` for the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `diag(0, 1 + λg)`.
    Gap,
    /// `½[(1 + λg) σ_z + λg σ_x]`.
    Qubit,
    /// `diag(n + λ g n²/10)`, `n = 0 … 3`.
    Ladder,
}

impl FamilyKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gap" => Ok(FamilyKind::Gap),
            "qubit" => Ok(FamilyKind::Qubit),
            "ladder" => Ok(FamilyKind::Ladder),
            other => Err(Error::Invalid(format!("unknown family `{other}` (gap, qubit, ladder)"))),
        }
    }

    pub fn build(self) -> Family {
        match self {
            FamilyKind::Gap => Box::new(|l, g| {
                CMatrix::from_diagonal(&CVector::from_vec(vec![real(0.0), real(1.0 + l * g)]))
            }),
            FamilyKind::Qubit => Box::new(|l, g| {
                let z = 0.5 * (1.0 + l * g);
                let x = 0.5 * l * g;
                CMatrix::from_row_slice(2, 2, &[real(z), real(x), real(x), real(-z)])
            }),
            FamilyKind::Ladder => Box::new(|l, g| {
                CMatrix::from_diagonal(&CVector::from_fn(4, |n, _| {
                    let n = n as f64;
                    real(n + 0.1 * l * g * n * n)
                }))
            }),
        }
    }
}

/// `g(s) = 4 s (1 − s)`.
pub fn parabolic_path(s: f64) -> f64 {
    4.0 * s * (1.0 - s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use proptest::prelude::*;

    fn gap_ensemble(dist: LambdaDistribution, alpha: f64, trials: usize) -> PerturbationEnsemble {
        let fam = FamilyKind::Gap.build();
        PerturbationEnsemble::new(fam, parabolic_path, dist, alpha, trials, 0).unwrap()
    }

    fn mixed_state(d: usize) -> DensityMatrix {
        let v = CVector::from_fn(d, |i, _| c(1.0 + i as f64, 0.5 - i as f64));
        let pure = DensityMatrix::pure(&v).unwrap();
        DensityMatrix::new((pure.matrix() * real(0.8)) + linalg::identity(d) * real(0.2 / d as f64)).unwrap()
    }

    #[test]
    fn phase_closed_form() {
        let e = gap_ensemble(LambdaDistribution::Degenerate { at: 0.3 }, 1e-2, 1);
        let b = e.phase_functional(0.3, 1, 0).unwrap();
        assert!((b - 120.0).abs() < 1e-9, "{b}");
        assert_eq!(e.phase_functional(0.3, 1, 1).unwrap(), 0.0);
        let half = gap_ensemble(LambdaDistribution::Degenerate { at: 0.3 }, 5e-3, 1);
        assert!((half.phase_functional(0.3, 1, 0).unwrap() - 2.0 * b).abs() < 1e-9);
        assert!(e.phase_functional(0.3, 2, 0).is_err());
    }

    #[test]
    fn crossing_is_detected() {
        let e = gap_ensemble(LambdaDistribution::Degenerate { at: -1.0 }, 1e-2, 1);
        assert!(matches!(e.phase_functional(-1.0, 1, 0), Err(Error::GapCollapse { .. })));
    }

    #[test]
    fn degenerate_distribution_keeps_modulus() {
        let e = gap_ensemble(LambdaDistribution::Degenerate { at: 0.0 }, 1e-2, 50);
        let k0 = mixed_state(2);
        let r = e.average_density(&k0, Estimator::MonteCarlo).unwrap();
        let k = r.basis.adjoint() * k0.matrix() * &r.basis;
        assert!((r.averaged.matrix()[(0, 1)].norm() - k[(0, 1)].norm()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_is_untouched() {
        let e = gap_ensemble(LambdaDistribution::Uniform { lo: -0.5, hi: 0.5 }, 1e-2, 2000);
        let k0 = mixed_state(2);
        let k = e.basis().adjoint() * k0.matrix() * e.basis();
        for est in [Estimator::MonteCarlo, Estimator::Quadrature] {
            let r = e.average_density(&k0, est).unwrap();
            for n in 0..2 {
                assert_eq!(r.averaged.matrix()[(n, n)], k[(n, n)]);
                assert_eq!(r.probabilities[n], k[(n, n)].re);
            }
            assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn estimators_agree() {
        let e = gap_ensemble(LambdaDistribution::Uniform { lo: -0.5, hi: 0.5 }, 0.2, 20_000);
        let k0 = mixed_state(2);
        let mc = e.average_density(&k0, Estimator::MonteCarlo).unwrap();
        let qd = e.average_density(&k0, Estimator::Quadrature).unwrap();
        assert!((mc.offdiag - qd.offdiag).abs() < 3.0 * mc.stderr, "{} {} {}", mc.offdiag, qd.offdiag, mc.stderr);
        // uniform λ on [−δ, δ]: |⟨e^{−iβ}⟩| = |sinc(δΘ)| with Θ = (2/3)/α
        let theta = (2.0 / 3.0) / 0.2;
        assert!((qd.factors[(1, 0)].norm() - sinc(0.5 * theta).abs()).abs() < 1e-10);
    }

    #[test]
    fn sinc_average() {
        let dist = LambdaDistribution::Uniform { lo: -0.5, hi: 0.5 };
        let theta = 2.0;
        let r = monte_carlo_phase_average(&dist, 200_000, 0, |l| l * theta).unwrap();
        assert!((r.mean - real(sinc(0.5 * theta))).norm() < 4.0 * r.stderr);
        let again = monte_carlo_phase_average(&dist, 200_000, 0, |l| l * theta).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn residual_decreases_with_alpha() {
        let dist = LambdaDistribution::Bump { center: 0.0, half_width: 0.5 };
        let k0 = mixed_state(2);
        let mut last = f64::INFINITY;
        for alpha in [1e-1, 1e-2, 1e-3] {
            let r = gap_ensemble(dist.clone(), alpha, 1).average_density(&k0, Estimator::Quadrature).unwrap();
            assert!(r.offdiag < last, "{alpha}: {} !< {last}", r.offdiag);
            last = r.offdiag;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn superoperator_form_matches() {
        let e = gap_ensemble(LambdaDistribution::Uniform { lo: -0.5, hi: 0.5 }, 0.05, 1);
        let k0 = mixed_state(2);
        let r = e.average_density(&k0, Estimator::Quadrature).unwrap();
        let s = e.average_superoperator(Estimator::Quadrature).unwrap();
        let k = r.basis.adjoint() * k0.matrix() * &r.basis;
        let out = linalg::unvectorize(&(s * linalg::vectorize(&k)), 2);
        assert!(linalg::max_abs(&(out - r.averaged.matrix())) < 1e-15);
    }

    #[test]
    fn projector_kills_off_diagonals() {
        let h = CMatrix::from_diagonal(&CVector::from_vec(vec![real(0.0), real(1.0)]));
        let gen = linalg::commutator_superoperator(&h) * (-crate::linalg::I);
        let r = robust_projector(&gen, 60.0, 400, 1e-8).unwrap();
        let want = CMatrix::from_diagonal(&CVector::from_vec(vec![real(1.0), real(0.0), real(0.0), real(1.0)]));
        assert!(linalg::max_abs(&(&r.projector - want)) < 1e-6);
        assert!(r.idempotency < 1e-8);
        let zero = robust_projector(&CMatrix::zeros(3, 3), 1.0, 8, 1e-12).unwrap();
        assert!(linalg::max_abs(&(zero.projector - linalg::identity(3))) < 1e-15);
    }

    #[test]
    fn projector_rejects_growth() {
        let gen = CMatrix::from_diagonal(&CVector::from_vec(vec![real(0.1), c(0.0, 1.0)]));
        assert!(matches!(robust_projector(&gen, 10.0, 100, 1e-8), Err(Error::NonImaginarySpectrum { .. })));
        let h = CMatrix::from_diagonal(&CVector::from_vec(vec![real(0.0), real(1.0)]));
        let gen = linalg::commutator_superoperator(&h) * (-crate::linalg::I);
        assert!(robust_projector(&gen, 2.0, 400, 1e-8).is_err());
    }

    #[test]
    fn robust_modes_are_diagonal() {
        let e = gap_ensemble(LambdaDistribution::Uniform { lo: -0.5, hi: 0.5 }, 0.1, 1);
        let modes = e.robust_zero_modes(4, 8).unwrap();
        assert_eq!(modes.ncols(), 2);
        // vec index 1 and 2 are the off-diagonal entries
        for k in 0..2 {
            assert!(modes[(1, k)].norm() < 1e-10 && modes[(2, k)].norm() < 1e-10);
        }
        let q = PerturbationEnsemble::new(
            FamilyKind::Qubit.build(),
            parabolic_path,
            LambdaDistribution::Uniform { lo: -0.5, hi: 0.5 },
            0.1,
            1,
            0,
        )
        .unwrap();
        // only the identity survives once σ_x mixes in
        assert_eq!(q.robust_zero_modes(4, 8).unwrap().ncols(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn averaged_map_is_a_contraction(seed in 0u64..1000, alpha in 0.05f64..1.0) {
            let fam = FamilyKind::Ladder.build();
            let e = PerturbationEnsemble::new(fam, parabolic_path,
                LambdaDistribution::Uniform { lo: -0.3, hi: 0.3 }, alpha, 300, seed).unwrap();
            let k0 = mixed_state(4);
            let r = e.average_density(&k0, Estimator::MonteCarlo).unwrap();
            prop_assert!(r.averaged.eigenvalues().iter().all(|&x| x > -1e-12));
            prop_assert!((r.averaged.matrix().trace() - real(1.0)).norm() < 1e-12);
            for z in r.factors.iter() {
                prop_assert!(z.norm() <= 1.0 + 1e-12);
            }
        }
    }
}
