//! L-functionals `L_K(α*, α) = Tr e^{−α·a†} e^{α*·a} K` over finitely many
//! bosonic modes.
//!
//! Expanding both exponentials, the coefficient of `α^β α*^γ` is
//! `(−1)^{|β|} / (β! γ!) · Tr(a†^β a^γ K)`. Keys store the `α*` multidegree
//! `γ` and the `α` multidegree `β` separately.
//!
//! The doubled operators act on such series as
//! `b = −∂_α`, `b⁺ = ∂_{α*} − ħα`, `b̃ = ∂_{α*}`, `b̃⁺ = ħα* − ∂_α`, with
//! `b L_K = L_{K a†}`, `b⁺ L_K = L_{K a}`, `b̃ L_K = L_{a K}` and
//! `b̃⁺ L_K = L_{a† K}`.

mod green;
mod weyl;

pub use green::{
    fourier_transform, green_cutoff, pole_fit, pole_lemma_ratio, two_point_green, GreenSample, PoleFit,
};
pub use weyl::{hbar_sweep, HarperLattice, SweepReport, SweepRow};

use std::collections::BTreeMap;

use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, FockSpec};
use crate::linalg::{self, real, CMatrix, I};
use crate::scalar::{factorial, rational_from_f64, Coeff};
use crate::weyl_clifford::NormalOrderedPolynomial;

pub const DEFAULT_DEGREE: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TaylorKey {
    /// Degree in `α*_k`.
    pub astar: Vec<u32>,
    /// Degree in `α_k`.
    pub alpha: Vec<u32>,
}

impl TaylorKey {
    pub fn unit(modes: usize) -> Self {
        TaylorKey {
            astar: vec![0; modes],
            alpha: vec![0; modes],
        }
    }

    pub fn new(astar: Vec<u32>, alpha: Vec<u32>) -> Self {
        TaylorKey { astar, alpha }
    }

    pub fn degree(&self) -> usize {
        self.astar.iter().chain(&self.alpha).map(|&d| d as usize).sum()
    }
}

/// Every key of total degree at most `d` in `modes` modes, in key order.
pub fn keys_up_to(modes: usize, d: usize) -> Vec<TaylorKey> {
    fn rec(slots: usize, budget: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 0 {
            out.push(cur.clone());
            return;
        }
        for e in 0..=budget {
            cur.push(e as u32);
            rec(slots - 1, budget - e, cur, out);
            cur.pop();
        }
    }
    let mut flat = Vec::new();
    rec(2 * modes, d, &mut Vec::new(), &mut flat);
    let mut keys: Vec<TaylorKey> = flat
        .into_iter()
        .map(|v| TaylorKey::new(v[..modes].to_vec(), v[modes..].to_vec()))
        .collect();
    keys.sort();
    keys
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Alpha,
    AStar,
}

/// Truncated power series in `α*`, `α` with total degree at most `cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorLFunctional<C: Coeff> {
    modes: usize,
    hbar: C,
    cap: usize,
    terms: BTreeMap<TaylorKey, C>,
}

impl<C: Coeff> TaylorLFunctional<C> {
    pub fn zero(modes: usize, hbar: C, cap: usize) -> Self {
        TaylorLFunctional {
            modes,
            hbar,
            cap,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(modes: usize, hbar: C, cap: usize) -> Self {
        let mut l = Self::zero(modes, hbar, cap);
        l.insert(TaylorKey::unit(modes), C::one());
        l
    }

    pub fn monomial(modes: usize, hbar: C, cap: usize, key: TaylorKey, c: C) -> Result<Self> {
        if key.astar.len() != modes || key.alpha.len() != modes {
            return Err(Error::Dimension("key does not match the mode count".into()));
        }
        if key.degree() > cap {
            return Err(Error::DegreeCap {
                degree: key.degree(),
                cap,
            });
        }
        let mut l = Self::zero(modes, hbar, cap);
        l.insert(key, c);
        Ok(l)
    }

    fn insert(&mut self, key: TaylorKey, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&key) {
            Some(v) => {
                *v = v.clone() + c;
                if v.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn hbar(&self) -> &C {
        &self.hbar
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn with_cap(mut self, cap: usize) -> Result<Self> {
        if self.degree() > cap {
            return Err(Error::DegreeCap {
                degree: self.degree(),
                cap,
            });
        }
        self.cap = cap;
        Ok(self)
    }

    pub fn terms(&self) -> &BTreeMap<TaylorKey, C> {
        &self.terms
    }

    pub fn coefficient(&self, key: &TaylorKey) -> C {
        self.terms.get(key).cloned().unwrap_or_else(C::zero)
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(TaylorKey::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drops every term above degree `d`.
    pub fn truncated(&self, d: usize) -> Self {
        let mut out = self.clone();
        out.terms.retain(|k, _| k.degree() <= d);
        out
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.modes != other.modes || self.hbar != other.hbar {
            return Err(Error::Mismatch("L-functionals on different mode sets or ħ".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        let mut out = self.clone();
        out.cap = self.cap.max(other.cap);
        for (k, c) in &other.terms {
            out.insert(k.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-C::one()))
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(self.modes, self.hbar.clone(), self.cap);
        for (k, v) in &self.terms {
            out.insert(k.clone(), v.clone() * c.clone());
        }
        out
    }

    /// Product with terms above the cap discarded.
    pub fn multiply_truncated(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        let cap = self.cap.min(other.cap);
        let mut out = Self::zero(self.modes, self.hbar.clone(), cap);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                if ka.degree() + kb.degree() > cap {
                    continue;
                }
                let key = TaylorKey {
                    astar: ka.astar.iter().zip(&kb.astar).map(|(x, y)| x + y).collect(),
                    alpha: ka.alpha.iter().zip(&kb.alpha).map(|(x, y)| x + y).collect(),
                };
                out.insert(key, ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.modes {
            return Err(Error::ModeOutOfRange {
                index: k,
                modes: self.modes,
            });
        }
        Ok(())
    }

    fn multiply_var(&self, var: Var, k: usize) -> Result<Self> {
        self.check_mode(k)?;
        let mut out = Self::zero(self.modes, self.hbar.clone(), self.cap);
        for (key, c) in &self.terms {
            if key.degree() + 1 > self.cap {
                return Err(Error::DegreeCap {
                    degree: key.degree() + 1,
                    cap: self.cap,
                });
            }
            let mut key = key.clone();
            match var {
                Var::Alpha => key.alpha[k] += 1,
                Var::AStar => key.astar[k] += 1,
            }
            out.insert(key, c.clone());
        }
        Ok(out)
    }

    fn differentiate(&self, var: Var, k: usize) -> Result<Self> {
        self.check_mode(k)?;
        let mut out = Self::zero(self.modes, self.hbar.clone(), self.cap);
        for (key, c) in &self.terms {
            let e = match var {
                Var::Alpha => key.alpha[k],
                Var::AStar => key.astar[k],
            };
            if e == 0 {
                continue;
            }
            let mut key = key.clone();
            match var {
                Var::Alpha => key.alpha[k] -= 1,
                Var::AStar => key.astar[k] -= 1,
            }
            out.insert(key, c.clone() * C::from_i64(e as i64));
        }
        Ok(out)
    }

    /// `b(k) = −∂/∂α_k`.
    pub fn b(&self, k: usize) -> Result<Self> {
        Ok(self.differentiate(Var::Alpha, k)?.scale(&-C::one()))
    }

    /// `b⁺(k) = ∂/∂α*_k − ħ α_k`.
    pub fn b_plus(&self, k: usize) -> Result<Self> {
        let h = self.hbar.clone();
        self.differentiate(Var::AStar, k)?.sub(&self.multiply_var(Var::Alpha, k)?.scale(&h))
    }

    /// `b̃(k) = ∂/∂α*_k`.
    pub fn b_tilde(&self, k: usize) -> Result<Self> {
        self.differentiate(Var::AStar, k)
    }

    /// `b̃⁺(k) = ħ α*_k − ∂/∂α_k`.
    pub fn b_tilde_plus(&self, k: usize) -> Result<Self> {
        let h = self.hbar.clone();
        self.multiply_var(Var::AStar, k)?.scale(&h).sub(&self.differentiate(Var::Alpha, k)?)
    }

    /// Random series with small integer coefficients, degree at most `d`.
    pub fn random(modes: usize, hbar: C, cap: usize, d: usize, rng: &mut impl Rng, n_terms: usize) -> Self {
        let keys = keys_up_to(modes, d.min(cap));
        let mut l = Self::zero(modes, hbar, cap);
        for _ in 0..n_terms {
            let key = keys[rng.gen_range(0..keys.len())].clone();
            l.insert(key, C::from_i64(rng.gen_range(-6..=6)));
        }
        l
    }
}

impl TaylorLFunctional<Complex64> {
    pub fn evaluate(&self, astar: &[Complex64], alpha: &[Complex64]) -> Result<Complex64> {
        if astar.len() != self.modes || alpha.len() != self.modes {
            return Err(Error::Dimension("argument length differs from the mode count".into()));
        }
        let mut total = Complex64::new(0.0, 0.0);
        for (key, c) in &self.terms {
            let mut term = *c;
            for k in 0..self.modes {
                term *= astar[k].powu(key.astar[k]) * alpha[k].powu(key.alpha[k]);
            }
            total += term;
        }
        Ok(total)
    }

    /// Largest coefficient difference, over terms of degree at most `d`.
    pub fn max_abs_diff(&self, other: &Self, d: usize) -> f64 {
        let mut worst = 0.0f64;
        for key in self.terms.keys().chain(other.terms.keys()) {
            if key.degree() <= d {
                worst = worst.max((self.coefficient(key) - other.coefficient(key)).norm());
            }
        }
        worst
    }

    /// `M_kl = ⟨a†_k a_l⟩` read off the degree-two coefficients.
    pub fn correlation_matrix(&self) -> CMatrix {
        let m = self.modes;
        CMatrix::from_fn(m, m, |k, l| {
            let mut key = TaylorKey::unit(m);
            key.alpha[k] = 1;
            key.astar[l] = 1;
            -self.coefficient(&key)
        })
    }
}

/// Coefficients of `Tr e^{−α·a†} e^{α*·a} X` through total degree `d` for an
/// arbitrary operator `X` on a bosonic Fock space.
pub fn from_operator(x: &CMatrix, spec: &FockSpec, d: usize) -> Result<TaylorLFunctional<Complex64>> {
    if !spec.is_bose() {
        return Err(Error::RequiresBose);
    }
    if x.nrows() != spec.dim() || x.ncols() != spec.dim() {
        return Err(Error::Dimension("operator does not act on the Fock space".into()));
    }
    for (mode, &c) in spec.cutoffs().iter().enumerate() {
        if c < d {
            return Err(Error::CutoffTooSmall { mode, required: d });
        }
    }
    let m = spec.modes();
    let hbar = spec.hbar();
    let occupations: Vec<Vec<usize>> = (0..spec.dim()).map(|j| spec.occupations(j)).collect();
    let mut out = TaylorLFunctional::zero(m, hbar.into(), d);
    for key in keys_up_to(m, d) {
        // Tr(a†^β a^γ X) = Σ_j ⟨i(j)| a†^β a^γ |j⟩ X[j, i(j)]
        let mut tr = Complex64::new(0.0, 0.0);
        'basis: for (j, occ) in occupations.iter().enumerate() {
            let mut coef = 1.0;
            let mut target = occ.clone();
            for k in 0..m {
                let (g, b) = (key.astar[k] as usize, key.alpha[k] as usize);
                if occ[k] < g || occ[k] - g + b > spec.cutoffs()[k] {
                    continue 'basis;
                }
                let low = occ[k] - g;
                for l in low + 1..=occ[k] {
                    coef *= (hbar * l as f64).sqrt();
                }
                for l in low + 1..=low + b {
                    coef *= (hbar * l as f64).sqrt();
                }
                target[k] = low + b;
            }
            tr += x[(j, spec.index(&target))] * coef;
        }
        let beta: u32 = key.alpha.iter().sum();
        let mut denom = 1.0;
        for k in 0..m {
            denom *= factorial::<f64>(key.alpha[k]) * factorial::<f64>(key.astar[k]);
        }
        let c = tr * (if beta % 2 == 1 { -1.0 } else { 1.0 } / denom);
        out.insert(key, c);
    }
    Ok(out)
}

/// `L_K` through total degree `d`; the constant term is `Tr K = 1`.
pub fn from_density(k: &DensityMatrix, spec: &FockSpec, d: usize) -> Result<TaylorLFunctional<Complex64>> {
    from_operator(k.matrix(), spec, d)
}

/// `exp(c₀ + Σ u_k α_k + Σ v_k α*_k − Σ α*_k n_kl α_l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianLFunctional {
    pub modes: usize,
    pub log_const: Complex64,
    pub linear_alpha: Vec<Complex64>,
    pub linear_astar: Vec<Complex64>,
    /// Row `k`, column `l` multiplies `α*_k α_l`.
    pub occupation: Vec<Vec<Complex64>>,
}

impl GaussianLFunctional {
    pub fn vacuum(modes: usize) -> Self {
        GaussianLFunctional {
            modes,
            log_const: Complex64::new(0.0, 0.0),
            linear_alpha: vec![Complex64::new(0.0, 0.0); modes],
            linear_astar: vec![Complex64::new(0.0, 0.0); modes],
            occupation: vec![vec![Complex64::new(0.0, 0.0); modes]; modes],
        }
    }

    /// Coherent state with `a_k ψ = λ_k ψ`: `exp(α*·λ − α·λ̄)`.
    pub fn coherent(lambda: &[Complex64]) -> Self {
        let mut g = Self::vacuum(lambda.len());
        g.linear_astar = lambda.to_vec();
        g.linear_alpha = lambda.iter().map(|l| -l.conj()).collect();
        g
    }

    /// Product of thermal modes with `⟨a†_k a_k⟩ = ħ n_k`.
    pub fn thermal(n: &[f64], hbar: f64) -> Self {
        let mut g = Self::vacuum(n.len());
        for (k, &x) in n.iter().enumerate() {
            g.occupation[k][k] = real(hbar * x);
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.modes;
        if self.linear_alpha.len() != m || self.linear_astar.len() != m || self.occupation.len() != m {
            return Err(Error::Dimension("Gaussian data does not match the mode count".into()));
        }
        if self.occupation.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("occupation matrix is not square".into()));
        }
        let n = CMatrix::from_fn(m, m, |k, l| self.occupation[k][l]);
        linalg::ensure_finite(&n)?;
        if m > 0 && !linalg::is_hermitian(&n, 1e-12) {
            return Err(Error::NotHermitian {
                defect: linalg::hermiticity_defect(&n),
            });
        }
        if linalg::eigvalsh(&n).iter().any(|&e| e < -1e-12) {
            return Err(Error::InvalidDensity("occupation matrix has a negative eigenvalue".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self, astar: &[Complex64], alpha: &[Complex64]) -> Complex64 {
        let mut e = self.log_const;
        for k in 0..self.modes {
            e += self.linear_alpha[k] * alpha[k] + self.linear_astar[k] * astar[k];
            for l in 0..self.modes {
                e -= astar[k] * self.occupation[k][l] * alpha[l];
            }
        }
        e.exp()
    }

    /// Taylor series through degree `d`.
    pub fn to_taylor(&self, hbar: f64, d: usize) -> Result<TaylorLFunctional<Complex64>> {
        self.validate()?;
        let m = self.modes;
        let h = real(hbar);
        let mut q = TaylorLFunctional::zero(m, h, d);
        for k in 0..m {
            let mut ka = TaylorKey::unit(m);
            ka.alpha[k] = 1;
            q.insert(ka, self.linear_alpha[k]);
            let mut ks = TaylorKey::unit(m);
            ks.astar[k] = 1;
            q.insert(ks, self.linear_astar[k]);
            for l in 0..m {
                let mut kq = TaylorKey::unit(m);
                kq.astar[k] += 1;
                kq.alpha[l] += 1;
                q.insert(kq, -self.occupation[k][l]);
            }
        }
        let q = q.truncated(d);
        // exp(Q) = Σ_j Q^j / j!, Q without constant term
        let mut total = TaylorLFunctional::one(m, h, d);
        let mut power = TaylorLFunctional::one(m, h, d);
        for j in 1..=d {
            power = power.multiply_truncated(&q)?.scale(&real(1.0 / j as f64));
            total = total.add(&power)?;
        }
        Ok(total.scale(&self.log_const.exp()))
    }
}

/// Ratio of the single-exponential form `Tr e^{−α·a† + α*·a} K` to the
/// product form: `exp(−ħ Σ_k α_k α*_k / 2)`.
pub fn single_exponential_factor(astar: &[Complex64], alpha: &[Complex64], hbar: f64) -> Complex64 {
    let s: Complex64 = astar.iter().zip(alpha).map(|(x, y)| x * y).sum();
    (-s * hbar / 2.0).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BReport {
    /// Largest coefficient of any commutator identity residual, exact
    /// arithmetic; zero when every identity holds.
    pub algebra_defect: f64,
    pub identities_checked: usize,
    /// Largest deviation of `b L_K` from `L_{K a†}` and the three sibling
    /// relations, against the trace oracle.
    pub intertwining_defect: f64,
}

type Exact = Complex<BigRational>;
type ExactL = TaylorLFunctional<Exact>;

/// Exact commutation relations of `b`, `b⁺`, `b̃`, `b̃⁺` on random series of
/// degree `≤ d − 2`, and the intertwining relations against traces of
/// random low-occupation states.
pub fn b_operators_check(spec: &FockSpec, d: usize, seed: u64) -> Result<BReport> {
    if d < 2 {
        return Err(Error::Invalid("degree cap must be at least 2".into()));
    }
    if !spec.is_bose() {
        return Err(Error::RequiresBose);
    }
    let m = spec.modes();
    let hbar: Exact = Complex::new(
        rational_from_f64(spec.hbar()).ok_or(Error::NonFinite)?,
        BigRational::from_integer(0.into()),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    type Op = fn(&ExactL, usize) -> Result<ExactL>;
    let ops: [(&str, Op); 4] = [
        ("b", ExactL::b),
        ("b+", ExactL::b_plus),
        ("bt", ExactL::b_tilde),
        ("bt+", ExactL::b_tilde_plus),
    ];
    // expected [X_k, Y_l] = ħ δ_kl for (b, b⁺) and (b̃, b̃⁺), else 0
    let expected = |x: &str, y: &str| match (x, y) {
        ("b", "b+") | ("bt", "bt+") => 1,
        ("b+", "b") | ("bt+", "bt") => -1,
        _ => 0,
    };
    let mut defect = 0.0f64;
    let mut checked = 0;
    for _ in 0..8 {
        let p = ExactL::random(m, hbar.clone(), d, d - 2, &mut rng, 10);
        for (nx, x) in &ops {
            for (ny, y) in &ops {
                for k in 0..m {
                    for l in 0..m {
                        let xy = x(&y(&p, l)?, k)?;
                        let yx = y(&x(&p, k)?, l)?;
                        let want = if k == l { expected(nx, ny) } else { 0 };
                        let r = xy.sub(&yx)?.sub(&p.scale(&(hbar.clone() * Exact::from_i64(want))))?;
                        for c in r.terms.values() {
                            defect = defect.max(c.to_c64().norm());
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    let intertwining = intertwining_defect(spec, d, &mut rng)?;
    Ok(BReport {
        algebra_defect: defect,
        identities_checked: checked,
        intertwining_defect: intertwining,
    })
}

fn intertwining_defect(spec: &FockSpec, d: usize, rng: &mut impl Rng) -> Result<f64> {
    let m = spec.modes();
    for (mode, &c) in spec.cutoffs().iter().enumerate() {
        if c < d + 1 {
            return Err(Error::CutoffTooSmall { mode, required: d + 1 });
        }
    }
    // random state on occupations that stay clear of the cutoff
    let low: Vec<usize> = (0..spec.dim())
        .filter(|&j| spec.occupations(j).iter().zip(spec.cutoffs()).all(|(&n, &c)| n + d < c))
        .collect();
    let g = CMatrix::from_fn(spec.dim(), low.len(), |i, j| {
        if i == low[j] {
            linalg::c(1.0, 0.0)
        } else {
            linalg::c(0.0, 0.0)
        }
    });
    let z = CMatrix::from_fn(low.len(), low.len(), |_, _| linalg::c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let kmat = &g * (&z * z.adjoint()) * g.adjoint();
    let k = DensityMatrix::from_unnormalized(kmat)?;
    let lk = from_density(&k, spec, d)?.with_cap(d + 1)?;
    let mut worst = 0.0f64;
    for mode in 0..m {
        let c = fock::creation_matrix(spec, mode)?;
        let a = c.adjoint();
        let pairs = [
            (lk.b(mode)?, k.matrix() * &c),
            (lk.b_plus(mode)?, k.matrix() * &a),
            (lk.b_tilde(mode)?, &a * k.matrix()),
            (lk.b_tilde_plus(mode)?, &c * k.matrix()),
        ];
        for (lhs, op) in pairs {
            let rhs = from_operator(&op, spec, d)?;
            worst = worst.max(lhs.max_abs_diff(&rhs, d - 1));
        }
    }
    Ok(worst)
}

/// Applies `(H̃ − Ĥ)` with `H̃ = Σ c (b̃⁺)^α (b̃)^β` and `Ĥ = Σ c (b⁺)^β (b)^α`
/// for creation multidegree `α` and annihilation multidegree `β`.
pub fn doubled_action(
    h: &NormalOrderedPolynomial<Complex64>,
    l: &TaylorLFunctional<Complex64>,
) -> Result<TaylorLFunctional<Complex64>> {
    if h.modes() != l.modes {
        return Err(Error::Mismatch("Hamiltonian and L-functional differ in modes".into()));
    }
    if h.statistics() != fock::Statistics::Bose {
        return Err(Error::RequiresBose);
    }
    if (*h.hbar() - l.hbar).norm() > 1e-15 * l.hbar.norm().max(1.0) {
        return Err(Error::Mismatch("Hamiltonian and L-functional use different ħ".into()));
    }
    let work = l.clone().with_cap(l.cap + 2 * h.degree())?;
    let mut out = TaylorLFunctional::zero(l.modes, l.hbar, work.cap);
    for (mono, c) in h.terms() {
        let mut tilde = work.clone();
        let mut hat = work.clone();
        for k in 0..l.modes {
            for _ in 0..mono.annihilation[k] {
                tilde = tilde.b_tilde(k)?;
            }
            for _ in 0..mono.creation[k] {
                hat = hat.b(k)?;
            }
        }
        for k in 0..l.modes {
            for _ in 0..mono.creation[k] {
                tilde = tilde.b_tilde_plus(k)?;
            }
            for _ in 0..mono.annihilation[k] {
                hat = hat.b_plus(k)?;
            }
        }
        out = out.add(&tilde.sub(&hat)?.scale(c))?;
    }
    if out.degree() > l.cap {
        return Err(Error::DegreeCap {
            degree: out.degree(),
            cap: l.cap,
        });
    }
    out.cap = l.cap;
    Ok(out)
}

/// Solves `iħ dL/dt = (H̃ − Ĥ) L` on the space of series of degree at most
/// the cap of `l0`, through the matrix exponential of the generator.
pub fn evolve_l(
    l0: &TaylorLFunctional<Complex64>,
    h: &NormalOrderedPolynomial<Complex64>,
    t: f64,
) -> Result<TaylorLFunctional<Complex64>> {
    if !h.is_self_adjoint() {
        return Err(Error::NotHermitian { defect: f64::NAN });
    }
    let keys = keys_up_to(l0.modes, l0.cap);
    let index: BTreeMap<&TaylorKey, usize> = keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let n = keys.len();
    let mut gen = CMatrix::zeros(n, n);
    for (col, key) in keys.iter().enumerate() {
        let basis = TaylorLFunctional::monomial(l0.modes, l0.hbar, l0.cap, key.clone(), real(1.0))?;
        let image = doubled_action(h, &basis)?;
        for (k, c) in image.terms() {
            gen[(index[k], col)] = *c;
        }
    }
    let v = crate::linalg::CVector::from_fn(n, |i, _| l0.coefficient(&keys[i]));
    let u = linalg::expm(&(gen * (-I * t / l0.hbar.re)))?;
    let w = u * v;
    let mut out = TaylorLFunctional::zero(l0.modes, l0.hbar, l0.cap);
    for (i, key) in keys.into_iter().enumerate() {
        out.insert(key, w[i]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::poisson_vector;
    use crate::linalg::c;
    use crate::scalar::exact_complex;
    use crate::weyl_clifford::Monomial;
    use proptest::prelude::*;
    use rand::Rng;

    fn coherent_density(spec: &FockSpec, lambda: &[Complex64]) -> DensityMatrix {
        let v = poisson_vector(spec, lambda).unwrap().normalized().unwrap();
        DensityMatrix::pure(v.amplitudes()).unwrap()
    }

    fn thermal_density(spec: &FockSpec, n: f64) -> DensityMatrix {
        let r = n / (n + 1.0);
        let d = spec.dim();
        let m = CMatrix::from_fn(d, d, |i, j| if i == j { real(r.powi(i as i32)) } else { real(0.0) });
        DensityMatrix::from_unnormalized(m).unwrap()
    }

    #[test]
    fn key_enumeration() {
        assert_eq!(keys_up_to(1, 2).len(), 6);
        assert_eq!(keys_up_to(2, 6).len(), 210);
    }

    #[test]
    fn vacuum_is_one() {
        let spec = FockSpec::bose(&[8, 8]).unwrap();
        let k = DensityMatrix::pure(fock::FockVector::vacuum(&spec).amplitudes()).unwrap();
        let l = from_density(&k, &spec, 4).unwrap();
        assert_eq!(l.terms().len(), 1);
        assert_eq!(l.coefficient(&TaylorKey::unit(2)), real(1.0));
    }

    #[test]
    fn coherent_state_closed_form() {
        let spec = FockSpec::bose(&[40]).unwrap();
        let lambda = [c(0.6, -0.4)];
        let l = from_density(&coherent_density(&spec, &lambda), &spec, 6).unwrap();
        let want = GaussianLFunctional::coherent(&lambda).to_taylor(1.0, 6).unwrap();
        assert!(l.max_abs_diff(&want, 6) < 1e-12, "{}", l.max_abs_diff(&want, 6));
        let z = [c(0.2, 0.1)];
        let w = [c(-0.1, 0.3)];
        let exact = (z[0] * lambda[0] - w[0] * lambda[0].conj()).exp();
        assert!((GaussianLFunctional::coherent(&lambda).evaluate(&z, &w) - exact).norm() < 1e-15);
    }

    #[test]
    fn thermal_coefficient() {
        let (n, hbar) = (0.7, 0.5);
        let spec = FockSpec::bose_with_hbar(&[80], hbar).unwrap();
        let l = from_density(&thermal_density(&spec, n), &spec, 4).unwrap();
        let key = TaylorKey::new(vec![1], vec![1]);
        assert!((l.coefficient(&key) + real(hbar * n)).norm() < 1e-12);
        let g = GaussianLFunctional::thermal(&[n], hbar).to_taylor(hbar, 4).unwrap();
        assert!(l.max_abs_diff(&g, 4) < 1e-11);
    }

    #[test]
    fn single_exponential_conversion() {
        let hbar = 1.0;
        let spec = FockSpec::bose(&[40]).unwrap();
        let k = coherent_density(&spec, &[c(0.3, 0.2)]);
        let (z, w) = (c(0.15, -0.05), c(0.1, 0.2));
        let cr = fock::creation_matrix(&spec, 0).unwrap();
        let an = cr.adjoint();
        let single = linalg::expm(&(&cr * (-w) + &an * z)).unwrap();
        let lhs = (single * k.matrix()).trace();
        let l = from_density(&k, &spec, 12).unwrap();
        let rhs = l.evaluate(&[z], &[w]).unwrap() * single_exponential_factor(&[z], &[w], hbar);
        assert!((lhs - rhs).norm() < 1e-10, "{lhs} {rhs}");
    }

    #[test]
    fn doubled_operators() {
        let spec = FockSpec::bose_with_hbar(&[9, 9], 0.5).unwrap();
        let r = b_operators_check(&spec, 4, 3).unwrap();
        assert_eq!(r.algebra_defect, 0.0);
        assert!(r.identities_checked > 100);
        assert!(r.intertwining_defect < 1e-12, "{}", r.intertwining_defect);
        let vac = TaylorLFunctional::one(2, real(0.5), 4);
        assert!(vac.b_tilde(1).unwrap().is_zero());
    }

    #[test]
    fn number_hamiltonian_phases() {
        let eps = 0.8;
        let alg = NormalOrderedPolynomial::<Complex64>::bose(1, real(1.0));
        let h = alg.term(Monomial { creation: vec![1], annihilation: vec![1] }, real(eps)).unwrap();
        let spec = FockSpec::bose(&[30]).unwrap();
        let l0 = from_density(&coherent_density(&spec, &[c(0.5, 0.1)]), &spec, 4).unwrap();
        let t = 1.3;
        let lt = evolve_l(&l0, &h, t).unwrap();
        for (key, c0) in l0.terms() {
            let beta = key.alpha[0] as f64;
            let gamma = key.astar[0] as f64;
            let want = c0 * (I * eps * (beta - gamma) * t).exp();
            assert!((lt.coefficient(key) - want).norm() < 1e-12);
        }
        let zero = alg.scalar(real(0.0));
        assert!(evolve_l(&l0, &zero, 5.0).unwrap().max_abs_diff(&l0, 4) < 1e-15);
    }

    #[test]
    fn matches_von_neumann_oracle() {
        // two coupled modes, number conserving
        let hbar = 0.7;
        let alg = NormalOrderedPolynomial::<Complex64>::bose(2, real(hbar));
        let h = NormalOrderedPolynomial::parse(
            crate::fock::Statistics::Bose,
            2,
            real(hbar),
            "0.9 a*[1] a[1] + 1.4 a*[2] a[2] + 0.3 a*[1] a[2] + 0.3 a*[2] a[1]",
        )
        .unwrap();
        assert!(h.is_self_adjoint() && alg.modes() == 2);
        let spec = FockSpec::bose_with_hbar(&[7, 7], hbar).unwrap();
        let occ_ok = |j: usize| spec.occupations(j).iter().sum::<usize>() <= 3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = spec.dim();
        let z = CMatrix::from_fn(d, d, |i, j| {
            if occ_ok(i) && occ_ok(j) {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                c(0.0, 0.0)
            }
        });
        let k0 = DensityMatrix::from_unnormalized(&z * z.adjoint()).unwrap();
        let hm = h.represent(&spec).unwrap();
        let t = 2.1;
        let kt = crate::evolution::evolve_density(&k0, &hm, t, hbar).unwrap();
        let oracle = from_density(&kt, &spec, 6).unwrap();
        let evolved = evolve_l(&from_density(&k0, &spec, 6).unwrap(), &h, t).unwrap();
        assert!(evolved.max_abs_diff(&oracle, 6) < 1e-9, "{}", evolved.max_abs_diff(&oracle, 6));
        assert!((evolved.coefficient(&TaylorKey::unit(2)) - real(1.0)).norm() < 1e-12);
        let cm = oracle.correlation_matrix();
        assert!(linalg::eigvalsh(&cm).iter().all(|&e| e > -1e-12));
    }

    #[test]
    fn squeezing_overflows() {
        let h = NormalOrderedPolynomial::parse(crate::fock::Statistics::Bose, 1, real(1.0), "a*[1]^2 + a[1]^2").unwrap();
        let l0 = TaylorLFunctional::one(1, real(1.0), 4);
        assert!(matches!(evolve_l(&l0, &h, 1.0), Err(Error::DegreeCap { .. })));
    }

    #[test]
    fn gaussian_json_round_trip() {
        let g = GaussianLFunctional::coherent(&[c(0.5, -1.0)]);
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<GaussianLFunctional>(&s).unwrap(), g);
        let mut bad = GaussianLFunctional::thermal(&[1.0], 1.0);
        bad.occupation[0][0] = real(-1.0);
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn doubled_commutant(seed in 0u64..10_000) {
            let h: Exact = exact_complex(1, 0) * Exact::from_i64(3);
            let p = ExactL::random(2, h, 6, 4, &mut ChaCha8Rng::seed_from_u64(seed), 8);
            for k in 0..2 {
                for l in 0..2 {
                    let lhs = p.b_tilde_plus(l).unwrap().b(k).unwrap();
                    let rhs = p.b(k).unwrap().b_tilde_plus(l).unwrap();
                    prop_assert_eq!(lhs, rhs);
                    let lhs = p.b_tilde(l).unwrap().b_plus(k).unwrap();
                    let rhs = p.b_plus(k).unwrap().b_tilde(l).unwrap();
                    prop_assert_eq!(lhs, rhs);
                }
            }
        }

        #[test]
        fn trace_preserved(seed in 0u64..1000, t in -2.0f64..2.0) {
            let spec = FockSpec::bose(&[6]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = CMatrix::from_fn(7, 7, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let k = DensityMatrix::from_unnormalized(&z * z.adjoint()).unwrap();
            let alg = NormalOrderedPolynomial::<Complex64>::bose(1, real(1.0));
            let h = alg.term(Monomial { creation: vec![1], annihilation: vec![1] }, real(0.4)).unwrap();
            let lt = evolve_l(&from_density(&k, &spec, 5).unwrap(), &h, t).unwrap();
            prop_assert!((lt.coefficient(&TaylorKey::unit(1)) - real(1.0)).norm() < 1e-12);
        }
    }
}
