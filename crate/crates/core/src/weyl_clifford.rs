//! Normal-ordered elements of the Weyl (bosonic) and Clifford (fermionic)
//! algebras over finitely many modes, with exact coefficient arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{self, FockSpec, Statistics};
use crate::linalg::{self, real, CMatrix, CVector, I};
use crate::scalar::{binomial, factorial, sign, Coeff};

pub const DEFAULT_DEGREE_CAP: usize = 8;

/// Creation and annihilation multi-degrees. For fermions every entry is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Monomial {
    pub creation: Vec<u32>,
    pub annihilation: Vec<u32>,
}

impl Monomial {
    pub fn unit(modes: usize) -> Self {
        Monomial {
            creation: vec![0; modes],
            annihilation: vec![0; modes],
        }
    }

    pub fn is_unit(&self) -> bool {
        self.creation.iter().chain(&self.annihilation).all(|&d| d == 0)
    }

    pub fn creation_degree(&self) -> usize {
        self.creation.iter().map(|&d| d as usize).sum()
    }

    pub fn annihilation_degree(&self) -> usize {
        self.annihilation.iter().map(|&d| d as usize).sum()
    }

    pub fn degree(&self) -> usize {
        self.creation_degree() + self.annihilation_degree()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Create,
    Annihilate,
}

type Gen = (Kind, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct NormalOrderedPolynomial<C: Coeff> {
    statistics: Statistics,
    modes: usize,
    hbar: C,
    cap: usize,
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> NormalOrderedPolynomial<C> {
    pub fn zero(statistics: Statistics, modes: usize, hbar: C) -> Self {
        NormalOrderedPolynomial {
            statistics,
            modes,
            hbar,
            cap: DEFAULT_DEGREE_CAP,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(statistics: Statistics, modes: usize, hbar: C, c: C) -> Self {
        let mut p = Self::zero(statistics, modes, hbar);
        p.insert(Monomial::unit(modes), c);
        p
    }

    pub fn one(statistics: Statistics, modes: usize, hbar: C) -> Self {
        Self::constant(statistics, modes, hbar, C::one())
    }

    /// Bosonic algebra with `hbar`.
    pub fn bose(modes: usize, hbar: C) -> Self {
        Self::zero(Statistics::Bose, modes, hbar)
    }

    /// Fermionic algebra; the anticommutator carries no ħ.
    pub fn fermi(modes: usize) -> Self {
        Self::zero(Statistics::Fermi, modes, C::one())
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    fn like(&self) -> Self {
        NormalOrderedPolynomial {
            statistics: self.statistics,
            modes: self.modes,
            hbar: self.hbar.clone(),
            cap: self.cap,
            terms: BTreeMap::new(),
        }
    }

    fn basis_element(&self, kind: Kind, k: usize) -> Result<Self> {
        if k >= self.modes {
            return Err(Error::ModeOutOfRange {
                index: k,
                modes: self.modes,
            });
        }
        let mut m = Monomial::unit(self.modes);
        match kind {
            Kind::Create => m.creation[k] = 1,
            Kind::Annihilate => m.annihilation[k] = 1,
        }
        let mut p = self.like();
        p.insert(m, C::one());
        Ok(p)
    }

    /// `a*_k` in the same algebra as `self`.
    pub fn creation(&self, k: usize) -> Result<Self> {
        self.basis_element(Kind::Create, k)
    }

    /// `a_k` in the same algebra as `self`.
    pub fn annihilation(&self, k: usize) -> Result<Self> {
        self.basis_element(Kind::Annihilate, k)
    }

    pub fn unit(&self) -> Self {
        Self::constant(self.statistics, self.modes, self.hbar.clone(), C::one()).with_cap(self.cap)
    }

    pub fn scalar(&self, c: C) -> Self {
        Self::constant(self.statistics, self.modes, self.hbar.clone(), c).with_cap(self.cap)
    }

    /// A single term `c · monomial`, validated against the algebra.
    pub fn term(&self, monomial: Monomial, c: C) -> Result<Self> {
        if monomial.creation.len() != self.modes || monomial.annihilation.len() != self.modes {
            return Err(Error::Mismatch("monomial length differs from mode count".into()));
        }
        if self.statistics == Statistics::Fermi
            && monomial.creation.iter().chain(&monomial.annihilation).any(|&d| d > 1)
        {
            let mut p = self.like();
            p.terms.clear();
            return Ok(p);
        }
        self.check_cap(&monomial)?;
        let mut p = self.like();
        p.insert(monomial, c);
        Ok(p)
    }

    fn check_cap(&self, m: &Monomial) -> Result<()> {
        for degree in [m.creation_degree(), m.annihilation_degree()] {
            if degree > self.cap {
                return Err(Error::DegreeCap {
                    degree,
                    cap: self.cap,
                });
            }
        }
        Ok(())
    }

    fn insert(&mut self, m: Monomial, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(v) => {
                *v = v.clone() + c;
                if v.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
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

    pub fn terms(&self) -> &BTreeMap<Monomial, C> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    /// Largest total degree of any term.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Largest per-side degree in mode `k`.
    pub fn mode_degree(&self, k: usize) -> usize {
        self.terms
            .keys()
            .map(|m| m.creation[k].max(m.annihilation[k]) as usize)
            .max()
            .unwrap_or(0)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.statistics != other.statistics || self.modes != other.modes || self.hbar != other.hbar {
            return Err(Error::Mismatch(format!(
                "{:?}/{} modes vs {:?}/{} modes or differing hbar",
                self.statistics, self.modes, other.statistics, other.modes
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.cap = self.cap.max(other.cap);
        for (m, c) in &other.terms {
            out.insert(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-C::one()))
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = self.like();
        for (m, v) in &self.terms {
            out.insert(m.clone(), v.clone() * c.clone());
        }
        out
    }

    /// Exact normal-ordered product.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.like();
        out.cap = self.cap.max(other.cap);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let coef = ca.clone() * cb.clone();
                match self.statistics {
                    Statistics::Bose => bose_monomial_product(ma, mb, &self.hbar, coef, &mut out.terms),
                    Statistics::Fermi => {
                        let mut word = word_of(ma);
                        word.extend(word_of(mb));
                        normal_order_word(Statistics::Fermi, &self.hbar, self.modes, word, coef, &mut out.terms)
                    }
                }
            }
        }
        out.terms.retain(|_, c| !c.is_zero());
        for m in out.terms.keys() {
            out.check_cap(m)?;
        }
        Ok(out)
    }

    /// Product computed by generic word rewriting, used as an oracle for the
    /// closed-form bosonic contraction formula.
    pub fn product_by_rewriting(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.like();
        out.cap = self.cap.max(other.cap);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut word = word_of(ma);
                word.extend(word_of(mb));
                normal_order_word(
                    self.statistics,
                    &self.hbar,
                    self.modes,
                    word,
                    ca.clone() * cb.clone(),
                    &mut out.terms,
                );
            }
        }
        out.terms.retain(|_, c| !c.is_zero());
        Ok(out)
    }

    pub fn power(&self, n: u32) -> Result<Self> {
        let mut acc = self.unit();
        for _ in 0..n {
            acc = acc.product(self)?;
        }
        Ok(acc)
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.product(other)?.sub(&other.product(self)?)
    }

    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.product(other)?.add(&other.product(self)?)
    }

    /// Conjugate-linear, order-reversing involution with `a_k ↔ a*_k`.
    pub fn involution(&self) -> Self {
        let mut out = self.like();
        for (m, c) in &self.terms {
            let swapped = Monomial {
                creation: m.annihilation.clone(),
                annihilation: m.creation.clone(),
            };
            let s = match self.statistics {
                Statistics::Bose => C::one(),
                Statistics::Fermi => reversal_sign(m),
            };
            out.insert(swapped, c.conj() * s);
        }
        out
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.involution() == *self
    }

    /// Wick symbol: the normal form with operator hats erased.
    pub fn wick_symbol(&self) -> WickSymbol<C> {
        WickSymbol {
            statistics: self.statistics,
            modes: self.modes,
            terms: self.terms.clone(),
        }
    }

    /// Matrix representation on a Fock space. Bosonic cutoffs must reach the
    /// per-side degree of every mode.
    pub fn represent(&self, spec: &FockSpec) -> Result<CMatrix> {
        if spec.statistics() != self.statistics || spec.modes() != self.modes {
            return Err(Error::Mismatch("polynomial and Fock space differ".into()));
        }
        if self.statistics == Statistics::Bose {
            if (self.hbar.to_c64() - real(spec.hbar())).norm() > 1e-15 * spec.hbar() {
                return Err(Error::Mismatch("hbar differs between polynomial and Fock space".into()));
            }
            for k in 0..self.modes {
                let need = self.mode_degree(k);
                if spec.cutoffs()[k] < need {
                    return Err(Error::CutoffTooSmall {
                        mode: k,
                        required: need,
                    });
                }
            }
        }
        let d = spec.dim();
        let creators: Vec<CMatrix> = (0..self.modes)
            .map(|k| fock::creation_matrix(spec, k))
            .collect::<Result<_>>()?;
        let annihilators: Vec<CMatrix> = creators.iter().map(|c| c.adjoint()).collect();
        let mut out = CMatrix::zeros(d, d);
        for (m, c) in &self.terms {
            let mut op = linalg::identity(d);
            for (k, &deg) in m.creation.iter().enumerate() {
                for _ in 0..deg {
                    op = &op * &creators[k];
                }
            }
            for (k, &deg) in m.annihilation.iter().enumerate() {
                for _ in 0..deg {
                    op = &op * &annihilators[k];
                }
            }
            out += op * c.to_c64();
        }
        Ok(out)
    }

    /// Column depth below the cutoff on which `represent(A)·represent(B)`
    /// agrees with `represent(AB)`.
    pub fn safe_depth(&self, other: &Self) -> usize {
        let up = |p: &Self| {
            p.terms
                .keys()
                .flat_map(|m| m.creation.iter().copied())
                .max()
                .unwrap_or(0) as usize
        };
        up(self) + up(other)
    }

    pub fn map_coefficients<D: Coeff>(&self, hbar: D, f: impl Fn(&C) -> D) -> NormalOrderedPolynomial<D> {
        let mut out = NormalOrderedPolynomial::zero(self.statistics, self.modes, hbar).with_cap(self.cap);
        for (m, c) in &self.terms {
            out.insert(m.clone(), f(c));
        }
        out
    }

    /// Random element with small integer complex coefficients (for testing
    /// algebra laws exactly) and per-term total degree at most `max_degree`.
    pub fn random(&self, rng: &mut impl Rng, max_degree: usize, n_terms: usize) -> Self {
        let mut out = self.like();
        for _ in 0..n_terms {
            let degree = rng.gen_range(0..=max_degree);
            let mut m = Monomial::unit(self.modes);
            for _ in 0..degree {
                let k = rng.gen_range(0..self.modes);
                if rng.gen_bool(0.5) {
                    m.creation[k] += 1;
                } else {
                    m.annihilation[k] += 1;
                }
            }
            if self.statistics == Statistics::Fermi {
                m.creation.iter_mut().chain(m.annihilation.iter_mut()).for_each(|d| *d = (*d).min(1));
            }
            let re = C::from_i64(rng.gen_range(-3..=3));
            let im = C::from_i64(rng.gen_range(-3..=3));
            let coef = re + im * imaginary_unit::<C>();
            out.insert(m, coef);
        }
        out
    }

    /// Text form, e.g. `(1.5-0.5i) a*[1]^2 a[3] + 2`. Modes are 1-based.
    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut s = c.to_plain();
                for (k, &d) in m.creation.iter().enumerate() {
                    push_factor(&mut s, "a*", k, d);
                }
                for (k, &d) in m.annihilation.iter().enumerate() {
                    push_factor(&mut s, "a", k, d);
                }
                s
            })
            .collect();
        parts.join(" + ")
    }

    /// Parses the text form. Factors may appear in any order; the result is
    /// brought to normal form by multiplication.
    pub fn parse(statistics: Statistics, modes: usize, hbar: C, text: &str) -> Result<Self> {
        let zero = Self::zero(statistics, modes, hbar);
        let mut total = zero.clone();
        for raw in split_terms(text)? {
            let (negative, body) = raw;
            let mut term = zero.unit();
            let mut have_factor = false;
            for tok in body.split_whitespace() {
                if let Some(factor) = parse_factor(&zero, tok)? {
                    term = term.product(&factor)?;
                    have_factor = true;
                } else if !have_factor && term == zero.unit() {
                    let c = C::parse_text(tok).ok_or_else(|| Error::Parse(format!("bad coefficient `{tok}`")))?;
                    term = term.scale(&c);
                } else {
                    return Err(Error::Parse(format!("unexpected token `{tok}`")));
                }
            }
            if negative {
                term = term.scale(&-C::one());
            }
            total = total.add(&term)?;
        }
        Ok(total)
    }
}

fn imaginary_unit<C: Coeff>() -> C {
    C::parse_text("i").expect("coefficient ring parses i")
}

fn push_factor(s: &mut String, name: &str, k: usize, d: u32) {
    if d == 0 {
        return;
    }
    s.push_str(&format!(" {name}[{}]", k + 1));
    if d > 1 {
        s.push_str(&format!("^{d}"));
    }
}

/// Splits on top-level ` + ` / ` - ` separators, returning (negated, body).
fn split_terms(text: &str) -> Result<Vec<(bool, String)>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    let mut negative = false;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::Parse("empty polynomial".into()));
    }
    for tok in tokens {
        depth += tok.matches('(').count() as i32 - tok.matches(')').count() as i32;
        if depth == 0 && (tok == "+" || tok == "-") {
            if current.trim().is_empty() {
                if out.is_empty() && tok == "-" {
                    negative = !negative;
                    continue;
                }
                return Err(Error::Parse("dangling sign".into()));
            }
            out.push((negative, std::mem::take(&mut current)));
            negative = tok == "-";
            continue;
        }
        current.push(' ');
        current.push_str(tok);
    }
    if depth != 0 {
        return Err(Error::Parse("unbalanced parentheses".into()));
    }
    if current.trim().is_empty() {
        return Err(Error::Parse("trailing sign".into()));
    }
    out.push((negative, current));
    Ok(out)
}

fn parse_factor<C: Coeff>(alg: &NormalOrderedPolynomial<C>, tok: &str) -> Result<Option<NormalOrderedPolynomial<C>>> {
    let (kind, rest) = if let Some(r) = tok.strip_prefix("a*[").or_else(|| tok.strip_prefix("a†[")) {
        (Kind::Create, r)
    } else if let Some(r) = tok.strip_prefix("a[") {
        (Kind::Annihilate, r)
    } else {
        return Ok(None);
    };
    let close = rest.find(']').ok_or_else(|| Error::Parse(format!("missing `]` in `{tok}`")))?;
    let k: usize = rest[..close]
        .parse()
        .map_err(|_| Error::Parse(format!("bad mode in `{tok}`")))?;
    if k == 0 {
        return Err(Error::Parse("modes are numbered from 1".into()));
    }
    let tail = &rest[close + 1..];
    let power: u32 = if tail.is_empty() {
        1
    } else {
        tail.strip_prefix('^')
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad exponent in `{tok}`")))?
    };
    let base = alg.basis_element(kind, k - 1)?;
    Ok(Some(base.power(power)?))
}

impl<C: Coeff> fmt::Display for NormalOrderedPolynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn word_of(m: &Monomial) -> Vec<Gen> {
    let mut w = Vec::with_capacity(m.degree());
    for (k, &d) in m.creation.iter().enumerate() {
        w.extend(std::iter::repeat_n((Kind::Create, k as u32), d as usize));
    }
    for (k, &d) in m.annihilation.iter().enumerate() {
        w.extend(std::iter::repeat_n((Kind::Annihilate, k as u32), d as usize));
    }
    w
}

/// Sign `(−1)^{r(r−1)/2 + s(s−1)/2}` from reversing both generator strings.
fn reversal_sign<C: Coeff>(m: &Monomial) -> C {
    let r = m.creation_degree();
    let s = m.annihilation_degree();
    sign((r * r.saturating_sub(1) / 2 + s * s.saturating_sub(1) / 2) % 2 == 1)
}

/// Brings a word of generators to normal order by adjacent rewriting.
fn normal_order_word<C: Coeff>(
    statistics: Statistics,
    hbar: &C,
    modes: usize,
    word: Vec<Gen>,
    coef: C,
    out: &mut BTreeMap<Monomial, C>,
) {
    let fermi = statistics == Statistics::Fermi;
    let mut stack = vec![(coef, word)];
    while let Some((c, mut w)) = stack.pop() {
        let found = (0..w.len().saturating_sub(1)).find(|&i| w[i] > w[i + 1] || (fermi && w[i] == w[i + 1]));
        let Some(i) = found else {
            let mut m = Monomial::unit(modes);
            for (kind, k) in w {
                match kind {
                    Kind::Create => m.creation[k as usize] += 1,
                    Kind::Annihilate => m.annihilation[k as usize] += 1,
                }
            }
            let entry = out.entry(m).or_insert_with(C::zero);
            *entry = entry.clone() + c;
            continue;
        };
        let (x, y) = (w[i], w[i + 1]);
        if x == y {
            continue; // fermionic square
        }
        let contraction = x.0 == Kind::Annihilate && y.0 == Kind::Create && x.1 == y.1;
        if contraction {
            let mut shorter = w.clone();
            shorter.drain(i..i + 2);
            let weight = if fermi { c.clone() } else { c.clone() * hbar.clone() };
            stack.push((weight, shorter));
        }
        w.swap(i, i + 1);
        stack.push((if fermi { -c } else { c }, w));
    }
}

/// Bosonic monomial product via
/// `a^b a*^g = Σ_j C(b,j) C(g,j) j! ħ^j a*^{g−j} a^{b−j}` in each mode.
fn bose_monomial_product<C: Coeff>(
    a: &Monomial,
    b: &Monomial,
    hbar: &C,
    coef: C,
    out: &mut BTreeMap<Monomial, C>,
) {
    let modes = a.creation.len();
    let ranges: Vec<u32> = (0..modes).map(|k| a.annihilation[k].min(b.creation[k])).collect();
    let mut j = vec![0u32; modes];
    loop {
        let mut c = coef.clone();
        let mut m = Monomial::unit(modes);
        for k in 0..modes {
            let (bk, gk, jk) = (a.annihilation[k], b.creation[k], j[k]);
            if jk > 0 {
                c = c * binomial::<C>(bk, jk) * binomial::<C>(gk, jk) * factorial::<C>(jk) * hbar.powi(jk);
            }
            m.creation[k] = a.creation[k] + gk - jk;
            m.annihilation[k] = bk - jk + b.annihilation[k];
        }
        let entry = out.entry(m).or_insert_with(C::zero);
        *entry = entry.clone() + c;
        // odometer over contraction counts
        let mut k = 0;
        loop {
            if k == modes {
                return;
            }
            if j[k] < ranges[k] {
                j[k] += 1;
                break;
            }
            j[k] = 0;
            k += 1;
        }
    }
}

/// Commutative (bosonic) or graded (fermionic) polynomial in `a*_k, a_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WickSymbol<C: Coeff> {
    statistics: Statistics,
    modes: usize,
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> WickSymbol<C> {
    pub fn terms(&self) -> &BTreeMap<Monomial, C> {
        &self.terms
    }

    /// Pointwise product of symbols. Fermionic symbols multiply as Grassmann
    /// monomials in the order `a*_1 … a*_m a_1 … a_m`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.statistics != other.statistics || self.modes != other.modes {
            return Err(Error::Mismatch("symbols from different algebras".into()));
        }
        let mut terms: BTreeMap<Monomial, C> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut m = Monomial::unit(self.modes);
                let mut c = ca.clone() * cb.clone();
                for k in 0..self.modes {
                    m.creation[k] = ma.creation[k] + mb.creation[k];
                    m.annihilation[k] = ma.annihilation[k] + mb.annihilation[k];
                }
                if self.statistics == Statistics::Fermi {
                    if m.creation.iter().chain(&m.annihilation).any(|&d| d > 1) {
                        continue;
                    }
                    let wa = word_of(ma);
                    let wb = word_of(mb);
                    let crossings = wa
                        .iter()
                        .map(|x| wb.iter().filter(|y| *y < x).count())
                        .sum::<usize>();
                    c = c * sign::<C>(crossings % 2 == 1);
                }
                let e = terms.entry(m).or_insert_with(C::zero);
                *e = e.clone() + c;
            }
        }
        terms.retain(|_, c| !c.is_zero());
        Ok(WickSymbol {
            statistics: self.statistics,
            modes: self.modes,
            terms,
        })
    }

    /// Complex conjugation `c ↦ c̄`, `a ↔ a*` (with the reversal sign for
    /// Grassmann-valued symbols).
    pub fn conjugate(&self) -> Self {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let s = match self.statistics {
                Statistics::Bose => C::one(),
                Statistics::Fermi => reversal_sign(m),
            };
            terms.insert(
                Monomial {
                    creation: m.annihilation.clone(),
                    annihilation: m.creation.clone(),
                },
                c.conj() * s,
            );
        }
        WickSymbol {
            statistics: self.statistics,
            modes: self.modes,
            terms,
        }
    }

    /// Bosonic evaluation at `a = z`, `a* = z̄`.
    pub fn evaluate(&self, z: &[Complex64]) -> Result<Complex64> {
        if self.statistics != Statistics::Bose {
            return Err(Error::RequiresBose);
        }
        if z.len() != self.modes {
            return Err(Error::Dimension(format!("{} points for {} modes", z.len(), self.modes)));
        }
        Ok(self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut v = c.to_c64();
                for k in 0..self.modes {
                    v *= z[k].conj().powu(m.creation[k]) * z[k].powu(m.annihilation[k]);
                }
                v
            })
            .sum())
    }
}

/// Antisymmetric real form `σ` with `[u^k, u^l] = iħ σ^{kl}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaForm {
    matrix: DMatrix<f64>,
}

impl SigmaForm {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || !matrix.nrows().is_multiple_of(2) {
            return Err(Error::Dimension("sigma must be square of even size".into()));
        }
        if (&matrix + matrix.transpose()).amax() > 1e-14 * matrix.amax().max(1.0) {
            return Err(Error::NotAntisymmetric);
        }
        Ok(SigmaForm { matrix })
    }

    /// Canonical form: blocks `[[0, 1], [-1, 0]]` for each mode (q, p pairs).
    pub fn canonical(modes: usize) -> Self {
        Self::scaled(&vec![1.0; modes]).expect("positive scales")
    }

    pub fn scaled(s: &[f64]) -> Result<Self> {
        let n = 2 * s.len();
        let mut m = DMatrix::zeros(n, n);
        for (k, &v) in s.iter().enumerate() {
            m[(2 * k, 2 * k + 1)] = v;
            m[(2 * k + 1, 2 * k)] = -v;
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn pairing(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let n = self.matrix.nrows();
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                acc += alpha[k] * self.matrix[(k, l)] * beta[l];
            }
        }
        acc
    }

    /// Per-mode scales `s_k` when `σ` is block diagonal with positive
    /// `[[0, s], [-s, 0]]` blocks.
    fn block_scales(&self) -> Result<Vec<f64>> {
        let n = self.matrix.nrows();
        let mut s = Vec::with_capacity(n / 2);
        for k in 0..n / 2 {
            for i in 0..n {
                for j in 0..n {
                    let in_block = (i / 2 == k) && (j / 2 == k);
                    if (i / 2 == k || j / 2 == k) && !in_block && self.matrix[(i, j)] != 0.0 {
                        return Err(Error::Invalid("sigma must be block diagonal in (q, p) pairs".into()));
                    }
                }
            }
            let v = self.matrix[(2 * k, 2 * k + 1)];
            if !(v > 0.0) {
                return Err(Error::Invalid("sigma blocks must be positive and invertible".into()));
            }
            s.push(v);
        }
        Ok(s)
    }
}

/// Self-adjoint generators `u^{2k} = √s_k q_k`, `u^{2k+1} = √s_k p_k` built
/// from ladder matrices, `q = (a + a†)/√2`, `p = (a − a†)/(i√2)`.
pub fn weyl_generators(sigma: &SigmaForm, spec: &FockSpec) -> Result<Vec<CMatrix>> {
    if !spec.is_bose() {
        return Err(Error::RequiresBose);
    }
    let s = sigma.block_scales()?;
    if s.len() != spec.modes() {
        return Err(Error::Dimension(format!("sigma has {} modes, space {}", s.len(), spec.modes())));
    }
    let mut out = Vec::with_capacity(2 * s.len());
    for (k, sk) in s.iter().enumerate() {
        let c = fock::creation_matrix(spec, k)?;
        let a = c.adjoint();
        let r = (sk / 2.0).sqrt();
        out.push((&a + &c) * real(r));
        out.push((&a - &c) * (-I * r));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylReport {
    pub defect: f64,
    /// `ασβ`.
    pub pairing: f64,
    /// Smallest per-mode cutoff the tail estimate accepts for the tolerance.
    pub cutoff_estimate: usize,
}

/// Largest test occupation per mode used by [`weyl_exponential_check`].
pub const WEYL_TEST_OCCUPATION: usize = 2;

/// Checks `V_α V_β = exp(−i(ħ/2) ασβ) V_{α+β}` with `V_α = exp(i α·u)` on
/// states of total occupation at most two.
pub fn weyl_exponential_check(
    sigma: &SigmaForm,
    alpha: &[f64],
    beta: &[f64],
    spec: &FockSpec,
    tol: f64,
) -> Result<WeylReport> {
    let u = weyl_generators(sigma, spec)?;
    if alpha.len() != u.len() || beta.len() != u.len() {
        return Err(Error::Dimension(format!("displacements must have length {}", u.len())));
    }
    let s = sigma.block_scales()?;
    let hbar = spec.hbar();
    let sum: Vec<f64> = alpha.iter().zip(beta).map(|(a, b)| a + b).collect();
    // Coherent amplitude of each displacement: ħ s |v|² / 2 in occupation units.
    let mut estimate = 0;
    for k in 0..s.len() {
        let r2 = [alpha, beta, &sum]
            .iter()
            .map(|v| hbar * s[k] * (v[2 * k].powi(2) + v[2 * k + 1].powi(2)) / 2.0)
            .fold(0.0, f64::max);
        estimate = estimate.max(needed_cutoff(r2, tol));
    }
    let min_cutoff = spec.cutoffs().iter().copied().min().unwrap_or(0);
    if estimate > min_cutoff {
        return Err(Error::Tolerance {
            tol,
            achieved: f64::NAN,
            hint: format!("; cutoff {min_cutoff} too small, estimate needs {estimate}"),
        });
    }
    let v = |w: &[f64]| -> Result<CMatrix> {
        let mut x = CMatrix::zeros(spec.dim(), spec.dim());
        for (wk, uk) in w.iter().zip(&u) {
            x += uk * (I * *wk);
        }
        linalg::expm(&x)
    };
    let pairing = sigma.pairing(alpha, beta);
    let lhs = v(alpha)? * v(beta)?;
    let rhs = v(&sum)? * (-I * 0.5 * hbar * pairing).exp();
    let diff = lhs - rhs;
    let cols: Vec<usize> = (0..spec.dim())
        .filter(|&i| spec.occupations(i).iter().sum::<usize>() <= WEYL_TEST_OCCUPATION)
        .collect();
    let mut restricted = CMatrix::zeros(spec.dim(), cols.len());
    for (j, &c) in cols.iter().enumerate() {
        restricted.set_column(j, &diff.column(c));
    }
    let defect = linalg::spectral_norm(&restricted);
    if defect > tol {
        return Err(Error::Tolerance {
            tol,
            achieved: defect,
            hint: format!("; tail estimate suggests cutoff {estimate}"),
        });
    }
    Ok(WeylReport {
        defect,
        pairing,
        cutoff_estimate: estimate,
    })
}

/// Smallest cutoff `c` with Poisson tail `r2^{c'}/c'! · e^{r2}` below
/// `tol²/100`, where `c' = c + 1 − WEYL_TEST_OCCUPATION` accounts for the
/// occupied test states, plus a safety margin of a few levels.
fn needed_cutoff(r2: f64, tol: f64) -> usize {
    let target = (tol * tol * 1e-2).max(1e-300);
    let mut c = WEYL_TEST_OCCUPATION;
    loop {
        let tail = fock::exp_tail_bound(r2.max(1e-3) * 2.0, c - WEYL_TEST_OCCUPATION);
        if tail < target || c > 10_000 {
            return c + 4;
        }
        c += 1;
    }
}

/// `Σ ε_k a*_k a_k` as a polynomial.
pub fn number_hamiltonian<C: Coeff>(alg: &NormalOrderedPolynomial<C>, eps: &[C]) -> Result<NormalOrderedPolynomial<C>> {
    if eps.len() != alg.modes() {
        return Err(Error::Dimension(format!("{} energies for {} modes", eps.len(), alg.modes())));
    }
    let mut h = alg.like();
    for (k, e) in eps.iter().enumerate() {
        h = h.add(&alg.creation(k)?.product(&alg.annihilation(k)?)?.scale(e))?;
    }
    Ok(h)
}

/// Defect of the restriction of `represent(A)represent(B) − represent(AB)`
/// to states at depth [`NormalOrderedPolynomial::safe_depth`] below the cutoff.
pub fn homomorphism_defect<C: Coeff>(
    a: &NormalOrderedPolynomial<C>,
    b: &NormalOrderedPolynomial<C>,
    spec: &FockSpec,
) -> Result<f64> {
    let ab = a.product(b)?;
    let lhs = ab.represent(spec)?;
    let rhs = a.represent(spec)? * b.represent(spec)?;
    let depth = a.safe_depth(b);
    let diff = lhs - rhs;
    let mut worst = 0.0f64;
    for col in spec.safe_indices(depth) {
        let c: CVector = diff.column(col).into();
        worst = worst.max(c.norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{exact_complex, exact_ratio};
    use num_complex::Complex;
    use num_rational::BigRational;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Q = Complex<BigRational>;

    fn bose(m: usize) -> NormalOrderedPolynomial<Q> {
        NormalOrderedPolynomial::bose(m, exact_ratio(1, 2))
    }

    fn fermi(m: usize) -> NormalOrderedPolynomial<Q> {
        NormalOrderedPolynomial::fermi(m)
    }

    #[test]
    fn ccr_and_car_in_normal_form() {
        let b = bose(1);
        let prod = b.annihilation(0).unwrap().product(&b.creation(0).unwrap()).unwrap();
        let expect = b
            .creation(0)
            .unwrap()
            .product(&b.annihilation(0).unwrap())
            .unwrap()
            .add(&b.scalar(exact_ratio(1, 2)))
            .unwrap();
        assert_eq!(prod, expect);
        let f = fermi(1);
        let prod = f.annihilation(0).unwrap().product(&f.creation(0).unwrap()).unwrap();
        let n = f.creation(0).unwrap().product(&f.annihilation(0).unwrap()).unwrap();
        assert_eq!(prod, f.unit().sub(&n).unwrap());
    }

    #[test]
    fn fermionic_involution_sign() {
        let f = fermi(2);
        let c = exact_complex(2, 3);
        let a1a2 = f.annihilation(0).unwrap().product(&f.annihilation(1).unwrap()).unwrap().scale(&c);
        let star = a1a2.involution();
        let expect = f
            .creation(0)
            .unwrap()
            .product(&f.creation(1).unwrap())
            .unwrap()
            .scale(&-c.conj());
        assert_eq!(star, expect);
    }

    #[test]
    fn number_operator_representation() {
        let spec = FockSpec::bose_with_hbar(&[3], 0.5).unwrap();
        let alg = NormalOrderedPolynomial::<Complex64>::bose(1, real(0.5));
        let n = alg.creation(0).unwrap().product(&alg.annihilation(0).unwrap()).unwrap();
        let m = n.represent(&spec).unwrap();
        for k in 0..4 {
            assert!((m[(k, k)] - real(0.5 * k as f64)).norm() < 1e-15);
        }
        assert_eq!(alg.unit().represent(&spec).unwrap(), linalg::identity(4));
        let square = alg.creation(0).unwrap().power(4).unwrap();
        assert_eq!(
            square.represent(&spec),
            Err(Error::CutoffTooSmall { mode: 0, required: 4 })
        );
    }

    #[test]
    fn wick_symbol_ordering_ambiguity() {
        let b = bose(1);
        let a = b.annihilation(0).unwrap();
        let ad = b.creation(0).unwrap();
        let sym = a.product(&ad).unwrap().wick_symbol();
        let naive = a.wick_symbol().product(&ad.wick_symbol()).unwrap();
        assert_ne!(sym, naive);
        assert_eq!(sym.terms().len(), 2);
    }

    #[test]
    fn text_round_trip() {
        let alg = NormalOrderedPolynomial::<Complex64>::bose(3, real(1.0));
        let p = NormalOrderedPolynomial::parse(Statistics::Bose, 3, real(1.0), "(1.5-0.5i) a*[1]^2 a[3] + 2").unwrap();
        assert_eq!(p.to_text(), "2 + (1.5-0.5i) a*[1]^2 a[3]");
        let back = NormalOrderedPolynomial::parse(Statistics::Bose, 3, real(1.0), &p.to_text()).unwrap();
        assert_eq!(back, p);
        let q = NormalOrderedPolynomial::parse(Statistics::Bose, 3, real(1.0), "a[1] a*[1] - 1").unwrap();
        assert_eq!(q, alg.creation(0).unwrap().product(&alg.annihilation(0).unwrap()).unwrap());
        assert!(NormalOrderedPolynomial::parse(Statistics::Bose, 3, real(1.0), "a[4]").is_err());
        let f = NormalOrderedPolynomial::parse(Statistics::Fermi, 2, real(1.0), "a[2] a[1]").unwrap();
        assert_eq!(f.to_text(), "-1 a[1] a[2]");
    }

    #[test]
    fn degree_cap_is_an_error() {
        let b = bose(1).with_cap(3);
        let ad = b.creation(0).unwrap();
        assert!(matches!(ad.power(4), Err(Error::DegreeCap { degree: 4, cap: 3 })));
    }

    #[test]
    fn heisenberg_commutator() {
        let hbar = exact_ratio(1, 3);
        let b = NormalOrderedPolynomial::bose(2, hbar.clone());
        let eps = [exact_ratio(5, 2), exact_complex(-1, 0)];
        let h = number_hamiltonian(&b, &eps).unwrap();
        for k in 0..2 {
            let a = b.annihilation(k).unwrap();
            let lhs = h.commutator(&a).unwrap();
            assert_eq!(lhs, a.scale(&(-eps[k].clone() * hbar.clone())));
        }
    }

    #[test]
    fn weyl_relation_small_displacement() {
        let spec = FockSpec::bose(&[60]).unwrap();
        let sigma = SigmaForm::canonical(1);
        let r = weyl_exponential_check(&sigma, &[0.9, 0.0], &[0.0, -0.8], &spec, 1e-8).unwrap();
        assert!(r.defect <= 1e-8, "{r:?}");
        let zero = weyl_exponential_check(&sigma, &[0.0, 0.0], &[0.0, 0.0], &spec, 1e-8).unwrap();
        assert!(zero.defect < 1e-14);
        let small = FockSpec::bose(&[6]).unwrap();
        assert!(matches!(
            weyl_exponential_check(&sigma, &[1.0, 0.0], &[0.0, 1.0], &small, 1e-8),
            Err(Error::Tolerance { .. })
        ));
    }

    #[test]
    fn generators_satisfy_sigma() {
        let spec = FockSpec::bose_with_hbar(&[8], 0.3).unwrap();
        let sigma = SigmaForm::scaled(&[2.0]).unwrap();
        let u = weyl_generators(&sigma, &spec).unwrap();
        let c = linalg::commutator(&u[0], &u[1]);
        for col in spec.safe_indices(1) {
            assert!((c[(col, col)] - I * 0.3 * 2.0).norm() < 1e-12);
        }
    }

    fn rng_poly(seed: u64, alg: &NormalOrderedPolynomial<Q>, deg: usize) -> NormalOrderedPolynomial<Q> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        alg.random(&mut rng, deg, 4).with_cap(3 * deg)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn associativity(seed in 0u64..10_000, fermionic in any::<bool>()) {
            let alg = if fermionic { fermi(3) } else { bose(2) };
            let a = rng_poly(seed, &alg, 3);
            let b = rng_poly(seed + 1, &alg, 3);
            let c = rng_poly(seed + 2, &alg, 3);
            prop_assert_eq!(a.product(&b).unwrap().product(&c).unwrap(), a.product(&b.product(&c).unwrap()).unwrap());
        }

        #[test]
        fn closed_form_matches_rewriting(seed in 0u64..10_000) {
            let alg = bose(2);
            let a = rng_poly(seed, &alg, 3);
            let b = rng_poly(seed + 7, &alg, 3);
            prop_assert_eq!(a.product(&b).unwrap(), a.product_by_rewriting(&b).unwrap());
        }

        #[test]
        fn involution_reverses_products(seed in 0u64..10_000, fermionic in any::<bool>()) {
            let alg = if fermionic { fermi(3) } else { bose(2) };
            let a = rng_poly(seed, &alg, 3);
            let b = rng_poly(seed + 3, &alg, 3);
            prop_assert_eq!(a.product(&b).unwrap().involution(), b.involution().product(&a.involution()).unwrap());
            prop_assert_eq!(a.involution().involution(), a.clone());
            prop_assert_eq!(a.involution().wick_symbol(), a.wick_symbol().conjugate());
        }

        #[test]
        fn leibniz(seed in 0u64..10_000, fermionic in any::<bool>()) {
            let alg = if fermionic { fermi(2) } else { bose(2) };
            let h = rng_poly(seed, &alg, 2);
            let a = rng_poly(seed + 1, &alg, 2);
            let b = rng_poly(seed + 2, &alg, 2);
            let lhs = h.commutator(&a.product(&b).unwrap()).unwrap();
            let rhs = h.commutator(&a).unwrap().product(&b).unwrap()
                .add(&a.product(&h.commutator(&b).unwrap()).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn represent_is_star_homomorphism(seed in 0u64..10_000, fermionic in any::<bool>()) {
            let (alg, spec) = if fermionic {
                (NormalOrderedPolynomial::<Complex64>::fermi(2), FockSpec::fermi(2).unwrap())
            } else {
                (NormalOrderedPolynomial::<Complex64>::bose(2, real(1.0)), FockSpec::bose(&[8, 8]).unwrap())
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = alg.random(&mut rng, 3, 4);
            let b = alg.random(&mut rng, 3, 4);
            prop_assert!(homomorphism_defect(&a, &b, &spec).unwrap() < 1e-10);
            let star = a.involution().represent(&spec).unwrap();
            prop_assert!(linalg::max_abs(&(star - a.represent(&spec).unwrap().adjoint())) < 1e-12);
        }

        #[test]
        fn unit_law(seed in 0u64..10_000) {
            let alg = bose(3);
            let a = rng_poly(seed, &alg, 3);
            prop_assert_eq!(a.product(&a.unit()).unwrap(), a.clone());
            prop_assert_eq!(a.unit().product(&a).unwrap(), a);
        }
    }
}
