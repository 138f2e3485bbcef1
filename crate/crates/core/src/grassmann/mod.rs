//! Grassmann algebra `Λ_n` with generators `ε^1 … ε^n`.
//!
//! Elements are maps from generator bitmasks to coefficients; a mask stands
//! for the product of its generators in increasing index order.

mod mixed;
mod parse;

pub use mixed::MixedElement;
pub use parse::{parse_expression, parse_expression_with};

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{factorial, sign, Coeff};

pub const MAX_GENERATORS: usize = 63;

#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannElement<C: Coeff> {
    n: usize,
    terms: BTreeMap<u64, C>,
}

/// Sign of `ε^x ε^y` brought to increasing order; `None` if they overlap.
pub fn mask_product_sign(x: u64, y: u64) -> Option<bool> {
    if x & y != 0 {
        return None;
    }
    let mut crossings = 0u32;
    let mut rest = y;
    while rest != 0 {
        let j = rest.trailing_zeros();
        crossings += (x >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    Some(crossings % 2 == 1)
}

fn mask_indices(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

impl<C: Coeff> GrassmannElement<C> {
    pub fn zero(n: usize) -> Result<Self> {
        if n > MAX_GENERATORS {
            return Err(Error::Invalid(format!("at most {MAX_GENERATORS} generators")));
        }
        Ok(GrassmannElement {
            n,
            terms: BTreeMap::new(),
        })
    }

    pub fn scalar(n: usize, c: C) -> Result<Self> {
        let mut x = Self::zero(n)?;
        x.insert(0, c);
        Ok(x)
    }

    pub fn one(n: usize) -> Result<Self> {
        Self::scalar(n, C::one())
    }

    /// The generator `ε^{i+1}` (0-based `i`).
    pub fn generator(n: usize, i: usize) -> Result<Self> {
        Self::monomial(n, 1 << i.min(63), C::one()).and_then(|x| {
            if i < n {
                Ok(x)
            } else {
                Err(Error::ModeOutOfRange { index: i, modes: n })
            }
        })
    }

    pub fn monomial(n: usize, mask: u64, c: C) -> Result<Self> {
        let mut x = Self::zero(n)?;
        if n < 64 && mask >> n != 0 {
            return Err(Error::ModeOutOfRange {
                index: 63 - mask.leading_zeros() as usize,
                modes: n,
            });
        }
        x.insert(mask, c);
        Ok(x)
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (u64, C)>) -> Result<Self> {
        let mut x = Self::zero(n)?;
        for (m, c) in terms {
            x = x.add(&Self::monomial(n, m, c)?)?;
        }
        Ok(x)
    }

    fn insert(&mut self, mask: u64, c: C) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(mask).or_insert_with(C::zero);
        *e = e.clone() + c;
        if e.is_zero() {
            self.terms.remove(&mask);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<u64, C> {
        &self.terms
    }

    pub fn coefficient(&self, mask: u64) -> C {
        self.terms.get(&mask).cloned().unwrap_or_else(C::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Scalar part.
    pub fn body(&self) -> C {
        self.coefficient(0)
    }

    pub fn is_even(&self) -> bool {
        self.terms.keys().all(|m| m.count_ones() % 2 == 0)
    }

    pub fn is_odd(&self) -> bool {
        self.terms.keys().all(|m| m.count_ones() % 2 == 1)
    }

    /// `Some(parity)` for homogeneous elements (zero counts as even).
    pub fn parity(&self) -> Option<u32> {
        if self.is_even() {
            Some(0)
        } else if self.is_odd() {
            Some(1)
        } else {
            None
        }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Mismatch(format!("Λ_{} vs Λ_{}", self.n, other.n)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert(*m, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-C::one()))
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = GrassmannElement {
            n: self.n,
            terms: BTreeMap::new(),
        };
        for (m, v) in &self.terms {
            out.insert(*m, v.clone() * c.clone());
        }
        out
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = GrassmannElement {
            n: self.n,
            terms: BTreeMap::new(),
        };
        for (x, a) in &self.terms {
            for (y, b) in &other.terms {
                if let Some(neg) = mask_product_sign(*x, *y) {
                    out.insert(x | y, sign::<C>(neg) * a.clone() * b.clone());
                }
            }
        }
        Ok(out)
    }

    pub fn power(&self, k: u32) -> Result<Self> {
        let mut acc = Self::one(self.n)?;
        for _ in 0..k {
            acc = acc.multiply(self)?;
        }
        Ok(acc)
    }

    /// Left derivative `∂/∂ε^{i+1}` (0-based `i`).
    pub fn left_derivative(&self, i: usize) -> Result<Self> {
        if i >= self.n {
            return Err(Error::ModeOutOfRange {
                index: i,
                modes: self.n,
            });
        }
        let bit = 1u64 << i;
        let mut out = GrassmannElement {
            n: self.n,
            terms: BTreeMap::new(),
        };
        for (m, c) in &self.terms {
            if m & bit != 0 {
                let below = (m & (bit - 1)).count_ones();
                out.insert(m & !bit, sign::<C>(below % 2 == 1) * c.clone());
            }
        }
        Ok(out)
    }

    /// Coefficient of `ε^1 … ε^n`.
    pub fn berezin_integral(&self) -> C {
        self.coefficient(full_mask(self.n))
    }

    /// `f(a + ν) = Σ_l f^{(l)}(a) ν^l / l!` with `a` the body of `ω` and
    /// `derivs[l] = f^{(l)}(a)`.
    pub fn compose_even(&self, derivs: &[C]) -> Result<Self> {
        if !self.is_even() {
            return Err(Error::OddArgument);
        }
        let mut nu = self.clone();
        nu.terms.remove(&0);
        let mut powers = vec![Self::one(self.n)?];
        loop {
            let next = powers.last().expect("non-empty").multiply(&nu)?;
            if next.is_zero() {
                break;
            }
            powers.push(next);
        }
        if derivs.len() < powers.len() {
            return Err(Error::InsufficientDerivatives {
                required: powers.len(),
                supplied: derivs.len(),
            });
        }
        let mut out = Self::zero(self.n)?;
        for (l, p) in powers.iter().enumerate() {
            let coef = derivs[l].clone() / factorial::<C>(l as u32);
            out = out.add(&p.scale(&coef))?;
        }
        Ok(out)
    }

    /// `exp(ω)` for even `ω` with an exactly representable exponential of the body.
    pub fn exp_nilpotent(&self) -> Result<Self> {
        if !self.body().is_zero() {
            return Err(Error::Invalid("exp_nilpotent needs a nilpotent argument".into()));
        }
        self.compose_even(&vec![C::one(); self.n / 2 + 1])
    }

    /// Substitutes `ε^i ↦ Σ_j A_ij ε^j` for an invertible `A`.
    pub fn linear_change_of_variables(&self, a: &[Vec<C>]) -> Result<Self> {
        check_square(a, self.n)?;
        if det(a).pivot_weight() <= singular_threshold(a) {
            return Err(Error::Singular);
        }
        let forms: Vec<Self> = (0..self.n)
            .map(|i| {
                Self::from_terms(
                    self.n,
                    (0..self.n).map(|j| (1u64 << j, a[i][j].clone())),
                )
            })
            .collect::<Result<_>>()?;
        let mut out = Self::zero(self.n)?;
        for (m, c) in &self.terms {
            let mut prod = Self::scalar(self.n, c.clone())?;
            for i in mask_indices(*m) {
                prod = prod.multiply(&forms[i])?;
            }
            out = out.add(&prod)?;
        }
        Ok(out)
    }

    /// `ω = ½ Σ a_ij ε^i ε^j`.
    pub fn quadratic_form(a: &[Vec<C>]) -> Result<Self> {
        let n = a.len();
        check_square(a, n)?;
        let half = C::one() / C::from_i64(2);
        let mut out = Self::zero(n)?;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let gi = Self::generator(n, i)?;
                let gj = Self::generator(n, j)?;
                out = out.add(&gi.multiply(&gj)?.scale(&(a[i][j].clone() * half.clone())))?;
            }
        }
        Ok(out)
    }

    pub fn random(n: usize, rng: &mut impl Rng, n_terms: usize, parity: Option<u32>) -> Result<Self> {
        let mut x = Self::zero(n)?;
        for _ in 0..n_terms {
            let mut m: u64 = rng.gen::<u64>() & full_mask(n);
            if let Some(p) = parity {
                if m.count_ones() % 2 != p {
                    m ^= 1;
                }
                if n == 0 {
                    continue;
                }
            }
            let c = C::from_i64(rng.gen_range(-4..=4)) + C::from_i64(rng.gen_range(-4..=4)) * imaginary::<C>();
            x.insert(m, c);
        }
        Ok(x)
    }

    /// Terms ordered by degree, then by generator sequence.
    pub fn ordered_terms(&self) -> Vec<(u64, &C)> {
        let mut v: Vec<(u64, &C)> = self.terms.iter().map(|(m, c)| (*m, c)).collect();
        v.sort_by_key(|(m, _)| (m.count_ones(), mask_indices(*m)));
        v
    }

    /// Renders as e.g. `1 - ε[1]ε[2]ε[3]ε[4]` ([`Style::Symbolic`]) or
    /// `1 - e1 e2 e3 e4` ([`Style::Plain`]).
    pub fn format(&self, style: Style) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let mut out = String::new();
        for (idx, (mask, c)) in self.ordered_terms().into_iter().enumerate() {
            let text = c.to_plain();
            let (negative, magnitude) = match text.strip_prefix('-') {
                Some(rest) if !text.starts_with('(') => (true, rest.to_string()),
                _ => (false, text),
            };
            if idx == 0 {
                if negative {
                    out.push('-');
                }
            } else {
                out.push_str(if negative { " - " } else { " + " });
            }
            let gens: Vec<String> = mask_indices(mask)
                .into_iter()
                .map(|i| match style {
                    Style::Symbolic => format!("ε[{}]", i + 1),
                    Style::Plain => format!("e{}", i + 1),
                })
                .collect();
            let sep = match style {
                Style::Symbolic => "",
                Style::Plain => " ",
            };
            if mask == 0 {
                out.push_str(&magnitude);
            } else {
                if magnitude != "1" {
                    out.push_str(&magnitude);
                    out.push(' ');
                }
                out.push_str(&gens.join(sep));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Symbolic,
    Plain,
}

impl<C: Coeff> fmt::Display for GrassmannElement<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format(Style::Symbolic))
    }
}

pub(crate) fn imaginary<C: Coeff>() -> C {
    C::parse_text("i").expect("coefficient ring parses i")
}

pub fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn check_square<C>(a: &[Vec<C>], n: usize) -> Result<()> {
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("expected a {n}x{n} matrix")));
    }
    Ok(())
}

fn max_weight<C: Coeff>(a: &[Vec<C>]) -> f64 {
    a.iter().flatten().map(Coeff::pivot_weight).fold(0.0, f64::max)
}

fn singular_threshold<C: Coeff>(a: &[Vec<C>]) -> f64 {
    if C::EXACT {
        0.0
    } else {
        1e-13 * max_weight(a).max(f64::MIN_POSITIVE).powi(a.len() as i32)
    }
}

/// Determinant by Gaussian elimination with pivoting on `pivot_weight`.
pub fn det<C: Coeff>(a: &[Vec<C>]) -> C {
    let n = a.len();
    let mut m: Vec<Vec<C>> = a.to_vec();
    let mut acc = C::one();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].pivot_weight().total_cmp(&m[j][k].pivot_weight()))
            .expect("non-empty range");
        if m[p][k].is_zero() {
            return C::zero();
        }
        if p != k {
            m.swap(p, k);
            acc = -acc;
        }
        let pivot = m[k][k].clone();
        acc = acc * pivot.clone();
        for i in k + 1..n {
            let f = m[i][k].clone() / pivot.clone();
            if f.is_zero() {
                continue;
            }
            for j in k..n {
                let v = m[k][j].clone() * f.clone();
                m[i][j] = m[i][j].clone() - v;
            }
        }
    }
    acc
}

/// Rejects matrices with `a + aᵀ` above rounding level.
pub fn check_antisymmetric<C: Coeff>(a: &[Vec<C>]) -> Result<()> {
    let n = a.len();
    check_square(a, n)?;
    let scale = max_weight(a);
    for i in 0..n {
        for j in 0..=i {
            let w = (a[i][j].clone() + a[j][i].clone()).pivot_weight();
            let bad = if C::EXACT { w > 0.0 } else { w > 1e-13 * scale.max(f64::MIN_POSITIVE) };
            if bad {
                return Err(Error::NotAntisymmetric);
            }
        }
    }
    Ok(())
}

/// Pfaffian by skew-symmetric elimination. For odd size it is zero.
pub fn pfaffian<C: Coeff>(a: &[Vec<C>]) -> Result<C> {
    check_antisymmetric(a)?;
    let n = a.len();
    if n % 2 == 1 {
        return Ok(C::zero());
    }
    let mut m: Vec<Vec<C>> = a.to_vec();
    let mut pf = C::one();
    let mut k = 0;
    while k + 1 < n {
        let p = (k + 1..n)
            .max_by(|&i, &j| m[k][i].pivot_weight().total_cmp(&m[k][j].pivot_weight()))
            .expect("non-empty range");
        if p != k + 1 {
            m.swap(p, k + 1);
            for row in m.iter_mut() {
                row.swap(p, k + 1);
            }
            pf = -pf;
        }
        let pivot = m[k][k + 1].clone();
        if pivot.is_zero() {
            return Ok(C::zero());
        }
        pf = pf * pivot.clone();
        let c: Vec<C> = (0..n)
            .map(|i| if i >= k + 2 { m[k][i].clone() / pivot.clone() } else { C::zero() })
            .collect();
        for i in k + 2..n {
            for j in k + 2..n {
                let v = m[i][j].clone() - c[i].clone() * m[k + 1][j].clone() + c[j].clone() * m[k + 1][i].clone();
                m[i][j] = v;
            }
        }
        k += 2;
    }
    Ok(pf)
}

/// `∫ exp(½ Σ a_ij ε^i ε^j) dⁿε`, the Pfaffian of `a` (zero for odd `n`).
pub fn gaussian_integral<C: Coeff>(a: &[Vec<C>]) -> Result<C> {
    pfaffian(a)
}

/// The same integral by expanding the exponential in the algebra; an oracle
/// for small `n`.
pub fn gaussian_integral_by_expansion<C: Coeff>(a: &[Vec<C>]) -> Result<C> {
    check_antisymmetric(a)?;
    let omega = GrassmannElement::quadratic_form(a)?;
    Ok(omega.exp_nilpotent()?.berezin_integral())
}

/// Serialized form: generator count plus `(mask, [re, im])` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrassmannJson {
    pub n: usize,
    pub terms: Vec<(u64, [f64; 2])>,
}

impl From<&GrassmannElement<Complex64>> for GrassmannJson {
    fn from(x: &GrassmannElement<Complex64>) -> Self {
        GrassmannJson {
            n: x.n,
            terms: x.terms.iter().map(|(m, c)| (*m, [c.re, c.im])).collect(),
        }
    }
}

impl TryFrom<&GrassmannJson> for GrassmannElement<Complex64> {
    type Error = Error;
    fn try_from(j: &GrassmannJson) -> Result<Self> {
        GrassmannElement::from_terms(j.n, j.terms.iter().map(|(m, [re, im])| (*m, Complex64::new(*re, *im))))
    }
}

/// Derivatives `f^{(l)}(a)`, `l = 0..count`, of the named elementary function.
pub fn elementary_derivatives(name: &str, a: Complex64, count: usize) -> Result<Vec<Complex64>> {
    let cyc = |v: [Complex64; 4]| (0..count).map(|l| v[l % 4]).collect::<Vec<_>>();
    Ok(match name {
        "exp" => vec![a.exp(); count],
        "cos" => cyc([a.cos(), -a.sin(), -a.cos(), a.sin()]),
        "sin" => cyc([a.sin(), a.cos(), -a.sin(), -a.cos()]),
        "cosh" => (0..count).map(|l| if l % 2 == 0 { a.cosh() } else { a.sinh() }).collect(),
        "sinh" => (0..count).map(|l| if l % 2 == 0 { a.sinh() } else { a.cosh() }).collect(),
        "log" => {
            if a.norm() == 0.0 {
                return Err(Error::Invalid("log of an element with zero body".into()));
            }
            (0..count)
                .map(|l| {
                    if l == 0 {
                        a.ln()
                    } else {
                        let s = if l % 2 == 1 { 1.0 } else { -1.0 };
                        Complex64::new(s * factorial::<f64>(l as u32 - 1), 0.0) / a.powu(l as u32)
                    }
                })
                .collect()
        }
        other => return Err(Error::Parse(format!("unknown function `{other}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{exact_complex, exact_ratio};
    use num_complex::Complex;
    use num_rational::BigRational;
    use num_traits::Zero;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Q = Complex<BigRational>;
    type G = GrassmannElement<Q>;

    fn e(n: usize, i: usize) -> G {
        G::generator(n, i - 1).unwrap()
    }

    fn sum(n: usize, idx: &[usize]) -> G {
        idx.iter().fold(G::zero(n).unwrap(), |acc, &i| acc.add(&e(n, i)).unwrap())
    }

    #[test]
    fn triple_product() {
        let x = sum(4, &[1, 2]).multiply(&sum(4, &[2, 3])).unwrap().multiply(&sum(4, &[3, 4])).unwrap();
        let expect = G::from_terms(4, [0b0111, 0b1011, 0b1101, 0b1110].map(|m| (m, exact_complex(1, 0)))).unwrap();
        assert_eq!(x, expect);
        assert_eq!(x.format(Style::Symbolic), "ε[1]ε[2]ε[3] + ε[1]ε[2]ε[4] + ε[1]ε[3]ε[4] + ε[2]ε[3]ε[4]");
        let four = x.multiply(&sum(4, &[4, 1])).unwrap();
        assert_eq!(four.berezin_integral(), exact_complex(0, 0));
    }

    #[test]
    fn derivative_and_integral_basics() {
        let m = e(3, 1).multiply(&e(3, 2)).unwrap().multiply(&e(3, 3)).unwrap();
        let d = m.left_derivative(1).unwrap();
        assert_eq!(d, e(3, 1).multiply(&e(3, 3)).unwrap().scale(&exact_complex(-1, 0)));
        assert!(G::one(3).unwrap().left_derivative(0).unwrap().is_zero());
        assert_eq!(e(2, 1).multiply(&e(2, 2)).unwrap().berezin_integral(), exact_complex(1, 0));
        assert_eq!(G::one(1).unwrap().berezin_integral(), exact_complex(0, 0));
    }

    #[test]
    fn compose_cos() {
        let w = e(4, 1).multiply(&e(4, 2)).unwrap().add(&e(4, 3).multiply(&e(4, 4)).unwrap()).unwrap();
        // cos at 0: 1, 0, -1
        let c = w.compose_even(&[exact_complex(1, 0), exact_complex(0, 0), exact_complex(-1, 0)]).unwrap();
        assert_eq!(c.format(Style::Plain), "1 - e1 e2 e3 e4");
        assert!(matches!(
            w.compose_even(&[exact_complex(1, 0)]),
            Err(Error::InsufficientDerivatives { required: 3, supplied: 1 })
        ));
        assert_eq!(e(4, 1).compose_even(&[exact_complex(1, 0)]), Err(Error::OddArgument));
    }

    #[test]
    fn exp_factorizes() {
        let l1 = exact_ratio(3, 2);
        let l2 = exact_complex(-2, 1);
        let a = e(4, 1).multiply(&e(4, 2)).unwrap().scale(&l1);
        let b = e(4, 3).multiply(&e(4, 4)).unwrap().scale(&l2);
        let lhs = a.add(&b).unwrap().exp_nilpotent().unwrap();
        let one = G::one(4).unwrap();
        let rhs = one.add(&a).unwrap().multiply(&one.add(&b).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(G::zero(4).unwrap().exp_nilpotent().unwrap(), one);
    }

    fn block(l1: Q, l2: Q) -> Vec<Vec<Q>> {
        let z = exact_complex(0, 0);
        let mut a = vec![vec![z; 4]; 4];
        a[0][1] = l1.clone();
        a[1][0] = -l1;
        a[2][3] = l2.clone();
        a[3][2] = -l2;
        a
    }

    #[test]
    fn gaussian_block_diagonal() {
        let a = block(exact_ratio(2, 3), exact_complex(5, -1));
        assert_eq!(pfaffian(&a).unwrap(), exact_ratio(2, 3) * exact_complex(5, -1));
        assert_eq!(gaussian_integral_by_expansion(&a).unwrap(), pfaffian(&a).unwrap());
        let z: Vec<Vec<Q>> = vec![vec![exact_complex(0, 0); 2]; 2];
        assert_eq!(gaussian_integral(&z).unwrap(), exact_complex(0, 0));
        let odd: Vec<Vec<Q>> = vec![vec![exact_complex(0, 0); 3]; 3];
        assert_eq!(gaussian_integral(&odd).unwrap(), exact_complex(0, 0));
        let mut bad = block(exact_ratio(1, 1), exact_ratio(1, 1));
        bad[0][2] = exact_ratio(1, 1);
        assert_eq!(pfaffian(&bad), Err(Error::NotAntisymmetric));
    }

    #[test]
    fn change_of_variables() {
        let x = G::random(3, &mut ChaCha8Rng::seed_from_u64(3), 6, None).unwrap();
        let id: Vec<Vec<Q>> = (0..3)
            .map(|i| (0..3).map(|j| exact_complex((i == j) as i64, 0)).collect())
            .collect();
        assert_eq!(x.linear_change_of_variables(&id).unwrap(), x);
        let mut d = id.clone();
        d[0][0] = exact_complex(2, 0);
        let top = G::monomial(3, 0b111, exact_complex(1, 0)).unwrap();
        assert_eq!(top.linear_change_of_variables(&d).unwrap().berezin_integral(), exact_complex(2, 0));
        let mut sing = id;
        sing[2] = sing[1].clone();
        assert_eq!(x.linear_change_of_variables(&sing), Err(Error::Singular));
    }

    #[test]
    fn complex_pfaffian_squares_to_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let mut a = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                a[i][j] = z;
                a[j][i] = -z;
            }
        }
        let pf = pfaffian(&a).unwrap();
        let d = det(&a);
        assert!((pf * pf - d).norm() < 1e-12 * d.norm().max(1.0));
        let by_expansion = gaussian_integral_by_expansion(&a).unwrap();
        assert!((by_expansion - pf).norm() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let x = GrassmannElement::<Complex64>::from_terms(3, [(0b101, Complex64::new(1.0, -2.0)), (0, Complex64::new(0.5, 0.0))]).unwrap();
        let j = serde_json::to_string(&GrassmannJson::from(&x)).unwrap();
        assert_eq!(j, r#"{"n":3,"terms":[[0,[0.5,0.0]],[5,[1.0,-2.0]]]}"#);
        let back: GrassmannJson = serde_json::from_str(&j).unwrap();
        assert_eq!(GrassmannElement::try_from(&back).unwrap(), x);
    }

    fn random(seed: u64, n: usize, parity: Option<u32>) -> G {
        G::random(n, &mut ChaCha8Rng::seed_from_u64(seed), 8, parity).unwrap()
    }

    fn random_antisymmetric(seed: u64, n: usize) -> Vec<Vec<Q>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![vec![exact_complex(0, 0); n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let z = exact_complex(rng.gen_range(-3..=3), rng.gen_range(-3..=3));
                a[i][j] = z.clone();
                a[j][i] = -z;
            }
        }
        a
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn associative_and_graded(seed in 0u64..100_000, n in 1usize..11) {
            let (x, y, z) = (random(seed, n, None), random(seed + 1, n, None), random(seed + 2, n, None));
            prop_assert_eq!(x.multiply(&y).unwrap().multiply(&z).unwrap(), x.multiply(&y.multiply(&z).unwrap()).unwrap());
            let (p, q) = (random(seed + 3, n, Some(1)), random(seed + 4, n, Some(1)));
            prop_assert_eq!(p.multiply(&q).unwrap(), q.multiply(&p).unwrap().scale(&exact_complex(-1, 0)));
            let ev = random(seed + 5, n, Some(0));
            prop_assert_eq!(ev.multiply(&x).unwrap(), x.multiply(&ev).unwrap());
            prop_assert_eq!(x.multiply(&G::one(n).unwrap()).unwrap(), x.clone());
        }

        #[test]
        fn derivative_laws(seed in 0u64..100_000, n in 2usize..9, i in 0usize..8, j in 0usize..8, parity in 0u32..2) {
            let (i, j) = (i % n, j % n);
            let x = random(seed, n, None);
            let dij = x.left_derivative(j).unwrap().left_derivative(i).unwrap();
            let dji = x.left_derivative(i).unwrap().left_derivative(j).unwrap();
            prop_assert_eq!(dij, dji.scale(&exact_complex(-1, 0)));
            prop_assert!(x.left_derivative(i).unwrap().left_derivative(i).unwrap().is_zero());
            let w = random(seed + 1, n, Some(parity));
            let r = random(seed + 2, n, None);
            let s = sign::<Q>(parity == 1);
            let lhs = w.multiply(&r).unwrap().left_derivative(i).unwrap();
            let rhs = w.left_derivative(i).unwrap().multiply(&r).unwrap()
                .add(&w.multiply(&r.left_derivative(i).unwrap()).unwrap().scale(&s)).unwrap();
            prop_assert_eq!(lhs, rhs);
            prop_assert!(x.left_derivative(i).unwrap().berezin_integral().is_zero());
            let by_parts = w.left_derivative(i).unwrap().multiply(&r).unwrap().berezin_integral();
            let other = w.multiply(&r.left_derivative(i).unwrap()).unwrap().berezin_integral();
            prop_assert_eq!(by_parts, -(s * other));
        }

        #[test]
        fn pfaffian_matches_expansion_and_det(seed in 0u64..100_000, half in 1usize..5) {
            let a = random_antisymmetric(seed, 2 * half);
            let pf = pfaffian(&a).unwrap();
            prop_assert_eq!(pf.clone() * pf.clone(), det(&a));
            prop_assert_eq!(gaussian_integral_by_expansion(&a).unwrap(), pf.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let n = 2 * half;
            let t: Vec<Vec<Q>> = (0..n).map(|_| (0..n).map(|_| exact_complex(rng.gen_range(-2..=2), rng.gen_range(-1..=1))).collect()).collect();
            let mut tat = vec![vec![exact_complex(0, 0); n]; n];
            for i in 0..n { for j in 0..n { for k in 0..n { for l in 0..n {
                tat[i][j] = tat[i][j].clone() + t[k][i].clone() * a[k][l].clone() * t[l][j].clone();
            }}}}
            prop_assert_eq!(pfaffian(&tat).unwrap(), det(&t) * pf);
        }
    }
}
