//! Coefficient rings for the symbolic algebra kernels.
//!
//! The Weyl/Clifford and Grassmann kernels are generic over the coefficient
//! type so the same code runs with `f64` complex numbers for numerics and with
//! exact rationals when identities must hold bit-for-bit.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

/// A commutative ring with unit, closed under division by non-zero elements.
pub trait Ring: Clone + Debug + PartialEq + Num + Neg<Output = Self> + Send + Sync + 'static {}

impl<T> Ring for T where T: Clone + Debug + PartialEq + Num + Neg<Output = T> + Send + Sync + 'static {}

/// Coefficients of algebra elements: a ring with a conjugation and a lossy
/// projection to `Complex64` for matrix representations.
pub trait Coeff: Ring {
    /// True for rings where arithmetic is exact and equality is meaningful.
    const EXACT: bool;

    fn conj(&self) -> Self;
    fn to_c64(&self) -> Complex64;
    fn from_i64(n: i64) -> Self;

    /// Magnitude proxy used only for pivot selection.
    fn pivot_weight(&self) -> f64 {
        self.to_c64().norm()
    }

    fn powi(&self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }

    /// Text form used by the polynomial printers; must round-trip through
    /// [`Coeff::parse_text`].
    fn to_text(&self) -> String;
    fn parse_text(s: &str) -> Option<Self>;

    /// Compact real-first rendering: `2`, `-0.5`, or `(1+2i)` when complex.
    fn to_plain(&self) -> String {
        self.to_text()
    }
}

impl Coeff for f64 {
    const EXACT: bool = false;

    fn conj(&self) -> Self {
        *self
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(*self, 0.0)
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn to_text(&self) -> String {
        format!("{self}")
    }
    fn parse_text(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

impl Coeff for BigRational {
    const EXACT: bool = true;

    fn conj(&self) -> Self {
        self.clone()
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(self.to_f64().unwrap_or(f64::NAN), 0.0)
    }
    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn pivot_weight(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            1.0
        }
    }
    fn to_text(&self) -> String {
        format!("{self}")
    }
    fn parse_text(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

impl Coeff for Complex64 {
    const EXACT: bool = false;

    fn conj(&self) -> Self {
        Complex::conj(self)
    }
    fn to_c64(&self) -> Complex64 {
        *self
    }
    fn from_i64(n: i64) -> Self {
        Complex64::new(n as f64, 0.0)
    }
    fn to_text(&self) -> String {
        complex_text(&self.re.to_text(), &self.im.to_text(), self.im.is_sign_negative())
    }
    fn parse_text(s: &str) -> Option<Self> {
        let (re, im) = split_complex(s)?;
        Some(Complex64::new(f64::parse_text(&re)?, f64::parse_text(&im)?))
    }
    fn to_plain(&self) -> String {
        if self.im == 0.0 {
            self.re.to_text()
        } else {
            self.to_text()
        }
    }
}

impl Coeff for Complex<BigRational> {
    const EXACT: bool = true;

    fn conj(&self) -> Self {
        Complex::conj(self)
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }
    fn from_i64(n: i64) -> Self {
        Complex::new(BigRational::from_i64(n), BigRational::zero())
    }
    fn pivot_weight(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            1.0
        }
    }
    fn to_text(&self) -> String {
        complex_text(&self.re.to_text(), &self.im.to_text(), self.im.is_negative())
    }
    fn parse_text(s: &str) -> Option<Self> {
        let (re, im) = split_complex(s)?;
        Some(Complex::new(
            BigRational::parse_text(&re)?,
            BigRational::parse_text(&im)?,
        ))
    }
    fn to_plain(&self) -> String {
        if self.im.is_zero() {
            self.re.to_text()
        } else {
            self.to_text()
        }
    }
}

fn complex_text(re: &str, im: &str, im_negative: bool) -> String {
    if im_negative {
        format!("({re}{im}i)")
    } else {
        format!("({re}+{im}i)")
    }
}

/// Splits `(re±imi)` into its real and imaginary parts. A bare real number
/// is accepted as well, as is a bare imaginary `2i`.
fn split_complex(s: &str) -> Option<(String, String)> {
    let s = s.trim();
    let inner = s
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .unwrap_or(s)
        .trim();
    let Some(body) = inner.strip_suffix('i') else {
        return Some((inner.to_string(), "0".to_string()));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => {
            let re = &body[..k];
            let im = &body[k..];
            let im = im.strip_prefix('+').unwrap_or(im);
            let im = if im == "-" { "-1" } else if im.is_empty() { "1" } else { im };
            Some((re.to_string(), im.to_string()))
        }
        None => {
            let im = if body.is_empty() { "1" } else if body == "-" { "-1" } else { body };
            Some(("0".to_string(), im.to_string()))
        }
    }
}

/// Exact rational conversion of a finite `f64`.
pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

pub fn exact_complex(re: i64, im: i64) -> Complex<BigRational> {
    Complex::new(BigRational::from_i64(re), BigRational::from_i64(im))
}

pub fn exact_ratio(num: i64, den: i64) -> Complex<BigRational> {
    Complex::new(
        BigRational::new(BigInt::from(num), BigInt::from(den)),
        BigRational::zero(),
    )
}

/// `n!` as a coefficient.
pub fn factorial<C: Coeff>(n: u32) -> C {
    (1..=n as i64).fold(C::one(), |acc, k| acc * C::from_i64(k))
}

pub fn binomial<C: Coeff>(n: u32, k: u32) -> C {
    if k > n {
        return C::zero();
    }
    let mut acc = C::one();
    for j in 0..k as i64 {
        acc = acc * C::from_i64(n as i64 - j) / C::from_i64(j + 1);
    }
    acc
}

pub(crate) fn sign<C: Coeff>(negative: bool) -> C {
    if negative {
        -C::one()
    } else {
        C::one()
    }
}
