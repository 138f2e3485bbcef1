//! Polynomials in commuting `x_1 … x_n` with coefficients in `Λ_n`
//! (anticommuting `ξ_1 … ξ_n`).

use std::collections::BTreeMap;

use rand::Rng;

use super::{full_mask, imaginary, mask_product_sign};
use crate::error::{Error, Result};
use crate::scalar::{sign, Coeff};

#[derive(Debug, Clone, PartialEq)]
pub struct MixedElement<C: Coeff> {
    n: usize,
    cap: u32,
    terms: BTreeMap<(Vec<u32>, u64), C>,
}

impl<C: Coeff> MixedElement<C> {
    pub fn zero(n: usize, cap: u32) -> Self {
        MixedElement {
            n,
            cap,
            terms: BTreeMap::new(),
        }
    }

    pub fn term(n: usize, cap: u32, exponents: Vec<u32>, mask: u64, c: C) -> Result<Self> {
        if exponents.len() != n || mask & !full_mask(n) != 0 {
            return Err(Error::Dimension("term does not fit the algebra".into()));
        }
        let degree: u32 = exponents.iter().sum();
        if degree > cap {
            return Err(Error::DegreeCap {
                degree: degree as usize,
                cap: cap as usize,
            });
        }
        let mut x = Self::zero(n, cap);
        x.insert(exponents, mask, c);
        Ok(x)
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        self.cap = cap;
        self
    }

    fn insert(&mut self, e: Vec<u32>, mask: u64, c: C) {
        if c.is_zero() {
            return;
        }
        let key = (e, mask);
        let v = self.terms.entry(key.clone()).or_insert_with(C::zero);
        *v = v.clone() + c;
        if v.is_zero() {
            self.terms.remove(&key);
        }
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

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Mismatch("different generator counts".into()));
        }
        let mut out = self.clone();
        for ((e, m), c) in &other.terms {
            out.insert(e.clone(), *m, c.clone());
        }
        Ok(out)
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Mismatch("different generator counts".into()));
        }
        let mut out = Self::zero(self.n, self.cap.max(other.cap));
        for ((ea, ma), ca) in &self.terms {
            for ((eb, mb), cb) in &other.terms {
                let Some(neg) = mask_product_sign(*ma, *mb) else {
                    continue;
                };
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                let degree: u32 = e.iter().sum();
                if degree > out.cap {
                    return Err(Error::DegreeCap {
                        degree: degree as usize,
                        cap: out.cap as usize,
                    });
                }
                out.insert(e, ma | mb, sign::<C>(neg) * ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    /// `d = Σ_i ξ_i ∂/∂x_i`.
    pub fn d(&self) -> Self {
        let mut out = Self::zero(self.n, self.cap);
        for ((e, m), c) in &self.terms {
            for i in 0..self.n {
                let bit = 1u64 << i;
                if e[i] == 0 || m & bit != 0 {
                    continue;
                }
                let mut e2 = e.clone();
                e2[i] -= 1;
                let below = (m & (bit - 1)).count_ones();
                let coef = c.clone() * C::from_i64(e[i] as i64) * sign::<C>(below % 2 == 1);
                out.insert(e2, m | bit, coef);
            }
        }
        out
    }

    /// `Δ = Σ_i ∂/∂x_i ∂/∂ξ_i` with left Grassmann derivatives.
    pub fn delta(&self) -> Self {
        let mut out = Self::zero(self.n, self.cap);
        for ((e, m), c) in &self.terms {
            for i in 0..self.n {
                let bit = 1u64 << i;
                if e[i] == 0 || m & bit == 0 {
                    continue;
                }
                let mut e2 = e.clone();
                e2[i] -= 1;
                let below = (m & (bit - 1)).count_ones();
                let coef = c.clone() * C::from_i64(e[i] as i64) * sign::<C>(below % 2 == 1);
                out.insert(e2, m & !bit, coef);
            }
        }
        out
    }

    pub fn random(n: usize, cap: u32, rng: &mut impl Rng, n_terms: usize) -> Self {
        let mut x = Self::zero(n, cap);
        for _ in 0..n_terms {
            let mut e = vec![0u32; n];
            let degree = rng.gen_range(0..=cap);
            for _ in 0..degree {
                e[rng.gen_range(0..n)] += 1;
            }
            let mask = rng.gen::<u64>() & full_mask(n);
            let c = C::from_i64(rng.gen_range(-5..=5)) + C::from_i64(rng.gen_range(-5..=5)) * imaginary::<C>();
            x.insert(e, mask, c);
        }
        x
    }
}
