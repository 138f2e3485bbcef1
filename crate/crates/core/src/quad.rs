//! One-dimensional quadrature: Gauss–Legendre rules and adaptive bisection.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be integrated: a real vector space with a norm.
pub trait QuadValue: Clone {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, other: &Self, w: f64);
    fn dist(&self, other: &Self) -> f64;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        *self += w * other;
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        *self += other * w;
    }
    fn dist(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl<T: QuadValue> QuadValue for Vec<T> {
    fn zero_like(&self) -> Self {
        self.iter().map(QuadValue::zero_like).collect()
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        for (a, b) in self.iter_mut().zip(other) {
            a.add_scaled(b, w);
        }
    }
    fn dist(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| a.dist(b)).fold(0.0, f64::max)
    }
    fn magnitude(&self) -> f64 {
        self.iter().map(QuadValue::magnitude).fold(0.0, f64::max)
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Fixed Gauss–Legendre rule on [a, b].
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Rule { nodes, weights }
    }

    pub fn integrate<T: QuadValue>(&self, a: f64, b: f64, f: &impl Fn(f64) -> T) -> T {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        let first = f(m + h * self.nodes[0]);
        let mut acc = first.zero_like();
        acc.add_scaled(&first, self.weights[0] * h);
        for (x, w) in self.nodes.iter().zip(&self.weights).skip(1) {
            acc.add_scaled(&f(m + h * x), w * h);
        }
        acc
    }
}

/// Panels processed before giving up.
const MAX_PANELS: usize = 1 << 20;

/// Adaptive bisection with a 10-point Gauss rule, comparing each panel with
/// its two halves. The tolerance is absolute on the whole integral and is
/// shared between panels by width; a floor of a few ulps of the integral's
/// magnitude stops refinement below rounding noise.
pub fn adaptive<T: QuadValue>(f: impl Fn(f64) -> T, a: f64, b: f64, tol: f64) -> Result<T> {
    let rule = Rule::new(10);
    let first = rule.integrate(a, b, &f);
    let scale = first.magnitude();
    let mut stack = vec![(a, b, first, 0usize)];
    let mut total: Option<T> = None;
    let mut achieved = 0.0;
    let mut panels = 0usize;
    let width = (b - a).abs().max(f64::MIN_POSITIVE);
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        panels += 1;
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, &f);
        let right = rule.integrate(mid, hi, &f);
        let mut halves = left.clone();
        halves.add_scaled(&right, 1.0);
        let err = halves.dist(&whole);
        let share = (hi - lo).abs() / width;
        let budget = (tol * share).max(64.0 * f64::EPSILON * (halves.magnitude() + scale * share));
        let exhausted = depth >= 40 || panels >= MAX_PANELS;
        if err <= budget || exhausted {
            if err > budget {
                achieved += err;
            }
            match total.as_mut() {
                Some(t) => t.add_scaled(&halves, 1.0),
                None => total = Some(halves),
            }
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    if achieved > tol {
        return Err(Error::Tolerance {
            tol,
            achieved,
            hint: String::from("; integrand not resolved by bisection"),
        });
    }
    Ok(total.expect("at least one panel"))
}
