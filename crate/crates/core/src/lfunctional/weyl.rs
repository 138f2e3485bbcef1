//! Characteristic function `χ(ξ) = Tr K W(ξ)` of the Harper Hamiltonian
//! `H = cos q + cos p` on a truncated integer lattice, and the gap between
//! its quantum and classical flows as `ħ → 0`.
//!
//! With `W(a) W(b) = e^{−iħ a∧b/2} W(a+b)` and `H = ½ Σ_{a=±e_q,±e_p} W(a)`,
//! `dχ(ξ)/dt = Σ_a ħ⁻¹ sin(ħ a∧ξ / 2) χ(ξ + a)`. The classical flow keeps
//! the first term of the sine, `(a∧ξ)/2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, real, CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarperLattice {
    /// Sites `ξ ∈ Z²` with `|ξ_q|, |ξ_p| ≤ radius`.
    pub radius: i32,
}

impl HarperLattice {
    pub fn new(radius: i32) -> Result<Self> {
        if !(1..=30).contains(&radius) {
            return Err(Error::Invalid("lattice radius must lie in 1..=30".into()));
        }
        Ok(HarperLattice { radius })
    }

    fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn index(&self, q: i32, p: i32) -> Option<usize> {
        let r = self.radius;
        if q.abs() > r || p.abs() > r {
            return None;
        }
        Some((q + r) as usize * self.side() + (p + r) as usize)
    }

    pub fn site(&self, i: usize) -> (i32, i32) {
        let s = self.side();
        ((i / s) as i32 - self.radius, (i % s) as i32 - self.radius)
    }

    /// Generator of the flow; `None` gives the classical limit.
    pub fn generator(&self, hbar: Option<f64>) -> CMatrix {
        let n = self.len();
        let mut g = CMatrix::zeros(n, n);
        for i in 0..n {
            let (xq, xp) = self.site(i);
            for (aq, ap) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let Some(j) = self.index(xq + aq, xp + ap) else {
                    continue;
                };
                let wedge = (aq * xp - ap * xq) as f64;
                let k = match hbar {
                    Some(h) => (h * wedge / 2.0).sin() / h,
                    None => wedge / 2.0,
                };
                g[(i, j)] += real(k);
            }
        }
        g
    }

    /// Gaussian initial data `exp(−σ²|ξ|²/2 + i ξ·x₀)`.
    pub fn gaussian(&self, sigma: f64, centre: (f64, f64)) -> CVector {
        CVector::from_fn(self.len(), |i, _| {
            let (q, p) = self.site(i);
            let (q, p) = (q as f64, p as f64);
            c(0.0, q * centre.0 + p * centre.1).exp() * (-sigma * sigma * (q * q + p * p) / 2.0).exp()
        })
    }

    pub fn evolve(&self, hbar: Option<f64>, chi0: &CVector, t: f64) -> Result<CVector> {
        if chi0.len() != self.len() {
            return Err(Error::Dimension("initial data does not match the lattice".into()));
        }
        Ok(linalg::expm(&(self.generator(hbar) * real(t)))? * chi0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub hbar: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Log-log slope of the gap against `ħ`.
    pub order: f64,
}

/// Largest pointwise gap between the quantum and classical characteristic
/// functions after time `t`, for each `ħ`.
pub fn hbar_sweep(hbars: &[f64], t: f64) -> Result<SweepReport> {
    if hbars.len() < 2 || hbars.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::Invalid("need at least two positive ħ values".into()));
    }
    let lattice = HarperLattice::new(10)?;
    let chi0 = lattice.gaussian(1.0, (0.4, -0.3));
    let classical = lattice.evolve(None, &chi0, t)?;
    let mut rows = Vec::with_capacity(hbars.len());
    for &h in hbars {
        let quantum = lattice.evolve(Some(h), &chi0, t)?;
        let gap = (&quantum - &classical).iter().map(|z| z.norm()).fold(0.0, f64::max);
        rows.push(SweepRow { hbar: h, gap });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.hbar).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    Ok(SweepReport {
        order: linalg::loglog_slope(&xs, &ys),
        rows,
    })
}
