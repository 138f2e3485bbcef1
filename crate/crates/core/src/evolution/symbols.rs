//! Discrete qp symbols on a uniform phase-space grid.
//!
//! The symbol of `A` is `a(q,p) = ⟨p|A|q⟩ / ⟨p|q⟩` with
//! `⟨p|q⟩ = e^{−ipq/ħ} / √(2πħ)`, so momenta stand to the left. The product
//! formula is
//!
//! `(a ⋆ b)(q,p) = (1/n) Σ_{q',p'} a(q',p) b(q,p') e^{i(p'−p)(q'−q)/ħ}`
//!
//! on an `n × n` grid with `Δq Δp = 2πħ/n`. With that pairing the phase is
//! an exact discrete Fourier kernel, so the normalization `1/n` makes the
//! unit law hold to rounding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{real, CMatrix, I};
use num_complex::Complex64;

/// Largest admissible ratio of boundary magnitude to interior peak.
pub const BOUNDARY_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolGrid {
    n: usize,
    hbar: f64,
    dq: f64,
    dp: f64,
}

impl SymbolGrid {
    /// `n` points per axis centred on the origin; `Δp = 2πħ/(n Δq)`.
    pub fn new(n: usize, hbar: f64, dq: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("grid needs at least one point".into()));
        }
        if !(hbar > 0.0 && dq > 0.0 && hbar.is_finite() && dq.is_finite()) {
            return Err(Error::Invalid("ħ and Δq must be positive".into()));
        }
        Ok(SymbolGrid {
            n,
            hbar,
            dq,
            dp: 2.0 * std::f64::consts::PI * hbar / (n as f64 * dq),
        })
    }

    /// Square grid with `Δq = Δp`.
    pub fn balanced(n: usize, hbar: f64) -> Result<Self> {
        Self::new(n, hbar, (2.0 * std::f64::consts::PI * hbar / n as f64).sqrt())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dq(&self) -> f64 {
        self.dq
    }

    pub fn dp(&self) -> f64 {
        self.dp
    }

    pub fn q(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.dq
    }

    pub fn p(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.dp
    }

    /// Uniform quadrature weight per node, normalized as in the product.
    pub fn weight(&self) -> f64 {
        1.0 / self.n as f64
    }
}

/// Values `a(q_j, p_k)` stored at row `j`, column `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    grid: SymbolGrid,
    values: CMatrix,
}

impl Symbol {
    pub fn new(grid: SymbolGrid, values: CMatrix) -> Result<Self> {
        if values.nrows() != grid.n || values.ncols() != grid.n {
            return Err(Error::Dimension(format!(
                "symbol is {}x{}, grid is {}",
                values.nrows(),
                values.ncols(),
                grid.n
            )));
        }
        Ok(Symbol { grid, values })
    }

    pub fn from_fn(grid: SymbolGrid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let values = CMatrix::from_fn(grid.n, grid.n, |j, k| f(grid.q(j), grid.p(k)));
        Symbol { grid, values }
    }

    pub fn constant(grid: SymbolGrid, c: Complex64) -> Self {
        Symbol {
            grid,
            values: CMatrix::from_element(grid.n, grid.n, c),
        }
    }

    pub fn grid(&self) -> &SymbolGrid {
        &self.grid
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        let first = self.values[(0, 0)];
        self.values.iter().all(|&v| v == first)
    }

    /// Largest boundary-ring magnitude relative to the overall peak.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.grid.n;
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let mut edge = 0.0f64;
        for i in 0..n {
            for v in [
                self.values[(0, i)],
                self.values[(n - 1, i)],
                self.values[(i, 0)],
                self.values[(i, n - 1)],
            ] {
                edge = edge.max(v.norm());
            }
        }
        edge / peak
    }

    fn check_boundary(&self) -> Result<()> {
        if self.is_constant() {
            return Ok(());
        }
        let mass = self.boundary_mass();
        if mass.is_nan() || mass >= BOUNDARY_LIMIT {
            return Err(Error::BoundaryMass {
                mass,
                limit: BOUNDARY_LIMIT,
            });
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Symbol) -> f64 {
        (&self.values - &other.values).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Phase kernels `c`, `r` of the general product formula on a grid.
#[derive(Debug, Clone, Copy)]
pub struct SymbolKernel {
    pub grid: SymbolGrid,
    pub c: fn(f64, f64) -> Complex64,
    pub r: fn(f64, f64) -> Complex64,
}

fn minus_i_pq(q: f64, p: f64) -> Complex64 {
    -I * (p * q)
}

impl SymbolKernel {
    /// `c = r = −i p q`.
    pub fn qp(grid: SymbolGrid) -> Self {
        SymbolKernel {
            grid,
            c: minus_i_pq,
            r: minus_i_pq,
        }
    }

    /// Exponent of the product kernel, divided by ħ.
    fn phase(&self, q: f64, p: f64, q2: f64, p2: f64) -> Complex64 {
        ((self.c)(q2, p) + (self.r)(q2, p2).conj() + (self.c)(q, p2) - (self.c)(q, p)) / self.grid.hbar
    }
}

/// Oscillator eigenfunctions `ψ_0 … ψ_{d−1}` at `x`, scaled to `ħ`.
pub fn hermite_functions(x: f64, d: usize, hbar: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(d);
    if d == 0 {
        return out;
    }
    let y = x / hbar.sqrt();
    out.push((std::f64::consts::PI * hbar).powf(-0.25) * (-0.5 * y * y).exp());
    if d > 1 {
        out.push(2f64.sqrt() * y * out[0]);
    }
    for n in 1..d.saturating_sub(1) {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * y * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// Symbol of a matrix given in the oscillator (Fock) basis.
pub fn qp_symbol(a: &CMatrix, grid: &SymbolGrid) -> Result<Symbol> {
    crate::linalg::ensure_square(a, "operator")?;
    crate::linalg::ensure_finite(a)?;
    let (n, d, hbar) = (grid.n, a.nrows(), grid.hbar);
    // rows of psi_q: ψ_m(q_j); rows of psi_p: (−i)^m ψ_m(p_k)
    let mut psi_q = CMatrix::zeros(n, d);
    let mut psi_p = CMatrix::zeros(n, d);
    let phases = [real(1.0), -I, real(-1.0), I];
    for j in 0..n {
        for (m, v) in hermite_functions(grid.q(j), d, hbar).into_iter().enumerate() {
            psi_q[(j, m)] = real(v);
        }
        for (m, v) in hermite_functions(grid.p(j), d, hbar).into_iter().enumerate() {
            psi_p[(j, m)] = phases[m % 4] * v;
        }
    }
    // kernel[(j, k)] = ⟨p_k|A|q_j⟩
    let kernel = &psi_q * a.transpose() * psi_p.transpose();
    let norm = (2.0 * std::f64::consts::PI * hbar).sqrt();
    let values = CMatrix::from_fn(n, n, |j, k| {
        kernel[(j, k)] * (I * (grid.p(k) * grid.q(j) / hbar)).exp() * norm
    });
    Ok(Symbol { grid: *grid, values })
}

fn check_pair(a: &Symbol, b: &Symbol) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Mismatch("symbols live on different grids".into()));
    }
    a.check_boundary()?;
    b.check_boundary()
}

/// Product of qp symbols in `O(n³)` through matrix products.
pub fn qp_star_product(a: &Symbol, b: &Symbol) -> Result<Symbol> {
    check_pair(a, b)?;
    let n = a.grid.n;
    // ω^{ab} with ω = e^{2πi/n}, reduced mod n for accuracy
    let omega = |e: i64| -> Complex64 {
        let r = e.rem_euclid(n as i64) as f64;
        (I * (2.0 * std::f64::consts::PI * r / n as f64)).exp()
    };
    let roots: Vec<Complex64> = (0..n as i64).map(omega).collect();
    let w = |x: usize, y: usize| roots[(x * y) % n];
    let a_t = CMatrix::from_fn(n, n, |j2, k| a.values[(j2, k)] * w(k, j2).conj());
    let b_t = CMatrix::from_fn(n, n, |j, k2| b.values[(j, k2)] * w(k2, j).conj());
    let f = CMatrix::from_fn(n, n, &w);
    let inner = b_t * f * a_t;
    let scale = 1.0 / n as f64;
    let values = CMatrix::from_fn(n, n, |j, k| inner[(j, k)] * w(k, j) * scale);
    Ok(Symbol { grid: a.grid, values })
}

/// Direct quadrature of the product formula for arbitrary kernels, `O(n⁴)`.
pub fn qp_star_product_general(kernel: &SymbolKernel, a: &Symbol, b: &Symbol) -> Result<Symbol> {
    check_pair(a, b)?;
    if a.grid != kernel.grid {
        return Err(Error::Mismatch("kernel grid differs from the symbols".into()));
    }
    let g = kernel.grid;
    let n = g.n;
    let w = g.weight();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|k| {
                    let (q, p) = (g.q(j), g.p(k));
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j2 in 0..n {
                        let av = a.values[(j2, k)];
                        for k2 in 0..n {
                            let e = kernel.phase(q, p, g.q(j2), g.p(k2));
                            acc += av * b.values[(j, k2)] * e.exp();
                        }
                    }
                    acc * w
                })
                .collect()
        })
        .collect();
    let values = CMatrix::from_fn(n, n, |j, k| rows[j][k]);
    Ok(Symbol { grid: g, values })
}
