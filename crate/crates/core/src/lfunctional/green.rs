//! Two-point functions of free thermal modes, computed by the truncated Fock
//! operator oracle, and their spectral analysis.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{self, FockSpec};
use crate::linalg::{c, real, CMatrix, I};
use crate::quad;

/// Largest single-mode truncation the oracle will build.
const MAX_CUTOFF: usize = 4000;
const TAIL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenSample {
    pub tau: f64,
    /// `⟨a†(τ) a(0)⟩`.
    pub lesser: Complex64,
    /// `⟨a(τ) a†(0)⟩`.
    pub greater: Complex64,
}

/// Smallest cutoff whose neglected thermal weight, scaled by the largest
/// dropped matrix element, stays below `1e-15`.
pub fn green_cutoff(n: f64) -> Result<usize> {
    if !(n.is_finite() && n >= 0.0) {
        return Err(Error::Invalid(format!("occupation {n} must be finite and non-negative")));
    }
    let r = n / (n + 1.0);
    let mut cutoff = 1;
    while r.powi(cutoff as i32 + 1) * (cutoff as f64 + 2.0) * (n + 1.0) > TAIL {
        cutoff += 1;
        if cutoff > MAX_CUTOFF {
            return Err(Error::InvalidSpec(format!("occupation {n} needs a cutoff above {MAX_CUTOFF}")));
        }
    }
    Ok(cutoff)
}

/// `G^<` and `G^>` of mode `mode` in the product thermal state with
/// occupations `n_profile` under `H = Σ ε_k a†_k a_k`. Modes other than
/// `mode` factor out of both traces, so the oracle works on that one mode.
pub fn two_point_green(
    n_profile: &[f64],
    eps_profile: &[f64],
    mode: usize,
    hbar: f64,
    taus: &[f64],
) -> Result<Vec<GreenSample>> {
    if n_profile.len() != eps_profile.len() {
        return Err(Error::Dimension("occupation and energy profiles differ in length".into()));
    }
    if mode >= n_profile.len() {
        return Err(Error::ModeOutOfRange {
            index: mode,
            modes: n_profile.len(),
        });
    }
    let (n, eps) = (n_profile[mode], eps_profile[mode]);
    if !eps.is_finite() || taus.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite);
    }
    let cutoff = green_cutoff(n)?;
    let spec = FockSpec::bose_with_hbar(&[cutoff], hbar)?;
    let d = spec.dim();
    let r = n / (n + 1.0);
    let weights: Vec<f64> = (0..d).map(|j| r.powi(j as i32) / (n + 1.0)).collect();
    let up = fock::creation_matrix(&spec, 0)?;
    let down = up.adjoint();
    let energy: Vec<f64> = (0..d).map(|j| eps * hbar * j as f64).collect();
    let heisenberg = |x: &CMatrix, tau: f64| {
        CMatrix::from_fn(d, d, |i, j| x[(i, j)] * (I * (energy[i] - energy[j]) * tau / hbar).exp())
    };
    let trace_rho = |x: &CMatrix, y: &CMatrix| {
        let mut acc = c(0.0, 0.0);
        for (i, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let mut row = c(0.0, 0.0);
            for j in 0..d {
                row += x[(i, j)] * y[(j, i)];
            }
            acc += row * *w;
        }
        acc
    };
    Ok(taus
        .par_iter()
        .map(|&tau| GreenSample {
            tau,
            lesser: trace_rho(&heisenberg(&up, tau), &down),
            greater: trace_rho(&heisenberg(&down, tau), &up),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoleFit {
    pub eps_hat: f64,
    /// Frequency resolution `2π / window` of the sampled window.
    pub resolution: f64,
    pub window: f64,
}

/// Locates the frequency `ε` of a signal dominated by `e^{−iετ}`, sampled
/// at spacing `dt` from `τ = 0`, from the peak of a Hann-windowed,
/// zero-padded transform refined by parabolic interpolation.
pub fn pole_fit(samples: &[Complex64], dt: f64, requested: Option<f64>) -> Result<PoleFit> {
    if samples.len() < 8 {
        return Err(Error::Invalid("at least 8 samples are needed for a pole fit".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Invalid("sample spacing must be positive".into()));
    }
    let len = samples.len();
    let window = len as f64 * dt;
    let resolution = 2.0 * PI / window;
    if let Some(req) = requested {
        if resolution > req {
            return Err(Error::WindowTooShort {
                window,
                resolution,
                requested: req,
            });
        }
    }
    let size = len.next_power_of_two() * 8;
    let mut buf = vec![c(0.0, 0.0); size];
    for (j, s) in samples.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * PI * j as f64 / (len - 1) as f64).cos();
        buf[j] = s * hann;
    }
    // e^{+iωτ} kernel: the inverse transform peaks at ω = ε
    FftPlanner::new().plan_fft_inverse(size).process(&mut buf);
    let mag: Vec<f64> = buf.iter().map(|z| z.norm()).collect();
    let peak = (0..size).fold(0, |best, k| if mag[k] > mag[best] { k } else { best });
    let at = |k: isize| mag[k.rem_euclid(size as isize) as usize].max(f64::MIN_POSITIVE).ln();
    let (l, m, r) = (at(peak as isize - 1), at(peak as isize), at(peak as isize + 1));
    let denom = l - 2.0 * m + r;
    let shift = if denom.abs() > 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    let mut bin = peak as f64 + shift.clamp(-0.5, 0.5);
    if bin > size as f64 / 2.0 {
        bin -= size as f64;
    }
    Ok(PoleFit {
        eps_hat: 2.0 * PI * bin / (size as f64 * dt),
        resolution,
        window,
    })
}

/// `∫_lo^hi f(ε) e^{−iεt} dε`, split into half periods of the oscillation
/// and at the interior points `breaks`.
pub fn fourier_transform(
    f: impl Fn(f64) -> Complex64 + Sync,
    lo: f64,
    hi: f64,
    t: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<Complex64> {
    if !(lo < hi) || !t.is_finite() {
        return Err(Error::Invalid("transform needs a finite interval and time".into()));
    }
    let step = if t == 0.0 { hi - lo } else { (PI / t.abs()).min(hi - lo) };
    let mut edges = vec![lo];
    let mut x = lo;
    while x + step < hi {
        x += step;
        edges.push(x);
    }
    edges.push(hi);
    edges.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let per = tol / edges.len() as f64;
    let parts: Result<Vec<Complex64>> = edges
        .par_windows(2)
        .map(|w| quad::adaptive(|e| f(e) * (-I * e * t).exp(), w[0], w[1], per))
        .collect();
    Ok(parts?.into_iter().fold(c(0.0, 0.0), |a, b| a + b))
}

/// Transform of `1 / (ε − a + iη)` over `[a − L, a + L]` at time `t`,
/// divided by the contour value `−2πi e^{−iat}`.
pub fn pole_lemma_ratio(a: f64, eta: f64, t: f64, half_width: f64) -> Result<Complex64> {
    if !(eta > 0.0) {
        return Err(Error::Invalid("η must be positive".into()));
    }
    let rho = fourier_transform(|e| real(1.0) / (c(e - a, eta)), a - half_width, a + half_width, t, &[a], 1e-8)?;
    Ok(rho / (-2.0 * PI * I * (-I * a * t).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|j| j as f64 * dt).collect()
    }

    #[test]
    fn vacuum_lesser_vanishes() {
        let s = two_point_green(&[0.0, 1.0], &[0.7, 1.0], 0, 1.0, &grid(0.3, 50)).unwrap();
        for x in &s {
            assert_eq!(x.lesser, c(0.0, 0.0));
            assert!((x.greater - (-I * 0.7 * x.tau).exp()).norm() < 1e-13);
        }
    }

    #[test]
    fn thermal_closed_forms_and_kms() {
        let (n, eps, hbar) = (0.8, 1.3, 0.6);
        let s = two_point_green(&[n], &[eps], 0, hbar, &grid(0.17, 40)).unwrap();
        for x in &s {
            let less = (I * eps * x.tau).exp() * (hbar * n);
            let great = (-I * eps * x.tau).exp() * (hbar * (n + 1.0));
            assert!((x.lesser - less).norm() < 1e-13);
            assert!((x.greater - great).norm() < 1e-13);
        }
        // detailed balance at β with n = 1/(e^{βε} − 1)
        let beta = (1.0 / n + 1.0).ln() / eps;
        let ratio = s[0].greater.re / s[0].lesser.re;
        assert!((ratio - (beta * eps).exp()).abs() < 1e-12);
    }

    #[test]
    fn pole_location() {
        let dt = 0.05;
        let taus = grid(dt, 4000);
        let s = two_point_green(&[0.0], &[0.7], 0, 1.0, &taus).unwrap();
        let g: Vec<Complex64> = s.iter().map(|x| x.greater).collect();
        let fit = pole_fit(&g, dt, Some(0.05)).unwrap();
        assert!((fit.eps_hat - 0.7).abs() <= fit.resolution.min(0.01), "{}", fit.eps_hat);
        let short = &g[..200];
        assert!(matches!(pole_fit(short, dt, Some(0.05)), Err(Error::WindowTooShort { .. })));
        let neg: Vec<Complex64> = taus.iter().map(|t| (I * 1.1 * t).exp()).collect();
        assert!((pole_fit(&neg, dt, None).unwrap().eps_hat + 1.1).abs() < 1e-3);
    }

    #[test]
    fn fourier_pole_lemma() {
        let r = pole_lemma_ratio(0.5, 1e-4, 100.0, 200.0).unwrap();
        assert!((r - real(1.0)).norm() < 0.05, "{r}");
    }

    #[test]
    fn transform_of_gaussian() {
        let t = 3.0;
        let got = fourier_transform(|e| real((-e * e / 2.0).exp()), -12.0, 12.0, t, &[], 1e-12).unwrap();
        let want = (2.0 * PI).sqrt() * (-t * t / 2.0).exp();
        assert!((got - real(want)).norm() < 1e-10);
    }

    #[test]
    fn cutoff_guards() {
        assert_eq!(green_cutoff(0.0).unwrap(), 1);
        assert!(green_cutoff(-1.0).is_err());
        assert!(green_cutoff(1e6).is_err());
    }
}
