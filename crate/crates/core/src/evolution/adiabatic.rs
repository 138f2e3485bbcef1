//! Adaptive propagation for time-dependent Hamiltonians and the adiabatic
//! phase ledger.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, real, CMatrix, CVector, I};
use crate::quad;

/// Smallest admissible level spacing along an adiabatic path.
pub const GAP_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Global error target; each step gets its share by length.
    pub tol: f64,
    /// Steps shorter than `min_fraction · |t1 − t0|` abort.
    pub min_fraction: f64,
    pub initial_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            tol: 1e-8,
            min_fraction: 1e-12,
            initial_steps: 64,
        }
    }
}

fn rk4_step(h: &impl Fn(f64) -> CMatrix, scale: f64, t: f64, dt: f64, u: &CMatrix) -> CMatrix {
    // dU/dt = −i scale H(t) U
    let f = |t: f64, u: &CMatrix| h(t) * u * (-I * scale);
    let k1 = f(t, u);
    let k2 = f(t + dt / 2.0, &(u + &k1 * real(dt / 2.0)));
    let k3 = f(t + dt / 2.0, &(u + &k2 * real(dt / 2.0)));
    let k4 = f(t + dt, &(u + &k3 * real(dt)));
    u + (k1 + k2 * real(2.0) + k3 * real(2.0) + k4) * real(dt / 6.0)
}

/// Solves `dU/dt = −(i/ħ) H(t) U`, `U(t0) = 1`, by RK4 with step doubling
/// and Richardson extrapolation.
pub fn propagate(h: impl Fn(f64) -> CMatrix, t0: f64, t1: f64, hbar: f64, control: StepControl) -> Result<CMatrix> {
    propagate_scaled(&h, t0, t1, 1.0 / hbar, control)
}

fn propagate_scaled(h: &impl Fn(f64) -> CMatrix, t0: f64, t1: f64, scale: f64, control: StepControl) -> Result<CMatrix> {
    let h0 = h(t0);
    linalg::ensure_square(&h0, "Hamiltonian")?;
    let d = h0.nrows();
    let mut u = linalg::identity(d);
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(u);
    }
    if !span.is_finite() || !scale.is_finite() {
        return Err(Error::NonFinite);
    }
    let dir = span.signum();
    let length = span.abs();
    let mut t = t0;
    let mut dt = length / control.initial_steps.max(1) as f64;
    let min_dt = control.min_fraction * length;
    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        let step = dt.min(remaining);
        let full = rk4_step(h, scale, t, step * dir, &u);
        let half = rk4_step(h, scale, t, step * dir / 2.0, &u);
        let half = rk4_step(h, scale, t + step * dir / 2.0, step * dir / 2.0, &half);
        let err = linalg::max_abs(&(&half - &full)) / 15.0;
        if !err.is_finite() {
            return Err(Error::NonFinite);
        }
        let allowed = control.tol * step / length;
        if err <= allowed {
            u = (half * real(16.0) - full) * real(1.0 / 15.0);
            t = if step == remaining { t1 } else { t + step * dir };
        }
        let factor = if err == 0.0 { 4.0 } else { (0.9 * (allowed / err).powf(0.2)).clamp(0.2, 4.0) };
        dt = step * factor;
        if dt < min_dt && (t1 - t) * dir > 0.0 {
            return Err(Error::StepUnderflow { t });
        }
    }
    Ok(u)
}

/// `H(g)` together with a path `g(s)`, `s ∈ [0, 1]`.
pub struct PathFamily<'a> {
    pub hamiltonian: Box<dyn Fn(f64) -> CMatrix + Sync + 'a>,
    pub path: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
}

impl<'a> PathFamily<'a> {
    pub fn new(hamiltonian: impl Fn(f64) -> CMatrix + Sync + 'a, path: impl Fn(f64) -> f64 + Sync + 'a) -> Self {
        PathFamily {
            hamiltonian: Box::new(hamiltonian),
            path: Box::new(path),
        }
    }

    pub fn at(&self, s: f64) -> CMatrix {
        (self.hamiltonian)((self.path)(s))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdiabaticReport {
    #[serde(skip)]
    pub propagator: CMatrix,
    pub energies_start: Vec<f64>,
    pub energies_end: Vec<f64>,
    /// `θ_n = (1/αħ) ∫ E_n ds`.
    pub dynamic_phases: Vec<f64>,
    /// `β_mn = θ_m − θ_n`, row `m`.
    pub beta: Vec<Vec<f64>>,
    pub min_gap: f64,
    /// `√(1 − |⟨φ_n(1), U φ_n(0)⟩|²)`.
    pub leakage: Vec<f64>,
    /// `‖U φ_n(0) − e^{−iθ_n} φ_n(1)‖` with parallel-transported `φ_n`.
    pub adiabatic_defect: Vec<f64>,
}

/// Number of panels used for eigenvector continuation.
const TRANSPORT_PANELS: usize = 2048;

/// Eigenvectors along the path, phase-fixed so consecutive overlaps are
/// real and positive, and matched by maximal overlap.
fn transported_frame(family: &PathFamily, panels: usize) -> Result<(CMatrix, CMatrix, f64)> {
    let (vals, start) = linalg::eigh(&family.at(0.0));
    let mut frame = start.clone();
    let mut gap = min_spacing(&vals);
    for step in 1..=panels {
        let s = step as f64 / panels as f64;
        let (vals, vecs) = linalg::eigh(&family.at(s));
        gap = gap.min(min_spacing(&vals));
        check_gap(gap, s)?;
        let d = vecs.ncols();
        let mut next = CMatrix::zeros(d, d);
        let mut used = vec![false; d];
        for n in 0..d {
            let prev = frame.column(n);
            let (best, overlap) = (0..d)
                .filter(|&k| !used[k])
                .map(|k| (k, vecs.column(k).dotc(&prev)))
                .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
                .expect("unmatched eigenvector");
            used[best] = true;
            // ⟨prev, v⟩ real positive after rephasing
            let phase = overlap.conj() / overlap.norm();
            next.set_column(n, &(vecs.column(best) * phase.conj()));
        }
        frame = next;
    }
    Ok((start, frame, gap))
}

fn min_spacing(vals: &[f64]) -> f64 {
    vals.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn check_gap(gap: f64, s: f64) -> Result<()> {
    if gap < GAP_THRESHOLD {
        return Err(Error::GapCollapse { gap, s });
    }
    Ok(())
}

/// Integrates `dU/ds = −(i/αħ) H(g(s)) U` over `s ∈ [0, 1]`, i.e. physical
/// time `T = 1/α`, and compares with the adiabatic prediction.
pub fn adiabatic_evolve(family: &PathFamily, alpha: f64, hbar: f64, control: StepControl) -> Result<AdiabaticReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid("alpha must be positive".into()));
    }
    if !(hbar > 0.0) {
        return Err(Error::Invalid("ħ must be positive".into()));
    }
    let h0 = family.at(0.0);
    linalg::ensure_square(&h0, "Hamiltonian")?;
    linalg::ensure_finite(&h0)?;
    let d = h0.nrows();
    let (start, end, gap) = transported_frame(family, TRANSPORT_PANELS)?;
    let integrals = quad::adaptive(|s| linalg::eigvalsh(&family.at(s)), 0.0, 1.0, control.tol * alpha * hbar)?;
    let dynamic_phases: Vec<f64> = integrals.iter().map(|e| e / (alpha * hbar)).collect();
    let beta = (0..d)
        .map(|m| (0..d).map(|n| dynamic_phases[m] - dynamic_phases[n]).collect())
        .collect();
    let u = propagate_scaled(&|s| family.at(s), 0.0, 1.0, 1.0 / (alpha * hbar), control)?;
    let mut leakage = Vec::with_capacity(d);
    let mut defect = Vec::with_capacity(d);
    for n in 0..d {
        let evolved: CVector = &u * start.column(n);
        let stay = end.column(n).dotc(&evolved).norm_sqr();
        leakage.push((1.0 - stay).max(0.0).sqrt());
        let predicted = end.column(n) * (-I * dynamic_phases[n]).exp();
        defect.push((evolved - predicted).norm());
    }
    Ok(AdiabaticReport {
        propagator: u,
        energies_start: linalg::eigvalsh(&h0),
        energies_end: linalg::eigvalsh(&family.at(1.0)),
        dynamic_phases,
        beta,
        min_gap: gap,
        leakage,
        adiabatic_defect: defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{self, DensityMatrix, FockSpec};
    use crate::linalg::c;

    fn two_level(eps: f64, delta: f64) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[real(eps / 2.0), real(delta / 2.0), real(delta / 2.0), real(-eps / 2.0)])
    }

    #[test]
    fn constant_hamiltonian_matches_exact() {
        let h = two_level(0.7, 0.4);
        let u = propagate(|_| h.clone(), 0.0, 5.0, 0.8, StepControl::default()).unwrap();
        let exact = linalg::propagator(&h, 5.0, 0.8).unwrap();
        assert!(linalg::max_abs(&(u - exact)) < 1e-8);
        let back = propagate(|_| h.clone(), 5.0, 0.0, 0.8, StepControl::default()).unwrap();
        assert!(linalg::max_abs(&(back - linalg::propagator(&h, -5.0, 0.8).unwrap())) < 1e-8);
    }

    #[test]
    fn constant_path_phases() {
        let h = CMatrix::from_diagonal(&CVector::from_vec(vec![real(-0.5), real(0.25), real(1.0)]));
        let fam = PathFamily::new(move |_| h.clone(), |_| 0.0);
        let r = adiabatic_evolve(&fam, 0.1, 1.0, StepControl::default()).unwrap();
        assert!((r.beta[2][0] - 15.0).abs() < 1e-9);
        assert!((r.beta[1][0] - 7.5).abs() < 1e-9);
        assert_eq!(r.beta[1][1], 0.0);
        assert!(r.adiabatic_defect.iter().all(|&x| x < 1e-7));
    }

    #[test]
    fn commuting_two_level_has_no_leakage() {
        let fam = PathFamily::new(
            |g| CMatrix::from_diagonal(&CVector::from_vec(vec![real(0.0), real(1.0 + g / 2.0)])),
            |s| (std::f64::consts::PI * s).sin(),
        );
        let r = adiabatic_evolve(&fam, 1e-3, 1.0, StepControl::default()).unwrap();
        assert!(r.leakage.iter().all(|&x| x <= 1e-4), "{:?}", r.leakage);
        // ∫(1 + sin(πs)/2) ds = 1 + 1/π
        let want = (1.0 + 1.0 / std::f64::consts::PI) / 1e-3;
        assert!((r.beta[1][0] - want).abs() < 1e-6);
        assert!(r.adiabatic_defect[1] < 1e-5, "{}", r.adiabatic_defect[1]);
    }

    #[test]
    fn rotating_field_leaks_at_first_order() {
        let fam = PathFamily::new(
            |g| two_level(g.cos(), g.sin()),
            |s| std::f64::consts::FRAC_PI_2 * s * s * (3.0 - 2.0 * s) + 0.3 * s,
        );
        let mut rows = Vec::new();
        for alpha in [4e-2, 2e-2, 1e-2, 5e-3] {
            let r = adiabatic_evolve(&fam, alpha, 1.0, StepControl::default()).unwrap();
            rows.push((alpha, r.leakage[0], r.adiabatic_defect[0]));
        }
        for (alpha, leak, defect) in &rows {
            assert!(*leak < 2.0 * alpha && *leak > 0.005 * alpha, "{alpha} {leak}");
            assert!(*defect < 4.0 * alpha, "{alpha} {defect}");
        }
    }

    #[test]
    fn gap_collapse_is_reported() {
        let fam = PathFamily::new(|g| two_level(g, 0.0), |s| 1.0 - 2.0 * s);
        assert!(matches!(
            adiabatic_evolve(&fam, 0.1, 1.0, StepControl::default()),
            Err(Error::GapCollapse { .. })
        ));
    }

    #[test]
    fn oscillator_with_relaxing_frequency() {
        // ω(t) = ω0 + ω e^{−αt}, H = ω(t) a†a
        let (w0, w, alpha, t1) = (1.0, 0.5, 0.3, 4.0);
        let spec = FockSpec::bose(&[5]).unwrap();
        let n_op = fock::number_operator(&spec, 0).unwrap();
        let u = propagate(
            |t| &n_op * real(w0 + w * (-alpha * t).exp()),
            0.0,
            t1,
            1.0,
            StepControl::default(),
        )
        .unwrap();
        let v = CVector::from_fn(6, |i, _| c(1.0 / (1.0 + i as f64), 0.1 * i as f64));
        let k0 = DensityMatrix::pure(&v).unwrap();
        let kt = &u * k0.matrix() * u.adjoint();
        let phi = w0 * t1 + (w / alpha) * (1.0 - (-alpha * t1).exp());
        for m in 0..6 {
            for n in 0..6 {
                let want = k0.matrix()[(m, n)] * (-I * ((m as f64 - n as f64) * phi)).exp();
                assert!((kt[(m, n)] - want).norm() < 1e-8);
            }
        }
    }
}
