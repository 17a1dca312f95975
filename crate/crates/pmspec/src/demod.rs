//! Lock-in demodulation of the fluorescence grid at harmonics of the
//! pulse-pair modulation frequency, windowed Fourier transformation to
//! complex spectra, and background subtraction.
//!
//! The reference waveform tracks the pulse-pair beat itself, as a lock-in
//! referenced on the pair does: besides the kappa Omega_21 tau_m harmonic it
//! carries the per-delay beat phase stored in the grid, so every artifact of
//! the slow intra-pair phase sweep cancels and demodulated peaks sit exactly
//! at the transition frequencies (shifted by kappa omega_M under
//! undersampling). A configured reference phase offset phi_ref enters as
//! exp(i kappa phi_ref); a pulse-pair phase offset phi_21 therefore shows up
//! on the output as exp(-i kappa phi_21) when the reference keeps phi_ref = 0.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::propagator::SignalGrid;

/// Width of the moving median window used for background estimation, in
/// units of the spectral resolution FWHM.
pub const BACKGROUND_WINDOW_FWHM: f64 = 50.0;

#[derive(Debug, Error)]
pub enum DemodError {
    #[error("tau_m span {span} covers less than one modulation period {period}")]
    SpanTooShort { span: f64, period: f64 },
    #[error("tau_m sampling is not commensurate with the modulation period; use the exponential filter")]
    NotCommensurate,
    #[error("invalid demodulation settings: {0}")]
    InvalidSettings(String),
    #[error("t21 grid must be uniform and start at t21 >= 0")]
    BadTimeGrid,
    #[error("peak exclusion windows cover {covered:.0}% of the spectrum")]
    MaskTooWide { covered: f64 },
    #[error("no background samples left around omega = {omega}")]
    EmptyWindow { omega: f64 },
}

/// Low-pass stage of the lock-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DemodMode {
    /// Discrete projection on the reference over a whole number of
    /// modulation periods; the long-lock-in-time limit.
    Projection,
    /// Exponentially weighted average with time constant `tau_li`.
    ExponentialFilter { tau_li: f64 },
}

/// Demodulation order and reference parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemodSettings {
    /// Harmonic order kappa >= 1.
    pub kappa: u32,
    /// Undersampling frequency of the reference; zero leaves peaks at the
    /// physical frequencies.
    pub omega_m: f64,
    /// Phase offset of the reference.
    pub phi_ref: f64,
    pub mode: DemodMode,
}

impl DemodSettings {
    pub fn projection(kappa: u32) -> Self {
        Self { kappa, omega_m: 0.0, phi_ref: 0.0, mode: DemodMode::Projection }
    }
}

/// Complex demodulated signal versus pulse delay.
#[derive(Debug, Clone)]
pub struct DemodSignal {
    pub t21_values: Vec<f64>,
    pub values: Vec<C64>,
    pub kappa: u32,
}

/// Complex spectrum at one demodulation order.
#[derive(Debug, Clone)]
pub struct ComplexSpectrum {
    pub omega: Vec<f64>,
    pub values: Vec<C64>,
    pub kappa: u32,
    pub window_sigma: f64,
}

impl ComplexSpectrum {
    /// FWHM of a resolution-limited peak, 2 sqrt(2 ln 2) / window_sigma.
    pub fn resolution_fwhm(&self) -> f64 {
        resolution_fwhm(self.window_sigma)
    }

    pub fn grid_spacing(&self) -> f64 {
        if self.omega.len() > 1 { self.omega[1] - self.omega[0] } else { 0.0 }
    }
}

pub fn resolution_fwhm(window_sigma: f64) -> f64 {
    2.0 * (2.0 * 2f64.ln()).sqrt() / window_sigma
}

/// Demodulate the grid at harmonic `kappa` of the modulation frequency.
pub fn demodulate(grid: &SignalGrid, settings: &DemodSettings) -> Result<DemodSignal, DemodError> {
    if settings.kappa == 0 {
        return Err(DemodError::InvalidSettings("kappa must be >= 1".into()));
    }
    let m_total = grid.tau_m_values.len();
    if m_total < 2 {
        return Err(DemodError::SpanTooShort { span: 0.0, period: f64::INFINITY });
    }
    let d_tau = grid.tau_m_values[1] - grid.tau_m_values[0];
    let period = std::f64::consts::TAU / grid.omega_21.abs();
    let span = m_total as f64 * d_tau;
    if span < period * (1.0 - 1e-9) {
        return Err(DemodError::SpanTooShort { span, period });
    }

    let values = match settings.mode {
        DemodMode::Projection => {
            let m_used = commensurate_samples(grid.omega_21, d_tau, m_total)
                .ok_or(DemodError::NotCommensurate)?;
            project(grid, settings, m_used, |_m| 1.0 / m_used as f64)
        }
        DemodMode::ExponentialFilter { tau_li } => {
            if !(tau_li > 0.0) {
                return Err(DemodError::InvalidSettings(format!(
                    "lock-in time constant must be positive, got {tau_li}"
                )));
            }
            project(grid, settings, m_total, |m| {
                d_tau / tau_li * (-grid.tau_m_values[m] / tau_li).exp()
            })
        }
    };
    Ok(DemodSignal { t21_values: grid.t21_values.clone(), values, kappa: settings.kappa })
}

/// Largest sample count covering a whole number of modulation periods.
fn commensurate_samples(omega_21: f64, d_tau: f64, m_total: usize) -> Option<usize> {
    let per_sample = omega_21.abs() * d_tau / std::f64::consts::TAU;
    for m in (1..=m_total).rev() {
        let periods = m as f64 * per_sample;
        if periods.round() >= 1.0 && (periods - periods.round()).abs() < 1e-9 {
            return Some(m);
        }
    }
    None
}

fn project<W>(grid: &SignalGrid, settings: &DemodSettings, m_used: usize, weight: W) -> Vec<C64>
where
    W: Fn(usize) -> f64 + Sync,
{
    let kappa = settings.kappa as f64;
    grid.t21_values
        .par_iter()
        .enumerate()
        .map(|(i, &t21)| {
            let static_phase =
                kappa * (grid.ref_extra_phase[i] + settings.phi_ref - settings.omega_m * t21);
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..m_used {
                let phase = kappa * grid.omega_21 * grid.tau_m_values[m] + static_phase;
                acc += C64::from_polar(weight(m) * grid.values[[i, m]], phase);
            }
            acc
        })
        .collect()
}

/// One-sided windowed Fourier transform of the demodulated signal,
/// (1/sqrt(2 pi)) \int_0^\infty dt e^{-i w t} S(t) exp(-t^2 / 2 sigma^2),
/// evaluated by the trapezoid rule on the sampled delays.
pub fn spectrum(
    sig: &DemodSignal,
    window_sigma: f64,
    omega: &[f64],
) -> Result<ComplexSpectrum, DemodError> {
    let n = sig.t21_values.len();
    if n < 2 || sig.t21_values[0] < 0.0 {
        return Err(DemodError::BadTimeGrid);
    }
    let dt = sig.t21_values[1] - sig.t21_values[0];
    for k in 1..n {
        if ((sig.t21_values[k] - sig.t21_values[k - 1]) - dt).abs() > 1e-9 * dt.abs() {
            return Err(DemodError::BadTimeGrid);
        }
    }
    if !(window_sigma > 0.0) {
        return Err(DemodError::InvalidSettings("window sigma must be positive".into()));
    }

    // window and trapezoid weights folded into the samples once
    let weighted: Vec<C64> = sig
        .values
        .iter()
        .zip(&sig.t21_values)
        .enumerate()
        .map(|(k, (&v, &t))| {
            let edge = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            v * C64::from(edge * (-t * t / (2.0 * window_sigma * window_sigma)).exp())
        })
        .collect();

    let norm = dt / (2.0 * std::f64::consts::PI).sqrt();
    let values: Vec<C64> = omega
        .par_iter()
        .map(|&w| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, &v) in weighted.iter().enumerate() {
                acc += v * C64::from_polar(1.0, -w * sig.t21_values[k]);
            }
            acc * C64::from(norm)
        })
        .collect();

    Ok(ComplexSpectrum { omega: omega.to_vec(), values, kappa: sig.kappa, window_sigma })
}

/// Uniform frequency grid over [omega_min, omega_max] with the spacing of a
/// transform zero padded to `pad_factor` times the delay-grid length.
pub fn default_omega_grid(
    n_t21: usize,
    t21_spacing: f64,
    pad_factor: usize,
    omega_min: f64,
    omega_max: f64,
) -> Vec<f64> {
    let d_omega = std::f64::consts::TAU / (pad_factor.max(1) as f64 * n_t21 as f64 * t21_spacing);
    let count = ((omega_max - omega_min) / d_omega).ceil() as usize + 1;
    (0..count).map(|i| omega_min + i as f64 * d_omega).collect()
}

/// Subtract the broad pulse-overlap background from a spectrum.
///
/// The baseline on unmasked frequencies is the moving median of the spectrum
/// over a window much wider than a resolution-limited peak, with the
/// neighborhoods of the known resonances masked out; under each masked zone
/// the baseline is continued by linear interpolation between its flanks, so
/// smooth pedestals (including one-sided dispersive tails of neighboring
/// resonances) are removed without touching the resonances themselves. Real
/// and imaginary parts are treated independently.
pub fn subtract_background(
    spec: &ComplexSpectrum,
    peak_positions: &[f64],
    exclusion_halfwidth: f64,
) -> Result<ComplexSpectrum, DemodError> {
    let n = spec.omega.len();
    let masked: Vec<bool> = spec
        .omega
        .iter()
        .map(|&w| peak_positions.iter().any(|&p| (w - p).abs() < exclusion_halfwidth))
        .collect();
    let covered = masked.iter().filter(|&&m| m).count() as f64 / n.max(1) as f64;
    if covered > 0.5 {
        return Err(DemodError::MaskTooWide { covered: covered * 100.0 });
    }

    let half_window = 0.5 * BACKGROUND_WINDOW_FWHM * spec.resolution_fwhm();
    let baseline: Vec<Option<C64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if masked[i] {
                return Ok(None);
            }
            let w0 = spec.omega[i];
            let mut re = Vec::new();
            let mut im = Vec::new();
            for j in 0..n {
                if !masked[j] && (spec.omega[j] - w0).abs() <= half_window {
                    re.push(spec.values[j].re);
                    im.push(spec.values[j].im);
                }
            }
            if re.is_empty() {
                return Err(DemodError::EmptyWindow { omega: w0 });
            }
            Ok(Some(C64::new(median(&mut re), median(&mut im))))
        })
        .collect::<Result<_, _>>()?;

    // continue the baseline across masked zones
    let filled: Vec<C64> = (0..n)
        .map(|i| {
            if let Some(b) = baseline[i] {
                return b;
            }
            let left = (0..i).rev().find(|&j| baseline[j].is_some());
            let right = (i + 1..n).find(|&j| baseline[j].is_some());
            match (left, right) {
                (Some(l), Some(r)) => {
                    let t = (spec.omega[i] - spec.omega[l]) / (spec.omega[r] - spec.omega[l]);
                    baseline[l].unwrap() * C64::from(1.0 - t) + baseline[r].unwrap() * C64::from(t)
                }
                (Some(l), None) => baseline[l].unwrap(),
                (None, Some(r)) => baseline[r].unwrap(),
                (None, None) => C64::new(0.0, 0.0),
            }
        })
        .collect();

    let values = spec.values.iter().zip(&filled).map(|(v, b)| v - b).collect();
    Ok(ComplexSpectrum {
        omega: spec.omega.clone(),
        values,
        kappa: spec.kappa,
        window_sigma: spec.window_sigma,
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Dawson integral D(x) = e^{-x^2} \int_0^x e^{u^2} du, via trigonometric
/// sampling for moderate arguments and the asymptotic series beyond.
pub fn dawson(x: f64) -> f64 {
    let ax = x.abs();
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    if ax < 6.0 {
        // sampling-theorem approximation; error ~ e^{-(pi/(2h))^2}
        let h = 0.25;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let lo = ((ax - 7.5) / h).floor() as i64;
        let hi = ((ax + 7.5) / h).ceil() as i64;
        let mut acc = 0.0;
        let mut n = if lo % 2 == 0 { lo + 1 } else { lo };
        while n <= hi {
            let d = ax - n as f64 * h;
            acc += (-d * d).exp() / n as f64;
            n += 2;
        }
        sign * inv_sqrt_pi * acc
    } else {
        // D(x) ~ 1/(2x) sum_k (2k-1)!! / (2x^2)^k
        let inv2x2 = 1.0 / (2.0 * ax * ax);
        let mut term = 1.0;
        let mut acc = 1.0;
        for k in 1..12 {
            term *= (2 * k - 1) as f64 * inv2x2;
            acc += term;
            if term < 1e-17 {
                break;
            }
        }
        sign * acc / (2.0 * ax)
    }
}

/// One-sided line-shape model of a unit-amplitude demodulated component at
/// distance `x` from its resonance: absorptive Gaussian plus the dispersive
/// remainder of the half-range transform.
fn line_shape(x: f64, sigma: f64) -> C64 {
    C64::new(
        sigma / 4.0 * (-x * x * sigma * sigma / 2.0).exp(),
        -sigma / (2.0 * std::f64::consts::PI.sqrt()) * dawson(x * sigma / 2f64.sqrt()),
    )
}

/// Remove the dispersive (Dawson) tails of the known resonances from a
/// spectrum, leaving their absorptive Gaussians and everything else intact.
///
/// The half-range transform of each demodulated line contributes the
/// [`line_shape`] profile. The complex line amplitudes are fitted by least
/// squares over the peak region with the line shapes plus a quadratic
/// baseline (which absorbs residual background), after which only the
/// dispersive parts are subtracted. Without this step the tails of a
/// resonance leak into the quadratures of its neighbors at reduced spectral
/// resolution.
pub fn remove_dispersive_tails(spec: &ComplexSpectrum, peak_positions: &[f64]) -> ComplexSpectrum {
    let n_p = peak_positions.len();
    if n_p == 0 || spec.omega.len() < n_p + 3 {
        return spec.clone();
    }
    let sigma = spec.window_sigma;
    let fwhm = spec.resolution_fwhm();
    let lo = peak_positions.iter().copied().fold(f64::MAX, f64::min) - 10.0 * fwhm;
    let hi = peak_positions.iter().copied().fold(f64::MIN, f64::max) + 10.0 * fwhm;
    let center = 0.5 * (lo + hi);
    let half_span = 0.5 * (hi - lo);

    let n_basis = n_p + 3;
    let basis = |w: f64, j: usize| -> C64 {
        if j < n_p {
            line_shape(w - peak_positions[j], sigma)
        } else {
            let u = (w - center) / half_span;
            C64::from(match j - n_p {
                0 => 1.0,
                1 => u,
                _ => u * u,
            })
        }
    };

    // normal equations over the fit region
    let mut gram = vec![vec![C64::new(0.0, 0.0); n_basis]; n_basis];
    let mut proj = vec![C64::new(0.0, 0.0); n_basis];
    let mut points = 0usize;
    for (i, &w) in spec.omega.iter().enumerate() {
        if w < lo || w > hi {
            continue;
        }
        points += 1;
        let row: Vec<C64> = (0..n_basis).map(|j| basis(w, j)).collect();
        for r in 0..n_basis {
            for c in 0..n_basis {
                gram[r][c] += row[r].conj() * row[c];
            }
            proj[r] += row[r].conj() * spec.values[i];
        }
    }
    if points < n_basis {
        return spec.clone();
    }
    let coeff = solve_complex(gram, proj);

    let values = spec
        .omega
        .iter()
        .zip(&spec.values)
        .map(|(&w, &v)| {
            let mut tail = C64::new(0.0, 0.0);
            for (j, &p) in peak_positions.iter().enumerate() {
                let x = w - p;
                tail += coeff[j]
                    * C64::new(
                        0.0,
                        -sigma / (2.0 * std::f64::consts::PI.sqrt())
                            * dawson(x * sigma / 2f64.sqrt()),
                    );
            }
            v - tail
        })
        .collect();
    ComplexSpectrum {
        omega: spec.omega.clone(),
        values,
        kappa: spec.kappa,
        window_sigma: spec.window_sigma,
    }
}

/// Replace the demodulated signal inside the pulse-overlap window by the
/// line model fitted on the clean delays beyond it.
///
/// During pulse overlap the fluorescence carries a transient on top of the
/// oscillations at the known resonance frequencies; after transformation it
/// becomes the broad background under (and ringing around) the sharp peaks.
/// Beyond the overlap window the signal is exactly a sum of complex
/// exponentials at the predicted line frequencies, so those are fitted there
/// by least squares and continued across the overlap segment.
pub fn suppress_early_transient(
    sig: &DemodSignal,
    line_frequencies: &[f64],
    cutoff: f64,
) -> DemodSignal {
    let n_lines = line_frequencies.len();
    let clean: Vec<usize> =
        (0..sig.t21_values.len()).filter(|&i| sig.t21_values[i] >= cutoff).collect();
    if n_lines == 0 || clean.len() < 4 * n_lines.max(1) || clean.len() == sig.t21_values.len() {
        return sig.clone();
    }

    let mut gram = vec![vec![C64::new(0.0, 0.0); n_lines]; n_lines];
    let mut proj = vec![C64::new(0.0, 0.0); n_lines];
    for &i in &clean {
        let t = sig.t21_values[i];
        let e: Vec<C64> = line_frequencies.iter().map(|&w| C64::from_polar(1.0, w * t)).collect();
        for r in 0..n_lines {
            for c in 0..n_lines {
                gram[r][c] += e[r].conj() * e[c];
            }
            proj[r] += e[r].conj() * sig.values[i];
        }
    }
    let coeff = solve_complex(gram, proj);

    let values = sig
        .t21_values
        .iter()
        .zip(&sig.values)
        .map(|(&t, &v)| {
            if t >= cutoff {
                v
            } else {
                line_frequencies
                    .iter()
                    .zip(&coeff)
                    .map(|(&w, &c)| c * C64::from_polar(1.0, w * t))
                    .sum()
            }
        })
        .collect();
    DemodSignal { t21_values: sig.t21_values.clone(), values, kappa: sig.kappa }
}

/// Gaussian elimination with partial pivoting for the small dense complex
/// systems of the line-shape fits.
fn solve_complex(mut m: Vec<Vec<C64>>, mut rhs: Vec<C64>) -> Vec<C64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm())).unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let p = m[col][col];
        for c in col..n {
            m[col][c] /= p;
        }
        rhs[col] /= p;
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                for c in col..n {
                    let v = m[col][c];
                    m[r][c] -= f * v;
                }
                let v = rhs[col];
                rhs[r] -= f * v;
            }
        }
    }
    rhs
}
