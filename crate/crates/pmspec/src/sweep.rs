//! Parameter sweeps and peak extraction: drive the numeric and perturbative
//! routes over coupling strength, pulse width (at fixed pulse area), or field
//! strength, and tabulate the five resonance peak heights.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::demod::{
    demodulate, remove_dispersive_tails, spectrum, subtract_background,
    suppress_early_transient, ComplexSpectrum, DemodError,
};
use crate::perturbation::{
    analytic_spectrum, first_harmonic_signal, second_harmonic_signal, PerturbationError,
    ResonanceLabel,
};
use crate::propagator::{compute_signal_grid, PropagationError, SignalGrid};
use crate::pulses::{EnvelopeShape, PulseError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("spectrum does not cover the predicted peak at {predicted} by 3 FWHM")]
    SpectrumCoverage { predicted: f64 },
    #[error("no local maximum near the predicted peak at {predicted}")]
    NoPeak { predicted: f64 },
    #[error("config has no sweep section")]
    MissingSweepSection,
    #[error("sweep value {value}: {source}")]
    AtValue {
        value: f64,
        #[source]
        source: Box<SweepError>,
    },
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Demod(#[from] DemodError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

/// Which quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Coupling v_ee, with v_ff following at a fixed ratio.
    VEe,
    /// Envelope width at fixed pulse area.
    Sigma,
    /// Peak field amplitude at fixed width.
    E0,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::VEe => "v_ee",
            SweepAxis::Sigma => "sigma",
            SweepAxis::E0 => "e0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepRoute {
    Numeric,
    Analytic,
    Both,
}

impl SweepRoute {
    fn runs_numeric(self) -> bool {
        matches!(self, SweepRoute::Numeric | SweepRoute::Both)
    }

    fn runs_analytic(self) -> bool {
        matches!(self, SweepRoute::Analytic | SweepRoute::Both)
    }
}

/// A sweep definition on top of a base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// v_ff / v_ee for coupling sweeps.
    pub ratio: f64,
    pub route: SweepRoute,
}

/// One extracted resonance.
#[derive(Debug, Clone, Copy)]
pub struct PeakRow {
    pub sweep_value: f64,
    pub label: ResonanceLabel,
    pub omega_peak: f64,
    pub height: C64,
    pub numeric: bool,
}

impl PeakRow {
    pub fn route_str(&self) -> &'static str {
        if self.numeric { "numeric" } else { "analytic" }
    }

    /// Scalar height convention: the real part carries the first-harmonic
    /// absorption, the imaginary part the second-harmonic one.
    pub fn reported_height(&self) -> f64 {
        match self.label.kappa() {
            1 => self.height.re,
            _ => self.height.im,
        }
    }
}

/// Peak heights over a sweep, in deterministic (value, route, label) order.
#[derive(Debug, Clone)]
pub struct PeakTable {
    pub axis: SweepAxis,
    pub rows: Vec<PeakRow>,
}

impl PeakTable {
    pub fn find(&self, numeric: bool, label: ResonanceLabel, value: f64) -> Option<&PeakRow> {
        self.rows
            .iter()
            .find(|r| r.numeric == numeric && r.label == label && r.sweep_value == value)
    }
}

/// Quadratically interpolated apex of |S| within one resolution FWHM of the
/// predicted position; returns the apex frequency and the complex spectrum
/// value there.
pub fn extract_peak(spec: &ComplexSpectrum, predicted: f64) -> Result<(f64, C64), SweepError> {
    let fwhm = spec.resolution_fwhm();
    let lo = spec.omega.first().copied().unwrap_or(f64::MAX);
    let hi = spec.omega.last().copied().unwrap_or(f64::MIN);
    if predicted - 3.0 * fwhm < lo || predicted + 3.0 * fwhm > hi {
        return Err(SweepError::SpectrumCoverage { predicted });
    }

    let in_window: Vec<usize> = (0..spec.omega.len())
        .filter(|&i| (spec.omega[i] - predicted).abs() <= fwhm)
        .collect();
    let (first, last) = (*in_window.first().unwrap(), *in_window.last().unwrap());
    let apex = in_window
        .iter()
        .copied()
        .max_by(|&a, &b| spec.values[a].norm().total_cmp(&spec.values[b].norm()))
        .unwrap();
    if apex == first || apex == last {
        return Err(SweepError::NoPeak { predicted });
    }

    let h = spec.omega[apex + 1] - spec.omega[apex];
    let (y0, y1, y2) = (
        spec.values[apex - 1].norm(),
        spec.values[apex].norm(),
        spec.values[apex + 1].norm(),
    );
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 {
        return Err(SweepError::NoPeak { predicted });
    }
    let shift = 0.5 * (y0 - y2) / denom;
    let omega_peak = spec.omega[apex] + shift * h;

    // quadratic (three-point Lagrange) interpolation of the complex value
    let l0 = shift * (shift - 1.0) / 2.0;
    let l1 = (1.0 + shift) * (1.0 - shift);
    let l2 = shift * (shift + 1.0) / 2.0;
    let value = spec.values[apex - 1] * C64::from(l0)
        + spec.values[apex] * C64::from(l1)
        + spec.values[apex + 1] * C64::from(l2);
    Ok((omega_peak, value))
}

/// Spectrum value at the grid point nearest to `omega`; used where no local
/// maximum exists (vanishing coupling).
pub fn sample_at(spec: &ComplexSpectrum, omega: f64) -> C64 {
    let idx = spec
        .omega
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (*a - omega).abs().total_cmp(&(*b - omega).abs()))
        .map(|(i, _)| i)
        .unwrap();
    spec.values[idx]
}

/// The numeric pipeline of one configuration: signal grid, demodulation at
/// both harmonics, uncoupled-reference subtraction, spectra, and background
/// subtraction.
pub fn numeric_spectra(cfg: &RunConfig) -> Result<[ComplexSpectrum; 2], SweepError> {
    let grid = numeric_grid(cfg)?;
    numeric_spectra_from_grid(cfg, &grid)
}

pub fn numeric_grid(cfg: &RunConfig) -> Result<SignalGrid, SweepError> {
    Ok(compute_signal_grid(&cfg.system, &cfg.pulses, &cfg.propagation, &cfg.t21_grid.values())?)
}

pub fn numeric_spectra_from_grid(
    cfg: &RunConfig,
    grid: &SignalGrid,
) -> Result<[ComplexSpectrum; 2], SweepError> {
    let cutoff = 2.0 * cfg.propagation.resolve_pad(&cfg.pulses) + 2.0 * cfg.t21_grid.spacing;
    let mut out = Vec::with_capacity(2);
    for kappa in [1u32, 2] {
        let mut sig = demodulate(grid, &cfg.demod_settings(kappa))?;
        let peaks = cfg.predicted_peaks(kappa);
        if cfg.background.suppress_transient {
            sig = suppress_early_transient(&sig, &peaks, cutoff);
        }
        let mut spec = spectrum(&sig, cfg.window_sigma, &cfg.omega_grid(kappa))?;
        if cfg.background.remove_dispersive {
            spec = remove_dispersive_tails(&spec, &peaks);
        }
        if cfg.background.enabled {
            let exclusion = cfg.background.exclusion_fwhm * spec.resolution_fwhm();
            spec = subtract_background(&spec, &peaks, exclusion)?;
        }
        out.push(spec);
    }
    Ok([out.remove(0), out.remove(0)])
}

/// The perturbative pipeline of one configuration.
pub fn analytic_spectra(cfg: &RunConfig) -> Result<[ComplexSpectrum; 2], SweepError> {
    let t21 = cfg.t21_grid.values();
    let omega_l = cfg.pulses.omega_l;
    let omega_m = cfg.demod.omega_m;
    let first =
        first_harmonic_signal(&cfg.system, &cfg.pulses.envelope, omega_l, omega_m, &t21)?;
    let second =
        second_harmonic_signal(&cfg.system, &cfg.pulses.envelope, omega_l, omega_m, &t21)?;
    Ok([
        analytic_spectrum(&first, cfg.window_sigma, &cfg.omega_grid(1)),
        analytic_spectrum(&second, cfg.window_sigma, &cfg.omega_grid(2)),
    ])
}

/// Extract all five resonances from a (1HD, 2HD) spectrum pair.
pub fn extract_all_peaks(
    cfg: &RunConfig,
    spectra: &[ComplexSpectrum; 2],
) -> Result<Vec<(ResonanceLabel, f64, C64)>, SweepError> {
    let mut out = Vec::with_capacity(5);
    for label in ResonanceLabel::FIRST_HARMONIC {
        let predicted = label.predicted_omega(&cfg.system, cfg.demod.omega_m);
        let (w, v) = extract_peak(&spectra[0], predicted)?;
        out.push((label, w, v));
    }
    for label in ResonanceLabel::SECOND_HARMONIC {
        let predicted = label.predicted_omega(&cfg.system, cfg.demod.omega_m);
        let (w, v) = extract_peak(&spectra[1], predicted)?;
        out.push((label, w, v));
    }
    Ok(out)
}

/// Derive the configuration of one sweep point.
pub fn config_at(base: &RunConfig, spec: &SweepSpec, value: f64) -> Result<RunConfig, SweepError> {
    let mut cfg = base.clone();
    match spec.axis {
        SweepAxis::VEe => {
            cfg.system.v_ee = value;
            cfg.system.v_ff = spec.ratio * value;
        }
        SweepAxis::Sigma => {
            let area = base.pulses.envelope.area();
            let resized = match base.pulses.envelope {
                EnvelopeShape::Gaussian { e0, .. } => EnvelopeShape::Gaussian { sigma: value, e0 },
                EnvelopeShape::Rectangular { e0, .. } => {
                    EnvelopeShape::Rectangular { delta: value, e0 }
                }
            };
            cfg.pulses.envelope = resized.with_area(area)?;
        }
        SweepAxis::E0 => {
            cfg.pulses.envelope = match base.pulses.envelope {
                EnvelopeShape::Gaussian { sigma, .. } => {
                    EnvelopeShape::Gaussian { sigma, e0: value }
                }
                EnvelopeShape::Rectangular { delta, .. } => {
                    EnvelopeShape::Rectangular { delta, e0: value }
                }
            };
        }
    }
    Ok(cfg)
}

/// Run the sweep configured in `base.sweep` and tabulate peak heights.
pub fn run_sweep(base: &RunConfig) -> Result<PeakTable, SweepError> {
    let spec = base.sweep.as_ref().ok_or(SweepError::MissingSweepSection)?;
    let mut rows = Vec::new();
    for &value in &spec.values {
        let at = |e: SweepError| SweepError::AtValue { value, source: Box::new(e) };
        let cfg = config_at(base, spec, value)?;
        if spec.route.runs_numeric() {
            let spectra = numeric_spectra(&cfg).map_err(at)?;
            for (label, w, v) in extract_all_peaks(&cfg, &spectra).map_err(at)? {
                rows.push(PeakRow { sweep_value: value, label, omega_peak: w, height: v, numeric: true });
            }
        }
        if spec.route.runs_analytic() {
            let spectra = analytic_spectra(&cfg).map_err(at)?;
            for (label, w, v) in extract_all_peaks(&cfg, &spectra).map_err(at)? {
                rows.push(PeakRow { sweep_value: value, label, omega_peak: w, height: v, numeric: false });
            }
        }
    }
    Ok(PeakTable { axis: spec.axis, rows })
}
