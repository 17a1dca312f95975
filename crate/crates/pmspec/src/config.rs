//! Run configuration: flat key-value files, defaults, validation, and the
//! resolved structure shared by the binary, the sweep driver, and the tests.
//!
//! Config files are JSON objects with flat dotted keys, e.g.
//!
//! ```json
//! {
//!   "v_ee": 0.005,
//!   "envelope.sigma_or_delta": 6.0,
//!   "envelope.area": 0.1,
//!   "delta_eg": -0.025,
//!   "t21.count": 1024
//! }
//! ```
//!
//! An empty file resolves to the standard parameter set: omega_fe = 0.05,
//! mu_e = 0.75, mu_f = 1.054, omega_M = 0, phi_21 = 0, M = 1000,
//! Omega_21 = 2 pi 1e-3, T_rep = 1, plus the documented omega_eg = 1.5 and
//! delta_eg = -0.025 carrier placement. A manifest written by the binary can
//! be loaded back directly; its embedded resolved configuration reproduces
//! the run bit for bit.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::demod::{DemodMode, DemodSettings};
use crate::model::{dipole_coupling, DimerSystem, Geometry, ModelError, ParticleSpec};
use crate::propagator::PropagationSettings;
use crate::pulses::{EnvelopeShape, PulseError, PulseTrainConfig};
use crate::sweep::{SweepAxis, SweepRoute, SweepSpec};

/// Default v_ff / v_ee when only v_ee is given, the squared dipole ratio of
/// the standard particle rounded as commonly quoted.
pub const DEFAULT_COUPLING_RATIO: f64 = 1.974;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

/// Uniform pulse-delay grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T21GridSpec {
    pub start: f64,
    pub spacing: f64,
    pub count: usize,
}

impl T21GridSpec {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.start + i as f64 * self.spacing).collect()
    }

    pub fn range(&self) -> f64 {
        (self.count.saturating_sub(1)) as f64 * self.spacing
    }
}

/// Demodulation options common to both harmonics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemodConfig {
    pub mode: DemodMode,
    pub omega_m: f64,
    pub phi_ref: f64,
}

/// Background-subtraction options for the numeric route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundOptions {
    pub enabled: bool,
    /// Peak exclusion half-width in units of the resolution FWHM.
    pub exclusion_fwhm: f64,
    /// Remove the dispersive tails of the known resonances left by the
    /// half-range transform.
    pub remove_dispersive: bool,
    /// Continue the fitted line model across the pulse-overlap delays before
    /// transforming, removing the overlap transient that otherwise rings
    /// under the sharp peaks.
    pub suppress_transient: bool,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: DimerSystem,
    pub pulses: PulseTrainConfig,
    pub propagation: PropagationSettings,
    pub demod: DemodConfig,
    pub window_sigma: f64,
    pub t21_grid: T21GridSpec,
    /// Zero-padding factor of the spectral grid.
    pub spectrum_pad_factor: usize,
    pub background: BackgroundOptions,
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    pub fn demod_settings(&self, kappa: u32) -> DemodSettings {
        DemodSettings {
            kappa,
            omega_m: self.demod.omega_m,
            phi_ref: self.demod.phi_ref,
            mode: self.demod.mode,
        }
    }

    /// Predicted resonance positions at one harmonic order.
    pub fn predicted_peaks(&self, kappa: u32) -> Vec<f64> {
        use crate::perturbation::ResonanceLabel;
        let labels: &[ResonanceLabel] = if kappa == 1 {
            &ResonanceLabel::FIRST_HARMONIC
        } else {
            &ResonanceLabel::SECOND_HARMONIC
        };
        labels.iter().map(|l| l.predicted_omega(&self.system, self.demod.omega_m)).collect()
    }

    /// Frequency grid around the peaks of one harmonic, wide enough for the
    /// background median window on either side.
    pub fn omega_grid(&self, kappa: u32) -> Vec<f64> {
        let peaks = self.predicted_peaks(kappa);
        let fwhm = crate::demod::resolution_fwhm(self.window_sigma);
        let margin = (0.5 * crate::demod::BACKGROUND_WINDOW_FWHM + 5.0) * fwhm;
        let lo = (peaks.iter().copied().fold(f64::MAX, f64::min) - margin).max(0.0);
        let nyquist = std::f64::consts::PI / self.t21_grid.spacing;
        let hi = (peaks.iter().copied().fold(f64::MIN, f64::max) + margin).min(0.995 * nyquist);
        crate::demod::default_omega_grid(
            self.t21_grid.count,
            self.t21_grid.spacing,
            self.spectrum_pad_factor,
            lo,
            hi,
        )
    }
}

/// Load and validate a configuration. Accepts a flat key-value config or a
/// manifest emitted by the binary (its resolved configuration is reused).
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let trimmed = text.trim();
    let value: Value =
        if trimmed.is_empty() { Value::Object(Default::default()) } else { serde_json::from_str(trimmed)? };
    if let Some(resolved) = value.get("resolved_config") {
        return Ok(serde_json::from_value(resolved.clone())?);
    }
    let Value::Object(map) = value else {
        return Err(ConfigError::Validation(vec!["top level must be a JSON object".into()]));
    };
    resolve_flat(map)
}

struct Keys {
    map: serde_json::Map<String, Value>,
    used: BTreeSet<String>,
    issues: Vec<String>,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<&Value> {
        if self.map.contains_key(key) {
            self.used.insert(key.to_string());
        }
        self.map.get(key)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        self.f64_opt(key).unwrap_or(default)
    }

    fn f64_opt(&mut self, key: &str) -> Option<f64> {
        match self.take(key) {
            None => None,
            Some(v) => match v.as_f64() {
                Some(x) => Some(x),
                None => {
                    self.issues.push(format!("key '{key}' must be a number"));
                    None
                }
            },
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        match self.take(key) {
            None => default,
            Some(v) => match v.as_u64() {
                Some(x) => x as usize,
                None => {
                    self.issues.push(format!("key '{key}' must be a non-negative integer"));
                    default
                }
            },
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            None => default,
            Some(v) => match v.as_bool() {
                Some(x) => x,
                None => {
                    self.issues.push(format!("key '{key}' must be a boolean"));
                    default
                }
            },
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        match self.take(key) {
            None => default.to_string(),
            Some(v) => match v.as_str() {
                Some(s) => s.to_string(),
                None => {
                    self.issues.push(format!("key '{key}' must be a string"));
                    default.to_string()
                }
            },
        }
    }

    fn f64_array(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.take(key)?.clone();
        match v.as_array().map(|a| a.iter().map(|x| x.as_f64()).collect::<Option<Vec<_>>>()) {
            Some(Some(xs)) => Some(xs),
            _ => {
                self.issues.push(format!("key '{key}' must be an array of numbers"));
                None
            }
        }
    }

    fn finish(mut self) -> Result<(), ConfigError> {
        let unknown: Vec<String> = self
            .map
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(|k| format!("unknown key '{k}'"))
            .collect();
        self.issues.extend(unknown);
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(self.issues))
        }
    }
}

fn resolve_flat(map: serde_json::Map<String, Value>) -> Result<RunConfig, ConfigError> {
    let mut keys = Keys { map, used: BTreeSet::new(), issues: Vec::new() };

    // particle and couplings
    let mu_e = keys.f64("mu_e", 0.75);
    let mu_f = keys.f64("mu_f", 1.054);
    let omega_eg = keys.f64("omega_eg", 1.5);
    let omega_fe = keys.f64("omega_fe", 0.05);

    let has_geometry = keys.has("geometry.r") || keys.has("geometry.theta");
    let has_couplings = keys.has("v_ee") || keys.has("v_ff");
    if has_geometry && has_couplings {
        keys.issues.push(
            "give either geometry.r/geometry.theta or v_ee/v_ff, not both".to_string(),
        );
    }
    let geometry_r = keys.f64_opt("geometry.r");
    let geometry_theta = keys.f64_opt("geometry.theta");
    let v_ee_key = keys.f64_opt("v_ee");
    let v_ff_key = keys.f64_opt("v_ff");

    // envelope
    let shape = keys.string("envelope.shape", "gaussian");
    let width = keys.f64("envelope.sigma_or_delta", 10.4);
    if (keys.has("envelope.E0") || keys.has("envelope.e0")) && keys.has("envelope.area") {
        keys.issues
            .push("envelope.E0 and envelope.area are mutually exclusive".to_string());
    }
    if keys.has("envelope.E0") && keys.has("envelope.e0") {
        keys.issues.push("give envelope.E0 only once".to_string());
    }
    let e0 = keys.f64_opt("envelope.E0").or_else(|| keys.f64_opt("envelope.e0"));
    let area = keys.f64_opt("envelope.area");

    // carrier
    if keys.has("omega_L") && keys.has("delta_eg") {
        keys.issues.push("omega_L and delta_eg are mutually exclusive".to_string());
    }
    let omega_l_key = keys.f64_opt("omega_L");
    let delta_eg = keys.f64_opt("delta_eg");

    // pulse train
    let t1 = keys.f64("t1", 0.0);
    let omega_1 = keys.f64("Omega1", 0.0);
    let omega_21 = keys.f64("Omega21", std::f64::consts::TAU * 1e-3);
    let phi_1 = keys.f64("phi1_0", 0.0);
    let phi_21 = keys.f64("phi21_0", 0.0);
    let t_rep = keys.f64("T_rep", 1.0);
    let pairs = keys.usize("M", 1000);

    // delay grid and spectra
    let t21_start = keys.f64("t21.start", 0.0);
    let t21_spacing = keys.f64("t21.spacing", 0.5);
    let t21_count = keys.usize("t21.count", 1024);
    let window_sigma_key = keys.f64_opt("window_sigma");
    let pad_factor = keys.usize("spectrum.pad_factor", 4);

    // propagation
    let dt = keys.f64_opt("dt");
    let steps_per_cycle =
        keys.f64("steps_per_cycle", crate::propagator::DEFAULT_STEPS_PER_CYCLE);
    let pad = keys.f64_opt("pad");

    // demodulation
    let mode_key = keys.string("demod.mode", "projection");
    let tau_li = keys.f64("demod.tau_li", std::f64::consts::TAU / omega_21);
    let omega_m = keys.f64("omega_M", 0.0);
    let phi_ref = keys.f64("phi_ref", 0.0);

    // background
    let bg_enabled = keys.bool("background.enabled", true);
    let bg_exclusion = keys.f64("background.exclusion_fwhm", 5.0);
    let bg_dispersive = keys.bool("background.remove_dispersive", true);
    let bg_transient = keys.bool("background.suppress_transient", true);

    // sweep
    let sweep_axis_key = keys.string("sweep.axis", "");
    let sweep_values = keys.f64_array("sweep.values");
    let sweep_ratio = keys.f64("sweep.ratio", DEFAULT_COUPLING_RATIO);
    let sweep_route_key = keys.string("sweep.route", "both");

    // assemble, collecting issues along the way
    let particle = match ParticleSpec::from_transitions(omega_eg, omega_fe, mu_e, mu_f) {
        Ok(p) => Some(p),
        Err(e) => {
            keys.issues.push(e.to_string());
            None
        }
    };

    let couplings = if let (Some(r), Some(theta)) = (geometry_r, geometry_theta) {
        match (Geometry::new(r, theta), particle) {
            (Ok(g), Some(p)) => {
                let v_ee = dipole_coupling(g, p.mu_e, p.mu_e);
                let v_ff = dipole_coupling(g, p.mu_f, p.mu_f);
                match (v_ee, v_ff) {
                    (Ok(a), Ok(b)) => Some((a, b)),
                    _ => {
                        keys.issues.push("geometry produced no valid coupling".into());
                        None
                    }
                }
            }
            (Err(e), _) => {
                keys.issues.push(e.to_string());
                None
            }
            _ => None,
        }
    } else if geometry_r.is_some() || geometry_theta.is_some() {
        keys.issues.push("geometry requires both geometry.r and geometry.theta".into());
        None
    } else {
        let v_ee = v_ee_key.unwrap_or(0.01);
        let v_ff = v_ff_key.unwrap_or(DEFAULT_COUPLING_RATIO * v_ee);
        Some((v_ee, v_ff))
    };

    let envelope = match shape.as_str() {
        "gaussian" => Some(EnvelopeShape::Gaussian { sigma: width, e0: e0.unwrap_or(0.00384) }),
        "rectangular" => {
            Some(EnvelopeShape::Rectangular { delta: width, e0: e0.unwrap_or(0.00384) })
        }
        other => {
            keys.issues.push(format!(
                "envelope.shape must be 'gaussian' or 'rectangular', got '{other}'"
            ));
            None
        }
    };
    let envelope = match (envelope, area) {
        (Some(env), Some(a)) => match env.with_area(a) {
            Ok(e) => Some(e),
            Err(e) => {
                keys.issues.push(e.to_string());
                None
            }
        },
        (env, None) => env,
        (None, _) => None,
    };

    let omega_l = omega_l_key.unwrap_or_else(|| omega_eg - delta_eg.unwrap_or(-0.025));

    let mode = match mode_key.as_str() {
        "projection" => DemodMode::Projection,
        "exponential" => DemodMode::ExponentialFilter { tau_li },
        other => {
            keys.issues
                .push(format!("demod.mode must be 'projection' or 'exponential', got '{other}'"));
            DemodMode::Projection
        }
    };

    let sweep = if sweep_axis_key.is_empty() && sweep_values.is_none() {
        None
    } else {
        let axis = match sweep_axis_key.as_str() {
            "v_ee" => Some(SweepAxis::VEe),
            "sigma" => Some(SweepAxis::Sigma),
            "e0" => Some(SweepAxis::E0),
            other => {
                keys.issues
                    .push(format!("sweep.axis must be 'v_ee', 'sigma' or 'e0', got '{other}'"));
                None
            }
        };
        let route = match sweep_route_key.as_str() {
            "numeric" => Some(SweepRoute::Numeric),
            "analytic" => Some(SweepRoute::Analytic),
            "both" => Some(SweepRoute::Both),
            other => {
                keys.issues.push(format!(
                    "sweep.route must be 'numeric', 'analytic' or 'both', got '{other}'"
                ));
                None
            }
        };
        let values = match &sweep_values {
            Some(v) if !v.is_empty() => Some(v.clone()),
            _ => {
                keys.issues.push("sweep.values must be a non-empty number array".into());
                None
            }
        };
        match (axis, route, values) {
            (Some(axis), Some(route), Some(values)) => {
                Some(SweepSpec { axis, values, ratio: sweep_ratio, route })
            }
            _ => None,
        }
    };

    // resolution window: the standard reduced grid uses 120, the full-size
    // grid 500, anything else scales with the covered delay range
    let range = (t21_count.saturating_sub(1)) as f64 * t21_spacing;
    let window_sigma = window_sigma_key.unwrap_or_else(|| {
        if t21_count == 1024 && (t21_spacing - 0.5).abs() < 1e-12 {
            120.0
        } else if t21_count == 4500 && (t21_spacing - 0.5).abs() < 1e-12 {
            500.0
        } else {
            range * (500.0 / 2250.0)
        }
    });

    if t21_count < 2 {
        keys.issues.push("t21.count must be at least 2".into());
    }
    if t21_spacing <= 0.0 {
        keys.issues.push("t21.spacing must be positive".into());
    }

    let (particle, (v_ee, v_ff), envelope) = match (particle, couplings, envelope) {
        (Some(p), Some(c), Some(e)) => (p, c, e),
        _ => return Err(ConfigError::Validation(keys.issues)),
    };

    let system = match DimerSystem::new(particle, v_ee, v_ff) {
        Ok(s) => s,
        Err(e) => {
            keys.issues.push(e.to_string());
            return Err(ConfigError::Validation(keys.issues));
        }
    };
    let pulses = PulseTrainConfig {
        envelope,
        omega_l,
        t1,
        t21: 0.0,
        omega_1,
        omega_2: omega_1 + omega_21,
        phi_1,
        phi_2: phi_1 + phi_21,
        t_rep,
        pairs,
    };
    if let Err(e) = pulses.validate() {
        keys.issues.push(e.to_string());
    }
    keys.finish()?;

    Ok(RunConfig {
        system,
        pulses,
        propagation: PropagationSettings { dt, steps_per_cycle, pad },
        demod: DemodConfig { mode, omega_m, phi_ref },
        window_sigma,
        t21_grid: T21GridSpec { start: t21_start, spacing: t21_spacing, count: t21_count },
        spectrum_pad_factor: pad_factor,
        background: BackgroundOptions {
            enabled: bg_enabled,
            exclusion_fwhm: bg_exclusion,
            remove_dispersive: bg_dispersive,
            suppress_transient: bg_transient,
        },
        sweep,
    })
}
