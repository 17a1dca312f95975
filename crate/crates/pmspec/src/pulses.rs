//! Phase-modulated pulse-pair field: envelope shapes and the full carrier-
//! resolved electric field of a train of pulse pairs.
//!
//! Each pair holds two identical pulses at arrival times t1 and t2 = t1 + t21.
//! Pulse j carries a slow linear phase sweep Omega_j evaluated at absolute
//! lab time, so pair m (at tau_m = m T_rep) sees per-pulse phase offsets
//! Omega_j (t + m T_rep) + phi_j.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gaussian envelopes are cut off at this many sigma; the discarded value is
/// below 2e-8 of the peak and bounds every propagation window.
pub const GAUSSIAN_TRUNCATION_WIDTHS: f64 = 6.0;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("invalid pulse configuration: {0}")]
    InvalidConfig(String),
}

/// Pulse envelope: shape, width parameter, and peak field amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum EnvelopeShape {
    Gaussian { sigma: f64, e0: f64 },
    Rectangular { delta: f64, e0: f64 },
}

impl EnvelopeShape {
    pub fn gaussian(sigma: f64, e0: f64) -> Result<Self, PulseError> {
        let env = Self::Gaussian { sigma, e0 };
        env.validate()?;
        Ok(env)
    }

    pub fn rectangular(delta: f64, e0: f64) -> Result<Self, PulseError> {
        let env = Self::Rectangular { delta, e0 };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        let (width, e0) = match *self {
            Self::Gaussian { sigma, e0 } => (sigma, e0),
            Self::Rectangular { delta, e0 } => (delta, e0),
        };
        if !(width > 0.0) {
            return Err(PulseError::InvalidEnvelope(format!("width must be positive, got {width}")));
        }
        if !(e0 >= 0.0) {
            return Err(PulseError::InvalidEnvelope(format!("peak amplitude must be >= 0, got {e0}")));
        }
        Ok(())
    }

    /// Envelope value at time `t` relative to the pulse center.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma, e0 } => {
                if t.abs() > GAUSSIAN_TRUNCATION_WIDTHS * sigma {
                    0.0
                } else {
                    e0 * (-t * t / (2.0 * sigma * sigma)).exp()
                }
            }
            Self::Rectangular { delta, e0 } => {
                if t.abs() <= delta / 2.0 {
                    e0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn peak_amplitude(&self) -> f64 {
        match *self {
            Self::Gaussian { e0, .. } | Self::Rectangular { e0, .. } => e0,
        }
    }

    /// Width parameter: sigma for Gaussian, delta for rectangular.
    pub fn width(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma, .. } => sigma,
            Self::Rectangular { delta, .. } => delta,
        }
    }

    /// Half-width of the support: the field is exactly zero beyond this.
    pub fn half_support(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma, .. } => GAUSSIAN_TRUNCATION_WIDTHS * sigma,
            Self::Rectangular { delta, .. } => delta / 2.0,
        }
    }

    /// Pulse area, the time integral of the (untruncated) envelope.
    pub fn area(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma, e0 } => e0 * sigma * (2.0 * std::f64::consts::PI).sqrt(),
            Self::Rectangular { delta, e0 } => e0 * delta,
        }
    }

    /// Rescale the peak amplitude so the area hits `target`. At fixed area
    /// the Gaussian amplitude scales like 1/sigma.
    pub fn with_area(&self, target: f64) -> Result<Self, PulseError> {
        if !(target > 0.0) {
            return Err(PulseError::InvalidEnvelope(format!("target area must be positive, got {target}")));
        }
        Ok(match *self {
            Self::Gaussian { sigma, .. } => Self::Gaussian {
                sigma,
                e0: target / (sigma * (2.0 * std::f64::consts::PI).sqrt()),
            },
            Self::Rectangular { delta, .. } => Self::Rectangular { delta, e0: target / delta },
        })
    }
}

/// One train of phase-modulated pulse pairs.
///
/// `t21` is the intra-pair delay being scanned; grid drivers clone the config
/// with [`PulseTrainConfig::with_t21`] per delay value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrainConfig {
    pub envelope: EnvelopeShape,
    /// Carrier frequency, common to both pulses.
    pub omega_l: f64,
    /// Arrival time of the first pulse on the per-pair clock.
    pub t1: f64,
    /// Intra-pair delay; the second pulse arrives at t1 + t21.
    pub t21: f64,
    /// Phase-sweep rates of the two pulses; only the difference survives
    /// demodulation.
    pub omega_1: f64,
    pub omega_2: f64,
    /// Phase offsets of the two pulses.
    pub phi_1: f64,
    pub phi_2: f64,
    /// Repetition time between pairs.
    pub t_rep: f64,
    /// Number of pulse pairs in the train.
    pub pairs: usize,
}

impl PulseTrainConfig {
    pub fn validate(&self) -> Result<(), PulseError> {
        self.envelope.validate()?;
        if self.t21 < 0.0 {
            return Err(PulseError::InvalidConfig(format!("t21 must be >= 0, got {}", self.t21)));
        }
        if !(self.t_rep > 0.0) {
            return Err(PulseError::InvalidConfig(format!("t_rep must be positive, got {}", self.t_rep)));
        }
        if self.pairs == 0 {
            return Err(PulseError::InvalidConfig("need at least one pulse pair".into()));
        }
        Ok(())
    }

    pub fn t2(&self) -> f64 {
        self.t1 + self.t21
    }

    /// Modulation frequency of the pair, Omega_2 - Omega_1.
    pub fn omega_21(&self) -> f64 {
        self.omega_2 - self.omega_1
    }

    pub fn phi_21(&self) -> f64 {
        self.phi_2 - self.phi_1
    }

    pub fn with_t21(mut self, t21: f64) -> Self {
        self.t21 = t21;
        self
    }

    /// Modulation time of pair m.
    pub fn tau_m(&self, m: usize) -> f64 {
        m as f64 * self.t_rep
    }

    /// Effective carrier of pulse j in its own frame; the sweep term adds
    /// Omega_j to the optical frequency.
    pub fn effective_carrier(&self, j: usize) -> f64 {
        self.omega_l + self.sweep_rate(j)
    }

    pub fn sweep_rate(&self, j: usize) -> f64 {
        match j {
            1 => self.omega_1,
            2 => self.omega_2,
            _ => panic!("pulse index must be 1 or 2"),
        }
    }

    fn arrival(&self, j: usize) -> f64 {
        match j {
            1 => self.t1,
            2 => self.t2(),
            _ => panic!("pulse index must be 1 or 2"),
        }
    }

    fn phi_0(&self, j: usize) -> f64 {
        match j {
            1 => self.phi_1,
            2 => self.phi_2,
            _ => panic!("pulse index must be 1 or 2"),
        }
    }

    /// Total carrier phase of pulse j at the pulse center, for pair m:
    /// Omega_j (t_j + tau_m) + phi_j. In the pulse frame the field reads
    /// A(s) cos[(omega_L + Omega_j) s + phase_offset].
    pub fn phase_offset(&self, j: usize, m: usize) -> f64 {
        self.sweep_rate(j) * (self.arrival(j) + self.tau_m(m)) + self.phi_0(j)
    }

    /// The t21-dependent part of the pulse-pair beat phase that a lock-in
    /// reference tracking the pair itself acquires on top of Omega_21 tau_m:
    /// Omega_2 t21 + Omega_21 t1.
    pub fn reference_extra_phase(&self) -> f64 {
        self.omega_2 * self.t21 + self.omega_21() * self.t1
    }
}

/// Electric field of pulse pair `m` at time `t` on the per-pair clock
/// (pulse centers at t1 and t1 + t21); the phase sweep is evaluated at the
/// absolute lab time t + m T_rep.
pub fn field_value(cfg: &PulseTrainConfig, m: usize, t: f64) -> f64 {
    debug_assert!(m < cfg.pairs);
    let mut field = 0.0;
    for j in [1, 2] {
        let s = t - cfg.arrival(j);
        let env = cfg.envelope.value(s);
        if env != 0.0 {
            let phase = cfg.omega_l * s + cfg.sweep_rate(j) * (t + cfg.tau_m(m)) + cfg.phi_0(j);
            field += env * phase.cos();
        }
    }
    field
}
