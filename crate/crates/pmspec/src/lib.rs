//! Simulator and analytics for phase-modulated nonlinear fluorescence
//! spectroscopy of two weakly dipole-dipole coupled three-level emitters.
//!
//! The pipeline has two independent routes to the same observables:
//!
//! - a fully numerical route ([`propagator`] + [`demod`]) that integrates the
//!   time-dependent Schrödinger equation for every pulse-pair configuration,
//!   lock-in demodulates the fluorescence yield at harmonics of the pulse-pair
//!   phase-modulation frequency, and Fourier transforms the result into
//!   complex spectra;
//! - a perturbative route ([`perturbation`]) built from single- and
//!   double-interaction spectral amplitudes of the pulse envelope, with fully
//!   closed forms for rectangular pulses and numerical quadrature for
//!   Gaussian ones.
//!
//! [`sweep`] drives both routes over coupling strength, pulse width, and
//! field strength and extracts peak heights; [`config`] and [`output`] hold
//! the run configuration, file formats, and caching used by the `pmspec`
//! binary.
//!
//! All energies are in units of a reference frequency and times in its
//! inverse; no unit conversions happen anywhere in the crate.

pub mod config;
pub mod demod;
pub mod model;
pub mod output;
pub mod perturbation;
pub mod propagator;
pub mod pulses;
pub mod sweep;



pub use config::RunConfig;
pub use demod::{ComplexSpectrum, DemodSettings, DemodSignal};
pub use model::{DimerSystem, Geometry, ParticleSpec};
pub use propagator::{PropagationSettings, SignalGrid};
pub use pulses::{EnvelopeShape, PulseTrainConfig};
pub use sweep::{PeakTable, SweepSpec};

