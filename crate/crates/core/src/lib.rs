//! Sine-wave-gated single-photon avalanche detector toolkit.
//!
//! The crate is `no_std` (it needs `alloc`) and splits into:
//!
//! - [`model`]: closed-form detection, interval and rate formulas.
//! - [`montecarlo`]: seeded gate-level event simulation and the afterpulse
//!   cascade estimator.
//! - [`interval`]: first-interval histograms, geometric tail fits and the
//!   quantum-efficiency / afterpulse-probability characterization.
//! - [`rate`]: count-rate curve fits with and without pulse-quantized dead time.
//! - [`waveform`]: shorted-stub delay line, synthetic output traces and the
//!   dual-threshold discriminator.
//!
//! All float math goes through `libm`, so results do not depend on the
//! platform's libm.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
pub mod fit;
pub mod interval;
pub mod model;
pub mod montecarlo;
pub mod rate;
pub mod rng;
pub mod stats;
pub mod waveform;

pub use error::{Error, Result};
pub use interval::{CharacterizationResult, IntervalHistogram};
pub use model::{AfterpulseProfile, DetectorParams, OperatingPoint, SourceParams, TailFit};
pub use montecarlo::EventStream;
pub use rate::{RateCurve, RateFitResult};
pub use waveform::{StubParams, TraceParams};
