//! Shorted-stub delay line at the detector output node.
//!
//! A coaxial stub shorted at the far end sits in parallel with the output
//! load. Its input impedance vanishes at every half-wave resonance, so the
//! gate sinusoid leaking through the diode capacitance is notched out when
//! the round trip lasts one gate period. An avalanche pulse returns from the
//! short inverted one round trip later; a dual-threshold discriminator turns
//! the positive/negative pair into one logic pulse.

use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reported attenuation is capped here; a lossless stub is a perfect short
/// at resonance.
pub const ATTENUATION_CAP_DB: f64 = 120.0;
/// Nepers per decibel of amplitude.
const NEPER_PER_DB: f64 = core::f64::consts::LN_10 / 20.0;
/// Exponential pulses are truncated after this many widths.
const PULSE_SPAN_WIDTHS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StubParams {
    pub z0_ohm: f64,
    pub length_m: f64,
    pub velocity_factor: f64,
    /// Cable loss at `loss_ref_freq_hz`, scaled as `sqrt(f)` elsewhere.
    pub loss_db_per_m: f64,
    pub loss_ref_freq_hz: f64,
    /// Termination in parallel with the stub at the output node. The
    /// driving source is taken to have the same impedance.
    pub load_ohm: f64,
}

impl StubParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("z0_ohm", self.z0_ohm),
            ("length_m", self.length_m),
            ("load_ohm", self.load_ohm),
            ("loss_ref_freq_hz", self.loss_ref_freq_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, v, "must be positive"));
            }
        }
        if !(self.velocity_factor > 0.0 && self.velocity_factor <= 1.0) {
            return Err(Error::invalid(
                "velocity_factor",
                self.velocity_factor,
                "must lie in (0, 1]",
            ));
        }
        if !(self.loss_db_per_m >= 0.0 && self.loss_db_per_m.is_finite()) {
            return Err(Error::invalid(
                "loss_db_per_m",
                self.loss_db_per_m,
                "must be non-negative",
            ));
        }
        Ok(())
    }

    /// 50-ohm cable with velocity factor 0.70 terminated into 50 ohm.
    pub fn rg316(length_m: f64, loss_db_per_m: f64) -> Self {
        Self {
            z0_ohm: 50.0,
            length_m,
            velocity_factor: 0.70,
            loss_db_per_m,
            loss_ref_freq_hz: 200e6,
            load_ohm: 50.0,
        }
    }

    /// Stub whose round trip equals one period of `gate_freq_hz`.
    pub fn matched(gate_freq_hz: f64, velocity_factor: f64, loss_db_per_m: f64) -> Self {
        Self {
            length_m: velocity_factor * SPEED_OF_LIGHT / (2.0 * gate_freq_hz),
            velocity_factor,
            loss_ref_freq_hz: gate_freq_hz,
            ..Self::rg316(1.0, loss_db_per_m)
        }
    }

    pub fn lossless(self) -> Self {
        Self {
            loss_db_per_m: 0.0,
            ..self
        }
    }

    pub fn phase_velocity(&self) -> f64 {
        self.velocity_factor * SPEED_OF_LIGHT
    }

    pub fn round_trip_delay_s(&self) -> f64 {
        2.0 * self.length_m / self.phase_velocity()
    }

    /// Frequency of the `k`-th half-wave resonance.
    pub fn notch_hz(&self, k: u32) -> f64 {
        f64::from(k) * self.phase_velocity() / (2.0 * self.length_m)
    }

    /// Attenuation constant in nepers per metre.
    pub fn alpha(&self, freq_hz: f64) -> f64 {
        self.loss_db_per_m * libm::sqrt(freq_hz / self.loss_ref_freq_hz) * NEPER_PER_DB
    }

    /// Amplitude factor of a signal travelling to the short and back.
    pub fn round_trip_loss(&self, freq_hz: f64) -> f64 {
        libm::exp(-2.0 * self.alpha(freq_hz) * self.length_m)
    }
}

/// `tanh(gamma l)` as `numerator / denominator` with
/// `tanh(x + iy) = (sinh 2x + i sin 2y) / (cosh 2x + cos 2y)`, which keeps
/// the quarter-wave pole finite until the final division.
fn tanh_parts(freq_hz: f64, stub: &StubParams) -> (Complex64, f64) {
    let beta = 2.0 * core::f64::consts::PI * freq_hz / stub.phase_velocity();
    let x = 2.0 * stub.alpha(freq_hz) * stub.length_m;
    let y = 2.0 * beta * stub.length_m;
    (
        Complex64::new(libm::sinh(x), libm::sin(y)),
        libm::cosh(x) + libm::cos(y),
    )
}

/// Input impedance `Z0 tanh(gamma l)` of the shorted stub, with
/// `gamma = alpha + i beta`.
pub fn stub_impedance(freq_hz: f64, stub: &StubParams) -> Complex64 {
    let (num, den) = tanh_parts(freq_hz, stub);
    if den == 0.0 {
        let re = if num.re == 0.0 { 0.0 } else { f64::INFINITY };
        return Complex64::new(re, f64::INFINITY.copysign(num.im));
    }
    num * (stub.z0_ohm / den)
}

/// Output amplitude with the stub connected relative to without it.
pub fn notch_gain(freq_hz: f64, stub: &StubParams) -> f64 {
    let (num, den) = tanh_parts(freq_hz, stub);
    let zl = stub.load_ohm;
    let rs = stub.load_ohm;
    // Divider rs -> (zl || zs) with zs = z0 num / den, multiplied through by den.
    let zs_num = num * stub.z0_ohm;
    let with_stub = (zs_num * zl) / (zs_num * zl + (zs_num + zl * den) * rs);
    let without = zl / (zl + rs);
    with_stub.norm() / without
}

/// Notch attenuation in dB (non-negative, capped at [`ATTENUATION_CAP_DB`]).
pub fn notch_response(freq_hz: f64, stub: &StubParams) -> f64 {
    let gain = notch_gain(freq_hz, stub);
    if gain <= 0.0 {
        return ATTENUATION_CAP_DB;
    }
    (-20.0 * libm::log10(gain)).clamp(0.0, ATTENUATION_CAP_DB)
}

/// `(freq_hz, atten_db)` from `f_min` to `f_max` in steps of `f_step`.
pub fn frequency_response(
    stub: &StubParams,
    f_min: f64,
    f_max: f64,
    f_step: f64,
) -> Result<Vec<(f64, f64)>> {
    stub.validate()?;
    if !(f_min > 0.0 && f_max >= f_min && f_step > 0.0) {
        return Err(Error::invalid(
            "frequency grid",
            f_step,
            "need 0 < f_min <= f_max and a positive step",
        ));
    }
    let n = libm::floor((f_max - f_min) / f_step + 1e-9) as usize + 1;
    Ok((0..n)
        .map(|i| {
            let f = f_min + i as f64 * f_step;
            (f, notch_response(f, stub))
        })
        .collect())
}

/// Grid indices of local attenuation maxima.
pub fn response_peaks(response: &[(f64, f64)]) -> Vec<usize> {
    (1..response.len().saturating_sub(1))
        .filter(|&i| {
            let (a, b, c) = (response[i - 1].1, response[i].1, response[i + 1].1);
            b > a && b >= c
        })
        .collect()
}

/// Cable loss (dB/m at the reference frequency) giving `depth_db` of
/// attenuation at the first notch. Depth falls monotonically with loss, so
/// bisection suffices.
pub fn loss_for_notch_depth(stub: &StubParams, depth_db: f64) -> Result<f64> {
    stub.validate()?;
    if !(depth_db > 0.0 && depth_db < ATTENUATION_CAP_DB) {
        return Err(Error::invalid(
            "depth_db",
            depth_db,
            "must lie strictly between 0 dB and the reporting cap",
        ));
    }
    let f = stub.notch_hz(1);
    let depth = |loss: f64| {
        notch_response(
            f,
            &StubParams {
                loss_db_per_m: loss,
                ..*stub
            },
        )
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while depth(hi) > depth_db {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::invalid(
                "depth_db",
                depth_db,
                "not reachable with finite cable loss",
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if depth(mid) > depth_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub gate_freq_hz: f64,
    /// Leakage amplitude before the notch.
    pub gate_leak_amplitude_v: f64,
    pub avalanche_amplitude_v: f64,
    /// Decay constant of the one-sided exponential avalanche pulse.
    pub avalanche_width_s: f64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub avalanche_times_s: Vec<f64>,
    pub noise_rms_v: f64,
    pub noise_seed: u64,
}

impl TraceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_freq_hz > 0.0) {
            return Err(Error::invalid(
                "gate_freq_hz",
                self.gate_freq_hz,
                "must be positive",
            ));
        }
        if !(self.sample_rate_hz >= 10.0 * self.gate_freq_hz) {
            return Err(Error::invalid(
                "sample_rate_hz",
                self.sample_rate_hz,
                "must be at least ten times the gate frequency",
            ));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid(
                "duration_s",
                self.duration_s,
                "must be positive",
            ));
        }
        if !(self.avalanche_width_s > 0.0) {
            return Err(Error::invalid(
                "avalanche_width_s",
                self.avalanche_width_s,
                "must be positive",
            ));
        }
        if !(self.noise_rms_v >= 0.0) {
            return Err(Error::invalid(
                "noise_rms_v",
                self.noise_rms_v,
                "must be non-negative",
            ));
        }
        if let Some(&t) = self
            .avalanche_times_s
            .iter()
            .find(|&&t| !(0.0..self.duration_s).contains(&t))
        {
            return Err(Error::invalid(
                "avalanche time",
                t,
                "must lie within the trace duration",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate_hz
    }
}

fn add_pulse(samples: &mut [f64], fs: f64, t0: f64, amplitude: f64, width: f64) {
    // Sub-ppb tolerance so pulses starting on a sample keep that sample.
    let first = libm::ceil(t0 * fs - 1e-6).max(0.0) as usize;
    let last = libm::ceil((t0 + PULSE_SPAN_WIDTHS * width) * fs) as usize;
    for i in first..last.min(samples.len()) {
        let dt = i as f64 / fs - t0;
        samples[i] += amplitude * libm::exp(-dt / width);
    }
}

/// Output-node voltage: notched gate leakage leading the gate peak by 90
/// degrees, each avalanche plus its inverted reflection, and white noise.
pub fn synthesize_trace(tp: &TraceParams, stub: &StubParams) -> Result<Trace> {
    tp.validate()?;
    stub.validate()?;
    let fs = tp.sample_rate_hz;
    let n = libm::ceil(tp.duration_s * fs) as usize;
    let omega = 2.0 * core::f64::consts::PI * tp.gate_freq_hz;
    let leak = tp.gate_leak_amplitude_v * notch_gain(tp.gate_freq_hz, stub);

    // Gate peaks at t = k / f_gate; cos(wt + pi/2) leads that by a quarter period.
    let mut samples: Vec<f64> = (0..n)
        .map(|i| -leak * libm::sin(omega * i as f64 / fs))
        .collect();

    let delay = stub.round_trip_delay_s();
    let reflected = -tp.avalanche_amplitude_v * stub.round_trip_loss(tp.gate_freq_hz);
    for &t0 in &tp.avalanche_times_s {
        add_pulse(
            &mut samples,
            fs,
            t0,
            tp.avalanche_amplitude_v,
            tp.avalanche_width_s,
        );
        add_pulse(
            &mut samples,
            fs,
            t0 + delay,
            reflected,
            tp.avalanche_width_s,
        );
    }

    if tp.noise_rms_v > 0.0 {
        let mut rng = SimRng::new(tp.noise_seed);
        for s in &mut samples {
            *s += tp.noise_rms_v * rng.normal();
        }
    }
    Ok(Trace {
        sample_rate_hz: fs,
        samples,
    })
}

/// One discriminator output pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogicPulse {
    pub start_index: usize,
    pub time_s: f64,
    /// `None` when the trace ended before the lower threshold was crossed.
    pub end_index: Option<usize>,
    pub width_s: Option<f64>,
}

impl LogicPulse {
    pub fn is_complete(&self) -> bool {
        self.end_index.is_some()
    }
}

/// Schmitt trigger: rising through `upper` opens a pulse, falling through
/// `lower` closes it.
pub fn discriminate(
    samples: &[f64],
    upper: f64,
    lower: f64,
    sample_rate_hz: f64,
) -> Result<Vec<LogicPulse>> {
    if !(upper > 0.0 && lower < 0.0) {
        return Err(Error::invalid(
            "thresholds",
            upper,
            "need upper > 0 > lower",
        ));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::invalid(
            "sample_rate_hz",
            sample_rate_hz,
            "must be positive",
        ));
    }
    let mut pulses = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &v) in samples.iter().enumerate() {
        match open {
            None if v >= upper => open = Some(i),
            Some(start) if v <= lower => {
                pulses.push(LogicPulse {
                    start_index: start,
                    time_s: start as f64 / sample_rate_hz,
                    end_index: Some(i),
                    width_s: Some((i - start) as f64 / sample_rate_hz),
                });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        pulses.push(LogicPulse {
            start_index: start,
            time_s: start as f64 / sample_rate_hz,
            end_index: None,
            width_s: None,
        });
    }
    Ok(pulses)
}
