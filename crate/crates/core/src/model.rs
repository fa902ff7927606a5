//! Closed-form detector statistics for a gated detector under pulsed light.
//!
//! Bins are source periods: bin `n` is the `n`-th source pulse after a
//! registered count. The afterpulse profile gives the hazard `p_a(n)` of the
//! first afterpulse landing in bin `n`, given none before it.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Factors of `(1 - x)` below this are accumulated as logarithms.
const LOG_SPACE_THRESHOLD: f64 = 1e-8;

/// Per-bin afterpulse hazards `p_a(1)..p_a(n_a)`; zero beyond `n_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AfterpulseProfile {
    probs: Vec<f64>,
}

impl AfterpulseProfile {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid(
                "afterpulse cutoff n_a",
                0.0,
                "profile needs at least one bin",
            ));
        }
        for &p in &probs {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(
                    "afterpulse probability",
                    p,
                    "must lie in [0, 1)",
                ));
            }
        }
        Ok(Self { probs })
    }

    /// A single-bin profile with zero afterpulse probability.
    pub fn none() -> Self {
        Self { probs: vec![0.0] }
    }

    pub fn n_a(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Hazard for bin `n` (1-based); zero for `n == 0` and `n > n_a`.
    pub fn hazard(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.probs.get(n - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0)
    }
}

impl TryFrom<Vec<f64>> for AfterpulseProfile {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<AfterpulseProfile> for Vec<f64> {
    fn from(profile: AfterpulseProfile) -> Self {
        profile.probs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub qe: f64,
    /// Dark-count probability per gate (every gate, not only source-aligned ones).
    pub dark_prob: f64,
    pub afterpulse: AfterpulseProfile,
    /// Source pulses of insensitivity after each registered event.
    pub dead_pulses: u32,
}

impl DetectorParams {
    pub fn new(
        qe: f64,
        dark_prob: f64,
        afterpulse: AfterpulseProfile,
        dead_pulses: u32,
    ) -> Result<Self> {
        let params = Self {
            qe,
            dark_prob,
            afterpulse,
            dead_pulses,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_closed("qe", self.qe)?;
        if !(0.0..1.0).contains(&self.dark_prob) {
            return Err(Error::invalid(
                "dark_prob",
                self.dark_prob,
                "must lie in [0, 1)",
            ));
        }
        // Re-check the profile in case it came from a struct literal path.
        AfterpulseProfile::new(self.afterpulse.probs.clone()).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub rep_rate_hz: f64,
    /// Mean photon number per pulse.
    pub mu: f64,
}

impl SourceParams {
    pub fn new(rep_rate_hz: f64, mu: f64) -> Result<Self> {
        let params = Self { rep_rate_hz, mu };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz > 0.0 && self.rep_rate_hz.is_finite()) {
            return Err(Error::invalid(
                "rep_rate_hz",
                self.rep_rate_hz,
                "must be positive and finite",
            ));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", self.mu, "must be non-negative"));
        }
        Ok(())
    }

    /// The gate runs at twice the source repetition rate.
    pub fn gate_rate_hz(&self) -> f64 {
        2.0 * self.rep_rate_hz
    }

    pub fn gate_period_s(&self) -> f64 {
        1.0 / self.gate_rate_hz()
    }

    /// Mean incident photons per second.
    pub fn photon_rate(&self) -> f64 {
        self.mu * self.rep_rate_hz
    }
}

/// Diode temperature and overvoltage; carried as run metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub temperature_c: f64,
    pub overvoltage_v: f64,
}

impl OperatingPoint {
    pub fn new(temperature_c: f64, overvoltage_v: f64) -> Result<Self> {
        if !(overvoltage_v > 0.0) {
            return Err(Error::invalid(
                "overvoltage_v",
                overvoltage_v,
                "must be positive",
            ));
        }
        Ok(Self {
            temperature_c,
            overvoltage_v,
        })
    }
}

/// Result of fitting `A p (1-p)^(n-1)` to the tail of an interval histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub amplitude: f64,
    pub p: f64,
    /// Covariance of `(amplitude, p)`.
    pub cov: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl TailFit {
    pub fn amplitude_sigma(&self) -> f64 {
        libm::sqrt(self.cov[0][0])
    }

    pub fn p_sigma(&self) -> f64 {
        libm::sqrt(self.cov[1][1])
    }

    pub fn app(&self) -> Result<f64> {
        app_from_amplitude(self.amplitude)
    }

    pub fn qe(&self, mu: f64) -> Result<f64> {
        qe_from_p(self.p, mu)
    }
}

fn check_unit_closed(name: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::invalid(name, x, "must lie in [0, 1]"))
    }
}

/// First-count interval distribution `p(1)..p(n_max)`:
/// `p(n) = (1 - Q_n) * prod_{k<n} Q_k` with `Q_n = (1-p)(1-p_a(n))`.
pub fn first_count_distribution(
    p: f64,
    afterpulse: &AfterpulseProfile,
    n_max: usize,
) -> Result<Vec<f64>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(
            "p",
            p,
            "must lie in (0, 1] for a normalisable distribution",
        ));
    }
    if n_max == 0 {
        return Err(Error::invalid("n_max", 0.0, "must be at least 1"));
    }

    let mut out = Vec::with_capacity(n_max);
    // Running product of Q_k, switched to log form once a factor gets tiny.
    let mut survive = 1.0;
    let mut log_survive = 0.0;
    let mut log_mode = false;
    for n in 1..=n_max {
        let pa = afterpulse.hazard(n);
        // 1 - (1-p)(1-pa) without cancellation.
        let hit = p + pa - p * pa;
        let current = if log_mode {
            libm::exp(log_survive)
        } else {
            survive
        };
        out.push(hit * current);

        let q = (1.0 - p) * (1.0 - pa);
        if !log_mode && q < LOG_SPACE_THRESHOLD {
            log_mode = true;
            log_survive = if survive > 0.0 {
                libm::log(survive)
            } else {
                f64::NEG_INFINITY
            };
        }
        if log_mode {
            log_survive += libm::log1p(-p) + libm::log1p(-pa);
        } else {
            survive *= q;
        }
    }
    Ok(out)
}

/// `prod_{k=1}^{n} Q_k`, the probability of no count in the first `n` bins.
pub fn survival(p: f64, afterpulse: &AfterpulseProfile, n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * (1.0 - p) * (1.0 - afterpulse.hazard(k)))
}

/// Tail amplitude `A = prod_{n=1}^{n_a} (1 - p_a(n))`.
pub fn tail_amplitude(afterpulse: &AfterpulseProfile) -> f64 {
    let probs = afterpulse.probs();
    if probs.iter().any(|&x| 1.0 - x < LOG_SPACE_THRESHOLD) {
        libm::exp(probs.iter().map(|&x| libm::log1p(-x)).sum::<f64>())
    } else {
        probs.iter().map(|&x| 1.0 - x).product()
    }
}

/// Afterpulse probability `(1 - A) / A`, the summed series `p1 + p1^2 + ...`
/// with `p1 = 1 - A`.
pub fn app_from_amplitude(amplitude: f64) -> Result<f64> {
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(Error::invalid(
            "tail amplitude A",
            amplitude,
            "must lie in (0, 1]",
        ));
    }
    Ok((1.0 - amplitude) / amplitude)
}

/// Detection probability for a coherent pulse: `1 - exp(-mu * qe)`.
pub fn detection_prob(mu: f64, qe: f64) -> f64 {
    -libm::expm1(-mu * qe)
}

/// Inverse of [`detection_prob`]: `qe = -ln(1 - p) / mu`.
pub fn qe_from_p(p: f64, mu: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid("p", p, "must lie in [0, 1)"));
    }
    if !(mu > 0.0) {
        return Err(Error::invalid(
            "mu",
            mu,
            "must be positive to determine the efficiency",
        ));
    }
    Ok(-libm::log1p(-p) / mu)
}

/// Ideal (dead-time-free) count rate `nu_r (1 - exp(-n_ph qe / nu_r))`.
pub fn expected_count_rate(photon_rate: f64, qe: f64, rep_rate_hz: f64) -> f64 {
    rep_rate_hz * detection_prob(photon_rate / rep_rate_hz, qe)
}

/// Count rate of a detector blind for `dead_pulses` pulses after each count.
pub fn dead_time_rate(count_rate: f64, dead_pulses: u32, rep_rate_hz: f64) -> f64 {
    count_rate / (1.0 + count_rate * f64::from(dead_pulses) / rep_rate_hz)
}
