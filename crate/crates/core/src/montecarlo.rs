//! Gate-level Monte Carlo of a gated detector under pulsed illumination.
//!
//! Gates are indexed from zero at twice the source repetition rate; source
//! pulses arrive on even gates. The simulation is event driven: the next
//! photon detection and the next dark count are drawn as geometric skips,
//! and after every avalanche the trap state draws where (if anywhere) the
//! first afterpulse falls. An avalanche replaces the trap state of the
//! previous one, so the first-count statistics restart at every event.
//!
//! Afterpulse bin `k` of the profile is the gate `2k` after the avalanche,
//! one source period per bin. Dead time blinds all mechanisms for
//! `2 * dead_pulses` gates after each recorded event.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{detection_prob, AfterpulseProfile, DetectorParams, SourceParams};
use crate::rng::SimRng;
use crate::stats::mean_std;

/// Default cap on the number of recorded events (2 GiB of gate indices).
pub const DEFAULT_MAX_EVENTS: usize = 1 << 28;

/// Recorded detection events in gate units, with what produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub events: Vec<u64>,
    pub n_gates: u64,
    pub seed: u64,
    pub detector: DetectorParams,
    pub source: SourceParams,
}

impl EventStream {
    /// Builds a stream from externally supplied indices, checking ordering.
    pub fn new(
        events: Vec<u64>,
        n_gates: u64,
        seed: u64,
        detector: DetectorParams,
        source: SourceParams,
    ) -> Result<Self> {
        detector.validate()?;
        source.validate()?;
        if let Some(w) = events.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "event index",
                w[1] as f64,
                "indices must be strictly increasing",
            ));
        }
        if let Some(&last) = events.last() {
            if last >= n_gates {
                return Err(Error::invalid(
                    "event index",
                    last as f64,
                    "index outside the simulated gate range",
                ));
            }
        }
        Ok(Self {
            events,
            n_gates,
            seed,
            detector,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_gates as f64 / self.source.gate_rate_hz()
    }

    pub fn count_rate(&self) -> f64 {
        self.events.len() as f64 / self.duration_s()
    }

    /// Keeps only events on source-aligned (even) gates, as a coincidence
    /// circuit with the source would.
    pub fn source_coincident(&self) -> EventStream {
        EventStream {
            events: self.events.iter().copied().filter(|g| g % 2 == 0).collect(),
            ..self.clone()
        }
    }
}

/// Pending afterpulse left by the most recent avalanche.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrapState {
    pending: Option<u64>,
}

impl TrapState {
    /// Refills the traps after an avalanche at `gate`. Trials falling before
    /// `live_from` (dead time) are skipped.
    pub fn arm(
        &mut self,
        gate: u64,
        live_from: u64,
        profile: &AfterpulseProfile,
        rng: &mut SimRng,
    ) {
        self.pending = None;
        for (k, &pa) in profile.probs().iter().enumerate() {
            let at = gate.saturating_add(2 * (k as u64 + 1));
            if at < live_from || pa == 0.0 {
                continue;
            }
            if rng.bernoulli(pa) {
                self.pending = Some(at);
                return;
            }
        }
    }

    /// Gate of the scheduled afterpulse, if any. Never more than `n_a`
    /// source periods after the avalanche that armed it.
    pub fn pending(&self) -> Option<u64> {
        self.pending
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub max_events: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

pub fn simulate(
    detector: &DetectorParams,
    source: &SourceParams,
    n_gates: u64,
    seed: u64,
) -> Result<EventStream> {
    simulate_with(detector, source, n_gates, seed, &SimOptions::default())
}

pub fn simulate_with(
    detector: &DetectorParams,
    source: &SourceParams,
    n_gates: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<EventStream> {
    detector.validate()?;
    source.validate()?;
    if n_gates == 0 {
        return Err(Error::invalid("n_gates", 0.0, "must be at least 1"));
    }

    let p = detection_prob(source.mu, detector.qe);
    let dead_gates = 2 * u64::from(detector.dead_pulses);
    let mut rng = SimRng::new(seed);
    let mut trap = TrapState::default();
    let mut live_from = 0u64;
    let mut events = Vec::new();

    loop {
        let first_even = live_from.saturating_add(live_from % 2);
        let photon = rng
            .geometric_failures(p)
            .map(|k| first_even.saturating_add(k.saturating_mul(2)));
        let dark = rng
            .geometric_failures(detector.dark_prob)
            .map(|k| live_from.saturating_add(k));
        let next = [photon, dark, trap.pending()].into_iter().flatten().min();
        let Some(gate) = next.filter(|&g| g < n_gates) else {
            break;
        };
        if events.len() >= opts.max_events {
            return Err(Error::BudgetExceeded {
                limit: opts.max_events,
                gate,
                n_gates,
            });
        }
        events.push(gate);
        live_from = gate + 1 + dead_gates;
        trap.arm(gate, live_from, &detector.afterpulse, &mut rng);
    }

    Ok(EventStream {
        events,
        n_gates,
        seed,
        detector: detector.clone(),
        source: *source,
    })
}

/// Mean number of afterpulses per primary avalanche with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_primaries: u64,
}

/// Afterpulse-only cascades: each primary waits for its first afterpulse,
/// which then starts the same wait again, until a wait ends empty.
pub fn cascade_oracle(
    profile: &AfterpulseProfile,
    n_primaries: u64,
    seed: u64,
) -> Result<CascadeEstimate> {
    if n_primaries == 0 {
        return Err(Error::invalid("n_primaries", 0.0, "must be at least 1"));
    }
    let mut rng = SimRng::new(seed);
    let mut trap = TrapState::default();
    let mut sum = 0u64;
    let mut sum_sq = 0u128;
    for _ in 0..n_primaries {
        let mut count = 0u64;
        loop {
            trap.arm(0, 0, profile, &mut rng);
            if trap.pending().is_none() {
                break;
            }
            count += 1;
        }
        sum += count;
        sum_sq += u128::from(count) * u128::from(count);
    }
    let n = n_primaries as f64;
    let mean = sum as f64 / n;
    let std_err = if n_primaries > 1 {
        let var = (sum_sq as f64 - n * mean * mean) / (n - 1.0);
        libm::sqrt(var.max(0.0) / n)
    } else {
        f64::NAN
    };
    Ok(CascadeEstimate {
        mean,
        std_err,
        n_primaries,
    })
}

/// Number of whole gates in `window_s` at the stream's gate rate.
pub fn gates_per_window(source: &SourceParams, window_s: f64) -> Result<u64> {
    let gates = window_s * source.gate_rate_hz();
    if !(gates >= 1.0 - 1e-9) {
        return Err(Error::invalid(
            "window_s",
            window_s,
            "window must span at least one gate",
        ));
    }
    let whole = libm::round(gates);
    if (gates - whole).abs() > 1e-6 * whole {
        return Err(Error::invalid(
            "window_s",
            window_s,
            "window must be a whole number of gates",
        ));
    }
    Ok(whole as u64)
}

/// Events per consecutive window. A trailing partial window is dropped.
pub fn window_counts(stream: &EventStream, window_s: f64) -> Result<Vec<u64>> {
    let gpw = gates_per_window(&stream.source, window_s)?;
    let n_windows = stream.n_gates / gpw;
    if n_windows == 0 {
        return Err(Error::InsufficientData {
            what: "acquisition windows",
            needed: 1,
            found: 0,
        });
    }
    let mut counts = alloc::vec![0u64; n_windows as usize];
    for &g in &stream.events {
        let w = g / gpw;
        if w >= n_windows {
            break;
        }
        counts[w as usize] += 1;
    }
    Ok(counts)
}

/// Mean rate and its standard error from per-window counts.
pub fn windowed_rate(counts: &[u64], window_s: f64) -> (f64, f64) {
    let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / window_s).collect();
    let (mean, std) = mean_std(&rates);
    (mean, std / libm::sqrt(rates.len() as f64))
}
