//! First-interval histograms and the afterpulse / efficiency extraction.
//!
//! Each event opens a window of `n_bins` source periods. The separation to
//! the next event is measured in gates: odd separations are not in
//! coincidence with the source and are discarded, even ones land in bin
//! `separation / 2`. Windows do not overlap: the next window opens at the
//! event after the one that closed the previous window.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, Data, Model, Options};
use crate::model::{app_from_amplitude, qe_from_p, OperatingPoint, SourceParams, TailFit};
use crate::montecarlo::EventStream;
use crate::stats::mean_std;

/// Minimum number of populated bins beyond the afterpulse cutoff.
pub const MIN_TAIL_BINS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalHistogram {
    /// `counts[n - 1]` holds bin `n`, for `n = 1..=n_bins`.
    counts: Vec<u64>,
    pub discarded_odd: u64,
    /// Windows whose start had no further event within `n_bins` periods.
    pub no_second: u64,
    pub total_windows: u64,
}

impl IntervalHistogram {
    pub fn empty(n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::invalid(
                "n_bins",
                n_bins as f64,
                "histogram needs at least 2 bins",
            ));
        }
        Ok(Self {
            counts: alloc::vec![0; n_bins],
            discarded_odd: 0,
            no_second: 0,
            total_windows: 0,
        })
    }

    /// Builds a histogram from given bin counts (bins `1..=counts.len()`).
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let mut h = Self::empty(counts.len())?;
        h.total_windows = counts.iter().sum();
        h.counts = counts;
        Ok(h)
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Count in bin `n` (1-based).
    pub fn count(&self, n: usize) -> u64 {
        self.counts[n - 1]
    }

    pub fn accepted(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts divided by the total accepted count.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.accepted() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Adds the counts of a histogram built over a disjoint stream segment.
    pub fn merge(&mut self, other: &IntervalHistogram) -> Result<()> {
        if other.n_bins() != self.n_bins() {
            return Err(Error::invalid(
                "n_bins",
                other.n_bins() as f64,
                "merged histograms must have equal bin counts",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.discarded_odd += other.discarded_odd;
        self.no_second += other.no_second;
        self.total_windows += other.total_windows;
        Ok(())
    }

    /// Tally windows over a slice of gate indices.
    pub fn accumulate(&mut self, events: &[u64]) {
        let max_sep = 2 * self.n_bins() as u64;
        let mut i = 0;
        while i < events.len() {
            self.total_windows += 1;
            let Some(&next) = events.get(i + 1) else {
                self.no_second += 1;
                break;
            };
            let sep = next - events[i];
            if sep > max_sep {
                self.no_second += 1;
                i += 1;
                continue;
            }
            if sep % 2 == 1 {
                self.discarded_odd += 1;
            } else {
                self.counts[(sep / 2) as usize - 1] += 1;
            }
            i += 2;
        }
    }
}

fn check_source(stream: &EventStream, source: &SourceParams) -> Result<()> {
    let a = stream.source.rep_rate_hz;
    let b = source.rep_rate_hz;
    if (a - b).abs() > 1e-9 * b.abs() {
        return Err(Error::UnitMismatch {
            stream_hz: a,
            expected_hz: b,
        });
    }
    Ok(())
}

pub fn build_histogram(
    stream: &EventStream,
    source: &SourceParams,
    n_bins: usize,
) -> Result<IntervalHistogram> {
    check_source(stream, source)?;
    let mut h = IntervalHistogram::empty(n_bins)?;
    h.accumulate(&stream.events);
    Ok(h)
}

/// `A p (1-p)^(n-1)` with parameters `[A, p]`.
struct GeometricTail;

impl Model<2> for GeometricTail {
    fn eval(&self, n: f64, params: &[f64; 2]) -> (f64, [f64; 2]) {
        let [a, p] = *params;
        let q = 1.0 - p;
        // q^(n-2) evaluated directly keeps p = 1 finite for n >= 2.
        let q_nm2 = libm::pow(q, n - 2.0);
        let q_nm1 = if n >= 2.0 { q_nm2 * q } else { 1.0 };
        let d_da = p * q_nm1;
        let d_dp = if n >= 2.0 {
            a * q_nm2 * (1.0 - n * p)
        } else {
            a
        };
        (a * d_da, [d_da, d_dp])
    }
}

/// Fits the geometric tail to bins `n_a + 1 ..= counts.len()` of a
/// histogram normalised over all of its bins. Counts may be fractional.
pub fn fit_tail_counts(counts: &[f64], n_a: usize) -> Result<TailFit> {
    let total: f64 = counts.iter().sum();
    let region = counts.get(n_a..).unwrap_or(&[]);
    let populated = region.iter().filter(|&&c| c > 0.0).count();
    if populated < MIN_TAIL_BINS || !(total > 0.0) {
        return Err(Error::InsufficientData {
            what: "populated histogram bins beyond n_a",
            needed: MIN_TAIL_BINS,
            found: populated,
        });
    }

    let x: Vec<f64> = (n_a + 1..=counts.len()).map(|n| n as f64).collect();
    let y: Vec<f64> = region.iter().map(|c| c / total).collect();
    let sigma: Vec<f64> = region
        .iter()
        .map(|&c| if c > 0.0 { libm::sqrt(c) } else { 1.0 } / total)
        .collect();

    // Initial decay ratio from adjacent-bin sums across the fit region.
    let head: f64 = region[..region.len() - 1].iter().sum();
    let tail: f64 = region[1..].iter().sum();
    let p0 = if head > 0.0 {
        (1.0 - tail / head).clamp(1e-6, 1.0 - 1e-6)
    } else {
        0.5
    };

    let opts = Options::bounded([1e-12, 1e-12], [1.0, 1.0]);
    let data = Data {
        x: &x,
        y: &y,
        sigma: &sigma,
    };
    let sol = levenberg_marquardt(&GeometricTail, data, [1.0, p0], &opts)?;
    Ok(TailFit {
        amplitude: sol.params[0],
        p: sol.params[1],
        cov: sol.cov,
        chi2: sol.chi2,
        dof: x.len() - 2,
        iterations: sol.iterations,
    })
}

pub fn fit_tail(hist: &IntervalHistogram, n_a: usize) -> Result<TailFit> {
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    fit_tail_counts(&counts, n_a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationResult {
    pub fit: TailFit,
    pub mu_assumed: f64,
    pub n_a_used: usize,
    pub qe: f64,
    pub qe_sigma: f64,
    pub app: f64,
    pub app_sigma: f64,
    pub operating_point: Option<OperatingPoint>,
    pub histogram: IntervalHistogram,
}

impl CharacterizationResult {
    pub fn from_fit(
        fit: TailFit,
        histogram: IntervalHistogram,
        mu: f64,
        n_a: usize,
        operating_point: Option<OperatingPoint>,
    ) -> Result<Self> {
        let qe = qe_from_p(fit.p, mu)?;
        let app = app_from_amplitude(fit.amplitude)?;
        // d(qe)/dp = 1 / (mu (1 - p)),  d(APP)/dA = -1 / A^2.
        let qe_sigma = fit.p_sigma() / (mu * (1.0 - fit.p));
        let app_sigma = fit.amplitude_sigma() / (fit.amplitude * fit.amplitude);
        Ok(Self {
            fit,
            mu_assumed: mu,
            n_a_used: n_a,
            qe,
            qe_sigma,
            app,
            app_sigma,
            operating_point,
            histogram,
        })
    }
}

pub fn characterize(
    stream: &EventStream,
    source: &SourceParams,
    n_a: usize,
    n_bins: usize,
    operating_point: Option<OperatingPoint>,
) -> Result<CharacterizationResult> {
    let hist = build_histogram(stream, source, n_bins)?;
    let fit = fit_tail(&hist, n_a)?;
    CharacterizationResult::from_fit(fit, hist, source.mu, n_a, operating_point)
}

/// Dark count rate from per-window counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcrReport {
    pub mean_cps: f64,
    pub std_cps: f64,
    pub n_windows: usize,
}

pub fn dcr_report(counts: &[u64], window_s: f64) -> Result<DcrReport> {
    if counts.len() < 2 {
        return Err(Error::InsufficientData {
            what: "dark-count windows",
            needed: 2,
            found: counts.len(),
        });
    }
    if !(window_s > 0.0) {
        return Err(Error::invalid("window_s", window_s, "must be positive"));
    }
    let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / window_s).collect();
    let (mean_cps, std_cps) = mean_std(&rates);
    Ok(DcrReport {
        mean_cps,
        std_cps,
        n_windows: counts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{first_count_distribution, AfterpulseProfile, DetectorParams};
    use alloc::vec;

    fn stream(events: Vec<u64>, n_gates: u64) -> EventStream {
        EventStream::new(
            events,
            n_gates,
            0,
            DetectorParams::new(0.1, 0.0, AfterpulseProfile::none(), 0).unwrap(),
            SourceParams::new(1e8, 0.59).unwrap(),
        )
        .unwrap()
    }

    fn src() -> SourceParams {
        SourceParams::new(1e8, 0.59).unwrap()
    }

    #[test]
    fn one_period_interval() {
        let h = build_histogram(&stream(vec![0, 2], 10), &src(), 100).unwrap();
        assert_eq!(h.count(1), 1);
        assert_eq!(h.accepted(), 1);
        assert_eq!(h.discarded_odd, 0);
    }

    #[test]
    fn odd_separation_discarded() {
        let h = build_histogram(&stream(vec![0, 3], 10), &src(), 100).unwrap();
        assert_eq!(h.discarded_odd, 1);
        assert_eq!(h.accepted(), 0);
    }

    #[test]
    fn windows_do_not_overlap() {
        // 0->2 accepted, 3 opens next window: 3->5 accepted, 9 alone.
        let h = build_histogram(&stream(vec![0, 2, 3, 5, 9], 20), &src(), 100).unwrap();
        assert_eq!(h.count(1), 2);
        assert_eq!(h.no_second, 1);
        assert_eq!(h.total_windows, 3);
    }

    #[test]
    fn separation_beyond_window_has_no_second_event() {
        let h = build_histogram(&stream(vec![0, 10, 12], 20), &src(), 4).unwrap();
        // 0->10 is 5 periods > 4 bins, so 10 opens the next window.
        assert_eq!(h.no_second, 1);
        assert_eq!(h.count(1), 1);
        assert_eq!(h.total_windows, 2);
        let h = build_histogram(&stream(vec![0, 8], 20), &src(), 4).unwrap();
        assert_eq!(h.count(4), 1);
    }

    #[test]
    fn empty_stream_gives_empty_histogram() {
        let h = build_histogram(&stream(vec![], 10), &src(), 100).unwrap();
        assert_eq!(h.accepted(), 0);
        assert_eq!(h.total_windows, 0);
    }

    #[test]
    fn mismatched_rate_rejected() {
        let other = SourceParams::new(5e7, 0.59).unwrap();
        assert!(matches!(
            build_histogram(&stream(vec![0, 2], 10), &other, 100),
            Err(Error::UnitMismatch { .. })
        ));
        assert!(build_histogram(&stream(vec![0, 2], 10), &src(), 1).is_err());
    }

    #[test]
    fn merge_adds_and_checks_bins() {
        let mut a = build_histogram(&stream(vec![0, 2, 5, 8], 10), &src(), 10).unwrap();
        let b = build_histogram(&stream(vec![0, 3], 10), &src(), 10).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.count(1), 1);
        assert_eq!(a.discarded_odd, 2);
        assert_eq!(a.total_windows, 3);
        let c = IntervalHistogram::empty(5).unwrap();
        assert!(a.merge(&c).is_err());
    }

    #[test]
    fn noiseless_tail_recovers_amplitude_and_p() {
        let profile = AfterpulseProfile::new(vec![0.2, 0.1]).unwrap();
        let dist = first_count_distribution(0.3, &profile, 100).unwrap();
        let counts: Vec<u64> = dist.iter().map(|&x| libm::round(x * 1e15) as u64).collect();
        let fit = fit_tail(&IntervalHistogram::from_counts(counts).unwrap(), 2).unwrap();
        assert!((fit.amplitude - 0.72).abs() < 1e-6, "{}", fit.amplitude);
        assert!((fit.p - 0.3).abs() < 1e-6, "{}", fit.p);
    }

    #[test]
    fn fractional_counts_fit() {
        let profile = AfterpulseProfile::new(vec![0.2, 0.1]).unwrap();
        let dist = first_count_distribution(0.3, &profile, 100).unwrap();
        let fit = fit_tail_counts(&dist, 2).unwrap();
        assert!((fit.amplitude - 0.72).abs() < 1e-6);
        assert!((fit.p - 0.3).abs() < 1e-6);
        assert!(fit.app().unwrap() > 0.0);
    }

    #[test]
    fn tail_fit_needs_populated_bins() {
        let mut counts = vec![0u64; 100];
        counts[..8].copy_from_slice(&[50, 40, 30, 20, 10, 5, 2, 1]);
        let h = IntervalHistogram::from_counts(counts).unwrap();
        assert!(matches!(
            fit_tail(&h, 5),
            Err(Error::InsufficientData { found: 3, .. })
        ));
    }

    #[test]
    fn dcr_examples() {
        let r = dcr_report(&[100, 100, 100], 1.0).unwrap();
        assert_eq!((r.mean_cps, r.std_cps), (100.0, 0.0));
        assert!(dcr_report(&[100], 1.0).is_err());
        let r = dcr_report(&[10, 20], 0.5).unwrap();
        assert_eq!(r.mean_cps, 30.0);
    }
}
