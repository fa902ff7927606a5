//! Count rate versus photon rate: ideal and pulse-quantized dead-time fits.
//!
//! The efficiency is the single free parameter. Dead time enters as a
//! discrete model index `n_d` (whole source pulses), and each model is
//! judged by the chi-square tail probability of its best fit.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, Data, Model, Options};
use crate::model::{dead_time_rate, expected_count_rate, OperatingPoint};
use crate::stats::chi2_sf;

/// Models with a chi-square tail probability below this are incompatible.
pub const SIGNIFICANCE: f64 = 1e-3;
pub const MIN_POINTS: usize = 3;
pub const MIN_DECADES: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    /// Incident photons per second.
    pub photon_rate: f64,
    /// Registered counts per second.
    pub count_rate: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<RatePoint>,
    pub rep_rate_hz: f64,
    pub operating_point: Option<OperatingPoint>,
}

impl RateCurve {
    pub fn new(
        points: Vec<RatePoint>,
        rep_rate_hz: f64,
        operating_point: Option<OperatingPoint>,
    ) -> Result<Self> {
        if !(rep_rate_hz > 0.0 && rep_rate_hz.is_finite()) {
            return Err(Error::invalid(
                "rep_rate_hz",
                rep_rate_hz,
                "must be positive",
            ));
        }
        for pt in &points {
            if !(pt.photon_rate >= 0.0 && pt.photon_rate.is_finite()) {
                return Err(Error::invalid(
                    "n_ph",
                    pt.photon_rate,
                    "must be non-negative",
                ));
            }
            if !(pt.count_rate >= 0.0 && pt.count_rate < rep_rate_hz) {
                return Err(Error::invalid(
                    "n_c",
                    pt.count_rate,
                    "must lie in [0, rep_rate)",
                ));
            }
            if !(pt.sigma > 0.0 && pt.sigma.is_finite()) {
                return Err(Error::invalid("sigma", pt.sigma, "must be positive"));
            }
        }
        Ok(Self {
            points,
            rep_rate_hz,
            operating_point,
        })
    }

    /// Points measured as counts over `window_s`; sigma is `sqrt(N) / window_s`
    /// with `N` floored at one count.
    pub fn with_poisson_errors(
        rates: &[(f64, f64)],
        rep_rate_hz: f64,
        window_s: f64,
        operating_point: Option<OperatingPoint>,
    ) -> Result<Self> {
        if !(window_s > 0.0) {
            return Err(Error::invalid("window_s", window_s, "must be positive"));
        }
        let points = rates
            .iter()
            .map(|&(photon_rate, count_rate)| RatePoint {
                photon_rate,
                count_rate,
                sigma: poisson_sigma(count_rate, window_s),
            })
            .collect();
        Self::new(points, rep_rate_hz, operating_point)
    }

    /// Decades spanned by the positive photon rates.
    pub fn decades(&self) -> f64 {
        let positive = self
            .points
            .iter()
            .map(|p| p.photon_rate)
            .filter(|&x| x > 0.0);
        let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
        if hi > 0.0 && lo.is_finite() {
            libm::log10(hi / lo)
        } else {
            0.0
        }
    }

    pub fn span_sufficient(&self) -> bool {
        self.points.len() >= MIN_POINTS && self.decades() >= MIN_DECADES
    }

    fn check_span(&self) -> Result<()> {
        if self.points.len() < MIN_POINTS {
            return Err(Error::InsufficientData {
                what: "rate-curve points",
                needed: MIN_POINTS,
                found: self.points.len(),
            });
        }
        if self.decades() < MIN_DECADES {
            return Err(Error::InsufficientData {
                what: "decades of photon-rate span",
                needed: 1,
                found: 0,
            });
        }
        Ok(())
    }
}

pub fn poisson_sigma(count_rate: f64, window_s: f64) -> f64 {
    libm::sqrt((count_rate * window_s).max(1.0)) / window_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compatibility {
    Compatible,
    Incompatible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFitResult {
    pub qe: f64,
    pub qe_sigma: f64,
    /// Set when the fitted efficiency is zero, so its relative error is unbounded.
    pub relative_sigma_infinite: bool,
    pub n_d_tested: u32,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub verdict: Compatibility,
    pub iterations: usize,
}

impl RateFitResult {
    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof as f64
    }

    pub fn is_compatible(&self) -> bool {
        self.verdict == Compatibility::Compatible
    }
}

/// Predicted count rate for efficiency `qe` and dead time `n_d` pulses.
pub fn predict(photon_rate: f64, qe: f64, n_d: u32, rep_rate_hz: f64) -> f64 {
    dead_time_rate(
        expected_count_rate(photon_rate, qe, rep_rate_hz),
        n_d,
        rep_rate_hz,
    )
}

struct CountRateModel {
    rep_rate_hz: f64,
    n_d: u32,
}

impl Model<1> for CountRateModel {
    fn eval(&self, photon_rate: f64, params: &[f64; 1]) -> (f64, [f64; 1]) {
        let nu = self.rep_rate_hz;
        let qe = params[0];
        let e = libm::exp(-photon_rate * qe / nu);
        let ideal = nu * -libm::expm1(-photon_rate * qe / nu);
        let d_ideal = photon_rate * e;
        let denom = 1.0 + ideal * f64::from(self.n_d) / nu;
        (ideal / denom, [d_ideal / (denom * denom)])
    }
}

/// Starting efficiency from inverting the model at each point; the median
/// of the finite inversions.
fn initial_qe(curve: &RateCurve, n_d: u32) -> f64 {
    let nu = curve.rep_rate_hz;
    let mut guesses: Vec<f64> = curve
        .points
        .iter()
        .filter(|p| p.photon_rate > 0.0 && p.count_rate > 0.0)
        .filter_map(|p| {
            let ideal = p.count_rate / (1.0 - p.count_rate * f64::from(n_d) / nu);
            (ideal > 0.0 && ideal < nu).then(|| -libm::log1p(-ideal / nu) * nu / p.photon_rate)
        })
        .collect();
    if guesses.is_empty() {
        return 0.5;
    }
    guesses.sort_by(f64::total_cmp);
    guesses[guesses.len() / 2].clamp(0.0, 1.0)
}

fn fit_model(curve: &RateCurve, n_d: u32) -> Result<RateFitResult> {
    if curve.points.is_empty() {
        return Err(Error::InsufficientData {
            what: "rate-curve points",
            needed: 1,
            found: 0,
        });
    }
    let x: Vec<f64> = curve.points.iter().map(|p| p.photon_rate).collect();
    let y: Vec<f64> = curve.points.iter().map(|p| p.count_rate).collect();
    let sigma: Vec<f64> = curve.points.iter().map(|p| p.sigma).collect();
    let model = CountRateModel {
        rep_rate_hz: curve.rep_rate_hz,
        n_d,
    };
    let opts = Options::bounded([0.0], [1.0]);
    let sol = levenberg_marquardt(
        &model,
        Data {
            x: &x,
            y: &y,
            sigma: &sigma,
        },
        [initial_qe(curve, n_d)],
        &opts,
    )?;
    let dof = x.len() - 1;
    let p_value = chi2_sf(sol.chi2, dof);
    let qe = sol.params[0];
    Ok(RateFitResult {
        qe,
        qe_sigma: libm::sqrt(sol.cov[0][0]),
        relative_sigma_infinite: qe == 0.0,
        n_d_tested: n_d,
        chi2: sol.chi2,
        dof,
        p_value,
        verdict: if p_value >= SIGNIFICANCE {
            Compatibility::Compatible
        } else {
            Compatibility::Incompatible
        },
        iterations: sol.iterations,
    })
}

/// Fits the dead-time-free count-rate curve.
pub fn fit_ideal(curve: &RateCurve) -> Result<RateFitResult> {
    curve.check_span()?;
    fit_model(curve, 0)
}

pub fn fit_with_dead_time(curve: &RateCurve, n_d: u32) -> Result<RateFitResult> {
    if n_d == 0 {
        return Err(Error::invalid(
            "n_d",
            0.0,
            "dead-time model needs at least one pulse",
        ));
    }
    curve.check_span()?;
    fit_model(curve, n_d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Verdict {
    /// Only the dead-time-free model survives.
    DeadTimeFree,
    /// Exactly one dead-time model survives.
    DeadTime {
        n_d: u32,
    },
    /// Several models survive, or the curve cannot separate them.
    Indeterminate,
    NoneCompatible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    /// Index `k` holds the fit with `n_d = k`.
    pub models: Vec<RateFitResult>,
    pub span_sufficient: bool,
    pub verdict: Verdict,
}

/// Fits `n_d = 0..=n_d_max` and decides which survive at [`SIGNIFICANCE`].
///
/// Curves below the point/span minimum are still fitted, but the verdict
/// is then always [`Verdict::Indeterminate`].
pub fn dead_time_verdict(curve: &RateCurve, n_d_max: u32) -> Result<VerdictReport> {
    let models = (0..=n_d_max)
        .map(|n_d| fit_model(curve, n_d))
        .collect::<Result<Vec<_>>>()?;
    let span_sufficient = curve.span_sufficient();
    let mut compatible = models.iter().filter(|m| m.is_compatible());
    let verdict = match (compatible.next(), compatible.next()) {
        _ if !span_sufficient => Verdict::Indeterminate,
        (None, _) => Verdict::NoneCompatible,
        (Some(only), None) if only.n_d_tested == 0 => Verdict::DeadTimeFree,
        (Some(only), None) => Verdict::DeadTime {
            n_d: only.n_d_tested,
        },
        (Some(_), Some(_)) => Verdict::Indeterminate,
    };
    Ok(VerdictReport {
        models,
        span_sufficient,
        verdict,
    })
}

/// Log-spaced photon rates from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return alloc::vec![lo];
    }
    let (a, b) = (libm::log10(lo), libm::log10(hi));
    (0..n)
        .map(|i| libm::pow(10.0, a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}
