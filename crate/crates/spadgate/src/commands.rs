//! One function per subcommand. Each takes a fully resolved [`RunConfig`],
//! writes its outputs under `output.dir` next to a `<command>.run.toml`
//! echo of that configuration, and returns a one-line summary.

use std::path::PathBuf;

use serde::Serialize;
use spadgate_core::interval::{characterize, dcr_report, DcrReport};
use spadgate_core::model::{app_from_amplitude, tail_amplitude};
use spadgate_core::montecarlo::{cascade_oracle, simulate_with, window_counts, SimOptions};
use spadgate_core::rate::{dead_time_verdict, log_grid, predict, VerdictReport};
use spadgate_core::rng::SimRng;
use spadgate_core::stats::chi2_sf;
use spadgate_core::waveform::{
    discriminate, frequency_response, notch_response, response_peaks, synthesize_trace, StubParams,
};
use spadgate_core::{AfterpulseProfile, OperatingPoint, RateCurve, SourceParams, TraceParams};

use crate::config::{RunConfig, StreamFormat, TOOL};
use crate::error::{CliError, Result};
use crate::{stream, tables};

pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

fn prepare(cfg: &RunConfig, command: &str) -> Result<(PathBuf, PathBuf)> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let echo = dir.join(format!("{command}.run.toml"));
    tables::write_text(&echo, &cfg.to_flat_toml())?;
    Ok((dir, echo))
}

pub fn stream_file_name(format: StreamFormat) -> &'static str {
    match format {
        StreamFormat::Text => "stream.txt",
        StreamFormat::Binary => "stream.spds",
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let detector = cfg.detector()?;
    let source = cfg.source()?;
    let opts = SimOptions {
        max_events: cfg.simulation.max_events,
    };
    let events = simulate_with(&detector, &source, cfg.simulation.n_gates, cfg.seed, &opts)?;
    let (dir, echo) = prepare(cfg, "simulate")?;
    let path = dir.join(stream_file_name(cfg.simulation.stream_format));
    match cfg.simulation.stream_format {
        StreamFormat::Text => stream::write_text(&events, &path)?,
        StreamFormat::Binary => stream::write_binary(&events, &path)?,
    }
    Ok(Outcome {
        summary: format!(
            "{} events in {} gates ({:.6e} counts/s)",
            events.len(),
            events.n_gates,
            events.count_rate()
        ),
        files: vec![path, echo],
    })
}

#[derive(Debug, Serialize)]
struct StreamSummary {
    seed: u64,
    n_gates: u64,
    events: usize,
    rep_rate_hz: f64,
    recorded_mu: f64,
}

#[derive(Debug, Serialize)]
struct HistogramSummary {
    accepted: u64,
    discarded_odd: u64,
    no_second: u64,
    total_windows: u64,
}

#[derive(Debug, Serialize)]
struct CharacterizeReport {
    tool: &'static str,
    stream: StreamSummary,
    n_a: usize,
    n_bins: usize,
    mu: f64,
    qe: f64,
    qe_sigma: f64,
    app: f64,
    app_sigma: f64,
    amplitude: f64,
    amplitude_sigma: f64,
    p: f64,
    p_sigma: f64,
    cov: [[f64; 2]; 2],
    chi2: f64,
    dof: usize,
    p_value: f64,
    iterations: usize,
    histogram: HistogramSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    dark_count_rate: Option<DcrReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    operating_point: Option<OperatingPoint>,
}

pub fn cmd_characterize(cfg: &RunConfig) -> Result<Outcome> {
    let path = cfg
        .analysis
        .stream
        .as_deref()
        .ok_or_else(|| CliError::Usage("characterize needs a stream file (--stream)".into()))?;
    let events = stream::read_any(path)?;
    let mu = cfg.analysis.mu.unwrap_or(events.source.mu);
    let source = SourceParams::new(events.source.rep_rate_hz, mu)?;
    let op = cfg.operating_point()?;
    let r = characterize(&events, &source, cfg.analysis.n_a, cfg.analysis.n_bins, op)?;
    let dcr = cfg
        .analysis
        .dcr_window_s
        .map(|w| dcr_report(&window_counts(&events, w)?, w))
        .transpose()?;

    let report = CharacterizeReport {
        tool: TOOL,
        stream: StreamSummary {
            seed: events.seed,
            n_gates: events.n_gates,
            events: events.len(),
            rep_rate_hz: events.source.rep_rate_hz,
            recorded_mu: events.source.mu,
        },
        n_a: r.n_a_used,
        n_bins: r.histogram.n_bins(),
        mu,
        qe: r.qe,
        qe_sigma: r.qe_sigma,
        app: r.app,
        app_sigma: r.app_sigma,
        amplitude: r.fit.amplitude,
        amplitude_sigma: r.fit.amplitude_sigma(),
        p: r.fit.p,
        p_sigma: r.fit.p_sigma(),
        cov: r.fit.cov,
        chi2: r.fit.chi2,
        dof: r.fit.dof,
        p_value: chi2_sf(r.fit.chi2, r.fit.dof),
        iterations: r.fit.iterations,
        histogram: HistogramSummary {
            accepted: r.histogram.accepted(),
            discarded_odd: r.histogram.discarded_odd,
            no_second: r.histogram.no_second,
            total_windows: r.histogram.total_windows,
        },
        dark_count_rate: dcr,
        operating_point: op,
    };

    let (dir, echo) = prepare(cfg, "characterize")?;
    let json = dir.join("report.json");
    let csv = dir.join("histogram.csv");
    tables::write_json(&json, &report)?;
    tables::write_histogram(&csv, &r.histogram)?;
    Ok(Outcome {
        summary: format!(
            "QE = {:.6} +- {:.6}, APP = {:.6} +- {:.6}",
            r.qe, r.qe_sigma, r.app, r.app_sigma
        ),
        files: vec![json, csv, echo],
    })
}

#[derive(Debug, Serialize)]
struct RateReport<'a> {
    tool: &'static str,
    rep_rate_hz: f64,
    n_points: usize,
    decades: f64,
    /// Photon rates are taken as exact; attenuator calibration error is
    /// not propagated.
    photon_rate_exact: bool,
    #[serde(flatten)]
    report: &'a VerdictReport,
}

pub fn cmd_rate_fit(cfg: &RunConfig) -> Result<Outcome> {
    let path = cfg
        .rate
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("rate-fit needs an input CSV (--input)".into()))?;
    let rep = cfg.rate.rep_rate_hz.unwrap_or(cfg.source.rep_rate_hz);
    let points = tables::read_rates(path, cfg.rate.window_s)?;
    let curve = RateCurve::new(points, rep, cfg.operating_point()?)?;
    let report = dead_time_verdict(&curve, cfg.rate.n_d_max)?;

    let positive = curve
        .points
        .iter()
        .map(|p| p.photon_rate)
        .filter(|&x| x > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    let grid = if hi > 0.0 {
        log_grid(lo, hi, cfg.rate.prediction_points.max(2))
    } else {
        Vec::new()
    };
    let columns: Vec<(u32, Vec<f64>)> = report
        .models
        .iter()
        .map(|m| {
            let col = grid
                .iter()
                .map(|&x| predict(x, m.qe, m.n_d_tested, rep))
                .collect();
            (m.n_d_tested, col)
        })
        .collect();

    let (dir, echo) = prepare(cfg, "rate-fit")?;
    let json = dir.join("verdicts.json");
    let csv = dir.join("prediction.csv");
    tables::write_json(
        &json,
        &RateReport {
            tool: TOOL,
            rep_rate_hz: rep,
            n_points: curve.points.len(),
            decades: curve.decades(),
            photon_rate_exact: true,
            report: &report,
        },
    )?;
    tables::write_prediction(&csv, &grid, &columns)?;
    Ok(Outcome {
        summary: format!("verdict: {:?}", report.verdict),
        files: vec![json, csv, echo],
    })
}

#[derive(Debug, Serialize)]
struct StubReport {
    tool: &'static str,
    stub: StubParams,
    first_notch_hz: f64,
    first_notch_atten_db: f64,
    /// Grid frequencies of local attenuation maxima.
    peaks_hz: Vec<f64>,
}

pub fn cmd_stub(cfg: &RunConfig) -> Result<Outcome> {
    let stub = cfg.stub.params();
    let s = &cfg.stub;
    let response = frequency_response(&stub, s.f_min_hz, s.f_max_hz, s.f_step_hz)?;
    let report = StubReport {
        tool: TOOL,
        stub,
        first_notch_hz: stub.notch_hz(1),
        first_notch_atten_db: notch_response(stub.notch_hz(1), &stub),
        peaks_hz: response_peaks(&response)
            .into_iter()
            .map(|i| response[i].0)
            .collect(),
    };
    let (dir, echo) = prepare(cfg, "stub")?;
    let csv = dir.join("response.csv");
    let json = dir.join("stub.json");
    tables::write_response(&csv, &response)?;
    tables::write_json(&json, &report)?;
    Ok(Outcome {
        summary: format!(
            "first notch {:.6e} Hz, {:.2} dB",
            report.first_notch_hz, report.first_notch_atten_db
        ),
        files: vec![csv, json, echo],
    })
}

/// `count` avalanche times on distinct source periods (two gate periods),
/// each on a gate peak plus a random sub-sample offset. The last period
/// is left free so every reflection fits in the trace.
pub fn random_avalanche_times(
    count: usize,
    gate_freq_hz: f64,
    sample_rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let period = 2.0 / gate_freq_hz;
    let slots = ((duration_s / period).floor() as usize).saturating_sub(1);
    if count > slots {
        return Err(CliError::Usage(format!(
            "{count} random avalanches need {count} source periods, trace holds {slots}"
        )));
    }
    let mut rng = SimRng::new(seed);
    let mut order: Vec<usize> = (0..slots).collect();
    for i in 0..count {
        let j = i + (rng.uniform() * (slots - i) as f64) as usize;
        order.swap(i, j.min(slots - 1));
    }
    let mut chosen = order[..count].to_vec();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|k| k as f64 * period + rng.uniform() / sample_rate_hz)
        .collect())
}

#[derive(Debug, Serialize)]
struct TraceSidecar<'a> {
    tool: &'static str,
    samples_file: &'a str,
    sample_format: &'static str,
    n_samples: usize,
    sample_rate_hz: f64,
    stub: StubParams,
    params: &'a TraceParams,
    upper_threshold_v: f64,
    lower_threshold_v: f64,
    events: usize,
}

pub fn trace_params(cfg: &RunConfig) -> Result<(TraceParams, StubParams)> {
    let t = &cfg.trace;
    let stub = if t.matched_stub {
        StubParams::matched(
            t.gate_freq_hz,
            cfg.stub.velocity_factor,
            cfg.stub.loss_db_per_m,
        )
    } else {
        cfg.stub.params()
    };
    let mut times = t.avalanche_times_s.clone();
    times.extend(random_avalanche_times(
        t.random_avalanches,
        t.gate_freq_hz,
        t.sample_rate_hz,
        t.duration_s,
        cfg.seed,
    )?);
    times.sort_by(f64::total_cmp);
    let params = TraceParams {
        gate_freq_hz: t.gate_freq_hz,
        gate_leak_amplitude_v: t.gate_leak_amplitude_v,
        avalanche_amplitude_v: t.avalanche_amplitude_v,
        avalanche_width_s: t.avalanche_width_s,
        sample_rate_hz: t.sample_rate_hz,
        duration_s: t.duration_s,
        avalanche_times_s: times,
        noise_rms_v: t.noise_rms_v,
        noise_seed: cfg.seed,
    };
    Ok((params, stub))
}

pub fn cmd_trace(cfg: &RunConfig) -> Result<Outcome> {
    let (params, stub) = trace_params(cfg)?;
    let trace = synthesize_trace(&params, &stub)?;
    let pulses = discriminate(
        &trace.samples,
        cfg.trace.upper_threshold_v,
        cfg.trace.lower_threshold_v,
        trace.sample_rate_hz,
    )?;
    let (dir, echo) = prepare(cfg, "trace")?;
    let csv = dir.join("trace.csv");
    let bin = dir.join("trace.f64");
    let side = dir.join("trace.json");
    let events = dir.join("events.csv");
    tables::write_trace_csv(&csv, &trace)?;
    tables::write_trace_binary(&bin, &trace)?;
    tables::write_json(
        &side,
        &TraceSidecar {
            tool: TOOL,
            samples_file: "trace.f64",
            sample_format: "f64 little-endian",
            n_samples: trace.samples.len(),
            sample_rate_hz: trace.sample_rate_hz,
            stub,
            params: &params,
            upper_threshold_v: cfg.trace.upper_threshold_v,
            lower_threshold_v: cfg.trace.lower_threshold_v,
            events: pulses.len(),
        },
    )?;
    tables::write_events(&events, &pulses)?;
    Ok(Outcome {
        summary: format!(
            "{} samples, {} avalanches, {} discriminator pulses",
            trace.samples.len(),
            params.avalanche_times_s.len(),
            pulses.len()
        ),
        files: vec![csv, bin, side, events, echo],
    })
}

#[derive(Debug, Serialize)]
struct CascadeReport<'a> {
    tool: &'static str,
    afterpulse: &'a AfterpulseProfile,
    seed: u64,
    n_primaries: u64,
    mean: f64,
    std_err: f64,
    app_closed_form: f64,
    deviation_in_std_err: f64,
}

pub fn cmd_cascade_oracle(cfg: &RunConfig) -> Result<Outcome> {
    let profile = AfterpulseProfile::new(cfg.detector.afterpulse.clone())?;
    let est = cascade_oracle(&profile, cfg.cascade.n_primaries, cfg.seed)?;
    let app = app_from_amplitude(tail_amplitude(&profile))?;
    let report = CascadeReport {
        tool: TOOL,
        afterpulse: &profile,
        seed: cfg.seed,
        n_primaries: est.n_primaries,
        mean: est.mean,
        std_err: est.std_err,
        app_closed_form: app,
        deviation_in_std_err: (est.mean - app) / est.std_err,
    };
    let (dir, echo) = prepare(cfg, "cascade-oracle")?;
    let json = dir.join("cascade.json");
    tables::write_json(&json, &report)?;
    Ok(Outcome {
        summary: format!(
            "cascade mean {:.6} +- {:.6}, closed form {:.6}",
            est.mean, est.std_err, app
        ),
        files: vec![json, echo],
    })
}
