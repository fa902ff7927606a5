use spadgate_core::interval::{build_histogram, characterize, dcr_report, fit_tail};
use spadgate_core::model::{app_from_amplitude, dead_time_rate, detection_prob, tail_amplitude};
use spadgate_core::montecarlo::{cascade_oracle, simulate, window_counts, windowed_rate};
use spadgate_core::rng::SimRng;
use spadgate_core::stats::chi2_sf;
use spadgate_core::{AfterpulseProfile, DetectorParams, SourceParams};

const NU: f64 = 1e8;

fn detector(qe: f64, dark: f64, pa: &[f64], n_d: u32) -> DetectorParams {
    DetectorParams::new(qe, dark, AfterpulseProfile::new(pa.to_vec()).unwrap(), n_d).unwrap()
}

fn source(mu: f64) -> SourceParams {
    SourceParams::new(NU, mu).unwrap()
}

#[test]
fn intervals_without_afterpulsing_are_geometric() {
    let p: f64 = 0.3;
    let src = source(-(1.0 - p).ln());
    let det = detector(1.0, 0.0, &[0.0], 0);
    let stream = simulate(&det, &src, 16_000_000, 11).unwrap();
    let hist = build_histogram(&stream, &src, 30).unwrap();
    let total = hist.accepted() as f64;
    assert!(total >= 1e6, "only {total} intervals");
    assert_eq!(hist.discarded_odd, 0);

    let trunc = 1.0 - (1.0 - p).powi(30);
    let expected: Vec<f64> = (1..=30)
        .map(|n| total * p * (1.0 - p).powi(n - 1) / trunc)
        .collect();

    // Per-bin 4 sigma check and an overall chi-square at 0.001.
    let mut chi2 = 0.0;
    let mut dof = 0;
    let (mut tail_obs, mut tail_exp) = (0.0, 0.0);
    for (n, e) in expected.iter().enumerate() {
        let o = hist.count(n + 1) as f64;
        assert!(
            (o - e).abs() <= 4.0 * e.sqrt() + 1.0,
            "bin {}: {o} vs {e}",
            n + 1
        );
        if *e >= 5.0 {
            chi2 += (o - e).powi(2) / e;
            dof += 1;
        } else {
            tail_obs += o;
            tail_exp += e;
        }
    }
    if tail_exp > 0.0 {
        chi2 += (tail_obs - tail_exp).powi(2) / tail_exp;
        dof += 1;
    }
    let pv = chi2_sf(chi2, dof - 1);
    assert!(pv >= 1e-3, "chi2 {chi2} on {} dof, p-value {pv}", dof - 1);
}

#[test]
fn cascade_oracle_matches_closed_form_app() {
    let mut rng = SimRng::new(2024);
    for case in 0..10 {
        let n_a = 1 + (rng.uniform() * 8.0) as usize;
        let pa: Vec<f64> = (0..n_a).map(|_| 0.15 * rng.uniform()).collect();
        let profile = AfterpulseProfile::new(pa).unwrap();
        let app = app_from_amplitude(tail_amplitude(&profile)).unwrap();
        let est = cascade_oracle(&profile, 200_000, 100 + case).unwrap();
        assert!(
            (est.mean - app).abs() <= 4.0 * est.std_err,
            "case {case}: oracle {} +- {} vs {app}",
            est.mean,
            est.std_err
        );
    }
}

#[test]
fn dead_time_rate_matches_simulation() {
    for n_d in 1..=3u32 {
        let src = source(3.0);
        let det = detector(0.5, 0.0, &[0.0], n_d);
        let stream = simulate(&det, &src, 10_000_000, u64::from(n_d)).unwrap();
        let counts = window_counts(&stream, 1e-3).unwrap();
        let (rate, se) = windowed_rate(&counts, 1e-3);
        let nc = NU * detection_prob(3.0, 0.5);
        let want = dead_time_rate(nc, n_d, NU);
        assert!(
            (rate - want).abs() <= 4.0 * se,
            "n_d={n_d}: {rate} +- {se} vs {want}"
        );
        assert!(rate <= NU / 2.0 + 3.0 * se);
    }
}

const PROFILE: [f64; 5] = [0.05, 0.03, 0.02, 0.01, 0.005];

#[test]
fn characterize_recovers_qe_and_app() {
    let mu = 0.59;
    let src = source(mu);
    let det = detector(0.158, 0.0, &PROFILE, 0);
    let stream = simulate(&det, &src, 100_000_000, 7).unwrap();
    let r = characterize(&stream, &src, 5, 100, None).unwrap();
    let app = app_from_amplitude(tail_amplitude(&det.afterpulse)).unwrap();
    assert!(
        (r.qe - 0.158).abs() <= 3.0 * r.qe_sigma,
        "qe {} +- {}",
        r.qe,
        r.qe_sigma
    );
    assert!(r.qe_sigma / r.qe < 0.02);
    assert!(
        (r.app - app).abs() <= 3.0 * r.app_sigma,
        "app {} +- {} vs {app}",
        r.app,
        r.app_sigma
    );

    // One extra cutoff bin barely moves the estimates.
    let wider = fit_tail(&r.histogram, 6).unwrap();
    assert!((wider.p - r.fit.p).abs() < r.fit.p_sigma());
    assert!((wider.amplitude - r.fit.amplitude).abs() < r.fit.amplitude_sigma());
}

#[test]
fn no_afterpulsing_gives_zero_app() {
    let src = source(0.59);
    let det = detector(0.189, 0.0, &[0.0; 5], 0);
    let stream = simulate(&det, &src, 30_000_000, 8).unwrap();
    let r = characterize(&stream, &src, 5, 100, None).unwrap();
    assert!(
        r.app.abs() <= 3.0 * r.app_sigma,
        "app {} +- {}",
        r.app,
        r.app_sigma
    );
}

#[test]
fn estimator_is_consistent() {
    let src = source(0.59);
    let det = detector(0.189, 0.0, &PROFILE, 0);
    let mut sigmas = Vec::new();
    for (i, n) in [1_000_000u64, 10_000_000, 100_000_000]
        .into_iter()
        .enumerate()
    {
        let stream = simulate(&det, &src, n, 20 + i as u64).unwrap();
        let r = characterize(&stream, &src, 5, 100, None).unwrap();
        assert!(
            (r.qe - 0.189).abs() <= 3.0 * r.qe_sigma,
            "n={n}: {} +- {}",
            r.qe,
            r.qe_sigma
        );
        sigmas.push(r.qe_sigma);
    }
    for w in sigmas.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (ratio / 10f64.sqrt() - 1.0).abs() < 0.3,
            "sigma ratio {ratio}"
        );
    }
}

#[test]
fn coincidence_filter_artifact() {
    // Odd-gate darks and their afterpulses pair up into even separations and
    // pass as afterpulse intervals unless odd gates are filtered first.
    let src = source(0.59);
    let det = detector(0.189, 5e-5, &PROFILE, 0);
    let stream = simulate(&det, &src, 100_000_000, 30).unwrap();
    let raw = characterize(&stream, &src, 5, 100, None).unwrap();
    let filtered = characterize(&stream.source_coincident(), &src, 5, 100, None).unwrap();
    assert!(raw.histogram.discarded_odd > 0);
    assert_eq!(filtered.histogram.discarded_odd, 0);
    assert!(
        (raw.qe - filtered.qe).abs() < raw.qe_sigma,
        "{} vs {}",
        raw.qe,
        filtered.qe
    );
    assert!(filtered.app < raw.app, "{} vs {}", filtered.app, raw.app);
}

#[test]
fn dark_count_rate_from_windows() {
    let src = source(0.0);
    let window = 1e-4;
    let mut means = Vec::new();
    for (i, d) in [2e-4, 1e-4].into_iter().enumerate() {
        let det = detector(0.2, d, &[0.0], 0);
        let stream = simulate(&det, &src, 20_000_000, 40 + i as u64).unwrap();
        let counts = window_counts(&stream, window).unwrap();
        let rep = dcr_report(&counts, window).unwrap();
        let want = d * src.gate_rate_hz();
        let se = rep.std_cps / (rep.n_windows as f64).sqrt();
        assert!(
            (rep.mean_cps - want).abs() <= 4.0 * se,
            "{} vs {want}",
            rep.mean_cps
        );
        means.push((rep.mean_cps, se));
    }
    let ratio = means[1].0 / means[0].0;
    let rel = (means[0].1 / means[0].0).hypot(means[1].1 / means[1].0);
    assert!((ratio - 0.5).abs() <= 4.0 * 0.5 * rel, "ratio {ratio}");
}

#[test]
fn coincidence_filter_halves_dark_rate() {
    let src = source(0.0);
    let window = 1e-4;
    let det = detector(0.2, 1e-4, &[0.0], 0);
    let stream = simulate(&det, &src, 40_000_000, 50).unwrap();
    let all = dcr_report(&window_counts(&stream, window).unwrap(), window).unwrap();
    let even = dcr_report(
        &window_counts(&stream.source_coincident(), window).unwrap(),
        window,
    )
    .unwrap();
    let n = all.n_windows as f64;
    let rel = (all.std_cps / all.mean_cps).hypot(even.std_cps / even.mean_cps) / n.sqrt();
    let ratio = even.mean_cps / all.mean_cps;
    assert!((ratio - 0.5).abs() <= 4.0 * 0.5 * rel, "ratio {ratio}");
}
