use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spadgate_core::rate::predict;

fn spadgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spadgate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_characterize_recovers_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "seed = 11\n\
         simulation.n_gates = 10000000\n\
         detector.qe = 0.25\n\
         detector.afterpulse = [0.08, 0.04, 0.02]\n\
         analysis.n_a = 3\n",
    );
    let text = tmp.path().join("text");
    let bin = tmp.path().join("bin");
    for (dir, fmt) in [(&text, "text"), (&bin, "binary")] {
        let out = spadgate(&[
            "--config",
            s(&cfg),
            "--out",
            s(dir),
            "simulate",
            "--format",
            fmt,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let stream = text.join("stream.txt");
    let out = spadgate(&[
        "--config",
        s(&cfg),
        "--out",
        s(&text),
        "characterize",
        "--stream",
        s(&stream),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&text.join("report.json"));
    let qe = r["qe"].as_f64().unwrap();
    let qe_sigma = r["qe_sigma"].as_f64().unwrap();
    let app = r["app"].as_f64().unwrap();
    let app_sigma = r["app_sigma"].as_f64().unwrap();
    let a: f64 = [0.08, 0.04, 0.02].iter().map(|x| 1.0 - x).product();
    assert!((qe - 0.25).abs() < 4.0 * qe_sigma, "{qe} +- {qe_sigma}");
    assert!(
        ((1.0 - a) / a - app).abs() < 4.0 * app_sigma,
        "{app} +- {app_sigma}"
    );
    assert_eq!(r["stream"]["seed"], 11);

    let hist = std::fs::read_to_string(text.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 101);

    // Same seed, other container: identical events, identical fit.
    let out = spadgate(&[
        "--out",
        s(&bin),
        "characterize",
        "--n-a",
        "3",
        "--stream",
        s(&bin.join("stream.spds")),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&bin.join("report.json"))["qe"], r["qe"]);
}

#[test]
fn run_config_is_echoed_flat() {
    let tmp = tempfile::tempdir().unwrap();
    let out = spadgate(&[
        "--out",
        s(tmp.path()),
        "--seed",
        "5",
        "cascade-oracle",
        "--n-primaries",
        "1000",
    ]);
    assert_eq!(code(&out), 0);
    let echo = std::fs::read_to_string(tmp.path().join("cascade-oracle.run.toml")).unwrap();
    assert!(echo.starts_with("# spadgate "));
    assert!(echo.contains("seed = 5\n"));
    assert!(echo.contains("cascade.n_primaries = 1000\n"));
    assert!(!echo.lines().any(|l| l.starts_with('[')));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = s(tmp.path());

    let bad_key = config(tmp.path(), "detector.qee = 0.2\n");
    let out = spadgate(&["--config", s(&bad_key), "--out", dir, "simulate"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("qee"));

    let bad_value = config(tmp.path(), "detector.qe = 1.5\n");
    assert_eq!(
        code(&spadgate(&[
            "--config",
            s(&bad_value),
            "--out",
            dir,
            "simulate"
        ])),
        2
    );

    let missing = tmp.path().join("nope.toml");
    assert_eq!(code(&spadgate(&["--config", s(&missing), "simulate"])), 2);

    assert_eq!(code(&spadgate(&["--out", dir, "characterize"])), 2);
    assert_eq!(code(&spadgate(&["--bogus"])), 2);

    let garbage = tmp.path().join("garbage.txt");
    std::fs::write(&garbage, "hello\n").unwrap();
    let out = spadgate(&["--out", dir, "characterize", "--stream", s(&garbage)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn too_few_events_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = s(tmp.path());
    let cfg = config(
        tmp.path(),
        "simulation.n_gates = 2000\ndetector.qe = 0.01\n",
    );
    assert_eq!(
        code(&spadgate(&["--config", s(&cfg), "--out", dir, "simulate"])),
        0
    );
    let stream = tmp.path().join("stream.txt");
    let out = spadgate(&["--out", dir, "characterize", "--stream", s(&stream)]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

fn rate_csv(path: &Path, qe: f64, n_d: u32) {
    let mut text = String::from("# synthetic\nn_ph,n_c,sigma\n");
    for k in 0..13 {
        let n_ph = 1e5 * 10f64.powf(k as f64 / 3.0);
        let n_c = predict(n_ph, qe, n_d, 1e8);
        let sigma = 1e-3 * n_c;
        // Alternating one-sigma offsets keep chi2/dof near one.
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        text.push_str(&format!("{n_ph},{},{sigma}\n", n_c + sign * sigma));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn rate_fit_names_the_dead_time() {
    let tmp = tempfile::tempdir().unwrap();
    for n_d in [0u32, 2] {
        let input = tmp.path().join(format!("rates{n_d}.csv"));
        rate_csv(&input, 0.2, n_d);
        let out_dir = tmp.path().join(format!("out{n_d}"));
        let out = spadgate(&[
            "--out",
            s(&out_dir),
            "rate-fit",
            "--input",
            s(&input),
            "--rep-rate-hz",
            "1e8",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v = json(&out_dir.join("verdicts.json"));
        if n_d == 0 {
            assert_eq!(v["verdict"]["kind"], "dead_time_free", "{v}");
        } else {
            assert_eq!(v["verdict"]["kind"], "dead_time", "{v}");
            assert_eq!(v["verdict"]["n_d"], 2);
        }
        let pred = std::fs::read_to_string(out_dir.join("prediction.csv")).unwrap();
        assert!(pred.starts_with("n_ph,n_d_0,n_d_1,n_d_2,n_d_3\n"));
    }
}

#[test]
fn two_low_flux_points_are_indeterminate() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("r.csv");
    std::fs::write(&input, "1e5,1.9e4\n2e5,3.8e4\n").unwrap();
    let out = spadgate(&["--out", s(tmp.path()), "rate-fit", "--input", s(&input)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&tmp.path().join("verdicts.json"));
    assert_eq!(v["verdict"]["kind"], "indeterminate");
    assert_eq!(v["span_sufficient"], false);
}

#[test]
fn stub_and_trace_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = s(tmp.path());
    let out = spadgate(&[
        "--out",
        dir,
        "stub",
        "--length-m",
        "0.5",
        "--velocity-factor",
        "0.7",
    ]);
    assert_eq!(code(&out), 0);
    let stub = json(&tmp.path().join("stub.json"));
    let notch = stub["first_notch_hz"].as_f64().unwrap();
    assert!((notch - 2.0985e8).abs() < 1e5, "{notch}");
    let resp = std::fs::read_to_string(tmp.path().join("response.csv")).unwrap();
    assert!(resp.starts_with("freq_hz,atten_db\n"));

    let out = spadgate(&[
        "--out",
        dir,
        "--seed",
        "3",
        "trace",
        "--random-avalanches",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv_rows = std::fs::read_to_string(tmp.path().join("trace.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    let raw = std::fs::metadata(tmp.path().join("trace.f64"))
        .unwrap()
        .len() as usize;
    assert_eq!(raw, 8 * csv_rows);
    let side = json(&tmp.path().join("trace.json"));
    assert_eq!(side["samples_file"], "trace.f64");
    let events = std::fs::read_to_string(tmp.path().join("events.csv")).unwrap();
    assert!(events.starts_with("time_s,width_s,complete\n"));
    assert!(events.lines().count() > 1);
}
