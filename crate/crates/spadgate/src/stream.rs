//! Event-stream files.
//!
//! Text: `# key=value` header lines followed by one decimal gate index per
//! line. Binary: magic `SPDS`, a version byte, the same header as
//! little-endian fields (floats as IEEE-754 bit patterns), then the indices
//! as LEB128-encoded deltas. Both carry the full provenance needed to
//! rebuild the [`EventStream`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use spadgate_core::rng::ALGORITHM;
use spadgate_core::{AfterpulseProfile, DetectorParams, EventStream, SourceParams};

use crate::config::TOOL;
use crate::error::{CliError, Result};

pub const TEXT_MAGIC: &str = "# spadgate-stream v1";
pub const BINARY_MAGIC: &[u8; 4] = b"SPDS";
pub const BINARY_VERSION: u8 = 1;

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn header(stream: &EventStream) -> Vec<(&'static str, String)> {
    let d = &stream.detector;
    vec![
        ("tool", TOOL.to_string()),
        ("rng", ALGORITHM.to_string()),
        ("seed", stream.seed.to_string()),
        ("n_gates", stream.n_gates.to_string()),
        ("source.rep_rate_hz", stream.source.rep_rate_hz.to_string()),
        ("source.mu", stream.source.mu.to_string()),
        ("detector.qe", d.qe.to_string()),
        ("detector.dark_prob", d.dark_prob.to_string()),
        ("detector.afterpulse", join(d.afterpulse.probs())),
        ("detector.dead_pulses", d.dead_pulses.to_string()),
        ("events", stream.len().to_string()),
    ]
}

pub fn write_text(stream: &EventStream, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{TEXT_MAGIC}")?;
        for (k, v) in header(stream) {
            writeln!(w, "# {k}={v}")?;
        }
        for g in &stream.events {
            writeln!(w, "{g}")?;
        }
        w.flush()
    };
    body().map_err(|e| CliError::io(path, e))
}

struct Header {
    seed: u64,
    n_gates: u64,
    rep_rate_hz: f64,
    mu: f64,
    qe: f64,
    dark_prob: f64,
    afterpulse: Vec<f64>,
    dead_pulses: u32,
    events: usize,
}

impl Header {
    fn into_stream(self, events: Vec<u64>) -> Result<EventStream> {
        let detector = DetectorParams::new(
            self.qe,
            self.dark_prob,
            AfterpulseProfile::new(self.afterpulse)?,
            self.dead_pulses,
        )?;
        let source = SourceParams::new(self.rep_rate_hz, self.mu)?;
        Ok(EventStream::new(
            events,
            self.n_gates,
            self.seed,
            detector,
            source,
        )?)
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| CliError::format(path, line, format!("bad value for {key}: {v:?}")))
}

pub fn read_text(path: &Path) -> Result<EventStream> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut fields = std::collections::BTreeMap::new();
    let mut events = Vec::new();

    match lines.next() {
        Some((_, Ok(first))) if first.trim_end() == TEXT_MAGIC => {}
        Some((_, Err(e))) => return Err(CliError::io(path, e)),
        _ => return Err(CliError::format(path, 1, "not a spadgate text stream")),
    }
    for (i, line) in lines {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let n = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| CliError::format(path, n, "header line without '='"))?;
            fields.insert(k.trim().to_string(), (n, v.trim().to_string()));
        } else if !line.trim().is_empty() {
            events.push(parse_field::<u64>(path, n, "event index", &line)?);
        }
    }

    let get = |key: &str| {
        fields
            .get(key)
            .ok_or_else(|| CliError::format(path, 0, format!("missing header field {key}")))
    };
    macro_rules! field {
        ($key:literal) => {{
            let (n, v) = get($key)?;
            parse_field(path, *n, $key, v)?
        }};
    }
    let afterpulse = {
        let (n, v) = get("detector.afterpulse")?;
        v.split(',')
            .map(|x| parse_field::<f64>(path, *n, "detector.afterpulse", x))
            .collect::<Result<Vec<_>>>()?
    };
    let header = Header {
        seed: field!("seed"),
        n_gates: field!("n_gates"),
        rep_rate_hz: field!("source.rep_rate_hz"),
        mu: field!("source.mu"),
        qe: field!("detector.qe"),
        dark_prob: field!("detector.dark_prob"),
        afterpulse,
        dead_pulses: field!("detector.dead_pulses"),
        events: field!("events"),
    };
    if header.events != events.len() {
        return Err(CliError::format(
            path,
            0,
            format!(
                "header lists {} events, file has {}",
                header.events,
                events.len()
            ),
        ));
    }
    header.into_stream(events)
}

pub fn write_binary(stream: &EventStream, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let d = &stream.detector;
    let mut body = || -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&[BINARY_VERSION])?;
        w.write_all(&(TOOL.len() as u32).to_le_bytes())?;
        w.write_all(TOOL.as_bytes())?;
        for x in [stream.seed, stream.n_gates] {
            w.write_all(&x.to_le_bytes())?;
        }
        for x in [
            stream.source.rep_rate_hz,
            stream.source.mu,
            d.qe,
            d.dark_prob,
        ] {
            w.write_all(&x.to_bits().to_le_bytes())?;
        }
        w.write_all(&u64::from(d.dead_pulses).to_le_bytes())?;
        w.write_all(&(d.afterpulse.n_a() as u64).to_le_bytes())?;
        for x in d.afterpulse.probs() {
            w.write_all(&x.to_bits().to_le_bytes())?;
        }
        w.write_all(&(stream.len() as u64).to_le_bytes())?;
        let mut prev = 0;
        for &g in &stream.events {
            leb128::write::unsigned(&mut w, g - prev)?;
            prev = g;
        }
        w.flush()
    };
    body().map_err(|e| CliError::io(path, e))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    read_u64(r).map(f64::from_bits)
}

pub fn read_binary(path: &Path) -> Result<EventStream> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| CliError::format(path, 0, msg.to_string());

    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| bad("truncated header"))?;
    if &magic[..4] != BINARY_MAGIC {
        return Err(bad("not a spadgate binary stream"));
    }
    if magic[4] != BINARY_VERSION {
        return Err(bad("unsupported binary stream version"));
    }
    let io = |e| CliError::io(path, e);
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(io)?;
    let mut tool = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut tool).map_err(io)?;

    let seed = read_u64(&mut r).map_err(io)?;
    let n_gates = read_u64(&mut r).map_err(io)?;
    let rep_rate_hz = read_f64(&mut r).map_err(io)?;
    let mu = read_f64(&mut r).map_err(io)?;
    let qe = read_f64(&mut r).map_err(io)?;
    let dark_prob = read_f64(&mut r).map_err(io)?;
    let dead_pulses = u32::try_from(read_u64(&mut r).map_err(io)?)
        .map_err(|_| bad("dead_pulses out of range"))?;
    let n_a = read_u64(&mut r).map_err(io)?;
    if n_a > 1 << 20 {
        return Err(bad("implausible afterpulse profile length"));
    }
    let afterpulse = (0..n_a)
        .map(|_| read_f64(&mut r))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    let n_events = read_u64(&mut r).map_err(io)?;

    let mut events = Vec::with_capacity(n_events.min(1 << 24) as usize);
    let mut prev = 0u64;
    for _ in 0..n_events {
        let delta = leb128::read::unsigned(&mut r).map_err(|_| bad("truncated event data"))?;
        prev = prev
            .checked_add(delta)
            .ok_or_else(|| bad("event index overflow"))?;
        events.push(prev);
    }
    if !r.fill_buf().map_err(io)?.is_empty() {
        return Err(bad("trailing bytes after event data"));
    }
    Header {
        seed,
        n_gates,
        rep_rate_hz,
        mu,
        qe,
        dark_prob,
        afterpulse,
        dead_pulses,
        events: events.len(),
    }
    .into_stream(events)
}

/// Reads either format, told apart by the leading bytes.
pub fn read_any(path: &Path) -> Result<EventStream> {
    let mut head = [0u8; 4];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(|e| CliError::io(path, e))?;
    if n == 4 && &head == BINARY_MAGIC {
        read_binary(path)
    } else {
        read_text(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spadgate_core::montecarlo::simulate;

    fn sample() -> EventStream {
        let det = DetectorParams::new(
            0.3,
            1e-3,
            AfterpulseProfile::new(vec![0.1, 0.05]).unwrap(),
            1,
        )
        .unwrap();
        let src = SourceParams::new(1e8, 0.7).unwrap();
        simulate(&det, &src, 200_000, 5).unwrap()
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        let s = sample();
        write_text(&s, &path).unwrap();
        assert_eq!(read_any(&path).unwrap(), s);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("# seed=5\n"));
        assert!(text.contains(&format!("# tool={TOOL}\n")));
    }

    #[test]
    fn binary_round_trip_and_smaller() {
        let dir = tempfile::tempdir().unwrap();
        let (t, b) = (dir.path().join("s.txt"), dir.path().join("s.spds"));
        let s = sample();
        write_text(&s, &t).unwrap();
        write_binary(&s, &b).unwrap();
        assert_eq!(read_any(&b).unwrap(), s);
        let (lt, lb) = (
            std::fs::metadata(&t).unwrap().len(),
            std::fs::metadata(&b).unwrap().len(),
        );
        assert!(lb < lt / 2, "{lb} vs {lt}");
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "# spadgate-stream v1\n# seed=1\n5\n").unwrap();
        assert!(matches!(read_any(&path), Err(CliError::Format { .. })));

        let s = sample();
        let b = dir.path().join("s.spds");
        write_binary(&s, &b).unwrap();
        let bytes = std::fs::read(&b).unwrap();
        std::fs::write(&b, &bytes[..bytes.len() - 1]).unwrap();
        assert!(read_any(&b).is_err());
    }
}
