//! Run configuration: one flat TOML document with dotted keys, every
//! physical quantity carrying its SI unit in the key name.
//!
//! ```toml
//! seed = 7
//! detector.qe = 0.189
//! detector.afterpulse = [0.05, 0.03, 0.02, 0.01, 0.005]
//! source.mu = 0.59
//! simulation.n_gates = 100000000
//! ```
//!
//! Missing keys take the defaults below; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spadgate_core::waveform::StubParams;
use spadgate_core::{AfterpulseProfile, DetectorParams, OperatingPoint, SourceParams};

use crate::error::{CliError, Result};

pub const TOOL: &str = concat!("spadgate ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub detector: DetectorConfig,
    pub source: SourceConfig,
    pub simulation: SimulationConfig,
    pub analysis: AnalysisConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operating_point: Option<OperatingPointConfig>,
    pub rate: RateConfig,
    pub stub: StubConfig,
    pub trace: TraceConfig,
    pub cascade: CascadeConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub qe: f64,
    pub dark_prob: f64,
    pub afterpulse: Vec<f64>,
    pub dead_pulses: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            qe: 0.189,
            dark_prob: 0.0,
            afterpulse: vec![0.05, 0.03, 0.02, 0.01, 0.005],
            dead_pulses: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub rep_rate_hz: f64,
    pub mu: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            rep_rate_hz: 100e6,
            mu: 0.59,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamFormat {
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_gates: u64,
    pub max_events: usize,
    pub stream_format: StreamFormat,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_gates: 1_000_000,
            max_events: spadgate_core::montecarlo::DEFAULT_MAX_EVENTS,
            stream_format: StreamFormat::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Stream file to characterise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream: Option<PathBuf>,
    pub n_a: usize,
    pub n_bins: usize,
    /// Overrides the mean photon number recorded in the stream.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Also report a dark-count rate from windows of this length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dcr_window_s: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            stream: None,
            n_a: 5,
            n_bins: 100,
            mu: None,
            dcr_window_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPointConfig {
    pub temperature_c: f64,
    pub overvoltage_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    /// CSV of `n_ph,n_c[,sigma]` rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Defaults to `source.rep_rate_hz`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rep_rate_hz: Option<f64>,
    pub n_d_max: u32,
    /// Acquisition window used for Poisson errors when the input has no
    /// sigma column.
    pub window_s: f64,
    pub prediction_points: usize,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            input: None,
            rep_rate_hz: None,
            n_d_max: 3,
            window_s: 1.0,
            prediction_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubConfig {
    pub z0_ohm: f64,
    pub length_m: f64,
    pub velocity_factor: f64,
    pub loss_db_per_m: f64,
    pub loss_ref_freq_hz: f64,
    pub load_ohm: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub f_step_hz: f64,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            z0_ohm: 50.0,
            length_m: 0.5,
            velocity_factor: 0.7,
            loss_db_per_m: 0.3,
            loss_ref_freq_hz: 200e6,
            load_ohm: 50.0,
            f_min_hz: 1e6,
            f_max_hz: 1e9,
            f_step_hz: 1e6,
        }
    }
}

impl StubConfig {
    pub fn params(&self) -> StubParams {
        StubParams {
            z0_ohm: self.z0_ohm,
            length_m: self.length_m,
            velocity_factor: self.velocity_factor,
            loss_db_per_m: self.loss_db_per_m,
            loss_ref_freq_hz: self.loss_ref_freq_hz,
            load_ohm: self.load_ohm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub gate_freq_hz: f64,
    /// Cut the stub to one gate period instead of using `stub.length_m`.
    pub matched_stub: bool,
    pub gate_leak_amplitude_v: f64,
    pub avalanche_amplitude_v: f64,
    pub avalanche_width_s: f64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub avalanche_times_s: Vec<f64>,
    /// Extra avalanches on distinct random source periods, seeded by `seed`.
    pub random_avalanches: usize,
    pub noise_rms_v: f64,
    pub upper_threshold_v: f64,
    pub lower_threshold_v: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            gate_freq_hz: 200e6,
            matched_stub: true,
            gate_leak_amplitude_v: 1.0,
            avalanche_amplitude_v: 0.1,
            avalanche_width_s: 0.5e-9,
            sample_rate_hz: 20e9,
            duration_s: 100e-9,
            avalanche_times_s: vec![20e-9],
            random_avalanches: 0,
            noise_rms_v: 0.002,
            upper_threshold_v: 0.05,
            lower_threshold_v: -0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub n_primaries: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            n_primaries: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn detector(&self) -> Result<DetectorParams> {
        let profile = AfterpulseProfile::new(self.detector.afterpulse.clone())?;
        Ok(DetectorParams::new(
            self.detector.qe,
            self.detector.dark_prob,
            profile,
            self.detector.dead_pulses,
        )?)
    }

    pub fn source(&self) -> Result<SourceParams> {
        Ok(SourceParams::new(self.source.rep_rate_hz, self.source.mu)?)
    }

    pub fn operating_point(&self) -> Result<Option<OperatingPoint>> {
        self.operating_point
            .map(|op| OperatingPoint::new(op.temperature_c, op.overvoltage_v))
            .transpose()
            .map_err(Into::into)
    }

    /// The resolved configuration as `key = value` lines, preceded by the
    /// tool version as a comment. Parsing it back yields `self`.
    pub fn to_flat_toml(&self) -> String {
        let table = toml::Table::try_from(self).expect("config serialises to a table");
        let mut out = format!("# {TOOL}\n");
        flatten(&mut out, "", &table);
        out
    }
}

fn flatten(out: &mut String, prefix: &str, table: &toml::Table) {
    for (key, value) in table {
        let name = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            toml::Value::Table(t) => flatten(out, &name, t),
            v => {
                let _ = writeln!(out, "{name} = {v}");
            }
        }
    }
}
