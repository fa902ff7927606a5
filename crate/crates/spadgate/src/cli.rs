//! Argument parsing and config resolution: the config file (or defaults),
//! then command-line overrides, in that order.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{self, Outcome};
use crate::config::{RunConfig, StreamFormat};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "spadgate",
    version,
    about = "Gated single-photon detector simulation and characterisation"
)]
pub struct Cli {
    /// TOML run configuration with dotted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Text,
    Binary,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a detection-event stream.
    Simulate(SimulateArgs),
    /// Interval histogram, tail fit, QE and APP from a stream file.
    Characterize(CharacterizeArgs),
    /// Dead-time verdict from a count-rate curve.
    RateFit(RateFitArgs),
    /// Frequency response of the shorted stub.
    Stub(StubArgs),
    /// Synthetic output trace and discriminator events.
    Trace(TraceArgs),
    /// Afterpulse-cascade Monte Carlo against the closed-form APP.
    CascadeOracle(CascadeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n_gates: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    #[arg(long)]
    pub stream: Option<PathBuf>,
    #[arg(long)]
    pub n_a: Option<usize>,
    #[arg(long)]
    pub n_bins: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub dcr_window_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RateFitArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rep_rate_hz: Option<f64>,
    #[arg(long)]
    pub n_d_max: Option<u32>,
    #[arg(long)]
    pub window_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StubArgs {
    #[arg(long)]
    pub length_m: Option<f64>,
    #[arg(long)]
    pub velocity_factor: Option<f64>,
    #[arg(long)]
    pub loss_db_per_m: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub random_avalanches: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CascadeArgs {
    #[arg(long)]
    pub n_primaries: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Cli {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.output.dir, self.out.clone());
        match &self.command {
            Command::Simulate(a) => {
                set(&mut cfg.simulation.n_gates, a.n_gates);
                set(
                    &mut cfg.simulation.stream_format,
                    a.format.map(|f| match f {
                        FormatArg::Text => StreamFormat::Text,
                        FormatArg::Binary => StreamFormat::Binary,
                    }),
                );
            }
            Command::Characterize(a) => {
                if a.stream.is_some() {
                    cfg.analysis.stream = a.stream.clone();
                }
                set(&mut cfg.analysis.n_a, a.n_a);
                set(&mut cfg.analysis.n_bins, a.n_bins);
                if a.mu.is_some() {
                    cfg.analysis.mu = a.mu;
                }
                if a.dcr_window_s.is_some() {
                    cfg.analysis.dcr_window_s = a.dcr_window_s;
                }
            }
            Command::RateFit(a) => {
                if a.input.is_some() {
                    cfg.rate.input = a.input.clone();
                }
                if a.rep_rate_hz.is_some() {
                    cfg.rate.rep_rate_hz = a.rep_rate_hz;
                }
                set(&mut cfg.rate.n_d_max, a.n_d_max);
                set(&mut cfg.rate.window_s, a.window_s);
            }
            Command::Stub(a) => {
                set(&mut cfg.stub.length_m, a.length_m);
                set(&mut cfg.stub.velocity_factor, a.velocity_factor);
                set(&mut cfg.stub.loss_db_per_m, a.loss_db_per_m);
            }
            Command::Trace(a) => set(&mut cfg.trace.random_avalanches, a.random_avalanches),
            Command::CascadeOracle(a) => set(&mut cfg.cascade.n_primaries, a.n_primaries),
        }
        Ok(cfg)
    }

    pub fn run(&self) -> Result<Outcome> {
        let cfg = self.resolve()?;
        match self.command {
            Command::Simulate(_) => commands::cmd_simulate(&cfg),
            Command::Characterize(_) => commands::cmd_characterize(&cfg),
            Command::RateFit(_) => commands::cmd_rate_fit(&cfg),
            Command::Stub(_) => commands::cmd_stub(&cfg),
            Command::Trace(_) => commands::cmd_trace(&cfg),
            Command::CascadeOracle(_) => commands::cmd_cascade_oracle(&cfg),
        }
    }
}
