//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use neoscan_core::dsp::EdgeNormalization;

use crate::config::CONFIG_ENV;

#[derive(Debug, Parser)]
#[command(name = "neoscan", version, about = "Portable EEG acquisition, seizure detection and signal-quality tools")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output on standard error.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the synthetic headset, serving packets over TCP or writing a session file.
    Simulate(SimulateArgs),
    /// Save a live stream to a session file.
    Record(RecordArgs),
    /// Live seizure detection on a connected headset.
    Monitor(MonitorArgs),
    /// Offline seizure detection on a session or EDF file.
    Detect(DetectArgs),
    /// Remove ocular and line-noise components with ICA.
    Clean(CleanArgs),
    /// Compare two devices over labeled state segments.
    Analyze(AnalyzeArgs),
    /// Cut an EDF directory into labeled model epochs.
    Prepare(PrepareArgs),
    /// Print filter coefficients and magnitude responses.
    FilterDesign(FilterDesignArgs),
    /// Write randomly initialized detector weights.
    InitWeights(InitWeightsArgs),
}

/// `START:END` in seconds.
pub fn parse_span(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad start in {s:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad end in {s:?}"))?;
    if !(b > a && a >= 0.0) {
        return Err(format!("span {s:?} must satisfy 0 <= START < END"));
    }
    Ok((a, b))
}

#[derive(Debug, Args, Clone, Default)]
pub struct ScenarioArgs {
    /// Simulator scenario TOML; overrides the `[simulator]` config section.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Seizure interval, repeatable.
    #[arg(long, value_parser = parse_span)]
    pub seizure: Vec<(f64, f64)>,
    #[arg(long, value_parser = parse_span)]
    pub eyes_closed: Vec<(f64, f64)>,
    /// Head movement interval, repeatable.
    #[arg(long, value_parser = parse_span)]
    pub movement: Vec<(f64, f64)>,
    #[arg(long)]
    pub blinks_per_min: Option<f64>,
    #[arg(long)]
    pub white_noise_uv: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Address to listen on; defaults to the configured endpoint.
    #[arg(long, conflicts_with = "out")]
    pub listen: Option<String>,
    /// Write a session file instead of serving.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth annotation file.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Send as fast as the client reads instead of at 250 frames/s.
    #[arg(long)]
    pub unpaced: bool,
    #[arg(long, default_value_t = neoscan_stream::packet::DEFAULT_FRAMES_PER_PACKET)]
    pub frames_per_packet: usize,
}

#[derive(Debug, Args, Clone)]
pub struct ConnectArgs {
    /// `host:port`; defaults to the configured endpoint.
    #[arg(long)]
    pub connect: Option<String>,
    /// Reconnection attempts after a lost connection.
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    #[arg(long, default_value_t = 200)]
    pub retry_delay_ms: u64,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[command(flatten)]
    pub link: ConnectArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Annotation lines to embed in the session.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorKind {
    /// The graph attention network loaded from a weight container.
    Model,
    /// The 2-4 Hz band-power test oracle; not a clinical detector.
    Fixture,
}

#[derive(Debug, Args, Clone)]
pub struct DetectorArgs {
    #[arg(long, value_enum, default_value_t = DetectorKind::Model)]
    pub detector: DetectorKind,
    /// Weight container; overrides the configured path.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub edges: Option<Edges>,
    /// Print only tagged lines, not one line per epoch.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub link: ConnectArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Also record the session.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Session (`.neos`) or EDF file with the eight referential channels.
    pub input: PathBuf,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    pub input: PathBuf,
    /// Output file; `.edf` writes EDF, anything else a session file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-component table.
    #[arg(long)]
    pub components: Option<PathBuf>,
    /// Linear classifier container; the rule-based classifier otherwise.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub device_a: PathBuf,
    pub device_b: PathBuf,
    /// `t_start t_end label` lines.
    #[arg(long)]
    pub states: PathBuf,
    /// Output directory for the tables.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "a,b", value_delimiter = ',', num_args = 2)]
    pub names: Vec<String>,
    #[arg(long, default_value_t = neoscan_analysis::DEFAULT_MAX_LAG_S)]
    pub max_lag: f64,
    #[arg(long)]
    pub no_prefilter: bool,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    pub edf_dir: PathBuf,
    /// Directory holding `<stem>.mask` or `<stem>.ann` label files; defaults to the EDF directory.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Store epochs without per-channel z-scoring.
    #[arg(long)]
    pub no_zscore: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Edges {
    SamplingRate,
    Nyquist,
}

impl From<Edges> for EdgeNormalization {
    fn from(e: Edges) -> Self {
        match e {
            Edges::SamplingRate => EdgeNormalization::SamplingRate,
            Edges::Nyquist => EdgeNormalization::Nyquist,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterKind {
    Realtime,
    Model,
    Correlation,
    All,
}

#[derive(Debug, Args)]
pub struct FilterDesignArgs {
    #[arg(long, value_enum, default_value_t = FilterKind::All)]
    pub kind: FilterKind,
    #[arg(long, value_enum)]
    pub edges: Option<Edges>,
    #[arg(long, default_value_t = neoscan_core::DEVICE_FS_HZ)]
    pub fs: f64,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
