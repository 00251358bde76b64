use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "duet",
    version,
    about = "Human-robot piano duet: corpus tools, training, sessions and analysis"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` configuration file. `DUET_<KEY>` variables override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Extra `key=value` settings, applied after the file and environment.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract chord-melody pairs from a directory of MIDI files.
    Extract(ExtractArgs),
    /// Train the chord classifier on an extracted dataset.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset, crediting accepted substitutions.
    Evaluate(EvaluateArgs),
    /// Simulate a full session against a recorded or scripted melody.
    Replay(ReplayArgs),
    /// Run a live session for WebSocket clients.
    Serve(ServeArgs),
    /// Synchronization metrics over a session log or two beat series.
    Analyze(AnalyzeArgs),
    /// Run the four feedback-condition simulations and compare them.
    SimulateFeedback(FeedbackArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory searched recursively for .mid/.midi files.
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Dataset output, one JSON record per line.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-chord counts, skipped files and the configuration hash.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Checkpoint output.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-epoch losses and accuracies as JSON.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    /// Write the held-out test split as a dataset.
    #[arg(long, value_name = "FILE")]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Samples to score.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Dataset the replacement table is mined from; defaults to `--data`.
    #[arg(long, value_name = "FILE")]
    pub table_data: Option<PathBuf>,
    /// Report and replacement table as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Decisions {
    /// Chord classifier checkpoint; defaults to the `checkpoint` key.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Fixed chords per bar instead of a model, e.g. "C G Am F".
    #[arg(long, value_name = "CHORDS", conflicts_with = "checkpoint")]
    pub chart: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Melody MIDI file; a track named MELODY is preferred when present.
    #[arg(
        long,
        value_name = "FILE",
        required_unless_present = "piece",
        conflicts_with = "piece"
    )]
    pub melody: Option<PathBuf>,
    /// Built-in scripted piece; plays its own chord chart unless a model is given.
    #[arg(long, value_name = "NAME")]
    pub piece: Option<String>,
    #[command(flatten)]
    pub decisions: Decisions,
    /// Directory for the merged MIDI, session log, beats, trajectory and report.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; defaults to the `bind` key.
    #[arg(long, value_name = "ADDR")]
    pub bind: Option<String>,
    #[command(flatten)]
    pub decisions: Decisions,
    /// Stop after this many seconds instead of waiting for Ctrl-C.
    #[arg(long, value_name = "SECONDS")]
    pub duration: Option<f64>,
    /// Session log written on shutdown.
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
    /// Control-cycle timing summary written on shutdown.
    #[arg(long, value_name = "FILE")]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Session log whose human and robot beat records are compared bar by bar.
    #[arg(long, value_name = "FILE", required_unless_present_all = ["human", "robot"], conflicts_with_all = ["human", "robot"])]
    pub log: Option<PathBuf>,
    /// Human heavy beats, one time in seconds per line.
    #[arg(long, value_name = "FILE", requires = "robot")]
    pub human: Option<PathBuf>,
    /// Robot heavy beats, one time in seconds per line.
    #[arg(long, value_name = "FILE", requires = "human")]
    pub robot: Option<PathBuf>,
    /// Beat-clock period for phases; defaults to one bar at the configured tempo.
    #[arg(long, value_name = "SECONDS")]
    pub period: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeedbackArgs {
    /// Per-condition summaries and per-run reports as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write a two-voice MIDI rendering of each condition's first run here.
    #[arg(long, value_name = "DIR")]
    pub midi_dir: Option<PathBuf>,
}
