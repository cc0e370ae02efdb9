//! `sscdiar`: synthesize embedding data, cluster it with AHC / PIC / SSC
//! systems, score hypotheses with DER, and compare systems across seeds.

mod cfgfile;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssc_core::Error;

#[derive(Parser)]
#[command(
    name = "sscdiar",
    version,
    about = "Self-supervised clustering pipeline for speaker diarization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording: embeddings, segments, reference RTTM
    Synth(SynthArgs),
    /// Cluster a recording with a selected system and write a hypothesis RTTM
    Cluster(RunArgs),
    /// Run the iterative SSC pipeline; writes a hypothesis RTTM and a trace
    Ssc(RunArgs),
    /// Score a hypothesis RTTM against a reference
    Score(ScoreArgs),
    /// Run a (system x seed) grid on synthetic data and tabulate mean DER
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct SynthOpts {
    #[arg(long)]
    num_speakers: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    mean_separation: Option<f64>,
    #[arg(long)]
    within_std: Option<f64>,
    #[arg(long)]
    expected_turn_windows: Option<f64>,
    #[arg(long)]
    total_windows: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Flat key = value config file (flags win)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    synth: SynthOpts,
    #[arg(long)]
    seed: Option<u64>,
}

/// Pipeline knobs shared by cluster / ssc / compare.
#[derive(Args, Clone)]
struct PipelineOpts {
    /// Linkage for AHC-based systems: single | complete | average
    #[arg(long)]
    linkage: Option<String>,
    /// Nearest-neighbor count of the PIC digraph
    #[arg(long)]
    knn: Option<usize>,
    /// Path-length scaling factor of the path integral
    #[arg(long)]
    sigma: Option<f64>,
    /// Negative-pair weight of the triplet objective
    #[arg(long)]
    alpha: Option<f64>,
    /// Temporal-continuity decay factor
    #[arg(long)]
    beta: Option<f64>,
    /// Temporal-continuity floor in segments
    #[arg(long)]
    nb: Option<usize>,
    /// Explained-variance stopping threshold
    #[arg(long)]
    phi: Option<f64>,
    /// Maximum SSC iterations
    #[arg(long)]
    q_max: Option<usize>,
    /// Apply temporal-continuity weighting
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    temporal: Option<bool>,
    /// Early-stop fraction for representation training
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Triplet negative sampling: hard | random | easy
    #[arg(long)]
    sampling: Option<String>,
    /// AHC stopping / initialization threshold
    #[arg(long)]
    threshold: Option<f64>,
    /// SSC initialization route: pic | ahc
    #[arg(long)]
    init: Option<String>,
    /// Whitening eigenvalue shrinkage between 0 and 1
    #[arg(long)]
    shrinkage: Option<f64>,
    /// PCA energy fraction target
    #[arg(long)]
    pca_energy: Option<f64>,
    /// Fixed PCA output dimension (overrides --pca-energy)
    #[arg(long)]
    pca_dim: Option<usize>,
    /// Floor on the representation output dimension
    #[arg(long)]
    min_dim: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding matrix (CSV or EMB1 raw binary, auto-detected)
    #[arg(long)]
    embeddings: PathBuf,
    /// Segment grid CSV (onset,duration per row)
    #[arg(long)]
    segments: PathBuf,
    /// Reference RTTM; when given, the summary includes DER
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Recording id (defaults to the embeddings file stem)
    #[arg(long)]
    rec_id: Option<String>,
    /// System: ahc | pic | ssc-ahc | ssc-pic
    #[arg(long)]
    system: Option<String>,
    /// Known speaker count; omit for unknown-count mode
    #[arg(long)]
    num_speakers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    collar: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    ignore_overlap: Option<bool>,
    #[command(flatten)]
    opts: PipelineOpts,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    hypothesis: PathBuf,
    /// Collar half-width in seconds around reference turn boundaries
    #[arg(long)]
    collar: Option<f64>,
    /// Exclude regions with overlapping reference speakers
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    ignore_overlap: Option<bool>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for compare.csv (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated systems
    #[arg(long)]
    systems: Option<String>,
    /// Comma-separated seeds
    #[arg(long)]
    seeds: Option<String>,
    /// Estimate the speaker count instead of using the synthetic truth
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    unknown: Option<bool>,
    #[arg(long)]
    collar: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    ignore_overlap: Option<bool>,
    #[command(flatten)]
    synth: SynthOpts,
    #[command(flatten)]
    opts: PipelineOpts,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSC_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Cluster(args) => commands::cluster(args, false),
        Command::Ssc(args) => commands::cluster(args, true),
        Command::Score(args) => commands::score(args),
        Command::Compare(args) => commands::compare(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
