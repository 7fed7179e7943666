//! `trace`: statistics, calibration, scoring, evaluation, synthesis and
//! inspection over TEF embedding corpora.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trace_core::statistics::DEFAULT_WINDOW;

#[derive(Debug, Parser)]
#[command(
    name = "trace",
    version,
    about = "Training-free partial-spoof detection from embedding trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute per-utterance statistics into a CSV.
    Stats(StatsArgs),
    /// Fit a calibration profile on a labeled dev set.
    Calibrate(CalibrateArgs),
    /// Score a corpus with a calibration profile.
    Score(ScoreArgs),
    /// Evaluate scores against manifest labels.
    Eval(EvalArgs),
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Summarize one TEF file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct ExecArgs {
    /// Worker threads; 0 or unset uses all available cores.
    #[arg(long, env = "TRACE_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated statistic ids.
    #[arg(long)]
    stats: String,
    #[arg(long, default_value_t = DEFAULT_WINDOW, value_parser = positive)]
    window: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report failing utterances and continue instead of aborting.
    #[arg(long)]
    skip_errors: bool,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Labeled dev manifest.
    #[arg(long, required_unless_present_any = ["input_stats", "preset"], conflicts_with = "input_stats")]
    manifest: Option<PathBuf>,
    /// Precomputed statistics CSV instead of a manifest.
    #[arg(long)]
    input_stats: Option<PathBuf>,
    /// Candidate statistic ids; defaults to the full catalog, or to the
    /// columns of --input-stats.
    #[arg(long, conflicts_with = "preset")]
    stats: Option<String>,
    /// Fit a named fixed combination instead of searching.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = DEFAULT_WINDOW, value_parser = positive)]
    window: usize,
    #[arg(long, default_value_t = trace_core::calibration::DEFAULT_GRID_STEP)]
    grid_step: f64,
    #[arg(long, default_value_t = trace_core::calibration::DEFAULT_MAX_SUBSET)]
    max_subset: usize,
    /// Skip z-score standardization.
    #[arg(long)]
    raw_mode: bool,
    /// Profile name recorded in the output.
    #[arg(long, default_value = "calibrated")]
    name: String,
    /// Profile JSON to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    skip_errors: bool,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(
        long,
        required_unless_present = "input_stats",
        conflicts_with = "input_stats"
    )]
    manifest: Option<PathBuf>,
    /// Score a precomputed statistics CSV instead of a manifest.
    #[arg(long)]
    input_stats: Option<PathBuf>,
    #[arg(long)]
    profile: PathBuf,
    /// Scores CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    skip_errors: bool,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Manifest supplying the labels.
    #[arg(long)]
    manifest: PathBuf,
    /// Fixed decision threshold for FAR/FRR/HTER.
    #[arg(long, allow_negative_numbers = true)]
    threshold: Option<f64>,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    roc_csv: Option<PathBuf>,
    #[arg(long)]
    hist_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 20, value_parser = positive)]
    bins: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Utterances per class.
    #[arg(long, default_value_t = 10)]
    n_each: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    n_frames: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Mean per-frame geodesic step (radians).
    #[arg(long, default_value_t = 0.05)]
    step_angle: f64,
    #[arg(long, default_value_t = 0.01)]
    step_jitter: f64,
    #[arg(long, default_value_t = 0.9)]
    persistence: f64,
    /// Splices per spoofed utterance.
    #[arg(long, default_value_t = 1)]
    n_splices: usize,
    /// Splice jump angle (radians).
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    jump_angle: f64,
    #[arg(long, default_value_t = 0)]
    crossfade: usize,
    #[arg(long, default_value_t = 50.0)]
    frame_rate: f32,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Debug, Args)]
struct InspectArgs {
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let line = rendered
                .lines()
                .next()
                .unwrap_or("error: invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Stats(a) => commands::stats(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}
