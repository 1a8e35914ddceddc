//! `parktrack`: enroll subjects, simulate a park, track laps and evaluate
//! calorie estimates.
//!
//! Exit codes: 0 success, 1 empty or degenerate result, 2 input error.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "parktrack", version, about = "Recognition-driven lap and calorie tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand; flags beat the config file.
#[derive(Debug, Args)]
struct Common {
    /// Flat JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for persisted sessions and reports [env: PARKTRACK_DATA_DIR].
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Seed for every random draw (synthetic embeddings, detection noise).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a gallery from a `subject_id,name,weight_kg` roster.
    Enroll(EnrollArgs),
    /// Generate a sighting stream and ground truth from a scenario.
    Simulate(SimulateArgs),
    /// Replay a sighting stream through identification and the lap tracker.
    Track(TrackArgs),
    /// Reproduce the calorie table and compare against reference readings.
    Eval(EvalArgs),
    /// Print a persisted session.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct EnrollArgs {
    #[arg(long)]
    roster: PathBuf,
    /// Output gallery JSON.
    #[arg(long)]
    out: PathBuf,
    /// JSON object mapping subject_id to an embedding array; synthetic
    /// embeddings are generated when omitted.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output sighting stream (JSONL).
    #[arg(long)]
    stream: PathBuf,
    /// Output ground-truth CSV.
    #[arg(long)]
    truth: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    perimeter: Option<f64>,
    #[arg(long)]
    debounce: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    timeout: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// `subject_id,weight_kg,avg_pace_kmh[,met,kcal_per_min,total_kcal]`; the
    /// bundled table is used when omitted.
    #[arg(long)]
    table3: Option<PathBuf>,
    /// `subject_id,dlicp_kcal,reference_kcal[,deviation]`; the bundled table
    /// is used when omitted.
    #[arg(long)]
    table4: Option<PathBuf>,
    /// Report JSON path (default: `<data_dir>/report.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Session JSON written by `track`.
    session: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enroll(a) => commands::enroll(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Track(a) => commands::track(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_INPUT)
        }
    }
}
