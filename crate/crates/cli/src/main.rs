mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

/// Find, verify and disrupt context-dependent gate-sequence error patterns.
#[derive(Debug, Parser)]
#[command(name = "qpattern", version, about)]
pub struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and lower the 3-qubit Grover benchmark.
    Grover(GroverArgs),
    /// Build a layered echo circuit whose segments each compose to the identity.
    Echo(EchoArgs),
    /// Emit a mock backend spec, optionally planting a rule from a circuit.
    Backend(BackendArgs),
    /// Calibrate the ratio oracle for a circuit in one window.
    Calibrate(CalibrateArgs),
    /// Localize excess error in one calibration window.
    Discover(DiscoverArgs),
    /// Repeat discovery across windows and tally flagged segments.
    Verify(VerifyArgs),
    /// Add consistently flagged segments from a verify report to a pattern database.
    Promote(PromoteArgs),
    /// List pattern occurrences in a circuit.
    Scan(ScanArgs),
    /// Break pattern occurrences with commuting swaps.
    Transform(TransformArgs),
    /// Run the survivor-count scaling study.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutName {
    Fez,
    Marrakesh,
}

#[derive(Debug, Args)]
pub struct GroverArgs {
    /// Marked 3-bit state.
    #[arg(long, default_value = "101")]
    pub marked: String,
    #[arg(long, default_value_t = 2)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value = "fez")]
    pub layout: LayoutName,
    /// Fuse consecutive RZ gates on a qubit.
    #[arg(long)]
    pub merge_rz: bool,
    /// Write the lowered circuit (text, or JSON for a .json path).
    #[arg(long)]
    pub write: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EchoArgs {
    /// Backend preset whose coupling graph the circuit uses.
    #[arg(long, default_value = "fez")]
    pub preset: String,
    #[arg(long, default_value_t = 36)]
    pub segments: usize,
    /// Write the circuit (text, or JSON for a .json path).
    #[arg(long)]
    pub write: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// fez, kingston or marrakesh.
    #[arg(long, default_value = "fez")]
    pub preset: String,
    /// Replace the preset's rules with one planted inside this circuit.
    #[arg(long)]
    pub plant_from: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub excess: f64,
    #[arg(long, default_value_t = 3)]
    pub segment_size: usize,
    #[arg(long)]
    pub transient_prob: Option<f64>,
    #[arg(long)]
    pub sigma_mult: Option<f64>,
    /// Write the spec JSON here.
    #[arg(long)]
    pub write: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 8192)]
    pub shots: u64,
    #[arg(long, default_value_t = 5)]
    pub null_runs: usize,
    #[arg(long, default_value_t = 3)]
    pub segment_size: usize,
    #[arg(long, default_value_t = 16)]
    pub n_max: usize,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long)]
    pub backend: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub window: u64,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Write the exported noise model JSON here.
    #[arg(long)]
    pub write_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long)]
    pub backend: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub window: u64,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Leave the per-measurement ledger out of the report.
    #[arg(long)]
    pub no_ledger: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long)]
    pub backend: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub windows: usize,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Directory for windows.csv and segments.csv.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PromoteArgs {
    /// Report written by `verify`.
    #[arg(long)]
    pub report: PathBuf,
    /// Pattern database; created if missing, merged into otherwise.
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub min_consistency: f64,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    /// Disrupt only the first N occurrences.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Write the rewritten circuit here.
    #[arg(long)]
    pub write: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Backend to run on.
    #[arg(long)]
    pub backend: PathBuf,
    /// Take the pattern from this database...
    #[arg(long, conflicts_with = "rule_from")]
    pub db: Option<PathBuf>,
    /// ...entry index within it.
    #[arg(long, default_value_t = 0)]
    pub entry: usize,
    /// ...or from the first hidden rule of this backend spec.
    #[arg(long)]
    pub rule_from: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub circuits_per_group: usize,
    #[arg(long, default_value_t = 3)]
    pub occurrences: usize,
    #[arg(long, default_value_t = 8192)]
    pub shots: u64,
    /// Directory for rows.csv, summary.csv and scatter.dat.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Grover(_) => "grover",
            Command::Echo(_) => "echo",
            Command::Backend(_) => "backend",
            Command::Calibrate(_) => "calibrate",
            Command::Discover(_) => "discover",
            Command::Verify(_) => "verify",
            Command::Promote(_) => "promote",
            Command::Scan(_) => "scan",
            Command::Transform(_) => "transform",
            Command::Experiment(_) => "experiment",
        }
    }
}

/// What a command hands back: the deterministic result, extra metadata
/// that may vary between runs, and a line for the terminal.
pub struct Outcome {
    pub result: Value,
    pub extra: Value,
    pub summary: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(seed) = cli.seed else {
        eprintln!("error: --seed is required");
        return ExitCode::from(2);
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let started = Instant::now();
    let name = cli.command.name();
    match commands::run(&cli.command, seed) {
        Ok(outcome) => {
            let mut metadata = json!({
                "tool": "qpattern",
                "version": env!("CARGO_PKG_VERSION"),
                "command": name,
                "seed": seed,
                "created": chrono::Utc::now().to_rfc3339(),
                "elapsed_ms": started.elapsed().as_secs_f64() * 1e3,
                "jobs": rayon::current_num_threads(),
            });
            if let (Value::Object(m), Value::Object(extra)) = (&mut metadata, outcome.extra) {
                m.extend(extra);
            }
            let envelope = json!({ "metadata": metadata, "result": outcome.result });
            let text = serde_json::to_string_pretty(&envelope).expect("JSON values serialize");
            let written = match &cli.out {
                Some(path) => std::fs::write(path, format!("{text}\n")),
                None => {
                    println!("{text}");
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            eprintln!("{}", outcome.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
