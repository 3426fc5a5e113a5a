//! padnet command line: run scenarios, build reports, evaluate traces, and
//! compare the two methodologies.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "padnet", version, about = "Cell-level anonymity network simulator for circuit padding defenses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario: one simulation per seed, each into its own run
    /// directory with downloads.csv, progress.csv, and run_meta.json.
    Run(RunArgs),
    /// Build report CSVs (ttb/pctb/err/scatter/pad_err) from run directories.
    Report(ReportArgs),
    /// Trace-mode evaluation: generate traces from runs and apply defenses
    /// to them.
    Trace(TraceArgs),
    /// Put trace-mode latency overhead next to the network-mode
    /// time-to-last-byte overhead for the same defense.
    Compare(CompareArgs),
    /// Parse and validate a scenario file.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long, required_unless_present = "from_manifest")]
    scenario: Option<PathBuf>,
    /// Re-execute exactly the run described by a run_meta.json.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Single seed override.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list override.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Defense name override; `none` reuses the scenario as its control.
    /// Other names need --defense-params unless they match the file.
    #[arg(long)]
    defense: Option<String>,
    /// Defense parameters as a JSON object, merged with --defense.
    #[arg(long)]
    defense_params: Option<String>,
    /// Simulated duration override, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Output root; defaults to $PADNET_OUT or ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel simulations (runs never share state).
    #[arg(long)]
    workers: Option<usize>,
    /// Emit events.log per run (large; enables the transport audits).
    #[arg(long)]
    events_log: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to pool; defense columns appear in first-seen order.
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Padding-count bin width for pad_err tables.
    #[arg(long, default_value_t = padnet::report::DEFAULT_PAD_BIN_WIDTH)]
    pad_bin_width: u64,
}

#[derive(Args)]
struct TraceArgs {
    #[command(subcommand)]
    action: TraceAction,
}

#[derive(Subcommand)]
enum TraceAction {
    /// Extract a client-perspective cell trace from a recorded download.
    Gen {
        /// Run directory to read.
        #[arg(long)]
        run: PathBuf,
        /// Download id; defaults to the first successful download.
        #[arg(long)]
        download: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a defense to a trace and report its overheads.
    Apply {
        #[arg(long)]
        trace: PathBuf,
        /// Defense name, or use --scenario to take the defense from a file.
        #[arg(long, conflicts_with = "scenario")]
        defense: Option<String>,
        /// Defense parameters as a JSON object (with --defense).
        #[arg(long)]
        defense_params: Option<String>,
        /// Scenario file whose defense block should be applied.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defended trace output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Overhead report output CSV (defense,bandwidth_pct,latency_pct).
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CompareArgs {
    /// Directory produced by `padnet report` (network mode).
    #[arg(long)]
    report_dir: PathBuf,
    /// CSV produced by `padnet trace apply --report`.
    #[arg(long)]
    trace_report: PathBuf,
    /// Size class label (50K, 1M, 5M, or <bytes>B).
    #[arg(long, default_value = "1M")]
    size: String,
    /// Defense name of the control group.
    #[arg(long, default_value = "none")]
    control: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => commands::run(args),
        Command::Report(args) => commands::report(args),
        Command::Trace(args) => commands::trace(args),
        Command::Compare(args) => commands::compare(args),
        Command::Validate(args) => commands::validate(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
