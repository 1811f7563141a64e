use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iotchan::cli::{self, CliError, Report, ScenarioOverrides};

#[derive(Parser)]
#[command(name = "iotchan", version, about = "Payment channels for devices without blockchain access")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Config file; an alternative to the positional argument.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the device master seed (64 hex digits).
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Overrides the scenario horizon in blocks.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// Prints a human summary to standard error.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Runs a scenario config through the actor simulation.
    RunScenario {
        path: Option<PathBuf>,
        /// Writes the event trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Payoff matrix, equilibria and tree checks for a game config.
    AnalyzeGame { path: Option<PathBuf> },
    /// Fee floors for a game config.
    MinFees { path: Option<PathBuf> },
    /// Serialized size range for a transaction shape.
    EstimateSize { inputs: u64, outputs: u64 },
    /// Honest open, two updates and mutual close.
    DemoHonest,
    /// Gateway publishes a revoked state and is punished.
    DemoBreach,
}

fn config_text(positional: Option<PathBuf>, flag: Option<PathBuf>, fallback: &str) -> Result<String, CliError> {
    match positional.or(flag) {
        Some(path) => read(&path),
        None => cli::fixture(fallback),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn summary(report: &Report) -> String {
    let r = &report.results;
    let mut lines = vec![format!("{} ({})", report.command, &report.inputs_digest[..12])];
    if let Some(txs) = r["on_chain"].as_array() {
        for t in txs {
            lines.push(format!("  h={} {} fee={}", t["height"], t["label"], t["fee"]));
        }
    }
    if let Some(s) = r["settled"].as_object() {
        for (who, v) in s {
            lines.push(format!("  {who}: {v}"));
        }
    }
    for w in &report.warnings {
        lines.push(format!("  warning: {w}"));
    }
    lines.join("\n")
}

fn run(args: Args) -> Result<Report, CliError> {
    let overrides = ScenarioOverrides {
        seed: args.seed.as_deref().map(cli::parse_seed).transpose()?,
        horizon: args.horizon,
    };
    match args.command {
        Command::RunScenario { path, trace } => {
            let text = match path.or(args.config) {
                Some(p) => read(&p)?,
                None => return Err(CliError::Usage("run-scenario needs a config path".into())),
            };
            let (report, events) = cli::cmd_run_scenario(&text, overrides)?;
            if let Some(out) = trace {
                std::fs::write(&out, events.to_json_lines()).map_err(|source| CliError::Io { path: out, source })?;
            }
            Ok(report)
        }
        Command::AnalyzeGame { path } => cli::cmd_analyze_game(&config_text(path, args.config, "game")?),
        Command::MinFees { path } => cli::cmd_min_fees(&config_text(path, args.config, "game")?),
        Command::EstimateSize { inputs, outputs } => cli::cmd_estimate_size(inputs, outputs),
        Command::DemoHonest => cli::cmd_demo_honest(overrides),
        Command::DemoBreach => cli::cmd_demo_breach(overrides),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let verbose = args.verbose;
    let (report, code) = match run(args) {
        Ok(report) => (Some(report), 0),
        Err(CliError::CheckFailed { message, report }) => {
            eprintln!("error: {message}");
            (Some(*report), 1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (None, e.exit_code())
        }
    };
    if let Some(report) = report {
        // stdout may be a closed pipe
        let _ = writeln!(std::io::stdout().lock(), "{}", report.to_json());
        if verbose {
            eprintln!("{}", summary(&report));
        }
    }
    ExitCode::from(code as u8)
}
