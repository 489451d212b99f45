//! `vtg` runs one experiment per invocation and writes `<command>.csv` plus a
//! `<command>.json` report into the output directory.

mod commands;
mod config;
mod output;

use clap::Parser;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use vtg::analysis::Scenario;
use vtg::TieBreak;

use config::{Command, Resolved};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl From<vtg::Error> for CliError {
    fn from(e: vtg::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vtg", version, about = "Vehicle traffic game experiments")]
struct Args {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Analysis to run; overrides `experiment.command`.
    #[arg(long, value_enum)]
    command: Option<Command>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seeds Monte Carlo episodes and configuration sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Step of the priority sweep grid.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Evaluate a seeded random subset of initial configurations.
    #[arg(long)]
    configs_sample: Option<usize>,
    #[arg(long, value_parser = parse_tie)]
    tie_break: Option<TieBreak>,
}

fn parse_tie(s: &str) -> Result<TieBreak, String> {
    s.parse()
}

fn resolve(args: &Args) -> Result<(Command, Resolved), CliError> {
    let mut r = config::load(args.config.as_deref())?;
    let ex = &mut r.experiment;
    ex.command = args.command.or(ex.command);
    ex.seed = args.seed.or(ex.seed);
    ex.jobs = args.jobs.or(ex.jobs);
    if let Some(g) = args.grid_step {
        ex.grid_step = g;
    }
    if let Some(k) = args.configs_sample {
        r.scenario.configs_sample = Some(k);
    }
    if let Some(t) = args.tie_break {
        r.scenario.protocol.tie_break = t;
    }
    if let Some(s) = r.experiment.seed {
        r.scenario.sample_seed = s;
    }
    if r.experiment.jobs == Some(0) {
        return Err(CliError::Config("jobs must be >= 1".into()));
    }
    let cmd = r
        .experiment
        .command
        .ok_or_else(|| CliError::Config("no command given (--command or experiment.command)".into()))?;
    if cmd == Command::Montecarlo && r.experiment.seed.is_none() {
        return Err(CliError::Config("montecarlo requires --seed or experiment.seed".into()));
    }
    Ok((cmd, r))
}

fn execute(args: &Args) -> Result<String, CliError> {
    let started = Instant::now();
    let (cmd, resolved) = resolve(args)?;
    let sc = Scenario::new(resolved.scenario.clone()).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = resolved.experiment.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let outcome = pool.install(|| commands::run(cmd, &sc, &resolved.experiment))?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    let csv_name = format!("{}.csv", cmd.name());
    outcome.table.write(&args.out.join(&csv_name))?;
    let report = json!({
        "tool": "vtg",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": vtg::VERSION,
        "command": cmd.name(),
        "seed": resolved.experiment.seed,
        "jobs": pool.current_num_threads(),
        "config_hash": resolved.hash(),
        "config": resolved,
        "configurations": sc.configs.len(),
        "csv": csv_name,
        "rows": outcome.table.rows.len(),
        "runtime_seconds": started.elapsed().as_secs_f64(),
        "results": outcome.results,
    });
    let report_path = args.out.join(format!("{}.json", cmd.name()));
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&report_path, text + "\n")
        .map_err(|e| CliError::Runtime(format!("{}: {e}", report_path.display())))?;
    Ok(format!("{}: {} rows -> {}", cmd.name(), outcome.table.rows.len(), args.out.display()))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("vtg: {e}");
            ExitCode::from(e.code())
        }
    }
}
