use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use webtree::harness::{self, ReasonerChoice, RunOptions, TaskRun, DEFAULT_GRID};
use webtree::reasoner::{Endpoint, RemoteConfig};
use webtree::search::SearchConfig;

#[derive(Parser)]
#[command(name = "webtree", version, about = "Best-first tree search over simulated web tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single task file.
    Run {
        task: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run every task of a suite manifest.
    Suite {
        manifest: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a suite over a grid of depth/branch settings.
    Sweep {
        manifest: PathBuf,
        /// Comma-separated depth:branch pairs.
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        flags: RunFlags,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReasonerKind {
    Scripted,
    Remote,
}

#[derive(Args)]
struct RunFlags {
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 5)]
    branch: usize,
    #[arg(long, default_value_t = 10)]
    budget: usize,
    /// Background pre-expansions; defaults to the budget.
    #[arg(long)]
    bg_budget: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Defaults to the suite manifest's seed, else 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Refocus by re-executing from the initial page.
    #[arg(long)]
    no_replay: bool,
    #[arg(long)]
    no_background: bool,
    #[arg(long, value_enum, default_value_t = ReasonerKind::Scripted)]
    reasoner: ReasonerKind,
    /// Remote reasoner address, tcp://host:port.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Trace file for `run`, trace directory for `suite`.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

impl RunFlags {
    fn options(&self, default_seed: u64) -> Result<RunOptions> {
        let config = SearchConfig {
            depth: self.depth,
            branch: self.branch,
            budget: self.budget,
            background_budget: if self.no_background { 0 } else { self.bg_budget.unwrap_or(self.budget) },
            epsilon: self.epsilon,
            seed: self.seed.unwrap_or(default_seed),
            replay: !self.no_replay,
        };
        config.validate()?;
        let reasoner = match self.reasoner {
            ReasonerKind::Scripted => ReasonerChoice::Scripted,
            ReasonerKind::Remote => {
                let raw = self.endpoint.as_deref().context("--reasoner remote needs --endpoint")?;
                let endpoint: Endpoint = raw.parse().map_err(anyhow::Error::msg)?;
                ReasonerChoice::Remote(RemoteConfig {
                    endpoint,
                    timeout: Duration::from_secs(self.timeout_secs),
                    retries: self.retries,
                })
            }
        };
        Ok(RunOptions { config, reasoner, cache_dir: self.cache_dir.clone() })
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_traces(dir: &Path, runs: &[TaskRun]) -> Result<()> {
    for run in runs {
        if let Some(trace) = run.trace() {
            write(&dir.join(format!("{}.jsonl", run.report.task)), &trace.to_jsonl())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether everything that ran succeeded.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { task, flags } => {
            let loaded = harness::load_task(&task)?;
            let options = flags.options(0)?;
            let run = harness::run_task(&loaded, &options)?;
            if let (Some(path), Some(trace)) = (&flags.trace, run.trace()) {
                write(path, &trace.to_jsonl())?;
            }
            let report = harness::RunReport::new(options.config, vec![run.report.clone()]);
            emit_report(&report.to_json(), flags.report.as_deref())?;
            Ok(run.report.success)
        }
        Command::Suite { manifest, flags } => {
            let suite = harness::load_suite(&manifest)?;
            let options = flags.options(suite.seed)?;
            let (report, runs) = harness::run_suite(&suite, &options)?;
            if let Some(dir) = &flags.trace {
                write_traces(dir, &runs)?;
            }
            emit_report(&report.to_json(), flags.report.as_deref())?;
            eprintln!(
                "SR {:.3} ({}/{})",
                report.aggregate.success_rate, report.aggregate.successes, report.aggregate.tasks
            );
            Ok(report.aggregate.successes == report.aggregate.tasks)
        }
        Command::Sweep { manifest, grid, flags } => {
            let suite = harness::load_suite(&manifest)?;
            let options = flags.options(suite.seed)?;
            let grid = match grid {
                Some(g) => harness::parse_grid(&g)?,
                None => DEFAULT_GRID.to_vec(),
            };
            let table = harness::sweep(&suite, &grid, &options)?;
            print!("{}", table.render());
            if let Some(path) = &flags.report {
                write(path, &table.to_json())?;
            }
            Ok(true)
        }
    }
}

fn emit_report(json: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write(p, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}
