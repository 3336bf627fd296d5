//! Task files, suite manifests, runs and reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{load_site_graph_file, GoalSpec, SiteError, SiteGraph};
use crate::memory::{MemoryError, MemoryStore};
use crate::reasoner::{Reasoner, RemoteConfig, RemoteReasoner, ScriptedReasoner, TaskHints};
use crate::search::{search, SearchConfig, SearchError, SearchResult, SearchTask, Trace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The depth/branch rows swept by default, shallow to deep.
pub const DEFAULT_GRID: [(usize, usize); 7] = [(0, 1), (1, 3), (1, 5), (2, 3), (2, 5), (3, 5), (5, 5)];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{path}: {source}")]
    Site { path: String, source: SiteError },
    #[error("suite has no tasks")]
    EmptySuite,
    #[error("invalid grid `{0}`: expected comma-separated depth:branch pairs")]
    Grid(String),
    #[error("task {task}: {source}")]
    Search { task: String, source: SearchError },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub id: String,
    pub intent: String,
    /// Site fixture path, relative to the task file.
    pub site: String,
    /// Overrides the site's own goal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalSpec>,
    #[serde(default)]
    pub hints: TaskHints,
}

#[derive(Debug, Clone)]
pub struct LoadedTask {
    pub file: TaskFile,
    pub path: PathBuf,
    pub graph: SiteGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub seed: u64,
    /// Task file paths, relative to the manifest.
    pub tasks: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub seed: u64,
    pub tasks: Vec<LoadedTask>,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn relative_to(file: &Path, rel: &str) -> PathBuf {
    file.parent().unwrap_or_else(|| Path::new(".")).join(rel)
}

pub fn load_task(path: &Path) -> Result<LoadedTask, HarnessError> {
    let file: TaskFile = parse(path, &read(path)?)?;
    let site_path = relative_to(path, &file.site);
    let mut graph = load_site_graph_file(&site_path)
        .map_err(|source| HarnessError::Site { path: site_path.display().to_string(), source })?;
    if let Some(goal) = &file.goal {
        graph = graph.with_goal(goal.clone());
    }
    Ok(LoadedTask { file, path: path.to_path_buf(), graph })
}

pub fn load_suite(path: &Path) -> Result<Suite, HarnessError> {
    let manifest: SuiteManifest = parse(path, &read(path)?)?;
    let tasks = manifest.tasks.iter().map(|t| load_task(&relative_to(path, t))).collect::<Result<Vec<_>, _>>()?;
    Ok(Suite { seed: manifest.seed, tasks })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReasonerChoice {
    Scripted,
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub config: SearchConfig,
    pub reasoner: ReasonerChoice,
    /// Page memory cache directory, one subdirectory per task id.
    pub cache_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(config: SearchConfig) -> Self {
        Self { config, reasoner: ReasonerChoice::Scripted, cache_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub cycles: usize,
    pub env_actions: usize,
    pub replayed_actions: usize,
    pub refocus_actions: usize,
    pub background_expansions: usize,
    pub nodes: usize,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TaskReport {
    fn from_result(task: &str, r: &SearchResult) -> Self {
        Self {
            task: task.to_string(),
            success: r.success,
            answer: r.answer.clone(),
            cycles: r.stats.cycles,
            env_actions: r.stats.env_actions,
            replayed_actions: r.stats.replayed_actions,
            refocus_actions: r.stats.refocus_actions,
            background_expansions: r.stats.background_expansions,
            nodes: r.stats.nodes,
            wall_time_secs: r.stats.wall_time_secs,
            error: r.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean wall time over successful tasks; absent when none succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_time_success_only: Option<f64>,
    pub total_env_actions: usize,
    pub total_refocus_actions: usize,
}

impl Aggregate {
    pub fn of(tasks: &[TaskReport]) -> Self {
        let successes: Vec<&TaskReport> = tasks.iter().filter(|t| t.success).collect();
        let mean_time = (!successes.is_empty())
            .then(|| successes.iter().map(|t| t.wall_time_secs).sum::<f64>() / successes.len() as f64);
        Self {
            tasks: tasks.len(),
            successes: successes.len(),
            success_rate: if tasks.is_empty() { 0.0 } else { successes.len() as f64 / tasks.len() as f64 },
            mean_time_success_only: mean_time,
            total_env_actions: tasks.iter().map(|t| t.env_actions).sum(),
            total_refocus_actions: tasks.iter().map(|t| t.refocus_actions).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: SearchConfig,
    pub tasks: Vec<TaskReport>,
    pub aggregate: Aggregate,
}

impl RunReport {
    pub fn new(config: SearchConfig, tasks: Vec<TaskReport>) -> Self {
        let aggregate = Aggregate::of(&tasks);
        Self { schema_version: REPORT_SCHEMA_VERSION, config, tasks, aggregate }
    }

    /// The report with every wall-time field zeroed.
    pub fn masked(&self) -> Self {
        let mut r = self.clone();
        for t in &mut r.tasks {
            t.wall_time_secs = 0.0;
        }
        if let Some(m) = &mut r.aggregate.mean_time_success_only {
            *m = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

/// Output of one task run.
#[derive(Debug, Clone)]
pub struct TaskRun {
    pub report: TaskReport,
    pub result: Option<SearchResult>,
}

impl TaskRun {
    pub fn trace(&self) -> Option<&Trace> {
        self.result.as_ref().map(|r| &r.trace)
    }
}

fn reasoner_for(task: &LoadedTask, choice: &ReasonerChoice) -> Box<dyn Reasoner> {
    match choice {
        ReasonerChoice::Scripted => Box::new(ScriptedReasoner::new(task.file.hints.clone())),
        ReasonerChoice::Remote(config) => Box::new(RemoteReasoner::new(config.clone())),
    }
}

/// Runs one task. A search that fails before its first cycle still yields
/// a failed report entry.
pub fn run_task(task: &LoadedTask, options: &RunOptions) -> Result<TaskRun, HarnessError> {
    let mut memory = match &options.cache_dir {
        Some(dir) => MemoryStore::with_cache_dir(dir.join(&task.file.id))?,
        None => MemoryStore::new(),
    };
    let mut reasoner = reasoner_for(task, &options.reasoner);
    let search_task = SearchTask { id: task.file.id.clone(), intent: task.file.intent.clone() };
    match search(&search_task, &task.graph, &options.config, reasoner.as_mut(), &mut memory) {
        Ok(result) => {
            for w in memory.take_warnings() {
                log::warn!("{}: {w}", task.file.id);
            }
            Ok(TaskRun { report: TaskReport::from_result(&task.file.id, &result), result: Some(result) })
        }
        Err(e @ SearchError::InvalidConfig(_)) => Err(HarnessError::Search { task: task.file.id.clone(), source: e }),
        Err(e) => Ok(TaskRun {
            report: TaskReport {
                task: task.file.id.clone(),
                success: false,
                answer: None,
                cycles: 0,
                env_actions: 0,
                replayed_actions: 0,
                refocus_actions: 0,
                background_expansions: 0,
                nodes: 0,
                wall_time_secs: 0.0,
                error: Some(e.to_string()),
            },
            result: None,
        }),
    }
}

pub fn run_suite(suite: &Suite, options: &RunOptions) -> Result<(RunReport, Vec<TaskRun>), HarnessError> {
    if suite.tasks.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    let runs = suite.tasks.iter().map(|t| run_task(t, options)).collect::<Result<Vec<_>, _>>()?;
    let report = RunReport::new(options.config, runs.iter().map(|r| r.report.clone()).collect());
    Ok((report, runs))
}

pub fn parse_grid(s: &str) -> Result<Vec<(usize, usize)>, HarnessError> {
    let bad = || HarnessError::Grid(s.to_string());
    let grid = s
        .split(',')
        .map(|pair| {
            let (d, b) = pair.trim().split_once(':').ok_or_else(bad)?;
            Ok((d.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub depth: usize,
    pub branch: usize,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep tables serialize") + "\n"
    }

    /// Plain-text table, one row per grid point.
    pub fn render(&self) -> String {
        let mut out = String::from("depth  branch  SR      env_actions  mean_time_s\n");
        for row in &self.rows {
            let a = &row.report.aggregate;
            let time = a.mean_time_success_only.map_or("-".to_string(), |t| format!("{t:.4}"));
            let _ = writeln!(
                out,
                "{:<5}  {:<6}  {:<6.3}  {:<11}  {}",
                row.depth, row.branch, a.success_rate, a.total_env_actions, time
            );
        }
        out
    }
}

/// Runs every `(d, b)` point of `grid` with the same budget `c`.
pub fn sweep(suite: &Suite, grid: &[(usize, usize)], base: &RunOptions) -> Result<SweepTable, HarnessError> {
    let mut rows = Vec::new();
    for &(depth, branch) in grid {
        let options = RunOptions { config: SearchConfig { depth, branch, ..base.config }, ..base.clone() };
        let (report, _) = run_suite(suite, &options)?;
        rows.push(SweepRow { depth, branch, report });
    }
    Ok(SweepTable { schema_version: REPORT_SCHEMA_VERSION, rows })
}
