use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex, AgentKind, Config};
use crate::agents::{cem_ql_train, dqn_train, TrainOutcome};
use crate::envs::{ConcurrentEnv, ExecutionMode, LatencySchedule, WrapperConfig};
use crate::error::{ensure, Error, Result};
use crate::features::FeatureConfig;

/// Column order of the sweep CSV.
pub const CSV_HEADER: [&str; 18] = [
    "config_hash",
    "execution_mode",
    "latency_ms",
    "latency_schedule",
    "use_vtg",
    "use_prev_action",
    "use_t_as",
    "n_stack_states",
    "n_stack_actions",
    "n_action_bins",
    "learning_rate",
    "seed",
    "status",
    "final_return",
    "episode_sim_duration_s",
    "action_completion",
    "wall_clock_s",
    "error",
];

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Fixed,
    /// Latency redrawn at every reset from the configured set, truncated at
    /// the cell's `latency_ms`.
    PerEpisode,
}

/// Cartesian grid of sweep cells plus the seeds each cell runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub seeds: Vec<u64>,
    pub parallelism: usize,
    pub execution_mode: Vec<ExecutionMode>,
    pub latency_ms: Vec<f64>,
    pub latency_schedule: Vec<ScheduleKind>,
    /// Candidate latencies for per-episode cells.
    pub latency_set_ms: Vec<f64>,
    pub use_vtg: Vec<bool>,
    pub use_prev_action: Vec<bool>,
    pub use_t_as: Vec<bool>,
    pub n_stack_states: Vec<usize>,
    pub n_stack_actions: Vec<usize>,
    pub n_action_bins: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for SweepSpec {
    /// 24 configurations for each of the unconditioned and VTG arms.
    fn default() -> Self {
        SweepSpec {
            seeds: vec![0, 1, 2],
            parallelism: 1,
            execution_mode: vec![ExecutionMode::Concurrent],
            latency_ms: vec![50.0],
            latency_schedule: vec![ScheduleKind::Fixed],
            latency_set_ms: vec![0.0, 5.0, 10.0, 25.0, 50.0],
            use_vtg: vec![false, true],
            use_prev_action: vec![false],
            use_t_as: vec![false],
            n_stack_states: vec![0, 1],
            n_stack_actions: vec![0],
            n_action_bins: vec![3, 5, 7, 8],
            learning_rate: vec![3e-3, 1e-2, 3e-2],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.seeds.is_empty(), "sweep has no seeds");
        ensure!(self.parallelism >= 1, "parallelism must be at least 1");
        let seen: BTreeSet<u64> = self.seeds.iter().copied().collect();
        ensure!(seen.len() == self.seeds.len(), "duplicate sweep seeds");
        for (name, n) in [
            ("execution_mode", self.execution_mode.len()),
            ("latency_ms", self.latency_ms.len()),
            ("latency_schedule", self.latency_schedule.len()),
            ("use_vtg", self.use_vtg.len()),
            ("use_prev_action", self.use_prev_action.len()),
            ("use_t_as", self.use_t_as.len()),
            ("n_stack_states", self.n_stack_states.len()),
            ("n_stack_actions", self.n_stack_actions.len()),
            ("n_action_bins", self.n_action_bins.len()),
            ("learning_rate", self.learning_rate.len()),
        ] {
            ensure!(n > 0, "sweep axis {name} is empty");
        }
        Ok(())
    }

    /// Every cell of the grid, deduplicated and sorted by config hash.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &execution_mode in &self.execution_mode {
            for &latency_ms in &self.latency_ms {
                for &latency_schedule in &self.latency_schedule {
                    for &use_vtg in &self.use_vtg {
                        for &use_prev_action in &self.use_prev_action {
                            for &use_t_as in &self.use_t_as {
                                for &n_stack_states in &self.n_stack_states {
                                    for &n_stack_actions in &self.n_stack_actions {
                                        for &n_action_bins in &self.n_action_bins {
                                            for &learning_rate in &self.learning_rate {
                                                cells.push(Cell {
                                                    execution_mode,
                                                    latency_ms,
                                                    latency_schedule,
                                                    use_vtg,
                                                    use_prev_action,
                                                    use_t_as,
                                                    n_stack_states,
                                                    n_stack_actions,
                                                    n_action_bins,
                                                    learning_rate,
                                                });
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut keyed: Vec<(String, Cell)> = cells.into_iter().map(|c| (c.hash(), c)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        keyed.into_iter().map(|(_, c)| c).collect()
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub execution_mode: ExecutionMode,
    pub latency_ms: f64,
    pub latency_schedule: ScheduleKind,
    pub use_vtg: bool,
    pub use_prev_action: bool,
    pub use_t_as: bool,
    pub n_stack_states: usize,
    pub n_stack_actions: usize,
    pub n_action_bins: usize,
    pub learning_rate: f64,
}

impl Cell {
    /// Cell matching a single-run configuration.
    pub fn from_config(config: &Config) -> Cell {
        let (latency_ms, latency_schedule) = match &config.wrapper.latency_schedule {
            LatencySchedule::Fixed { latency } => (latency * 1000.0, ScheduleKind::Fixed),
            s @ LatencySchedule::PerEpisode { .. } => {
                (s.max_latency() * 1000.0, ScheduleKind::PerEpisode)
            }
        };
        let f = config.features;
        Cell {
            execution_mode: config.wrapper.execution_mode,
            latency_ms,
            latency_schedule,
            use_vtg: f.use_vtg,
            use_prev_action: f.use_prev_action,
            use_t_as: f.use_t_as,
            n_stack_states: f.n_stack_states,
            n_stack_actions: f.n_stack_actions,
            n_action_bins: config.bins(),
            learning_rate: config.train.learning_rate,
        }
    }

    fn canonical(&self) -> String {
        format!(
            "execution_mode={};latency_ms={};latency_schedule={};use_vtg={};use_prev_action={};\
             use_t_as={};n_stack_states={};n_stack_actions={};n_action_bins={};learning_rate={}",
            self.execution_mode.as_str(),
            self.latency_ms,
            match self.latency_schedule {
                ScheduleKind::Fixed => "fixed",
                ScheduleKind::PerEpisode => "per_episode",
            },
            self.use_vtg,
            self.use_prev_action,
            self.use_t_as,
            self.n_stack_states,
            self.n_stack_actions,
            self.n_action_bins,
            self.learning_rate,
        )
    }

    /// First 16 hex digits of the SHA-256 of the cell's canonical form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes())[..8])
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            use_vtg: self.use_vtg,
            use_prev_action: self.use_prev_action,
            use_t_as: self.use_t_as,
            n_stack_states: self.n_stack_states,
            n_stack_actions: self.n_stack_actions,
        }
    }

    pub fn wrapper(&self, base: &WrapperConfig, latency_set_ms: &[f64]) -> Result<WrapperConfig> {
        let latency_schedule = match self.latency_schedule {
            ScheduleKind::Fixed => LatencySchedule::Fixed {
                latency: self.latency_ms / 1000.0,
            },
            ScheduleKind::PerEpisode => {
                let set: Vec<f64> = latency_set_ms
                    .iter()
                    .filter(|&&ms| ms <= self.latency_ms)
                    .map(|ms| ms / 1000.0)
                    .collect();
                ensure!(
                    !set.is_empty(),
                    "no latency in the set is at most {} ms",
                    self.latency_ms
                );
                LatencySchedule::PerEpisode { set }
            }
        };
        let w = WrapperConfig {
            execution_mode: self.execution_mode,
            latency_schedule,
            ..base.clone()
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// One CSV row: a `(cell, seed)` trial and its final metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub config_hash: String,
    pub execution_mode: ExecutionMode,
    pub latency_ms: f64,
    pub latency_schedule: ScheduleKind,
    pub use_vtg: bool,
    pub use_prev_action: bool,
    pub use_t_as: bool,
    pub n_stack_states: usize,
    pub n_stack_actions: usize,
    pub n_action_bins: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub status: Status,
    pub final_return: Option<f64>,
    pub episode_sim_duration_s: Option<f64>,
    pub action_completion: Option<f64>,
    pub wall_clock_s: f64,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn cell(&self) -> Cell {
        Cell {
            execution_mode: self.execution_mode,
            latency_ms: self.latency_ms,
            latency_schedule: self.latency_schedule,
            use_vtg: self.use_vtg,
            use_prev_action: self.use_prev_action,
            use_t_as: self.use_t_as,
            n_stack_states: self.n_stack_states,
            n_stack_actions: self.n_stack_actions,
            n_action_bins: self.n_action_bins,
            learning_rate: self.learning_rate,
        }
    }

    pub fn from_outcome(cell: &Cell, seed: u64, outcome: &TrainOutcome, wall_clock_s: f64) -> Self {
        Self::new(cell, seed, Ok(outcome), wall_clock_s)
    }

    fn new(
        cell: &Cell,
        seed: u64,
        result: std::result::Result<&TrainOutcome, &Error>,
        wall_clock_s: f64,
    ) -> Self {
        let (status, fr, dur, comp, error) = match result {
            Ok(o) => (
                Status::Ok,
                Some(o.final_return()),
                Some(o.final_sim_duration()),
                Some(o.final_action_completion()),
                None,
            ),
            Err(e) => (Status::Failed, None, None, None, Some(e.to_string())),
        };
        SweepRecord {
            config_hash: cell.hash(),
            execution_mode: cell.execution_mode,
            latency_ms: cell.latency_ms,
            latency_schedule: cell.latency_schedule,
            use_vtg: cell.use_vtg,
            use_prev_action: cell.use_prev_action,
            use_t_as: cell.use_t_as,
            n_stack_states: cell.n_stack_states,
            n_stack_actions: cell.n_stack_actions,
            n_action_bins: cell.n_action_bins,
            learning_rate: cell.learning_rate,
            seed,
            status,
            final_return: fr,
            episode_sim_duration_s: dur,
            action_completion: comp,
            wall_clock_s: (wall_clock_s * 1000.0).round() / 1000.0,
            error,
        }
    }

    fn key(&self) -> (String, u64) {
        (self.config_hash.clone(), self.seed)
    }
}

/// Environment seed for a trial; kept apart from the agent's seed.
pub fn env_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Trains one `(cell, seed)` trial and checks its time accounting.
pub fn run_trial(config: &Config, cell: &Cell, seed: u64) -> Result<TrainOutcome> {
    let wrapper = cell.wrapper(&config.wrapper, &config.sweep.latency_set_ms)?;
    let mut env = ConcurrentEnv::new(config.task.build(), wrapper.clone(), env_seed(seed))?;
    let train = crate::agents::TrainConfig {
        learning_rate: cell.learning_rate,
        seed,
        ..config.train.clone()
    };
    let outcome = match config.agent {
        AgentKind::Dqn => dqn_train(&mut env, cell.features(), cell.n_action_bins, &train)?,
        AgentKind::CemQl => cem_ql_train(&mut env, cell.features(), &train, &config.cem)?,
    };
    check_time_accounting(&outcome, &wrapper)?;
    Ok(outcome)
}

/// Per-step simulated time is `H` under concurrent execution and
/// `H + extra + t_AS` under blocking execution.
fn check_time_accounting(outcome: &TrainOutcome, wrapper: &WrapperConfig) -> Result<()> {
    let h = wrapper.sampling_period;
    let values = wrapper.latency_schedule.values();
    for (i, ep) in outcome.episodes.iter().enumerate() {
        let ok = match wrapper.execution_mode {
            ExecutionMode::Concurrent => {
                (ep.sim_duration - ep.steps as f64 * h).abs() <= 1e-9 * ep.steps as f64
            }
            ExecutionMode::Blocking => values.iter().any(|lat| {
                let per = h + wrapper.action_execution_extra + lat;
                (ep.sim_duration - ep.steps as f64 * per).abs() <= 1e-9 * ep.steps.max(1) as f64
            }),
        };
        ensure!(
            ok,
            "episode {i}: simulated duration {} inconsistent with {} steps",
            ep.sim_duration,
            ep.steps
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Overrides `sweep.parallelism` when set.
    pub parallelism: Option<usize>,
    /// Stop after this many new trials, leaving the CSV partial (as an
    /// interrupted run would).
    pub stop_after: Option<usize>,
}

#[allow(clippy::derivable_impls)]
impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            parallelism: None,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub records: Vec<SweepRecord>,
    pub ran: usize,
    pub skipped: usize,
    pub failed: usize,
    pub complete: bool,
}

fn fingerprint_path(csv: &Path) -> PathBuf {
    csv.with_extension("fingerprint")
}

/// Runs every `(cell, seed)` trial of `config.sweep` into the CSV at `csv`.
///
/// Rows are appended and flushed as trials finish; trials already present
/// in an existing file are skipped. A failed trial still gets a row, with
/// `status = failed` and the error message. Once every trial is done, the file is
/// rewritten sorted by config hash, then seed.
pub fn run_sweep(config: &Config, csv: &Path, options: SweepOptions) -> Result<SweepSummary> {
    let spec = &config.sweep;
    spec.validate()?;
    let fingerprint = config.base_fingerprint()?;
    let fp_path = fingerprint_path(csv);

    let mut existing = Vec::new();
    if csv.exists() {
        if let Ok(stored) = std::fs::read_to_string(&fp_path) {
            ensure!(
                stored.trim() == fingerprint,
                "{} was produced with different base settings; refusing to resume",
                csv.display()
            );
        }
        existing = read_records(csv)?;
    } else {
        if let Some(dir) = csv.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(csv)?;
        w.write_record(CSV_HEADER)?;
        w.flush()?;
    }
    std::fs::write(&fp_path, format!("{fingerprint}\n"))?;

    let done: BTreeSet<(String, u64)> = existing.iter().map(SweepRecord::key).collect();
    let mut todo: Vec<(Cell, u64)> = Vec::new();
    for cell in spec.cells() {
        let h = cell.hash();
        for &seed in &spec.seeds {
            if !done.contains(&(h.clone(), seed)) {
                todo.push((cell, seed));
            }
        }
    }
    let skipped = existing.len();
    let total = todo.len();
    if let Some(n) = options.stop_after {
        todo.truncate(n);
    }

    let sink = Mutex::new(Sink::open(csv)?);
    let threads = options.parallelism.unwrap_or(spec.parallelism).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<SweepRecord>> = pool.install(|| {
        todo.par_iter()
            .map(|(cell, seed)| {
                let start = Instant::now();
                let result = run_trial(config, cell, *seed);
                let record =
                    SweepRecord::new(cell, *seed, result.as_ref(), start.elapsed().as_secs_f64());
                let mut sink = sink.lock().expect("sweep sink poisoned");
                if let Err(e) = &result {
                    log::warn!("trial {} seed {seed} failed: {e}", record.config_hash);
                } else {
                    log::info!(
                        "trial {} seed {seed}: final return {:.3}",
                        record.config_hash,
                        record.final_return.unwrap_or(f64::NAN)
                    );
                }
                sink.row(&record)?;
                Ok(record)
            })
            .collect()
    });
    let mut ran = 0;
    let mut failed = 0;
    for r in results {
        let r = r?;
        ran += 1;
        if r.status == Status::Failed {
            failed += 1;
        }
    }
    drop(sink);

    let complete = ran == total;
    let mut records = read_records(csv)?;
    if complete {
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        write_records(csv, &records)?;
    }
    Ok(SweepSummary {
        records,
        ran,
        skipped,
        failed,
        complete,
    })
}

struct Sink {
    rows: csv::Writer<File>,
}

impl Sink {
    fn open(csv_path: &Path) -> Result<Self> {
        let file = OpenOptions::new().append(true).open(csv_path)?;
        Ok(Sink {
            rows: csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(file),
        })
    }

    fn row(&mut self, record: &SweepRecord) -> Result<()> {
        self.rows.serialize(record)?;
        self.rows.flush()?;
        Ok(())
    }
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    ensure!(
        header == CSV_HEADER,
        "{} does not have the sweep header",
        path.display()
    );
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Writes `records` with the header, replacing `path` atomically.
pub fn write_records(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&tmp)?;
        w.write_record(CSV_HEADER)?;
        for r in records {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Renders records as CSV text, header included.
pub fn records_to_csv(records: &[SweepRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

impl std::fmt::Display for SweepRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} seed {} ({:?})",
            self.config_hash, self.seed, self.status
        )
    }
}
