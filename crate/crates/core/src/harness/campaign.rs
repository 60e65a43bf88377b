//! Campaigns: many iterations across worker threads, reports and stats on
//! disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{reduce_testcase, BugKind, BugReport, Reduction};
use crate::adapters::{render_program, AdapterError, EngineConfig, Role};
use crate::engine::OptConfig;
use crate::generator::{run_iteration, run_iteration_random, Arm, GenConfig, GenError, IterationResult, Termination};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reference and optimized programs use the same engine options.
    #[default]
    Ire,
    /// Reference programs additionally run with optimizations stripped.
    IrePlusStrip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    Iterations(u64),
    /// Wall-clock seconds; no new iteration starts after the budget.
    Duration(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub gen: GenConfig,
    pub engine: EngineConfig,
    #[serde(default)]
    pub mode: Mode,
    pub stop: StopCondition,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Run the random baseline arm instead of incremental generation.
    #[serde(default)]
    pub baseline: Option<Arm>,
    /// Shrink logic-bug reports before writing them.
    #[serde(default = "yes")]
    pub reduce: bool,
    /// Embedded engine only: iteration `i` uses enable-flag combination
    /// `i mod 8`, keeping the injected bugs.
    #[serde(default)]
    pub rotate_opt_flags: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl CampaignConfig {
    pub fn new(gen: GenConfig, engine: EngineConfig, stop: StopCondition) -> CampaignConfig {
        CampaignConfig {
            gen,
            engine,
            mode: Mode::Ire,
            stop,
            workers: 1,
            out_dir: None,
            baseline: None,
            reduce: true,
            rotate_opt_flags: false,
        }
    }

    /// Engine configuration for iteration `index`.
    pub fn engine_for(&self, index: u64) -> EngineConfig {
        let mut engine = self.engine.clone();
        match &mut engine {
            EngineConfig::Embedded(c) => {
                if self.rotate_opt_flags {
                    let bugs = std::mem::take(&mut c.opt.injected_bugs);
                    c.opt = OptConfig { injected_bugs: bugs, ..OptConfig::from_flag_bits((index % 8) as usize) };
                }
                c.strip_annotations |= self.mode == Mode::IrePlusStrip;
            }
            EngineConfig::External(s) => s.strip_annotations |= self.mode == Mode::IrePlusStrip,
        }
        engine
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad report {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("bad stats table {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("invalid campaign configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io { path: path.to_path_buf(), source }
}

/// Per-iteration seed; independent of worker count and scheduling.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub index: u64,
    pub seed: u64,
    pub arm: Arm,
    pub rules: usize,
    pub termination: Termination,
    pub empty_output: bool,
    pub valid: bool,
    pub non_empty: bool,
    pub retained_empty: usize,
    pub discarded: usize,
    pub attempts: Vec<usize>,
    pub reference_runs: usize,
    pub optimized_runs: usize,
    pub reference_cost: u64,
    pub optimized_cost: u64,
    pub cycle_count: usize,
    pub mean_cycle_size: f64,
    pub bug: Option<BugKind>,
    #[serde(skip)]
    pub reference_time: Duration,
    #[serde(skip)]
    pub optimized_time: Duration,
}

impl IterationStats {
    fn of(index: u64, r: &IterationResult) -> IterationStats {
        let t = &r.trace;
        IterationStats {
            index,
            seed: t.seed,
            arm: t.arm,
            rules: t.rules,
            termination: t.termination,
            empty_output: t.empty_output,
            valid: t.valid,
            non_empty: t.non_empty(),
            retained_empty: t
                .retained()
                .filter(|e| matches!(e.outcome, crate::generator::RuleOutcome::Retained { empty: true }))
                .count(),
            discarded: t.events.len() - t.retained().count(),
            attempts: t.attempts.clone(),
            reference_runs: t.reference_runs,
            optimized_runs: t.optimized_runs,
            reference_cost: t.reference_cost,
            optimized_cost: t.optimized_cost,
            cycle_count: t.cycle_count,
            mean_cycle_size: t.mean_cycle_size,
            bug: r.report.as_ref().map(|b| b.kind),
            reference_time: t.timing.reference,
            optimized_time: t.timing.optimized,
        }
    }

    /// Share of engine cost spent on reference programs.
    pub fn reference_fraction(&self) -> f64 {
        let total = self.reference_cost + self.optimized_cost;
        if total == 0 {
            0.0
        } else {
            self.reference_cost as f64 / total as f64
        }
    }

    pub fn optimized_fraction(&self) -> f64 {
        let total = self.reference_cost + self.optimized_cost;
        if total == 0 {
            0.0
        } else {
            self.optimized_cost as f64 / total as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    /// Ordered by iteration index.
    pub iterations: Vec<IterationStats>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CampaignStats {
    pub fn total(&self) -> usize {
        self.iterations.len()
    }

    pub fn valid(&self) -> usize {
        self.iterations.iter().filter(|i| i.valid).count()
    }

    pub fn non_empty(&self) -> usize {
        self.iterations.iter().filter(|i| i.non_empty).count()
    }

    pub fn bugs(&self) -> usize {
        self.iterations.iter().filter(|i| i.bug.is_some()).count()
    }

    pub fn bugs_of(&self, kind: BugKind) -> usize {
        self.iterations.iter().filter(|i| i.bug == Some(kind)).count()
    }

    fn mean(&self, f: impl Fn(&IterationStats) -> f64) -> f64 {
        if self.iterations.is_empty() {
            return 0.0;
        }
        self.iterations.iter().map(f).sum::<f64>() / self.iterations.len() as f64
    }

    pub fn mean_rules(&self) -> f64 {
        self.mean(|i| i.rules as f64)
    }

    pub fn empty_output_fraction(&self) -> f64 {
        self.mean(|i| if i.empty_output { 1.0 } else { 0.0 })
    }

    pub fn mean_cycle_count(&self) -> f64 {
        self.mean(|i| i.cycle_count as f64)
    }

    pub fn mean_cycle_size(&self) -> f64 {
        let with: Vec<f64> = self.iterations.iter().filter(|i| i.cycle_count > 0).map(|i| i.mean_cycle_size).collect();
        if with.is_empty() {
            0.0
        } else {
            with.iter().sum::<f64>() / with.len() as f64
        }
    }

    pub fn reference_fraction(&self) -> f64 {
        let r: u64 = self.iterations.iter().map(|i| i.reference_cost).sum();
        let o: u64 = self.iterations.iter().map(|i| i.optimized_cost).sum();
        if r + o == 0 {
            0.0
        } else {
            r as f64 / (r + o) as f64
        }
    }

    /// How many retained rules needed `n` failed attempts first.
    pub fn attempts_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for a in self.iterations.iter().flat_map(|i| &i.attempts) {
            *h.entry(*a).or_insert(0) += 1;
        }
        h
    }
}

/// One line of `stats.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub index: u64,
    pub seed: u64,
    pub arm: Arm,
    pub rules: usize,
    pub termination: Termination,
    pub empty_output: bool,
    pub valid: bool,
    pub non_empty: bool,
    pub retained_empty: usize,
    pub discarded: usize,
    pub reference_runs: usize,
    pub optimized_runs: usize,
    pub reference_cost: u64,
    pub optimized_cost: u64,
    pub reference_fraction: f64,
    pub optimized_fraction: f64,
    pub cycle_count: usize,
    pub mean_cycle_size: f64,
    pub bug: Option<BugKind>,
}

impl From<&IterationStats> for StatsRow {
    fn from(i: &IterationStats) -> StatsRow {
        StatsRow {
            index: i.index,
            seed: i.seed,
            arm: i.arm,
            rules: i.rules,
            termination: i.termination,
            empty_output: i.empty_output,
            valid: i.valid,
            non_empty: i.non_empty,
            retained_empty: i.retained_empty,
            discarded: i.discarded,
            reference_runs: i.reference_runs,
            optimized_runs: i.optimized_runs,
            reference_cost: i.reference_cost,
            optimized_cost: i.optimized_cost,
            reference_fraction: i.reference_fraction(),
            optimized_fraction: i.optimized_fraction(),
            cycle_count: i.cycle_count,
            mean_cycle_size: i.mean_cycle_size,
            bug: i.bug,
        }
    }
}

/// Deterministic per-iteration table.
pub fn stats_csv(stats: &CampaignStats) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for i in &stats.iterations {
        w.serialize(StatsRow::from(i)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<StatsRow>, CampaignError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CampaignError::Csv { path: path.to_path_buf(), source: e })?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| CampaignError::Csv { path: path.to_path_buf(), source: e })
}

/// Wall-clock phase times; differs between runs.
pub fn timing_csv(stats: &CampaignStats) -> String {
    let mut out = String::from("index,reference_ms,optimized_ms,reference_time_fraction\n");
    for i in &stats.iterations {
        let r = i.reference_time.as_secs_f64() * 1e3;
        let o = i.optimized_time.as_secs_f64() * 1e3;
        let frac = if r + o > 0.0 { r / (r + o) } else { 0.0 };
        let _ = writeln!(out, "{},{r:.3},{o:.3},{frac:.6}", i.index);
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct CampaignOutcome {
    pub stats: CampaignStats,
    pub reports: Vec<BugReport>,
}

/// `report.json` plus the program in neutral syntax and, when the engine's
/// dialect can express it, rendered for that engine.
pub fn write_report(dir: &Path, report: &BugReport) -> Result<(), CampaignError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    let path = dir.join("report.json");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    let path = dir.join("program.dl");
    fs::write(&path, report.program.to_string()).map_err(io_err(&path))?;
    if let Reduction::Reduced { program, .. } = &report.reduction {
        let path = dir.join("reduced.dl");
        fs::write(&path, program.to_string()).map_err(io_err(&path))?;
    }
    let dialect = match &report.engine {
        EngineConfig::Embedded(_) => crate::adapters::Dialect::Embedded,
        EngineConfig::External(s) => s.dialect,
    };
    if let Ok(case) = render_program(&report.program, dialect, Role::Optimized, false) {
        let rendered = dir.join("rendered");
        case.write_to(&rendered).map_err(io_err(&rendered))?;
    }
    Ok(())
}

/// Reports under `dir/reports`, in directory-name order.
pub fn read_reports(dir: &Path) -> Result<Vec<(PathBuf, BugReport)>, CampaignError> {
    let root = dir.join("reports");
    let mut out = Vec::new();
    let Ok(entries) = fs::read_dir(&root) else {
        return Ok(out);
    };
    let mut dirs: Vec<PathBuf> = entries.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    for d in dirs {
        let path = d.join("report.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let report =
            serde_json::from_str(&text).map_err(|source| CampaignError::Json { path: path.clone(), source })?;
        out.push((d, report));
    }
    Ok(out)
}

fn run_one(cfg: &CampaignConfig, index: u64) -> Result<IterationResult, CampaignError> {
    let engine_cfg = cfg.engine_for(index);
    let engine = engine_cfg.build()?;
    let gen = GenConfig { seed: derive_seed(cfg.gen.seed, index), ..cfg.gen.clone() };
    let mut result = match cfg.baseline {
        Some(Arm::Random) => run_iteration_random(&gen, engine.as_ref())?,
        _ => run_iteration(&gen, engine.as_ref())?,
    };
    if let Some(report) = result.report.as_mut() {
        report.iteration = index;
        if cfg.reduce && report.kind == BugKind::Logic {
            // A reducer error leaves the report unreduced.
            let _ = reduce_testcase(report, engine.as_ref(), gen.oracle());
        }
    }
    Ok(result)
}

/// Run iterations on `cfg.workers` threads until the stop condition.
/// Reports are written as they arrive; stats files once at the end.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutcome, CampaignError> {
    cfg.gen.validate()?;
    if cfg.workers == 0 {
        return Err(CampaignError::Config("at least one worker is needed".into()));
    }
    cfg.engine.build()?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let started = Instant::now();
    let next = AtomicU64::new(0);
    let (tx, rx) = mpsc::channel::<(u64, Result<IterationResult, CampaignError>)>();

    let mut results: BTreeMap<u64, (IterationStats, Option<BugReport>)> = BTreeMap::new();
    let mut failure = None;
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                let go = match cfg.stop {
                    StopCondition::Iterations(n) => index < n,
                    StopCondition::Duration(secs) => started.elapsed().as_secs_f64() < secs,
                };
                if !go {
                    break;
                }
                let r = run_one(cfg, index);
                let stop = r.is_err();
                if tx.send((index, r)).is_err() || stop {
                    break;
                }
            });
        }
        drop(tx);
        for (index, r) in rx {
            match r {
                Ok(result) => {
                    if let (Some(dir), Some(report)) = (&cfg.out_dir, &result.report) {
                        let name = format!("{index:06}-{}", report.kind.name());
                        if let Err(e) = write_report(&dir.join("reports").join(name), report) {
                            failure.get_or_insert(e);
                        }
                    }
                    results.insert(index, (IterationStats::of(index, &result), result.report.map(|b| *b)));
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    next.store(u64::MAX / 2, Ordering::SeqCst);
                }
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let stats = CampaignStats {
        iterations: results.values().map(|(s, _)| s.clone()).collect(),
        elapsed: started.elapsed(),
    };
    let reports: Vec<BugReport> = results.into_values().filter_map(|(_, r)| r).collect();
    if let Some(dir) = &cfg.out_dir {
        for (name, text) in [("stats.csv", stats_csv(&stats)), ("timing.csv", timing_csv(&stats))] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        let path = dir.join("campaign.json");
        let recorded = CampaignConfig { out_dir: None, ..cfg.clone() };
        let json = serde_json::to_string_pretty(&recorded).expect("config serializes");
        fs::write(&path, json + "\n").map_err(io_err(&path))?;
    }
    Ok(CampaignOutcome { stats, reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_iteration_and_are_stable() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        // Neighbouring campaign seeds do not share iterations.
        let a: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(0, i)).collect();
        assert!((0..1000).all(|i| !a.contains(&derive_seed(1, i))));
    }

    #[test]
    fn zero_iterations_give_empty_stats() {
        let cfg = CampaignConfig::new(
            GenConfig::default(),
            EngineConfig::Embedded(Default::default()),
            StopCondition::Iterations(0),
        );
        let out = run_campaign(&cfg).unwrap();
        assert_eq!(out.stats.total(), 0);
        assert!(out.reports.is_empty());
    }
}
