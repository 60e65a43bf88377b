use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deopt_core::adapters::{probe, EmbeddedConfig, EngineConfig, EngineSpec};
use deopt_core::engine::{BugId, OptConfig};
use deopt_core::generator::{Arm, GenConfig};
use deopt_core::harness::{
    read_reports, read_stats_csv, reduce_testcase, run_campaign, write_report, BugKind, CampaignConfig, Mode,
    Reduction, StatsRow, StopCondition,
};
use deopt_core::oracle::OracleConfig;

#[derive(Parser)]
#[command(name = "deopt", version, about = "Find cross-rule optimization bugs in Datalog engines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fuzzing campaign.
    Run(RunArgs),
    /// Shrink the program of a logic-bug report.
    Reduce {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
    },
    /// Summarize one or more campaign directories as CSV, one row each.
    Stats {
        #[arg(long = "out", required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Run deliberately failing programs and print the engine's outcomes.
    Probe {
        #[arg(long, default_value = "embedded")]
        engine: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ire,
    Strip,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Random,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OptArg {
    Magic,
    Inline,
    Subsumption,
}

#[derive(Args)]
struct RunArgs {
    /// `embedded` or the path of an engine spec (TOML or JSON).
    #[arg(long, default_value = "embedded")]
    engine: String,
    /// Bugs to inject into the embedded engine.
    #[arg(long, value_delimiter = ',')]
    inject: Vec<BugId>,
    /// Embedded engine optimizations to enable.
    #[arg(long, value_delimiter = ',')]
    opt: Vec<OptArg>,
    /// Cycle the embedded engine through all eight optimization settings.
    #[arg(long, conflicts_with = "opt")]
    rotate_opt: bool,
    #[arg(long, default_value_t = 100)]
    max_rules: usize,
    /// Consecutive failed attempts before an iteration ends, or `inf`.
    #[arg(long, default_value = "inf", value_parser = parse_max_att)]
    max_att: MaxAtt,
    #[arg(long, default_value_t = 0.1)]
    p_empty: f64,
    #[arg(long, default_value_t = 0.02)]
    p_head: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, conflicts_with = "duration")]
    iterations: Option<u64>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value = "ire")]
    mode: ModeArg,
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep logic-bug reports unreduced.
    #[arg(long)]
    no_reduce: bool,
}

#[derive(Clone, Copy, Debug)]
struct MaxAtt(Option<usize>);

fn parse_max_att(s: &str) -> Result<MaxAtt, String> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(MaxAtt(None));
    }
    s.parse().map(|n| MaxAtt(Some(n))).map_err(|e| format!("expected a count or `inf`: {e}"))
}

fn engine_config(name: &str) -> Result<EngineConfig, String> {
    if name == "embedded" {
        return Ok(EngineConfig::Embedded(EmbeddedConfig::default()));
    }
    EngineSpec::load(Path::new(name)).map(EngineConfig::External).map_err(|e| e.to_string())
}

fn campaign_config(a: &RunArgs) -> Result<CampaignConfig, String> {
    let mut engine = engine_config(&a.engine)?;
    match &mut engine {
        EngineConfig::Embedded(c) => {
            c.opt = OptConfig {
                enable_magic: a.opt.contains(&OptArg::Magic),
                enable_inline: a.opt.contains(&OptArg::Inline),
                enable_subsumption: a.opt.contains(&OptArg::Subsumption),
                injected_bugs: a.inject.iter().copied().collect(),
            };
        }
        EngineConfig::External(_) if !a.inject.is_empty() || !a.opt.is_empty() || a.rotate_opt => {
            return Err("--inject, --opt and --rotate-opt apply to the embedded engine only".into());
        }
        EngineConfig::External(_) => {}
    }
    let stop = match (a.iterations, a.duration) {
        (_, Some(d)) if d.is_nan() || d < 0.0 => return Err(format!("--duration must be non-negative, got {d}")),
        (_, Some(d)) => StopCondition::Duration(d),
        (Some(n), None) => StopCondition::Iterations(n),
        (None, None) => StopCondition::Iterations(100),
    };
    let gen = GenConfig {
        max_rules: a.max_rules,
        max_att: a.max_att.0,
        p_empty: a.p_empty,
        p_head: a.p_head,
        max_iter: a.max_iter,
        seed: a.seed,
        ..GenConfig::default()
    };
    gen.validate().map_err(|e| e.to_string())?;
    let mut cfg = CampaignConfig::new(gen, engine, stop);
    cfg.mode = match a.mode {
        ModeArg::Ire => Mode::Ire,
        ModeArg::Strip => Mode::IrePlusStrip,
    };
    cfg.workers = a.workers;
    cfg.out_dir = a.out.clone();
    cfg.baseline = a.baseline.map(|_| Arm::Random);
    cfg.reduce = !a.no_reduce;
    cfg.rotate_opt_flags = a.rotate_opt;
    Ok(cfg)
}

fn run(a: &RunArgs) -> Result<ExitCode, String> {
    let cfg = campaign_config(a)?;
    let out = run_campaign(&cfg).map_err(|e| e.to_string())?;
    let s = &out.stats;
    println!(
        "iterations {}  valid {}  non-empty {}  mean rules {:.1}  elapsed {:.1}s",
        s.total(),
        s.valid(),
        s.non_empty(),
        s.mean_rules(),
        s.elapsed.as_secs_f64()
    );
    for kind in [BugKind::Logic, BugKind::SemanticErrorUnexpected, BugKind::Crash, BugKind::Hang] {
        println!("{:<26}{}", kind.name(), s.bugs_of(kind));
    }
    for r in &out.reports {
        println!("iteration {:06} seed {}: {} ({})", r.iteration, r.seed, r.kind.name(), r.detail);
    }
    Ok(if out.reports.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn reduce(dir: &Path, max_iter: usize) -> Result<ExitCode, String> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut report: deopt_core::harness::BugReport =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let engine = report.engine.build().map_err(|e| e.to_string())?;
    reduce_testcase(&mut report, engine.as_ref(), OracleConfig { max_iter }).map_err(|e| e.to_string())?;
    write_report(dir, &report).map_err(|e| e.to_string())?;
    match &report.reduction {
        Reduction::Reduced { program, rules_before, rules_after } => {
            println!("{rules_before} -> {rules_after} rules\n{program}");
        }
        _ => println!("the discrepancy did not reproduce"),
    }
    Ok(ExitCode::SUCCESS)
}

fn stats(dirs: &[PathBuf]) -> Result<ExitCode, String> {
    println!(
        "dir,arm,max_rules,p_empty,p_head,iterations,valid,non_empty,mean_rules,empty_output_fraction,\
         mean_cycle_count,reference_cost_fraction,logic,semantic_error_unexpected,crash,hang,reports"
    );
    for dir in dirs {
        let path = dir.join("campaign.json");
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let cfg: CampaignConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let rows = read_stats_csv(&dir.join("stats.csv")).map_err(|e| e.to_string())?;
        let reports = read_reports(dir).map_err(|e| e.to_string())?.len();
        let n = rows.len().max(1) as f64;
        let count = |f: &dyn Fn(&StatsRow) -> bool| rows.iter().filter(|r| f(r)).count();
        let (rc, oc) = rows.iter().fold((0u64, 0u64), |(r, o), row| (r + row.reference_cost, o + row.optimized_cost));
        let bugs = |k: BugKind| count(&|r: &StatsRow| r.bug == Some(k));
        println!(
            "{},{},{},{},{},{},{},{},{:.3},{:.4},{:.4},{:.4},{},{},{},{},{}",
            dir.display(),
            if cfg.baseline == Some(Arm::Random) { "random" } else { "incremental" },
            cfg.gen.max_rules,
            cfg.gen.p_empty,
            cfg.gen.p_head,
            rows.len(),
            count(&|r: &StatsRow| r.valid),
            count(&|r: &StatsRow| r.non_empty),
            rows.iter().map(|r| r.rules as f64).sum::<f64>() / n,
            count(&|r: &StatsRow| r.empty_output) as f64 / n,
            rows.iter().map(|r| r.cycle_count as f64).sum::<f64>() / n,
            if rc + oc == 0 { 0.0 } else { rc as f64 / (rc + oc) as f64 },
            bugs(BugKind::Logic),
            bugs(BugKind::SemanticErrorUnexpected),
            bugs(BugKind::Crash),
            bugs(BugKind::Hang),
            reports,
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn probe_engine(name: &str) -> Result<ExitCode, String> {
    let engine = engine_config(name)?.build().map_err(|e| e.to_string())?;
    for r in probe(engine.as_ref()).map_err(|e| e.to_string())? {
        println!("{}: {}", r.probe, serde_json::to_string(&r.outcome).expect("outcome serializes"));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Reduce { report, max_iter } => reduce(report, *max_iter),
        Command::Stats { dirs } => stats(dirs),
        Command::Probe { engine } => probe_engine(engine),
    };
    result.unwrap_or_else(|e| {
        eprintln!("deopt: {e}");
        ExitCode::from(1)
    })
}
