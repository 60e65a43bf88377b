use deopt_core::adapters::{EmbeddedConfig, EngineConfig, Role};
use deopt_core::engine::{BugId, OptConfig};
use deopt_core::generator::GenConfig;
use deopt_core::harness::{
    read_reports, read_stats_csv, reproduces, run_campaign, BugKind, CampaignConfig, CampaignOutcome, Reduction,
    StatsRow, StopCondition,
};
use deopt_core::oracle::OracleConfig;

fn buggy_campaign(out: Option<std::path::PathBuf>) -> CampaignOutcome {
    let opt = OptConfig::default().with_bug(BugId::SeminaiveDelta).with_bug(BugId::InlineDropLiteral);
    let gen = GenConfig { max_rules: 20, seed: 11, ..GenConfig::default() };
    let mut cfg = CampaignConfig::new(
        gen,
        EngineConfig::Embedded(EmbeddedConfig { opt, ..EmbeddedConfig::default() }),
        StopCondition::Iterations(30),
    );
    cfg.rotate_opt_flags = true;
    cfg.out_dir = out;
    run_campaign(&cfg).unwrap()
}

#[test]
fn reports_replay_and_reductions_still_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = buggy_campaign(Some(dir.path().to_path_buf()));
    let reports = read_reports(dir.path()).unwrap();
    assert!(!reports.is_empty());
    assert_eq!(reports.len(), out.reports.len());
    let mut reduced = 0;
    for (path, report) in reports {
        let engine = report.engine.build().unwrap();
        let run = engine.execute(&report.program, Role::Optimized).unwrap();
        let facts = run.outcome.facts().map(|f| f.relation(&report.output_rel).cloned().unwrap_or_default());
        assert_eq!(facts, report.optimized, "{}", path.display());
        if let Reduction::Reduced { program, rules_after, rules_before } = &report.reduction {
            reduced += 1;
            assert!(rules_after <= rules_before);
            let d = reproduces(program, engine.as_ref(), OracleConfig::default()).unwrap();
            assert_eq!(d.map(|d| d.kind), Some(BugKind::Logic), "{}", path.display());
            let text = std::fs::read_to_string(path.join("reduced.dl")).unwrap();
            assert_eq!(text, program.to_string());
        }
    }
    assert!(reduced > 0);
}

#[test]
fn stats_table_round_trips_and_fractions_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = buggy_campaign(Some(dir.path().to_path_buf()));
    let rows = read_stats_csv(&dir.path().join("stats.csv")).unwrap();
    let expected: Vec<StatsRow> = out.stats.iterations.iter().map(StatsRow::from).collect();
    assert_eq!(rows, expected);
    for i in &out.stats.iterations {
        if i.reference_cost + i.optimized_cost > 0 {
            assert!((i.reference_fraction() + i.optimized_fraction() - 1.0).abs() < 1e-12);
        }
    }
}
