use std::collections::BTreeSet;

use super::*;
use crate::adapters::{Dialect, EmbeddedEngine, EngineConfig};
use crate::engine::{BugId, OptConfig};
use crate::fixtures;
use crate::harness::BugKind;
use crate::ir::{parse_program, parse_rule, FactStore, Value};

fn clean() -> EmbeddedEngine {
    EmbeddedEngine::with_opt(OptConfig::default())
}

fn small(seed: u64) -> GenConfig {
    GenConfig { max_rules: 20, seed, ..GenConfig::default() }
}

#[test]
fn defaults() {
    let c = GenConfig::default();
    assert_eq!((c.max_rules, c.max_att, c.p_empty, c.p_head, c.max_iter), (100, None, 0.1, 0.02, 100));
    assert!(c.validate().is_ok());
    assert!(GenConfig { p_head: 1.5, ..c.clone() }.validate().is_err());
    assert!(GenConfig { max_att: Some(0), ..c }.validate().is_err());
}

#[test]
fn skeleton_respects_ranges_and_seed() {
    let cfg = GenConfig {
        skeleton: SkeletonConfig { relations: (2, 4), arity: (1, 2), facts: (0, 3) },
        ..GenConfig::default()
    };
    let palette = Palette::new(&cfg, Dialect::Embedded, &Dialect::Embedded.features());
    for seed in 0..50 {
        let mut a = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ChaCha8Rng::seed_from_u64(seed);
        let (decls, facts) = gen_skeleton(&cfg, &palette, &mut a);
        assert_eq!((decls.clone(), facts.clone()), gen_skeleton(&cfg, &palette, &mut b));
        assert!((2..=4).contains(&decls.len()));
        for d in &decls {
            assert!((1..=2).contains(&d.arity()));
            assert!(facts.count(&d.name) <= 3);
            for t in facts.tuples(&d.name) {
                assert_eq!(t.iter().map(Value::kind).collect::<Vec<_>>(), d.kinds());
            }
        }
    }
}

#[test]
fn skeleton_may_be_empty() {
    let cfg = GenConfig { skeleton: SkeletonConfig { facts: (0, 0), ..Default::default() }, ..GenConfig::default() };
    let palette = Palette::new(&cfg, Dialect::Embedded, &Dialect::Embedded.features());
    let (decls, facts) = gen_skeleton(&cfg, &palette, &mut ChaCha8Rng::seed_from_u64(3));
    assert!(decls.iter().all(|d| facts.count(&d.name) == 0));
}

#[test]
fn dialect_limits_the_palette() {
    let cfg = GenConfig::default();
    let muz = Palette::new(&cfg, Dialect::MuZLike, &Dialect::MuZLike.features());
    assert_eq!(muz.kinds, vec![ValueKind::Number, ValueKind::Number]);
    assert!(!muz.arithmetic && muz.nonnegative && !muz.stratified);
    let cozo = Palette::new(&cfg, Dialect::CozoLike, &Dialect::CozoLike.features());
    assert!(!cozo.kinds.contains(&ValueKind::Unsigned) && !cozo.subsumption);
}

fn script_skeleton() -> Program {
    parse_program(
        ".decl s(x:number) .decl b(x:number, y:number) .decl t(x:number) .decl q(x:number)
         s(0). s(1). b(5,1). b(6,2).",
    )
    .unwrap()
}

#[test]
fn fresh_rule_over_a_wildcard() {
    let rule = parse_rule("t(X):-s(X),b(_,X).", 0).unwrap();
    let r = run_script(&script_skeleton(), &[rule], &GenConfig::default(), &clean()).unwrap();
    assert_eq!(r.trace.rules, 1);
    assert_eq!(r.stable.rule_facts(RuleId(0)).unwrap(), &[vec![Value::Number(1)]].into_iter().collect());
    assert_eq!((r.trace.reference_runs, r.trace.optimized_runs), (1, 1));
    assert!(!r.trace.empty_output);
}

#[test]
fn modulo_by_zero_is_discarded() {
    let rule = parse_rule("q(X%0):-s(X).", 0).unwrap();
    let cfg = GenConfig::default();
    let engine = clean();
    let mut state = TestIterationState::with_skeleton(&cfg, &engine, &script_skeleton());
    let out = state.force_rule(&rule, &engine, &cfg).unwrap();
    assert!(matches!(out, ExtendOutcome::DiscardedError(ref k) if k == "mod_zero"), "{out:?}");
    assert!(state.optimized_program.rules.is_empty());
    assert_eq!(state.attempts_since_success, 1);
    assert_eq!(state.trace.events[0].outcome, RuleOutcome::DiscardedError { kind: "mod_zero".into() });
}

#[test]
fn sibling_delta_script_reports_at_the_fourth_rule() {
    let reg = fixtures::sibling_delta();
    let skeleton = Program { rules: Vec::new(), outputs: Vec::new(), ..reg.program.clone() };
    let engine = EmbeddedEngine::with_opt(reg.opt.clone());
    let r = run_script(&skeleton, &reg.program.rules, &GenConfig::default(), &engine).unwrap();
    let report = r.report.expect("discrepancy");
    assert_eq!(report.kind, BugKind::Logic);
    assert_eq!(report.rule_index, RuleId(3));
    assert_eq!(report.oracle, reg.expected.iter().cloned().collect());
    assert_eq!(report.optimized, Some(reg.faulty.iter().cloned().collect()));
    assert_eq!(r.trace.termination, Termination::BugFound);

    let clean_run = run_script(&skeleton, &reg.program.rules, &GenConfig::default(), &clean()).unwrap();
    assert!(clean_run.report.is_none());
    assert_eq!(clean_run.trace.rules, 4);
}

#[test]
fn single_rule_iteration_runs_each_side_once() {
    let mut cfg = small(11);
    cfg.max_rules = 1;
    cfg.p_empty = 1.0;
    cfg.p_head = 0.0;
    cfg.features.arithmetic = 0.0;
    let r = run_iteration(&cfg, &clean()).unwrap();
    assert_eq!(r.trace.rules, 1);
    assert_eq!((r.trace.reference_runs, r.trace.optimized_runs), (1, 1));
}

#[test]
fn clean_engine_never_reports() {
    for seed in 0..20 {
        let r = run_iteration(&small(seed), &clean()).unwrap();
        assert!(r.report.is_none(), "seed {seed}: {:?}", r.report);
        assert!(r.trace.rules <= 20);
        assert_eq!(r.program.rules.len(), r.trace.rules);
    }
}

#[test]
fn p_empty_one_never_discards_empty() {
    for seed in 0..10 {
        let cfg = GenConfig { p_empty: 1.0, ..small(seed) };
        let r = run_iteration(&cfg, &clean()).unwrap();
        assert!(r.trace.events.iter().all(|e| e.outcome != RuleOutcome::DiscardedEmpty));
    }
}

#[test]
fn p_empty_zero_keeps_only_non_empty_rules() {
    for seed in 0..10 {
        let cfg = GenConfig { p_empty: 0.0, ..small(seed) };
        let r = run_iteration(&cfg, &clean()).unwrap();
        for ev in r.trace.retained() {
            assert_eq!(ev.outcome, RuleOutcome::Retained { empty: false });
            assert!(!r.stable.rule_facts(ev.id).unwrap().is_empty());
        }
    }
}

#[test]
fn exhausted_after_max_att_failures() {
    let cfg = GenConfig {
        max_att: Some(10),
        p_empty: 0.0,
        skeleton: SkeletonConfig { facts: (0, 0), ..Default::default() },
        ..small(5)
    };
    let r = run_iteration(&cfg, &clean()).unwrap();
    assert_eq!(r.trace.termination, Termination::Exhausted);
    assert_eq!(r.trace.rules, 0);
    assert_eq!(r.trace.events.len(), 10);
    // Brute force: with every input empty no rule can derive anything.
    assert!(r.program.decls.iter().all(|d| r.program.facts.count(&d.name) == 0));
}

#[test]
fn p_head_zero_stays_acyclic() {
    for seed in 0..10 {
        let cfg = GenConfig { p_head: 0.0, ..small(seed) };
        let r = run_iteration(&cfg, &clean()).unwrap();
        assert!(PrecedenceGraph::build(&r.program).is_acyclic());
        assert_eq!(r.trace.cycle_count, 0);
    }
}

#[test]
fn iterations_are_deterministic() {
    for seed in [1, 2, 3] {
        let cfg = GenConfig { p_head: 0.2, ..small(seed) };
        let mut a = run_iteration(&cfg, &clean()).unwrap();
        let mut b = run_iteration(&cfg, &clean()).unwrap();
        a.trace.timing = PhaseTiming::default();
        b.trace.timing = PhaseTiming::default();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.program, b.program);
        assert_eq!(serde_json::to_string(&a.trace).unwrap(), serde_json::to_string(&b.trace).unwrap());
    }
}

/// Optimized runs of programs with more than one rule fail with a
/// catalogued error; references and single-rule programs are fine.
struct FailsOnSecondRule(EmbeddedEngine);

impl EngineAdapter for FailsOnSecondRule {
    fn dialect(&self) -> Dialect {
        Dialect::Embedded
    }

    fn config(&self) -> EngineConfig {
        self.0.config()
    }

    fn execute(&self, program: &Program, role: Role) -> Result<EngineRun, AdapterError> {
        if role == Role::Optimized && program.rules.len() >= 2 {
            return Ok(EngineRun {
                outcome: RunOutcome::SemanticError {
                    message: "division by zero".into(),
                    matched: Some("div_zero".into()),
                },
                stdout: String::new(),
                stderr: String::new(),
                cost: 1,
                workdir: None,
            });
        }
        self.0.execute(program, role)
    }
}

#[test]
fn optimized_expected_error_rolls_back() {
    let engine = FailsOnSecondRule(clean());
    let cfg = GenConfig { max_att: Some(5), ..small(4) };
    let r = run_iteration(&cfg, &engine).unwrap();
    assert_eq!(r.trace.rules, 1);
    assert_eq!(r.trace.termination, Termination::Exhausted);
    assert!(r.report.is_none());
    assert!(r
        .trace
        .events
        .iter()
        .any(|e| e.outcome == RuleOutcome::DiscardedError { kind: "optimized:div_zero".into() }));
    let heads: BTreeSet<&str> = r.program.rules.iter().map(|r| r.head.relation.as_str()).collect();
    for d in &r.program.decls {
        assert!(d.name.starts_with('e') || heads.contains(d.name.as_str()), "stale declaration {}", d.name);
    }
}

#[test]
fn random_baseline_counts_invalid_programs() {
    let engine = FailsOnSecondRule(clean());
    let cfg = GenConfig { max_rules: 3, ..small(8) };
    let r = run_iteration_random(&cfg, &engine).unwrap();
    assert_eq!(r.trace.arm, Arm::Random);
    assert_eq!(r.trace.rules, 3);
    assert!(!r.trace.valid && !r.trace.non_empty());
}

#[test]
fn random_baseline_with_all_rules_non_empty_counts_everywhere() {
    let found = (0..200).find_map(|seed| {
        let cfg =
            GenConfig { max_rules: 3, features: FeatureProbs { arithmetic: 0.0, ..Default::default() }, ..small(seed) };
        let r = run_iteration_random(&cfg, &clean()).unwrap();
        let all_non_empty = r.trace.events.iter().all(|e| e.outcome == RuleOutcome::Retained { empty: false });
        (all_non_empty && r.trace.rules == 3).then_some(r)
    });
    let r = found.expect("some seed gives three non-empty rules");
    assert!(r.trace.valid && r.trace.non_empty());
    assert!(r.report.is_none());
}

#[test]
fn empty_facts_relation_state() {
    let cfg = GenConfig::default();
    let engine = clean();
    let state = TestIterationState::with_skeleton(&cfg, &engine, &script_skeleton());
    assert_eq!(state.stable_facts.edb, script_skeleton().facts);
    assert_ne!(state.stable_facts.edb, FactStore::new());
    assert_eq!(state.output_rel(), None);
}

#[test]
fn injected_bug_is_found_by_some_iteration() {
    let engine = EmbeddedEngine::with_opt(OptConfig::default().with_bug(BugId::SeminaiveDelta));
    let found = (0..50).any(|seed| {
        let cfg = GenConfig { max_rules: 30, p_head: 0.1, ..GenConfig { seed, ..GenConfig::default() } };
        run_iteration(&cfg, &engine).unwrap().report.is_some_and(|r| r.kind == BugKind::Logic)
    });
    assert!(found);
}
