mod common;

use deopt_core::adapters::{render_program, validate_text, Dialect, EmbeddedEngine, Role};
use deopt_core::engine::{evaluate, evaluate_naive, OptConfig};
use deopt_core::generator::{gen_candidate_rule, gen_skeleton, run_iteration, GenConfig, Palette};
use deopt_core::ir::{check_safety, Program, RuleId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `n` candidates grown into one program, every one kept.
fn grow(dialect: Dialect, seed: u64, n: usize) -> (Program, Vec<deopt_core::ir::Rule>) {
    let cfg = common::dense_config();
    let palette = Palette::new(&cfg, dialect, &dialect.features());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (decls, facts) = gen_skeleton(&cfg, &palette, &mut rng);
    let mut p = Program { decls, facts, ..Program::default() };
    let mut generated = Vec::new();
    if p.decls.is_empty() {
        return (p, generated);
    }
    for id in 0..n as u32 {
        let c = gen_candidate_rule(&p, RuleId(id), &cfg, &palette, &mut rng);
        generated.push(c.rule.clone());
        p.decls.extend(c.fresh);
        p.subsumptions.extend(c.subsumption);
        p.rules.push(c.rule);
    }
    if let Some(r) = p.rules.last() {
        p.outputs.push(r.head.relation.clone());
    }
    (p, generated)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // 1000 cases x 10 candidates.
    #[test]
    fn generated_rules_are_safe(seed in any::<u64>()) {
        let (_, rules) = grow(Dialect::Embedded, seed, 10);
        for r in &rules {
            prop_assert!(check_safety(r).is_ok(), "{}", r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rendered_programs_validate(seed in any::<u64>()) {
        for dialect in [Dialect::SouffleLike, Dialect::CozoLike, Dialect::MuZLike, Dialect::Embedded] {
            let (p, _) = grow(dialect, seed, 8);
            if p.rules.is_empty() {
                continue;
            }
            let case = render_program(&p, dialect, Role::Optimized, false)
                .map_err(|e| TestCaseError::fail(format!("{dialect:?}: {e}\n{p}")))?;
            if let Err(e) = validate_text(dialect, &case.program) {
                prop_assert!(false, "{:?}: {}\n{}", dialect, e, case.program);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimized_evaluation_matches_naive(seed in any::<u64>()) {
        let (p, edb) = common::random_stratifiable(seed, 10);
        if let Ok(naive) = evaluate_naive(&p, &edb) {
            for opt in OptConfig::all_flag_combinations() {
                let got = evaluate(&p, &edb, &opt).map_err(|e| TestCaseError::fail(format!("{e}\n{p}")))?;
                for rel in got.relation_names() {
                    prop_assert_eq!(got.relation(rel), naive.relation(rel), "{} under {:?}\n{}", rel, opt, p);
                }
            }
        }
    }

    #[test]
    fn iterations_are_deterministic(seed in any::<u64>()) {
        let engine = EmbeddedEngine::with_opt(OptConfig::from_flag_bits((seed % 8) as usize));
        let cfg = GenConfig { max_rules: 12, seed, ..GenConfig::default() };
        let a = run_iteration(&cfg, &engine).unwrap();
        let b = run_iteration(&cfg, &engine).unwrap();
        prop_assert_eq!(&a.program, &b.program);
        prop_assert_eq!(serde_json::to_string(&a.trace).unwrap(), serde_json::to_string(&b.trace).unwrap());
    }
}
