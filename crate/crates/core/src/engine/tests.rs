use std::collections::BTreeSet;

use super::*;
use crate::fixtures;
use crate::ir::{parse_program, FactStore, Literal, Tuple, Value};

fn run(src: &str, opt: &OptConfig) -> FactStore {
    evaluate(&parse_program(src).unwrap(), &FactStore::new(), opt).unwrap()
}

fn set(ts: Vec<Tuple>) -> BTreeSet<Tuple> {
    ts.into_iter().collect()
}

fn nums2(rows: &[(i64, i64)]) -> BTreeSet<Tuple> {
    rows.iter().map(|(a, b)| vec![Value::Number(*a), Value::Number(*b)]).collect()
}

#[test]
fn transitive_closure() {
    let src = ".decl edge(x:number,y:number)
        .decl path(x:number,y:number)
        edge(1,2). edge(2,3).
        path(X,Y):-edge(X,Y).
        path(X,Z):-path(X,Y),edge(Y,Z).
        .output path";
    let expected = nums2(&[(1, 2), (2, 3), (1, 3)]);
    let naive = evaluate_naive(&parse_program(src).unwrap(), &FactStore::new()).unwrap();
    assert_eq!(naive.relation("path"), Some(&expected));
    for opt in OptConfig::all_flag_combinations() {
        assert_eq!(run(src, &opt).relation("path"), Some(&expected));
    }
}

#[test]
fn negation_against_a_lower_stratum() {
    let src = ".decl a(x:number) .decl b(x:number) .decl c(x:number)
        a(1). a(2). a(3). b(1). b(2).
        c(X):-a(X),!b(X).
        .output c";
    let out = evaluate_naive(&parse_program(src).unwrap(), &FactStore::new()).unwrap();
    assert_eq!(out.relation("c"), Some(&set(vec![vec![Value::Number(3)]])));
}

#[test]
fn negation_in_a_cycle_is_rejected() {
    let src = ".decl c(x:symbol) .decl d(x:symbol)
        d(a):-c(a).
        c(a):-c(a),!d(a).";
    let p = parse_program(src).unwrap();
    assert!(matches!(evaluate_naive(&p, &FactStore::new()), Err(EngineError::Unstratifiable(_))));
    assert!(matches!(evaluate(&p, &FactStore::new(), &OptConfig::default()), Err(EngineError::Unstratifiable(_))));
}

#[test]
fn edb_passed_separately_is_joined_with_program_facts() {
    let p = parse_program(".decl a(x:number) .decl b(x:number) a(1). b(X):-a(X). .output b").unwrap();
    let mut edb = FactStore::new();
    edb.insert("a", vec![Value::Number(2)]);
    let out = evaluate(&p, &edb, &OptConfig::default()).unwrap();
    assert_eq!(out.count("b"), 2);
}

#[test]
fn every_regression_is_caught_and_correct_without_the_fault() {
    for reg in fixtures::all_regressions() {
        let out = reg.program.outputs[0].clone();
        let naive = evaluate_naive(&reg.program, &FactStore::new()).unwrap();
        assert_eq!(naive.relation(&out), Some(&set(reg.expected.clone())), "{}", reg.name);
        let buggy = evaluate(&reg.program, &FactStore::new(), &reg.opt).unwrap();
        assert_eq!(buggy.relation(&out), Some(&set(reg.faulty.clone())), "{}", reg.name);
        let mut clean = reg.opt.clone();
        clean.injected_bugs.clear();
        let fixed = evaluate(&reg.program, &FactStore::new(), &clean).unwrap();
        assert_eq!(fixed.relation(&out), Some(&set(reg.expected.clone())), "{}", reg.name);
    }
}

#[test]
fn single_rule_programs_are_immune_to_every_fault() {
    let all_bugs = OptConfig {
        enable_magic: true,
        enable_inline: true,
        enable_subsumption: true,
        injected_bugs: BugId::ALL.into_iter().collect(),
    };
    for reg in fixtures::all_regressions() {
        for rule in &reg.program.rules {
            let mut single = reg.program.clone();
            single.rules = vec![rule.clone()];
            single.outputs = vec![rule.head.relation.clone()];
            single.subsumptions.retain(|s| s.relation == rule.head.relation);
            let naive = evaluate_naive(&single, &FactStore::new()).unwrap();
            let buggy = evaluate(&single, &FactStore::new(), &all_bugs).unwrap();
            assert_eq!(naive.relation(&rule.head.relation), buggy.relation(&rule.head.relation), "{}", rule);
        }
    }
}

#[test]
fn magic_leaves_recursive_relations_alone() {
    let p = parse_program(
        ".decl e(x:number,y:number) .decl p(x:number,y:number) .decl o(x:number)
         e(1,2).
         p(X,Y):-e(X,Y).
         p(X,Z):-p(X,Y),e(Y,Z).
         o(Y):-e(X,_),p(X,Y),Y>1.
         .output o",
    )
    .unwrap();
    assert_eq!(magic_rewrite(&p), p);
}

#[test]
fn magic_leaves_programs_without_intermediate_relations_alone() {
    let p = parse_program(".decl i(x:number) .decl o(x:number) i(1). o(X):-i(X),X>0. .output o").unwrap();
    assert_eq!(magic_rewrite(&p), p);
}

#[test]
fn magic_adds_demand_relation_for_bound_arguments() {
    let p = parse_program(
        ".decl s(x:number) .decl e(x:number,y:number) .decl q(x:number,y:number) .decl o(x:number)
         s(1). e(1,2). e(3,4).
         q(X,Y):-e(X,Y).
         o(Y):-s(X),q(X,Y),Y<9.
         .output o",
    )
    .unwrap();
    let out = magic_rewrite(&p);
    let q_rule = out.rules.iter().find(|r| r.head.relation == "q").unwrap();
    assert!(matches!(&q_rule.body[0], Literal::Positive(a) if a.relation == "__magic_q"));
    assert_eq!(q_rule.body.len(), 3);
    let naive = evaluate_naive(&p, &FactStore::new()).unwrap();
    let opt = OptConfig { enable_magic: true, ..OptConfig::default() };
    let ev = evaluate_detailed(&p, &FactStore::new(), &opt, &Limits::default()).unwrap();
    assert!(ev.magic_fired);
    assert!(ev.hidden.contains("q"));
    assert_eq!(ev.facts.relation("o"), naive.relation("o"));
    assert_eq!(ev.facts.relation("s"), naive.relation("s"));
    assert!(ev.facts.relation("q").is_none());
}

#[test]
fn inline_substitutes_single_rule_relations() {
    let p = parse_program(
        ".decl a(x:number) .decl b(x:number) .decl c(x:number)
         a(1).
         b(X):-a(X).
         c(X):-b(X).
         .output c",
    )
    .unwrap();
    let out = inline_rewrite(&p);
    assert_eq!(out.rules.len(), 1);
    assert_eq!(out.rules[0].to_string(), "c(X):-a(X).");
}

#[test]
fn inline_never_touches_outputs_or_recursion() {
    let p = parse_program(
        ".decl a(x:number) .decl b(x:number) .decl c(x:number)
         a(1).
         b(X):-a(X).
         c(X):-b(X).
         .output b
         .output c",
    )
    .unwrap();
    assert_eq!(inline_rewrite(&p), p);
    let rec = parse_program(
        ".decl a(x:number) .decl b(x:number) .decl c(x:number)
         a(1).
         b(X):-b(X).
         c(X):-b(X),a(X).
         .output c",
    )
    .unwrap();
    assert_eq!(inline_rewrite(&rec), rec);
}

#[test]
fn inline_renames_apart_and_handles_wildcards() {
    let p = parse_program(
        ".decl e(x:number,y:number) .decl b(x:number,y:number) .decl c(x:number)
         e(1,2). e(2,3). e(5,5).
         b(X,Y):-e(X,Y),e(Y,Y).
         c(X):-b(X,_),b(_,X).
         .output c",
    )
    .unwrap();
    let naive = evaluate_naive(&p, &FactStore::new()).unwrap();
    let opt = OptConfig { enable_inline: true, ..OptConfig::default() };
    let out = evaluate(&p, &FactStore::new(), &opt).unwrap();
    assert_eq!(out.relation("c"), naive.relation("c"));
    assert!(out.relation("b").is_none());
}

#[test]
fn inline_keeps_definitions_with_existentials() {
    let p = parse_program(
        ".decl e(x:number,y:number) .decl b(x:number) .decl c(x:number)
         e(1,2).
         b(X):-e(X,Z).
         c(X):-b(X).
         .output c",
    )
    .unwrap();
    assert_eq!(inline_rewrite(&p), p);
}

#[test]
fn subsumption_pass_runs_after_its_stratum() {
    let src = ".decl a(x:number,y:number) .decl k(x:number,y:number) .decl o(x:number,y:number)
        a(1,-2). a(1,9). a(2,4).
        k(B,A):-a(B,A).
        k(B,A1)<=k(B,A2):-A1<A2.
        o(X,Y):-k(X,Y).
        .output o";
    for opt in OptConfig::all_flag_combinations() {
        let out = run(src, &opt);
        assert_eq!(out.relation("o"), Some(&nums2(&[(1, 9), (2, 4)])), "{opt:?}");
    }
}

#[test]
fn arithmetic_errors_surface_as_semantic_errors() {
    let p = parse_program(".decl a(x:number) .decl b(x:number) a(3). b(X%0):-a(X). .output b").unwrap();
    let err = evaluate(&p, &FactStore::new(), &OptConfig::default()).unwrap_err();
    assert_eq!(err.code(), "mod_zero");
}

#[test]
fn divergent_recursion_hits_the_round_limit() {
    let p = fixtures::divergent_recursion();
    let limits = Limits { max_rounds: 50, ..Limits::default() };
    let err = evaluate_detailed(&p, &FactStore::new(), &OptConfig::default(), &limits).unwrap_err();
    assert_eq!(err.code(), "limit_exceeded");
}

#[test]
fn zero_arity_relations_are_true_or_false() {
    let src = ".decl a(x:number) .decl t() .decl f() .decl o(x:number)
        a(1).
        t():-a(1).
        f():-a(2).
        o(X):-a(X),t(),!f().
        .output o";
    for opt in OptConfig::all_flag_combinations() {
        let out = run(src, &opt);
        assert_eq!(out.count("o"), 1);
    }
    let out = run(src, &OptConfig::default());
    assert_eq!(out.relation("t"), Some(&set(vec![vec![]])));
    assert_eq!(out.count("f"), 0);
}

#[test]
fn bug_names_parse_leniently() {
    assert_eq!("BUG_MAGIC_NEGZERO".parse::<BugId>(), Ok(BugId::MagicNegzero));
    assert_eq!("seminaive_delta".parse::<BugId>(), Ok(BugId::SeminaiveDelta));
    assert!("nope".parse::<BugId>().is_err());
    let json = serde_json::to_string(&BugId::InlineDropLiteral).unwrap();
    assert_eq!(json, "\"BUG_INLINE_DROP_LITERAL\"");
}

#[test]
fn repeated_variable_within_an_atom() {
    let p = parse_program(
        ".decl a(x:number, y:number) .decl b(x:number)
         a(1,1). a(1,2). a(3,3).
         b(X):-a(X,X).
         .output b",
    )
    .unwrap();
    for opt in OptConfig::all_flag_combinations() {
        let got = evaluate(&p, &FactStore::new(), &opt).unwrap();
        assert_eq!(got.count("b"), 2);
    }
    assert_eq!(evaluate_naive(&p, &FactStore::new()).unwrap().count("b"), 2);
}
