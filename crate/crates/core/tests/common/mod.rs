#![allow(dead_code)]

use deopt_core::adapters::Dialect;
use deopt_core::generator::{gen_candidate_rule, gen_skeleton, random_value, GenConfig, Palette};
use deopt_core::ir::{Atom, FactStore, Literal, Program, RelationDecl, Rule, RuleId, Term, ValueKind};
use deopt_core::stratify::strict_cycle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator settings that produce recursion and negation often.
pub fn dense_config() -> GenConfig {
    let mut cfg = GenConfig { p_head: 0.35, ..GenConfig::default() };
    cfg.features.negation = 0.3;
    cfg.features.constraint = 0.5;
    cfg.features.subsumption = 0.1;
    cfg
}

/// A stratifiable program of up to `rules` generated rules plus an extra
/// random EDB over the skeleton relations. The last rule's head is the output.
pub fn random_stratifiable(seed: u64, rules: usize) -> (Program, FactStore) {
    let cfg = dense_config();
    let dialect = Dialect::Embedded;
    let palette = Palette::new(&cfg, dialect, &dialect.features());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (decls, facts) = gen_skeleton(&cfg, &palette, &mut rng);
    let mut p = Program { decls: decls.clone(), facts, ..Program::default() };
    if p.decls.is_empty() {
        p.decls.push(RelationDecl::new("e0", &[ValueKind::Number]));
    }
    let mut edb = FactStore::new();
    for d in &p.decls {
        for _ in 0..rng.random_range(0..4) {
            let t = d.kinds().iter().map(|k| random_value(&cfg, &palette, *k, &mut rng)).collect();
            edb.insert(&d.name, t);
        }
    }
    for id in 0..(rules * 4) as u32 {
        if p.rules.len() == rules {
            break;
        }
        let c = gen_candidate_rule(&p, RuleId(id), &cfg, &palette, &mut rng);
        let mut trial = p.clone();
        trial.decls.extend(c.fresh.clone());
        trial.rules.push(c.rule.clone());
        trial.subsumptions.extend(c.subsumption.clone());
        if strict_cycle(&trial, false).is_none() {
            p = trial;
        }
    }
    if let Some(last) = p.rules.last() {
        p.outputs = vec![last.head.relation.clone()];
    }
    (p, edb)
}

/// Propositional-style rules over `q0..q5`, each body a random list of
/// possibly negated atoms. Not necessarily stratifiable.
pub fn random_graph_program(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Program::default();
    for i in 0..6 {
        p.decls.push(RelationDecl::new(format!("q{i}"), &[ValueKind::Number]));
    }
    for n in 0..rng.random_range(1..16u32) {
        let mut body = vec![Literal::Positive(Atom::new("q0", vec![Term::var("X")]))];
        for _ in 0..rng.random_range(1..4) {
            let atom = Atom::new(format!("q{}", rng.random_range(0..6)), vec![Term::var("X")]);
            body.push(if rng.random_bool(0.25) { Literal::Negative(atom) } else { Literal::Positive(atom) });
        }
        let head = Atom::new(format!("q{}", rng.random_range(0..6)), vec![Term::var("X")]);
        p.rules.push(Rule::new(n, head, body));
    }
    p
}

/// Reflexive-transitive closure over "head of i occurs in body of j".
pub fn reach_matrix(p: &Program) -> Vec<Vec<bool>> {
    let n = p.rules.len();
    let mut r = vec![vec![false; n]; n];
    for i in 0..n {
        r[i][i] = true;
        for j in 0..n {
            if p.rules[j].uses_relation(&p.rules[i].head.relation) {
                r[i][j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}
