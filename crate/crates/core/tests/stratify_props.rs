use std::collections::BTreeSet;

use deopt_core::ir::{Atom, Literal, Program, RelationDecl, Rule, RuleId, Term, ValueKind};
use deopt_core::stratify::{graph_stratify, PrecedenceGraph};
use proptest::prelude::*;

/// Rules over relations `q0..q5`, each body a list of (relation, negated).
fn arb_program() -> impl Strategy<Value = Program> {
    let rule = (0..6usize, prop::collection::vec((0..6usize, prop::bool::weighted(0.25)), 1..4));
    prop::collection::vec(rule, 1..12).prop_map(|rules| {
        let mut p = Program::default();
        for i in 0..6 {
            p.decls.push(RelationDecl::new(format!("q{i}"), &[ValueKind::Number]));
        }
        for (n, (head, body)) in rules.into_iter().enumerate() {
            let mut lits = vec![Literal::Positive(Atom::new("q0", vec![Term::var("X")]))];
            for (rel, neg) in body {
                let atom = Atom::new(format!("q{rel}"), vec![Term::var("X")]);
                lits.push(if neg { Literal::Negative(atom) } else { Literal::Positive(atom) });
            }
            p.rules.push(Rule::new(n as u32, Atom::new(&format!("q{head}"), vec![Term::var("X")]), lits));
        }
        p
    })
}

/// Reflexive-transitive closure by Warshall over the brute-force edge relation.
fn closure(p: &Program) -> Vec<Vec<bool>> {
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn affected_subgraph_is_reachability(p in arb_program(), pick in 0..12usize) {
        let g = PrecedenceGraph::build(&p);
        let start = pick % p.rules.len();
        let reach = closure(&p);
        let expected: BTreeSet<RuleId> =
            (0..p.rules.len()).filter(|j| reach[start][*j]).map(|j| RuleId(j as u32)).collect();
        let sub = g.affected_subgraph(RuleId(start as u32));
        prop_assert_eq!(sub.nodes().collect::<BTreeSet<_>>(), expected);
    }

    #[test]
    fn condensation_matches_mutual_reachability(p in arb_program()) {
        let g = PrecedenceGraph::build(&p);
        let cond = g.condense();
        prop_assert!(cond.is_acyclic());
        let reach = closure(&p);
        for i in 0..p.rules.len() {
            for j in 0..p.rules.len() {
                let same = cond.node_of[&RuleId(i as u32)] == cond.node_of[&RuleId(j as u32)];
                prop_assert_eq!(same, reach[i][j] && reach[j][i]);
            }
        }
    }

    #[test]
    fn strata_respect_both_principles(p in arb_program()) {
        let g = PrecedenceGraph::build(&p);
        let strata = graph_stratify(&g);
        let reach = closure(&p);
        let level = |id: usize| strata.stratum_of(RuleId(id as u32)).expect("every rule placed");
        for (d, rule) in p.rules.iter().enumerate() {
            for lit in &rule.body {
                let (rel, negated) = match lit {
                    Literal::Positive(a) => (&a.relation, false),
                    Literal::Negative(a) => (&a.relation, true),
                    Literal::Constraint(_) => continue,
                };
                for (s, def) in p.rules.iter().enumerate() {
                    if def.head.relation != *rel {
                        continue;
                    }
                    let cyclic = reach[s][d] && reach[d][s];
                    if negated && cyclic {
                        prop_assert_eq!(level(s), level(d));
                        continue;
                    }
                    prop_assert!(level(s) <= level(d));
                    if negated || !cyclic {
                        prop_assert!(level(s) < level(d), "edge r{} -> r{} shares a stratum", s, d);
                    }
                }
            }
        }
    }
}
