//! Demand-driven restriction of intermediate relations.
//!
//! For a relation `p` read by exactly one rule (its consumer), derivation of
//! `p` is limited to tuples the consumer can use: values bound by the atoms
//! preceding `p` in the consumer body become a demand relation
//! `__magic_p`, and simple comparisons against constants on `p`'s columns
//! move into `p`'s rules.

use std::collections::BTreeSet;

use super::deps::{input_relations, RelationDeps};
use crate::ir::{Atom, CmpOp, Constraint, FactStore, Literal, Program, RelationDecl, Rule, RuleId, Term, Value};

pub(crate) const MAGIC_PREFIX: &str = "__magic_";

pub(crate) struct MagicOutcome {
    pub program: Program,
    /// Relations whose derived set is now a subset of the true one.
    pub restricted: BTreeSet<String>,
    pub fired: bool,
}

pub fn magic_rewrite(program: &Program) -> Program {
    magic_rewrite_with(program, &FactStore::new(), false).program
}

/// With `loose_filters`, the pushed comparisons compare floats numerically
/// and are removed from the consumer.
pub(crate) fn magic_rewrite_with(program: &Program, edb: &FactStore, loose_filters: bool) -> MagicOutcome {
    let mut prog = program.clone();
    let inputs = input_relations(program, edb);
    let mut restricted = BTreeSet::new();
    let mut next_id = prog.rules.iter().map(|r| r.id.0).max().map_or(0, |m| m + 1);

    let candidates: Vec<String> = prog.head_relations().into_iter().map(str::to_string).collect();
    for rel in candidates {
        if inputs.contains(&rel) || prog.is_output(&rel) || prog.subsumptions_of(&rel).next().is_some() {
            continue;
        }
        let deps = RelationDeps::new(&prog);
        if deps.is_recursive(&rel) {
            continue;
        }
        if !prog.rules_defining(&rel).all(|r| r.head.args.iter().all(|t| matches!(t, Term::Var(_) | Term::Const(_)))) {
            continue;
        }
        let Some((ci, li)) = single_positive_use(&prog, &rel) else {
            continue;
        };
        let consumer = prog.rules[ci].clone();
        if deps.is_recursive(&consumer.head.relation) {
            continue;
        }
        let Literal::Positive(call) = &consumer.body[li] else { unreachable!() };
        if call.args.iter().any(Term::is_arith) {
            continue;
        }

        // Atoms before the call that can seed demand.
        let prefix: Vec<&Atom> = consumer.body[..li]
            .iter()
            .filter_map(|l| match l {
                Literal::Positive(a) => Some(a),
                _ => None,
            })
            .filter(|a| a.args.iter().all(|t| !t.is_arith()) && a.relation != rel && !deps.reaches(&a.relation, &rel))
            .collect();
        let prefix_vars: BTreeSet<&str> = prefix
            .iter()
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.as_str()),
                _ => None,
            })
            .collect();
        let bound: Vec<usize> = call
            .args
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t, Term::Var(v) if prefix_vars.contains(v.as_str())))
            .map(|(i, _)| i)
            .collect();

        // (column, op, constant, index of the consumer literal or None for a constant argument)
        let mut pushed: Vec<(usize, CmpOp, Value, Option<usize>)> = Vec::new();
        for (col, t) in call.args.iter().enumerate() {
            if let Term::Const(c) = t {
                pushed.push((col, CmpOp::Eq, c.clone(), None));
            }
        }
        for (idx, lit) in consumer.body.iter().enumerate() {
            let Literal::Constraint(c) = lit else {
                continue;
            };
            let (var, op, value) = match (&c.lhs, &c.rhs) {
                (Term::Var(v), Term::Const(k)) => (v, c.op, k),
                (Term::Const(k), Term::Var(v)) => (v, c.op.flipped(), k),
                _ => continue,
            };
            if let Some(col) = call.args.iter().position(|t| matches!(t, Term::Var(x) if x == var)) {
                pushed.push((col, op, value.clone(), Some(idx)));
            }
        }
        // A comparison across kinds would raise an error the consumer might never reach.
        let column_kinds = prog.decl(&rel).map(|d| d.kinds()).unwrap_or_default();
        pushed.retain(|(col, _, v, _)| column_kinds.get(*col) == Some(&v.kind()));
        if bound.is_empty() && pushed.is_empty() {
            continue;
        }

        let magic_rel = format!("{MAGIC_PREFIX}{rel}");
        if !bound.is_empty() {
            let mut body: Vec<Literal> = prefix.iter().map(|a| Literal::Positive((*a).clone())).collect();
            body.extend(
                consumer
                    .body
                    .iter()
                    .filter(|l| match l {
                        Literal::Constraint(c) => {
                            !c.lhs.contains_wildcard()
                                && !c.rhs.contains_wildcard()
                                && c.vars().iter().all(|v| prefix_vars.contains(v))
                        }
                        _ => false,
                    })
                    .cloned(),
            );
            let head = Atom::new(magic_rel.clone(), bound.iter().map(|&i| call.args[i].clone()).collect());
            let kinds: Vec<_> = match prog.decl(&rel) {
                Some(d) => bound.iter().map(|&i| d.attrs[i].kind).collect(),
                None => continue,
            };
            prog.decls.push(RelationDecl::new(magic_rel.clone(), &kinds));
            prog.rules.push(Rule { id: RuleId(next_id), head, body });
            next_id += 1;
        }

        let drop_from_consumer: BTreeSet<usize> =
            if loose_filters { pushed.iter().filter_map(|p| p.3).collect() } else { BTreeSet::new() };
        for r in prog.rules.iter_mut().filter(|r| r.head.relation == rel) {
            if !bound.is_empty() {
                let demand = Atom::new(magic_rel.clone(), bound.iter().map(|&i| r.head.args[i].clone()).collect());
                r.body.insert(0, Literal::Positive(demand));
            }
            for (col, op, value, _) in &pushed {
                let mut c = Constraint::new(*op, r.head.args[*col].clone(), Term::Const(value.clone()));
                c.loose_float = loose_filters;
                r.body.push(Literal::Constraint(c));
            }
        }
        if !drop_from_consumer.is_empty() {
            let consumer = &mut prog.rules[ci];
            let mut idx = 0;
            consumer.body.retain(|_| {
                idx += 1;
                !drop_from_consumer.contains(&(idx - 1))
            });
        }
        restricted.insert(rel);
    }
    let fired = !restricted.is_empty();
    MagicOutcome { program: prog, restricted, fired }
}

/// The only body occurrence of `rel`, if it is positive: (rule index, literal index).
fn single_positive_use(prog: &Program, rel: &str) -> Option<(usize, usize)> {
    let mut found = None;
    for (ri, r) in prog.rules.iter().enumerate() {
        for (li, l) in r.body.iter().enumerate() {
            match l {
                Literal::Positive(a) if a.relation == rel => {
                    if found.is_some() {
                        return None;
                    }
                    found = Some((ri, li));
                }
                Literal::Negative(a) if a.relation == rel => return None,
                _ => {}
            }
        }
    }
    found
}
