//! Inlining of relations defined by a single non-recursive rule whose
//! body variables all reach the head, so no call site joins more tuples
//! than the relation it replaces would hold.

use std::collections::{BTreeMap, BTreeSet};

use super::deps::{input_relations, RelationDeps};
use crate::ir::{check_safety, Atom, FactStore, Literal, Program, Rule, Term};

pub(crate) struct InlineOutcome {
    pub program: Program,
    /// Relations whose defining rule was substituted away.
    pub removed: BTreeSet<String>,
}

/// Substitute the body of every eligible relation into its call sites.
/// The program's own facts mark input relations, which are never inlined.
pub fn inline_rewrite(program: &Program) -> Program {
    inline_rewrite_with(program, &FactStore::new(), false).program
}

pub(crate) fn inline_rewrite_with(program: &Program, edb: &FactStore, drop_last_literal: bool) -> InlineOutcome {
    let mut prog = program.clone();
    let inputs = input_relations(program, edb);
    let mut removed = BTreeSet::new();
    let mut fresh = 0usize;
    while let Some(target) = pick_target(&prog, &inputs) {
        let def_idx = prog.rules.iter().position(|r| r.head.relation == target).expect("target has a rule");
        let def = prog.rules.remove(def_idx);
        for rule in &mut prog.rules {
            if !rule.uses_relation(&target) {
                continue;
            }
            // Each entry: literals plus whether they came from `def`.
            let mut parts: Vec<(Vec<Literal>, bool)> = Vec::with_capacity(rule.body.len());
            for lit in std::mem::take(&mut rule.body) {
                match lit {
                    Literal::Positive(a) if a.relation == target => {
                        fresh += 1;
                        parts.push((substitute(&def, &a, fresh), true));
                    }
                    other => parts.push((vec![other], false)),
                }
            }
            rule.body = parts.iter().flat_map(|(l, _)| l.iter().cloned()).collect();
            if drop_last_literal && def.body.len() >= 2 {
                let trimmed: Vec<Literal> = parts
                    .iter()
                    .flat_map(|(l, inlined)| {
                        let keep = if *inlined { l.len() - 1 } else { l.len() };
                        l[..keep].iter().cloned()
                    })
                    .collect();
                let candidate = Rule { id: rule.id, head: rule.head.clone(), body: trimmed };
                if !candidate.body.is_empty() && check_safety(&candidate).is_ok() {
                    rule.body = candidate.body;
                }
            }
        }
        removed.insert(target);
    }
    InlineOutcome { program: prog, removed }
}

fn pick_target(prog: &Program, inputs: &BTreeSet<String>) -> Option<String> {
    let deps = RelationDeps::new(prog);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &prog.rules {
        *counts.entry(r.head.relation.as_str()).or_default() += 1;
    }
    prog.rules
        .iter()
        .filter(|r| {
            let rel = r.head.relation.as_str();
            counts[rel] == 1
                && !inputs.contains(rel)
                && !prog.is_output(rel)
                && prog.subsumptions_of(rel).next().is_none()
                && !deps.is_recursive(rel)
                && distinct_var_head(&r.head)
                && no_existentials(r)
                && prog.rules.iter().all(|c| {
                    c.body.iter().all(|l| match l {
                        Literal::Negative(a) => a.relation != rel,
                        Literal::Positive(a) if a.relation == rel => a.args.iter().all(|t| !t.is_arith()),
                        _ => true,
                    })
                })
        })
        .min_by_key(|r| r.id)
        .map(|r| r.head.relation.clone())
}

fn no_existentials(rule: &Rule) -> bool {
    let head: BTreeSet<&str> = rule.head.vars().into_iter().collect();
    rule.body.iter().flat_map(Literal::vars).all(|v| head.contains(v))
}

fn distinct_var_head(head: &Atom) -> bool {
    let mut seen = BTreeSet::new();
    head.args.iter().all(|t| matches!(t, Term::Var(v) if seen.insert(v.as_str())))
}

/// The body of `def` with head variables replaced by the call-site
/// arguments and all other variables renamed apart.
fn substitute(def: &Rule, call: &Atom, fresh: usize) -> Vec<Literal> {
    let mut map: BTreeMap<String, Term> = BTreeMap::new();
    for (h, arg) in def.head.args.iter().zip(&call.args) {
        let Term::Var(hv) = h else { unreachable!("head checked to be variables") };
        let replacement = match arg {
            Term::Wildcard => Term::Var(format!("_inl{fresh}_{hv}")),
            other => other.clone(),
        };
        map.insert(hv.clone(), replacement);
    }
    let mut rename = |v: &str| -> Term { map.get(v).cloned().unwrap_or_else(|| Term::Var(format!("_inl{fresh}_{v}"))) };
    def.body
        .iter()
        .map(|lit| match lit {
            Literal::Positive(a) => Literal::Positive(rename_atom(a, &mut rename)),
            Literal::Negative(a) => Literal::Negative(rename_atom(a, &mut rename)),
            Literal::Constraint(c) => {
                let mut c2 = c.clone();
                c2.lhs = c.lhs.rename(&mut rename);
                c2.rhs = c.rhs.rename(&mut rename);
                Literal::Constraint(c2)
            }
        })
        .collect()
}

fn rename_atom(a: &Atom, f: &mut impl FnMut(&str) -> Term) -> Atom {
    Atom::new(a.relation.clone(), a.args.iter().map(|t| t.rename(f)).collect())
}
