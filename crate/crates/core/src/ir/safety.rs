//! Range restriction and structural validation.

use std::collections::BTreeSet;

use thiserror::Error;

use super::program::{Literal, Program, Rule, RuleId, Term};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("variable `{variable}` is not bound by a positive body atom")]
pub struct SafetyViolation {
    pub variable: String,
}

/// Variables bound by the rule body: those occurring as a plain argument
/// of some positive atom.
pub fn bound_vars(rule: &Rule) -> BTreeSet<&str> {
    rule.positive_atoms()
        .flat_map(|a| a.args.iter())
        .filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            _ => None,
        })
        .collect()
}

/// Every variable of the head, of negative atoms, of constraints and of
/// arithmetic arguments must be bound by a positive atom. The first
/// offender is reported, scanning the head and then the body in order.
pub fn check_safety(rule: &Rule) -> Result<(), SafetyViolation> {
    let bound = bound_vars(rule);
    let mut needed: Vec<&str> = rule.head.vars();
    for lit in &rule.body {
        match lit {
            Literal::Positive(a) => {
                needed.extend(a.args.iter().filter(|t| t.is_arith()).flat_map(Term::vars));
            }
            Literal::Negative(a) => needed.extend(a.vars()),
            Literal::Constraint(c) => needed.extend(c.vars()),
        }
    }
    match needed.into_iter().find(|v| !bound.contains(v)) {
        Some(v) => Err(SafetyViolation { variable: v.to_string() }),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("relation `{0}` declared twice")]
    DuplicateDecl(String),
    #[error("rule id {0} used twice")]
    DuplicateRuleId(RuleId),
    #[error("{rule}: relation `{relation}` is not declared")]
    UndeclaredRelation { rule: String, relation: String },
    #[error("{context}: `{relation}` expects {expected} arguments, got {found}")]
    ArityMismatch { context: String, relation: String, expected: usize, found: usize },
    #[error("fact for `{relation}` has a {found} in column {column}, declared {expected}")]
    FactKind { relation: String, column: usize, expected: String, found: String },
    #[error("symbol {0:?} contains a tab, newline or NUL")]
    MalformedSymbol(String),
    #[error("{0}: empty body")]
    EmptyBody(RuleId),
    #[error("{0}: wildcard in head")]
    WildcardInHead(RuleId),
    #[error("{rule}: {violation}")]
    Unsafe { rule: RuleId, violation: SafetyViolation },
    #[error("output relation `{0}` is not declared")]
    UndeclaredOutput(String),
    #[error("subsumption on `{relation}`: {detail}")]
    BadSubsumption { relation: String, detail: String },
}

impl Program {
    /// Structural checks: declarations, arities, fact kinds and safety.
    pub fn validate(&self) -> Result<(), IrError> {
        let mut names = BTreeSet::new();
        for d in &self.decls {
            if !names.insert(d.name.as_str()) {
                return Err(IrError::DuplicateDecl(d.name.clone()));
            }
        }
        let arity_of = |ctx: &dyn Fn() -> String, rel: &str, found: usize| -> Result<(), IrError> {
            let decl =
                self.decl(rel).ok_or_else(|| IrError::UndeclaredRelation { rule: ctx(), relation: rel.to_string() })?;
            if decl.arity() != found {
                return Err(IrError::ArityMismatch {
                    context: ctx(),
                    relation: rel.to_string(),
                    expected: decl.arity(),
                    found,
                });
            }
            Ok(())
        };

        for (rel, tuples) in self.facts.iter() {
            let decl = self
                .decl(rel)
                .ok_or_else(|| IrError::UndeclaredRelation { rule: "facts".into(), relation: rel.to_string() })?;
            for t in tuples {
                arity_of(&|| "facts".into(), rel, t.len())?;
                for (i, (v, a)) in t.iter().zip(&decl.attrs).enumerate() {
                    if v.kind() != a.kind {
                        return Err(IrError::FactKind {
                            relation: rel.to_string(),
                            column: i,
                            expected: a.kind.to_string(),
                            found: v.kind().to_string(),
                        });
                    }
                    if !v.is_well_formed() {
                        return Err(IrError::MalformedSymbol(v.to_fact_token()));
                    }
                }
            }
        }

        let mut ids = BTreeSet::new();
        for r in &self.rules {
            if !ids.insert(r.id) {
                return Err(IrError::DuplicateRuleId(r.id));
            }
            if r.body.is_empty() {
                return Err(IrError::EmptyBody(r.id));
            }
            if r.head.args.iter().any(Term::contains_wildcard) {
                return Err(IrError::WildcardInHead(r.id));
            }
            let ctx = || r.id.to_string();
            arity_of(&ctx, &r.head.relation, r.head.arity())?;
            for a in r.body.iter().filter_map(Literal::atom) {
                arity_of(&ctx, &a.relation, a.arity())?;
            }
            for c in r.body.iter().filter_map(|l| match l {
                Literal::Constraint(c) => Some(c),
                _ => None,
            }) {
                if c.lhs.contains_wildcard() || c.rhs.contains_wildcard() {
                    return Err(IrError::Unsafe { rule: r.id, violation: SafetyViolation { variable: "_".into() } });
                }
            }
            check_safety(r).map_err(|violation| IrError::Unsafe { rule: r.id, violation })?;
        }

        for s in &self.subsumptions {
            let bad =
                |detail: &str| IrError::BadSubsumption { relation: s.relation.clone(), detail: detail.to_string() };
            arity_of(&|| "subsumption".into(), &s.relation, s.dominated.len())?;
            arity_of(&|| "subsumption".into(), &s.relation, s.dominating.len())?;
            let pattern_vars: BTreeSet<&str> = s.dominated.iter().chain(&s.dominating).flat_map(Term::vars).collect();
            if s.dominated.iter().chain(&s.dominating).any(Term::is_arith) {
                return Err(bad("patterns must be variables, constants or wildcards"));
            }
            if s.condition.iter().flat_map(|c| c.vars()).any(|v| !pattern_vars.contains(v)) {
                return Err(bad("condition variable not bound by the patterns"));
            }
        }

        for o in &self.outputs {
            if self.decl(o).is_none() {
                return Err(IrError::UndeclaredOutput(o.clone()));
            }
        }
        Ok(())
    }
}
