//! Relation-level dependency queries and stratification.

use std::collections::{BTreeMap, BTreeSet};

use super::EngineError;
use crate::ir::{FactStore, Program};

/// For each relation, the relations its rules read directly.
pub(crate) struct RelationDeps {
    reads: BTreeMap<String, BTreeSet<String>>,
}

impl RelationDeps {
    pub fn new(program: &Program) -> RelationDeps {
        let mut reads: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in &program.rules {
            let e = reads.entry(r.head.relation.clone()).or_default();
            e.extend(r.body_relations().into_keys().map(str::to_string));
        }
        RelationDeps { reads }
    }

    /// True if `from` reads `to` through one or more rules.
    pub fn reaches(&self, from: &str, to: &str) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = self.reads.get(from).into_iter().flatten().map(String::as_str).collect();
        while let Some(r) = stack.pop() {
            if r == to {
                return true;
            }
            if seen.insert(r) {
                stack.extend(self.reads.get(r).into_iter().flatten().map(String::as_str));
            }
        }
        false
    }

    pub fn is_recursive(&self, rel: &str) -> bool {
        self.reaches(rel, rel)
    }
}

/// Relations with facts supplied by the program or the caller.
pub(crate) fn input_relations(program: &Program, edb: &FactStore) -> BTreeSet<String> {
    program.facts.iter().chain(edb.iter()).filter(|(_, t)| !t.is_empty()).map(|(r, _)| r.to_string()).collect()
}

/// Group relations into levels, lowest first. A rule's head sits at or
/// above every relation it reads positively, and strictly above every
/// relation it negates or that carries subsumption rules (so consumers see
/// only the subsumed set).
pub(crate) fn relation_levels(program: &Program, extra: &FactStore) -> Result<Vec<BTreeSet<String>>, EngineError> {
    let mut level: BTreeMap<String, usize> = BTreeMap::new();
    for rel in program.mentioned_relations() {
        level.insert(rel.to_string(), 0);
    }
    for d in &program.decls {
        level.entry(d.name.clone()).or_insert(0);
    }
    for (rel, _) in program.facts.iter().chain(extra.iter()) {
        level.entry(rel.to_string()).or_insert(0);
    }
    let subsumed: BTreeSet<&str> = program.subsumptions.iter().map(|s| s.relation.as_str()).collect();
    let limit = level.len();
    loop {
        let mut changed = false;
        for r in &program.rules {
            let mut need = 0;
            for (rel, negated) in r.body_relations() {
                let strict = negated || subsumed.contains(rel);
                need = need.max(level[rel] + usize::from(strict));
            }
            let cur = level.get_mut(&r.head.relation).expect("head registered");
            if need > *cur {
                if need > limit {
                    return Err(EngineError::Unstratifiable(r.head.relation.clone()));
                }
                *cur = need;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let top = level.values().copied().max().unwrap_or(0);
    let mut out = vec![BTreeSet::new(); top + 1];
    for (rel, l) in level {
        out[l].insert(rel);
    }
    Ok(out)
}
