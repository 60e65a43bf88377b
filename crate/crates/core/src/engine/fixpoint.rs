//! Naive and semi-naive fixpoint loops for one stratum.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::join::{run_rule, Budget, Db, DeltaInput, IndexCache};
use super::plan::CompiledRule;
use super::{EngineError, EvalStats, Limits};
use crate::ir::{RuleId, Tuple};

pub(crate) struct StratumCtx<'a> {
    pub rules: &'a [CompiledRule],
    pub relations: &'a BTreeSet<String>,
    pub limits: &'a Limits,
    pub budget: &'a mut Budget,
    pub stats: &'a mut EvalStats,
}

impl StratumCtx<'_> {
    fn round(&mut self) -> Result<(), EngineError> {
        self.stats.rounds += 1;
        if self.stats.rounds > self.limits.max_rounds {
            return Err(EngineError::LimitExceeded(format!("more than {} rounds", self.limits.max_rounds)));
        }
        Ok(())
    }

    fn check_size(&self, db: &Db) -> Result<(), EngineError> {
        if db.total() > self.limits.max_facts {
            return Err(EngineError::LimitExceeded(format!("more than {} facts", self.limits.max_facts)));
        }
        Ok(())
    }
}

/// Re-evaluate every rule on the whole database until nothing changes.
pub(crate) fn naive(db: &mut Db, ctx: &mut StratumCtx<'_>) -> Result<(), EngineError> {
    loop {
        ctx.round()?;
        let mut derived: Vec<(usize, Tuple)> = Vec::new();
        let mut cache = IndexCache::default();
        for (i, rule) in ctx.rules.iter().enumerate() {
            run_rule(rule, db, None, &mut cache, ctx.budget, &mut |t| derived.push((i, t)))?;
        }
        let mut changed = false;
        for (i, t) in derived {
            if db.relation_mut(&ctx.rules[i].head_relation).insert(t) {
                ctx.stats.derived += 1;
                changed = true;
            }
        }
        ctx.check_size(db)?;
        if !changed {
            return Ok(());
        }
    }
}

/// Delta-driven evaluation. The first round evaluates every rule on the
/// whole database; later rounds evaluate each rule once per body atom
/// over this stratum's relations, reading that atom from the previous
/// round's new facts.
///
/// With `sibling_delta_loss`, a relation defined by several rules only
/// propagates new facts of its lowest-numbered rule.
pub(crate) fn seminaive(db: &mut Db, ctx: &mut StratumCtx<'_>, sibling_delta_loss: bool) -> Result<(), EngineError> {
    let mut first_rule: BTreeMap<&str, (RuleId, usize)> = BTreeMap::new();
    for r in ctx.rules {
        let e = first_rule.entry(r.head_relation.as_str()).or_insert((r.id, 0));
        e.0 = e.0.min(r.id);
        e.1 += 1;
    }

    let mut delta: HashMap<String, Vec<Tuple>> = HashMap::new();
    let mut first = true;
    loop {
        ctx.round()?;
        let mut derived: Vec<(usize, Tuple)> = Vec::new();
        let mut cache = IndexCache::default();
        for (i, rule) in ctx.rules.iter().enumerate() {
            let mut emit = |t| derived.push((i, t));
            if first {
                run_rule(rule, db, None, &mut cache, ctx.budget, &mut emit)?;
                continue;
            }
            for (k, atom) in rule.atoms.iter().enumerate() {
                if !ctx.relations.contains(&atom.relation) {
                    continue;
                }
                let Some(d) = delta.get(&atom.relation).filter(|d| !d.is_empty()) else {
                    continue;
                };
                run_rule(rule, db, Some(DeltaInput { atom: k, tuples: d }), &mut cache, ctx.budget, &mut emit)?;
            }
        }
        first = false;

        let mut next: HashMap<String, Vec<Tuple>> = HashMap::new();
        for (i, t) in derived {
            let rule = &ctx.rules[i];
            if !db.relation_mut(&rule.head_relation).insert(t.clone()) {
                continue;
            }
            ctx.stats.derived += 1;
            let (lowest, count) = first_rule[rule.head_relation.as_str()];
            if sibling_delta_loss && count >= 2 && rule.id != lowest {
                continue;
            }
            next.entry(rule.head_relation.clone()).or_default().push(t);
        }
        ctx.check_size(db)?;
        if next.values().all(Vec::is_empty) {
            return Ok(());
        }
        delta = next;
    }
}
