//! Rule-level delta debugging: shrink the rule set, then the rule bodies,
//! while the discrepancy persists.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{check_discrepancy, BugKind, BugReport, Discrepancy, Reduction};
use crate::adapters::{AdapterError, EngineAdapter, Role};
use crate::ir::{check_safety, Literal, Program, Rule};
use crate::oracle::{full_oracle, OracleConfig, OracleError};

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("the discrepancy does not reproduce on the reported program")]
    NonReproducible,
    #[error("only logic bugs are reduced, not {0:?}")]
    NotLogic(BugKind),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

/// Recompute oracle and optimized result from scratch and compare them.
pub fn reproduces(
    program: &Program,
    engine: &dyn EngineAdapter,
    cfg: OracleConfig,
) -> Result<Option<Discrepancy>, AdapterError> {
    let Some(out) = program.outputs.first() else {
        return Ok(None);
    };
    if program.rules_defining(out).next().is_none() {
        return Ok(None);
    }
    let oracle = match full_oracle(program, out, engine, cfg) {
        Ok((run, _)) => run.oracle,
        Err(OracleError::Adapter(e)) => return Err(e),
        Err(_) => return Ok(None),
    };
    let run = engine.execute(program, Role::Optimized)?;
    Ok(check_discrepancy(&oracle, &run.outcome, out))
}

fn with_rules(base: &Program, rules: &[Rule]) -> Program {
    let mut p = Program { rules: rules.to_vec(), ..base.clone() };
    let heads: BTreeSet<String> = p.rules.iter().map(|r| r.head.relation.clone()).collect();
    p.subsumptions.retain(|s| heads.contains(&s.relation));
    p.prune_unused();
    p
}

/// Rules the output relation depends on.
fn dependency_closure(program: &Program) -> Vec<Rule> {
    let mut needed: BTreeSet<&str> = program.outputs.iter().map(String::as_str).collect();
    loop {
        let before = needed.len();
        for r in &program.rules {
            if needed.contains(r.head.relation.as_str()) {
                needed.extend(r.body.iter().filter_map(Literal::atom).map(|a| a.relation.as_str()));
            }
        }
        if needed.len() == before {
            break;
        }
    }
    program.rules.iter().filter(|r| needed.contains(r.head.relation.as_str())).cloned().collect()
}

fn ddmin<T: Clone>(
    mut items: Vec<T>,
    test: &mut impl FnMut(&[T]) -> Result<bool, AdapterError>,
) -> Result<Vec<T>, AdapterError> {
    let mut n = 2;
    while items.len() >= 2 {
        let chunk = items.len().div_ceil(n);
        let parts: Vec<Vec<T>> = items.chunks(chunk).map(<[T]>::to_vec).collect();
        let mut next = None;
        for part in &parts {
            if test(part)? {
                next = Some((part.clone(), 2));
                break;
            }
        }
        if next.is_none() && parts.len() > 2 {
            for i in 0..parts.len() {
                let rest: Vec<T> =
                    parts.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, p)| p.clone()).collect();
                if test(&rest)? {
                    next = Some((rest, (n - 1).max(2)));
                    break;
                }
            }
        }
        match next {
            Some((smaller, m)) => {
                items = smaller;
                n = m;
            }
            None if n >= items.len() => break,
            None => n = (n * 2).min(items.len()),
        }
    }
    Ok(items)
}

/// Smallest program found that still shows a discrepancy of `kind`.
pub fn reduce_program(
    program: &Program,
    kind: BugKind,
    engine: &dyn EngineAdapter,
    cfg: OracleConfig,
) -> Result<Program, ReduceError> {
    let still =
        |p: &Program| -> Result<bool, AdapterError> { Ok(reproduces(p, engine, cfg)?.is_some_and(|d| d.kind == kind)) };
    if !still(program)? {
        return Err(ReduceError::NonReproducible);
    }
    let mut current = program.clone();
    loop {
        let before = current.clone();
        let mut rules = dependency_closure(&current);
        if !still(&with_rules(&current, &rules))? {
            rules = current.rules.clone();
        }
        let rules = ddmin(rules, &mut |subset| still(&with_rules(&current, subset)))?;
        current = with_rules(&current, &rules);
        current = drop_literals(current, &still)?;
        if current == before {
            break;
        }
    }
    Ok(current)
}

fn drop_literals(
    mut current: Program,
    still: &impl Fn(&Program) -> Result<bool, AdapterError>,
) -> Result<Program, AdapterError> {
    for ri in 0..current.rules.len() {
        let mut li = 0;
        while li < current.rules[ri].body.len() {
            let mut trial = current.clone();
            trial.rules[ri].body.remove(li);
            let ok = !trial.rules[ri].body.is_empty() && check_safety(&trial.rules[ri]).is_ok();
            if ok && still(&trial)? {
                current = with_rules(&trial, &trial.rules.clone());
            } else {
                li += 1;
            }
        }
    }
    Ok(current)
}

/// Reduce a logic-bug report in place of its program; the outcome is
/// stored in `report.reduction` and returned.
pub fn reduce_testcase(
    report: &mut BugReport,
    engine: &dyn EngineAdapter,
    cfg: OracleConfig,
) -> Result<Reduction, ReduceError> {
    if report.kind != BugKind::Logic {
        return Err(ReduceError::NotLogic(report.kind));
    }
    report.reduction = match reduce_program(&report.program, report.kind, engine, cfg) {
        Ok(program) => {
            Reduction::Reduced { rules_before: report.program.rules.len(), rules_after: program.rules.len(), program }
        }
        Err(ReduceError::NonReproducible) => Reduction::NonReproducible,
        Err(e) => return Err(e),
    };
    Ok(report.reduction.clone())
}
