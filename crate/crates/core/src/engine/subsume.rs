//! Subsumption: deleting tuples dominated by another tuple of the same
//! relation.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{compare, eval_term, SemanticError, SubsumptionRule, Term, Tuple, Value};

fn match_pattern(pattern: &[Term], t: &Tuple, env: &mut BTreeMap<String, Value>) -> bool {
    for (p, v) in pattern.iter().zip(t) {
        match p {
            Term::Wildcard => {}
            Term::Const(c) => {
                if c != v {
                    return false;
                }
            }
            Term::Var(name) => match env.get(name) {
                Some(prev) if prev != v => return false,
                Some(_) => {}
                None => {
                    env.insert(name.clone(), v.clone());
                }
            },
            Term::Unary(..) | Term::Binary(..) => return false,
        }
    }
    true
}

/// Does `hi` dominate `lo` under `sub`?
fn dominates(sub: &SubsumptionRule, lo: &Tuple, hi: &Tuple) -> Result<bool, SemanticError> {
    let mut env = BTreeMap::new();
    if !match_pattern(&sub.dominated, lo, &mut env) || !match_pattern(&sub.dominating, hi, &mut env) {
        return Ok(false);
    }
    for c in &sub.condition {
        let l = eval_term(&c.lhs, &env)?;
        let r = eval_term(&c.rhs, &env)?;
        if !compare(c.op, &l, &r, false)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Remove every tuple dominated by a distinct tuple of the input set.
/// Compares all pairs.
pub fn apply_subsumption(tuples: &BTreeSet<Tuple>, sub: &SubsumptionRule) -> Result<BTreeSet<Tuple>, SemanticError> {
    let all: Vec<&Tuple> = tuples.iter().collect();
    survivors(&all, sub).map(|v| v.into_iter().cloned().collect())
}

fn survivors<'a>(group: &[&'a Tuple], sub: &SubsumptionRule) -> Result<Vec<&'a Tuple>, SemanticError> {
    let mut keep = Vec::with_capacity(group.len());
    'outer: for lo in group {
        for hi in group {
            if lo != hi && dominates(sub, lo, hi)? {
                continue 'outer;
            }
        }
        keep.push(*lo);
    }
    Ok(keep)
}

/// Same result as [`apply_subsumption`], comparing only tuples that agree
/// on the columns both patterns bind to the same variable.
pub(crate) fn apply_subsumption_partitioned(
    tuples: &BTreeSet<Tuple>,
    sub: &SubsumptionRule,
) -> Result<BTreeSet<Tuple>, SemanticError> {
    let shared: Vec<usize> = sub
        .dominated
        .iter()
        .zip(&sub.dominating)
        .enumerate()
        .filter(|(_, (a, b))| matches!((a, b), (Term::Var(x), Term::Var(y)) if x == y))
        .map(|(i, _)| i)
        .collect();
    let mut groups: BTreeMap<Vec<&Value>, Vec<&Tuple>> = BTreeMap::new();
    for t in tuples {
        groups.entry(shared.iter().map(|&i| &t[i]).collect()).or_default().push(t);
    }
    let mut out = BTreeSet::new();
    for group in groups.values() {
        out.extend(survivors(group, sub)?.into_iter().cloned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{CmpOp, Constraint};

    fn less_than(rel: &str, lo: Vec<Term>, hi: Vec<Term>, a: &str, b: &str) -> SubsumptionRule {
        SubsumptionRule {
            relation: rel.into(),
            dominated: lo,
            dominating: hi,
            condition: vec![Constraint::new(CmpOp::Lt, Term::var(a), Term::var(b))],
        }
    }

    fn nums(rows: &[&[i64]]) -> BTreeSet<Tuple> {
        rows.iter().map(|r| r.iter().map(|v| Value::Number(*v)).collect()).collect()
    }

    #[test]
    fn keeps_only_the_maximum() {
        let sub = less_than("b", vec![Term::var("E1")], vec![Term::var("E2")], "E1", "E2");
        let input = nums(&[&[3], &[6], &[7]]);
        assert_eq!(apply_subsumption(&input, &sub).unwrap(), nums(&[&[7]]));
        assert_eq!(apply_subsumption_partitioned(&input, &sub).unwrap(), nums(&[&[7]]));
    }

    #[test]
    fn groups_by_shared_column() {
        let sub =
            less_than("kdof", vec![Term::var("B"), Term::var("A1")], vec![Term::var("B"), Term::var("A2")], "A1", "A2");
        let input = nums(&[&[1, -2], &[1, 9]]);
        assert_eq!(apply_subsumption(&input, &sub).unwrap(), nums(&[&[1, 9]]));
        let input = nums(&[&[1, -2], &[1, 9], &[2, 0]]);
        assert_eq!(apply_subsumption_partitioned(&input, &sub).unwrap(), nums(&[&[1, 9], &[2, 0]]));
    }

    #[test]
    fn empty_stays_empty() {
        let sub = less_than("b", vec![Term::var("X")], vec![Term::var("Y")], "X", "Y");
        assert!(apply_subsumption(&BTreeSet::new(), &sub).unwrap().is_empty());
    }
}
