//! Relation storage and nested-loop joins over hash indexes.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::plan::{check_compare, ArgMatch, CompiledRule, Filter};
use super::EngineError;
use crate::ir::{FactStore, Tuple, Value};

#[derive(Clone, Debug, Default)]
pub(crate) struct Relation {
    pub tuples: Vec<Tuple>,
    pub set: HashSet<Tuple>,
}

impl Relation {
    pub fn insert(&mut self, t: Tuple) -> bool {
        if self.set.contains(&t) {
            return false;
        }
        self.set.insert(t.clone());
        self.tuples.push(t);
        true
    }

    pub fn replace(&mut self, tuples: BTreeSet<Tuple>) {
        self.tuples = tuples.iter().cloned().collect();
        self.set = tuples.into_iter().collect();
    }

    pub fn to_set(&self) -> BTreeSet<Tuple> {
        self.tuples.iter().cloned().collect()
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Db {
    rels: HashMap<String, Relation>,
}

impl Db {
    pub fn from_store(store: &FactStore) -> Db {
        let mut db = Db::default();
        for (rel, tuples) in store.iter() {
            let r = db.rels.entry(rel.to_string()).or_default();
            for t in tuples {
                r.insert(t.clone());
            }
        }
        db
    }

    pub fn relation(&self, rel: &str) -> Option<&Relation> {
        self.rels.get(rel)
    }

    pub fn relation_mut(&mut self, rel: &str) -> &mut Relation {
        self.rels.entry(rel.to_string()).or_default()
    }

    pub fn total(&self) -> usize {
        self.rels.values().map(|r| r.tuples.len()).sum()
    }

    pub fn into_store(self) -> FactStore {
        let mut out = FactStore::new();
        for (rel, r) in self.rels {
            out.set_relation(&rel, r.tuples.into_iter().collect());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Source {
    Full,
    Delta,
}

type Index = HashMap<Vec<Value>, Vec<usize>>;

/// Hash indexes keyed by (relation, source, key columns). Valid while the
/// underlying relations are unchanged; callers drop it between rounds.
#[derive(Default)]
pub(crate) struct IndexCache {
    map: HashMap<(String, Source, Vec<usize>), Index>,
}

impl IndexCache {
    fn ensure(&mut self, rel: &str, src: Source, cols: &[usize], tuples: &[Tuple]) {
        let key = (rel.to_string(), src, cols.to_vec());
        self.map.entry(key).or_insert_with(|| {
            let mut idx: Index = HashMap::new();
            for (i, t) in tuples.iter().enumerate() {
                idx.entry(cols.iter().map(|&c| t[c].clone()).collect()).or_default().push(i);
            }
            idx
        });
    }

    fn get(&self, rel: &str, src: Source, cols: &[usize]) -> &Index {
        self.map.get(&(rel.to_string(), src, cols.to_vec())).expect("index prepared before join")
    }
}

/// Work accounting shared by one evaluation call.
#[derive(Clone, Debug)]
pub(crate) struct Budget {
    pub work: u64,
    pub max_work: u64,
}

impl Budget {
    fn spend(&mut self, n: u64) -> Result<(), EngineError> {
        self.work += n;
        if self.work > self.max_work {
            return Err(EngineError::LimitExceeded(format!("join work above {}", self.max_work)));
        }
        Ok(())
    }
}

/// Delta tuples of one relation, read by the atom at position `atom`.
pub(crate) struct DeltaInput<'a> {
    pub atom: usize,
    pub tuples: &'a [Tuple],
}

struct JoinCtx<'a> {
    rule: &'a CompiledRule,
    full: &'a Db,
    delta: Option<DeltaInput<'a>>,
    cache: &'a IndexCache,
    budget: &'a mut Budget,
}

/// Evaluate one rule, passing each derived head tuple to `emit`.
pub(crate) fn run_rule(
    rule: &CompiledRule,
    full: &Db,
    delta: Option<DeltaInput<'_>>,
    cache: &mut IndexCache,
    budget: &mut Budget,
    emit: &mut dyn FnMut(Tuple),
) -> Result<(), EngineError> {
    static EMPTY: Vec<Tuple> = Vec::new();
    let source_of = |k: usize| -> (Source, &[Tuple]) {
        match &delta {
            Some(d) if d.atom == k => (Source::Delta, d.tuples),
            _ => (Source::Full, full.relation(&rule.atoms[k].relation).map_or(&EMPTY[..], |r| &r.tuples[..])),
        }
    };
    for (k, atom) in rule.atoms.iter().enumerate() {
        if !atom.key.is_empty() {
            let (src, tuples) = source_of(k);
            cache.ensure(&atom.relation, src, &atom.key, tuples);
        }
    }
    for f in rule.pre_filters.iter().chain(rule.filters.iter().flatten()) {
        if let Some((rel, cols)) = f.absent_key() {
            let arity_known = full.relation(rel).and_then(|r| r.tuples.first()).map(Vec::len);
            if !cols.is_empty() && Some(cols.len()) != arity_known {
                let tuples = full.relation(rel).map_or(&EMPTY[..], |r| &r.tuples[..]);
                cache.ensure(rel, Source::Full, &cols, tuples);
            }
        }
    }

    let mut env: Vec<Option<Value>> = vec![None; rule.slot_count];
    let mut ctx = JoinCtx { rule, full, delta, cache, budget };
    if !filters_pass(&ctx, &rule.pre_filters, &env)? {
        return Ok(());
    }
    join(&mut ctx, 0, &mut env, emit)
}

fn join(
    ctx: &mut JoinCtx<'_>,
    k: usize,
    env: &mut Vec<Option<Value>>,
    emit: &mut dyn FnMut(Tuple),
) -> Result<(), EngineError> {
    let rule = ctx.rule;
    if k == rule.atoms.len() {
        let head =
            rule.head.iter().map(|t| t.eval(env)).collect::<Result<Tuple, _>>().map_err(EngineError::Semantic)?;
        ctx.budget.spend(1)?;
        emit(head);
        return Ok(());
    }
    let atom = &rule.atoms[k];
    let full = ctx.full;
    let cache = ctx.cache;
    let (src, tuples): (Source, &[Tuple]) = match &ctx.delta {
        Some(d) if d.atom == k => (Source::Delta, d.tuples),
        _ => (Source::Full, full.relation(&atom.relation).map_or(&[][..], |r| &r.tuples[..])),
    };
    let hits: Option<&[usize]> = if atom.key.is_empty() {
        None
    } else {
        let key = atom.key_values(env);
        Some(cache.get(&atom.relation, src, &atom.key).get(&key).map_or(&[][..], |v| &v[..]))
    };
    let n = hits.map_or(tuples.len(), <[usize]>::len);
    ctx.budget.spend(n as u64 + 1)?;
    'tuples: for j in 0..n {
        let t = &tuples[hits.map_or(j, |h| h[j])];
        for (col, m) in atom.args.iter().enumerate() {
            match m {
                ArgMatch::Bind(s) => env[*s] = Some(t[col].clone()),
                ArgMatch::Check(s) => {
                    if env[*s].as_ref() != Some(&t[col]) {
                        continue 'tuples;
                    }
                }
                ArgMatch::Const(c) => {
                    if &t[col] != c {
                        continue 'tuples;
                    }
                }
                ArgMatch::Ignore => {}
            }
        }
        if filters_pass(ctx, &rule.filters[k], env)? {
            join(ctx, k + 1, env, emit)?;
        }
    }
    Ok(())
}

fn filters_pass(ctx: &JoinCtx<'_>, filters: &[Filter], env: &[Option<Value>]) -> Result<bool, EngineError> {
    for f in filters {
        let ok = match f {
            Filter::Compare { op, lhs, rhs, loose } => {
                check_compare(*op, lhs, rhs, *loose, env).map_err(EngineError::Semantic)?
            }
            Filter::Absent { relation, args } => {
                let vals: Vec<Option<Value>> = args
                    .iter()
                    .map(|a| a.as_ref().map(|t| t.eval(env)).transpose())
                    .collect::<Result<_, _>>()
                    .map_err(EngineError::Semantic)?;
                !present(ctx, relation, &vals)
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

fn present(ctx: &JoinCtx<'_>, relation: &str, vals: &[Option<Value>]) -> bool {
    let Some(rel) = ctx.full.relation(relation) else {
        return false;
    };
    if rel.tuples.is_empty() {
        return false;
    }
    if vals.iter().all(Option::is_some) {
        let t: Tuple = vals.iter().map(|v| v.clone().expect("checked")).collect();
        return rel.set.contains(&t);
    }
    let cols: Vec<usize> = vals.iter().enumerate().filter(|(_, v)| v.is_some()).map(|(i, _)| i).collect();
    if cols.is_empty() {
        return true;
    }
    let key: Vec<Value> = vals.iter().flatten().cloned().collect();
    ctx.cache.get(relation, Source::Full, &cols).contains_key(&key)
}
