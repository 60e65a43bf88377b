//! Per-relation fact sets and their comparison.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::value::Tuple;

/// Mapping relation name to a set of tuples. Ordered so that iteration,
/// serialization and rendering are deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactStore(BTreeMap<String, BTreeSet<Tuple>>);

impl FactStore {
    pub fn new() -> FactStore {
        FactStore::default()
    }

    /// Returns true if the tuple was new.
    pub fn insert(&mut self, rel: &str, tuple: Tuple) -> bool {
        self.entry(rel).insert(tuple)
    }

    /// Make sure `rel` is present, possibly with no tuples.
    pub fn ensure(&mut self, rel: &str) {
        self.entry(rel);
    }

    fn entry(&mut self, rel: &str) -> &mut BTreeSet<Tuple> {
        if !self.0.contains_key(rel) {
            self.0.insert(rel.to_string(), BTreeSet::new());
        }
        self.0.get_mut(rel).expect("just inserted")
    }

    pub fn relation(&self, rel: &str) -> Option<&BTreeSet<Tuple>> {
        self.0.get(rel)
    }

    pub fn relation_mut(&mut self, rel: &str) -> &mut BTreeSet<Tuple> {
        self.entry(rel)
    }

    /// Tuples of `rel`, empty if absent.
    pub fn tuples(&self, rel: &str) -> impl Iterator<Item = &Tuple> {
        self.0.get(rel).into_iter().flatten()
    }

    pub fn count(&self, rel: &str) -> usize {
        self.0.get(rel).map_or(0, BTreeSet::len)
    }

    pub fn contains(&self, rel: &str, tuple: &Tuple) -> bool {
        self.0.get(rel).is_some_and(|s| s.contains(tuple))
    }

    pub fn set_relation(&mut self, rel: &str, tuples: BTreeSet<Tuple>) {
        self.0.insert(rel.to_string(), tuples);
    }

    pub fn remove_relation(&mut self, rel: &str) -> Option<BTreeSet<Tuple>> {
        self.0.remove(rel)
    }

    pub fn extend_relation(&mut self, rel: &str, tuples: impl IntoIterator<Item = Tuple>) {
        self.entry(rel).extend(tuples);
    }

    /// Set union, relation by relation.
    pub fn union_with(&mut self, other: &FactStore) {
        for (rel, tuples) in &other.0 {
            self.entry(rel).extend(tuples.iter().cloned());
        }
    }

    pub fn retain_relations(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.0.retain(|k, _| keep(k));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<Tuple>)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Total number of tuples across relations.
    pub fn len(&self) -> usize {
        self.0.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A store holding only `rel`.
    pub fn project(&self, rel: &str) -> FactStore {
        let mut out = FactStore::new();
        out.set_relation(rel, self.0.get(rel).cloned().unwrap_or_default());
        out
    }
}

impl FromIterator<(String, Tuple)> for FactStore {
    fn from_iter<I: IntoIterator<Item = (String, Tuple)>>(iter: I) -> Self {
        let mut s = FactStore::new();
        for (rel, t) in iter {
            s.insert(&rel, t);
        }
        s
    }
}

/// Outcome of comparing one relation across two stores.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum FactDiff {
    Equal,
    Discrepancy { only_in_a: BTreeSet<Tuple>, only_in_b: BTreeSet<Tuple> },
}

impl FactDiff {
    pub fn is_equal(&self) -> bool {
        matches!(self, FactDiff::Equal)
    }

    /// The same comparison with the sides exchanged.
    pub fn mirrored(self) -> FactDiff {
        match self {
            FactDiff::Equal => FactDiff::Equal,
            FactDiff::Discrepancy { only_in_a, only_in_b } => {
                FactDiff::Discrepancy { only_in_a: only_in_b, only_in_b: only_in_a }
            }
        }
    }
}

/// Compare `rel` in `a` and `b`. A relation absent from a store counts
/// as empty.
pub fn diff_fact_sets(a: &FactStore, b: &FactStore, rel: &str) -> FactDiff {
    let empty = BTreeSet::new();
    let sa = a.relation(rel).unwrap_or(&empty);
    let sb = b.relation(rel).unwrap_or(&empty);
    if sa == sb {
        return FactDiff::Equal;
    }
    FactDiff::Discrepancy {
        only_in_a: sa.difference(sb).cloned().collect(),
        only_in_b: sb.difference(sa).cloned().collect(),
    }
}
