//! Rule-level precedence graph, SCC condensation and layered strata.
//!
//! Nodes are rule ids. An edge `src -> dst` means the head relation of
//! `src` occurs in the body of `dst`; it is negative when that occurrence
//! is negated. Strata keep both endpoints of every edge apart, which is
//! stronger than textbook stratification.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ir::{Literal, Program, Rule, RuleId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: RuleId,
    pub dst: RuleId,
    pub polarity: Polarity,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct NodeInfo {
    head: String,
    uses: BTreeSet<(String, Polarity)>,
}

impl NodeInfo {
    fn of(rule: &Rule) -> Self {
        let uses = rule
            .body
            .iter()
            .filter_map(|lit| match lit {
                Literal::Positive(a) => Some((a.relation.clone(), Polarity::Positive)),
                Literal::Negative(a) => Some((a.relation.clone(), Polarity::Negative)),
                Literal::Constraint(_) => None,
            })
            .collect();
        NodeInfo { head: rule.head.relation.clone(), uses }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PrecedenceGraph {
    nodes: BTreeMap<RuleId, NodeInfo>,
    edges: BTreeSet<Edge>,
}

impl PrecedenceGraph {
    pub fn build(program: &Program) -> Self {
        let mut g = PrecedenceGraph::default();
        for rule in &program.rules {
            g.add_rule(rule);
        }
        g
    }

    /// Adds a rule and every edge it takes part in, including a self-loop.
    pub fn add_rule(&mut self, rule: &Rule) {
        let info = NodeInfo::of(rule);
        for (&other, other_info) in &self.nodes {
            for (rel, pol) in &info.uses {
                if *rel == other_info.head {
                    self.edges.insert(Edge { src: other, dst: rule.id, polarity: *pol });
                }
            }
            for (rel, pol) in &other_info.uses {
                if *rel == info.head {
                    self.edges.insert(Edge { src: rule.id, dst: other, polarity: *pol });
                }
            }
        }
        for (rel, pol) in &info.uses {
            if *rel == info.head {
                self.edges.insert(Edge { src: rule.id, dst: rule.id, polarity: *pol });
            }
        }
        self.nodes.insert(rule.id, info);
    }

    pub fn remove_rule(&mut self, id: RuleId) {
        self.nodes.remove(&id);
        self.edges.retain(|e| e.src != id && e.dst != id);
    }

    pub fn nodes(&self) -> impl Iterator<Item = RuleId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn contains(&self, id: RuleId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn head_of(&self, id: RuleId) -> Option<&str> {
        self.nodes.get(&id).map(|n| n.head.as_str())
    }

    pub fn successors(&self, id: RuleId) -> impl Iterator<Item = RuleId> + '_ {
        self.edges.iter().filter(move |e| e.src == id).map(|e| e.dst)
    }

    /// `start` plus every node reachable from it.
    pub fn reachable(&self, start: RuleId) -> BTreeSet<RuleId> {
        let mut seen = BTreeSet::new();
        if !self.contains(start) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(n) = queue.pop_front() {
            for m in self.successors(n) {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    pub fn induced(&self, keep: &BTreeSet<RuleId>) -> PrecedenceGraph {
        PrecedenceGraph {
            nodes: self.nodes.iter().filter(|(id, _)| keep.contains(id)).map(|(id, n)| (*id, n.clone())).collect(),
            edges: self.edges.iter().filter(|e| keep.contains(&e.src) && keep.contains(&e.dst)).copied().collect(),
        }
    }

    /// The rules whose results may change once `new_rule` is added.
    pub fn affected_subgraph(&self, new_rule: RuleId) -> PrecedenceGraph {
        self.induced(&self.reachable(new_rule))
    }

    pub fn is_acyclic(&self) -> bool {
        self.condense().nodes.iter().all(|c| !c.is_recursive)
    }

    pub fn condense(&self) -> Condensation {
        let ids: Vec<RuleId> = self.nodes.keys().copied().collect();
        let index: BTreeMap<RuleId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for e in &self.edges {
            adj[index[&e.src]].push(index[&e.dst]);
        }
        let comps = tarjan(&adj);

        let mut node_of = BTreeMap::new();
        let mut nodes: Vec<CondensedNode> = comps
            .into_iter()
            .map(|comp| CondensedNode {
                members: comp.into_iter().map(|i| ids[i]).collect(),
                has_negative_internal_edge: false,
                is_recursive: false,
            })
            .collect();
        nodes.sort_by_key(|c| c.members[0]);
        for (ci, c) in nodes.iter().enumerate() {
            for m in &c.members {
                node_of.insert(*m, ci);
            }
        }
        let mut edges = BTreeSet::new();
        for e in &self.edges {
            let (a, b) = (node_of[&e.src], node_of[&e.dst]);
            if a == b {
                nodes[a].is_recursive = true;
                if e.polarity == Polarity::Negative {
                    nodes[a].has_negative_internal_edge = true;
                }
            } else {
                edges.insert((a, b));
            }
        }
        for c in &mut nodes {
            if c.members.len() > 1 {
                c.is_recursive = true;
            }
        }
        Condensation { nodes, edges, node_of }
    }

    /// Graphviz rendering, negative edges dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph precedence {\n");
        for (id, n) in &self.nodes {
            let _ = writeln!(out, "  {id} [label=\"{id}: {}\"];", n.head);
        }
        for e in &self.edges {
            let style = match e.polarity {
                Polarity::Positive => "",
                Polarity::Negative => " [style=dashed]",
            };
            let _ = writeln!(out, "  {} -> {}{style};", e.src, e.dst);
        }
        out.push_str("}\n");
        out
    }
}

fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        comps: Vec<Vec<usize>>,
    }

    fn visit(s: &mut State, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for i in 0..s.adj[v].len() {
            let w = s.adj[v][i];
            match s.index[w] {
                None => {
                    visit(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                Some(_) => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().expect("tarjan stack");
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            s.comps.push(comp);
        }
    }

    let n = adj.len();
    let mut s = State {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        comps: Vec::new(),
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(&mut s, v);
        }
    }
    s.comps
}

/// A relation-level cycle an engine would reject: one that passes through
/// a negated body atom (unless `allow_negation`) or through a relation
/// with subsumption rules, which must be complete before it is read.
pub fn strict_cycle(program: &Program, allow_negation: bool) -> Option<String> {
    let rels: Vec<&str> = program
        .decls
        .iter()
        .map(|d| d.name.as_str())
        .chain(program.mentioned_relations())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = rels.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let mut adj = vec![Vec::new(); rels.len()];
    let mut strict = Vec::new();
    for rule in &program.rules {
        let h = index[rule.head.relation.as_str()];
        for lit in &rule.body {
            let Some(atom) = lit.atom() else { continue };
            let b = index[atom.relation.as_str()];
            adj[b].push(h);
            let subsumed = program.subsumptions_of(&atom.relation).next().is_some();
            if (lit.is_negative() && !allow_negation) || subsumed {
                strict.push((b, h));
            }
        }
    }
    let comps = tarjan(&adj);
    let mut comp_of = vec![0; rels.len()];
    for (ci, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }
    strict.into_iter().find(|(b, h)| comp_of[*b] == comp_of[*h]).map(|(_, h)| rels[h].to_string())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondensedNode {
    /// Sorted ascending.
    pub members: Vec<RuleId>,
    pub has_negative_internal_edge: bool,
    /// More than one member, or a self-loop.
    pub is_recursive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Condensation {
    /// Ordered by lowest member id.
    pub nodes: Vec<CondensedNode>,
    pub edges: BTreeSet<(usize, usize)>,
    pub node_of: BTreeMap<RuleId, usize>,
}

impl Condensation {
    pub fn is_acyclic(&self) -> bool {
        let mut indegree = vec![0usize; self.nodes.len()];
        for (_, b) in &self.edges {
            indegree[*b] += 1;
        }
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|i| indegree[*i] == 0).collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for (a, b) in &self.edges {
                if *a == n {
                    indegree[*b] -= 1;
                    if indegree[*b] == 0 {
                        ready.push(*b);
                    }
                }
            }
        }
        seen == self.nodes.len()
    }

    /// Number of recursive components and their mean size.
    pub fn cycle_stats(&self) -> (usize, f64) {
        let sizes: Vec<usize> = self.nodes.iter().filter(|c| c.is_recursive).map(|c| c.members.len()).collect();
        if sizes.is_empty() {
            return (0, 0.0);
        }
        (sizes.len(), sizes.iter().sum::<usize>() as f64 / sizes.len() as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strata {
    /// Lowest first; nodes within a layer ordered by lowest member id.
    pub layers: Vec<Vec<CondensedNode>>,
}

impl Strata {
    pub fn stratum_of(&self, id: RuleId) -> Option<usize> {
        self.layers.iter().position(|layer| layer.iter().any(|c| c.members.contains(&id)))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CondensedNode> {
        self.layers.iter().flatten()
    }
}

/// Longest-path layering of the condensation: every node sits one layer
/// above its highest predecessor.
pub fn graph_stratify(graph: &PrecedenceGraph) -> Strata {
    let cond = graph.condense();
    let n = cond.nodes.len();
    let mut level = vec![0usize; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b) in &cond.edges {
        preds[*b].push(*a);
    }
    let mut done = vec![false; n];
    fn settle(i: usize, preds: &[Vec<usize>], level: &mut [usize], done: &mut [bool]) -> usize {
        if !done[i] {
            let mut l = 0;
            for &p in &preds[i] {
                l = l.max(settle(p, preds, level, done) + 1);
            }
            level[i] = l;
            done[i] = true;
        }
        level[i]
    }
    for i in 0..n {
        settle(i, &preds, &mut level, &mut done);
    }
    let depth = level.iter().max().map_or(0, |m| m + 1);
    let mut layers = vec![Vec::new(); depth];
    for (i, node) in cond.nodes.into_iter().enumerate() {
        layers[level[i]].push(node);
    }
    Strata { layers }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PrincipleViolation {
    /// A positive dependency placed above its consumer.
    Positive(Edge),
    /// A negative dependency not strictly below its consumer.
    Negative(Edge),
    Missing(RuleId),
}

/// Checks both stratification principles on every edge of `graph`.
/// Negative edges inside a component flagged as unstratifiable are exempt.
pub fn check_principles(graph: &PrecedenceGraph, strata: &Strata) -> Vec<PrincipleViolation> {
    let mut out = Vec::new();
    let mut pos = BTreeMap::new();
    let mut flagged = BTreeMap::new();
    for (li, layer) in strata.layers.iter().enumerate() {
        for (ci, c) in layer.iter().enumerate() {
            for m in &c.members {
                pos.insert(*m, li);
                flagged.insert(*m, (li, ci, c.has_negative_internal_edge));
            }
        }
    }
    for id in graph.nodes() {
        if !pos.contains_key(&id) {
            out.push(PrincipleViolation::Missing(id));
        }
    }
    for e in graph.edges() {
        let (Some(&s), Some(&d)) = (pos.get(&e.src), pos.get(&e.dst)) else {
            continue;
        };
        match e.polarity {
            Polarity::Positive if s > d => out.push(PrincipleViolation::Positive(*e)),
            Polarity::Negative if s >= d => {
                let (ls, cs, neg) = flagged[&e.src];
                let (ld, cd, _) = flagged[&e.dst];
                if !(neg && ls == ld && cs == cd) {
                    out.push(PrincipleViolation::Negative(*e));
                }
            }
            _ => {}
        }
    }
    out
}
