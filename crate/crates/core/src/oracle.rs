//! Test-oracle construction from single-rule reference programs.
//!
//! Every rule is evaluated on its own, with inputs taken from the cached
//! results of the rules it depends on. Rules of a positive recursive
//! component are re-run round-robin until nothing changes; a component
//! with negation inside is handed to the engine as one program.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, EngineAdapter, EngineRun, Role, RunOutcome};
use crate::ir::{FactStore, Program, RuleId, Tuple};
use crate::stratify::{graph_stratify, CondensedNode, PrecedenceGraph};

/// Skeleton input facts plus the latest reference result of every rule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StableFacts {
    pub edb: FactStore,
    per_rule: BTreeMap<RuleId, (String, BTreeSet<Tuple>)>,
}

impl StableFacts {
    pub fn new(edb: FactStore) -> StableFacts {
        StableFacts { edb, per_rule: BTreeMap::new() }
    }

    pub fn set_rule(&mut self, id: RuleId, head: &str, tuples: BTreeSet<Tuple>) {
        self.per_rule.insert(id, (head.to_string(), tuples));
    }

    pub fn rule_facts(&self, id: RuleId) -> Option<&BTreeSet<Tuple>> {
        self.per_rule.get(&id).map(|(_, t)| t)
    }

    pub fn rules(&self) -> impl Iterator<Item = (RuleId, &str, &BTreeSet<Tuple>)> {
        self.per_rule.iter().map(|(id, (h, t))| (*id, h.as_str(), t))
    }

    pub fn clear_rules(&mut self, ids: impl IntoIterator<Item = RuleId>) {
        for id in ids {
            self.per_rule.remove(&id);
        }
    }

    /// Facts of `rel` from the skeleton and from every rule outside `exclude`.
    pub fn relation_facts(&self, rel: &str, exclude: &BTreeSet<RuleId>) -> BTreeSet<Tuple> {
        let mut out = self.edb.relation(rel).cloned().unwrap_or_default();
        for (id, (head, tuples)) in &self.per_rule {
            if head == rel && !exclude.contains(id) {
                out.extend(tuples.iter().cloned());
            }
        }
        out
    }
}

/// The union of every rule's results for `output_rel`, plus its skeleton facts.
pub fn get_facts(stable: &StableFacts, output_rel: &str) -> FactStore {
    let mut out = FactStore::new();
    out.set_relation(output_rel, stable.relation_facts(output_rel, &BTreeSet::new()));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Round limit for positive recursive components.
    pub max_iter: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { max_iter: 100 }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no fixpoint for rules {rules:?} after {rounds} rounds")]
    MaxIterExceeded { rules: Vec<RuleId>, rounds: usize },
    #[error("expected semantic error `{code}` in reference program for {rules:?}")]
    ExpectedError { rules: Vec<RuleId>, code: String },
    #[error("engine failure ({}) in reference program for {rules:?}", run.outcome.label())]
    EngineFailure { rules: Vec<RuleId>, program: Box<Program>, run: Box<EngineRun> },
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecursionTrace {
    pub members: Vec<RuleId>,
    pub rounds: usize,
    pub combined: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    /// Expected facts of the output relation.
    pub oracle: FactStore,
    /// Engine cost summed over reference executions.
    pub cost: u64,
    pub executions: usize,
    pub recursion: Vec<RecursionTrace>,
}

/// The reference program for `nodes`: their rules, declarations of every
/// relation they mention, input facts for every body relation from outside
/// the node, and the rules' heads as outputs.
pub fn reference_program(program: &Program, nodes: &[RuleId], stable: &StableFacts) -> Program {
    let node_set: BTreeSet<RuleId> = nodes.iter().copied().collect();
    let mut p = Program {
        rules: program.rules.iter().filter(|r| node_set.contains(&r.id)).cloned().collect(),
        ..Program::default()
    };
    let mentioned: BTreeSet<String> = p.mentioned_relations().into_iter().map(str::to_string).collect();
    p.decls = program.decls.iter().filter(|d| mentioned.contains(&d.name)).cloned().collect();
    let heads: BTreeSet<&str> = p.rules.iter().map(|r| r.head.relation.as_str()).collect();
    p.subsumptions = program.subsumptions.iter().filter(|s| heads.contains(s.relation.as_str())).cloned().collect();
    let inputs: BTreeSet<&str> =
        p.rules.iter().flat_map(|r| r.body.iter().filter_map(|l| l.atom()).map(|a| a.relation.as_str())).collect();
    for rel in inputs {
        p.facts.set_relation(rel, stable.relation_facts(rel, &node_set));
    }
    let mut outputs: Vec<String> = Vec::new();
    for r in &p.rules {
        if !outputs.contains(&r.head.relation) {
            outputs.push(r.head.relation.clone());
        }
    }
    p.outputs = outputs;
    p
}

/// Build and run the reference program for `nodes`; returns each rule's
/// head facts. Storing them is the caller's business.
pub fn gen_prog_and_exec(
    program: &Program,
    nodes: &[RuleId],
    stable: &StableFacts,
    engine: &dyn EngineAdapter,
) -> Result<(BTreeMap<RuleId, BTreeSet<Tuple>>, u64), OracleError> {
    let reference = reference_program(program, nodes, stable);
    let run = engine.execute(&reference, Role::Reference)?;
    match &run.outcome {
        RunOutcome::Facts { facts } => {
            let per_rule = reference
                .rules
                .iter()
                .map(|r| (r.id, facts.relation(&r.head.relation).cloned().unwrap_or_default()))
                .collect();
            Ok((per_rule, run.cost))
        }
        RunOutcome::SemanticError { matched: Some(code), .. } => {
            Err(OracleError::ExpectedError { rules: nodes.to_vec(), code: code.clone() })
        }
        _ => {
            Err(OracleError::EngineFailure { rules: nodes.to_vec(), program: Box::new(reference), run: Box::new(run) })
        }
    }
}

struct Walk<'a> {
    program: &'a Program,
    engine: &'a dyn EngineAdapter,
    cfg: OracleConfig,
    cost: u64,
    executions: usize,
}

impl Walk<'_> {
    fn exec(&mut self, nodes: &[RuleId], stable: &mut StableFacts) -> Result<bool, OracleError> {
        let (results, cost) = gen_prog_and_exec(self.program, nodes, stable, self.engine)?;
        self.cost += cost;
        self.executions += 1;
        let mut changed = false;
        for (id, tuples) in results {
            let head = &self.program.rule(id).expect("rule in program").head.relation;
            if stable.rule_facts(id) != Some(&tuples) {
                changed = true;
            }
            stable.set_rule(id, head, tuples);
        }
        Ok(changed)
    }

    fn recursion(&mut self, node: &CondensedNode, stable: &mut StableFacts) -> Result<RecursionTrace, OracleError> {
        if node.has_negative_internal_edge {
            self.exec(&node.members, stable)?;
            return Ok(RecursionTrace { members: node.members.clone(), rounds: 1, combined: true });
        }
        for round in 1..=self.cfg.max_iter {
            let mut changed = false;
            for id in &node.members {
                changed |= self.exec(&[*id], stable)?;
            }
            if !changed {
                return Ok(RecursionTrace { members: node.members.clone(), rounds: round, combined: false });
            }
        }
        Err(OracleError::MaxIterExceeded { rules: node.members.clone(), rounds: self.cfg.max_iter })
    }
}

/// Evaluate one recursive component into `stable`. Positive components run
/// round-robin from the lowest rule id until a full round changes nothing.
pub fn handle_recursion(
    program: &Program,
    node: &CondensedNode,
    stable: &mut StableFacts,
    engine: &dyn EngineAdapter,
    cfg: OracleConfig,
) -> Result<RecursionTrace, OracleError> {
    Walk { program, engine, cfg, cost: 0, executions: 0 }.recursion(node, stable)
}

/// Recompute every rule of `subgraph` stratum by stratum and collect the
/// expected facts of `output_rel`. Earlier results of those rules are
/// discarded first; on error `stable` is left partially updated.
pub fn test_oracle_gen(
    program: &Program,
    subgraph: &PrecedenceGraph,
    stable: &mut StableFacts,
    output_rel: &str,
    engine: &dyn EngineAdapter,
    cfg: OracleConfig,
) -> Result<OracleRun, OracleError> {
    stable.clear_rules(subgraph.nodes());
    let strata = graph_stratify(subgraph);
    let mut walk = Walk { program, engine, cfg, cost: 0, executions: 0 };
    let mut recursion = Vec::new();
    for node in strata.nodes() {
        if node.is_recursive {
            recursion.push(walk.recursion(node, stable)?);
        } else {
            walk.exec(&node.members, stable)?;
        }
    }
    Ok(OracleRun { oracle: get_facts(stable, output_rel), cost: walk.cost, executions: walk.executions, recursion })
}

/// Oracle for a whole program from scratch: skeleton facts only, every
/// rule recomputed.
pub fn full_oracle(
    program: &Program,
    output_rel: &str,
    engine: &dyn EngineAdapter,
    cfg: OracleConfig,
) -> Result<(OracleRun, StableFacts), OracleError> {
    let mut stable = StableFacts::new(program.facts.clone());
    let graph = PrecedenceGraph::build(program);
    let run = test_oracle_gen(program, &graph, &mut stable, output_rel, engine, cfg)?;
    Ok((run, stable))
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;
    use crate::adapters::{Dialect, EmbeddedEngine, EngineConfig};
    use crate::engine::{evaluate_naive, BugId, OptConfig};
    use crate::fixtures;
    use crate::ir::{parse_program, Value};

    fn nums(v: &[i64]) -> BTreeSet<Tuple> {
        v.iter().map(|n| vec![Value::Number(*n)]).collect()
    }

    fn clean() -> EmbeddedEngine {
        EmbeddedEngine::with_opt(OptConfig::default())
    }

    #[test]
    fn guiding_example_walk() {
        let p = fixtures::guiding_example();
        let mut stable = StableFacts::new(p.facts.clone());
        stable.set_rule(RuleId(1), "d", nums(&[9]));
        let graph = PrecedenceGraph::build(&p);
        let sub = graph.affected_subgraph(RuleId(3));
        let run = test_oracle_gen(&p, &sub, &mut stable, "b", &clean(), OracleConfig::default()).unwrap();
        assert_eq!(run.oracle.relation("b"), Some(&nums(&[1, 2])));
        assert_eq!(stable.rule_facts(RuleId(3)), Some(&nums(&[2])));
        assert_eq!(stable.rule_facts(RuleId(0)), Some(&nums(&[3])));
        assert_eq!(stable.rule_facts(RuleId(1)), Some(&nums(&[3])));
        assert_eq!(stable.rule_facts(RuleId(2)), Some(&nums(&[3])));
        assert_eq!(
            run.recursion,
            vec![RecursionTrace { members: vec![RuleId(1), RuleId(2)], rounds: 2, combined: false }]
        );
    }

    #[test]
    fn single_reference_program_for_negation() {
        let p = parse_program(
            ".decl a(x:number) .decl b(x:number) .decl c(x:number)
             a(1). a(2). a(3). b(1). b(2).
             c(X):-a(X),!b(X).
             .output c",
        )
        .unwrap();
        let stable = StableFacts::new(p.facts.clone());
        let (res, _) = gen_prog_and_exec(&p, &[RuleId(0)], &stable, &clean()).unwrap();
        assert_eq!(res[&RuleId(0)], nums(&[3]));
        let reference = reference_program(&p, &[RuleId(0)], &stable);
        assert_eq!(reference.outputs, vec!["c".to_string()]);
        assert!(reference.facts.relation("c").is_none());
    }

    #[test]
    fn empty_input_gives_empty_result() {
        let p = parse_program(".decl a(x:number) .decl b(x:number) b(X):-a(X). .output b").unwrap();
        let (res, _) = gen_prog_and_exec(&p, &[RuleId(0)], &StableFacts::default(), &clean()).unwrap();
        assert!(res[&RuleId(0)].is_empty());
    }

    #[test]
    fn divergent_recursion_is_abandoned() {
        let p = fixtures::divergent_recursion();
        for max_iter in [1, 7, 30] {
            let err = full_oracle(&p, "b", &clean(), OracleConfig { max_iter }).unwrap_err();
            assert!(matches!(err, OracleError::MaxIterExceeded { rounds, .. } if rounds == max_iter));
        }
    }

    #[test]
    fn union_over_rules_and_skeleton_facts() {
        let p = parse_program(
            ".decl s(x:number) .decl a(x:number)
             s(1). s(5). a(7).
             a(X):-s(X),X<3.
             a(X):-s(X),X>3.
             .output a",
        )
        .unwrap();
        let (run, _) = full_oracle(&p, "a", &clean(), OracleConfig::default()).unwrap();
        assert_eq!(run.oracle.relation("a"), Some(&nums(&[1, 5, 7])));
        assert_eq!(run.executions, 2);
        let empty = StableFacts::new(p.facts.clone());
        assert_eq!(get_facts(&empty, "a").relation("a"), Some(&nums(&[7])));
    }

    #[test]
    fn regression_oracles_expose_every_bug() {
        for reg in fixtures::all_regressions() {
            let engine = EmbeddedEngine::with_opt(reg.opt.clone());
            let out = &reg.program.outputs[0];
            let (run, _) = full_oracle(&reg.program, out, &engine, OracleConfig::default()).unwrap();
            assert_eq!(run.oracle.relation(out), Some(&reg.expected.iter().cloned().collect()), "{}", reg.name);
        }
    }

    #[test]
    fn sibling_delta_oracle_at_the_fourth_rule() {
        let reg = fixtures::regression_for(BugId::SeminaiveDelta);
        let engine = EmbeddedEngine::with_opt(reg.opt.clone());
        let mut stable = StableFacts::new(reg.program.facts.clone());
        let mut graph = PrecedenceGraph::default();
        let mut last = None;
        for rule in &reg.program.rules {
            graph.add_rule(rule);
            let sub = graph.affected_subgraph(rule.id);
            last = Some(
                test_oracle_gen(&reg.program, &sub, &mut stable, &rule.head.relation, &engine, OracleConfig::default())
                    .unwrap(),
            );
        }
        assert_eq!(last.unwrap().oracle.relation("result"), Some(&nums(&[0, 1])));
    }

    #[test]
    fn matches_naive_evaluation_on_the_guiding_example() {
        let p = fixtures::guiding_example();
        let naive = evaluate_naive(&p, &FactStore::new()).unwrap();
        for rel in ["b", "c", "d"] {
            let (run, _) = full_oracle(&p, rel, &clean(), OracleConfig::default()).unwrap();
            assert_eq!(run.oracle.relation(rel), naive.relation(rel), "{rel}");
        }
    }

    /// Accepts negation inside recursion and records what it was given.
    struct Recorder {
        seen: Mutex<Vec<Program>>,
    }

    impl EngineAdapter for Recorder {
        fn dialect(&self) -> Dialect {
            Dialect::MuZLike
        }

        fn config(&self) -> EngineConfig {
            EngineConfig::Embedded(Default::default())
        }

        fn execute(&self, program: &Program, _role: Role) -> Result<EngineRun, AdapterError> {
            self.seen.lock().unwrap().push(program.clone());
            let mut facts = FactStore::new();
            for o in &program.outputs {
                facts.insert(o, vec![Value::Symbol("a".into())]);
            }
            Ok(EngineRun {
                outcome: RunOutcome::Facts { facts },
                stdout: String::new(),
                stderr: String::new(),
                cost: 1,
                workdir: None,
            })
        }
    }

    #[test]
    fn negative_cycle_runs_as_one_program() {
        let p = parse_program(
            ".decl e(x:symbol) .decl c(x:symbol) .decl d(x:symbol)
             e(\"a\").
             c(X):-e(X).
             d(X):-c(X).
             c(X):-c(X),!d(X).
             .output c",
        )
        .unwrap();
        let engine = Recorder { seen: Mutex::new(Vec::new()) };
        let (run, stable) = full_oracle(&p, "c", &engine, OracleConfig::default()).unwrap();
        let seen = engine.seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        let combined = &seen[1];
        assert_eq!(combined.rules.len(), 2);
        assert_eq!(combined.outputs, vec!["d".to_string(), "c".to_string()]);
        assert_eq!(combined.facts.count("c"), 1);
        assert!(run.recursion[0].combined);
        assert!(stable.rule_facts(RuleId(1)).is_some() && stable.rule_facts(RuleId(2)).is_some());
        assert_eq!(run.oracle.count("c"), 1);
    }

    #[test]
    fn expected_errors_surface_with_their_code() {
        let p = parse_program(".decl a(x:number) .decl b(x:number) a(3). b(X%0):-a(X). .output b").unwrap();
        let err = full_oracle(&p, "b", &clean(), OracleConfig::default()).unwrap_err();
        assert!(matches!(err, OracleError::ExpectedError { ref code, .. } if code == "mod_zero"));
    }
}
