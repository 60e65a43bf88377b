//! Incremental test-case generation.
//!
//! An iteration starts from a random skeleton of input relations and grows
//! a program one rule at a time. Each candidate is evaluated through the
//! oracle; it is kept when it is valid and, except with probability
//! `p_empty`, non-empty. After every kept rule the whole program runs on
//! the engine and its output is compared with the oracle.

mod synth;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synth::{
    fresh_relation_name, gen_candidate_rule, gen_skeleton, random_value, skeleton_relation_name, Candidate,
    NoCompatibleHead, Palette,
};

use crate::adapters::{AdapterError, EngineAdapter, EngineRun, Role, RunOutcome};
use crate::harness::{check_discrepancy, BugReport};
use crate::ir::{Program, Rule, RuleId, ValueKind};
use crate::oracle::{full_oracle, test_oracle_gen, OracleConfig, OracleError, OracleRun, StableFacts};
use crate::stratify::{strict_cycle, PrecedenceGraph};

/// Consecutive failures after which an iteration ends even when `max_att`
/// is unbounded.
pub const ATTEMPT_SAFETY_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureProbs {
    pub negation: f64,
    pub constraint: f64,
    pub arithmetic: f64,
    pub wildcard: f64,
    pub subsumption: f64,
    /// Chance that a body argument is a constant.
    pub constant_arg: f64,
    /// Chance of an optimization annotation on a fresh relation.
    pub annotation: f64,
}

impl Default for FeatureProbs {
    fn default() -> Self {
        FeatureProbs {
            negation: 0.2,
            constraint: 0.5,
            arithmetic: 0.15,
            wildcard: 0.15,
            subsumption: 0.05,
            constant_arg: 0.1,
            annotation: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValuePools {
    pub number: (i64, i64),
    pub unsigned: (u64, u64),
    pub floats: Vec<f64>,
    pub symbols: Vec<String>,
}

impl Default for ValuePools {
    fn default() -> Self {
        ValuePools {
            number: (0, 9),
            unsigned: (0, 9),
            floats: vec![-1.5, -0.0, 0.0, 0.5, 1.0, 2.5],
            symbols: ["a", "b", "c", "d"].map(String::from).to_vec(),
        }
    }
}

/// Inclusive ranges for the skeleton.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkeletonConfig {
    pub relations: (usize, usize),
    pub arity: (usize, usize),
    pub facts: (usize, usize),
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        SkeletonConfig { relations: (1, 3), arity: (1, 3), facts: (1, 6) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub max_rules: usize,
    /// `None` is unbounded.
    pub max_att: Option<usize>,
    pub p_empty: f64,
    pub p_head: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub features: FeatureProbs,
    pub pools: ValuePools,
    pub skeleton: SkeletonConfig,
    /// Column kinds to draw from; repeats weight the draw.
    pub kinds: Vec<ValueKind>,
    pub max_body_atoms: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_rules: 100,
            max_att: None,
            p_empty: 0.1,
            p_head: 0.02,
            max_iter: 100,
            seed: 0,
            features: FeatureProbs::default(),
            pools: ValuePools::default(),
            skeleton: SkeletonConfig::default(),
            kinds: vec![ValueKind::Number, ValueKind::Number, ValueKind::Unsigned, ValueKind::Float, ValueKind::Symbol],
            max_body_atoms: 3,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |what: &str| Err(GenError::Config(what.to_string()));
        let probs = [
            self.p_empty,
            self.p_head,
            self.features.negation,
            self.features.constraint,
            self.features.arithmetic,
            self.features.wildcard,
            self.features.subsumption,
            self.features.constant_arg,
            self.features.annotation,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.max_rules == 0 || self.max_iter == 0 || self.max_att == Some(0) {
            return bad("max_rules, max_att and max_iter must be positive");
        }
        let sk = &self.skeleton;
        if sk.relations.0 == 0 || sk.relations.0 > sk.relations.1 || sk.arity.0 > sk.arity.1 || sk.facts.0 > sk.facts.1
        {
            return bad("skeleton ranges must be non-empty and have at least one relation");
        }
        if self.pools.number.0 > self.pools.number.1 || self.pools.unsigned.0 > self.pools.unsigned.1 {
            return bad("value pool ranges must be non-empty");
        }
        if self.kinds.is_empty() {
            return bad("at least one value kind is needed");
        }
        Ok(())
    }

    pub fn oracle(&self) -> OracleConfig {
        OracleConfig { max_iter: self.max_iter }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RuleOutcome {
    Retained { empty: bool },
    DiscardedEmpty,
    DiscardedError { kind: String },
    ReferenceFailure { kind: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEvent {
    pub id: RuleId,
    pub rule: String,
    #[serde(flatten)]
    pub outcome: RuleOutcome,
}

/// Result of one `try_extend` call.
#[derive(Debug)]
pub enum ExtendOutcome {
    Retained {
        rule: RuleId,
        oracle: OracleRun,
    },
    DiscardedEmpty,
    DiscardedError(String),
    /// The engine crashed or hung on a reference program.
    ReferenceFailure(Box<OracleError>),
    Exhausted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    #[default]
    MaxRules,
    Exhausted,
    BugFound,
    /// Random baseline: the program was built in one go.
    Complete,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    #[default]
    Incremental,
    Random,
}

/// Wall-clock time per phase. Not reproducible, so kept apart from the
/// rest of the trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseTiming {
    pub reference: Duration,
    pub optimized: Duration,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestIterationTrace {
    pub arm: Arm,
    pub seed: u64,
    pub rules: usize,
    pub termination: Termination,
    pub events: Vec<RuleEvent>,
    /// Failed attempts before each retained rule.
    pub attempts: Vec<usize>,
    pub output_rel: Option<String>,
    /// The last optimized run produced no output facts, or never ran.
    pub empty_output: bool,
    /// Random baseline: the final program evaluated without error.
    pub valid: bool,
    pub reference_runs: usize,
    pub optimized_runs: usize,
    /// Engine cost units summed over reference and optimized runs.
    pub reference_cost: u64,
    pub optimized_cost: u64,
    pub cycle_count: usize,
    pub mean_cycle_size: f64,
    #[serde(skip)]
    pub timing: PhaseTiming,
}

impl TestIterationTrace {
    pub fn non_empty(&self) -> bool {
        self.valid && !self.empty_output
    }

    pub fn retained(&self) -> impl Iterator<Item = &RuleEvent> {
        self.events.iter().filter(|e| matches!(e.outcome, RuleOutcome::Retained { .. }))
    }
}

#[derive(Clone, Debug)]
pub struct IterationResult {
    pub trace: TestIterationTrace,
    pub program: Program,
    pub stable: StableFacts,
    pub report: Option<Box<BugReport>>,
}

#[derive(Clone, Debug)]
struct Snapshot {
    program: Program,
    stable: StableFacts,
    graph: PrecedenceGraph,
    attempts: usize,
}

#[derive(Clone, Debug)]
pub struct TestIterationState {
    pub optimized_program: Program,
    pub stable_facts: StableFacts,
    pub prec_graph: PrecedenceGraph,
    pub rng: ChaCha8Rng,
    pub attempts_since_success: usize,
    pub trace: TestIterationTrace,
    palette: Palette,
    next_id: u32,
    undo: Option<Box<Snapshot>>,
}

impl TestIterationState {
    /// A fresh iteration over a random skeleton.
    pub fn new(cfg: &GenConfig, engine: &dyn EngineAdapter) -> Result<TestIterationState, GenError> {
        cfg.validate()?;
        let palette = Palette::new(cfg, engine.dialect(), &engine.features());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (decls, edb) = gen_skeleton(cfg, &palette, &mut rng);
        let program = Program { decls, facts: edb, ..Program::default() };
        Ok(Self::from_parts(cfg, program, palette, rng))
    }

    /// An iteration over a given skeleton: its declarations and facts.
    pub fn with_skeleton(cfg: &GenConfig, engine: &dyn EngineAdapter, skeleton: &Program) -> TestIterationState {
        let palette = Palette::new(cfg, engine.dialect(), &engine.features());
        let program = Program { decls: skeleton.decls.clone(), facts: skeleton.facts.clone(), ..Program::default() };
        Self::from_parts(cfg, program, palette, ChaCha8Rng::seed_from_u64(cfg.seed))
    }

    fn from_parts(cfg: &GenConfig, program: Program, palette: Palette, rng: ChaCha8Rng) -> TestIterationState {
        TestIterationState {
            stable_facts: StableFacts::new(program.facts.clone()),
            optimized_program: program,
            prec_graph: PrecedenceGraph::default(),
            rng,
            attempts_since_success: 0,
            trace: TestIterationTrace { seed: cfg.seed, empty_output: true, valid: true, ..Default::default() },
            palette,
            next_id: 0,
            undo: None,
        }
    }

    pub fn output_rel(&self) -> Option<&str> {
        self.optimized_program.outputs.first().map(String::as_str)
    }

    fn next_rule_id(&mut self) -> RuleId {
        let id = RuleId(self.next_id);
        self.next_id += 1;
        id
    }

    fn exhausted(&self, cfg: &GenConfig) -> bool {
        self.attempts_since_success >= cfg.max_att.unwrap_or(ATTEMPT_SAFETY_CAP).min(ATTEMPT_SAFETY_CAP)
    }

    /// Generate one candidate and keep or discard it.
    pub fn try_extend(&mut self, engine: &dyn EngineAdapter, cfg: &GenConfig) -> Result<ExtendOutcome, GenError> {
        if self.exhausted(cfg) {
            return Ok(ExtendOutcome::Exhausted);
        }
        let id = self.next_rule_id();
        let candidate = gen_candidate_rule(&self.optimized_program, id, cfg, &self.palette, &mut self.rng);
        self.consider(candidate, engine, cfg, false)
    }

    /// Append `rule` regardless of its result, unless it is invalid. Its
    /// head must already be declared.
    pub fn force_rule(
        &mut self,
        rule: &Rule,
        engine: &dyn EngineAdapter,
        cfg: &GenConfig,
    ) -> Result<ExtendOutcome, GenError> {
        let id = self.next_rule_id();
        let candidate = Candidate { rule: Rule { id, ..rule.clone() }, fresh: None, subsumption: None };
        self.consider(candidate, engine, cfg, true)
    }

    fn fail(&mut self, candidate: &Candidate, outcome: RuleOutcome) {
        self.attempts_since_success += 1;
        self.trace.events.push(RuleEvent { id: candidate.rule.id, rule: candidate.rule.to_string(), outcome });
    }

    fn consider(
        &mut self,
        candidate: Candidate,
        engine: &dyn EngineAdapter,
        cfg: &GenConfig,
        force: bool,
    ) -> Result<ExtendOutcome, GenError> {
        let id = candidate.rule.id;
        let head = candidate.rule.head.relation.clone();
        let mut program = self.optimized_program.clone();
        program.decls.extend(candidate.fresh.clone());
        program.subsumptions.extend(candidate.subsumption.clone());
        program.rules.push(candidate.rule.clone());
        program.outputs = vec![head.clone()];
        if strict_cycle(&program, !self.palette.stratified).is_some() {
            self.fail(&candidate, RuleOutcome::DiscardedError { kind: "unstratifiable".into() });
            return Ok(ExtendOutcome::DiscardedError("unstratifiable".into()));
        }

        let mut graph = self.prec_graph.clone();
        graph.add_rule(&candidate.rule);
        let affected = graph.affected_subgraph(id);
        let mut stable = self.stable_facts.clone();
        let started = Instant::now();
        let result = test_oracle_gen(&program, &affected, &mut stable, &head, engine, cfg.oracle());
        self.trace.timing.reference += started.elapsed();
        let run = match result {
            Ok(run) => run,
            Err(OracleError::ExpectedError { code, .. }) => {
                self.fail(&candidate, RuleOutcome::DiscardedError { kind: code.clone() });
                return Ok(ExtendOutcome::DiscardedError(code));
            }
            Err(OracleError::MaxIterExceeded { .. }) => {
                self.fail(&candidate, RuleOutcome::DiscardedError { kind: "max_iter".into() });
                return Ok(ExtendOutcome::DiscardedError("max_iter".into()));
            }
            Err(OracleError::Adapter(e)) => return Err(e.into()),
            Err(e @ OracleError::EngineFailure { .. }) => {
                let kind = match &e {
                    OracleError::EngineFailure { run, .. } => run.outcome.label().to_string(),
                    _ => unreachable!(),
                };
                self.trace.reference_runs += 1;
                self.fail(&candidate, RuleOutcome::ReferenceFailure { kind });
                return Ok(ExtendOutcome::ReferenceFailure(Box::new(e)));
            }
        };
        self.trace.reference_runs += run.executions;
        self.trace.reference_cost += run.cost;

        let empty = stable.rule_facts(id).is_none_or(|t| t.is_empty());
        if empty && !force && !self.rng.random_bool(cfg.p_empty) {
            self.fail(&candidate, RuleOutcome::DiscardedEmpty);
            return Ok(ExtendOutcome::DiscardedEmpty);
        }

        let previous = Snapshot {
            program: std::mem::replace(&mut self.optimized_program, program),
            stable: std::mem::replace(&mut self.stable_facts, stable),
            graph: std::mem::replace(&mut self.prec_graph, graph),
            attempts: self.attempts_since_success,
        };
        self.undo = Some(Box::new(previous));
        self.trace.attempts.push(self.attempts_since_success);
        self.attempts_since_success = 0;
        self.trace.events.push(RuleEvent {
            id,
            rule: candidate.rule.to_string(),
            outcome: RuleOutcome::Retained { empty },
        });
        Ok(ExtendOutcome::Retained { rule: id, oracle: run })
    }

    /// Undo the last retention; the rule is recorded as discarded with `kind`.
    pub fn rollback_last(&mut self, kind: &str) -> bool {
        let Some(snap) = self.undo.take() else {
            return false;
        };
        self.optimized_program = snap.program;
        self.stable_facts = snap.stable;
        self.prec_graph = snap.graph;
        self.attempts_since_success = snap.attempts + 1;
        self.trace.attempts.pop();
        if let Some(ev) = self.trace.events.last_mut() {
            ev.outcome = RuleOutcome::DiscardedError { kind: kind.to_string() };
        }
        true
    }

    fn run_optimized(&mut self, engine: &dyn EngineAdapter) -> Result<EngineRun, GenError> {
        let started = Instant::now();
        let run = engine.execute(&self.optimized_program, Role::Optimized)?;
        self.trace.timing.optimized += started.elapsed();
        self.trace.optimized_runs += 1;
        self.trace.optimized_cost += run.cost;
        let out = self.output_rel().unwrap_or_default();
        self.trace.empty_output = run.outcome.facts().is_none_or(|f| f.count(out) == 0);
        Ok(run)
    }

    /// Steps after a retention: run the optimized program and compare.
    /// Returns a report on discrepancy; rolls back on an expected error.
    fn check_retained(
        &mut self,
        engine: &dyn EngineAdapter,
        rule: RuleId,
        oracle: &OracleRun,
    ) -> Result<Option<Box<BugReport>>, GenError> {
        let run = self.run_optimized(engine)?;
        if let Some(code) = run.outcome.expected_error() {
            let kind = format!("optimized:{code}");
            self.rollback_last(&kind);
            return Ok(None);
        }
        let out = self.output_rel().expect("output after retention").to_string();
        Ok(check_discrepancy(&oracle.oracle, &run.outcome, &out).map(|d| {
            Box::new(BugReport::from_discrepancy(
                d,
                self.trace.seed,
                rule,
                &self.optimized_program,
                &self.stable_facts,
                &oracle.oracle,
                run,
                engine.config(),
            ))
        }))
    }

    fn finish(mut self, termination: Termination, report: Option<Box<BugReport>>) -> IterationResult {
        self.trace.termination = termination;
        self.trace.rules = self.optimized_program.rules.len();
        self.trace.output_rel = self.output_rel().map(str::to_string);
        let (count, mean) = self.prec_graph.condense().cycle_stats();
        self.trace.cycle_count = count;
        self.trace.mean_cycle_size = mean;
        IterationResult { trace: self.trace, program: self.optimized_program, stable: self.stable_facts, report }
    }

    /// Step after a `try_extend`/`force_rule` call; `Some` ends the loop.
    fn after(
        &mut self,
        outcome: ExtendOutcome,
        engine: &dyn EngineAdapter,
    ) -> Result<Option<(Termination, Option<Box<BugReport>>)>, GenError> {
        Ok(match outcome {
            ExtendOutcome::Exhausted => Some((Termination::Exhausted, None)),
            ExtendOutcome::DiscardedEmpty | ExtendOutcome::DiscardedError(_) => None,
            ExtendOutcome::ReferenceFailure(e) => {
                let report =
                    BugReport::from_reference_failure(*e, self.trace.seed, &self.stable_facts, engine.config());
                Some((Termination::BugFound, report.map(Box::new)))
            }
            ExtendOutcome::Retained { rule, oracle } => {
                self.check_retained(engine, rule, &oracle)?.map(|r| (Termination::BugFound, Some(r)))
            }
        })
    }
}

/// One incremental iteration: grow until `max_rules`, exhaustion, or the
/// first bug report.
pub fn run_iteration(cfg: &GenConfig, engine: &dyn EngineAdapter) -> Result<IterationResult, GenError> {
    let mut state = TestIterationState::new(cfg, engine)?;
    loop {
        if state.optimized_program.rules.len() >= cfg.max_rules {
            return Ok(state.finish(Termination::MaxRules, None));
        }
        let outcome = state.try_extend(engine, cfg)?;
        if let Some((t, report)) = state.after(outcome, engine)? {
            return Ok(state.finish(t, report));
        }
    }
}

/// Feed `rules` in order over the facts and declarations of `skeleton`,
/// keeping each valid one whatever its result.
pub fn run_script(
    skeleton: &Program,
    rules: &[Rule],
    cfg: &GenConfig,
    engine: &dyn EngineAdapter,
) -> Result<IterationResult, GenError> {
    let mut state = TestIterationState::with_skeleton(cfg, engine, skeleton);
    for rule in rules {
        let outcome = state.force_rule(rule, engine, cfg)?;
        if let Some((t, report)) = state.after(outcome, engine)? {
            return Ok(state.finish(t, report));
        }
    }
    Ok(state.finish(Termination::MaxRules, None))
}

/// Baseline: append `max_rules` candidates without feedback, then judge
/// the final program once.
pub fn run_iteration_random(cfg: &GenConfig, engine: &dyn EngineAdapter) -> Result<IterationResult, GenError> {
    let mut state = TestIterationState::new(cfg, engine)?;
    state.trace.arm = Arm::Random;
    let mut rules = 0;
    while rules < cfg.max_rules && !state.exhausted(cfg) {
        let id = state.next_rule_id();
        let c = gen_candidate_rule(&state.optimized_program, id, cfg, &state.palette, &mut state.rng);
        let mut program = state.optimized_program.clone();
        program.decls.extend(c.fresh.clone());
        program.subsumptions.extend(c.subsumption.clone());
        program.rules.push(c.rule.clone());
        program.outputs = vec![c.rule.head.relation.clone()];
        if strict_cycle(&program, !state.palette.stratified).is_some() {
            state.fail(&c, RuleOutcome::DiscardedError { kind: "unstratifiable".into() });
            continue;
        }
        state.prec_graph.add_rule(&c.rule);
        state.optimized_program = program;
        state.attempts_since_success = 0;
        state.trace.events.push(RuleEvent {
            id,
            rule: c.rule.to_string(),
            outcome: RuleOutcome::Retained { empty: false },
        });
        rules += 1;
    }
    if rules == 0 {
        state.trace.valid = false;
        return Ok(state.finish(Termination::Exhausted, None));
    }

    let run = state.run_optimized(engine)?;
    state.trace.valid = matches!(run.outcome, RunOutcome::Facts { .. });
    if !state.trace.valid {
        return Ok(state.finish(Termination::Complete, None));
    }
    let out = state.output_rel().expect("output").to_string();
    let started = Instant::now();
    let oracle = full_oracle(&state.optimized_program, &out, engine, cfg.oracle());
    state.trace.timing.reference += started.elapsed();
    let report = match oracle {
        Ok((oracle, stable)) => {
            state.trace.reference_runs += oracle.executions;
            state.trace.reference_cost += oracle.cost;
            for ev in &mut state.trace.events {
                if let RuleOutcome::Retained { empty } = &mut ev.outcome {
                    *empty = stable.rule_facts(ev.id).is_none_or(|t| t.is_empty());
                }
            }
            state.stable_facts = stable;
            check_discrepancy(&oracle.oracle, &run.outcome, &out).map(|d| {
                let last = state.optimized_program.rules.last().expect("rules").id;
                Box::new(BugReport::from_discrepancy(
                    d,
                    state.trace.seed,
                    last,
                    &state.optimized_program,
                    &state.stable_facts,
                    &oracle.oracle,
                    run,
                    engine.config(),
                ))
            })
        }
        Err(OracleError::Adapter(e)) => return Err(e.into()),
        Err(OracleError::EngineFailure { .. })
        | Err(OracleError::ExpectedError { .. })
        | Err(OracleError::MaxIterExceeded { .. }) => {
            state.trace.valid = false;
            None
        }
    };
    let t = if report.is_some() { Termination::BugFound } else { Termination::Complete };
    Ok(state.finish(t, report))
}

#[cfg(test)]
mod tests;
