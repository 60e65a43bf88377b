//! Discrepancy detection, bug reports, test-case reduction and campaigns.

mod campaign;
mod reduce;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use campaign::{
    derive_seed, read_reports, read_stats_csv, run_campaign, stats_csv, timing_csv, write_report, CampaignConfig,
    CampaignError, CampaignOutcome, CampaignStats, IterationStats, Mode, StatsRow, StopCondition,
};
pub use reduce::{reduce_program, reduce_testcase, reproduces, ReduceError};

use crate::adapters::{EngineConfig, EngineRun, RunOutcome};
use crate::ir::{diff_fact_sets, FactDiff, FactStore, Program, RuleId, Tuple};
use crate::oracle::{OracleError, StableFacts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugKind {
    Logic,
    SemanticErrorUnexpected,
    Crash,
    Hang,
}

impl BugKind {
    pub fn name(self) -> &'static str {
        match self {
            BugKind::Logic => "logic",
            BugKind::SemanticErrorUnexpected => "semantic_error_unexpected",
            BugKind::Crash => "crash",
            BugKind::Hang => "hang",
        }
    }
}

/// What `check_discrepancy` found.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub kind: BugKind,
    pub detail: String,
    /// Oracle on side `a`, engine on side `b`. Logic bugs only.
    pub diff: Option<FactDiff>,
}

/// A failed run classified by kind, or `None` for facts and for
/// catalogued semantic errors.
fn failure(outcome: &RunOutcome) -> Option<(BugKind, String)> {
    match outcome {
        RunOutcome::Facts { .. } | RunOutcome::SemanticError { matched: Some(_), .. } => None,
        RunOutcome::SemanticError { message, matched: None } => {
            Some((BugKind::SemanticErrorUnexpected, format!("unexpected error: {message}")))
        }
        RunOutcome::ParseFailure { detail } => {
            Some((BugKind::SemanticErrorUnexpected, format!("unreadable output: {detail}")))
        }
        RunOutcome::Crash { detail } => Some((BugKind::Crash, detail.clone())),
        RunOutcome::Timeout { after_ms } => Some((BugKind::Hang, format!("no result after {after_ms} ms"))),
    }
}

/// Compare the optimized outcome with the oracle for `output_rel`.
pub fn check_discrepancy(oracle: &FactStore, optimized: &RunOutcome, output_rel: &str) -> Option<Discrepancy> {
    if let RunOutcome::Facts { facts } = optimized {
        return match diff_fact_sets(oracle, facts, output_rel) {
            FactDiff::Equal => None,
            diff @ FactDiff::Discrepancy { .. } => {
                let (missing, extra) = match &diff {
                    FactDiff::Discrepancy { only_in_a, only_in_b } => (only_in_a.len(), only_in_b.len()),
                    FactDiff::Equal => unreachable!(),
                };
                Some(Discrepancy {
                    kind: BugKind::Logic,
                    detail: format!("`{output_rel}`: {missing} expected tuple(s) missing, {extra} unexpected"),
                    diff: Some(diff),
                })
            }
        };
    }
    failure(optimized).map(|(kind, detail)| Discrepancy { kind, detail, diff: None })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    NotRun,
    Reduced {
        program: Program,
        rules_before: usize,
        rules_after: usize,
    },
    NonReproducible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub kind: BugKind,
    pub detail: String,
    pub seed: u64,
    pub iteration: u64,
    /// The rule whose addition exposed the bug.
    pub rule_index: RuleId,
    pub output_rel: String,
    /// The optimized program, or the failing reference program when the
    /// engine broke down on one.
    pub program: Program,
    pub stable_facts: StableFacts,
    pub oracle: BTreeSet<Tuple>,
    pub optimized: Option<BTreeSet<Tuple>>,
    pub diff: Option<FactDiff>,
    pub outcome: String,
    pub stdout: String,
    pub stderr: String,
    pub engine: EngineConfig,
    #[serde(default)]
    pub reduction: Reduction,
}

impl BugReport {
    #[allow(clippy::too_many_arguments)]
    pub fn from_discrepancy(
        d: Discrepancy,
        seed: u64,
        rule: RuleId,
        program: &Program,
        stable: &StableFacts,
        oracle: &FactStore,
        run: EngineRun,
        engine: EngineConfig,
    ) -> BugReport {
        let output_rel = program.outputs.first().cloned().unwrap_or_default();
        BugReport {
            kind: d.kind,
            detail: d.detail,
            seed,
            iteration: 0,
            rule_index: rule,
            oracle: oracle.relation(&output_rel).cloned().unwrap_or_default(),
            optimized: run.outcome.facts().map(|f| f.relation(&output_rel).cloned().unwrap_or_default()),
            output_rel,
            program: program.clone(),
            stable_facts: stable.clone(),
            diff: d.diff,
            outcome: run.outcome.label().to_string(),
            stdout: run.stdout,
            stderr: run.stderr,
            engine,
            reduction: Reduction::NotRun,
        }
    }

    /// Report for a reference program the engine could not run. `None`
    /// for oracle errors that are not engine failures.
    pub fn from_reference_failure(
        e: OracleError,
        seed: u64,
        stable: &StableFacts,
        engine: EngineConfig,
    ) -> Option<BugReport> {
        let OracleError::EngineFailure { rules, program, run } = e else {
            return None;
        };
        let (kind, detail) = failure(&run.outcome)?;
        Some(BugReport {
            kind,
            detail: format!("reference program: {detail}"),
            seed,
            iteration: 0,
            rule_index: rules.first().copied().unwrap_or(RuleId(0)),
            output_rel: program.outputs.first().cloned().unwrap_or_default(),
            program: *program,
            stable_facts: stable.clone(),
            oracle: BTreeSet::new(),
            optimized: None,
            diff: None,
            outcome: run.outcome.label().to_string(),
            stdout: run.stdout,
            stderr: run.stderr,
            engine,
            reduction: Reduction::NotRun,
        })
    }
}
