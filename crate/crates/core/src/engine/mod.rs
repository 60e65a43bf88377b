//! Embedded bottom-up Datalog engine with optional rewrites and injectable
//! optimization faults.

mod deps;
mod fixpoint;
mod inline;
mod join;
mod magic;
mod plan;
mod subsume;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{FactStore, IrError, Program, SemanticError};
use fixpoint::StratumCtx;
use join::{Budget, Db};
use plan::CompiledRule;

pub use inline::inline_rewrite;
pub use magic::magic_rewrite;
pub use subsume::apply_subsumption;

/// Faults that can be injected into the optimized evaluation path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BugId {
    /// New facts of all but the lowest-numbered rule of a relation never
    /// enter the semi-naive delta.
    #[serde(rename = "BUG_SEMINAIVE_DELTA")]
    SeminaiveDelta,
    /// Comparisons pushed into restricted relations compare floats
    /// numerically, and are dropped from the consuming rule.
    #[serde(rename = "BUG_MAGIC_NEGZERO")]
    MagicNegzero,
    /// The subsumption pass is skipped when the demand rewrite fired.
    #[serde(rename = "BUG_SUBSUME_UNDER_MAGIC")]
    SubsumeUnderMagic,
    /// Inlining drops the last body literal of the inlined rule.
    #[serde(rename = "BUG_INLINE_DROP_LITERAL")]
    InlineDropLiteral,
}

impl BugId {
    pub const ALL: [BugId; 4] =
        [BugId::SeminaiveDelta, BugId::MagicNegzero, BugId::SubsumeUnderMagic, BugId::InlineDropLiteral];

    pub fn name(self) -> &'static str {
        match self {
            BugId::SeminaiveDelta => "BUG_SEMINAIVE_DELTA",
            BugId::MagicNegzero => "BUG_MAGIC_NEGZERO",
            BugId::SubsumeUnderMagic => "BUG_SUBSUME_UNDER_MAGIC",
            BugId::InlineDropLiteral => "BUG_INLINE_DROP_LITERAL",
        }
    }
}

impl fmt::Display for BugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unknown bug id `{0}`")]
pub struct UnknownBug(pub String);

impl FromStr for BugId {
    type Err = UnknownBug;

    /// Accepts the canonical name, case-insensitively, with or without the
    /// `BUG_` prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        let full = if up.starts_with("BUG_") { up } else { format!("BUG_{up}") };
        BugId::ALL.into_iter().find(|b| b.name() == full).ok_or_else(|| UnknownBug(s.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OptConfig {
    #[serde(default)]
    pub enable_magic: bool,
    #[serde(default)]
    pub enable_inline: bool,
    #[serde(default)]
    pub enable_subsumption: bool,
    #[serde(default)]
    pub injected_bugs: BTreeSet<BugId>,
}

impl OptConfig {
    /// Enable-flag combination number `i` (bits: magic, inline,
    /// subsumption), no injected bugs.
    pub fn from_flag_bits(i: usize) -> OptConfig {
        OptConfig {
            enable_magic: i & 1 != 0,
            enable_inline: i & 2 != 0,
            enable_subsumption: i & 4 != 0,
            injected_bugs: BTreeSet::new(),
        }
    }

    /// All eight enable-flag combinations.
    pub fn all_flag_combinations() -> Vec<OptConfig> {
        (0..8).map(OptConfig::from_flag_bits).collect()
    }

    pub fn with_bug(mut self, bug: BugId) -> OptConfig {
        self.injected_bugs.insert(bug);
        self
    }

    pub fn has_bug(&self, bug: BugId) -> bool {
        self.injected_bugs.contains(&bug)
    }

    /// The demand rewrite runs if enabled or if a fault in it is injected.
    pub fn magic_active(&self) -> bool {
        self.enable_magic || self.has_bug(BugId::MagicNegzero)
    }

    /// Same configuration with every rewrite switched off. Injected bugs
    /// stay.
    pub fn stripped(&self) -> OptConfig {
        OptConfig {
            enable_magic: false,
            enable_inline: false,
            enable_subsumption: false,
            injected_bugs: self.injected_bugs.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid program: {0}")]
    Invalid(#[from] IrError),
    #[error("relation `{0}` depends on itself through negation or subsumption")]
    Unstratifiable(String),
    #[error("{0}")]
    Semantic(#[from] SemanticError),
    #[error("evaluation limit exceeded: {0}")]
    LimitExceeded(String),
}

impl EngineError {
    /// Code matched against semantic-error catalogs.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Invalid(_) => "invalid_program",
            EngineError::Unstratifiable(_) => "unstratifiable",
            EngineError::Semantic(e) => e.code(),
            EngineError::LimitExceeded(_) => "limit_exceeded",
        }
    }
}

/// Resource caps for one evaluation call.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_rounds: u64,
    pub max_facts: usize,
    /// Tuples visited by joins plus head tuples produced.
    pub max_work: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_rounds: 10_000, max_facts: 200_000, max_work: 4_000_000 }
    }
}

/// Deterministic cost counters of one evaluation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalStats {
    pub rounds: u64,
    pub derived: u64,
    pub work: u64,
}

/// Result of [`evaluate_detailed`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub facts: FactStore,
    pub stats: EvalStats,
    /// The demand rewrite restricted at least one relation.
    pub magic_fired: bool,
    /// Relations absent from `facts` because a rewrite removed or
    /// restricted them.
    pub hidden: BTreeSet<String>,
}

/// Optimized evaluation: rewrites per `opt`, semi-naive fixpoint per
/// stratum, subsumption after each stratum.
///
/// Relations substituted away by inlining or restricted by the demand
/// rewrite are left out of the result. Outputs are never affected.
pub fn evaluate(program: &Program, edb: &FactStore, opt: &OptConfig) -> Result<FactStore, EngineError> {
    evaluate_detailed(program, edb, opt, &Limits::default()).map(|e| e.facts)
}

pub fn evaluate_detailed(
    program: &Program,
    edb: &FactStore,
    opt: &OptConfig,
    limits: &Limits,
) -> Result<Evaluation, EngineError> {
    program.validate()?;
    let mut prog = program.clone();
    let mut hidden = BTreeSet::new();
    if opt.enable_inline {
        let out = inline::inline_rewrite_with(&prog, edb, opt.has_bug(BugId::InlineDropLiteral));
        prog = out.program;
        hidden.extend(out.removed);
    }
    let mut magic_fired = false;
    if opt.magic_active() {
        let out = magic::magic_rewrite_with(&prog, edb, opt.has_bug(BugId::MagicNegzero));
        prog = out.program;
        magic_fired = out.fired;
        hidden.extend(out.restricted);
        hidden.extend(prog.decls.iter().filter(|d| d.name.starts_with(magic::MAGIC_PREFIX)).map(|d| d.name.clone()));
    }
    let skip_subsumption = magic_fired && opt.has_bug(BugId::SubsumeUnderMagic);
    let run = Run {
        program: &prog,
        edb,
        limits,
        seminaive: true,
        sibling_delta_loss: opt.has_bug(BugId::SeminaiveDelta),
        subsumption: if skip_subsumption {
            SubsumptionMode::Skip
        } else if opt.enable_subsumption {
            SubsumptionMode::Partitioned
        } else {
            SubsumptionMode::Pairwise
        },
    };
    let (mut facts, stats) = run.execute()?;
    facts.retain_relations(|r| !hidden.contains(r));
    Ok(Evaluation { facts, stats, magic_fired, hidden })
}

/// Reference evaluation: naive iteration per stratum, no rewrites, no
/// faults. Reports every relation.
pub fn evaluate_naive(program: &Program, edb: &FactStore) -> Result<FactStore, EngineError> {
    evaluate_naive_with(program, edb, &Limits::default()).map(|(f, _)| f)
}

pub fn evaluate_naive_with(
    program: &Program,
    edb: &FactStore,
    limits: &Limits,
) -> Result<(FactStore, EvalStats), EngineError> {
    program.validate()?;
    Run { program, edb, limits, seminaive: false, sibling_delta_loss: false, subsumption: SubsumptionMode::Pairwise }
        .execute()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SubsumptionMode {
    Pairwise,
    Partitioned,
    Skip,
}

struct Run<'a> {
    program: &'a Program,
    edb: &'a FactStore,
    limits: &'a Limits,
    seminaive: bool,
    sibling_delta_loss: bool,
    subsumption: SubsumptionMode,
}

impl Run<'_> {
    fn execute(&self) -> Result<(FactStore, EvalStats), EngineError> {
        let levels = deps::relation_levels(self.program, self.edb)?;
        let mut base = self.program.facts.clone();
        base.union_with(self.edb);
        let mut db = Db::from_store(&base);
        let mut stats = EvalStats::default();
        let mut budget = Budget { work: 0, max_work: self.limits.max_work };

        let mut rules: Vec<_> = self.program.rules.iter().collect();
        rules.sort_by_key(|r| r.id);
        for level in &levels {
            let compiled: Vec<CompiledRule> =
                rules.iter().filter(|r| level.contains(&r.head.relation)).map(|r| CompiledRule::compile(r)).collect();
            if !compiled.is_empty() {
                let mut ctx = StratumCtx {
                    rules: &compiled,
                    relations: level,
                    limits: self.limits,
                    budget: &mut budget,
                    stats: &mut stats,
                };
                if self.seminaive {
                    fixpoint::seminaive(&mut db, &mut ctx, self.sibling_delta_loss)?;
                } else {
                    fixpoint::naive(&mut db, &mut ctx)?;
                }
            }
            if self.subsumption != SubsumptionMode::Skip {
                for rel in level {
                    for sub in self.program.subsumptions_of(rel) {
                        let current = db.relation(rel).map(|r| r.to_set()).unwrap_or_default();
                        let kept = match self.subsumption {
                            SubsumptionMode::Partitioned => subsume::apply_subsumption_partitioned(&current, sub)?,
                            _ => subsume::apply_subsumption(&current, sub)?,
                        };
                        db.relation_mut(rel).replace(kept);
                    }
                }
            }
        }
        stats.work = budget.work;

        let mut facts = db.into_store();
        for level in &levels {
            for rel in level {
                facts.ensure(rel);
            }
        }
        Ok((facts, stats))
    }
}

#[cfg(test)]
mod tests;
