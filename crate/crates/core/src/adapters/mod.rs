//! Dialect rendering, engine invocation and result classification.

mod catalog;
mod dialect;
mod embedded;
mod external;
mod validate;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{CatalogEntry, SemanticCatalog};
pub use dialect::{
    fact_file, parse_embedded, render_program, Dialect, DialectFeatures, FactChannel, RenderError, RenderedCase,
};
pub use embedded::{EmbeddedConfig, EmbeddedEngine};
pub use external::{invoke_engine, parse_facts, EngineSpec, ExternalEngine, Invocation, KeepPolicy, WorkdirPolicy};
pub use validate::{validate_text, SyntaxError};

use crate::ir::{parse_program, FactStore, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reference,
    Optimized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunOutcome {
    Facts { facts: FactStore },
    SemanticError { message: String, matched: Option<String> },
    Crash { detail: String },
    Timeout { after_ms: u64 },
    ParseFailure { detail: String },
}

impl RunOutcome {
    pub fn facts(&self) -> Option<&FactStore> {
        match self {
            RunOutcome::Facts { facts } => Some(facts),
            _ => None,
        }
    }

    /// Catalogued semantic error code, if this is one.
    pub fn expected_error(&self) -> Option<&str> {
        match self {
            RunOutcome::SemanticError { matched: Some(code), .. } => Some(code),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunOutcome::Facts { .. } => "facts",
            RunOutcome::SemanticError { .. } => "semantic_error",
            RunOutcome::Crash { .. } => "crash",
            RunOutcome::Timeout { .. } => "timeout",
            RunOutcome::ParseFailure { .. } => "parse_failure",
        }
    }
}

/// One engine execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineRun {
    pub outcome: RunOutcome,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    /// Embedded engine: join work units, deterministic. External engines:
    /// wall-clock microseconds.
    pub cost: u64,
    /// Retained run directory of an external engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("cannot start `{executable}`: {source}")]
    Spawn { executable: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An engine under test. `program` carries its input facts and outputs;
/// the result holds the output relations only.
pub trait EngineAdapter: Send + Sync {
    fn dialect(&self) -> Dialect;

    fn features(&self) -> DialectFeatures {
        self.dialect().features()
    }

    /// Everything needed to rebuild this adapter.
    fn config(&self) -> EngineConfig;

    fn execute(&self, program: &Program, role: Role) -> Result<EngineRun, AdapterError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EngineConfig {
    Embedded(EmbeddedConfig),
    External(EngineSpec),
}

impl EngineConfig {
    pub fn build(&self) -> Result<Box<dyn EngineAdapter>, AdapterError> {
        Ok(match self {
            EngineConfig::Embedded(c) => Box::new(EmbeddedEngine::new(c.clone())),
            EngineConfig::External(s) => Box::new(ExternalEngine::new(s.clone())?),
        })
    }
}

/// Result of running one deliberately failing program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub probe: String,
    pub outcome: RunOutcome,
}

const PROBES: [(&str, &str); 2] = [
    ("mod_zero", ".decl a(x:number) .decl b(x:number) a(3). b(X%0):-a(X). .output b"),
    ("div_zero", ".decl a(x:number) .decl b(x:number) a(3). b(X/0):-a(X). .output b"),
];

/// Run the deliberate-error programs an engine can express, so that its
/// messages can be added to a catalog.
pub fn probe(engine: &dyn EngineAdapter) -> Result<Vec<ProbeResult>, AdapterError> {
    if !engine.features().supports_arithmetic {
        return Ok(Vec::new());
    }
    PROBES
        .iter()
        .map(|(name, src)| {
            let program = parse_program(src).expect("probe parses");
            let run = engine.execute(&program, Role::Reference)?;
            Ok(ProbeResult { probe: name.to_string(), outcome: run.outcome })
        })
        .collect()
}
