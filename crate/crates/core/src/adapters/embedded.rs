use serde::{Deserialize, Serialize};

use super::catalog::SemanticCatalog;
use super::dialect::{Dialect, DialectFeatures};
use super::{AdapterError, EngineAdapter, EngineConfig, EngineRun, Role, RunOutcome};
use crate::engine::{evaluate_detailed, Limits, OptConfig};
use crate::ir::{FactStore, Program};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedConfig {
    #[serde(default)]
    pub opt: OptConfig,
    #[serde(default)]
    pub limits: Limits,
    /// Reference runs switch the optimization passes off; injected bugs
    /// stay live.
    #[serde(default)]
    pub strip_annotations: bool,
}

/// In-process adapter over the embedded engine. Reference and optimized
/// programs run through the same evaluator and configuration.
pub struct EmbeddedEngine {
    config: EmbeddedConfig,
    catalog: SemanticCatalog,
}

impl EmbeddedEngine {
    pub fn new(config: EmbeddedConfig) -> EmbeddedEngine {
        EmbeddedEngine { config, catalog: SemanticCatalog::builtin("embedded").expect("embedded catalog") }
    }

    pub fn with_opt(opt: OptConfig) -> EmbeddedEngine {
        EmbeddedEngine::new(EmbeddedConfig { opt, ..EmbeddedConfig::default() })
    }
}

impl EngineAdapter for EmbeddedEngine {
    fn dialect(&self) -> Dialect {
        Dialect::Embedded
    }

    fn features(&self) -> DialectFeatures {
        Dialect::Embedded.features()
    }

    fn config(&self) -> EngineConfig {
        EngineConfig::Embedded(self.config.clone())
    }

    fn execute(&self, program: &Program, role: Role) -> Result<EngineRun, AdapterError> {
        let opt = match role {
            Role::Reference if self.config.strip_annotations => self.config.opt.stripped(),
            _ => self.config.opt.clone(),
        };
        let run = match evaluate_detailed(program, &FactStore::new(), &opt, &self.config.limits) {
            Ok(ev) => {
                let mut facts = FactStore::new();
                for rel in &program.outputs {
                    facts.set_relation(rel, ev.facts.relation(rel).cloned().unwrap_or_default());
                }
                EngineRun {
                    outcome: RunOutcome::Facts { facts },
                    stdout: String::new(),
                    stderr: String::new(),
                    cost: ev.stats.work + 1,
                    workdir: None,
                }
            }
            Err(e) => {
                let message = e.to_string();
                let matched = self.catalog.classify(Some(e.code()), &message);
                EngineRun {
                    outcome: RunOutcome::SemanticError { message: message.clone(), matched },
                    stdout: String::new(),
                    stderr: message,
                    cost: 1,
                    workdir: None,
                }
            }
        };
        Ok(run)
    }
}
