use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AdapterError;

/// Error messages an engine is expected to produce for invalid programs.
/// A candidate rule hitting one of these is discarded, not reported.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticCatalog {
    #[serde(default, rename = "entry")]
    pub entries: Vec<CatalogEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub code: String,
    /// Case-insensitive substring of the engine's message.
    pub pattern: String,
}

const BUILTIN: [(&str, &str); 4] = [
    ("embedded", include_str!("../../data/catalogs/embedded.toml")),
    ("souffle", include_str!("../../data/catalogs/souffle.toml")),
    ("cozo", include_str!("../../data/catalogs/cozo.toml")),
    ("muz", include_str!("../../data/catalogs/muz.toml")),
];

impl SemanticCatalog {
    pub fn builtin(name: &str) -> Option<SemanticCatalog> {
        BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, text)| toml::from_str(text).expect("builtin catalog parses"))
    }

    /// A builtin name or a path to a TOML file.
    pub fn load(name_or_path: &str) -> Result<SemanticCatalog, AdapterError> {
        if let Some(c) = Self::builtin(name_or_path) {
            return Ok(c);
        }
        let text = std::fs::read_to_string(Path::new(name_or_path))
            .map_err(|e| AdapterError::Config(format!("catalog {name_or_path}: {e}")))?;
        toml::from_str(&text).map_err(|e| AdapterError::Config(format!("catalog {name_or_path}: {e}")))
    }

    /// The code of the first entry whose code equals `code` or whose
    /// pattern occurs in `message`.
    pub fn classify(&self, code: Option<&str>, message: &str) -> Option<String> {
        let lower = message.to_lowercase();
        self.entries
            .iter()
            .find(|e| code == Some(e.code.as_str()) || lower.contains(&e.pattern.to_lowercase()))
            .map(|e| e.code.clone())
    }

    pub fn add(&mut self, code: &str, pattern: &str) -> bool {
        if self.entries.iter().any(|e| e.code == code && e.pattern == pattern) {
            return false;
        }
        self.entries.push(CatalogEntry { code: code.to_string(), pattern: pattern.to_string() });
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_match() {
        for (name, _) in BUILTIN {
            assert!(!SemanticCatalog::builtin(name).unwrap().entries.is_empty());
        }
        let c = SemanticCatalog::builtin("souffle").unwrap();
        assert_eq!(c.classify(None, "Error: Unable to stratify relation(s) {a,b}"), Some("unstratifiable".into()));
        assert_eq!(c.classify(None, "segfault"), None);
        let e = SemanticCatalog::builtin("embedded").unwrap();
        assert_eq!(e.classify(Some("mod_zero"), ""), Some("mod_zero".into()));
        assert_eq!(e.classify(Some("invalid_program"), "invalid program: x"), None);
    }
}
