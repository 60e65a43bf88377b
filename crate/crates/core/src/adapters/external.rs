use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::catalog::SemanticCatalog;
use super::dialect::{render_program, Dialect, RenderedCase};
use super::{AdapterError, EngineAdapter, EngineConfig, EngineRun, Role, RunOutcome};
use crate::ir::{FactStore, Program, Tuple, Value, ValueKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepPolicy {
    Never,
    #[default]
    OnFailure,
    Always,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkdirPolicy {
    /// Parent of the per-run directories; the system temp dir when unset.
    #[serde(default)]
    pub root: Option<PathBuf>,
    #[serde(default)]
    pub keep: KeepPolicy,
}

/// How to run an external engine. Argument templates may use `{program}`,
/// `{factdir}`, `{outdir}` and `{workdir}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    #[serde(default)]
    pub name: String,
    pub dialect: Dialect,
    pub executable: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Builtin catalog name or path; defaults to the dialect's builtin.
    #[serde(default)]
    pub catalog: Option<String>,
    /// Arguments dropped from reference runs when stripping; a trailing
    /// `*` matches by prefix.
    #[serde(default)]
    pub strip_options: Vec<String>,
    #[serde(default)]
    pub strip_annotations: bool,
    #[serde(default)]
    pub workdir: WorkdirPolicy,
}

fn default_timeout() -> f64 {
    30.0
}

impl EngineSpec {
    /// TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<EngineSpec, AdapterError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| AdapterError::Config(format!("{}: {e}", path.display())))?;
        let spec: EngineSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| AdapterError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| AdapterError::Config(format!("{}: {e}", path.display())))?
        };
        if spec.dialect == Dialect::Embedded {
            return Err(AdapterError::Config("the embedded dialect runs in-process".into()));
        }
        if spec.timeout_s.is_nan() || spec.timeout_s <= 0.0 {
            return Err(AdapterError::Config(format!("timeout_s must be positive, got {}", spec.timeout_s)));
        }
        Ok(spec)
    }

    pub fn catalog(&self) -> Result<SemanticCatalog, AdapterError> {
        let default = match self.dialect {
            Dialect::SouffleLike => "souffle",
            Dialect::CozoLike => "cozo",
            Dialect::MuZLike => "muz",
            Dialect::Embedded => "embedded",
        };
        SemanticCatalog::load(self.catalog.as_deref().unwrap_or(default))
    }

    fn arguments(&self, dir: &Path, role: Role) -> Vec<String> {
        let strip = role == Role::Reference && self.strip_annotations;
        self.args
            .iter()
            .filter(|a| {
                !strip
                    || !self.strip_options.iter().any(|o| match o.strip_suffix('*') {
                        Some(prefix) => a.starts_with(prefix),
                        None => *a == o,
                    })
            })
            .map(|a| {
                a.replace("{program}", &dir.join("program.dl").to_string_lossy())
                    .replace("{factdir}", &dir.join("facts").to_string_lossy())
                    .replace("{outdir}", &dir.join("out").to_string_lossy())
                    .replace("{workdir}", &dir.to_string_lossy())
            })
            .collect()
    }
}

/// Raw result of one subprocess run.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub outcome: RunOutcome,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

const CRASH_MARKERS: [&str; 5] = ["panicked", "segmentation fault", "assertion", "core dumped", "internal error"];

/// Write `case` into the empty directory `workdir`, run the engine with a
/// wall-clock timeout and classify what happened.
pub fn invoke_engine(
    spec: &EngineSpec,
    program: &Program,
    case: &RenderedCase,
    workdir: &Path,
    role: Role,
    catalog: &SemanticCatalog,
) -> Result<Invocation, AdapterError> {
    std::fs::create_dir_all(workdir)?;
    if std::fs::read_dir(workdir)?.next().is_some() {
        return Err(AdapterError::Config(format!("workdir {} is not empty", workdir.display())));
    }
    case.write_to(workdir)?;
    let stdout_path = workdir.join("stdout.txt");
    let stderr_path = workdir.join("stderr.txt");
    let started = Instant::now();
    let mut child = Command::new(&spec.executable)
        .args(spec.arguments(workdir, role))
        .current_dir(workdir)
        .stdin(Stdio::null())
        .stdout(File::create(&stdout_path)?)
        .stderr(File::create(&stderr_path)?)
        .spawn()
        .map_err(|source| AdapterError::Spawn { executable: spec.executable.clone(), source })?;
    let status = child.wait_timeout(Duration::from_secs_f64(spec.timeout_s))?;
    let elapsed = started.elapsed();
    let read = |p: &Path| std::fs::read(p).map(|b| String::from_utf8_lossy(&b).into_owned()).unwrap_or_default();
    let Some(status) = status else {
        let _ = child.kill();
        let _ = child.wait();
        return Ok(Invocation {
            outcome: RunOutcome::Timeout { after_ms: elapsed.as_millis() as u64 },
            stdout: read(&stdout_path),
            stderr: read(&stderr_path),
            elapsed,
        });
    };
    let stdout = read(&stdout_path);
    let stderr = read(&stderr_path);
    let message = format!("{stderr}{stdout}");
    let outcome = match status.code() {
        None => RunOutcome::Crash { detail: format!("terminated by signal ({status})") },
        Some(0) => match catalog.classify(None, &stderr).or_else(|| json_error(spec.dialect, &stdout, catalog)) {
            Some(code) => RunOutcome::SemanticError { message, matched: Some(code) },
            None => match parse_facts(spec.dialect, program, &stdout, &workdir.join("out")) {
                Ok(facts) => RunOutcome::Facts { facts },
                Err(detail) => RunOutcome::ParseFailure { detail },
            },
        },
        Some(code) => match catalog.classify(None, &message) {
            Some(matched) => RunOutcome::SemanticError { message, matched: Some(matched) },
            None if code >= 128 || CRASH_MARKERS.iter().any(|m| message.to_lowercase().contains(m)) => {
                RunOutcome::Crash { detail: format!("exit code {code}") }
            }
            None => RunOutcome::SemanticError { message, matched: None },
        },
    };
    Ok(Invocation { outcome, stdout, stderr, elapsed })
}

/// Engines that report errors as a JSON document with `"ok": false`.
fn json_error(dialect: Dialect, stdout: &str, catalog: &SemanticCatalog) -> Option<String> {
    if dialect != Dialect::CozoLike {
        return None;
    }
    let doc: serde_json::Value = serde_json::from_str(stdout.trim()).ok()?;
    if doc.get("ok") == Some(&serde_json::Value::Bool(false)) {
        let msg = doc.get("message").or_else(|| doc.get("display")).map(|m| m.to_string()).unwrap_or_default();
        return Some(catalog.classify(None, &msg).unwrap_or_else(|| "unclassified".to_string()));
    }
    None
}

/// Parse the output relations of `program` from an engine's result.
///
/// Soufflé-like engines write `<outdir>/<relation>.csv`, tab separated.
/// Cozo-like engines print a JSON document with a `rows` array. µZ-like
/// engines print `Tuples in <relation>:` sections with one parenthesized
/// tuple per line; every integer after `=` is taken as a column value, a
/// best-effort reading since the format varies across versions.
pub fn parse_facts(dialect: Dialect, program: &Program, stdout: &str, outdir: &Path) -> Result<FactStore, String> {
    let mut out = FactStore::new();
    for rel in &program.outputs {
        let kinds = program.decl(rel).ok_or_else(|| format!("output `{rel}` is not declared"))?.kinds();
        out.ensure(rel);
        let rows: Vec<Vec<String>> = match dialect {
            Dialect::SouffleLike => {
                let path = outdir.join(format!("{rel}.csv"));
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                text.lines()
                    .filter(|l| !l.is_empty())
                    .map(|l| if kinds.is_empty() { Vec::new() } else { l.split('\t').map(str::to_string).collect() })
                    .collect()
            }
            Dialect::CozoLike => cozo_rows(stdout)?,
            Dialect::MuZLike => muz_rows(stdout, rel),
            Dialect::Embedded => return Err("the embedded dialect has no textual result".into()),
        };
        for row in rows {
            out.insert(rel, typed_row(&row, &kinds)?);
        }
    }
    Ok(out)
}

fn typed_row(row: &[String], kinds: &[ValueKind]) -> Result<Tuple, String> {
    if row.len() != kinds.len() {
        return Err(format!("expected {} columns, found {}: {row:?}", kinds.len(), row.len()));
    }
    row.iter()
        .zip(kinds)
        .map(|(tok, k)| Value::parse_token(tok, *k).ok_or_else(|| format!("cannot read `{tok}` as {k}")))
        .collect()
}

fn cozo_rows(stdout: &str) -> Result<Vec<Vec<String>>, String> {
    let doc: serde_json::Value = serde_json::from_str(stdout.trim()).map_err(|e| format!("result is not JSON: {e}"))?;
    let rows = doc.get("rows").and_then(|r| r.as_array()).ok_or("result has no `rows` array")?;
    rows.iter()
        .map(|row| {
            let cols = row.as_array().ok_or("row is not an array")?;
            Ok(cols
                .iter()
                .map(|c| match c {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect())
        })
        .collect()
}

fn muz_rows(stdout: &str, rel: &str) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut inside = false;
    for line in stdout.lines() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix("Tuples in ") {
            inside = name.trim_end_matches(':').trim() == rel;
            continue;
        }
        if !inside || !t.starts_with('(') {
            continue;
        }
        let body = t.trim_start_matches('(').trim_end_matches(')');
        let row = body
            .split(',')
            .filter_map(|field| {
                let v = field.split_once('=').map_or(field, |(_, v)| v).trim();
                let digits: String = v.chars().take_while(|c| c.is_ascii_digit() || *c == '-').collect();
                (!digits.is_empty()).then_some(digits)
            })
            .collect();
        rows.push(row);
    }
    rows
}

/// Adapter over an external executable.
pub struct ExternalEngine {
    spec: EngineSpec,
    catalog: SemanticCatalog,
    root: PathBuf,
    counter: AtomicU64,
}

impl ExternalEngine {
    pub fn new(spec: EngineSpec) -> Result<ExternalEngine, AdapterError> {
        let catalog = spec.catalog()?;
        let root = match &spec.workdir.root {
            Some(r) => r.clone(),
            None => std::env::temp_dir().join(format!("deopt-{}", std::process::id())),
        };
        std::fs::create_dir_all(&root)?;
        Ok(ExternalEngine { spec, catalog, root, counter: AtomicU64::new(0) })
    }

    fn fresh_dir(&self) -> PathBuf {
        loop {
            let n = self.counter.fetch_add(1, Ordering::Relaxed);
            let dir = self.root.join(format!("run-{n:06}"));
            if !dir.exists() {
                return dir;
            }
        }
    }
}

impl EngineAdapter for ExternalEngine {
    fn dialect(&self) -> Dialect {
        self.spec.dialect
    }

    fn config(&self) -> EngineConfig {
        EngineConfig::External(self.spec.clone())
    }

    fn execute(&self, program: &Program, role: Role) -> Result<EngineRun, AdapterError> {
        let case = render_program(program, self.spec.dialect, role, self.spec.strip_annotations)?;
        let dir = self.fresh_dir();
        let inv = invoke_engine(&self.spec, program, &case, &dir, role, &self.catalog)?;
        let keep = match self.spec.workdir.keep {
            KeepPolicy::Never => false,
            KeepPolicy::Always => true,
            KeepPolicy::OnFailure => !matches!(inv.outcome, RunOutcome::Facts { .. }),
        };
        if !keep {
            let _ = std::fs::remove_dir_all(&dir);
        }
        Ok(EngineRun {
            outcome: inv.outcome,
            stdout: inv.stdout,
            stderr: inv.stderr,
            cost: inv.elapsed.as_micros() as u64,
            workdir: keep.then_some(dir),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn program() -> Program {
        parse_program(".decl a(x:number, y:float) .decl b(x:number, y:float) a(18, -0.0). b(X,Y):-a(X,Y). .output b")
            .unwrap()
    }

    fn spec(script: &str) -> EngineSpec {
        EngineSpec {
            name: "sh".into(),
            dialect: Dialect::SouffleLike,
            executable: "sh".into(),
            args: vec!["-c".into(), script.into(), "engine".into(), "{factdir}".into(), "{outdir}".into()],
            timeout_s: 2.0,
            catalog: None,
            strip_options: Vec::new(),
            strip_annotations: false,
            workdir: WorkdirPolicy::default(),
        }
    }

    fn run(script: &str) -> Invocation {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(script);
        let p = program();
        let case = render_program(&p, s.dialect, Role::Optimized, false).unwrap();
        invoke_engine(&s, &p, &case, &dir.path().join("case"), Role::Optimized, &s.catalog().unwrap()).unwrap()
    }

    #[test]
    fn copies_facts_through_files() {
        let inv = run(r#"cp "$1/a.facts" "$2/b.csv""#);
        let RunOutcome::Facts { facts } = inv.outcome else { panic!("{:?}", inv.outcome) };
        let t = facts.tuples("b").next().unwrap();
        assert_eq!(t[0], Value::Number(18));
        assert!(matches!(t[1], Value::Float(x) if x == 0.0 && x.is_sign_negative()));
    }

    #[test]
    fn timeout_is_a_hang() {
        let inv = run("sleep 10");
        assert!(matches!(inv.outcome, RunOutcome::Timeout { .. }));
        assert!(inv.elapsed < Duration::from_secs(8));
    }

    #[test]
    fn catalog_message_is_an_expected_error() {
        let inv = run("echo 'Error: division by zero in rule' >&2; exit 1");
        assert!(matches!(inv.outcome, RunOutcome::SemanticError { matched: Some(ref c), .. } if c == "div_zero"));
    }

    #[test]
    fn unknown_error_is_unmatched() {
        let inv = run("echo 'weird failure' >&2; exit 1");
        assert!(matches!(inv.outcome, RunOutcome::SemanticError { matched: None, .. }));
    }

    #[test]
    fn signals_and_panics_are_crashes() {
        assert!(matches!(run("kill -9 $$").outcome, RunOutcome::Crash { .. }));
        assert!(matches!(run("echo 'thread main panicked' >&2; exit 101").outcome, RunOutcome::Crash { .. }));
    }

    #[test]
    fn missing_output_is_a_parse_failure() {
        assert!(matches!(run("true").outcome, RunOutcome::ParseFailure { .. }));
    }

    #[test]
    fn empty_output_file_is_empty_relation() {
        let inv = run(r#": > "$2/b.csv""#);
        let RunOutcome::Facts { facts } = inv.outcome else { panic!() };
        assert_eq!(facts.relation("b").map(|s| s.len()), Some(0));
    }

    #[test]
    fn spawn_failure_is_a_configuration_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec("true");
        s.executable = "/nonexistent/engine".into();
        let p = program();
        let case = render_program(&p, s.dialect, Role::Optimized, false).unwrap();
        let r = invoke_engine(&s, &p, &case, dir.path(), Role::Optimized, &SemanticCatalog::default());
        assert!(matches!(r, Err(AdapterError::Spawn { .. })));
    }

    #[test]
    fn strip_options_only_affect_stripped_references() {
        let mut s = spec("true");
        s.args = vec!["--magic-transform=*".into(), "-j4".into(), "{program}".into()];
        s.strip_options = vec!["--magic-transform*".into()];
        let dir = Path::new("/w");
        assert_eq!(s.arguments(dir, Role::Reference).len(), 3);
        s.strip_annotations = true;
        assert_eq!(s.arguments(dir, Role::Reference), vec!["-j4".to_string(), "/w/program.dl".to_string()]);
        assert_eq!(s.arguments(dir, Role::Optimized).len(), 3);
    }

    #[test]
    fn muz_and_cozo_results_parse() {
        let p = parse_program(".decl f(a:number, b:number) .output f").unwrap();
        let muz = "Tuples in g:\n (A=9(9), B=9(9))\nTuples in f: \n (A=29(29), B=1(1))\n (A=80(80), B=2(2))\n";
        let facts = parse_facts(Dialect::MuZLike, &p, muz, Path::new("/nonexistent")).unwrap();
        assert_eq!(facts.count("f"), 2);
        let cozo = r#"{"headers":["x0","x1"],"rows":[[1,2],[3,4]],"ok":true}"#;
        let facts = parse_facts(Dialect::CozoLike, &p, cozo, Path::new("/nonexistent")).unwrap();
        assert!(facts.contains("f", &vec![Value::Number(3), Value::Number(4)]));
    }
}
