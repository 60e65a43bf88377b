use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{
    float_literal, write_term, Annotation, Atom, CmpOp, Literal, Program, Rule, Term, TermStyle, Value, ValueKind,
};

use super::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    #[serde(alias = "souffle")]
    SouffleLike,
    #[serde(alias = "cozo")]
    CozoLike,
    #[serde(alias = "muz")]
    MuZLike,
    Embedded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactChannel {
    Inline,
    Files,
}

/// What a dialect can express; the generator stays inside this set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialectFeatures {
    pub supports_negation_in_recursion: bool,
    pub supports_subsumption: bool,
    pub requires_decls: bool,
    pub fact_channel: FactChannel,
    pub supports_arithmetic: bool,
    pub supports_wildcard_in_negation: bool,
    pub kinds: Vec<ValueKind>,
    pub comparisons: Vec<CmpOp>,
    /// A program may have several output relations.
    pub multiple_outputs: bool,
}

const ALL_CMP: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne];

impl Dialect {
    pub const ALL: [Dialect; 4] = [Dialect::SouffleLike, Dialect::CozoLike, Dialect::MuZLike, Dialect::Embedded];

    pub fn name(self) -> &'static str {
        match self {
            Dialect::SouffleLike => "souffle_like",
            Dialect::CozoLike => "cozo_like",
            Dialect::MuZLike => "mu_z_like",
            Dialect::Embedded => "embedded",
        }
    }

    pub fn features(self) -> DialectFeatures {
        match self {
            Dialect::SouffleLike => DialectFeatures {
                supports_negation_in_recursion: false,
                supports_subsumption: true,
                requires_decls: true,
                fact_channel: FactChannel::Files,
                supports_arithmetic: true,
                supports_wildcard_in_negation: true,
                kinds: ValueKind::ALL.to_vec(),
                comparisons: ALL_CMP.to_vec(),
                multiple_outputs: true,
            },
            Dialect::CozoLike => DialectFeatures {
                supports_negation_in_recursion: false,
                supports_subsumption: false,
                requires_decls: false,
                fact_channel: FactChannel::Inline,
                supports_arithmetic: true,
                supports_wildcard_in_negation: true,
                kinds: vec![ValueKind::Number, ValueKind::Float, ValueKind::Symbol],
                comparisons: ALL_CMP.to_vec(),
                multiple_outputs: false,
            },
            Dialect::MuZLike => DialectFeatures {
                supports_negation_in_recursion: true,
                supports_subsumption: false,
                requires_decls: true,
                fact_channel: FactChannel::Inline,
                supports_arithmetic: false,
                supports_wildcard_in_negation: true,
                kinds: vec![ValueKind::Number],
                comparisons: ALL_CMP.to_vec(),
                multiple_outputs: true,
            },
            Dialect::Embedded => DialectFeatures {
                supports_negation_in_recursion: false,
                supports_subsumption: true,
                requires_decls: true,
                fact_channel: FactChannel::Inline,
                supports_arithmetic: true,
                supports_wildcard_in_negation: true,
                kinds: ValueKind::ALL.to_vec(),
                comparisons: ALL_CMP.to_vec(),
                multiple_outputs: true,
            },
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("{dialect} cannot express {what}")]
    Unsupported { dialect: Dialect, what: String },
}

/// Everything an engine needs for one run: the program text plus one
/// tab-separated file per input relation when facts travel as files.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedCase {
    pub program: String,
    pub fact_files: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RenderedCase {
    pub fn write_to(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.join("facts"))?;
        std::fs::create_dir_all(dir.join("out"))?;
        std::fs::write(dir.join("program.dl"), &self.program)?;
        for (rel, body) in &self.fact_files {
            std::fs::write(dir.join("facts").join(format!("{rel}.facts")), body)?;
        }
        Ok(())
    }
}

/// One line per tuple, columns separated by tabs.
pub fn fact_file(tuples: impl IntoIterator<Item = impl AsRef<[Value]>>) -> String {
    let mut out = String::new();
    for t in tuples {
        let cols: Vec<String> = t.as_ref().iter().map(Value::to_fact_token).collect();
        out.push_str(&cols.join("\t"));
        out.push('\n');
    }
    out
}

/// Render `program` for `dialect`. Reference programs never carry
/// `inline` for the Soufflé-like dialect; with `strip_annotations` they
/// carry no optimization annotation at all.
pub fn render_program(
    program: &Program,
    dialect: Dialect,
    role: Role,
    strip_annotations: bool,
) -> Result<RenderedCase, RenderError> {
    check_supported(program, dialect)?;
    let keep = |ann: Annotation| match role {
        Role::Optimized => true,
        Role::Reference => !strip_annotations && !(dialect == Dialect::SouffleLike && ann == Annotation::Inline),
    };
    let case = match dialect {
        Dialect::SouffleLike => render_souffle(program, &keep),
        Dialect::CozoLike => render_cozo(program),
        Dialect::MuZLike => render_muz(program),
        Dialect::Embedded => {
            let mut p = program.clone();
            for d in &mut p.decls {
                d.annotations.retain(|a| keep(*a));
            }
            RenderedCase {
                program: serde_json::to_string_pretty(&p).expect("program serializes"),
                fact_files: BTreeMap::new(),
                outputs: p.outputs.clone(),
            }
        }
    };
    Ok(case)
}

fn unsupported(dialect: Dialect, what: impl Into<String>) -> RenderError {
    RenderError::Unsupported { dialect, what: what.into() }
}

fn check_supported(program: &Program, dialect: Dialect) -> Result<(), RenderError> {
    let f = dialect.features();
    if !f.supports_subsumption && !program.subsumptions.is_empty() {
        return Err(unsupported(dialect, "subsumption"));
    }
    if !f.multiple_outputs && program.outputs.len() > 1 {
        return Err(unsupported(dialect, "several output relations"));
    }
    for d in &program.decls {
        if let Some(k) = d.kinds().into_iter().find(|k| !f.kinds.contains(k)) {
            return Err(unsupported(dialect, format!("{k} attributes")));
        }
    }
    let mut consts = Vec::new();
    for r in &program.rules {
        let mut terms: Vec<&Term> = r.head.args.iter().collect();
        for lit in &r.body {
            match lit {
                Literal::Positive(a) | Literal::Negative(a) => terms.extend(&a.args),
                Literal::Constraint(c) => {
                    if !f.comparisons.contains(&c.op) {
                        return Err(unsupported(dialect, format!("comparison {}", c.op.symbol())));
                    }
                    terms.push(&c.lhs);
                    terms.push(&c.rhs);
                }
            }
        }
        for t in terms {
            if t.is_arith() && !f.supports_arithmetic {
                return Err(unsupported(dialect, "arithmetic"));
            }
            collect_consts(t, &mut consts);
        }
    }
    for (_, tuples) in program.facts.iter() {
        for t in tuples {
            consts.extend(t.iter().cloned());
        }
    }
    for c in consts {
        match c {
            Value::Float(x) if !x.is_finite() && dialect != Dialect::Embedded => {
                return Err(unsupported(dialect, "non-finite floats"));
            }
            Value::Number(n) if n < 0 && dialect == Dialect::MuZLike => {
                return Err(unsupported(dialect, "negative numbers"));
            }
            _ => {}
        }
    }
    Ok(())
}

fn collect_consts(t: &Term, out: &mut Vec<Value>) {
    match t {
        Term::Const(v) => out.push(v.clone()),
        Term::Unary(_, inner) => collect_consts(inner, out),
        Term::Binary(_, l, r) => {
            collect_consts(l, out);
            collect_consts(r, out);
        }
        Term::Var(_) | Term::Wildcard => {}
    }
}

fn quote_symbol(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

struct SouffleStyle;

impl TermStyle for SouffleStyle {
    fn constant(&self, v: &Value) -> String {
        match v {
            Value::Number(n) => n.to_string(),
            Value::Unsigned(n) => n.to_string(),
            Value::Float(x) => float_literal(*x),
            Value::Symbol(s) => quote_symbol(s),
        }
    }
}

struct CozoStyle;

impl TermStyle for CozoStyle {
    fn constant(&self, v: &Value) -> String {
        SouffleStyle.constant(v)
    }
}

fn term_text(t: &Term, style: &dyn TermStyle) -> String {
    let mut s = String::new();
    write_term(&mut s, t, style).expect("write to string");
    s
}

fn args_text(args: &[Term], style: &dyn TermStyle) -> String {
    args.iter().map(|t| term_text(t, style)).collect::<Vec<_>>().join(", ")
}

/// Period-terminated `head :- body.` rules shared by the Soufflé-like and
/// µZ-like dialects.
fn classic_rule(rule: &Rule, style: &dyn TermStyle) -> String {
    let atom = |a: &Atom| format!("{}({})", a.relation, args_text(&a.args, style));
    let body: Vec<String> = rule
        .body
        .iter()
        .map(|lit| match lit {
            Literal::Positive(a) => atom(a),
            Literal::Negative(a) => format!("!{}", atom(a)),
            Literal::Constraint(c) => {
                format!("{} {} {}", term_text(&c.lhs, style), c.op.symbol(), term_text(&c.rhs, style))
            }
        })
        .collect();
    format!("{} :- {}.", atom(&rule.head), body.join(", "))
}

fn render_souffle(program: &Program, keep: &dyn Fn(Annotation) -> bool) -> RenderedCase {
    let mut text = String::new();
    for d in &program.decls {
        let attrs: Vec<String> = d.attrs.iter().map(|a| format!("{}:{}", a.name, a.kind)).collect();
        let _ = write!(text, ".decl {}({})", d.name, attrs.join(", "));
        for ann in d.annotations.iter().filter(|a| keep(**a)) {
            let _ = write!(text, " {}", ann.keyword());
        }
        text.push('\n');
    }
    let mut fact_files = BTreeMap::new();
    for (rel, tuples) in program.facts.iter() {
        let _ = writeln!(text, ".input {rel}");
        fact_files.insert(rel.to_string(), fact_file(tuples));
    }
    for o in &program.outputs {
        let _ = writeln!(text, ".output {o}");
    }
    for r in &program.rules {
        text.push_str(&classic_rule(r, &SouffleStyle));
        text.push('\n');
    }
    for s in &program.subsumptions {
        let pat = |ts: &[Term]| format!("{}({})", s.relation, args_text(ts, &SouffleStyle));
        let _ = write!(text, "{} <= {}", pat(&s.dominated), pat(&s.dominating));
        if !s.condition.is_empty() {
            let conds: Vec<String> = s
                .condition
                .iter()
                .map(|c| {
                    format!(
                        "{} {} {}",
                        term_text(&c.lhs, &SouffleStyle),
                        c.op.symbol(),
                        term_text(&c.rhs, &SouffleStyle)
                    )
                })
                .collect();
            let _ = write!(text, " :- {}", conds.join(", "));
        }
        text.push_str(".\n");
    }
    RenderedCase { program: text, fact_files, outputs: program.outputs.clone() }
}

fn cozo_cmp(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq => "==",
        other => other.symbol(),
    }
}

fn column_names(arity: usize) -> Vec<String> {
    (0..arity).map(|i| format!("x{i}")).collect()
}

fn render_cozo(program: &Program) -> RenderedCase {
    let style = CozoStyle;
    let mut text = String::new();
    let arity = |rel: &str| program.decl(rel).map_or(0, |d| d.arity());
    for (rel, tuples) in program.facts.iter() {
        let rows: Vec<String> = tuples
            .iter()
            .map(|t| format!("[{}]", t.iter().map(|v| style.constant(v)).collect::<Vec<_>>().join(", ")))
            .collect();
        let _ = writeln!(text, "{rel}[{}] <- [{}]", column_names(arity(rel)).join(", "), rows.join(", "));
    }
    for r in &program.rules {
        let mut head = Vec::new();
        let mut bindings = Vec::new();
        for (i, t) in r.head.args.iter().enumerate() {
            match t {
                Term::Var(v) => head.push(v.clone()),
                other => {
                    let fresh = format!("H{i}_{}", r.id.0);
                    bindings.push(format!("{fresh} = {}", term_text(other, &style)));
                    head.push(fresh);
                }
            }
        }
        let atom = |a: &Atom| format!("{}[{}]", a.relation, args_text(&a.args, &style));
        let mut body: Vec<String> = r
            .body
            .iter()
            .map(|lit| match lit {
                Literal::Positive(a) => atom(a),
                Literal::Negative(a) => format!("not {}", atom(a)),
                Literal::Constraint(c) => {
                    format!("{} {} {}", term_text(&c.lhs, &style), cozo_cmp(c.op), term_text(&c.rhs, &style))
                }
            })
            .collect();
        body.extend(bindings);
        let _ = writeln!(text, "{}[{}] := {}", r.head.relation, head.join(", "), body.join(", "));
    }
    for o in &program.outputs {
        let cols = column_names(arity(o)).join(", ");
        let _ = writeln!(text, "?[{cols}] := {o}[{cols}]");
    }
    RenderedCase { program: text, fact_files: BTreeMap::new(), outputs: program.outputs.clone() }
}

fn render_muz(program: &Program) -> RenderedCase {
    let mut max = 1i64;
    for (_, tuples) in program.facts.iter() {
        for t in tuples {
            for v in t {
                if let Value::Number(n) = v {
                    max = max.max(*n);
                }
            }
        }
    }
    for r in &program.rules {
        let mut consts = Vec::new();
        for lit in &r.body {
            match lit {
                Literal::Positive(a) | Literal::Negative(a) => {
                    a.args.iter().for_each(|t| collect_consts(t, &mut consts))
                }
                Literal::Constraint(c) => {
                    collect_consts(&c.lhs, &mut consts);
                    collect_consts(&c.rhs, &mut consts);
                }
            }
        }
        r.head.args.iter().for_each(|t| collect_consts(t, &mut consts));
        for c in consts {
            if let Value::Number(n) = c {
                max = max.max(n);
            }
        }
    }
    let domain = (max as u64 + 1).next_power_of_two().max(64);
    let mut text = format!("Z {domain}\n");
    for d in &program.decls {
        let attrs: Vec<String> = (0..d.arity()).map(|i| format!("{}:Z", muz_attr(i))).collect();
        let _ = write!(text, "{}({})", d.name, attrs.join(", "));
        if program.is_output(&d.name) {
            text.push_str(" printtuples");
        } else if program.facts.relation(&d.name).is_some() {
            text.push_str(" input");
        }
        text.push('\n');
    }
    for (rel, tuples) in program.facts.iter() {
        for t in tuples {
            let _ = writeln!(text, "{rel}({}).", t.iter().map(Value::to_fact_token).collect::<Vec<_>>().join(", "));
        }
    }
    for r in &program.rules {
        text.push_str(&classic_rule(r, &SouffleStyle));
        text.push('\n');
    }
    RenderedCase { program: text, fact_files: BTreeMap::new(), outputs: program.outputs.clone() }
}

fn muz_attr(i: usize) -> String {
    match u8::try_from(i) {
        Ok(n) if n < 26 => char::from(b'A' + n).to_string(),
        _ => format!("A{i}"),
    }
}

/// Inverse of the embedded rendering.
pub fn parse_embedded(text: &str) -> Result<Program, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ir::parse_program;

    fn fig4_reference() -> Program {
        parse_program(
            ".decl s(x:number)
             .decl b(x:number, y:number)
             .decl t(x:number)
             s(1). s(2). b(7,1).
             t(X):-s(X),b(_,X).
             .output t",
        )
        .unwrap()
    }

    #[test]
    fn souffle_reference_text() {
        let case = render_program(&fig4_reference(), Dialect::SouffleLike, Role::Reference, false).unwrap();
        assert_eq!(
            case.program,
            ".decl s(x:number)\n.decl b(x:number, y:number)\n.decl t(x:number)\n\
             .input b\n.input s\n.output t\nt(X) :- s(X), b(_, X).\n"
        );
        assert_eq!(case.fact_files["b"], "7\t1\n");
        assert_eq!(case.fact_files["s"], "1\n2\n");
    }

    #[test]
    fn souffle_reference_drops_inline() {
        let mut p = fig4_reference();
        p.decl_mut("t").unwrap().annotations.extend([Annotation::Inline, Annotation::Magic]);
        let opt = render_program(&p, Dialect::SouffleLike, Role::Optimized, false).unwrap();
        assert!(opt.program.contains(".decl t(x:number) magic inline\n"));
        let reference = render_program(&p, Dialect::SouffleLike, Role::Reference, false).unwrap();
        assert!(reference.program.contains(".decl t(x:number) magic\n"));
        let stripped = render_program(&p, Dialect::SouffleLike, Role::Reference, true).unwrap();
        assert!(stripped.program.contains(".decl t(x:number)\n"));
    }

    #[test]
    fn negative_zero_goes_to_fact_files_as_minus_zero() {
        let reg = fixtures::negative_zero_filter();
        let case = render_program(&reg.program, Dialect::SouffleLike, Role::Optimized, false).unwrap();
        assert_eq!(case.fact_files["a"], "-0\n0\n");
        assert!(case.program.contains("A >= 0.0"));
    }

    #[test]
    fn cozo_fact_blocks_and_connector() {
        let reg = fixtures::sibling_delta();
        let case = render_program(&reg.program, Dialect::CozoLike, Role::Optimized, false).unwrap();
        let text = &case.program;
        assert!(text.contains("in[x0] <- [[0], [1]]\n"), "{text}");
        assert!(text.contains("node[A] := in[A], A == 1\n"));
        assert!(text.contains("?[x0] := result[x0]\n"));
    }

    #[test]
    fn cozo_binds_computed_head_arguments() {
        let p = parse_program(".decl b(x:number) .decl g(x:number) g(29+A*A):-b(A). .output g").unwrap();
        let case = render_program(&p, Dialect::CozoLike, Role::Optimized, false).unwrap();
        assert!(case.program.contains("g[H0_0] := b[A], H0_0 = 29+A*A\n"), "{}", case.program);
    }

    #[test]
    fn cozo_rejects_subsumption_and_unsigned() {
        let reg = fixtures::subsumption_under_demand();
        assert!(render_program(&reg.program, Dialect::CozoLike, Role::Optimized, false).is_err());
        let p = parse_program(".decl a(x:unsigned) .decl b(x:unsigned) a(1u). b(X):-a(X). .output b").unwrap();
        assert!(render_program(&p, Dialect::CozoLike, Role::Optimized, false).is_err());
    }

    #[test]
    fn muz_header_and_markers() {
        let p = parse_program(
            ".decl jrkr(a:number, b:number) .decl fvof(a:number)
             jrkr(80,80). jrkr(4,4).
             fvof(E):-jrkr(D,E),8!=E,71<D.
             .output fvof",
        )
        .unwrap();
        let case = render_program(&p, Dialect::MuZLike, Role::Optimized, false).unwrap();
        assert_eq!(
            case.program,
            "Z 128\njrkr(A:Z, B:Z) input\nfvof(A:Z) printtuples\njrkr(4, 4).\njrkr(80, 80).\n\
             fvof(E) :- jrkr(D, E), 8 != E, 71 < D.\n"
        );
    }

    #[test]
    fn muz_rejects_arithmetic() {
        let p = parse_program(".decl b(x:number) .decl g(x:number) g(A+1):-b(A). .output g").unwrap();
        assert!(render_program(&p, Dialect::MuZLike, Role::Optimized, false).is_err());
    }

    #[test]
    fn embedded_round_trips() {
        for reg in fixtures::all_regressions() {
            let case = render_program(&reg.program, Dialect::Embedded, Role::Optimized, false).unwrap();
            assert_eq!(parse_embedded(&case.program).unwrap(), reg.program);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let p = fixtures::guiding_example();
        for d in [Dialect::SouffleLike, Dialect::CozoLike, Dialect::MuZLike, Dialect::Embedded] {
            let a = render_program(&p, d, Role::Optimized, false).unwrap();
            let b = render_program(&p.clone(), d, Role::Optimized, false).unwrap();
            assert_eq!(a, b);
        }
    }
}
