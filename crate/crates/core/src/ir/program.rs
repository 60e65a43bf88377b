//! Program syntax: terms, literals, rules, declarations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::facts::FactStore;
use super::value::{Value, ValueKind};

/// Global generation index of a rule. Never reused within an iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub u32);

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
}

impl BinOp {
    pub const ALL: [BinOp; 6] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Mod, BinOp::Pow];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Pow => "^",
        }
    }

    /// Binding strength used when printing without redundant parentheses.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 2,
            BinOp::Pow => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryOp {
    Neg,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Var(String),
    Wildcard,
    Const(Value),
    Unary(UnaryOp, Box<Term>),
    Binary(BinOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn num(v: i64) -> Term {
        Term::Const(Value::Number(v))
    }

    pub fn float(v: f64) -> Term {
        Term::Const(Value::Float(v))
    }

    pub fn binary(op: BinOp, lhs: Term, rhs: Term) -> Term {
        Term::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn neg(inner: Term) -> Term {
        Term::Unary(UnaryOp::Neg, Box::new(inner))
    }

    pub fn is_arith(&self) -> bool {
        matches!(self, Term::Unary(..) | Term::Binary(..))
    }

    /// Variables in left-to-right order, duplicates kept.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Var(v) => out.push(v),
            Term::Wildcard | Term::Const(_) => {}
            Term::Unary(_, t) => t.collect_vars(out),
            Term::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn contains_wildcard(&self) -> bool {
        match self {
            Term::Wildcard => true,
            Term::Var(_) | Term::Const(_) => false,
            Term::Unary(_, t) => t.contains_wildcard(),
            Term::Binary(_, l, r) => l.contains_wildcard() || r.contains_wildcard(),
        }
    }

    /// Apply `f` to every variable name, rebuilding the term.
    pub fn rename(&self, f: &mut impl FnMut(&str) -> Term) -> Term {
        match self {
            Term::Var(v) => f(v),
            Term::Wildcard => Term::Wildcard,
            Term::Const(c) => Term::Const(c.clone()),
            Term::Unary(op, t) => Term::Unary(*op, Box::new(t.rename(f))),
            Term::Binary(op, l, r) => Term::Binary(*op, Box::new(l.rename(f)), Box::new(r.rename(f))),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Term::Binary(op, ..) => op.precedence(),
            Term::Unary(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self, &NeutralStyle)
    }
}

/// Dialect-specific spelling of operators and constants.
pub trait TermStyle {
    fn binop(&self, op: BinOp) -> &'static str {
        op.symbol()
    }

    fn constant(&self, v: &Value) -> String {
        v.to_string()
    }
}

/// The crate's own text syntax, as printed by `Display`.
pub struct NeutralStyle;

impl TermStyle for NeutralStyle {}

/// Print a term with minimal parentheses.
pub fn write_term(out: &mut dyn fmt::Write, term: &Term, style: &dyn TermStyle) -> fmt::Result {
    match term {
        Term::Var(v) => out.write_str(v),
        Term::Wildcard => out.write_char('_'),
        Term::Const(c) => out.write_str(&style.constant(c)),
        Term::Unary(UnaryOp::Neg, inner) => {
            out.write_char('-')?;
            // Always parenthesized so that `-(5)` and the constant `-5` stay distinct.
            if matches!(inner.as_ref(), Term::Var(_)) {
                write_term(out, inner, style)
            } else {
                out.write_char('(')?;
                write_term(out, inner, style)?;
                out.write_char(')')
            }
        }
        Term::Binary(op, l, r) => {
            let p = op.precedence();
            // Pow is right associative; the others are left associative.
            let (l_paren, r_paren) = if *op == BinOp::Pow {
                (l.precedence() <= p, r.precedence() < p)
            } else {
                (l.precedence() < p, r.precedence() <= p)
            };
            write_operand(out, l, l_paren, style)?;
            out.write_str(style.binop(*op))?;
            write_operand(out, r, r_paren, style)
        }
    }
}

fn write_operand(out: &mut dyn fmt::Write, term: &Term, paren: bool, style: &dyn TermStyle) -> fmt::Result {
    let negative_const = matches!(term, Term::Const(Value::Number(n)) if *n < 0)
        || matches!(term, Term::Const(Value::Float(x)) if x.is_sign_negative());
    if paren || negative_const || matches!(term, Term::Unary(..)) {
        out.write_char('(')?;
        write_term(out, term, style)?;
        out.write_char(')')
    } else {
        write_term(out, term, style)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub relation: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(relation: impl Into<String>, args: Vec<Term>) -> Atom {
        Atom { relation: relation.into(), args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn vars(&self) -> Vec<&str> {
        self.args.iter().flat_map(Term::vars).collect()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }

    /// The operator with its operands swapped: `a < b` iff `b > a`.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
            op => op,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub op: CmpOp,
    pub lhs: Term,
    pub rhs: Term,
    /// Compare floats numerically instead of by total order. Only set by
    /// the engine's rewrites, never part of a program's surface syntax.
    #[serde(skip)]
    pub loose_float: bool,
}

impl Constraint {
    pub fn new(op: CmpOp, lhs: Term, rhs: Term) -> Constraint {
        Constraint { op, lhs, rhs, loose_float: false }
    }

    pub fn vars(&self) -> Vec<&str> {
        let mut v = self.lhs.vars();
        v.extend(self.rhs.vars());
        v
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.lhs, self.op.symbol(), self.rhs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Literal {
    Positive(Atom),
    Negative(Atom),
    Constraint(Constraint),
}

impl Literal {
    pub fn atom(&self) -> Option<&Atom> {
        match self {
            Literal::Positive(a) | Literal::Negative(a) => Some(a),
            Literal::Constraint(_) => None,
        }
    }

    pub fn is_negative(&self) -> bool {
        matches!(self, Literal::Negative(_))
    }

    pub fn vars(&self) -> Vec<&str> {
        match self {
            Literal::Positive(a) | Literal::Negative(a) => a.vars(),
            Literal::Constraint(c) => c.vars(),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Positive(a) => write!(f, "{a}"),
            Literal::Negative(a) => write!(f, "!{a}"),
            Literal::Constraint(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub id: RuleId,
    pub head: Atom,
    pub body: Vec<Literal>,
}

impl Rule {
    pub fn new(id: u32, head: Atom, body: Vec<Literal>) -> Rule {
        Rule { id: RuleId(id), head, body }
    }

    pub fn positive_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Positive(a) => Some(a),
            _ => None,
        })
    }

    pub fn negative_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Negative(a) => Some(a),
            _ => None,
        })
    }

    /// Relations read by the body, each with whether any occurrence is negated.
    pub fn body_relations(&self) -> BTreeMap<&str, bool> {
        let mut out: BTreeMap<&str, bool> = BTreeMap::new();
        for lit in &self.body {
            if let Some(a) = lit.atom() {
                let neg = out.entry(a.relation.as_str()).or_insert(false);
                *neg |= lit.is_negative();
            }
        }
        out
    }

    pub fn uses_relation(&self, rel: &str) -> bool {
        self.body.iter().filter_map(Literal::atom).any(|a| a.relation == rel)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:-", self.head)?;
        for (i, l) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(".")
    }
}

/// `rel(dominated) <= rel(dominating) :- condition.`
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsumptionRule {
    pub relation: String,
    pub dominated: Vec<Term>,
    pub dominating: Vec<Term>,
    pub condition: Vec<Constraint>,
}

impl fmt::Display for SubsumptionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = Atom::new(self.relation.clone(), self.dominated.clone());
        let hi = Atom::new(self.relation.clone(), self.dominating.clone());
        write!(f, "{lo}<={hi}")?;
        for (i, c) in self.condition.iter().enumerate() {
            f.write_str(if i == 0 { ":-" } else { "," })?;
            write!(f, "{c}")?;
        }
        f.write_str(".")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    Magic,
    NoMagic,
    Inline,
}

impl Annotation {
    pub fn keyword(self) -> &'static str {
        match self {
            Annotation::Magic => "magic",
            Annotation::NoMagic => "no_magic",
            Annotation::Inline => "inline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attr {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationDecl {
    pub name: String,
    pub attrs: Vec<Attr>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub annotations: BTreeSet<Annotation>,
}

impl RelationDecl {
    /// Declaration with attributes named `x0, x1, ...`.
    pub fn new(name: impl Into<String>, kinds: &[ValueKind]) -> RelationDecl {
        RelationDecl {
            name: name.into(),
            attrs: kinds.iter().enumerate().map(|(i, k)| Attr { name: format!("x{i}"), kind: *k }).collect(),
            annotations: BTreeSet::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }

    pub fn kinds(&self) -> Vec<ValueKind> {
        self.attrs.iter().map(|a| a.kind).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub decls: Vec<RelationDecl>,
    #[serde(default)]
    pub facts: FactStore,
    pub rules: Vec<Rule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subsumptions: Vec<SubsumptionRule>,
    pub outputs: Vec<String>,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&RelationDecl> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn decl_mut(&mut self, name: &str) -> Option<&mut RelationDecl> {
        self.decls.iter_mut().find(|d| d.name == name)
    }

    pub fn rule(&self, id: RuleId) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn rules_defining<'a>(&'a self, rel: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.head.relation == rel)
    }

    pub fn head_relations(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.head.relation.as_str()).collect()
    }

    pub fn is_output(&self, rel: &str) -> bool {
        self.outputs.iter().any(|o| o == rel)
    }

    /// Relations with at least one fact supplied by the program itself.
    pub fn is_input(&self, rel: &str) -> bool {
        self.facts.relation(rel).is_some_and(|s| !s.is_empty())
    }

    pub fn subsumptions_of<'a>(&'a self, rel: &'a str) -> impl Iterator<Item = &'a SubsumptionRule> + 'a {
        self.subsumptions.iter().filter(move |s| s.relation == rel)
    }

    /// Relations mentioned anywhere in rules or subsumptions, sorted.
    pub fn mentioned_relations(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for r in &self.rules {
            out.insert(r.head.relation.as_str());
            out.extend(r.body.iter().filter_map(Literal::atom).map(|a| a.relation.as_str()));
        }
        out.extend(self.subsumptions.iter().map(|s| s.relation.as_str()));
        out
    }

    /// Drop declarations and facts of relations no rule, subsumption or
    /// output refers to.
    pub fn prune_unused(&mut self) {
        let keep: BTreeSet<String> = self
            .mentioned_relations()
            .into_iter()
            .chain(self.outputs.iter().map(String::as_str))
            .map(str::to_string)
            .collect();
        self.decls.retain(|d| keep.contains(&d.name));
        self.facts.retain_relations(|r| keep.contains(r));
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            write!(f, ".decl {}(", d.name)?;
            for (i, a) in d.attrs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}:{}", a.name, a.kind)?;
            }
            f.write_str(")")?;
            for ann in &d.annotations {
                write!(f, " {}", ann.keyword())?;
            }
            writeln!(f)?;
        }
        for (rel, tuples) in self.facts.iter() {
            for t in tuples {
                let args: Vec<String> = t.iter().map(Value::to_string).collect();
                writeln!(f, "{rel}({}).", args.join(","))?;
            }
        }
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        for s in &self.subsumptions {
            writeln!(f, "{s}")?;
        }
        for o in &self.outputs {
            writeln!(f, ".output {o}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_prints_with_minimal_parentheses() {
        let t = Term::binary(BinOp::Add, Term::num(29), Term::binary(BinOp::Mul, Term::var("A"), Term::var("D")));
        assert_eq!(t.to_string(), "29+A*D");
        let t = Term::binary(BinOp::Mul, Term::binary(BinOp::Add, Term::var("A"), Term::num(1)), Term::var("B"));
        assert_eq!(t.to_string(), "(A+1)*B");
        let t = Term::binary(BinOp::Sub, Term::var("A"), Term::binary(BinOp::Sub, Term::var("B"), Term::var("C")));
        assert_eq!(t.to_string(), "A-(B-C)");
        assert_eq!(Term::neg(Term::neg(Term::num(5))).to_string(), "-(-(5))");
        assert_eq!(Term::neg(Term::var("A")).to_string(), "-A");
        let t = Term::binary(BinOp::Pow, Term::neg(Term::var("A")), Term::num(2));
        assert_eq!(t.to_string(), "(-A)^2");
        assert_eq!(Term::binary(BinOp::Add, Term::var("A"), Term::num(-3)).to_string(), "A+(-3)");
    }

    #[test]
    fn rule_display_matches_datalog_text() {
        let r = Rule::new(
            7,
            Atom::new("t", vec![Term::var("X")]),
            vec![
                Literal::Positive(Atom::new("s", vec![Term::var("X")])),
                Literal::Positive(Atom::new("b", vec![Term::Wildcard, Term::var("X")])),
            ],
        );
        assert_eq!(r.to_string(), "t(X):-s(X),b(_,X).");
    }

    #[test]
    fn body_relations_track_polarity() {
        let r = Rule::new(
            0,
            Atom::new("c", vec![Term::var("X")]),
            vec![
                Literal::Positive(Atom::new("a", vec![Term::var("X")])),
                Literal::Negative(Atom::new("b", vec![Term::var("X")])),
                Literal::Positive(Atom::new("b", vec![Term::var("X")])),
            ],
        );
        let rels = r.body_relations();
        assert_eq!(rels.get("a"), Some(&false));
        assert_eq!(rels.get("b"), Some(&true));
    }

    #[test]
    fn program_json_round_trip() {
        let mut p = Program::default();
        p.decls.push(RelationDecl::new("a", &[ValueKind::Float]));
        p.decls.push(RelationDecl::new("b", &[ValueKind::Float]));
        p.facts.insert("a", vec![Value::Float(-0.0)]);
        p.rules.push(Rule::new(
            0,
            Atom::new("b", vec![Term::var("A")]),
            vec![
                Literal::Positive(Atom::new("a", vec![Term::var("A")])),
                Literal::Constraint(Constraint::new(CmpOp::Ge, Term::var("A"), Term::float(0.0))),
            ],
        ));
        p.outputs.push("b".into());
        let json = serde_json::to_string(&p).unwrap();
        let back: Program = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
