//! Parser for the crate's own text syntax (the `Display` form of
//! [`Program`]).
//!
//! ```text
//! .decl edge(x:number, y:number)
//! edge(1,2).
//! path(X,Y):-edge(X,Y).
//! path(X,Z):-path(X,Y),edge(Y,Z).
//! .output path
//! ```
//!
//! Identifiers in argument position are variables, `_` is a wildcard.
//! Unsigned constants carry a `u` suffix, symbols are double-quoted.

use std::collections::BTreeSet;

use thiserror::Error;

use super::program::{
    Annotation, Atom, Attr, BinOp, CmpOp, Constraint, Literal, Program, RelationDecl, Rule, RuleId, SubsumptionRule,
    Term,
};
use super::value::{Value, ValueKind};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Directive(String),
    Int(String),
    Uint(u64),
    Float(f64),
    Str(String),
    Punct(&'static str),
}

const PUNCT: [&str; 19] =
    [":-", "<=", ">=", "!=", "(", ")", ",", ".", ":", "<", ">", "=", "!", "+", "-", "*", "/", "%", "^"];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let err = |line, m: &str| ParseError { line, message: m.to_string() };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '.' && chars.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic()) {
            let start = i + 1;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Directive(chars[start..i].iter().collect()), line));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), line));
        } else if c.is_ascii_digit() {
            let start = i;
            let mut is_float = false;
            while i < chars.len() {
                let d = chars[i];
                let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
                if d.is_ascii_digit() {
                    i += 1;
                } else if d == '.' && next_digit {
                    is_float = true;
                    i += 1;
                } else if (d == 'e' || d == 'E')
                    && (next_digit
                        || (matches!(chars.get(i + 1), Some('-' | '+'))
                            && chars.get(i + 2).is_some_and(|n| n.is_ascii_digit())))
                {
                    is_float = true;
                    i += 2;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            if chars.get(i) == Some(&'u') && !is_float {
                i += 1;
                let v = text.parse().map_err(|_| err(line, "unsigned literal out of range"))?;
                out.push((Tok::Uint(v), line));
            } else if is_float {
                out.push((Tok::Float(text.parse().map_err(|_| err(line, "bad float"))?), line));
            } else {
                out.push((Tok::Int(text), line));
            }
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(err(line, "unterminated string")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).copied().ok_or_else(|| err(line, "bad escape"))?;
                        i += 2;
                        match esc {
                            'n' => s.push('\n'),
                            't' => s.push('\t'),
                            'r' => s.push('\r'),
                            '0' => s.push('\0'),
                            '\\' | '"' | '\'' => s.push(esc),
                            'u' => {
                                if chars.get(i) != Some(&'{') {
                                    return Err(err(line, "bad unicode escape"));
                                }
                                let close = chars[i..]
                                    .iter()
                                    .position(|&ch| ch == '}')
                                    .ok_or_else(|| err(line, "bad unicode escape"))?;
                                let hex: String = chars[i + 1..i + close].iter().collect();
                                let cp = u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32);
                                s.push(cp.ok_or_else(|| err(line, "bad unicode escape"))?);
                                i += close + 1;
                            }
                            _ => return Err(err(line, "bad escape")),
                        }
                    }
                    Some(ch) => {
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            out.push((Tok::Str(s), line));
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let p = PUNCT
                .iter()
                .find(|p| rest.starts_with(**p))
                .ok_or_else(|| err(line, &format!("unexpected character `{c}`")))?;
            i += p.len();
            out.push((Tok::Punct(p), line));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map_or(1, |(_, l)| *l)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { line: self.line(), message: message.into() })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(q)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.fail(format!("expected `{p}`, found {:?}", self.peek()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => {
                self.pos -= 1;
                self.fail(format!("expected identifier, found {other:?}"))
            }
        }
    }

    fn decl(&mut self) -> Result<RelationDecl, ParseError> {
        let name = self.ident()?;
        self.expect("(")?;
        let mut attrs = Vec::new();
        if !self.eat(")") {
            loop {
                let attr = self.ident()?;
                self.expect(":")?;
                let kind = match self.ident()?.as_str() {
                    "number" => ValueKind::Number,
                    "unsigned" => ValueKind::Unsigned,
                    "float" => ValueKind::Float,
                    "symbol" => ValueKind::Symbol,
                    k => return self.fail(format!("unknown kind `{k}`")),
                };
                attrs.push(Attr { name: attr, kind });
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        let mut annotations = BTreeSet::new();
        while let Some(Tok::Ident(a)) = self.peek() {
            let ann = match a.as_str() {
                "magic" => Annotation::Magic,
                "no_magic" => Annotation::NoMagic,
                "inline" => Annotation::Inline,
                _ => break,
            };
            annotations.insert(ann);
            self.pos += 1;
        }
        Ok(RelationDecl { name, attrs, annotations })
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let rel = self.ident()?;
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.eat(")") {
            loop {
                args.push(self.term()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(Atom::new(rel, args))
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        if self.eat("!") {
            return Ok(Literal::Negative(self.atom()?));
        }
        if matches!(self.peek(), Some(Tok::Ident(_))) && self.peek_at(1) == Some(&Tok::Punct("(")) {
            return Ok(Literal::Positive(self.atom()?));
        }
        Ok(Literal::Constraint(self.constraint()?))
    }

    fn constraint(&mut self) -> Result<Constraint, ParseError> {
        let lhs = self.term()?;
        let op = match self.next() {
            Some(Tok::Punct("<")) => CmpOp::Lt,
            Some(Tok::Punct(">")) => CmpOp::Gt,
            Some(Tok::Punct("<=")) => CmpOp::Le,
            Some(Tok::Punct(">=")) => CmpOp::Ge,
            Some(Tok::Punct("=")) => CmpOp::Eq,
            Some(Tok::Punct("!=")) => CmpOp::Ne,
            other => {
                self.pos -= 1;
                return self.fail(format!("expected comparison, found {other:?}"));
            }
        };
        let rhs = self.term()?;
        Ok(Constraint::new(op, lhs, rhs))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Term::binary(op, lhs, self.product()?);
        }
    }

    fn product(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else if self.eat("%") {
                BinOp::Mod
            } else {
                return Ok(lhs);
            };
            lhs = Term::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Term, ParseError> {
        if self.eat("-") {
            // A minus directly before a literal is part of the constant.
            match self.peek().cloned() {
                Some(Tok::Int(text)) => {
                    self.pos += 1;
                    let v = format!("-{text}").parse().or_else(|_| self.fail("integer literal out of range"))?;
                    return self.power_tail(Term::Const(Value::Number(v)));
                }
                Some(Tok::Float(x)) => {
                    self.pos += 1;
                    return self.power_tail(Term::Const(Value::Float(-x)));
                }
                _ => return Ok(Term::neg(self.unary()?)),
            }
        }
        let base = self.primary()?;
        self.power_tail(base)
    }

    fn power_tail(&mut self, base: Term) -> Result<Term, ParseError> {
        if self.eat("^") {
            Ok(Term::binary(BinOp::Pow, base, self.unary()?))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Term, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(match s.as_str() {
                "_" => Term::Wildcard,
                "nan" => Term::float(f64::NAN),
                "inf" => Term::float(f64::INFINITY),
                _ => Term::Var(s),
            }),
            Some(Tok::Int(text)) => text.parse().map(Term::num).or_else(|_| self.fail("integer literal out of range")),
            Some(Tok::Uint(v)) => Ok(Term::Const(Value::Unsigned(v))),
            Some(Tok::Float(x)) => Ok(Term::float(x)),
            Some(Tok::Str(s)) => Ok(Term::Const(Value::Symbol(s))),
            Some(Tok::Punct("(")) => {
                let t = self.term()?;
                self.expect(")")?;
                Ok(t)
            }
            other => {
                self.pos -= 1;
                self.fail(format!("expected term, found {other:?}"))
            }
        }
    }
}

/// Parse a whole program. Rules are numbered in order of appearance.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let mut prog = Program::default();
    let mut next_id = 0u32;
    while p.peek().is_some() {
        if let Some(Tok::Directive(d)) = p.peek().cloned() {
            p.pos += 1;
            match d.as_str() {
                "decl" => {
                    let decl = p.decl()?;
                    prog.decls.push(decl);
                }
                "output" => {
                    let rel = p.ident()?;
                    prog.outputs.push(rel);
                }
                "input" => {
                    p.ident()?;
                }
                other => return p.fail(format!("unknown directive `.{other}`")),
            }
            continue;
        }
        let head = p.atom()?;
        if p.eat(".") {
            let mut tuple = Vec::with_capacity(head.args.len());
            for t in &head.args {
                match t {
                    Term::Const(v) => tuple.push(v.clone()),
                    _ => return p.fail(format!("fact for `{}` must be ground", head.relation)),
                }
            }
            prog.facts.insert(&head.relation, tuple);
            continue;
        }
        if p.eat("<=") {
            let hi = p.atom()?;
            if hi.relation != head.relation {
                return p.fail("subsumption must relate tuples of one relation");
            }
            let mut condition = Vec::new();
            if p.eat(":-") {
                loop {
                    condition.push(p.constraint()?);
                    if !p.eat(",") {
                        break;
                    }
                }
            }
            p.expect(".")?;
            prog.subsumptions.push(SubsumptionRule {
                relation: head.relation,
                dominated: head.args,
                dominating: hi.args,
                condition,
            });
            continue;
        }
        p.expect(":-")?;
        let mut body = Vec::new();
        loop {
            body.push(p.literal()?);
            if !p.eat(",") {
                break;
            }
        }
        p.expect(".")?;
        prog.rules.push(Rule { id: RuleId(next_id), head, body });
        next_id += 1;
    }
    Ok(prog)
}

/// Parse a single rule, giving it the id `id`.
pub fn parse_rule(src: &str, id: u32) -> Result<Rule, ParseError> {
    let prog = parse_program(src)?;
    match prog.rules.as_slice() {
        [r] if prog.facts.is_empty() && prog.decls.is_empty() => Ok(Rule { id: RuleId(id), ..r.clone() }),
        _ => Err(ParseError { line: 1, message: "expected exactly one rule".into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rules_with_negation_and_arithmetic() {
        let r = parse_rule("g(29+A*D):-b(A),d(D),!e(A),A<=D.", 3).unwrap();
        assert_eq!(r.id, RuleId(3));
        assert_eq!(r.to_string(), "g(29+A*D):-b(A),d(D),!e(A),A<=D.");
    }

    #[test]
    fn negative_literals_fold_into_constants() {
        let r = parse_rule("a(X):-b(X),X>=-0.0,X!=-(5).", 0).unwrap();
        let Literal::Constraint(c) = &r.body[1] else { panic!() };
        assert!(matches!(c.rhs, Term::Const(Value::Float(x)) if x.to_bits() == (-0.0f64).to_bits()));
        let Literal::Constraint(c) = &r.body[2] else { panic!() };
        assert_eq!(c.rhs, Term::neg(Term::num(5)));
    }

    #[test]
    fn program_display_round_trips() {
        let src = ".decl a(x:float)\n.decl b(x:float, y:unsigned, z:symbol) inline\na(-0.0).\na(1.5).\nb(X,3u,\"q\\tz\"):-a(X),X^2>=1.0.\nb(E1,_,_)<=b(E2,_,_):-E1<E2.\n.output b\n";
        let p = parse_program(src).unwrap();
        let again = parse_program(&p.to_string()).unwrap();
        assert_eq!(p, again);
        assert_eq!(p.facts.count("a"), 2);
        assert_eq!(p.subsumptions.len(), 1);
        assert!(p.decls[1].annotations.contains(&Annotation::Inline));
    }

    #[test]
    fn reports_line_of_error() {
        let e = parse_program("a(X):-b(X).\nc(X):-d(X)\n").unwrap_err();
        assert_eq!(e.line, 2);
    }
}
