//! Syntactic checkers for the rendered dialects. They accept exactly the
//! shapes the renderers emit plus ordinary whitespace variation.

use thiserror::Error;

use super::dialect::{parse_embedded, Dialect};
use crate::ir::parse_program;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> SyntaxError {
    SyntaxError { line, message: message.into() }
}

pub fn validate_text(dialect: Dialect, text: &str) -> Result<(), SyntaxError> {
    match dialect {
        Dialect::SouffleLike => parse_program(text).map(|_| ()).map_err(|e| err(e.line, e.message)),
        Dialect::CozoLike => validate_cozo(text),
        Dialect::MuZLike => validate_muz(text),
        Dialect::Embedded => parse_embedded(text).map(|_| ()).map_err(|e| err(e.line(), e.to_string())),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num,
    Str,
    Punct(&'static str),
}

const PUNCTS: [&str; 21] =
    [":=", "<-", "==", "!=", "<=", ">=", ":-", "[", "]", "(", ")", ",", "?", "<", ">", "=", "+", "-", "*", "/", "%"];

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>, SyntaxError> {
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Num);
        } else if c == '"' {
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(err(lineno, "unterminated string")),
                    Some('\\') => i += 2,
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            out.push(Tok::Str);
        } else if c == '^' {
            out.push(Tok::Punct("^"));
            i += 1;
        } else if c == '.' {
            out.push(Tok::Punct("."));
            i += 1;
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) else {
                return Err(err(lineno, format!("unexpected character `{c}`")));
            };
            out.push(Tok::Punct(p));
            i += p.len();
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn at(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn eat(&mut self, p: &str) -> bool {
        let hit = self.at(p);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect(&mut self, p: &str) -> Result<(), SyntaxError> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(err(self.line, format!("expected `{p}`, found {:?}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            other => Err(err(self.line, format!("expected identifier, found {other:?}"))),
        }
    }

    fn done(&self) -> bool {
        self.pos == self.toks.len()
    }

    /// `p item (sep item)* close`, allowing an empty list.
    fn list(
        &mut self,
        open: &str,
        close: &str,
        mut item: impl FnMut(&mut Self) -> Result<(), SyntaxError>,
    ) -> Result<(), SyntaxError> {
        self.expect(open)?;
        if self.eat(close) {
            return Ok(());
        }
        loop {
            item(self)?;
            if self.eat(close) {
                return Ok(());
            }
            self.expect(",")?;
        }
    }

    fn expr(&mut self) -> Result<(), SyntaxError> {
        self.unary()?;
        while ["+", "-", "*", "/", "%", "^"].iter().any(|op| self.at(op)) {
            self.pos += 1;
            self.unary()?;
        }
        Ok(())
    }

    fn unary(&mut self) -> Result<(), SyntaxError> {
        if self.eat("-") {
            return self.unary();
        }
        if self.at("(") {
            self.pos += 1;
            self.expr()?;
            return self.expect(")");
        }
        match self.peek() {
            Some(Tok::Ident(_) | Tok::Num | Tok::Str) => {
                self.pos += 1;
                Ok(())
            }
            other => Err(err(self.line, format!("expected a term, found {other:?}"))),
        }
    }

    fn constant(&mut self) -> Result<(), SyntaxError> {
        self.eat("-");
        match self.peek() {
            Some(Tok::Num | Tok::Str) => {
                self.pos += 1;
                Ok(())
            }
            other => Err(err(self.line, format!("expected a constant, found {other:?}"))),
        }
    }
}

fn validate_cozo(text: &str) -> Result<(), SyntaxError> {
    let mut queries = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let toks = tokenize(raw, line)?;
        let mut c = Cursor { toks: &toks, pos: 0, line };
        let is_query = c.eat("?");
        if !is_query {
            c.ident()?;
        }
        c.list("[", "]", |c| c.ident().map(|_| ()))?;
        if !is_query && c.eat("<-") {
            c.list("[", "]", |c| c.list("[", "]", Cursor::constant))?;
        } else {
            c.expect(":=")?;
            loop {
                cozo_literal(&mut c)?;
                if !c.eat(",") {
                    break;
                }
            }
        }
        if !c.done() {
            return Err(err(line, "trailing tokens"));
        }
        queries += usize::from(is_query);
    }
    if queries != 1 {
        return Err(err(0, format!("expected exactly one `?` rule, found {queries}")));
    }
    Ok(())
}

fn cozo_literal(c: &mut Cursor) -> Result<(), SyntaxError> {
    if matches!(c.peek(), Some(Tok::Ident(s)) if s == "not") {
        c.pos += 1;
        c.ident()?;
        return c.list("[", "]", Cursor::expr);
    }
    if matches!(c.peek(), Some(Tok::Ident(_))) && matches!(c.toks.get(c.pos + 1), Some(Tok::Punct("["))) {
        c.pos += 1;
        return c.list("[", "]", Cursor::expr);
    }
    c.expr()?;
    if !["==", "!=", "<=", ">=", "<", ">", "="].iter().any(|op| c.eat(op)) {
        return Err(err(c.line, "expected a comparison"));
    }
    c.expr()
}

fn validate_muz(text: &str) -> Result<(), SyntaxError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((i, header)) = lines.next() else {
        return Err(err(1, "missing domain header"));
    };
    let mut parts = header.split_whitespace();
    if parts.next() != Some("Z") || parts.next().and_then(|n| n.parse::<u64>().ok()).is_none() || parts.next().is_some()
    {
        return Err(err(i + 1, "expected `Z <size>`"));
    }
    let mut clauses = String::new();
    let mut first_clause_line = None;
    for (i, raw) in lines {
        let line = i + 1;
        if first_clause_line.is_none() && !raw.trim_end().ends_with('.') {
            muz_decl(raw, line)?;
            continue;
        }
        first_clause_line.get_or_insert(line);
        clauses.push_str(raw);
        clauses.push('\n');
    }
    let offset = first_clause_line.unwrap_or(1) - 1;
    parse_program(&clauses).map(|_| ()).map_err(|e| err(e.line + offset, e.message))
}

fn muz_decl(raw: &str, line: usize) -> Result<(), SyntaxError> {
    let raw = raw.trim();
    let (name, rest) = raw.split_once('(').ok_or_else(|| err(line, "expected a declaration"))?;
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(err(line, "bad relation name"));
    }
    let (attrs, marker) = rest.split_once(')').ok_or_else(|| err(line, "unclosed declaration"))?;
    for attr in attrs.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        let (n, dom) = attr.split_once(':').ok_or_else(|| err(line, "attribute without domain"))?;
        if n.trim().is_empty() || dom.trim() != "Z" {
            return Err(err(line, format!("bad attribute `{attr}`")));
        }
    }
    match marker.trim() {
        "" | "input" | "printtuples" => Ok(()),
        other => Err(err(line, format!("unknown marker `{other}`"))),
    }
}
