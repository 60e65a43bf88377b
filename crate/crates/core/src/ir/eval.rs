//! Arithmetic and comparison semantics.
//!
//! Integer arithmetic wraps modulo 2^64. Operands must share a kind;
//! there is no implicit coercion.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::program::{BinOp, CmpOp, Term, UnaryOp};
use super::value::{Value, ValueKind};

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticError {
    #[error("division by zero")]
    DivZero,
    #[error("modulo by zero")]
    ModZero,
    #[error("operator `{op}` applied to {lhs} and {rhs}")]
    KindMismatch { op: String, lhs: ValueKind, rhs: ValueKind },
    #[error("variable `{0}` is not bound")]
    Unbound(String),
    #[error("wildcard used as a value")]
    WildcardValue,
}

impl SemanticError {
    /// Stable code used by semantic-error catalogs.
    pub fn code(&self) -> &'static str {
        match self {
            SemanticError::DivZero => "div_zero",
            SemanticError::ModZero => "mod_zero",
            SemanticError::KindMismatch { .. } => "kind_mismatch",
            SemanticError::Unbound(_) => "unbound_variable",
            SemanticError::WildcardValue => "wildcard_value",
        }
    }
}

/// Variable environment consulted by [`eval_term`].
pub trait Bindings {
    fn lookup(&self, var: &str) -> Option<&Value>;
}

impl Bindings for HashMap<String, Value> {
    fn lookup(&self, var: &str) -> Option<&Value> {
        self.get(var)
    }
}

impl Bindings for BTreeMap<String, Value> {
    fn lookup(&self, var: &str) -> Option<&Value> {
        self.get(var)
    }
}

impl Bindings for [(&str, Value)] {
    fn lookup(&self, var: &str) -> Option<&Value> {
        self.iter().find(|(k, _)| *k == var).map(|(_, v)| v)
    }
}

pub fn eval_term<B: Bindings + ?Sized>(term: &Term, env: &B) -> Result<Value, SemanticError> {
    match term {
        Term::Var(v) => env.lookup(v).cloned().ok_or_else(|| SemanticError::Unbound(v.clone())),
        Term::Wildcard => Err(SemanticError::WildcardValue),
        Term::Const(c) => Ok(c.clone()),
        Term::Unary(UnaryOp::Neg, t) => negate(eval_term(t, env)?),
        Term::Binary(op, l, r) => apply_binop(*op, eval_term(l, env)?, eval_term(r, env)?),
    }
}

pub fn negate(v: Value) -> Result<Value, SemanticError> {
    match v {
        Value::Number(a) => Ok(Value::Number(a.wrapping_neg())),
        Value::Unsigned(a) => Ok(Value::Unsigned(a.wrapping_neg())),
        Value::Float(a) => Ok(Value::Float(-a)),
        Value::Symbol(_) => {
            Err(SemanticError::KindMismatch { op: "-".into(), lhs: ValueKind::Symbol, rhs: ValueKind::Symbol })
        }
    }
}

pub fn apply_binop(op: BinOp, lhs: Value, rhs: Value) -> Result<Value, SemanticError> {
    match (lhs, rhs) {
        (Value::Number(a), Value::Number(b)) => signed_op(op, a, b).map(Value::Number),
        (Value::Unsigned(a), Value::Unsigned(b)) => unsigned_op(op, a, b).map(Value::Unsigned),
        (Value::Float(a), Value::Float(b)) => float_op(op, a, b).map(Value::Float),
        (l, r) => Err(SemanticError::KindMismatch { op: op.symbol().into(), lhs: l.kind(), rhs: r.kind() }),
    }
}

fn signed_op(op: BinOp, a: i64, b: i64) -> Result<i64, SemanticError> {
    Ok(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div if b == 0 => return Err(SemanticError::DivZero),
        BinOp::Div => a.wrapping_div(b),
        BinOp::Mod if b == 0 => return Err(SemanticError::ModZero),
        BinOp::Mod => a.wrapping_rem(b),
        BinOp::Pow => signed_pow(a, b)?,
    })
}

fn signed_pow(base: i64, exp: i64) -> Result<i64, SemanticError> {
    if exp >= 0 {
        return Ok(wrapping_pow_u64(base as u64, exp as u64) as i64);
    }
    // Negative exponents: the exact result truncated toward zero.
    match base {
        0 => Err(SemanticError::DivZero),
        1 => Ok(1),
        -1 => Ok(if exp % 2 == 0 { 1 } else { -1 }),
        _ => Ok(0),
    }
}

/// Square-and-multiply modulo 2^64.
fn wrapping_pow_u64(mut base: u64, mut exp: u64) -> u64 {
    let mut acc: u64 = 1;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc.wrapping_mul(base);
        }
        base = base.wrapping_mul(base);
        exp >>= 1;
    }
    acc
}

fn unsigned_op(op: BinOp, a: u64, b: u64) -> Result<u64, SemanticError> {
    Ok(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div if b == 0 => return Err(SemanticError::DivZero),
        BinOp::Div => a / b,
        BinOp::Mod if b == 0 => return Err(SemanticError::ModZero),
        BinOp::Mod => a % b,
        BinOp::Pow => wrapping_pow_u64(a, b),
    })
}

fn float_op(op: BinOp, a: f64, b: f64) -> Result<f64, SemanticError> {
    Ok(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div if b == 0.0 => return Err(SemanticError::DivZero),
        BinOp::Div => a / b,
        BinOp::Mod if b == 0.0 => return Err(SemanticError::ModZero),
        BinOp::Mod => a % b,
        BinOp::Pow => a.powf(b),
    })
}

/// Evaluate a comparison. Floats compare by total order (so `-0.0 < 0.0`)
/// unless `loose` is set, in which case they compare numerically and any
/// comparison involving NaN is false.
pub fn compare(op: CmpOp, lhs: &Value, rhs: &Value, loose: bool) -> Result<bool, SemanticError> {
    let ord = match (lhs, rhs) {
        (Value::Number(a), Value::Number(b)) => a.cmp(b),
        (Value::Unsigned(a), Value::Unsigned(b)) => a.cmp(b),
        (Value::Float(a), Value::Float(b)) if loose => match a.partial_cmp(b) {
            Some(o) => o,
            None => return Ok(op == CmpOp::Ne),
        },
        (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
        (Value::Symbol(a), Value::Symbol(b)) => a.cmp(b),
        (l, r) => return Err(SemanticError::KindMismatch { op: op.symbol().into(), lhs: l.kind(), rhs: r.kind() }),
    };
    Ok(match op {
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
    })
}
