//! Dialect-neutral program representation and value model.

mod eval;
mod facts;
mod parse;
mod program;
mod safety;
mod value;

pub use eval::{apply_binop, compare, eval_term, negate, Bindings, SemanticError};
pub use facts::{diff_fact_sets, FactDiff, FactStore};
pub use parse::{parse_program, parse_rule, ParseError};
pub use program::{
    write_term, Annotation, Atom, Attr, BinOp, CmpOp, Constraint, Literal, NeutralStyle, Program, RelationDecl, Rule,
    RuleId, SubsumptionRule, Term, TermStyle, UnaryOp,
};
pub use safety::{bound_vars, check_safety, IrError, SafetyViolation};
pub use value::{float_literal, Tuple, Value, ValueKind};
