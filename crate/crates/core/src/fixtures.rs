//! Regression programs for the injectable faults and the worked examples
//! used throughout the tests.

use crate::engine::{BugId, OptConfig};
use crate::ir::{parse_program, Program, Tuple, Value};

/// A program whose optimized evaluation under `opt` disagrees with the
/// single-rule reference results.
#[derive(Clone, Debug)]
pub struct Regression {
    pub name: &'static str,
    pub bug: BugId,
    pub program: Program,
    pub opt: OptConfig,
    /// Correct tuples of the output relation.
    pub expected: Vec<Tuple>,
    /// Tuples produced by the faulty evaluation.
    pub faulty: Vec<Tuple>,
}

fn parse(src: &str) -> Program {
    parse_program(src).expect("fixture parses")
}

fn nums(vals: &[i64]) -> Vec<Tuple> {
    vals.iter().map(|v| vec![Value::Number(*v)]).collect()
}

fn floats(vals: &[f64]) -> Vec<Tuple> {
    vals.iter().map(|v| vec![Value::Float(*v)]).collect()
}

/// Two rules define `edge`; the second one's facts are lost from the
/// semi-naive delta, so `result(0)` is never derived.
pub fn sibling_delta() -> Regression {
    Regression {
        name: "sibling_delta",
        bug: BugId::SeminaiveDelta,
        program: parse(
            ".decl in(x:number)
             .decl node(x:number)
             .decl edge(x:number, y:number)
             .decl result(x:number)
             in(0). in(1).
             node(A):-in(A),A=1.
             edge(A,B):-in(A),in(B),A=1,B=1.
             edge(A,B):-node(B),in(A),A=0.
             result(C):-edge(C,A),edge(A,_).
             .output result",
        ),
        opt: OptConfig::default().with_bug(BugId::SeminaiveDelta),
        expected: nums(&[0, 1]),
        faulty: nums(&[1]),
    }
}

/// The filter `A>=0.0` is pushed into `b` with a numeric comparison,
/// which lets `-0.0` through.
pub fn negative_zero_filter() -> Regression {
    Regression {
        name: "negative_zero_filter",
        bug: BugId::MagicNegzero,
        program: parse(
            ".decl a(x:float)
             .decl b(x:float)
             .decl c(x:float)
             a(-0.0). a(0.0).
             b(A):-a(A).
             c(A):-b(A),A>=0.0.
             .output c",
        ),
        opt: OptConfig::default().with_bug(BugId::MagicNegzero),
        expected: floats(&[0.0]),
        faulty: floats(&[-0.0, 0.0]),
    }
}

/// Subsumption keeps only the largest `b`; it is skipped once `c` is
/// restricted by the pushed filter `X>0`.
pub fn subsumption_under_demand() -> Regression {
    Regression {
        name: "subsumption_under_demand",
        bug: BugId::SubsumeUnderMagic,
        program: parse(
            ".decl a(x:number)
             .decl b(x:number)
             .decl c(x:number)
             a(3). a(6). a(7).
             c(X):-a(X).
             b(X):-c(X),X>0.
             b(E1)<=b(E2):-E1<E2.
             .output b",
        ),
        opt: OptConfig { enable_magic: true, ..OptConfig::default() }.with_bug(BugId::SubsumeUnderMagic),
        expected: nums(&[7]),
        faulty: nums(&[3, 6, 7]),
    }
}

/// Inlining `b` into `c` loses the constraint `X>1`.
pub fn inline_drop() -> Regression {
    Regression {
        name: "inline_drop",
        bug: BugId::InlineDropLiteral,
        program: parse(
            ".decl a(x:number)
             .decl b(x:number)
             .decl c(x:number)
             a(1). a(2). a(3).
             b(X):-a(X),X>1.
             c(X):-b(X).
             .output c",
        ),
        opt: OptConfig { enable_inline: true, ..OptConfig::default() }.with_bug(BugId::InlineDropLiteral),
        expected: nums(&[2, 3]),
        faulty: nums(&[1, 2, 3]),
    }
}

pub fn all_regressions() -> Vec<Regression> {
    vec![sibling_delta(), negative_zero_filter(), subsumption_under_demand(), inline_drop()]
}

pub fn regression_for(bug: BugId) -> Regression {
    all_regressions().into_iter().find(|r| r.bug == bug).expect("every bug has a regression")
}

/// Stratification walk-through: `c` and `d` form a positive cycle, `b`
/// is negated by `r0` and extended by `r3`.
pub fn guiding_example() -> Program {
    parse(
        ".decl a(x:number)
         .decl b(x:number)
         .decl c(x:number)
         .decl d(x:number)
         a(1). a(2). a(3).
         b(1).
         c(X):-a(X),!b(X).
         d(X):-c(X).
         c(X):-d(X).
         b(X):-a(X),X=2.
         .output b",
    )
}

/// Recursion without a fixpoint: every round derives a larger `a`.
pub fn divergent_recursion() -> Program {
    parse(
        ".decl a(x:number)
         .decl b(x:number)
         b(0).
         a(A+1):-b(A).
         b(A):-a(A).
         .output b",
    )
}

/// Negation inside a cycle.
pub fn unstratifiable() -> Program {
    parse(
        ".decl e(x:number)
         .decl c(x:number)
         .decl d(x:number)
         e(1).
         c(X):-e(X).
         d(X):-c(X).
         c(X):-c(X),!d(X).
         .output c",
    )
}
