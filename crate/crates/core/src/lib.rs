//! Incremental rule evaluation for Datalog engines.
//!
//! A test case grows one rule at a time. Each new rule is evaluated in
//! isolation against cached results of the rules it depends on, so no
//! cross-rule optimization can apply; the union of these single-rule
//! results is the expected output of the whole program. An engine that
//! disagrees on the whole program has an optimization bug.
//!
//! The crate ships an embedded engine ([`engine`]) with injectable faults
//! so that the method can be exercised without external software.

pub mod adapters;
pub mod engine;
pub mod fixtures;
pub mod generator;
pub mod harness;
pub mod ir;
pub mod oracle;
pub mod stratify;
