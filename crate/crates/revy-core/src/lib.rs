//! Deductive verifier and bounded adversarial-execution oracle for a
//! Vyper-like smart contract language with resource-aware specifications.
//!
//! Pipeline: parse (`parser`) → typecheck (`typecheck`) → either
//! obligation generation (`vcgen`) discharged through an SMT solver (`smt`),
//! or bounded adversarial simulation (`interp`). Specification meta-checks
//! (reflexivity, transitivity, stability) live in `meta`.

pub mod ast;
pub mod assertion;
pub mod diag;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod resource;
pub mod lower;
pub mod segments;
pub mod span;
pub mod typecheck;
pub mod value;
