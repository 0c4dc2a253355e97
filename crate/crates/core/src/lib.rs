//! Symbolic verification of ballot secrecy for the STAR-Vote protocol.
//!
//! The crate is organized bottom-up:
//!
//! - [`term`]: terms over the protocol signature and normalization modulo
//!   its convergent rewrite system;
//! - [`deduction`]: Dolev-Yao derivability, recipe search, and static
//!   equivalence of frames;
//! - [`calculus`]: applied-pi-style process syntax, the `.spv` model DSL,
//!   well-formedness checking, and template instantiation;
//! - [`semantics`]: intruder scenarios and bounded state-space exploration;
//! - [`equivalence`]: trace equivalence of two hidden systems and
//!   diff-equivalence of a biprocess, with barrier-swap plan enumeration;
//! - [`starvote`]: the built-in STAR-Vote models (base, counting, pins,
//!   hash chain) and corruption scenarios.

pub mod calculus;
pub mod deduction;
pub mod equivalence;
pub mod semantics;
pub mod starvote;
pub mod term;

pub use term::{Func, Side, Subst, Term, TermError, TermNode};
