//! Datalog rewritings of guarded tuple-generating dependencies.
//!
//! The crate turns guarded TGDs (and their disjunctive variant) into full
//! rule programs that give the same answers to ground queries, evaluates
//! those programs, and checks everything against a bounded chase.

pub mod model;
pub mod textio;
pub mod normal;
pub mod unify;
pub mod par;
pub(crate) mod closure;
pub mod gsat;
pub mod dgsat;
pub mod eval;
pub mod chase;
pub mod verify;
pub mod cli;

pub use model::{Atom, HeadConjunct, Instance, Query, Rule, Sym, Term};
pub use textio::{parse, ParseError, ParseOptions, Program};
