//! A laboratory for trace-based I/O specifications.
//!
//! The pieces fit together as follows:
//!
//! - [`ast`]: a small ML-like surface language with I/O calls, `fork`,
//!   compare-and-swap and prophecy variables, parsed and desugared into a
//!   core expression tree with a unique-decomposition evaluation-context
//!   machinery.
//! - [`petri`]: Petri nets over term-shaped places. A net denotes a
//!   prefix-closed set of I/O traces; the module provides silent closure,
//!   labeled successors, a brute-force trace oracle and a
//!   result-determinism checker.
//! - [`interp`]: the labeled small-step semantics over thread pools and
//!   heaps.
//! - [`monitor`]: the monitoring semantics. A run carries the residual
//!   specification (a set of candidate markings) and classifies violations
//!   as program-side or environment-side.
//! - [`prophecy`]: constrained incremental prophecy variables with
//!   residual-checked constraints, and the erasure harness comparing the
//!   instrumented semantics against the intermediate one.
//! - [`explorer`]: bounded exhaustive exploration over all schedules and
//!   all allowed environment results.

pub mod ast;
pub mod explorer;
pub mod interp;
pub mod monitor;
pub mod petri;
pub mod prophecy;

pub use ast::{parse_program, CoreExpr, Loc, PvarId, Value};




pub use prophecy::{Constraint, PVarState};
