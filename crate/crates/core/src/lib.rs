//! Compiler and verifier for pCharts: hierarchical state machines with
//! probabilistic and timed transitions, invariants and costs.
//!
//! The pipeline is `dsl` (text to [`chart::Chart`]) → [`wellformed`] →
//! [`normalize`] (flat probabilistic guarded commands) → [`mdp`] (explicit
//! state space) → [`checker`]. The flat system can also be exported to PRISM
//! ([`prism`]) and non-probabilistic charts compiled to C ([`codegen`]).

pub mod analysis;
pub mod chart;
pub mod codegen;
pub mod checker;
pub mod diag;
pub mod dsl;
pub mod expr;
pub mod mdp;
pub mod normalize;
pub mod num;
pub mod prism;
pub mod reference;
pub mod wellformed;

pub use chart::{Chart, NodeId, NodeKind, Query, TransitionId};
pub use diag::{Diagnostic, Severity, SourceSpan};
pub use expr::Expr;
pub use num::{Duration, Rational, TimeUnit};
