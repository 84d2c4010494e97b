//! Minimal reverse-mode automatic differentiation over `f32` matrices.
//!
//! Training code builds a fresh [`Tape`] per step, inserts parameters as
//! leaves, composes ops, and calls [`Tape::backward`]. Every op carries a
//! hand-written backward rule; the unit tests check each rule against central
//! finite differences. Inference paths elsewhere in the crate use the plain
//! helpers in [`math`] so the two stay numerically aligned.

pub mod adam;
pub mod gru;
pub mod init;
pub mod math;
pub mod tape;

pub use adam::Adam;
pub use gru::{BiGru, BiGruVars, GruParams, GruVars};
pub use tape::{Grads, Tape, Var};
