//! Multi-task twin support vector machines with Universum data.
//!
//! Four classifiers share one pipeline: tasks are stacked into augmented
//! blocks, each of the two twin problems becomes either a box-constrained QP
//! ([`qp`]) or an SPD linear system ([`lsys`]), and the per-task planes are
//! recovered as a common plane plus a task offset.

pub mod assembly;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod kernel;
pub mod lsys;
pub mod models;
pub mod qp;
pub mod universum;

pub use error::{Error, Result};
pub use models::{fit, Hyperparams, Method, TrainedModel};
