//! Multi-product pipeline scheduling as a space-indexed MILP.
//!
//! The crate compiles declarative pipeline-network [`Instance`]s into a
//! solver-neutral [`MilpModel`], solves it through an external MILP solver
//! (optionally adding storage-capacity bounds lazily), and checks and scores
//! any resulting [`Schedule`] with an independent [`validator`].

pub mod catalog;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod generate;
pub mod instance;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod rational;
pub mod report;
pub mod schedule;
pub mod solver;
pub mod validator;

pub use catalog::{BatchCatalog, BatchSpec, Classification, PlacedBatchRef};
pub use error::{Error, Result};
pub use instance::{Instance, KeyPolicy};
pub use model::{build_model, BuildOptions, MilpModel};
pub use rational::Rational;
pub use schedule::{Placement, Schedule};
