//! Declarative compound-AI workflow orchestration.
//!
//! A job spec names what to do and which objective matters. The planner lowers
//! it to a [`model::WorkflowDag`], the optimizer picks implementations and
//! hardware for every node, and the runtime plays the result forward on a
//! simulated heterogeneous cluster.

pub mod cluster;
pub mod fixtures;
pub mod library;
pub mod model;
pub mod optimizer;
pub mod planner;
pub mod runtime;
#[cfg(feature = "synth")]
pub mod synth;
