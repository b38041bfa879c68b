//! Deterministic federated-learning simulation for activity recognition,
//! with shared/private layer partitioning and the server-side attribute and
//! membership inference attacks used to measure what the exchanged updates leak.

pub mod error;
pub mod attacks;
pub mod config;
pub mod data;
pub mod exec;
pub mod federation;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod seed;

pub use error::{Error, Result};
pub use exec::Execution;
