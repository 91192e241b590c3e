//! Effective-connectivity estimation from multivariate time series.
//!
//! The pipeline runs in stages: simulate or load a cohort of time series,
//! score every directed channel pair with a reservoir-computing causality
//! measure (or a Granger baseline), standardize the resulting connectivity
//! matrices against the control group, binarize them into directed graphs,
//! classify subjects from node-level topological profiles, and explain the
//! classifier's decisions edge by edge.

pub mod atlas;
pub mod crossval;
pub mod ec;
pub mod error;
pub mod explain;
pub mod forest;
pub mod gcn;
pub mod granger;
pub mod graph;
pub mod metrics;
pub mod rcc;
pub mod reservoir;
pub mod seeding;
pub mod stats;
pub mod timeseries;

pub(crate) mod table;

pub use error::{Error, Result};
