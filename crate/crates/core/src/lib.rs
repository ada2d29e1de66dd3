//! Bayes-optimal covariance testing over decomposable Gaussian graphical
//! models, split into per-cluster local statistics, with an ordered
//! transmission protocol that lets a fusion center stop collecting cluster
//! statistics as soon as the centralized decision is settled.
//!
//! Modules, bottom-up:
//!
//! - [`graph`]: perfect clique sequences, separators, q-mapping, zero-fill.
//! - [`model`]: per-clique covariances, global precision and covariance,
//!   scenario generators and Gaussian sampling.
//! - [`statistic`]: coefficient schedules, local statistics `L_k`, the
//!   centralized statistic `T(x)` and the Bayes decision.
//! - [`protocol`]: the ordered transmission simulation.
//! - [`bounds`]: lower bounds on transmissions saved and diagnostics.
//! - [`experiment`]: Monte Carlo harness, sweeps and CSV output.
//! - [`config`]: JSON configuration.

pub mod bounds;
pub mod config;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod rng;
pub mod statistic;

use serde::{Deserialize, Serialize};

pub use error::{Error, ErrorKind, Result};

/// The two hypotheses: `H0: x ~ N(0, I)` and `H1: x ~ N(0, Σ)`.
///
/// Also used as the decision type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

pub type Decision = Hypothesis;
