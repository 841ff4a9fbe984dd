//! Distributed non-parametric learning over an agent network.
//!
//! Every agent keeps kernel sufficient statistics `(psi, kappa)` on a shared
//! estimation grid, gossips compressed summary tuples to its neighbours and
//! combines whatever it has collected into a network-wide kernel estimate
//! carrying a high-probability error radius.
//!
//! Layout:
//! - [`estimator`]: kernels, per-agent statistics, the pooled reference estimate.
//! - [`confidence`]: the error-radius formulas and the self-normalized tail bound.
//! - [`protocol`]: summary tuples, tuple stores and the per-round agent behaviour.
//! - [`topology`]: connected undirected communication graphs.
//! - [`scenario`]: synthetic phenomena, samplers and estimation grids.
//! - [`harness`]: configuration, the synchronous simulator, experiments and export.

pub mod confidence;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod topology;

pub use error::{Error, Result};

/// Agents are numbered `0..m`.
pub type AgentId = usize;
