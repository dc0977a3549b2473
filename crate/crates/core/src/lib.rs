//! Simulator and solver library for communication-efficient federated
//! multi-objective optimization.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense matrices, seeded streams, simplex projection and randomized SVD.
//! - [`compression`]: budgeted Jacobian compressors (randomized SVD, top-k,
//!   random masking, unbiased rand-k) and the nRMSE error metric.
//! - [`weights`]: the task-weight solvers (projected-gradient MGDA weights, the
//!   exact min-norm oracle and the preference-constrained linear program).
//! - [`objectives`]: synthetic multi-objective problem families with per-client
//!   stochastic oracles and Dirichlet data partitioning.
//! - [`federation`]: round engines (FedCMOO, FedCMOO-Pref, FSMGDA, scalarized FedAvg)
//!   and the Gram-matrix estimators.
//! - [`metrics`]: stationarity, the communication ledger, Δ_M and the nRMSE protocol.
//! - [`config`]: the TOML/JSON experiment configuration and output writers.

pub mod compression;
pub mod config;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod objectives;
pub mod tensor;
pub mod weights;

pub use error::{FedMooError, Result};
