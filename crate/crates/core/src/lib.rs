//! Semi-supervised community detection on two-block stochastic block models
//! with a noisy label oracle.
//!
//! The core estimator relaxes the MAP assignment into the linear system
//! `(alpha I - A_tau + lambda P_L) X = lambda S` and labels nodes by the sign
//! of `X`. Around it sit samplers, exact enumeration for tiny graphs,
//! closed-form mean-field analytics, baselines and an experiment harness.

pub mod baselines;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod map_exact;
pub mod meanfield;
pub mod oracle;
pub mod ssl;

pub use error::{Error, Result};
pub use graph::{sample_ssbm, GroundTruth, ModelParams, SampleOptions, SparseGraph};
pub use oracle::{sample_oracle, OracleLabels};
pub use ssl::{run_algorithm1, AlphaPolicy, ScoreVector, SolverOptions, SslParams};
