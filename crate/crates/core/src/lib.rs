//! Single index bandits with Stein's-identity direction estimates.
//!
//! Rewards follow `y = f(x'θ*) + ε` for an unknown monotone `f`. The
//! policies here estimate the direction of `θ*` from the score of the context
//! distribution alone, so they never need `f`.
//!
//! ```
//! use std::sync::Arc;
//! use sib_core::{
//!     run_policy, stream, streams, EnvStreams, GaussianContext, LinkFunction, SibEnvironment,
//!     Stor, StorConfig,
//! };
//!
//! let dist = Arc::new(GaussianContext::standard(5)?);
//! let env = SibEnvironment::generate(dist.clone(), 10, LinkFunction::Linear, 0.1, None, &mut stream(1, streams::THETA))?;
//! let mut stor = Stor::new(StorConfig::new(2_000, 0.05), dist, stream(1, streams::POLICY))?;
//! let trace = run_policy(&mut stor, &env, 2_000, &mut EnvStreams::new(1));
//! assert_eq!(trace.len(), 2_000);
//! assert!(trace.aborted.is_none());
//! # Ok::<(), sib_core::Error>(())
//! ```

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distribution;
pub mod environment;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod policies;
pub mod rng;

pub use distribution::{epoch_score, ContextDistribution, EpochScore, GaussianContext, ProjectionLaw};
pub use environment::{CustomLink, LinkFunction, RoundOutcome, SibEnvironment};
pub use error::{Error, Result};
pub use estimator::{
    estimate, gstor_normalize, soft_threshold, theoretical_lambda, theoretical_tau, truncate, Estimate,
    EstimatorConfig, SampleBatch,
};
pub use kernel::KernelFit;
pub use policies::{
    play_round, run_policy, Diagnostics, EnvStreams, Estor, EstorConfig, Gstor, GstorConfig, Policy, RegretTrace, Stor,
    StorConfig,
};
pub use rng::{name_tag, split_seed, stream, streams, SimRng};
