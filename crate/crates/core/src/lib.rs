//! Load balancing across parallel finite-buffer FIFO queues when the balancer
//! only sees randomly delayed job acknowledgements.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: augmented queue state, duration distributions, the binomial
//!   acknowledgement model and the one-epoch generative simulator.
//! - [`reward`]: the reward catalog shared by planner and environment.
//! - [`belief`]: particle belief and the SIR update.
//! - [`planner`]: Monte Carlo tree search over the belief (UCT, rollouts,
//!   root advancement).
//! - [`baselines`]: full-information and limited-information routing rules.
//! - [`environment`]: the ground-truth continuous-time queueing network with
//!   common-random-number streams.
//! - [`policy`]: the uniform decision interface driven by the harness.
//! - [`inference`]: conjugate exponential inference and trace ingestion.
//! - [`experiment`]: config, CRN-coupled runs, CSV output and summaries.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod baselines;
pub mod belief;
pub mod environment;
mod error;
pub mod experiment;
pub mod inference;
pub mod model;
pub mod planner;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Action, AugmentedState, DistributionSpec, ModelParams, Observation, QueueParams};
pub use reward::RewardSpec;
