//! Actor-critic agent over the composite per-element action space.
//!
//! The agent is a pair of small dense networks: a policy emitting factored
//! categorical heads (per element: reflect?, amplify?, quantized gain) and
//! a scalar critic. Training uses the clipped-surrogate objective with an
//! entropy bonus, GAE advantages (degenerating to `r − v` at `γ = 0`,
//! where every step is an independent bandit round), per-minibatch
//! advantage normalization, and plain SGD. States are z-score normalized
//! by a running [`Normalizer`]. The whole training state round-trips
//! through a versioned binary [`Checkpoint`].
//!
//! All gradients are hand-derived and covered by central finite-difference
//! tests; there is no autodiff anywhere.

pub mod checkpoint;
pub mod net;
pub mod normalizer;
pub mod policy;
pub mod ppo;

pub use checkpoint::{fnv1a_64, Checkpoint};
pub use net::{orthogonal, Dense, Forward, Grads};
pub use normalizer::Normalizer;
pub use policy::{ActionLayout, PolicyEval, PolicyNet, ValueNet, RHO_BUCKETS};
pub use ppo::{clip, gae_advantages, ppo_update, Diagnostics, PpoConfig, Trajectory};

use thiserror::Error;

/// Errors from the agent: malformed inputs, incompatible shapes, aborted
/// updates, and checkpoint problems.
#[derive(Debug, Error)]
pub enum AgentError {
    /// A state vector does not match the network input dimension.
    #[error("state dimension {got} does not match network input {expected}")]
    DimensionMismatch {
        /// Network input dimension.
        expected: usize,
        /// Offending state length.
        got: usize,
    },
    /// A composite action fails the layout's range checks.
    #[error("bad action: {0}")]
    BadAction(String),
    /// A trajectory fails validation (unfinalized, non-finite, misshaped).
    #[error("bad trajectory: {0}")]
    BadBatch(String),
    /// Hyperparameters out of range.
    #[error("bad PPO config: {0}")]
    BadConfig(String),
    /// A gradient went non-finite mid-update; parameters were restored.
    #[error("non-finite {what}; update aborted and parameters restored")]
    NonFinite {
        /// Which quantity blew up.
        what: &'static str,
    },
    /// Checkpoint file i/o failure.
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    /// Structurally invalid checkpoint contents.
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    /// The checkpoint was produced under a different configuration.
    #[error(
        "checkpoint config hash {found:#018x} does not match the current config {expected:#018x}"
    )]
    ConfigHashMismatch {
        /// Hash of the configuration now in effect.
        expected: u64,
        /// Hash stored in the file.
        found: u64,
    },
}
