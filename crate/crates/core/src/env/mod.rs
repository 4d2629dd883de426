//! The decision environment: channel sampling, state assembly, action
//! decoding per operating scheme, inner-solver invocation, and reward
//! shaping — plus an exhaustive enumeration oracle for small surfaces and
//! a synthetic stub bandit for agent sanity checks.
//!
//! One environment step is one block-fading frame: the agent observes
//! channel magnitudes, picks per-element modes (and amplification levels),
//! the inner convex program allocates energies and time under that
//! assignment, and the negated scaled min-max energy comes back as the
//! reward. Channel realizations are independent across steps, so the
//! process is a contextual bandit; discounting is configured out by the
//! agent (γ = 0), not assumed here.

pub mod config;
pub mod oracle;
pub mod ris_env;
pub mod stub;

pub use config::{dbm_to_watts, rho_bucket_value, EnvConfig, Scheme};
pub use oracle::{enumerate_oracle, OracleOutcome, MAX_ORACLE_ELEMENTS};
pub use ris_env::{build_state, build_state_compact, RisEnv, StepRecord};
pub use stub::StubBandit;

use thiserror::Error;

/// Environment-layer failures. Infeasibility of the inner problem is *not*
/// an error — it maps to the penalty reward. A solver breakdown (iteration
/// cap, invalid problem data) does surface here so it can never be
/// mistaken for infeasibility.
#[derive(Debug, Error)]
pub enum EnvError {
    /// Geometry or fading-parameter validation failed.
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    /// Mode/parameter validation or problem assembly failed.
    #[error(transparent)]
    SysModel(#[from] crate::sysmodel::SysModelError),
    /// The inner solver failed (distinct from an infeasible verdict).
    #[error("inner solver failure: {0}")]
    Solver(#[from] crate::inner::InnerError),
    /// An action index fell outside its head's range or had wrong arity.
    #[error("invalid action: {0}")]
    InvalidAction(String),
    /// An environment configuration field violated its invariant.
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    /// The enumeration oracle was asked for more elements than it can
    /// exhaust.
    #[error("oracle refused: {n} elements exceeds the exhaustive limit of {max}")]
    TooManyElements { n: usize, max: usize },
}
