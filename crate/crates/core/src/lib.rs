//! Wireless-powered hybrid-RIS uplink optimizer.
//!
//! A hybrid reconfigurable intelligent surface (RIS) assists an uplink in
//! which wireless-powered users transmit to a base station over a two-phase
//! TDMA frame: phase 1 uses only the direct links, phase 2 adds the RIS
//! path. Each RIS element independently operates in one of three modes —
//! *idle* (off), *passive* (unit-gain reflection), or *active* (reflection
//! with amplification, which injects amplifier noise and draws energy from a
//! wirelessly powered energy-harvesting surface).
//!
//! Minimizing the maximum per-user transmit energy splits into two nested
//! problems:
//!
//! * an **inner convex program** over transmit energies and time allocation
//!   (given element modes and amplification factors), solved by a log-barrier
//!   interior-point method in [`inner`], and
//! * an **outer combinatorial search** over per-element modes and discrete
//!   amplification levels, handled by a PPO agent in [`agent`] acting on the
//!   environment in [`env`], or exhaustively by an enumeration oracle for
//!   small surfaces.
//!
//! Module map:
//!
//! * [`channel`] — geometry, path loss, Rayleigh/Rician fading with
//!   steering-vector line-of-sight components.
//! * [`sysmodel`] — element modes, co-phased effective links, and the energy
//!   accounting that feeds the inner problem.
//! * [`inner`] — the min-max energy convex program: solver, feasibility
//!   probe, and an independent grid-search oracle.
//! * [`agent`] — hand-rolled dense policy/value networks, PPO-clip updates,
//!   state normalization, and checkpoint serialization.
//! * [`env`] — the MDP wrapper: state assembly, action decoding per scheme,
//!   reward shaping, and the exhaustive mode oracle.
//! * [`harness`] — experiment configuration, training/sweep/report
//!   orchestration, and CSV emission.

pub mod agent;
pub mod channel;
pub mod env;
pub mod harness;
pub mod inner;
pub mod sysmodel;

pub use channel::{ChannelSet, Geometry, LinkParams, LinkSet};
pub use inner::{InnerProblem, InnerSolution, SolveStatus};
pub use sysmodel::{EffectiveLinks, EnergyCoefficients, Mode, ModeAssignment};
