//! Trust-weighted aggregation of binary feedback from several unreliable
//! trainers, and an interactive SARSA learner driven by the aggregated
//! rewards.
//!
//! The crate is organised bottom-up:
//!
//! - [`trust`] keeps per-trainer evidence and turns it into trustworthiness.
//! - [`aggregate`] fuses a feedback set into a [`Decision`].
//! - [`memory`] archives feedback per state-action pair and decides when to
//!   ask trainers again.
//! - [`gridworld`] and [`sarsa`] provide the environment, the oracle and the
//!   learner.
//! - [`sim_trainers`] and [`experiments`] run the simulated studies.

pub mod aggregate;
pub mod error;
pub mod experiments;
pub mod feedback;
pub mod gridworld;
pub mod memory;
pub mod sarsa;
pub mod sim_trainers;
pub mod trust;

pub use aggregate::{bwve_decide, Decision, Method, Posterior, Reward};
pub use error::{Error, Result};
pub use feedback::{FeedbackEvent, FeedbackSet, Polarity, TrainerId};
pub use gridworld::{Action, GridMap, Pos};
pub use memory::{FeedbackArchive, ReviewModel, ReviewPolicy};
pub use sarsa::{LearnerConfig, QTable};
pub use trust::{TrustRecord, TrustStore};
