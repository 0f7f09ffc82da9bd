//! Repeated two-player games with asymmetric information about which game
//! is being played: Stackelberg commitment, no-swap-regret learning, and
//! Monte-Carlo audits of the induced meta-game.

pub mod audit;
pub mod builtin;
pub mod engine;
pub mod error;
pub mod game;
pub mod learners;
pub mod lp;
pub mod rng;
pub mod solve;
pub mod stats;

pub use error::{Error, Result};
pub use game::{
    csp_from_trajectory, expected_utility, mix_csps, sample_signal, Csp, FeedbackRecord,
    GameMatrix, MixedStrategy, Player, Prior, Round, SignalModel, Trajectory,
};
pub use learners::{FeedbackMode, LearnerContext, LearnerSpec, LearnerState};
pub use solve::{stackelberg_value, stackval_prior, StackelbergSolution};
