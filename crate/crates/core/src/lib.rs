//! Multi-agent reinforcement learning on a simplified football simulator.
//!
//! The crate is organised bottom-up: [`env`] simulates matches, [`features`]
//! turns states into network inputs, [`nn`] holds the dense networks and the
//! optimizer, [`policy`] the actor-critic losses, [`rewards`] the base and
//! intrinsic reward signals, [`rollout`] the parallel experience collection,
//! [`league`] the curriculum and self-play schedule, [`eval`] the evaluation
//! harness and [`driver`] the training loop tying everything together.

pub mod driver;
pub mod env;
pub mod error;
pub mod eval;
pub mod features;
pub mod league;
pub mod nn;
pub mod policy;
pub mod rewards;
pub mod rollout;
pub mod stats;

pub use error::{Error, Result};
