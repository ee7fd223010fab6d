//! Simplified 2D football: N-vs-N point-mass players, one ball, the 18
//! discrete per-player actions, event detection and a scripted opponent.
//!
//! Coordinates are normalized: the pitch spans `x in [-1, 1]` and
//! `y in [-0.42, 0.42]` by default. The home team attacks towards `+x`.

mod config;
mod geom;
mod heuristic;
mod replay;
mod sim;
mod types;

pub use config::{
    away_formation, home_formation, FieldConfig, ScenarioConfig, CURRICULUM_SHIFT_STAGES, CURRICULUM_STEP_LIMIT,
    SELF_PLAY_STEP_LIMIT,
};
pub use geom::{segment_projection, Vec2};
pub use heuristic::{heuristic_action, heuristic_decide, scripted, HeuristicDecision, SHOOT_RANGE};
pub use replay::{read_replay, write_replay, ReplayRecord};
pub use sim::*;
pub use types::*;
