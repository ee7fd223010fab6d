use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geom::Vec2;
use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Total length; the pitch spans `x in [-length/2, length/2]`.
    pub length: f64,
    /// Total width; the pitch spans `y in [-width/2, width/2]`.
    pub width: f64,
    pub goal_half_width: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            length: 2.0,
            width: 0.84,
            goal_half_width: 0.08,
        }
    }
}

impl FieldConfig {
    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x.abs() <= self.half_length() && p.y.abs() <= self.half_width()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.length > 0.0 && self.width > 0.0,
            Config,
            "field dimensions must be positive (length {}, width {})",
            self.length,
            self.width
        );
        ensure!(
            self.goal_half_width > 0.0 && self.goal_half_width < self.width / 2.0,
            Config,
            "goal_half_width {} must lie in (0, width/2)",
            self.goal_half_width
        );
        Ok(())
    }
}

/// Everything needed to start an episode. Stored as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub players_per_team: usize,
    pub episode_step_limit: u32,
    pub terminate_on_score_or_fault: bool,
    pub offside_enabled: bool,
    pub opponent_strength: f64,
    pub home_positions: Vec<[f64; 2]>,
    pub away_positions: Vec<[f64; 2]>,
    pub ball_start: [f64; 2],
    pub seed: u64,
    #[serde(default)]
    pub field: FieldConfig,
}

pub const CURRICULUM_STEP_LIMIT: u32 = 500;
pub const SELF_PLAY_STEP_LIMIT: u32 = 3000;
/// Last curriculum scenario that still moves the home team upfield.
pub const CURRICULUM_SHIFT_STAGES: u32 = 8;
const CURRICULUM_MAX_SHIFT: f64 = 0.6;

/// Kick-off shape for the home team (attacking +x): keeper, rows of
/// outfield players, and a striker standing next to the centre spot.
pub fn home_formation(n: usize) -> Vec<Vec2> {
    let striker = Vec2::new(-0.015, 0.0);
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![striker];
    }
    let mut out = vec![Vec2::new(-0.92, 0.0)];
    let middle = n - 2;
    let rows = middle.div_ceil(4);
    let mut placed = 0;
    for r in 0..rows {
        let in_row = (middle - placed).min(4).min(middle.div_ceil(rows));
        let x = if rows == 1 {
            -0.5
        } else {
            -0.65 + 0.5 * r as f64 / (rows - 1) as f64
        };
        let spacing = if in_row > 1 {
            (0.6 / (in_row - 1) as f64).min(0.4)
        } else {
            0.0
        };
        for j in 0..in_row {
            let y = (j as f64 - (in_row - 1) as f64 / 2.0) * spacing;
            out.push(Vec2::new(x, y));
        }
        placed += in_row;
    }
    out.push(striker);
    out
}

/// Away shape: the point reflection of the home shape, with the striker
/// kept back from the centre spot so it does not contest the kick-off.
pub fn away_formation(n: usize) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = home_formation(n).into_iter().map(|p| -p).collect();
    if let Some(last) = out.last_mut() {
        *last = Vec2::new(0.15, 0.0);
    }
    out
}

fn to_pairs(v: &[Vec2]) -> Vec<[f64; 2]> {
    v.iter().map(|p| [p.x, p.y]).collect()
}

impl ScenarioConfig {
    /// Full-pitch kick-off game, home team in possession.
    pub fn kickoff(n: usize) -> Self {
        Self {
            name: format!("kickoff_{n}v{n}"),
            players_per_team: n,
            episode_step_limit: SELF_PLAY_STEP_LIMIT,
            terminate_on_score_or_fault: false,
            offside_enabled: true,
            opponent_strength: 1.0,
            home_positions: to_pairs(&home_formation(n)),
            away_positions: to_pairs(&away_formation(n)),
            ball_start: [0.0, 0.0],
            seed: 0,
            field: FieldConfig::default(),
        }
    }

    /// Self-play match: 3000 steps, play restarts after goals and stoppages.
    pub fn self_play(n: usize) -> Self {
        Self {
            name: format!("self_play_{n}v{n}"),
            ..Self::kickoff(n)
        }
    }

    /// Curriculum scenario `k` (1-based). Early scenarios start the home
    /// team close to the opponent goal; from scenario 8 on the start is a
    /// regular kick-off. Episodes end on the first goal, foul or stoppage.
    pub fn curriculum(k: u32, n: usize, opponent_strength: f64) -> Self {
        let shift = if k < CURRICULUM_SHIFT_STAGES {
            CURRICULUM_MAX_SHIFT * (CURRICULUM_SHIFT_STAGES - k) as f64 / (CURRICULUM_SHIFT_STAGES - 1) as f64
        } else {
            0.0
        };
        let home: Vec<Vec2> = home_formation(n)
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                // The keeper stays home.
                if n > 1 && i == 0 {
                    p
                } else {
                    p + Vec2::new(shift, 0.0)
                }
            })
            .collect();
        let ball = home.last().copied().unwrap_or_default() + Vec2::new(0.015, 0.0);
        Self {
            name: format!("curriculum_{k}"),
            players_per_team: n,
            episode_step_limit: CURRICULUM_STEP_LIMIT,
            terminate_on_score_or_fault: true,
            offside_enabled: false,
            opponent_strength,
            home_positions: to_pairs(&home),
            away_positions: to_pairs(&away_formation(n)),
            ball_start: [ball.x, ball.y],
            seed: 0,
            field: FieldConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        let n = self.players_per_team;
        ensure!(n >= 1, Config, "players_per_team must be at least 1");
        ensure!(
            self.home_positions.len() == n && self.away_positions.len() == n,
            Config,
            "expected {n} initial positions per team, got {} home and {} away",
            self.home_positions.len(),
            self.away_positions.len()
        );
        ensure!(
            self.episode_step_limit > 0,
            Config,
            "episode_step_limit must be positive"
        );
        ensure!(
            self.opponent_strength > 0.0 && self.opponent_strength <= 1.0,
            Config,
            "opponent_strength {} outside (0, 1]",
            self.opponent_strength
        );
        let inside = |p: &[f64; 2]| p[0].is_finite() && p[1].is_finite() && self.field.contains(Vec2::new(p[0], p[1]));
        ensure!(
            self.home_positions.iter().chain(&self.away_positions).all(inside) && inside(&self.ball_start),
            Config,
            "initial positions must lie on the pitch"
        );
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}
