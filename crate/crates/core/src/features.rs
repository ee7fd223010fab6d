//! State encoders for the networks.
//!
//! Actor observation for agent `i` of a team with `N` players per side and a
//! `d`-dimensional player-ID encoding, in the team's own frame (attacking +x):
//!
//! | block        | width     | contents                                              |
//! |--------------|-----------|-------------------------------------------------------|
//! | own          | 7         | x, y, vx, vy, tiredness, sprinting, dribbling         |
//! | ball         | 9         | rel x, rel y, vx, vy, aerial, controller one-hot (mine, teammate, opponent, none) |
//! | teammates    | 4(N-1)    | rel x, rel y, vx, vy per teammate (index order)       |
//! | opponents    | 4N        | rel x, rel y, vx, vy per opponent (index order)       |
//! | context      | 3         | score difference, steps remaining fraction, offside   |
//! | player id    | d         | sinusoidal encoding of the agent index                |
//!
//! so `dim = 8N + 15 + d`. Critic state, from the home perspective:
//! home players then away players (x, y, vx, vy each), ball (x, y, vx, vy,
//! aerial), possession (+1 home, -1 away, 0 none), both scores and the
//! elapsed-time fraction, so `dim = 8N + 9`.
//!
//! Positions are divided by the half-length / half-width, relative positions
//! by the full length / width, player velocities by the sprint speed and ball
//! velocities by the shot speed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{offside_position, MatchState, PlayerRef, Team, Vec2, MAX_SPEED, SHOT_SPEED, SPRINT_FACTOR};
use crate::error::{ensure, Error, Result};

pub const DEFAULT_PE_DIM: usize = 16;
const SCORE_SCALE: f64 = 5.0;

/// Sinusoidal encoding: `pe[2k] = sin(p / 10000^(2k/d))`, `pe[2k+1] = cos(..)`.
pub fn positional_encoding(player_id: usize, d_pe: usize) -> Result<Vec<f64>> {
    ensure!(
        d_pe >= 2 && d_pe.is_multiple_of(2),
        Config,
        "positional encoding width must be even and at least 2, got {d_pe}"
    );
    let p = player_id as f64;
    let mut out = Vec::with_capacity(d_pe);
    for k in 0..d_pe / 2 {
        let angle = p / 10000f64.powf(2.0 * k as f64 / d_pe as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

pub fn actor_dim(n: usize, d_pe: usize) -> usize {
    8 * n + 15 + d_pe
}

pub fn critic_dim(n: usize) -> usize {
    8 * n + 9
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub width: usize,
}

/// Named column ranges of an encoded vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub entries: Vec<LayoutEntry>,
}

impl FeatureLayout {
    fn build(blocks: Vec<(String, usize)>) -> Self {
        let mut offset = 0;
        let entries = blocks
            .into_iter()
            .map(|(name, width)| {
                let e = LayoutEntry { name, offset, width };
                offset += width;
                e
            })
            .collect();
        Self { entries }
    }

    pub fn actor(n: usize, d_pe: usize) -> Self {
        let mut b = vec![("own".to_string(), 7), ("ball".to_string(), 9)];
        for j in 0..n.saturating_sub(1) {
            b.push((format!("teammate_{j}"), 4));
        }
        for j in 0..n {
            b.push((format!("opponent_{j}"), 4));
        }
        b.push(("context".to_string(), 3));
        b.push(("player_id".to_string(), d_pe));
        Self::build(b)
    }

    pub fn critic(n: usize) -> Self {
        let mut b = Vec::new();
        for j in 0..n {
            b.push((format!("home_{j}"), 4));
        }
        for j in 0..n {
            b.push((format!("away_{j}"), 4));
        }
        b.push(("ball".to_string(), 5));
        b.push(("possession".to_string(), 1));
        b.push(("score".to_string(), 2));
        b.push(("time".to_string(), 1));
        Self::build(b)
    }

    pub fn dim(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.width)
    }

    pub fn get(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(e.to_string()))?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reusable encoder with the player-ID encodings precomputed.
#[derive(Clone, Debug)]
pub struct FeatureEncoder {
    n: usize,
    d_pe: usize,
    pe: Vec<Vec<f64>>,
}

impl FeatureEncoder {
    pub fn new(n: usize, d_pe: usize) -> Result<Self> {
        ensure!(n >= 1, Config, "players_per_team must be at least 1");
        let pe = (0..n).map(|i| positional_encoding(i, d_pe)).collect::<Result<_>>()?;
        Ok(Self { n, d_pe, pe })
    }

    pub fn players_per_team(&self) -> usize {
        self.n
    }

    pub fn pe_dim(&self) -> usize {
        self.d_pe
    }

    pub fn actor_dim(&self) -> usize {
        actor_dim(self.n, self.d_pe)
    }

    pub fn critic_dim(&self) -> usize {
        critic_dim(self.n)
    }

    fn check(&self, state: &MatchState) -> Result<()> {
        ensure!(
            state.players_per_team() == self.n,
            Contract,
            "encoder built for {} players per team, state has {}",
            self.n,
            state.players_per_team()
        );
        Ok(())
    }

    /// Actor observation of `team`'s player `index`, written into `out`.
    pub fn actor_into(&self, state: &MatchState, team: Team, index: usize, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        self.append_actor(state, team, index, out)
    }

    /// Observations of every player of `team`, one row each, row-major.
    pub fn team_into(&self, state: &MatchState, team: Team, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for i in 0..self.n {
            self.append_actor(state, team, i, out)?;
        }
        Ok(())
    }

    fn append_actor(&self, state: &MatchState, team: Team, index: usize, out: &mut Vec<f64>) -> Result<()> {
        self.check(state)?;
        ensure!(
            index < self.n,
            Contract,
            "agent index {index} out of range for {} players",
            self.n
        );
        let f = &state.field;
        let (hl, hw) = (f.half_length(), f.half_width());
        let sign = team.attack_sign();
        let pos = |v: Vec2| Vec2::new(sign * v.x / hl, sign * v.y / hw);
        let rel = |v: Vec2| Vec2::new(sign * v.x / (2.0 * hl), sign * v.y / (2.0 * hw));
        let pvel = |v: Vec2| v * (sign / (MAX_SPEED * SPRINT_FACTOR));
        let bvel = |v: Vec2| v * (sign / SHOT_SPEED);
        let flag = |b: bool| if b { 1.0 } else { 0.0 };

        let me = &state.team(team)[index];
        let p = pos(me.position);
        let v = pvel(me.velocity);
        out.extend([p.x, p.y, v.x, v.y, me.tiredness, flag(me.sprinting), flag(me.dribbling)]);

        let ball = &state.ball;
        let r = rel(ball.position - me.position);
        let bv = bvel(ball.velocity);
        let ctrl = ball.controller;
        let mine = ctrl == Some(PlayerRef::new(team, index));
        let mate = ctrl.is_some_and(|c| c.team == team) && !mine;
        let opp = ctrl.is_some_and(|c| c.team != team);
        out.extend([
            r.x,
            r.y,
            bv.x,
            bv.y,
            flag(ball.is_aerial()),
            flag(mine),
            flag(mate),
            flag(opp),
            flag(ctrl.is_none()),
        ]);

        for (j, mate) in state.team(team).iter().enumerate() {
            if j == index {
                continue;
            }
            let r = rel(mate.position - me.position);
            let v = pvel(mate.velocity);
            out.extend([r.x, r.y, v.x, v.y]);
        }
        for o in state.team(team.opponent()) {
            let r = rel(o.position - me.position);
            let v = pvel(o.velocity);
            out.extend([r.x, r.y, v.x, v.y]);
        }

        let (own, other) = match team {
            Team::Home => state.score,
            Team::Away => (state.score.1, state.score.0),
        };
        let diff = ((own as f64 - other as f64) / SCORE_SCALE).clamp(-1.0, 1.0);
        let limit = state.rules.step_limit as f64;
        let remaining = (limit - state.step as f64).max(0.0) / limit;
        out.extend([diff, remaining, flag(offside_position(state, team, index))]);
        out.extend_from_slice(&self.pe[index]);
        Ok(())
    }

    pub fn actor(&self, state: &MatchState, team: Team, index: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.actor_dim());
        self.actor_into(state, team, index, &mut out)?;
        Ok(out)
    }

    pub fn critic_into(&self, state: &MatchState, out: &mut Vec<f64>) -> Result<()> {
        self.check(state)?;
        let f = &state.field;
        let (hl, hw) = (f.half_length(), f.half_width());
        out.clear();
        for p in state.home.iter().chain(&state.away) {
            let v = p.velocity * (1.0 / (MAX_SPEED * SPRINT_FACTOR));
            out.extend([p.position.x / hl, p.position.y / hw, v.x, v.y]);
        }
        let b = &state.ball;
        let bv = b.velocity * (1.0 / SHOT_SPEED);
        out.extend([
            b.position.x / hl,
            b.position.y / hw,
            bv.x,
            bv.y,
            if b.is_aerial() { 1.0 } else { 0.0 },
        ]);
        out.push(match state.possession() {
            Some(Team::Home) => 1.0,
            Some(Team::Away) => -1.0,
            None => 0.0,
        });
        out.extend([
            state.score.0 as f64 / SCORE_SCALE,
            state.score.1 as f64 / SCORE_SCALE,
            state.step as f64 / state.rules.step_limit as f64,
        ]);
        Ok(())
    }

    pub fn critic(&self, state: &MatchState) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.critic_dim());
        self.critic_into(state, &mut out)?;
        Ok(out)
    }
}

/// Actor observation with the default player-ID width.
pub fn actor_observation(state: &MatchState, team: Team, agent_index: usize) -> Result<Vec<f64>> {
    FeatureEncoder::new(state.players_per_team(), DEFAULT_PE_DIM)?.actor(state, team, agent_index)
}

pub fn critic_observation(state: &MatchState) -> Result<Vec<f64>> {
    FeatureEncoder::new(state.players_per_team(), DEFAULT_PE_DIM)?.critic(state)
}
