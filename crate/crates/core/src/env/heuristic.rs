//! Scripted opponent. With probability `strength` the script reacts to the
//! current state; otherwise it emits `Idle`, which keeps whatever movement
//! the player was already doing.

use rand::Rng;

use super::geom::Vec2;
use super::sim::{CONTROL_RADIUS, SLIDE_REACH};
use super::types::{Action, Compass, MatchState, PlayerRef, Team};

pub const SHOOT_RANGE: f64 = 0.35;
pub const PRESSURE_RADIUS: f64 = 0.06;
const ARRIVE_RADIUS: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeuristicDecision {
    /// Whether the script reacted this step.
    pub fresh: bool,
    pub action: Action,
}

pub fn heuristic_action<R: Rng + ?Sized>(
    state: &MatchState,
    team: Team,
    player_index: usize,
    strength: f64,
    rng: &mut R,
) -> Action {
    heuristic_decide(state, team, player_index, strength, rng).action
}

/// Like [`heuristic_action`] but also reports whether the decision was fresh.
/// Exactly one uniform draw is consumed per call.
pub fn heuristic_decide<R: Rng + ?Sized>(
    state: &MatchState,
    team: Team,
    player_index: usize,
    strength: f64,
    rng: &mut R,
) -> HeuristicDecision {
    let u: f64 = rng.random();
    if u < strength {
        HeuristicDecision {
            fresh: true,
            action: scripted(state, PlayerRef::new(team, player_index)),
        }
    } else {
        HeuristicDecision {
            fresh: false,
            action: Action::Idle,
        }
    }
}

/// Move towards `target` given in the team's own (attacking +x) frame.
fn move_to(me: Vec2, target: Vec2, sign: f64) -> Action {
    let d = target - me;
    if d.norm() < ARRIVE_RADIUS {
        return Action::ReleaseDirection;
    }
    match Compass::nearest(d * sign) {
        Some(c) => Action::Move(c),
        None => Action::ReleaseDirection,
    }
}

/// Deterministic scripted decision for one player.
pub fn scripted(s: &MatchState, r: PlayerRef) -> Action {
    let sign = r.team.attack_sign();
    // Work in the team's frame: attacking towards +x.
    let norm = |v: Vec2| v * sign;
    let me = norm(s.player(r).position);
    let ball = norm(s.ball.position);
    let own = s.team(r.team);
    let opp = s.team(r.team.opponent());
    let goal = Vec2::new(s.field.half_length(), 0.0);

    if s.ball.controller == Some(r) {
        if me.dist(goal) < SHOOT_RANGE {
            return Action::Shot;
        }
        let pressed = opp.iter().any(|o| norm(o.position).dist(me) < PRESSURE_RADIUS);
        if pressed && own.len() > 1 {
            return Action::ShortPass;
        }
        return move_to(me, goal, sign);
    }

    let keeper = own.len() > 1 && r.index == 0;
    let possession = s.possession();
    if keeper && possession == Some(r.team) {
        return move_to(me, keeper_spot(goal, ball), sign);
    }
    if possession == Some(r.team) {
        // Support the attack from an advanced formation slot.
        let slot = norm(s.formation(r.team)[r.index]);
        let target = Vec2::new(0.5 * slot.x + 0.5 * ball.x + 0.15, slot.y);
        return move_to(me, target, sign);
    }

    let closest = (0..own.len())
        .min_by(|&a, &b| {
            let da = norm(own[a].position).dist(ball);
            let db = norm(own[b].position).dist(ball);
            da.partial_cmp(&db).unwrap()
        })
        .unwrap_or(r.index);
    if closest == r.index {
        let carrier_near = possession == Some(r.team.opponent()) && me.dist(ball) < SLIDE_REACH - 0.005;
        if carrier_near && s.player(r).sliding_cooldown == 0 {
            return Action::Slide;
        }
        if me.dist(ball) < CONTROL_RADIUS {
            return Action::ReleaseDirection;
        }
        return move_to(me, ball, sign);
    }
    if keeper {
        return move_to(me, keeper_spot(goal, ball), sign);
    }
    let slot = norm(s.formation(r.team)[r.index]);
    let target = slot * 0.7 + ball * 0.3;
    move_to(me, target, sign)
}

/// Keeper position: on its own goal line, shadowing the ball.
fn keeper_spot(goal: Vec2, ball: Vec2) -> Vec2 {
    Vec2::new(-0.92 * goal.x, (0.3 * ball.y).clamp(-0.06, 0.06))
}
