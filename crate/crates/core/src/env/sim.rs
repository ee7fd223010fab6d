//! Kinematic point-mass football dynamics.
//!
//! One call to [`step`] runs, in order: action bookkeeping, the ball
//! carrier's kick (passes launch the ball, shots resolve immediately),
//! player movement, ball movement, boundary checks, ball capture, slide
//! tackles and steals. The first stoppage (goal, foul, ball out of play)
//! ends the step's dynamics; the match then either terminates (curriculum
//! rules) or restarts play.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ScenarioConfig;
use super::geom::{segment_projection, Vec2};
use super::types::*;
use crate::error::{ensure, Result};

pub const MAX_SPEED: f64 = 0.012;
pub const SPRINT_FACTOR: f64 = 1.5;
pub const DRIBBLE_FACTOR: f64 = 0.8;
pub const TIRE_RATE: f64 = 0.001;
pub const RECOVER_RATE: f64 = 0.0005;
pub const TIRED_SLOWDOWN: f64 = 0.3;
pub const CONTROL_RADIUS: f64 = 0.02;
pub const SHORT_PASS_SPEED: f64 = 0.03;
pub const LONG_PASS_SPEED: f64 = 0.045;
pub const HIGH_PASS_SPEED: f64 = 0.04;
pub const SHOT_SPEED: f64 = 0.05;
pub const BALL_FRICTION: f64 = 0.985;
pub const BALL_STOP_SPEED: f64 = 0.002;
pub const STEAL_RADIUS: f64 = 0.03;
pub const STEAL_PROB: f64 = 0.1;
/// Steal probability multiplier against a dribbling carrier.
pub const DRIBBLE_PROTECTION: f64 = 0.4;
pub const SLIDE_REACH: f64 = 0.04;
pub const SLIDE_SPEED: f64 = 0.02;
pub const SLIDE_COOLDOWN: u32 = 8;
pub const SHOT_NOISE_BASE: f64 = 0.02;
pub const SHOT_NOISE_PER_DIST: f64 = 0.15;
pub const BLOCK_RADIUS: f64 = 0.025;
pub const BLOCK_PROB: f64 = 0.5;
/// How far past the lines a player may run.
pub const PLAYER_MARGIN: f64 = 0.05;
pub const PASSER_GRACE: u32 = 2;
/// Fraction of a high pass spent in the air.
pub const HIGH_PASS_AIR_FRACTION: f64 = 0.6;
const RESTART_CLEARANCE: f64 = 0.06;
const KICKOFF_OFFSET: f64 = 0.015;
const KICKOFF_OPPONENT_DISTANCE: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassKind {
    Short,
    Long,
    High,
}

impl PassKind {
    fn speed(self) -> f64 {
        match self {
            PassKind::Short => SHORT_PASS_SPEED,
            PassKind::Long => LONG_PASS_SPEED,
            PassKind::High => HIGH_PASS_SPEED,
        }
    }

    fn preferred_distance(self) -> f64 {
        match self {
            PassKind::Short => 0.2,
            PassKind::Long => 0.5,
            PassKind::High => 0.45,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Stoppage {
    Goal(Team),
    Foul { by: Team, at: Vec2 },
    Out { team: Team, at: Vec2 },
}

/// Build the initial state of an episode.
pub fn reset(scenario: &ScenarioConfig, seed: u64) -> Result<MatchState> {
    scenario.validate()?;
    let to_vec = |v: &[[f64; 2]]| v.iter().map(|p| Vec2::new(p[0], p[1])).collect::<Vec<_>>();
    let formation_home = to_vec(&scenario.home_positions);
    let formation_away = to_vec(&scenario.away_positions);
    let mut s = MatchState {
        field: scenario.field.clone(),
        rules: MatchRules {
            step_limit: scenario.episode_step_limit,
            terminate_on_score_or_fault: scenario.terminate_on_score_or_fault,
            offside_enabled: scenario.offside_enabled,
        },
        home: formation_home.iter().map(|p| PlayerState::at(*p)).collect(),
        away: formation_away.iter().map(|p| PlayerState::at(*p)).collect(),
        ball: BallState::at_rest(Vec2::new(scenario.ball_start[0], scenario.ball_start[1])),
        score: (0, 0),
        step: 0,
        last_touch: None,
        terminated: false,
        formation_home,
        formation_away,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut events = Vec::new();
    let ball = s.ball.position;
    // Give the ball to whoever stands on it.
    let _ = try_capture(&mut s, ball, &mut events);
    Ok(s)
}

/// Advance the match by one step.
pub fn step(state: &MatchState, home: &[Action], away: &[Action]) -> Result<StepResult> {
    ensure!(
        !state.terminated,
        State,
        "cannot step a terminated match (step {})",
        state.step
    );
    let n = state.players_per_team();
    ensure!(
        home.len() == n && away.len() == n,
        Contract,
        "expected {n} actions per team, got {} home and {} away",
        home.len(),
        away.len()
    );
    let mut s = state.clone();
    let mut events = Vec::new();
    let stoppage = advance(&mut s, home, away, &mut events);
    s.step += 1;
    let mut cause = stoppage.and_then(|st| apply_stoppage(&mut s, st));
    if cause.is_none() && s.step >= s.rules.step_limit {
        s.terminated = true;
        cause = Some(TerminationCause::StepLimit);
    }
    let scoring_reward_home = events
        .iter()
        .map(|e| match e {
            Event::Goal { team: Team::Home } => 1,
            Event::Goal { team: Team::Away } => -1,
            _ => 0,
        })
        .sum();
    Ok(StepResult {
        terminated: s.terminated,
        next_state: s,
        events,
        scoring_reward_home,
        termination_cause: cause,
    })
}

fn refs(n: usize) -> impl Iterator<Item = PlayerRef> {
    [Team::Home, Team::Away]
        .into_iter()
        .flat_map(move |t| (0..n).map(move |i| PlayerRef::new(t, i)))
}

fn advance(s: &mut MatchState, home: &[Action], away: &[Action], events: &mut Vec<Event>) -> Option<Stoppage> {
    let n = s.players_per_team();
    let mut kick = None;
    let mut sliders = Vec::new();
    let mut recovering = vec![false; 2 * n];
    for (k, r) in refs(n).enumerate() {
        let action = match r.team {
            Team::Home => home[r.index],
            Team::Away => away[r.index],
        };
        let is_carrier = s.ball.controller == Some(r);
        let p = s.player_mut(r);
        if p.sliding_cooldown > 0 {
            p.sliding_cooldown -= 1;
            recovering[k] = true;
            continue;
        }
        match action {
            Action::Idle => {}
            Action::Move(d) => p.direction = Some(d),
            Action::ReleaseDirection => {
                p.direction = None;
                p.dribbling = false;
            }
            Action::Sprint => p.sprinting = true,
            Action::ReleaseSprint => p.sprinting = false,
            Action::Dribble => p.dribbling = true,
            Action::Slide if !is_carrier => {
                p.sliding_cooldown = SLIDE_COOLDOWN;
                sliders.push(r);
            }
            Action::Slide => {}
            Action::ShortPass | Action::LongPass | Action::HighPass | Action::Shot => {
                if is_carrier {
                    kick = Some((r, action));
                }
            }
        }
    }

    if let Some((r, action)) = kick {
        let kind = match action {
            Action::ShortPass => PassKind::Short,
            Action::LongPass => PassKind::Long,
            Action::HighPass => PassKind::High,
            _ => {
                if let Some(st) = resolve_shot(s, r, events) {
                    return Some(st);
                }
                return None;
            }
        };
        launch_pass(s, r, kind);
    }

    move_players(s, &sliders, &recovering);

    let ball_prev = s.ball.position;
    let carrier_prev = s.ball.controller.map(|c| s.player(c).position - s.player(c).velocity);
    move_ball(s);
    let prev = carrier_prev.unwrap_or(ball_prev);
    if let Some(st) = check_ball_out(s, prev, events) {
        return Some(st);
    }
    if let Some(st) = try_capture(s, ball_prev, events) {
        return Some(st);
    }
    if let Some(st) = resolve_slides(s, &sliders, events) {
        return Some(st);
    }
    resolve_steals(s);

    if s.ball.controller.is_none() && s.ball.velocity == Vec2::ZERO {
        if let Some(f) = s.ball.flight.take() {
            events.push(Event::PassAttempt {
                team: f.team,
                good: false,
            });
        }
    }
    None
}

fn take_control(s: &mut MatchState, r: PlayerRef) {
    let (pos, vel) = (s.player(r).position, s.player(r).velocity);
    s.ball.position = pos;
    s.ball.velocity = vel;
    s.ball.aerial_steps = 0;
    s.ball.controller = Some(r);
    s.last_touch = Some(r);
}

/// Whether `team`'s player would be offside if passed to right now: in the
/// opponent half, ahead of the ball and beyond the second-last defender.
pub fn offside_position(s: &MatchState, team: Team, index: usize) -> bool {
    if !s.rules.offside_enabled {
        return false;
    }
    let sign = team.attack_sign();
    let x = sign * s.team(team)[index].position.x;
    let mut xs: Vec<f64> = s.team(team.opponent()).iter().map(|p| sign * p.position.x).collect();
    xs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let line = if xs.len() >= 2 { xs[1] } else { xs[0] };
    x > 0.0 && x > sign * s.ball.position.x && x > line
}

/// Teammate the pass is meant for: best aligned with the passer's facing
/// (or the attacking direction), favouring the kind's preferred distance.
fn pass_receiver(s: &MatchState, r: PlayerRef, kind: PassKind) -> Option<usize> {
    let me = s.player(r);
    let hint = me
        .direction
        .map(Compass::vector)
        .unwrap_or(Vec2::new(r.team.attack_sign(), 0.0));
    let mut best: Option<(f64, usize)> = None;
    for (j, mate) in s.team(r.team).iter().enumerate() {
        if j == r.index {
            continue;
        }
        let d = mate.position - me.position;
        let dist = d.norm();
        let score = d.unit().dot(hint) - 0.5 * (dist - kind.preferred_distance()).abs();
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, j));
        }
    }
    best.map(|(_, j)| j)
}

fn launch_pass(s: &mut MatchState, r: PlayerRef, kind: PassKind) {
    let sign = r.team.attack_sign();
    let from = s.player(r).position;
    let aim = match pass_receiver(s, r, kind) {
        Some(j) => s.team(r.team)[j].position - from,
        None => s
            .player(r)
            .direction
            .map(Compass::vector)
            .unwrap_or(Vec2::new(sign, 0.0)),
    };
    let dir = if aim.norm() > 0.0 {
        aim.unit()
    } else {
        Vec2::new(sign, 0.0)
    };
    s.ball.position = from;
    let offside = (0..s.players_per_team())
        .map(|j| j != r.index && offside_position(s, r.team, j))
        .collect();
    s.ball.velocity = dir * kind.speed();
    s.ball.aerial_steps = if kind == PassKind::High {
        (HIGH_PASS_AIR_FRACTION * aim.norm() / kind.speed()).ceil() as u32
    } else {
        0
    };
    s.ball.controller = None;
    s.ball.flight = Some(PassFlight {
        team: r.team,
        passer: r.index,
        passer_grace: PASSER_GRACE,
        offside,
    });
    s.last_touch = Some(r);
}

fn resolve_shot(s: &mut MatchState, r: PlayerRef, events: &mut Vec<Event>) -> Option<Stoppage> {
    let team = r.team;
    let sign = team.attack_sign();
    let from = s.player(r).position;
    let goal = Vec2::new(sign * s.field.half_length(), 0.0);
    let to_goal = goal - from;
    let sigma = SHOT_NOISE_BASE + SHOT_NOISE_PER_DIST * to_goal.norm();
    let theta: f64 = sigma * s.rng.sample::<f64, _>(StandardNormal);
    let dir = to_goal.unit().rotate(theta.cos(), theta.sin());
    s.ball.controller = None;
    s.ball.flight = None;
    s.ball.aerial_steps = 0;
    s.last_touch = Some(r);

    // Distance along `dir` to the goal line, if the shot heads that way.
    let reach = if dir.x * sign > 0.0 {
        (goal.x - from.x) / dir.x
    } else {
        f64::INFINITY
    };
    let mut blockers: Vec<(f64, usize)> = s
        .team(team.opponent())
        .iter()
        .enumerate()
        .filter_map(|(j, p)| {
            let rel = p.position - from;
            let along = rel.dot(dir);
            let across = (rel - dir * along).norm();
            (along > 0.0 && along <= reach && across <= BLOCK_RADIUS).then_some((along, j))
        })
        .collect();
    blockers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (_, j) in blockers {
        if s.rng.random::<f64>() < BLOCK_PROB {
            events.push(Event::ShotAttempt { team, good: false });
            take_control(s, PlayerRef::new(team.opponent(), j));
            return None;
        }
    }
    let on_target = reach.is_finite() && {
        let y = from.y + reach * dir.y;
        y.abs() < s.field.goal_half_width
    };
    if on_target {
        s.ball.position = from + dir * reach;
        s.ball.velocity = dir * SHOT_SPEED;
        events.push(Event::ShotAttempt { team, good: true });
        events.push(Event::Goal { team });
        Some(Stoppage::Goal(team))
    } else {
        let exit = exit_point(s, from, dir);
        s.ball.position = exit;
        s.ball.velocity = dir * SHOT_SPEED;
        events.push(Event::ShotAttempt { team, good: false });
        events.push(Event::OutOfBounds { team });
        Some(Stoppage::Out { team, at: exit })
    }
}

/// Where a ray from an on-pitch point leaves the pitch.
fn exit_point(s: &MatchState, from: Vec2, dir: Vec2) -> Vec2 {
    let hl = s.field.half_length();
    let hw = s.field.half_width();
    let tx = if dir.x != 0.0 {
        ((dir.x.signum() * hl) - from.x) / dir.x
    } else {
        f64::INFINITY
    };
    let ty = if dir.y != 0.0 {
        ((dir.y.signum() * hw) - from.y) / dir.y
    } else {
        f64::INFINITY
    };
    from + dir * tx.min(ty).max(0.0)
}

fn move_players(s: &mut MatchState, sliders: &[PlayerRef], recovering: &[bool]) {
    let n = s.players_per_team();
    let hl = s.field.half_length() + PLAYER_MARGIN;
    let hw = s.field.half_width() + PLAYER_MARGIN;
    let carrier = s.ball.controller;
    let ball = s.ball.position;
    for (k, r) in refs(n).enumerate() {
        let is_carrier = carrier == Some(r);
        let p = s.player_mut(r);
        let mut moving = false;
        let velocity = if sliders.contains(&r) {
            let dir = p
                .direction
                .map(Compass::vector)
                .unwrap_or_else(|| (ball - p.position).unit());
            dir * SLIDE_SPEED
        } else if recovering[k] {
            Vec2::ZERO
        } else if let Some(d) = p.direction {
            moving = true;
            let mut speed = MAX_SPEED * (1.0 - TIRED_SLOWDOWN * p.tiredness);
            if p.sprinting {
                speed *= SPRINT_FACTOR;
            }
            if is_carrier && p.dribbling {
                speed *= DRIBBLE_FACTOR;
            }
            d.vector() * speed
        } else {
            Vec2::ZERO
        };
        let target = p.position + velocity;
        let clamped = Vec2::new(target.x.clamp(-hl, hl), target.y.clamp(-hw, hw));
        p.velocity = clamped - p.position;
        p.position = clamped;
        p.tiredness = if p.sprinting && moving {
            (p.tiredness + TIRE_RATE).min(1.0)
        } else {
            (p.tiredness - RECOVER_RATE).max(0.0)
        };
    }
}

fn move_ball(s: &mut MatchState) {
    if let Some(c) = s.ball.controller {
        let (pos, vel) = (s.player(c).position, s.player(c).velocity);
        s.ball.position = pos;
        s.ball.velocity = vel;
        return;
    }
    let b = &mut s.ball;
    b.position += b.velocity;
    if b.aerial_steps > 0 {
        b.aerial_steps -= 1;
    } else {
        b.velocity = b.velocity * BALL_FRICTION;
        if b.velocity.norm() < BALL_STOP_SPEED {
            b.velocity = Vec2::ZERO;
        }
    }
    if let Some(f) = b.flight.as_mut() {
        f.passer_grace = f.passer_grace.saturating_sub(1);
    }
}

fn check_ball_out(s: &mut MatchState, prev: Vec2, events: &mut Vec<Event>) -> Option<Stoppage> {
    let p = s.ball.position;
    if s.field.contains(p) {
        return None;
    }
    let hl = s.field.half_length();
    let touch_team = s.last_touch.map(|r| r.team).unwrap_or(Team::Home);
    let flight = s.ball.flight.take();
    s.ball.controller = None;
    if p.x.abs() > hl && prev.x.abs() <= hl {
        let line = p.x.signum() * hl;
        let t = (line - prev.x) / (p.x - prev.x);
        let y = prev.y + t * (p.y - prev.y);
        let scorer = if p.x > 0.0 { Team::Home } else { Team::Away };
        if y.abs() < s.field.goal_half_width && scorer == touch_team {
            events.push(Event::ShotAttempt {
                team: scorer,
                good: true,
            });
            events.push(Event::Goal { team: scorer });
            return Some(Stoppage::Goal(scorer));
        }
    }
    if let Some(f) = flight {
        events.push(Event::PassAttempt {
            team: f.team,
            good: false,
        });
    }
    events.push(Event::OutOfBounds { team: touch_team });
    Some(Stoppage::Out {
        team: touch_team,
        at: p,
    })
}

/// Hand an uncontrolled ground ball to the first player it passes.
fn try_capture(s: &mut MatchState, prev: Vec2, events: &mut Vec<Event>) -> Option<Stoppage> {
    if s.ball.controller.is_some() || s.ball.is_aerial() {
        return None;
    }
    let n = s.players_per_team();
    let now = s.ball.position;
    let grace = s
        .ball
        .flight
        .as_ref()
        .filter(|f| f.passer_grace > 0)
        .map(|f| PlayerRef::new(f.team, f.passer));
    let mut best: Option<(f64, f64, PlayerRef)> = None;
    for r in refs(n) {
        if grace == Some(r) {
            continue;
        }
        let (t, d) = segment_projection(prev, now, s.player(r).position);
        if d <= CONTROL_RADIUS && best.is_none_or(|(bt, bd, _)| (t, d) < (bt, bd)) {
            best = Some((t, d, r));
        }
    }
    let (_, _, r) = best?;
    receive(s, r, events)
}

/// Give the ball to `r`, settling any pass in flight.
fn receive(s: &mut MatchState, r: PlayerRef, events: &mut Vec<Event>) -> Option<Stoppage> {
    take_control(s, r);
    let f = s.ball.flight.take()?;
    if r.team != f.team {
        events.push(Event::PassAttempt {
            team: f.team,
            good: false,
        });
        events.push(Event::Interception { by_team: r.team });
        return None;
    }
    if f.offside[r.index] {
        events.push(Event::PassAttempt {
            team: f.team,
            good: false,
        });
        events.push(Event::Foul { team: f.team });
        return Some(Stoppage::Foul {
            by: f.team,
            at: s.player(r).position,
        });
    }
    events.push(Event::PassAttempt {
        team: f.team,
        good: r.index != f.passer,
    });
    None
}

fn resolve_slides(s: &mut MatchState, sliders: &[PlayerRef], events: &mut Vec<Event>) -> Option<Stoppage> {
    if sliders.is_empty() {
        return None;
    }
    let ball = s.ball.position;
    let mut winner: Option<(f64, PlayerRef)> = None;
    let mut foul: Option<(f64, PlayerRef)> = None;
    for &r in sliders {
        if s.ball.controller == Some(r) {
            continue;
        }
        let pos = s.player(r).position;
        let d = pos.dist(ball);
        let contestable = !s.ball.is_aerial() && s.ball.controller.is_none_or(|c| c.team != r.team);
        if contestable && d <= SLIDE_REACH {
            if winner.is_none_or(|(bd, _)| d < bd) {
                winner = Some((d, r));
            }
        } else {
            let hit = s
                .team(r.team.opponent())
                .iter()
                .any(|o| o.position.dist(pos) <= CONTROL_RADIUS);
            if hit && foul.is_none_or(|(bd, _)| d < bd) {
                foul = Some((d, r));
            }
        }
    }
    if let Some((_, r)) = foul {
        events.push(Event::Foul { team: r.team });
        return Some(Stoppage::Foul {
            by: r.team,
            at: s.player(r).position,
        });
    }
    let (_, r) = winner?;
    if s.ball.controller.is_some() {
        s.ball.flight = None;
    }
    receive(s, r, events)
}

fn resolve_steals(s: &mut MatchState) {
    let Some(c) = s.ball.controller else { return };
    let carrier = s.player(c).clone();
    let p = if carrier.dribbling {
        STEAL_PROB * DRIBBLE_PROTECTION
    } else {
        STEAL_PROB
    };
    let opp = c.team.opponent();
    for j in 0..s.players_per_team() {
        if s.team(opp)[j].position.dist(carrier.position) > STEAL_RADIUS {
            continue;
        }
        if s.rng.random::<f64>() < p {
            take_control(s, PlayerRef::new(opp, j));
            return;
        }
    }
}

fn apply_stoppage(s: &mut MatchState, st: Stoppage) -> Option<TerminationCause> {
    if let Stoppage::Goal(team) = st {
        match team {
            Team::Home => s.score.0 += 1,
            Team::Away => s.score.1 += 1,
        }
    }
    if s.rules.terminate_on_score_or_fault {
        s.terminated = true;
        return Some(match st {
            Stoppage::Goal(_) => TerminationCause::Goal,
            Stoppage::Foul { .. } => TerminationCause::Foul,
            Stoppage::Out { .. } => TerminationCause::OutOfBounds,
        });
    }
    match st {
        Stoppage::Goal(scorer) => kickoff(s, scorer.opponent()),
        Stoppage::Foul { by, at } => restart(s, by.opponent(), at),
        Stoppage::Out { team, at } => restart(s, team.opponent(), at),
    }
    None
}

fn settle(p: &mut PlayerState, at: Vec2) {
    p.position = at;
    p.velocity = Vec2::ZERO;
    p.direction = None;
    p.sprinting = false;
    p.dribbling = false;
    p.sliding_cooldown = 0;
}

/// Kick-off after a goal; `team` has the ball on the centre spot.
fn kickoff(s: &mut MatchState, team: Team) {
    for t in [Team::Home, Team::Away] {
        let formation = s.formation(t).to_vec();
        for (p, f) in s.team_mut(t).iter_mut().zip(formation) {
            settle(p, f);
        }
    }
    let n = s.players_per_team();
    let striker = PlayerRef::new(team, n - 1);
    let other = PlayerRef::new(team.opponent(), n - 1);
    settle(
        s.player_mut(striker),
        Vec2::new(-team.attack_sign() * KICKOFF_OFFSET, 0.0),
    );
    settle(
        s.player_mut(other),
        Vec2::new(team.attack_sign() * KICKOFF_OPPONENT_DISTANCE, 0.0),
    );
    s.ball = BallState::at_rest(Vec2::ZERO);
    take_control(s, striker);
}

/// Free kick / throw-in style restart for `team` from `at`.
fn restart(s: &mut MatchState, team: Team, at: Vec2) {
    let inset = 0.01;
    let spot = Vec2::new(
        at.x.clamp(-s.field.half_length() + inset, s.field.half_length() - inset),
        at.y.clamp(-s.field.half_width() + inset, s.field.half_width() - inset),
    );
    let taker = (0..s.players_per_team())
        .min_by(|&a, &b| {
            let da = s.team(team)[a].position.dist(spot);
            let db = s.team(team)[b].position.dist(spot);
            da.partial_cmp(&db).unwrap()
        })
        .expect("teams are never empty");
    let r = PlayerRef::new(team, taker);
    settle(s.player_mut(r), spot);
    let back = Vec2::new(team.attack_sign(), 0.0);
    for o in s.team_mut(team.opponent()) {
        let rel = o.position - spot;
        if rel.norm() < RESTART_CLEARANCE {
            let dir = if rel.norm() > 0.0 { rel.unit() } else { back };
            o.position = spot + dir * RESTART_CLEARANCE;
        }
    }
    s.ball = BallState::at_rest(spot);
    take_control(s, r);
}
