use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::FieldConfig;
use super::geom::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Team {
    Home,
    Away,
}

impl Team {
    pub fn opponent(self) -> Team {
        match self {
            Team::Home => Team::Away,
            Team::Away => Team::Home,
        }
    }

    /// +1 for the team attacking towards x = +1, -1 otherwise.
    pub fn attack_sign(self) -> f64 {
        match self {
            Team::Home => 1.0,
            Team::Away => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlayerRef {
    pub team: Team,
    pub index: usize,
}

impl PlayerRef {
    pub fn new(team: Team, index: usize) -> Self {
        Self { team, index }
    }

    pub fn mirrored(self) -> Self {
        Self::new(self.team.opponent(), self.index)
    }
}

/// Eight movement directions; `Top` is +y.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compass {
    Left,
    TopLeft,
    Top,
    TopRight,
    Right,
    BottomRight,
    Bottom,
    BottomLeft,
}

impl Compass {
    pub const ALL: [Compass; 8] = [
        Compass::Left,
        Compass::TopLeft,
        Compass::Top,
        Compass::TopRight,
        Compass::Right,
        Compass::BottomRight,
        Compass::Bottom,
        Compass::BottomLeft,
    ];

    pub fn vector(self) -> Vec2 {
        const D: f64 = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Compass::Left => Vec2::new(-1.0, 0.0),
            Compass::TopLeft => Vec2::new(-D, D),
            Compass::Top => Vec2::new(0.0, 1.0),
            Compass::TopRight => Vec2::new(D, D),
            Compass::Right => Vec2::new(1.0, 0.0),
            Compass::BottomRight => Vec2::new(D, -D),
            Compass::Bottom => Vec2::new(0.0, -1.0),
            Compass::BottomLeft => Vec2::new(-D, -D),
        }
    }

    pub fn opposite(self) -> Compass {
        Compass::ALL[(self as usize + 4) % 8]
    }

    /// Direction closest to `v` (ties resolve to the earlier entry of [`Compass::ALL`]).
    pub fn nearest(v: Vec2) -> Option<Compass> {
        if v.norm() == 0.0 {
            return None;
        }
        let u = v.unit();
        Compass::ALL.iter().copied().max_by(|a, b| {
            a.vector()
                .dot(u)
                .partial_cmp(&b.vector().dot(u))
                .unwrap()
                .then(std::cmp::Ordering::Greater)
        })
    }
}

/// The 18 per-player actions. The simulator's "hand control to the scripted
/// AI" action is deliberately not part of the set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Idle,
    Move(Compass),
    LongPass,
    HighPass,
    ShortPass,
    Shot,
    Sprint,
    ReleaseDirection,
    ReleaseSprint,
    Slide,
    Dribble,
}

impl Action {
    pub const COUNT: usize = 18;

    pub fn from_index(i: usize) -> Option<Action> {
        Some(match i {
            0 => Action::Idle,
            1..=8 => Action::Move(Compass::ALL[i - 1]),
            9 => Action::LongPass,
            10 => Action::HighPass,
            11 => Action::ShortPass,
            12 => Action::Shot,
            13 => Action::Sprint,
            14 => Action::ReleaseDirection,
            15 => Action::ReleaseSprint,
            16 => Action::Slide,
            17 => Action::Dribble,
            _ => return None,
        })
    }

    pub fn index(self) -> usize {
        match self {
            Action::Idle => 0,
            Action::Move(d) => 1 + d as usize,
            Action::LongPass => 9,
            Action::HighPass => 10,
            Action::ShortPass => 11,
            Action::Shot => 12,
            Action::Sprint => 13,
            Action::ReleaseDirection => 14,
            Action::ReleaseSprint => 15,
            Action::Slide => 16,
            Action::Dribble => 17,
        }
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..Self::COUNT).map(|i| Action::from_index(i).unwrap())
    }

    /// Same action seen through a point reflection of the pitch.
    pub fn mirrored(self) -> Action {
        match self {
            Action::Move(d) => Action::Move(d.opposite()),
            a => a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub position: Vec2,
    /// Displacement applied during the last step.
    pub velocity: Vec2,
    /// Sticky movement direction set by `Move`, cleared by `ReleaseDirection`.
    pub direction: Option<Compass>,
    pub tiredness: f64,
    pub sprinting: bool,
    pub dribbling: bool,
    pub sliding_cooldown: u32,
}

impl PlayerState {
    pub fn at(position: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            direction: None,
            tiredness: 0.0,
            sprinting: false,
            dribbling: false,
            sliding_cooldown: 0,
        }
    }

    fn mirrored(&self) -> Self {
        Self {
            position: -self.position,
            velocity: -self.velocity,
            direction: self.direction.map(Compass::opposite),
            ..self.clone()
        }
    }
}

/// A pass still travelling towards its receiver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassFlight {
    pub team: Team,
    pub passer: usize,
    /// Steps during which the passer cannot recapture its own pass.
    pub passer_grace: u32,
    /// Teammates standing in an offside position when the pass was played.
    pub offside: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallState {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Remaining airborne steps; an airborne ball cannot be controlled.
    pub aerial_steps: u32,
    pub controller: Option<PlayerRef>,
    pub flight: Option<PassFlight>,
}

impl BallState {
    pub fn at_rest(position: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            aerial_steps: 0,
            controller: None,
            flight: None,
        }
    }

    pub fn is_aerial(&self) -> bool {
        self.aerial_steps > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRules {
    pub step_limit: u32,
    /// Curriculum rule: a goal, foul or ball out of play ends the episode.
    pub terminate_on_score_or_fault: bool,
    pub offside_enabled: bool,
}

/// Full simulator state, including its own random stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchState {
    pub field: FieldConfig,
    pub rules: MatchRules,
    pub home: Vec<PlayerState>,
    pub away: Vec<PlayerState>,
    pub ball: BallState,
    /// (home, away)
    pub score: (u32, u32),
    pub step: u32,
    pub last_touch: Option<PlayerRef>,
    pub terminated: bool,
    /// Kick-off positions, used for restarts after a goal.
    pub formation_home: Vec<Vec2>,
    pub formation_away: Vec<Vec2>,
    pub rng: ChaCha8Rng,
}

impl MatchState {
    pub fn players_per_team(&self) -> usize {
        self.home.len()
    }

    pub fn team(&self, team: Team) -> &[PlayerState] {
        match team {
            Team::Home => &self.home,
            Team::Away => &self.away,
        }
    }

    pub fn team_mut(&mut self, team: Team) -> &mut Vec<PlayerState> {
        match team {
            Team::Home => &mut self.home,
            Team::Away => &mut self.away,
        }
    }

    pub fn player(&self, r: PlayerRef) -> &PlayerState {
        &self.team(r.team)[r.index]
    }

    pub fn player_mut(&mut self, r: PlayerRef) -> &mut PlayerState {
        &mut self.team_mut(r.team)[r.index]
    }

    pub fn formation(&self, team: Team) -> &[Vec2] {
        match team {
            Team::Home => &self.formation_home,
            Team::Away => &self.formation_away,
        }
    }

    pub fn possession(&self) -> Option<Team> {
        self.ball.controller.map(|c| c.team)
    }

    /// Point reflection through the centre spot with the team labels swapped.
    /// The random stream is carried over unchanged.
    pub fn mirrored(&self) -> MatchState {
        let flip = |v: &[Vec2]| v.iter().map(|p| -*p).collect::<Vec<_>>();
        MatchState {
            field: self.field.clone(),
            rules: self.rules.clone(),
            home: self.away.iter().map(PlayerState::mirrored).collect(),
            away: self.home.iter().map(PlayerState::mirrored).collect(),
            ball: BallState {
                position: -self.ball.position,
                velocity: -self.ball.velocity,
                aerial_steps: self.ball.aerial_steps,
                controller: self.ball.controller.map(PlayerRef::mirrored),
                flight: self.ball.flight.as_ref().map(|f| PassFlight {
                    team: f.team.opponent(),
                    ..f.clone()
                }),
            },
            score: (self.score.1, self.score.0),
            step: self.step,
            last_touch: self.last_touch.map(PlayerRef::mirrored),
            terminated: self.terminated,
            formation_home: flip(&self.formation_away),
            formation_away: flip(&self.formation_home),
            rng: self.rng.clone(),
        }
    }

    /// Stable 64-bit FNV-1a digest over the kinematic and score state.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for p in self.home.iter().chain(&self.away) {
            for v in [p.position.x, p.position.y, p.velocity.x, p.velocity.y, p.tiredness] {
                eat(v.to_bits());
            }
        }
        for v in [
            self.ball.position.x,
            self.ball.position.y,
            self.ball.velocity.x,
            self.ball.velocity.y,
        ] {
            eat(v.to_bits());
        }
        eat(self.score.0 as u64);
        eat(self.score.1 as u64);
        eat(self.step as u64);
        h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    PassAttempt { team: Team, good: bool },
    ShotAttempt { team: Team, good: bool },
    Goal { team: Team },
    Interception { by_team: Team },
    OutOfBounds { team: Team },
    Foul { team: Team },
}

impl Event {
    pub fn mirrored(self) -> Event {
        match self {
            Event::PassAttempt { team, good } => Event::PassAttempt {
                team: team.opponent(),
                good,
            },
            Event::ShotAttempt { team, good } => Event::ShotAttempt {
                team: team.opponent(),
                good,
            },
            Event::Goal { team } => Event::Goal { team: team.opponent() },
            Event::Interception { by_team } => Event::Interception {
                by_team: by_team.opponent(),
            },
            Event::OutOfBounds { team } => Event::OutOfBounds { team: team.opponent() },
            Event::Foul { team } => Event::Foul { team: team.opponent() },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    Goal,
    Foul,
    OutOfBounds,
    StepLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: MatchState,
    pub events: Vec<Event>,
    /// +1 if home scored this step, -1 if away scored, else 0.
    pub scoring_reward_home: i8,
    pub terminated: bool,
    pub termination_cause: Option<TerminationCause>,
}
