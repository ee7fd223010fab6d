//! Extrinsic shaped reward and the two intrinsic bonuses.
//!
//! * Base: goal +-1, ball holding, completed passes, grouping and
//!   out-of-bounds penalties, made zero-sum by subtracting the opponent's terms.
//! * SSIR: a small tanh network scores each agent's (observation, action);
//!   the team bonus is the mean over agents, weighted by `alpha_ssir`.
//! * RND: squared error between a frozen random network and a trained
//!   predictor on the (normalized) next global state.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Event, MatchState, Team};
use crate::error::{ensure, Error, Result};
use crate::nn::{AdamConfig, AdamState, Mlp, MlpSpec, OutputActivation, ParameterSet};
use crate::policy::{minibatches, normalize_advantages, RolloutBatch};
use crate::stats::{RunningMoments, RunningMomentsVec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapedRewardConfig {
    pub goal: f64,
    pub hold_ball: f64,
    pub pass: f64,
    pub grouping_penalty: f64,
    pub grouping_threshold: f64,
    pub out_of_bounds: f64,
}

impl Default for ShapedRewardConfig {
    fn default() -> Self {
        Self {
            goal: 1.0,
            hold_ball: 0.0001,
            pass: 0.05,
            grouping_penalty: -0.001,
            grouping_threshold: 0.05,
            out_of_bounds: -0.001,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    Base,
    Ssir,
    Rnd,
}

impl std::fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RewardVariant::Base => "base",
            RewardVariant::Ssir => "ssir",
            RewardVariant::Rnd => "rnd",
        })
    }
}

impl std::str::FromStr for RewardVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(RewardVariant::Base),
            "ssir" => Ok(RewardVariant::Ssir),
            "rnd" => Ok(RewardVariant::Rnd),
            other => Err(Error::Config(format!("unknown reward variant {other:?}"))),
        }
    }
}

fn team_terms(events: &[Event], next: &MatchState, team: Team, cfg: &ShapedRewardConfig) -> f64 {
    let mut r = 0.0;
    for e in events {
        match *e {
            Event::Goal { team: t } if t == team => r += cfg.goal,
            Event::PassAttempt { team: t, good: true } if t == team => r += cfg.pass,
            _ => {}
        }
    }
    if next.possession() == Some(team) {
        r += cfg.hold_ball;
    }
    let players = next.team(team);
    for (i, p) in players.iter().enumerate() {
        let crowded = players
            .iter()
            .enumerate()
            .any(|(j, q)| j != i && p.position.dist(q.position) < cfg.grouping_threshold);
        if crowded {
            r += cfg.grouping_penalty;
        }
        if !next.field.contains(p.position) {
            r += cfg.out_of_bounds;
        }
    }
    r
}

/// Zero-sum shaped reward `(home, away)` for one environment step.
pub fn base_reward(_prev: &MatchState, events: &[Event], next: &MatchState, cfg: &ShapedRewardConfig) -> (f64, f64) {
    let home = team_terms(events, next, Team::Home, cfg) - team_terms(events, next, Team::Away, cfg);
    (home, -home)
}

/// Compact per-step event record stored with each transition.
pub fn event_bits(events: &[Event]) -> u32 {
    events.iter().fold(0, |acc, e| {
        let bit = match *e {
            Event::PassAttempt { good: true, .. } => 0,
            Event::PassAttempt { good: false, .. } => 1,
            Event::ShotAttempt { good: true, .. } => 2,
            Event::ShotAttempt { good: false, .. } => 3,
            Event::Goal { .. } => 4,
            Event::Interception { .. } => 5,
            Event::OutOfBounds { .. } => 6,
            Event::Foul { .. } => 7,
        };
        let side = match *e {
            Event::PassAttempt { team, .. }
            | Event::ShotAttempt { team, .. }
            | Event::Goal { team }
            | Event::OutOfBounds { team }
            | Event::Foul { team } => team,
            Event::Interception { by_team } => by_team,
        };
        acc | 1 << (bit + if side == Team::Away { 8 } else { 0 })
    })
}

/// Whether intrinsic bonuses contribute at this rollout index (0-based).
pub fn intrinsic_active(rollout_index: u64, warmup_rollouts: u64) -> bool {
    rollout_index >= warmup_rollouts
}

/// Per-step intrinsic quantities fed into [`total_reward`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntrinsicInputs {
    /// Mean SSIR output over the learning team's agents.
    pub ssir_mean: f64,
    /// Scaled RND bonus.
    pub rnd: f64,
}

pub fn total_reward(variant: RewardVariant, base: f64, intrinsic: &IntrinsicInputs, alpha_ssir: f64) -> f64 {
    match variant {
        RewardVariant::Base => base,
        RewardVariant::Ssir => base + alpha_ssir * intrinsic.ssir_mean,
        RewardVariant::Rnd => base + intrinsic.rnd,
    }
}

pub const SSIR_HIDDEN: usize = 64;
pub const RND_HIDDEN: usize = 64;
pub const RND_OUTPUTS: usize = 4;
const INPUT_CLIP: f64 = 5.0;
const NORM_EPS: f64 = 1e-8;

fn rows_of(data: &[f64], dim: usize, rows: &[usize]) -> Array2<f64> {
    let mut x = Array2::zeros((rows.len(), dim));
    for (k, &r) in rows.iter().enumerate() {
        x.row_mut(k)
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(&data[r * dim..(r + 1) * dim]);
    }
    x
}

/// Learned per-action reward network `obs -> 64 -> 18` with tanh outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsirNetwork {
    pub net: Mlp,
    pub adam: AdamState,
}

impl SsirNetwork {
    pub fn spec(obs_dim: usize, n_actions: usize) -> MlpSpec {
        MlpSpec::new(vec![obs_dim, SSIR_HIDDEN, n_actions], OutputActivation::Tanh).expect("valid fixed shape")
    }

    pub fn new<R: Rng + ?Sized>(obs_dim: usize, n_actions: usize, rng: &mut R) -> Self {
        let spec = Self::spec(obs_dim, n_actions);
        let params = ParameterSet::orthogonal(&spec, 2f64.sqrt(), 1.0, rng);
        Self::from_network(Mlp { spec, params })
    }

    pub fn from_network(net: Mlp) -> Self {
        let adam = AdamState::new(&net.spec, AdamConfig::default());
        Self { net, adam }
    }

    /// Mean over agents of the output indexed by each agent's action.
    pub fn bonus(&self, observations: ArrayView2<f64>, actions: &[usize]) -> Result<f64> {
        ensure!(
            observations.nrows() == actions.len() && !actions.is_empty(),
            Contract,
            "one observation per action required"
        );
        let out = self.net.predict_batch(observations)?;
        let sum: f64 = actions.iter().enumerate().map(|(i, &a)| out[[i, a]]).sum();
        Ok(sum / actions.len() as f64)
    }

    /// Team bonus for every timestep of a batch.
    pub fn batch_bonus(&self, batch: &RolloutBatch) -> Result<Vec<f64>> {
        let out = self.net.predict_batch(batch.observation_rows())?;
        let n = batch.n_agents;
        Ok((0..batch.len())
            .map(|t| (0..n).map(|i| out[[t * n + i, batch.actions[t * n + i]]]).sum::<f64>() / n as f64)
            .collect())
    }

    /// Mean squared error between `r(o_i, a_i)` and `targets[t]` over the
    /// agents of the timesteps `rows`, and its gradient.
    pub fn loss(&self, batch: &RolloutBatch, targets: &[f64], rows: &[usize]) -> Result<(f64, ParameterSet)> {
        let n = batch.n_agents;
        let agent_rows: Vec<usize> = rows.iter().flat_map(|&t| (t * n)..(t * n + n)).collect();
        let x = rows_of(&batch.observations, batch.obs_dim, &agent_rows);
        let (out, cache) = self.net.forward_batch(x.view())?;
        let m = agent_rows.len() as f64;
        let mut grad = Array2::zeros(out.dim());
        let mut loss = 0.0;
        for (k, &r) in agent_rows.iter().enumerate() {
            let a = batch.actions[r];
            let diff = out[[k, a]] - targets[r / n];
            loss += diff * diff / m;
            grad[[k, a]] = 2.0 * diff / m;
        }
        Ok((loss, self.net.backward(&cache, grad.view())?))
    }

    /// One pass of minibatch steps towards the clipped targets; returns the
    /// mean loss.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &RolloutBatch,
        targets: &[f64],
        lr: f64,
        minibatch_size: usize,
        rng: &mut R,
    ) -> Result<f64> {
        ensure!(
            targets.len() == batch.len(),
            Contract,
            "one target per timestep required"
        );
        let mut total = 0.0;
        let mut count = 0.0;
        for rows in minibatches(batch.len(), minibatch_size, rng) {
            let (l, g) = self.loss(batch, targets, &rows)?;
            self.adam.step(&mut self.net.params, &g, lr)?;
            total += l;
            count += 1.0;
        }
        Ok(if count > 0.0 { total / count } else { 0.0 })
    }
}

/// Regression targets: extrinsic advantages normalized over the batch and
/// clipped to `[-1, 1]`.
pub fn ssir_targets(extrinsic_advantages: &[f64]) -> Vec<f64> {
    if extrinsic_advantages.is_empty() {
        return Vec::new();
    }
    normalize_advantages(extrinsic_advantages)
        .into_iter()
        .map(|a| a.clamp(-1.0, 1.0))
        .collect()
}

/// A network whose parameters cannot change after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenMlp(Mlp);

impl FrozenMlp {
    pub fn new(net: Mlp) -> Self {
        Self(net)
    }

    pub fn net(&self) -> &Mlp {
        &self.0
    }

    /// Always refused: the target network never trains.
    pub fn try_update(&mut self, _grads: &ParameterSet, _lr: f64) -> Result<()> {
        Err(Error::Contract("the RND target network is frozen".into()))
    }
}

/// Frozen random target `state -> 64 -> 4` and trained predictor
/// `state -> 64 -> 64 -> 64 -> 4`, with running input and bonus statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RndPair {
    target: FrozenMlp,
    pub predictor: Mlp,
    pub adam: AdamState,
    pub input_stats: RunningMomentsVec,
    pub bonus_stats: RunningMoments,
}

impl RndPair {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, rng: &mut R) -> Self {
        let tspec = MlpSpec::with_hidden(state_dim, RND_HIDDEN, 1, RND_OUTPUTS, OutputActivation::Identity)
            .expect("valid fixed shape");
        let pspec = MlpSpec::with_hidden(state_dim, RND_HIDDEN, 3, RND_OUTPUTS, OutputActivation::Identity)
            .expect("valid fixed shape");
        let tparams = ParameterSet::orthogonal(&tspec, 2f64.sqrt(), 1.0, rng);
        let pparams = ParameterSet::orthogonal(&pspec, 2f64.sqrt(), 1.0, rng);
        Self::with_networks(
            Mlp {
                spec: tspec,
                params: tparams,
            },
            Mlp {
                spec: pspec,
                params: pparams,
            },
        )
        .expect("shapes agree")
    }

    pub fn with_networks(target: Mlp, predictor: Mlp) -> Result<Self> {
        ensure!(
            target.spec.input_dim() == predictor.spec.input_dim()
                && target.spec.output_dim() == predictor.spec.output_dim(),
            Contract,
            "target and predictor must agree on input and output sizes"
        );
        let dim = target.spec.input_dim();
        let adam = AdamState::new(&predictor.spec, AdamConfig::default());
        Ok(Self {
            target: FrozenMlp::new(target),
            predictor,
            adam,
            input_stats: RunningMomentsVec::new(dim),
            bonus_stats: RunningMoments::default(),
        })
    }

    pub fn target(&self) -> &FrozenMlp {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut FrozenMlp {
        &mut self.target
    }

    fn normalized(&self, states: ArrayView2<f64>) -> Array2<f64> {
        let mut x = states.to_owned();
        for mut row in x.rows_mut() {
            for ((v, m), var) in row.iter_mut().zip(&self.input_stats.mean).zip(&self.input_stats.var) {
                *v = ((*v - m) / (var + NORM_EPS).sqrt()).clamp(-INPUT_CLIP, INPUT_CLIP);
            }
        }
        x
    }

    /// Mean over outputs of the squared prediction error, per row.
    pub fn raw_bonus_batch(&self, states: ArrayView2<f64>) -> Result<Vec<f64>> {
        let x = self.normalized(states);
        let t = self.target.net().predict_batch(x.view())?;
        let p = self.predictor.predict_batch(x.view())?;
        let k = t.ncols() as f64;
        Ok((&p - &t)
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|d| d * d).sum::<f64>() / k)
            .collect())
    }

    pub fn raw_bonus(&self, state: &[f64]) -> Result<f64> {
        let x = ArrayView2::from_shape((1, state.len()), state).map_err(|e| Error::Contract(e.to_string()))?;
        Ok(self.raw_bonus_batch(x)?[0])
    }

    /// Raw bonus divided by the running standard deviation of raw bonuses.
    pub fn bonus(&self, state: &[f64]) -> Result<f64> {
        Ok(self.raw_bonus(state)? / self.bonus_std())
    }

    pub fn bonus_std(&self) -> f64 {
        self.bonus_stats.std().max(NORM_EPS)
    }

    /// Fold a batch of states into the input and bonus statistics.
    pub fn observe(&mut self, states: ArrayView2<f64>) -> Result<()> {
        self.input_stats
            .update(states.rows().into_iter().map(|r| r.to_slice().expect("row-major")));
        let raw = self.raw_bonus_batch(states)?;
        self.bonus_stats.update(&raw);
        Ok(())
    }

    /// One gradient step of the predictor on `states`; returns the
    /// pre-step mean raw bonus (the MSE loss).
    pub fn train_step(&mut self, states: ArrayView2<f64>, lr: f64) -> Result<f64> {
        let x = self.normalized(states);
        let t = self.target.net().predict_batch(x.view())?;
        let (p, cache) = self.predictor.forward_batch(x.view())?;
        let scale = 1.0 / (p.len() as f64);
        let diff = &p - &t;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() * scale;
        let grad = diff.mapv(|d| 2.0 * d * scale);
        let g = self.predictor.backward(&cache, grad.view())?;
        self.adam.step(&mut self.predictor.params, &g, lr)?;
        Ok(loss)
    }

    /// Update statistics with the batch, then take one predictor step on it.
    pub fn update(&mut self, states: ArrayView2<f64>, lr: f64) -> Result<f64> {
        self.observe(states)?;
        self.train_step(states, lr)
    }

    /// Statistics update followed by one epoch of shuffled minibatch steps.
    pub fn update_minibatched<R: Rng + ?Sized>(
        &mut self,
        states: ArrayView2<f64>,
        lr: f64,
        minibatch_size: usize,
        rng: &mut R,
    ) -> Result<f64> {
        self.observe(states)?;
        self.train_minibatched(states, lr, minibatch_size, rng)
    }

    /// One epoch of shuffled minibatch predictor steps, statistics untouched.
    pub fn train_minibatched<R: Rng + ?Sized>(
        &mut self,
        states: ArrayView2<f64>,
        lr: f64,
        minibatch_size: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let dim = states.ncols();
        let data = states.as_standard_layout().into_owned().into_raw_vec_and_offset().0;
        let mut total = 0.0;
        let mut count = 0.0;
        for rows in minibatches(states.nrows(), minibatch_size, rng) {
            let x = rows_of(&data, dim, &rows);
            total += self.train_step(x.view(), lr)?;
            count += 1.0;
        }
        Ok(if count > 0.0 { total / count } else { 0.0 })
    }
}
