//! Parallel experience collection.
//!
//! Each worker owns a persistent environment and random stream, so episodes
//! longer than one rollout carry over into the next. A rollout hands every
//! worker the same immutable learner and opponent snapshots and gets back one
//! [`RolloutBuffer`] per worker, in worker-index order.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{self, Action, MatchState, ReplayRecord, ScenarioConfig, Team};
use crate::error::{ensure, Error, Result};
use crate::features::FeatureEncoder;
use crate::league::{MatchResult, Outcome};
use crate::nn::{sample, Mlp};
use crate::policy::{critic_values, RolloutBatch, Segment, Transition, ValueNormalizer};
use crate::rewards::{base_reward, event_bits, ShapedRewardConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerConfig {
    pub num_workers: usize,
    pub steps_per_worker: usize,
    /// Keep per-step replay records in each buffer.
    pub record_replay: bool,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            num_workers: 8,
            steps_per_worker: 500,
            record_replay: false,
        }
    }
}

impl WorkerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.num_workers >= 1 && self.steps_per_worker >= 1,
            Config,
            "worker count and steps per worker must be at least 1"
        );
        Ok(())
    }

    pub fn steps_per_rollout(&self) -> u64 {
        (self.num_workers * self.steps_per_worker) as u64
    }
}

/// SplitMix64 finalizer, used to derive independent seed streams.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Persistent state of one worker between rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub index: usize,
    pub rng: ChaCha8Rng,
    /// Current episode, `None` until the first reset.
    pub env: Option<MatchState>,
    pub episodes_started: u64,
}

impl WorkerState {
    pub fn new(run_seed: u64, index: usize) -> Self {
        Self {
            index,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(run_seed, index as u64)),
            env: None,
            episodes_started: 0,
        }
    }

    /// Drop the current episode, e.g. after a scenario change.
    pub fn abandon_episode(&mut self) {
        self.env = None;
    }
}

pub fn init_workers(run_seed: u64, cfg: &WorkerConfig) -> Vec<WorkerState> {
    (0..cfg.num_workers).map(|i| WorkerState::new(run_seed, i)).collect()
}

/// How the away team picks its actions.
#[derive(Clone, Debug)]
pub enum OpponentPolicy {
    /// Scripted opponent reacting with probability `strength` each step.
    Heuristic { strength: f64 },
    /// Frozen actor; each player samples from it with probability `strength`
    /// and idles otherwise.
    Snapshot { id: u64, actor: Arc<Mlp>, strength: f64 },
}

impl OpponentPolicy {
    pub fn label(&self) -> String {
        match self {
            OpponentPolicy::Heuristic { strength } => format!("heuristic@{strength}"),
            OpponentPolicy::Snapshot { id, strength, .. } => format!("snapshot{id}@{strength}"),
        }
    }

    pub fn snapshot_id(&self) -> Option<u64> {
        match self {
            OpponentPolicy::Snapshot { id, .. } => Some(*id),
            OpponentPolicy::Heuristic { .. } => None,
        }
    }
}

/// Away-team actions for one step.
pub fn opponent_actions<R: Rng + ?Sized>(
    opponent: &OpponentPolicy,
    state: &MatchState,
    encoder: &FeatureEncoder,
    rng: &mut R,
    obs: &mut Vec<f64>,
) -> Result<Vec<Action>> {
    let n = state.players_per_team();
    match opponent {
        OpponentPolicy::Heuristic { strength } => Ok((0..n)
            .map(|i| env::heuristic_action(state, Team::Away, i, *strength, rng))
            .collect()),
        OpponentPolicy::Snapshot { actor, strength, .. } => {
            let active: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < *strength).collect();
            if !active.iter().any(|a| *a) {
                return Ok(vec![Action::Idle; n]);
            }
            encoder.team_into(state, Team::Away, obs)?;
            let rows = ArrayView2::from_shape((n, encoder.actor_dim()), obs.as_slice())
                .map_err(|e| Error::Contract(e.to_string()))?;
            let logits = actor.predict_batch(rows)?;
            Ok(active
                .iter()
                .zip(logits.rows())
                .map(|(on, row)| {
                    if *on {
                        let (a, _) = sample(row.as_slice().expect("row-major logits"), rng);
                        // The actor sees a mirrored frame; map back to pitch directions.
                        Action::from_index(a)
                            .expect("actor output width is the action count")
                            .mirrored()
                    } else {
                        Action::Idle
                    }
                })
                .collect())
        }
    }
}

/// Everything a worker needs for one rollout. Shared read-only.
pub struct RolloutContext<'a> {
    pub learner: &'a Mlp,
    pub policy_version: u64,
    pub rollout_index: u64,
    pub opponent: &'a OpponentPolicy,
    pub scenario: &'a ScenarioConfig,
    pub encoder: &'a FeatureEncoder,
    pub rewards: &'a ShapedRewardConfig,
    pub steps_per_worker: usize,
    pub record_replay: bool,
    /// Test hook: called as `(worker, attempt)` before a worker runs; a panic
    /// inside it is treated like a worker crash.
    pub fault: Option<&'a (dyn Fn(usize, u32) + Sync)>,
}

/// Output of one worker for one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBuffer {
    pub worker: usize,
    pub rollout_index: u64,
    pub policy_version: u64,
    /// Transitions of this worker as a single segment.
    pub batch: RolloutBatch,
    /// Results of episodes that ended during this rollout.
    pub outcomes: Vec<MatchResult>,
    /// Index (within the buffer) of each episode's final transition.
    pub episode_ends: Vec<usize>,
    pub replay: Vec<ReplayRecord>,
}

fn run_worker(ctx: &RolloutContext<'_>, w: &mut WorkerState) -> Result<RolloutBuffer> {
    let enc = ctx.encoder;
    let n = ctx.scenario.players_per_team;
    ensure!(
        enc.players_per_team() == n,
        Contract,
        "encoder built for {} players, scenario has {n}",
        enc.players_per_team()
    );
    let mut batch = RolloutBatch::new(n, enc.actor_dim(), enc.critic_dim());
    batch.rollout_index = ctx.rollout_index;
    batch.policy_version = ctx.policy_version;
    let mut outcomes = Vec::new();
    let mut episode_ends = Vec::new();
    let mut replay = Vec::new();
    let mut obs = Vec::with_capacity(n * enc.actor_dim());
    let mut opp_obs = Vec::with_capacity(n * enc.actor_dim());
    let mut state_vec = Vec::with_capacity(enc.critic_dim());
    let mut next_vec = Vec::with_capacity(enc.critic_dim());

    for t in 0..ctx.steps_per_worker {
        let state = match w.env.take() {
            Some(s) => s,
            None => {
                w.episodes_started += 1;
                env::reset(ctx.scenario, w.rng.random())?
            }
        };
        enc.team_into(&state, Team::Home, &mut obs)?;
        let rows =
            ArrayView2::from_shape((n, enc.actor_dim()), obs.as_slice()).map_err(|e| Error::Contract(e.to_string()))?;
        let logits = ctx.learner.predict_batch(rows)?;
        let mut actions = Vec::with_capacity(n);
        let mut log_probs = Vec::with_capacity(n);
        for row in logits.rows() {
            let (a, lp) = sample(row.as_slice().expect("row-major logits"), &mut w.rng);
            actions.push(a);
            log_probs.push(lp);
        }
        let home: Vec<Action> = actions
            .iter()
            .map(|a| Action::from_index(*a).expect("actor output width is the action count"))
            .collect();
        let away = opponent_actions(ctx.opponent, &state, enc, &mut w.rng, &mut opp_obs)?;
        let res = env::step(&state, &home, &away)?;
        let (reward, _) = base_reward(&state, &res.events, &res.next_state, ctx.rewards);
        enc.critic_into(&state, &mut state_vec)?;
        enc.critic_into(&res.next_state, &mut next_vec)?;
        if ctx.record_replay {
            replay.push(ReplayRecord::new(&res.next_state, &home, &away, &res.events));
        }
        batch.push(Transition {
            observations: obs.clone(),
            state: state_vec.clone(),
            next_state: next_vec.clone(),
            actions,
            log_probs,
            reward,
            done: res.terminated,
            events: event_bits(&res.events),
        })?;
        if res.terminated {
            let s = &res.next_state;
            outcomes.push(MatchResult::from_score(s.score, s.step));
            episode_ends.push(t);
        } else {
            w.env = Some(res.next_state);
        }
    }
    batch.segments.push(Segment {
        start: 0,
        len: batch.len(),
        bootstrap_value: 0.0,
    });
    Ok(RolloutBuffer {
        worker: w.index,
        rollout_index: ctx.rollout_index,
        policy_version: ctx.policy_version,
        batch,
        outcomes,
        episode_ends,
        replay,
    })
}

fn attempt(ctx: &RolloutContext<'_>, w: &mut WorkerState, attempt_no: u32) -> Result<RolloutBuffer> {
    let caught = catch_unwind(AssertUnwindSafe(|| {
        if let Some(f) = ctx.fault {
            f(w.index, attempt_no);
        }
        run_worker(ctx, w)
    }));
    match caught {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(Error::Run(format!("worker {} panicked: {msg}", w.index)))
        }
    }
}

/// Run every worker for one rollout. A failed rollout is retried once from
/// the same worker states; a second failure is a run error and leaves the
/// worker states untouched.
pub fn collect(ctx: &RolloutContext<'_>, workers: &mut [WorkerState]) -> Result<Vec<RolloutBuffer>> {
    ctx.scenario.validate()?;
    let mut last_err = None;
    for attempt_no in 0..2 {
        let mut trial: Vec<WorkerState> = workers.to_vec();
        let results: Vec<Result<RolloutBuffer>> = trial.par_iter_mut().map(|w| attempt(ctx, w, attempt_no)).collect();
        match results.into_iter().collect::<Result<Vec<_>>>() {
            Ok(buffers) => {
                workers.clone_from_slice(&trial);
                return Ok(buffers);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Run(format!(
        "rollout {} failed twice: {}",
        ctx.rollout_index,
        last_err.expect("loop ran")
    )))
}

/// Episode counts of a merged rollout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub episodes: usize,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    pub goals_for: u64,
    pub goals_against: u64,
    pub outcomes: Vec<MatchResult>,
}

impl RolloutSummary {
    /// Wins over finished episodes; 0 when none finished.
    pub fn win_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.wins as f64 / self.episodes as f64
        }
    }
}

/// Concatenate worker buffers in worker-index order.
pub fn merge(mut buffers: Vec<RolloutBuffer>) -> Result<(RolloutBatch, RolloutSummary)> {
    ensure!(!buffers.is_empty(), Contract, "nothing to merge");
    buffers.sort_by_key(|b| b.worker);
    let (index, version) = (buffers[0].rollout_index, buffers[0].policy_version);
    ensure!(
        buffers.iter().all(|b| b.policy_version == version),
        Contract,
        "buffers carry mixed policy versions"
    );
    ensure!(
        buffers.iter().all(|b| b.rollout_index == index),
        Contract,
        "buffers come from different rollouts"
    );
    let mut summary = RolloutSummary::default();
    let first = &buffers[0].batch;
    let mut batch = RolloutBatch::new(first.n_agents, first.obs_dim, first.state_dim);
    for b in buffers {
        for o in &b.outcomes {
            summary.episodes += 1;
            summary.goals_for += o.score.0 as u64;
            summary.goals_against += o.score.1 as u64;
            match o.outcome {
                Outcome::Win => summary.wins += 1,
                Outcome::Draw => summary.draws += 1,
                Outcome::Loss => summary.losses += 1,
            }
        }
        summary.outcomes.extend(b.outcomes);
        batch.append(b.batch)?;
    }
    batch.rollout_index = index;
    batch.policy_version = version;
    Ok((batch, summary))
}

/// Fill critic values and truncation bootstraps, then compute GAE over
/// `batch.rewards`.
pub fn finalize(
    batch: &mut RolloutBatch,
    critic: &Mlp,
    normalizer: &ValueNormalizer,
    gamma: f64,
    lambda: f64,
) -> Result<()> {
    batch.values = critic_values(critic, normalizer, batch.state_rows())?;
    let d = batch.state_dim;
    let mut tails = Array2::zeros((batch.segments.len(), d));
    for (k, s) in batch.segments.iter().enumerate() {
        let last = s.start + s.len - 1;
        tails.row_mut(k).assign(
            &ArrayView2::from_shape((1, d), &batch.next_states[last * d..(last + 1) * d])
                .unwrap()
                .row(0),
        );
    }
    let boot = critic_values(critic, normalizer, tails.view())?;
    for (s, v) in batch.segments.iter_mut().zip(boot) {
        let last = s.start + s.len - 1;
        s.bootstrap_value = if batch.dones[last] { 0.0 } else { v };
    }
    batch.compute_advantages(gamma, lambda)
}
