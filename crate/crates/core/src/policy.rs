//! Shared actor, centralised critic and the joint-ratio clipped objective.
//!
//! The actor maps one agent's observation to 18 action logits and is shared
//! by every agent of the learning team. The joint policy of the team is the
//! product of the per-agent policies, so joint log-probabilities are sums and
//! the importance ratio of a timestep is `exp(sum_i new_i - sum_i old_i)`.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::nn::{entropy, log_softmax, sample, AdamState, Mlp, ParameterSet};
use crate::stats::RunningMoments;

/// Guard used when normalizing advantages.
pub const ADV_EPS: f64 = 1e-8;
const MIN_VALUE_STD: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub minibatch_size: usize,
    pub epochs_per_rollout: usize,
    pub alpha_ssir: f64,
    /// Intrinsic bonuses count from this rollout index on.
    pub warmup_rollouts: u64,
    pub max_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            entropy_coef: 0.01,
            lr_actor: 5e-4,
            lr_critic: 5e-4,
            minibatch_size: 1024,
            epochs_per_rollout: 4,
            alpha_ssir: 0.1,
            warmup_rollouts: 700,
            max_grad_norm: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        ensure!(unit(self.gamma), Config, "gamma {} outside [0, 1]", self.gamma);
        ensure!(
            unit(self.gae_lambda),
            Config,
            "gae_lambda {} outside [0, 1]",
            self.gae_lambda
        );
        ensure!(self.clip_eps > 0.0, Config, "clip_eps must be positive");
        ensure!(self.entropy_coef >= 0.0, Config, "entropy_coef must be >= 0");
        ensure!(
            self.lr_actor > 0.0 && self.lr_critic > 0.0,
            Config,
            "learning rates must be positive"
        );
        ensure!(
            self.minibatch_size >= 1 && self.epochs_per_rollout >= 1,
            Config,
            "minibatch_size and epochs_per_rollout must be >= 1"
        );
        ensure!(self.alpha_ssir >= 0.0, Config, "alpha_ssir must be >= 0");
        ensure!(self.max_grad_norm > 0.0, Config, "max_grad_norm must be positive");
        Ok(())
    }
}

/// Sample one action per agent from the shared actor. `observations` has one
/// row per agent.
pub fn act<R: Rng + ?Sized>(actor: &Mlp, observations: ArrayView2<f64>, rng: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
    let logits = actor.predict_batch(observations)?;
    let mut actions = Vec::with_capacity(logits.nrows());
    let mut log_probs = Vec::with_capacity(logits.nrows());
    for row in logits.rows() {
        let (a, lp) = sample(row.as_slice().expect("row-major logits"), rng);
        actions.push(a);
        log_probs.push(lp);
    }
    Ok((actions, log_probs))
}

/// Log-probability of the joint action: the sum of the per-agent terms.
pub fn joint_log_prob(per_agent: &[f64]) -> f64 {
    per_agent.iter().sum()
}

/// Generalized advantage estimation over one contiguous trajectory segment.
/// `bootstrap_value` is the value of the state following the last step and is
/// ignored when that step is terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "GAE inputs must align");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Running statistics of return targets; the critic regresses normalized
/// targets and its outputs are denormalized before use.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueNormalizer {
    pub moments: RunningMoments,
}

impl ValueNormalizer {
    pub fn update(&mut self, targets: &[f64]) -> Result<()> {
        ensure!(
            targets.iter().all(|x| x.is_finite()),
            Numeric,
            "non-finite return target"
        );
        self.moments.update(targets);
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.moments.mean
    }

    pub fn std(&self) -> f64 {
        self.moments.std().max(MIN_VALUE_STD)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean()) / self.std()
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.std() + self.mean()
    }
}

/// One learning-team timestep as produced by a worker.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// `N x obs_dim`, row-major.
    pub observations: Vec<f64>,
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    /// Extrinsic team reward of the learning team.
    pub reward: f64,
    pub done: bool,
    /// Bit set of event kinds seen on this step (see [`event_bits`](crate::rewards::event_bits)).
    pub events: u32,
}

/// Contiguous run of timesteps from one worker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    /// Critic value of the state after the segment's last step.
    pub bootstrap_value: f64,
}

/// Flat storage of a rollout's timesteps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub observations: Vec<f64>,
    pub states: Vec<f64>,
    pub next_states: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub base_rewards: Vec<f64>,
    /// Intrinsic contribution added to the base reward (zero during warm-up).
    pub intrinsic: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub events: Vec<u32>,
    pub segments: Vec<Segment>,
    pub advantages: Option<Vec<f64>>,
    pub returns: Option<Vec<f64>>,
    pub rollout_index: u64,
    pub policy_version: u64,
}

impl RolloutBatch {
    pub fn new(n_agents: usize, obs_dim: usize, state_dim: usize) -> Self {
        Self {
            n_agents,
            obs_dim,
            state_dim,
            observations: Vec::new(),
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            base_rewards: Vec::new(),
            intrinsic: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            dones: Vec::new(),
            events: Vec::new(),
            segments: Vec::new(),
            advantages: None,
            returns: None,
            rollout_index: 0,
            policy_version: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.dones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dones.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        ensure!(
            t.actions.len() == self.n_agents
                && t.log_probs.len() == self.n_agents
                && t.observations.len() == self.n_agents * self.obs_dim
                && t.state.len() == self.state_dim
                && t.next_state.len() == self.state_dim,
            Contract,
            "transition shapes do not match the batch layout"
        );
        self.observations.extend_from_slice(&t.observations);
        self.states.extend_from_slice(&t.state);
        self.next_states.extend_from_slice(&t.next_state);
        self.actions.extend_from_slice(&t.actions);
        self.log_probs.extend_from_slice(&t.log_probs);
        self.base_rewards.push(t.reward);
        self.intrinsic.push(0.0);
        self.rewards.push(t.reward);
        self.values.push(0.0);
        self.dones.push(t.done);
        self.events.push(t.events);
        Ok(())
    }

    /// Append another batch as a new segment.
    pub fn append(&mut self, other: RolloutBatch) -> Result<()> {
        ensure!(
            other.n_agents == self.n_agents && other.obs_dim == self.obs_dim && other.state_dim == self.state_dim,
            Contract,
            "cannot merge batches with different layouts"
        );
        let offset = self.len();
        self.observations.extend(other.observations);
        self.states.extend(other.states);
        self.next_states.extend(other.next_states);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.base_rewards.extend(other.base_rewards);
        self.intrinsic.extend(other.intrinsic);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.dones.extend(other.dones);
        self.events.extend(other.events);
        self.segments.extend(other.segments.into_iter().map(|s| Segment {
            start: s.start + offset,
            ..s
        }));
        self.advantages = None;
        self.returns = None;
        Ok(())
    }

    pub fn observation_rows(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len() * self.n_agents, self.obs_dim), &self.observations)
            .expect("observation storage matches its layout")
    }

    pub fn state_rows(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.state_dim), &self.states).expect("state storage matches its layout")
    }

    pub fn next_state_rows(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.state_dim), &self.next_states)
            .expect("state storage matches its layout")
    }

    /// Joint old log-probability of timestep `t`.
    pub fn joint_old_log_prob(&self, t: usize) -> f64 {
        let n = self.n_agents;
        joint_log_prob(&self.log_probs[t * n..(t + 1) * n])
    }

    /// GAE of an arbitrary per-step reward signal, segment by segment.
    pub fn gae_for(&self, rewards: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let mut adv = Vec::with_capacity(self.len());
        let mut ret = Vec::with_capacity(self.len());
        for s in &self.segments {
            let r = s.start..s.start + s.len;
            let (a, g) = compute_gae(
                &rewards[r.clone()],
                &self.values[r.clone()],
                s.bootstrap_value,
                &self.dones[r],
                gamma,
                lambda,
            );
            adv.extend(a);
            ret.extend(g);
        }
        (adv, ret)
    }

    /// Fill `advantages` and `returns` from `rewards` and `values`.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let covered: usize = self.segments.iter().map(|s| s.len).sum();
        ensure!(
            covered == self.len(),
            Contract,
            "segments cover {covered} of {} timesteps",
            self.len()
        );
        let (a, g) = self.gae_for(&self.rewards, gamma, lambda);
        self.advantages = Some(a);
        self.returns = Some(g);
        Ok(())
    }
}

/// Zero-mean, unit-std copy of the selected advantages.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    adv.iter().map(|a| (a - mean) / (std + ADV_EPS)).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JrpoStats {
    /// Clipped surrogate plus entropy bonus (to be maximized).
    pub objective: f64,
    pub surrogate: f64,
    /// Mean joint entropy.
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Joint-ratio clipped objective over the timesteps `rows` and the gradient of
/// the *loss* (negated objective) with respect to the actor parameters.
pub fn jrpo_loss(
    batch: &RolloutBatch,
    actor: &Mlp,
    clip_eps: f64,
    entropy_coef: f64,
    rows: &[usize],
) -> Result<(JrpoStats, ParameterSet)> {
    let advantages = batch
        .advantages
        .as_ref()
        .ok_or_else(|| crate::Error::Contract("advantages must be computed before the loss".into()))?;
    ensure!(!rows.is_empty(), Contract, "empty minibatch");
    let n = batch.n_agents;
    let d = batch.obs_dim;
    let m = rows.len();
    let mut x = Array2::zeros((m * n, d));
    for (k, &t) in rows.iter().enumerate() {
        let src = &batch.observations[t * n * d..(t + 1) * n * d];
        for i in 0..n {
            x.row_mut(k * n + i)
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&src[i * d..(i + 1) * d]);
        }
    }
    let (logits, cache) = actor.forward_batch(x.view())?;
    let adv = normalize_advantages(&rows.iter().map(|&t| advantages[t]).collect::<Vec<_>>());

    let k_actions = actor.spec.output_dim();
    let mut grad = Array2::zeros((m * n, k_actions));
    let mut stats = JrpoStats::default();
    let inv_m = 1.0 / m as f64;
    let mut clipped = 0usize;
    for (k, &t) in rows.iter().enumerate() {
        let mut new_joint = 0.0;
        let mut joint_entropy = 0.0;
        let mut logps = Vec::with_capacity(n);
        for i in 0..n {
            let z = logits.row(k * n + i);
            let lp = log_softmax(z.as_slice().unwrap());
            new_joint += lp[batch.actions[t * n + i]];
            joint_entropy += entropy(z.as_slice().unwrap());
            logps.push(lp);
        }
        let log_ratio = new_joint - batch.joint_old_log_prob(t);
        let rho = log_ratio.exp();
        let a = adv[k];
        let unclipped = rho * a;
        let clipped_term = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a;
        let surrogate = unclipped.min(clipped_term);
        if (rho - 1.0).abs() > clip_eps {
            clipped += 1;
        }
        stats.surrogate += surrogate * inv_m;
        stats.entropy += joint_entropy * inv_m;
        stats.approx_kl += ((rho - 1.0) - log_ratio) * inv_m;

        // d surrogate / d new_joint: rho * A on the unclipped branch, else 0.
        let g_sur = if unclipped <= clipped_term { unclipped } else { 0.0 };
        for (i, lp) in logps.iter().enumerate() {
            let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
            let action = batch.actions[t * n + i];
            let mut row = grad.row_mut(k * n + i);
            for (j, g) in row.iter_mut().enumerate() {
                let p = lp[j].exp();
                let onehot = if j == action { 1.0 } else { 0.0 };
                let d_obj = g_sur * (onehot - p) + entropy_coef * (-p * (lp[j] + h));
                // Loss is the negated objective.
                *g = -d_obj * inv_m;
            }
        }
    }
    stats.objective = stats.surrogate + entropy_coef * stats.entropy;
    stats.clip_fraction = clipped as f64 / m as f64;
    let grads = actor.backward(&cache, grad.view())?;
    Ok((stats, grads))
}

/// Shuffled minibatches of timestep indices.
pub fn minibatches<R: Rng + ?Sized>(len: usize, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

/// Clip the gradient norm and apply one Adam step.
pub fn apply_gradients(
    net: &mut Mlp,
    adam: &mut AdamState,
    mut grads: ParameterSet,
    lr: f64,
    max_norm: f64,
) -> Result<f64> {
    let norm = grads.clip_norm(max_norm);
    adam.step(&mut net.params, &grads, lr)?;
    Ok(norm)
}

/// All actor epochs for one rollout; returns the statistics averaged over
/// minibatches.
pub fn actor_update<R: Rng + ?Sized>(
    batch: &RolloutBatch,
    actor: &mut Mlp,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<JrpoStats> {
    let mut total = JrpoStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs_per_rollout {
        for rows in minibatches(batch.len(), cfg.minibatch_size, rng) {
            let (s, g) = jrpo_loss(batch, actor, cfg.clip_eps, cfg.entropy_coef, &rows)?;
            apply_gradients(actor, adam, g, cfg.lr_actor, cfg.max_grad_norm)?;
            total.objective += s.objective;
            total.surrogate += s.surrogate;
            total.entropy += s.entropy;
            total.clip_fraction += s.clip_fraction;
            total.approx_kl += s.approx_kl;
            count += 1.0;
        }
    }
    if count > 0.0 {
        total.objective /= count;
        total.surrogate /= count;
        total.entropy /= count;
        total.clip_fraction /= count;
        total.approx_kl /= count;
    }
    Ok(total)
}

/// Denormalized critic values for every row of `states`.
pub fn critic_values(critic: &Mlp, normalizer: &ValueNormalizer, states: ArrayView2<f64>) -> Result<Vec<f64>> {
    let out = critic.predict_batch(states)?;
    Ok(out.column(0).iter().map(|&y| normalizer.denormalize(y)).collect())
}

/// Half mean-squared error between the critic output and normalized targets
/// over `rows`, and its gradient.
pub fn critic_loss(
    batch: &RolloutBatch,
    critic: &Mlp,
    normalizer: &ValueNormalizer,
    rows: &[usize],
) -> Result<(f64, ParameterSet)> {
    let returns = batch
        .returns
        .as_ref()
        .ok_or_else(|| crate::Error::Contract("returns must be computed before the critic update".into()))?;
    ensure!(!rows.is_empty(), Contract, "empty minibatch");
    let d = batch.state_dim;
    let mut x = Array2::zeros((rows.len(), d));
    for (k, &t) in rows.iter().enumerate() {
        x.row_mut(k)
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(&batch.states[t * d..(t + 1) * d]);
    }
    let (out, cache) = critic.forward_batch(x.view())?;
    let m = rows.len() as f64;
    let mut grad = Array2::zeros((rows.len(), 1));
    let mut loss = 0.0;
    for (k, &t) in rows.iter().enumerate() {
        let diff = out[[k, 0]] - normalizer.normalize(returns[t]);
        loss += 0.5 * diff * diff / m;
        grad[[k, 0]] = diff / m;
    }
    Ok((loss, critic.backward(&cache, grad.view())?))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticStats {
    pub value_loss: f64,
    pub explained_variance: f64,
}

/// Update the target normalizer with this rollout's returns, then run all
/// critic epochs.
pub fn critic_update<R: Rng + ?Sized>(
    batch: &RolloutBatch,
    critic: &mut Mlp,
    adam: &mut AdamState,
    normalizer: &mut ValueNormalizer,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<CriticStats> {
    let returns = batch
        .returns
        .as_ref()
        .ok_or_else(|| crate::Error::Contract("returns must be computed before the critic update".into()))?;
    normalizer.update(returns)?;
    let ev = explained_variance(&batch.values, returns);
    let mut loss = 0.0;
    let mut count = 0.0;
    for _ in 0..cfg.epochs_per_rollout {
        for rows in minibatches(batch.len(), cfg.minibatch_size, rng) {
            let (l, g) = critic_loss(batch, critic, normalizer, &rows)?;
            apply_gradients(critic, adam, g, cfg.lr_critic, cfg.max_grad_norm)?;
            loss += l;
            count += 1.0;
        }
    }
    Ok(CriticStats {
        value_loss: if count > 0.0 { loss / count } else { 0.0 },
        explained_variance: ev,
    })
}

/// `1 - Var(target - pred) / Var(target)`; 0 when the targets are constant.
pub fn explained_variance(pred: &[f64], target: &[f64]) -> f64 {
    let n = target.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let var = |v: &mut dyn Iterator<Item = f64>| {
        let xs: Vec<f64> = v.collect();
        let m = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
    };
    let vt = var(&mut target.iter().copied());
    if vt == 0.0 {
        return 0.0;
    }
    let vr = var(&mut target.iter().zip(pred).map(|(t, p)| t - p));
    1.0 - vr / vt
}
