//! Training loop and run management.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml        echo of the effective configuration
//! artifacts.json     networks the run constructed
//! metrics.jsonl      one record per rollout
//! league.csv         one league row per rollout
//! pool/              frozen opponent snapshots and their manifest
//! checkpoints/       full training state (resume) and actor checkpoints
//! actor.json         latest actor, loadable by `evaluate`
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{write_replay, Action, ScenarioConfig};
use crate::error::{ensure, Error, Result};
use crate::eval::{self, EvalConfig, EvalReport};
use crate::features::FeatureEncoder;
use crate::league::{
    select_opponent, CurriculumSchedule, Decision, LeagueRow, MatchResult, OpponentChoice, Phase, PhaseRecord,
    PhaseState, PolicyPool, SamplingConfig, DEFAULT_WINDOW,
};
use crate::nn::{
    AdamConfig, AdamState, CheckpointMetadata, Mlp, MlpSpec, NetworkCheckpoint, OutputActivation, ParameterSet,
};
use crate::policy::{actor_update, critic_update, CriticStats, JrpoStats, TrainConfig, ValueNormalizer};
use crate::rewards::{
    intrinsic_active, ssir_targets, total_reward, IntrinsicInputs, RewardVariant, RndPair, ShapedRewardConfig,
    SsirNetwork,
};
use crate::rollout::{
    collect, finalize, init_workers, merge, mix_seed, OpponentPolicy, RolloutContext, WorkerConfig, WorkerState,
};

pub const STATE_FORMAT: &str = "kickoff-train/1";
pub const SEED_ENV: &str = "KICKOFF_SEED";
pub const OUT_DIR_ENV: &str = "KICKOFF_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub actor_hidden: usize,
    pub actor_layers: usize,
    pub critic_hidden: usize,
    pub critic_layers: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            actor_hidden: 128,
            actor_layers: 3,
            critic_hidden: 128,
            critic_layers: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntrinsicConfig {
    /// Scale applied to the normalized RND bonus before it joins the reward.
    pub rnd_coef: f64,
    pub rnd_lr: f64,
    pub ssir_lr: f64,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        Self {
            rnd_coef: 0.002,
            rnd_lr: 1e-4,
            ssir_lr: 5e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub players_per_team: usize,
    pub pe_dim: usize,
    /// Total environment steps; training stops before a rollout would exceed it.
    pub budget_env_steps: u64,
    pub variant: RewardVariant,
    pub workers: WorkerConfig,
    pub train: TrainConfig,
    pub network: NetworkConfig,
    pub rewards: ShapedRewardConfig,
    pub intrinsic: IntrinsicConfig,
    pub schedule: CurriculumSchedule,
    pub sampling: SamplingConfig,
    /// Rolling win-rate window length in episodes.
    pub window: usize,
    pub start_phase: Phase,
    /// Matches played after each update to measure the win rate; 0 uses the
    /// rollout's own episode outcomes.
    pub probe_matches: usize,
    pub out_dir: PathBuf,
    /// Save the full training state every this many rollouts (and at the end).
    pub checkpoint_every: u64,
    /// Stop once this many phases have been passed.
    pub stop_after_phases: Option<u32>,
    /// Log wall-clock durations; off keeps logs bit-reproducible.
    pub record_wall_clock: bool,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    /// 4v4, 8 x 500 workers, 2M-step budget, warm-up scaled to the budget.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            seed: 0,
            players_per_team: 4,
            pe_dim: crate::features::DEFAULT_PE_DIM,
            budget_env_steps: 2_000_000,
            variant: RewardVariant::Base,
            workers: WorkerConfig::default(),
            train: TrainConfig {
                warmup_rollouts: 40,
                ..TrainConfig::default()
            },
            network: NetworkConfig::default(),
            rewards: ShapedRewardConfig::default(),
            intrinsic: IntrinsicConfig::default(),
            schedule: CurriculumSchedule::default(),
            sampling: SamplingConfig::default(),
            window: DEFAULT_WINDOW,
            start_phase: Phase::Curriculum(1),
            probe_matches: 0,
            out_dir: PathBuf::from("runs/desk"),
            checkpoint_every: 25,
            stop_after_phases: None,
            record_wall_clock: false,
            eval: EvalConfig::default(),
        }
    }

    /// 11v11, 40 x 500 workers, 170M-step budget, 700-rollout warm-up.
    pub fn full() -> Self {
        Self {
            name: "full".into(),
            players_per_team: 11,
            budget_env_steps: 170_000_000,
            workers: WorkerConfig {
                num_workers: 40,
                ..WorkerConfig::default()
            },
            train: TrainConfig::default(),
            out_dir: PathBuf::from("runs/full"),
            checkpoint_every: 100,
            eval: EvalConfig {
                players_per_team: 11,
                seeds: vec![0, 1, 2, 3, 4],
                ..EvalConfig::default()
            },
            ..Self::desk()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            _ => Err(Error::Config(format!(
                "unknown profile {name:?} (expected desk or full)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.players_per_team >= 1,
            Config,
            "players_per_team must be at least 1"
        );
        ensure!(self.window >= 1, Config, "window must be at least 1");
        ensure!(
            self.checkpoint_every >= 1,
            Config,
            "checkpoint_every must be at least 1"
        );
        ensure!(
            self.network.actor_hidden >= 1
                && self.network.actor_layers >= 1
                && self.network.critic_hidden >= 1
                && self.network.critic_layers >= 1,
            Config,
            "network sizes must be positive"
        );
        ensure!(
            self.intrinsic.rnd_coef >= 0.0 && self.intrinsic.rnd_lr > 0.0 && self.intrinsic.ssir_lr > 0.0,
            Config,
            "intrinsic coefficients must be non-negative and learning rates positive"
        );
        self.workers.validate()?;
        self.train.validate()?;
        self.schedule.validate()?;
        self.eval.validate()?;
        FeatureEncoder::new(self.players_per_team, self.pe_dim)?;
        ensure!(
            (0.0..=1.0).contains(&self.sampling.latest_probability) && self.sampling.pfsp_power >= 0.0,
            Config,
            "invalid opponent sampling parameters"
        );
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Apply `KICKOFF_SEED` and `KICKOFF_OUT_DIR` when set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        if let Ok(v) = std::env::var(OUT_DIR_ENV) {
            self.out_dir = PathBuf::from(v);
        }
        Ok(())
    }

    pub fn encoder(&self) -> Result<FeatureEncoder> {
        FeatureEncoder::new(self.players_per_team, self.pe_dim)
    }

    pub fn actor_spec(&self) -> Result<MlpSpec> {
        let enc = self.encoder()?;
        MlpSpec::with_hidden(
            enc.actor_dim(),
            self.network.actor_hidden,
            self.network.actor_layers,
            Action::COUNT,
            OutputActivation::Identity,
        )
    }

    pub fn critic_spec(&self) -> Result<MlpSpec> {
        let enc = self.encoder()?;
        MlpSpec::with_hidden(
            enc.critic_dim(),
            self.network.critic_hidden,
            self.network.critic_layers,
            1,
            OutputActivation::Identity,
        )
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub format: String,
    /// Rollouts completed so far.
    pub rollout_index: u64,
    pub env_steps: u64,
    pub policy_version: u64,
    pub elapsed_seconds: f64,
    pub actor: Mlp,
    pub actor_adam: AdamState,
    pub critic: Mlp,
    pub critic_adam: AdamState,
    pub normalizer: ValueNormalizer,
    pub ssir: Option<SsirNetwork>,
    pub rnd: Option<RndPair>,
    pub rng: ChaCha8Rng,
    pub workers: Vec<WorkerState>,
    pub league: PhaseState,
    pub pool: PolicyPool,
}

impl TrainingState {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let enc = cfg.encoder()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::MAX - 1));
        let actor_spec = cfg.actor_spec()?;
        let critic_spec = cfg.critic_spec()?;
        let actor = Mlp::new(
            actor_spec.clone(),
            ParameterSet::orthogonal(&actor_spec, 2f64.sqrt(), 0.01, &mut rng),
        )?;
        let critic = Mlp::new(
            critic_spec.clone(),
            ParameterSet::orthogonal(&critic_spec, 2f64.sqrt(), 1.0, &mut rng),
        )?;
        let ssir =
            (cfg.variant == RewardVariant::Ssir).then(|| SsirNetwork::new(enc.actor_dim(), Action::COUNT, &mut rng));
        let rnd = (cfg.variant == RewardVariant::Rnd).then(|| RndPair::new(enc.critic_dim(), &mut rng));
        Ok(Self {
            format: STATE_FORMAT.into(),
            rollout_index: 0,
            env_steps: 0,
            policy_version: 0,
            elapsed_seconds: 0.0,
            actor_adam: AdamState::new(&actor_spec, AdamConfig::default()),
            critic_adam: AdamState::new(&critic_spec, AdamConfig::default()),
            actor,
            critic,
            normalizer: ValueNormalizer::default(),
            ssir,
            rnd,
            rng,
            workers: init_workers(cfg.seed, &cfg.workers),
            league: PhaseState::starting_at(cfg.start_phase, cfg.window),
            pool: PolicyPool::new(cfg.out_dir.join("pool")),
        })
    }

    /// Names of the networks this run holds.
    pub fn networks(&self) -> Vec<&'static str> {
        let mut v = vec!["actor", "critic"];
        if self.ssir.is_some() {
            v.push("ssir");
        }
        if self.rnd.is_some() {
            v.extend(["rnd_target", "rnd_predictor"]);
        }
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Run(format!("corrupt checkpoint {}: {e}", path.display())))?;
        ensure!(
            s.format == STATE_FORMAT,
            Run,
            "unsupported checkpoint format {:?}",
            s.format
        );
        s.actor.params.check_shapes(&s.actor.spec)?;
        s.critic.params.check_shapes(&s.critic.spec)?;
        Ok(s)
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub rollout: u64,
    pub phase: Phase,
    pub opponent: String,
    pub env_steps: u64,
    pub policy_version: u64,
    pub episodes: usize,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    pub rollout_win_rate: f64,
    pub window_win_rate: f64,
    pub window_len: usize,
    pub threshold: f64,
    pub advanced: bool,
    pub base_reward_mean: f64,
    pub intrinsic_active: bool,
    pub intrinsic_mean: f64,
    pub actor: JrpoStats,
    pub critic: CriticStats,
    pub ssir_loss: Option<f64>,
    pub rnd_loss: Option<f64>,
    /// Running standard deviation dividing the raw RND bonus.
    pub rnd_bonus_std: Option<f64>,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub variant: RewardVariant,
    pub networks: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub rollouts: u64,
    pub env_steps: u64,
    pub phase: Phase,
    pub phases_passed: u32,
    pub window_win_rate: f64,
    pub pool_size: usize,
}

/// Test and debugging hooks for [`train_with`].
#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Forwarded to every rollout's workers.
    pub fault: Option<&'a (dyn Fn(usize, u32) + Sync)>,
    /// Stop after this many rollouts in this invocation.
    pub max_rollouts: Option<u64>,
}

pub const CONFIG_ECHO: &str = "config.toml";
pub const METRICS_LOG: &str = "metrics.jsonl";
pub const LEAGUE_LOG: &str = "league.csv";
pub const ARTIFACTS: &str = "artifacts.json";
pub const STATE_FILE: &str = "checkpoints/state.json";
pub const ACTOR_FILE: &str = "actor.json";

pub fn train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary> {
    train_with(cfg, resume, &TrainHooks::default())
}

/// Keep the first `keep` lines of a text file.
fn truncate_lines(path: &Path, keep: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    for line in BufReader::new(f).lines().take(keep as usize) {
        out.push_str(&line.map_err(|e| Error::io(path, e))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn league_header() -> String {
    "phase,rollout,env_steps,elapsed_seconds,win_rate,threshold,advanced\n".into()
}

fn append(path: &Path, text: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn league_line(row: &LeagueRow) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.serialize(row)?;
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

fn prepare_run(cfg: &RunConfig, resume: bool) -> Result<TrainingState> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let state = if resume {
        let mut s = TrainingState::load(&out.join(STATE_FILE))?;
        s.pool.dir = out.join("pool");
        ensure!(
            s.workers.len() == cfg.workers.num_workers,
            Run,
            "checkpoint has {} workers, config asks for {}",
            s.workers.len(),
            cfg.workers.num_workers
        );
        ensure!(
            s.actor.spec == cfg.actor_spec()?,
            Run,
            "checkpoint actor does not match the config"
        );
        // Logs may have run ahead of the checkpoint.
        truncate_lines(&out.join(METRICS_LOG), s.rollout_index)?;
        truncate_lines(&out.join(LEAGUE_LOG), s.rollout_index + 1)?;
        s.pool.save_manifest()?;
        s
    } else {
        let s = TrainingState::new(cfg)?;
        fs::write(out.join(METRICS_LOG), "").map_err(|e| Error::io(out.join(METRICS_LOG), e))?;
        fs::write(out.join(LEAGUE_LOG), league_header()).map_err(|e| Error::io(out.join(LEAGUE_LOG), e))?;
        s.pool.save_manifest()?;
        s
    };
    write_atomic(&out.join(CONFIG_ECHO), &cfg.to_toml_string()?)?;
    let artifacts = Artifacts {
        variant: cfg.variant,
        networks: state.networks().into_iter().map(String::from).collect(),
        files: [
            CONFIG_ECHO,
            METRICS_LOG,
            LEAGUE_LOG,
            STATE_FILE,
            ACTOR_FILE,
            "pool/pool.json",
        ]
        .into_iter()
        .map(String::from)
        .collect(),
    };
    write_atomic(&out.join(ARTIFACTS), &serde_json::to_string_pretty(&artifacts)?)?;
    Ok(state)
}

fn checkpoint(cfg: &RunConfig, s: &TrainingState) -> Result<()> {
    let out = &cfg.out_dir;
    let meta = CheckpointMetadata {
        label: format!("rollout {}", s.rollout_index),
        training_step: s.env_steps,
        phase: s.league.phase.to_string(),
        seeds: vec![cfg.seed],
        players_per_team: cfg.players_per_team,
        pe_dim: cfg.pe_dim,
    };
    let actor = NetworkCheckpoint::new(s.actor.clone(), Some(s.actor_adam.clone()), meta);
    write_atomic(&out.join(ACTOR_FILE), &actor.to_json()?)?;
    s.save(&out.join(STATE_FILE))
}

fn opponent_for(choice: OpponentChoice, phase: Phase, cfg: &RunConfig, pool: &PolicyPool) -> Result<OpponentPolicy> {
    Ok(match choice {
        OpponentChoice::Heuristic { strength } => OpponentPolicy::Heuristic { strength },
        OpponentChoice::Snapshot { id } => OpponentPolicy::Snapshot {
            id,
            actor: Arc::new(pool.load_actor(id)?),
            strength: cfg.schedule.strength(phase),
        },
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Run the training loop until the budget, a stop condition or a hook limit.
pub fn train_with(cfg: &RunConfig, resume: bool, hooks: &TrainHooks<'_>) -> Result<TrainSummary> {
    let mut s = prepare_run(cfg, resume)?;
    let enc = cfg.encoder()?;
    let out = cfg.out_dir.clone();
    let per_rollout = cfg.workers.steps_per_rollout();
    let mut done_here = 0u64;
    let mut dirty = false;

    loop {
        if s.env_steps + per_rollout > cfg.budget_env_steps
            || hooks.max_rollouts.is_some_and(|m| done_here >= m)
            || cfg.stop_after_phases.is_some_and(|k| passed_phases(&s.league) >= k)
        {
            break;
        }
        let clock = Instant::now();
        let phase = s.league.phase;
        let choice = select_opponent(phase, &s.pool, &cfg.schedule, &cfg.sampling, &mut s.rng)?;
        let opponent = opponent_for(choice, phase, cfg, &s.pool)?;
        let scenario = cfg.schedule.scenario(phase, cfg.players_per_team);

        let ctx = RolloutContext {
            learner: &s.actor,
            policy_version: s.policy_version,
            rollout_index: s.rollout_index,
            opponent: &opponent,
            scenario: &scenario,
            encoder: &enc,
            rewards: &cfg.rewards,
            steps_per_worker: cfg.workers.steps_per_worker,
            record_replay: cfg.workers.record_replay,
            fault: hooks.fault,
        };
        let buffers = match collect(&ctx, &mut s.workers) {
            Ok(b) => b,
            Err(e) => {
                // Keep everything learned up to the last completed rollout.
                if dirty {
                    checkpoint(cfg, &s)?;
                }
                return Err(e);
            }
        };
        if cfg.workers.record_replay {
            let dir = out.join("replays");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for b in &buffers {
                let path = dir.join(format!("r{:06}_w{:03}.jsonl", s.rollout_index, b.worker));
                let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_replay(std::io::BufWriter::new(f), &b.replay)?;
            }
        }
        let (mut batch, summary) = merge(buffers)?;

        // Intrinsic reward augmentation.
        let active = intrinsic_active(s.rollout_index, cfg.train.warmup_rollouts);
        let mut rnd_loss = None;
        if active {
            let (ssir_vals, rnd_vals) = match cfg.variant {
                RewardVariant::Base => (None, None),
                RewardVariant::Ssir => {
                    let net = s.ssir.as_ref().expect("SSIR variant holds its network");
                    (Some(net.batch_bonus(&batch)?), None)
                }
                RewardVariant::Rnd => {
                    let rnd = s.rnd.as_mut().expect("RND variant holds its networks");
                    rnd.observe(batch.next_state_rows())?;
                    let raw = rnd.raw_bonus_batch(batch.next_state_rows())?;
                    let std = rnd.bonus_std();
                    (
                        None,
                        Some(
                            raw.into_iter()
                                .map(|r| cfg.intrinsic.rnd_coef * r / std)
                                .collect::<Vec<_>>(),
                        ),
                    )
                }
            };
            for t in 0..batch.len() {
                let inputs = IntrinsicInputs {
                    ssir_mean: ssir_vals.as_ref().map_or(0.0, |v| v[t]),
                    rnd: rnd_vals.as_ref().map_or(0.0, |v| v[t]),
                };
                let total = total_reward(cfg.variant, batch.base_rewards[t], &inputs, cfg.train.alpha_ssir);
                batch.rewards[t] = total;
                batch.intrinsic[t] = total - batch.base_rewards[t];
            }
            if let Some(rnd) = s.rnd.as_mut() {
                let states = batch.next_state_rows();
                rnd_loss =
                    Some(rnd.train_minibatched(states, cfg.intrinsic.rnd_lr, cfg.train.minibatch_size, &mut s.rng)?);
            }
        }

        finalize(
            &mut batch,
            &s.critic,
            &s.normalizer,
            cfg.train.gamma,
            cfg.train.gae_lambda,
        )?;
        let mut ssir_loss = None;
        if active {
            if let Some(net) = s.ssir.as_mut() {
                let (ext_adv, _) = batch.gae_for(&batch.base_rewards, cfg.train.gamma, cfg.train.gae_lambda);
                let targets = ssir_targets(&ext_adv);
                ssir_loss = Some(net.update(
                    &batch,
                    &targets,
                    cfg.intrinsic.ssir_lr,
                    cfg.train.minibatch_size,
                    &mut s.rng,
                )?);
            }
        }
        let actor_stats = actor_update(&batch, &mut s.actor, &mut s.actor_adam, &cfg.train, &mut s.rng)?;
        let critic_stats = critic_update(
            &batch,
            &mut s.critic,
            &mut s.critic_adam,
            &mut s.normalizer,
            &cfg.train,
            &mut s.rng,
        )?;
        s.policy_version += 1;
        s.env_steps += batch.len() as u64;

        // League bookkeeping.
        let results: Vec<MatchResult> = if cfg.probe_matches > 0 {
            probe(cfg, &s, &enc, &opponent, &scenario)?
        } else {
            summary.outcomes.clone()
        };
        for r in &results {
            s.league.record_result(r);
            if let Some(id) = opponent.snapshot_id() {
                s.pool.record(id, r.outcome);
            }
        }
        let elapsed = if cfg.record_wall_clock {
            clock.elapsed().as_secs_f64()
        } else {
            0.0
        };
        s.elapsed_seconds += elapsed;
        s.league.record_rollout(batch.len() as u64, elapsed);
        let window_win_rate = s.league.win_rate();
        let window_len = s.league.window.len();
        let threshold = cfg.schedule.threshold(phase);
        let advanced = s.league.advance_check(&cfg.schedule) == Decision::Advance;
        if advanced {
            let meta = CheckpointMetadata {
                seeds: vec![cfg.seed],
                players_per_team: cfg.players_per_team,
                pe_dim: cfg.pe_dim,
                ..CheckpointMetadata::default()
            };
            s.pool.snapshot(&s.actor, phase, s.env_steps, meta)?;
            s.league.advance();
            if s.league.phase != phase {
                s.workers.iter_mut().for_each(WorkerState::abandon_episode);
            }
        }
        if opponent.snapshot_id().is_some() && !advanced {
            s.pool.save_manifest()?;
        }

        let metrics = RolloutMetrics {
            rollout: s.rollout_index,
            phase,
            opponent: opponent.label(),
            env_steps: s.env_steps,
            policy_version: s.policy_version,
            episodes: summary.episodes,
            wins: summary.wins,
            draws: summary.draws,
            losses: summary.losses,
            rollout_win_rate: summary.win_rate(),
            window_win_rate,
            window_len,
            threshold,
            advanced,
            base_reward_mean: mean(&batch.base_rewards),
            intrinsic_active: active,
            intrinsic_mean: mean(&batch.intrinsic),
            actor: actor_stats,
            critic: critic_stats,
            ssir_loss,
            rnd_loss,
            rnd_bonus_std: s.rnd.as_ref().map(RndPair::bonus_std),
            elapsed_seconds: elapsed,
        };
        append(&out.join(METRICS_LOG), &(serde_json::to_string(&metrics)? + "\n"))?;
        let row = LeagueRow {
            phase: phase.to_string(),
            rollout: s.rollout_index,
            env_steps: s.env_steps,
            elapsed_seconds: s.elapsed_seconds,
            win_rate: window_win_rate,
            threshold,
            advanced,
        };
        append(&out.join(LEAGUE_LOG), &league_line(&row)?)?;

        s.rollout_index += 1;
        done_here += 1;
        dirty = true;
        if s.rollout_index.is_multiple_of(cfg.checkpoint_every) {
            checkpoint(cfg, &s)?;
            dirty = false;
        }
    }
    if dirty || !out.join(STATE_FILE).exists() {
        checkpoint(cfg, &s)?;
    }
    Ok(TrainSummary {
        rollouts: s.rollout_index,
        env_steps: s.env_steps,
        phase: s.league.phase,
        phases_passed: passed_phases(&s.league),
        window_win_rate: s.league.win_rate(),
        pool_size: s.pool.len(),
    })
}

fn passed_phases(league: &PhaseState) -> u32 {
    league.history.iter().filter(|r| r.passed).count() as u32
}

/// Dedicated win-rate probe matches of the current actor.
fn probe(
    cfg: &RunConfig,
    s: &TrainingState,
    enc: &FeatureEncoder,
    opponent: &OpponentPolicy,
    scenario: &ScenarioConfig,
) -> Result<Vec<MatchResult>> {
    use rayon::prelude::*;
    let base = mix_seed(cfg.seed, s.rollout_index.wrapping_add(1 << 40));
    (0..cfg.probe_matches as u64)
        .into_par_iter()
        .map(|m| Ok(eval::play_against(&s.actor, enc, opponent, scenario, mix_seed(base, m))?.1))
        .collect()
}

/// Evaluate an actor checkpoint against the scripted opponent; writes
/// `eval_matches.csv` and `eval_aggregate.csv` into `out_dir`.
pub fn evaluate(checkpoint: &Path, eval_cfg: &EvalConfig, out_dir: &Path) -> Result<Vec<EvalReport>> {
    eval_cfg.validate()?;
    if !checkpoint.exists() {
        return Err(Error::Run(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let ckpt = NetworkCheckpoint::load(checkpoint)?;
    let m = &ckpt.metadata;
    let n = if m.players_per_team > 0 {
        m.players_per_team
    } else {
        eval_cfg.players_per_team
    };
    let pe = if m.pe_dim > 0 {
        m.pe_dim
    } else {
        crate::features::DEFAULT_PE_DIM
    };
    let enc = FeatureEncoder::new(n, pe)?;
    ensure!(
        ckpt.network.spec.input_dim() == enc.actor_dim() && ckpt.network.spec.output_dim() == Action::COUNT,
        Run,
        "checkpoint network does not fit a {n}-player actor"
    );
    let reports = eval_cfg
        .seeds
        .iter()
        .map(|seed| eval::run_evaluation(&ckpt.network, &enc, eval_cfg.matches, eval_cfg.opponent_strength, *seed))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    eval::write_match_csv(&reports, &out_dir.join("eval_matches.csv"))?;
    eval::write_aggregate_csv(&reports, &out_dir.join("eval_aggregate.csv"))?;
    Ok(reports)
}

/// Snapshot of a run's league progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeagueStatus {
    pub phase: Phase,
    pub rollouts: u64,
    pub env_steps: u64,
    pub elapsed_seconds: f64,
    pub window_win_rate: f64,
    pub window_len: usize,
    pub curriculum_passed: u32,
    pub history: Vec<PhaseRecord>,
    pub pool: PolicyPool,
}

pub fn league_status(run_dir: &Path) -> Result<LeagueStatus> {
    let s = TrainingState::load(&run_dir.join(STATE_FILE))?;
    let pool = PolicyPool::load(&run_dir.join("pool")).unwrap_or(s.pool.clone());
    Ok(LeagueStatus {
        phase: s.league.phase,
        rollouts: s.rollout_index,
        env_steps: s.env_steps,
        elapsed_seconds: s.elapsed_seconds,
        window_win_rate: s.league.win_rate(),
        window_len: s.league.window.len(),
        curriculum_passed: s.league.curriculum_passed(),
        history: s.league.history.clone(),
        pool,
    })
}

impl std::fmt::Display for LeagueStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "phase            {}", self.phase)?;
        writeln!(f, "rollouts         {}", self.rollouts)?;
        writeln!(f, "env steps        {}", self.env_steps)?;
        writeln!(f, "elapsed seconds  {:.1}", self.elapsed_seconds)?;
        writeln!(
            f,
            "window win rate  {:.3} over {} episodes",
            self.window_win_rate, self.window_len
        )?;
        writeln!(f, "curriculum passed {}", self.curriculum_passed)?;
        writeln!(f)?;
        writeln!(
            f,
            "{:<14} {:>7} {:>9} {:>12} {:>10}",
            "phase", "passed", "rollouts", "env_steps", "seconds"
        )?;
        for r in &self.history {
            writeln!(
                f,
                "{:<14} {:>7} {:>9} {:>12} {:>10.1}",
                r.phase.to_string(),
                r.passed,
                r.rollouts,
                r.env_steps,
                r.elapsed_seconds
            )?;
        }
        writeln!(f)?;
        writeln!(f, "pool ({} entries)", self.pool.len())?;
        for e in &self.pool.entries {
            let wr = e.win_rate().map_or("-".to_string(), |p| format!("{p:.3}"));
            writeln!(
                f,
                "  #{:<4} {:<14} step {:>10}  games {:>5}  win rate {wr}",
                e.id,
                e.phase.to_string(),
                e.creation_step,
                e.games
            )?;
        }
        Ok(())
    }
}
