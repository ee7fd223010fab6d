//! Training schedule: ten curriculum scenarios gated by win-rate thresholds,
//! then alternating Challenge / Generalize self-play phases with opponents
//! drawn from a pool of frozen policy snapshots.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::ScenarioConfig;
use crate::error::{ensure, Error, Result};
use crate::nn::{CheckpointMetadata, Mlp, NetworkCheckpoint};

pub const CURRICULUM_SCENARIOS: u32 = 10;
pub const STRENGTH_FACTORS: [f64; 10] = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.75, 0.95];
pub const FIRST_THRESHOLD: f64 = 0.55;
pub const MAX_THRESHOLD: f64 = 0.75;
/// Scenario index at which the threshold ramp reaches its maximum.
pub const RAMP_END: u32 = 8;
pub const DEFAULT_WINDOW: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Phase {
    /// 1-based scenario index.
    Curriculum(u32),
    Challenge,
    Generalize,
}

impl Phase {
    pub fn next(self) -> Phase {
        match self {
            Phase::Curriculum(k) if k < CURRICULUM_SCENARIOS => Phase::Curriculum(k + 1),
            Phase::Curriculum(_) => Phase::Challenge,
            Phase::Challenge => Phase::Generalize,
            Phase::Generalize => Phase::Challenge,
        }
    }

    pub fn is_self_play(self) -> bool {
        !matches!(self, Phase::Curriculum(_))
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Curriculum(k) => write!(f, "curriculum_{k}"),
            Phase::Challenge => f.write_str("challenge"),
            Phase::Generalize => f.write_str("generalize"),
        }
    }
}

impl From<Phase> for String {
    fn from(p: Phase) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Phase {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "challenge" => Ok(Phase::Challenge),
            "generalize" => Ok(Phase::Generalize),
            _ => s
                .strip_prefix("curriculum_")
                .and_then(|k| k.parse().ok())
                .filter(|k| (1..=CURRICULUM_SCENARIOS).contains(k))
                .map(Phase::Curriculum)
                .ok_or_else(|| Error::Config(format!("unknown phase {s:?}"))),
        }
    }
}

/// Win-rate needed to leave `phase`.
pub fn threshold(phase: Phase) -> f64 {
    match phase {
        Phase::Curriculum(k) if k <= RAMP_END => {
            FIRST_THRESHOLD + (k.max(1) - 1) as f64 * (MAX_THRESHOLD - FIRST_THRESHOLD) / (RAMP_END - 1) as f64
        }
        _ => MAX_THRESHOLD,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumSchedule {
    pub strength_factors: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Threshold of both self-play phases.
    pub self_play_threshold: f64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            strength_factors: STRENGTH_FACTORS.to_vec(),
            thresholds: (1..=CURRICULUM_SCENARIOS)
                .map(|k| threshold(Phase::Curriculum(k)))
                .collect(),
            self_play_threshold: MAX_THRESHOLD,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        let n = CURRICULUM_SCENARIOS as usize;
        ensure!(
            self.strength_factors.len() == n && self.thresholds.len() == n,
            Config,
            "curriculum needs {n} strength factors and thresholds"
        );
        ensure!(
            self.strength_factors.iter().all(|s| *s > 0.0 && *s <= 1.0),
            Config,
            "strength factors must lie in (0, 1]"
        );
        ensure!(
            self.thresholds
                .iter()
                .chain(std::iter::once(&self.self_play_threshold))
                .all(|t| (0.0..=1.0).contains(t)),
            Config,
            "thresholds must lie in [0, 1]"
        );
        Ok(())
    }

    pub fn threshold(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Curriculum(k) => self.thresholds[(k - 1) as usize],
            _ => self.self_play_threshold,
        }
    }

    /// Opponent strength (reaction probability) for the phase.
    pub fn strength(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Curriculum(k) => self.strength_factors[(k - 1) as usize],
            _ => 1.0,
        }
    }

    pub fn scenario(&self, phase: Phase, players_per_team: usize) -> ScenarioConfig {
        match phase {
            Phase::Curriculum(k) => ScenarioConfig::curriculum(k, players_per_team, self.strength(phase)),
            _ => ScenarioConfig::self_play(players_per_team),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Win,
    Draw,
    Loss,
}

/// Finished episode from the learning team's point of view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub outcome: Outcome,
    /// (learner goals, opponent goals)
    pub score: (u32, u32),
    pub length: u32,
}

impl MatchResult {
    pub fn from_score(score: (u32, u32), length: u32) -> Self {
        let outcome = match score.0.cmp(&score.1) {
            std::cmp::Ordering::Greater => Outcome::Win,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::Loss,
        };
        Self { outcome, score, length }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Stay,
    Advance,
}

/// Env-step and wall-clock accounting for one visit of a phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    pub rollouts: u64,
    pub env_steps: u64,
    pub elapsed_seconds: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phase: Phase,
    pub window: VecDeque<Outcome>,
    pub capacity: usize,
    /// One record per phase visit, the last one being the current phase.
    pub history: Vec<PhaseRecord>,
}

impl PhaseState {
    pub fn new(capacity: usize) -> Self {
        Self::starting_at(Phase::Curriculum(1), capacity)
    }

    pub fn starting_at(phase: Phase, capacity: usize) -> Self {
        Self {
            phase,
            window: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            history: vec![PhaseRecord {
                phase,
                rollouts: 0,
                env_steps: 0,
                elapsed_seconds: 0.0,
                passed: false,
            }],
        }
    }

    pub fn record_result(&mut self, result: &MatchResult) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(result.outcome);
    }

    pub fn record_rollout(&mut self, env_steps: u64, elapsed_seconds: f64) {
        let rec = self.history.last_mut().expect("history is never empty");
        rec.rollouts += 1;
        rec.env_steps += env_steps;
        rec.elapsed_seconds += elapsed_seconds;
    }

    /// Fraction of wins in the window; 0 for an empty window.
    pub fn win_rate(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        let wins = self.window.iter().filter(|o| **o == Outcome::Win).count();
        wins as f64 / self.window.len() as f64
    }

    pub fn window_full(&self) -> bool {
        self.window.len() >= self.capacity
    }

    pub fn advance_check(&self, schedule: &CurriculumSchedule) -> Decision {
        if self.window_full() && self.win_rate() >= schedule.threshold(self.phase) {
            Decision::Advance
        } else {
            Decision::Stay
        }
    }

    /// Move to the next phase and clear the window. Snapshotting the policy
    /// is the caller's job.
    pub fn advance(&mut self) {
        self.history.last_mut().expect("history is never empty").passed = true;
        self.phase = self.phase.next();
        self.window.clear();
        self.history.push(PhaseRecord {
            phase: self.phase,
            rollouts: 0,
            env_steps: 0,
            elapsed_seconds: 0.0,
            passed: false,
        });
    }

    pub fn curriculum_passed(&self) -> u32 {
        self.history
            .iter()
            .filter(|r| r.passed && matches!(r.phase, Phase::Curriculum(_)))
            .count() as u32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: u64,
    /// File name inside the pool directory.
    pub file: String,
    pub phase: Phase,
    pub creation_step: u64,
    /// Games of the live policy against this entry, and its wins.
    pub games: u64,
    pub wins: u64,
}

impl PoolEntry {
    /// Live policy's win-rate against this entry, if it has played it.
    pub fn win_rate(&self) -> Option<f64> {
        (self.games > 0).then(|| self.wins as f64 / self.games as f64)
    }
}

pub const POOL_MANIFEST: &str = "pool.json";

/// Append-only set of frozen actor snapshots stored as individual files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyPool {
    #[serde(skip)]
    pub dir: PathBuf,
    pub entries: Vec<PoolEntry>,
    pub next_id: u64,
}

impl PolicyPool {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            entries: Vec::new(),
            next_id: 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn latest(&self) -> Option<&PoolEntry> {
        self.entries.last()
    }

    pub fn get(&self, id: u64) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn entry_path(&self, e: &PoolEntry) -> PathBuf {
        self.dir.join(&e.file)
    }

    /// Write `actor` as a new entry, verify it reloads bit-identically and
    /// persist the manifest. On error the pool is left unchanged.
    pub fn snapshot(
        &mut self,
        actor: &Mlp,
        phase: Phase,
        creation_step: u64,
        mut metadata: CheckpointMetadata,
    ) -> Result<&PoolEntry> {
        let id = self.next_id;
        let file = format!("policy_{id:05}.json");
        let path = self.dir.join(&file);
        metadata.label = format!("{id}:{phase}");
        metadata.phase = phase.to_string();
        metadata.training_step = creation_step;
        let ckpt = NetworkCheckpoint::new(actor.clone(), None, metadata);
        let fail = |e: Error| Error::Run(format!("pool snapshot {id} failed: {e}"));
        ckpt.save(&path).map_err(fail)?;
        let back = NetworkCheckpoint::load(&path).map_err(fail)?;
        if back.network != *actor {
            let _ = fs::remove_file(&path);
            return Err(Error::Run(format!("pool snapshot {id} did not round-trip")));
        }
        let mut next = self.clone();
        next.entries.push(PoolEntry {
            id,
            file,
            phase,
            creation_step,
            games: 0,
            wins: 0,
        });
        next.next_id += 1;
        if let Err(e) = next.save_manifest() {
            let _ = fs::remove_file(&path);
            return Err(fail(e));
        }
        *self = next;
        Ok(self.entries.last().unwrap())
    }

    pub fn load_actor(&self, id: u64) -> Result<Mlp> {
        let e = self
            .get(id)
            .ok_or_else(|| Error::Run(format!("pool has no entry {id}")))?;
        Ok(NetworkCheckpoint::load(&self.entry_path(e))?.network)
    }

    pub fn record(&mut self, id: u64, outcome: Outcome) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.id == id) {
            e.games += 1;
            if outcome == Outcome::Win {
                e.wins += 1;
            }
        }
    }

    pub fn save_manifest(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.dir.join(POOL_MANIFEST);
        let tmp = self.dir.join(format!("{POOL_MANIFEST}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Load a pool and check that every entry file exists and parses.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(POOL_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut pool: PolicyPool = serde_json::from_str(&text)?;
        pool.dir = dir.to_path_buf();
        let mut last = 0;
        for e in &pool.entries {
            ensure!(e.id > last, State, "pool ids must be strictly increasing");
            last = e.id;
            NetworkCheckpoint::load(&pool.entry_path(e))?;
        }
        Ok(pool)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Challenge phase: probability of facing the latest snapshot.
    pub latest_probability: f64,
    /// Generalize phase: weight exponent in `(1 - p)^k`.
    pub pfsp_power: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            latest_probability: 0.8,
            pfsp_power: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpponentChoice {
    Heuristic { strength: f64 },
    Snapshot { id: u64 },
}

/// Opponent sampling weights used in the Generalize phase.
pub fn pfsp_weights(pool: &PolicyPool, power: f64) -> Vec<f64> {
    if pool.entries.iter().all(|e| e.win_rate().is_none()) {
        return vec![1.0; pool.len()];
    }
    pool.entries
        .iter()
        .map(|e| (1.0 - e.win_rate().unwrap_or(0.5)).powf(power))
        .collect()
}

fn weighted_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn select_opponent<R: Rng + ?Sized>(
    phase: Phase,
    pool: &PolicyPool,
    schedule: &CurriculumSchedule,
    sampling: &SamplingConfig,
    rng: &mut R,
) -> Result<OpponentChoice> {
    if phase == Phase::Curriculum(1) {
        return Ok(OpponentChoice::Heuristic {
            strength: schedule.strength(phase),
        });
    }
    ensure!(!pool.is_empty(), Run, "phase {phase} needs a non-empty policy pool");
    let id = match phase {
        Phase::Curriculum(k) => {
            let wanted = Phase::Curriculum(k - 1);
            pool.entries
                .iter()
                .rev()
                .find(|e| e.phase == wanted)
                .unwrap_or_else(|| pool.latest().unwrap())
                .id
        }
        Phase::Challenge => {
            let n = pool.len();
            if n == 1 || rng.random::<f64>() < sampling.latest_probability {
                pool.entries[n - 1].id
            } else {
                pool.entries[rng.random_range(0..n - 1)].id
            }
        }
        Phase::Generalize => {
            let w = pfsp_weights(pool, sampling.pfsp_power);
            pool.entries[weighted_index(&w, rng)].id
        }
    };
    Ok(OpponentChoice::Snapshot { id })
}

/// One row of the league progress CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeagueRow {
    pub phase: String,
    pub rollout: u64,
    pub env_steps: u64,
    pub elapsed_seconds: f64,
    pub win_rate: f64,
    pub threshold: f64,
    pub advanced: bool,
}
