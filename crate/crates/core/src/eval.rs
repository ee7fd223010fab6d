//! Evaluation against the scripted opponent: football counters per match and
//! interquartile-mean aggregation over many matches.

use std::path::Path;

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{self, Action, Event, ScenarioConfig, Team};
use crate::error::{ensure, Error, Result};
use crate::features::FeatureEncoder;
use crate::league::MatchResult;
use crate::nn::{sample, Mlp};
use crate::rollout::{mix_seed, opponent_actions, OpponentPolicy};

/// Heuristic strength used as the medium opponent level.
pub const MEDIUM_STRENGTH: f64 = 0.6;
pub const DEFAULT_MATCHES: usize = 50;

/// Counters of one match, from the evaluated (home) team's point of view.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchStats {
    pub total_passes: u32,
    pub good_passes: u32,
    pub bad_passes: u32,
    pub total_shots: u32,
    pub good_shots: u32,
    pub bad_shots: u32,
    pub possession_steps: u32,
    pub interceptions_made: u32,
    pub times_intercepted: u32,
    pub goals_for: u32,
    pub goals_against: u32,
}

impl MatchStats {
    pub const FIELDS: [&'static str; 11] = [
        "total_passes",
        "good_passes",
        "bad_passes",
        "total_shots",
        "good_shots",
        "bad_shots",
        "possession_steps",
        "interceptions_made",
        "times_intercepted",
        "goals_for",
        "goals_against",
    ];

    pub fn values(&self) -> [u32; 11] {
        [
            self.total_passes,
            self.good_passes,
            self.bad_passes,
            self.total_shots,
            self.good_shots,
            self.bad_shots,
            self.possession_steps,
            self.interceptions_made,
            self.times_intercepted,
            self.goals_for,
            self.goals_against,
        ]
    }

    pub fn record(&mut self, events: &[Event], team: Team) {
        for e in events {
            match *e {
                Event::PassAttempt { team: t, good } if t == team => {
                    self.total_passes += 1;
                    if good {
                        self.good_passes += 1;
                    } else {
                        self.bad_passes += 1;
                    }
                }
                Event::ShotAttempt { team: t, good } if t == team => {
                    self.total_shots += 1;
                    if good {
                        self.good_shots += 1;
                    } else {
                        self.bad_shots += 1;
                    }
                }
                Event::Goal { team: t } if t == team => self.goals_for += 1,
                Event::Goal { .. } => self.goals_against += 1,
                Event::Interception { by_team } if by_team == team => self.interceptions_made += 1,
                Event::Interception { .. } => self.times_intercepted += 1,
                _ => {}
            }
        }
    }

    /// Counter algebra every match must satisfy.
    pub fn consistent(&self) -> bool {
        self.good_passes + self.bad_passes == self.total_passes
            && self.good_shots + self.bad_shots == self.total_shots
            && self.good_shots == self.goals_for
    }
}

/// Play one match of `actor` (home) against a heuristic opponent.
/// Deterministic in `(actor, strength, scenario, seed)`.
pub fn play_match(
    actor: &Mlp,
    encoder: &FeatureEncoder,
    strength: f64,
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<MatchStats> {
    Ok(play_against(actor, encoder, &OpponentPolicy::Heuristic { strength }, scenario, seed)?.0)
}

/// Play one episode against any opponent; also returns the match result.
pub fn play_against(
    actor: &Mlp,
    encoder: &FeatureEncoder,
    opponent: &OpponentPolicy,
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<(MatchStats, MatchResult)> {
    let n = scenario.players_per_team;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX));
    let mut state = env::reset(scenario, seed)?;
    let mut stats = MatchStats::default();
    let mut obs = Vec::with_capacity(n * encoder.actor_dim());
    let mut opp_obs = Vec::new();
    loop {
        encoder.team_into(&state, Team::Home, &mut obs)?;
        let rows = ArrayView2::from_shape((n, encoder.actor_dim()), obs.as_slice())
            .map_err(|e| Error::Contract(e.to_string()))?;
        let logits = actor.predict_batch(rows)?;
        let home: Vec<Action> = logits
            .rows()
            .into_iter()
            .map(|row| {
                let (a, _) = sample(row.as_slice().expect("row-major logits"), &mut rng);
                Action::from_index(a).expect("actor output width is the action count")
            })
            .collect();
        let away = opponent_actions(opponent, &state, encoder, &mut rng, &mut opp_obs)?;
        let res = env::step(&state, &home, &away)?;
        stats.record(&res.events, Team::Home);
        if res.next_state.possession() == Some(Team::Home) {
            stats.possession_steps += 1;
        }
        if res.terminated {
            let s = &res.next_state;
            return Ok((stats, MatchResult::from_score(s.score, s.step)));
        }
        state = res.next_state;
    }
}

/// Mean of the values left after dropping the `floor(n/4)` smallest and
/// largest.
pub fn iqm(values: &[f64]) -> Result<f64> {
    ensure!(!values.is_empty(), Contract, "interquartile mean of an empty list");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 4;
    let mid = &v[k..v.len() - k];
    Ok(mid.iter().sum::<f64>() / mid.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub matches: usize,
    pub opponent_strength: f64,
    pub players_per_team: usize,
    /// One report per group seed; match seeds are derived from it.
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            matches: DEFAULT_MATCHES,
            opponent_strength: MEDIUM_STRENGTH,
            players_per_team: 4,
            seeds: vec![0],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.matches >= 1, Config, "evaluation needs at least one match");
        ensure!(!self.seeds.is_empty(), Config, "evaluation needs at least one seed");
        ensure!(
            (0.0..=1.0).contains(&self.opponent_strength),
            Config,
            "opponent strength must lie in [0, 1]"
        );
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub iqm: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub group_seed: u64,
    pub opponent: String,
    pub match_seeds: Vec<u64>,
    pub matches: Vec<MatchStats>,
    /// Same order as [`MatchStats::FIELDS`].
    pub metrics: Vec<MetricSummary>,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<MetricSummary> {
        MatchStats::FIELDS
            .iter()
            .position(|f| *f == name)
            .map(|i| self.metrics[i])
    }
}

pub fn match_seeds(group_seed: u64, matches: usize) -> Vec<u64> {
    (0..matches as u64).map(|m| mix_seed(group_seed, m)).collect()
}

/// Play `matches` independent full matches in parallel and aggregate them.
pub fn run_evaluation(
    actor: &Mlp,
    encoder: &FeatureEncoder,
    matches: usize,
    strength: f64,
    group_seed: u64,
) -> Result<EvalReport> {
    ensure!(matches >= 1, Contract, "evaluation needs at least one match");
    let scenario = ScenarioConfig::self_play(encoder.players_per_team());
    let seeds = match_seeds(group_seed, matches);
    let stats = seeds
        .par_iter()
        .map(|s| play_match(actor, encoder, strength, &scenario, *s))
        .collect::<Result<Vec<_>>>()?;
    report_from(group_seed, format!("heuristic@{strength}"), seeds, stats)
}

pub fn report_from(
    group_seed: u64,
    opponent: String,
    match_seeds: Vec<u64>,
    matches: Vec<MatchStats>,
) -> Result<EvalReport> {
    ensure!(!matches.is_empty(), Contract, "report needs at least one match");
    let metrics = (0..MatchStats::FIELDS.len())
        .map(|i| {
            let col: Vec<f64> = matches.iter().map(|m| m.values()[i] as f64).collect();
            Ok(MetricSummary {
                iqm: iqm(&col)?,
                std: std_dev(&col),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        group_seed,
        opponent,
        match_seeds,
        matches,
        metrics,
    })
}

/// One row per match across all reports.
pub fn write_match_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["group_seed", "match_seed"];
    header.extend(MatchStats::FIELDS);
    w.write_record(&header)?;
    for r in reports {
        for (seed, m) in r.match_seeds.iter().zip(&r.matches) {
            let mut row = vec![r.group_seed.to_string(), seed.to_string()];
            row.extend(m.values().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One aggregate row per report: IQM and standard deviation of each counter.
pub fn write_aggregate_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["group_seed".to_string(), "opponent".into(), "matches".into()];
    for f in MatchStats::FIELDS {
        header.push(format!("{f}_iqm"));
        header.push(format!("{f}_std"));
    }
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.group_seed.to_string(),
            r.opponent.clone(),
            r.matches.len().to_string(),
        ];
        for m in &r.metrics {
            row.push(m.iqm.to_string());
            row.push(m.std.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
