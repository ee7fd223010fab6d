mod common;

use std::sync::Arc;

use kickoff_core::driver;
use kickoff_core::env::{Action, Event, ScenarioConfig, Team};
use kickoff_core::eval::*;
use kickoff_core::features::FeatureEncoder;
use kickoff_core::nn::{CheckpointMetadata, Mlp, MlpSpec, NetworkCheckpoint, OutputActivation, ParameterSet};
use kickoff_core::rollout::OpponentPolicy;
use kickoff_core::Error;
use proptest::prelude::*;

fn encoder() -> FeatureEncoder {
    FeatureEncoder::new(4, 16).unwrap()
}

fn zero_actor(enc: &FeatureEncoder) -> Mlp {
    Mlp::zeros(MlpSpec::with_hidden(enc.actor_dim(), 16, 2, Action::COUNT, OutputActivation::Identity).unwrap())
}

/// Actor whose output bias makes `Idle` certain up to e^-60.
fn idle_actor(enc: &FeatureEncoder) -> Mlp {
    let spec = MlpSpec::with_hidden(enc.actor_dim(), 8, 1, Action::COUNT, OutputActivation::Identity).unwrap();
    let mut params = ParameterSet::zeros(&spec);
    params.layers[1].bias[Action::Idle.index()] = 60.0;
    Mlp::new(spec, params).unwrap()
}

#[test]
fn idle_match_has_no_events() {
    let enc = encoder();
    let actor = idle_actor(&enc);
    let idle_opp = OpponentPolicy::Snapshot {
        id: 0,
        actor: Arc::new(actor.clone()),
        strength: 0.0,
    };
    let sc = ScenarioConfig::self_play(4);
    let (stats, result) = play_against(&actor, &enc, &idle_opp, &sc, 3).unwrap();
    let v = stats.values();
    for (name, value) in MatchStats::FIELDS.iter().zip(v) {
        if *name != "possession_steps" {
            assert_eq!(value, 0, "{name}");
        }
    }
    assert_eq!(result.length, sc.episode_step_limit);
}

#[test]
fn one_completed_pass_maps_to_counters() {
    let mut s = MatchStats::default();
    s.record(
        &[
            Event::PassAttempt {
                team: Team::Home,
                good: true,
            },
            Event::PassAttempt {
                team: Team::Away,
                good: false,
            },
            Event::ShotAttempt {
                team: Team::Away,
                good: true,
            },
            Event::Goal { team: Team::Away },
        ],
        Team::Home,
    );
    assert_eq!((s.total_passes, s.good_passes, s.bad_passes), (1, 1, 0));
    assert_eq!((s.total_shots, s.goals_for, s.goals_against), (0, 0, 1));
    assert!(s.consistent());
}

#[test]
fn matches_are_deterministic_per_seed() {
    let enc = encoder();
    let actor = zero_actor(&enc);
    let sc = ScenarioConfig::self_play(4);
    let a = play_match(&actor, &enc, MEDIUM_STRENGTH, &sc, 11).unwrap();
    assert_eq!(a, play_match(&actor, &enc, MEDIUM_STRENGTH, &sc, 11).unwrap());
    assert!(a.consistent());
}

#[test]
fn degenerate_aggregation() {
    let enc = encoder();
    let actor = zero_actor(&enc);
    let one = run_evaluation(&actor, &enc, 1, MEDIUM_STRENGTH, 5).unwrap();
    for (m, v) in one.metrics.iter().zip(one.matches[0].values()) {
        assert_eq!((m.iqm, m.std), (v as f64, 0.0));
    }
    // Identical matches give zero spread.
    let m = one.matches[0];
    let same = report_from(0, "x".into(), vec![1, 1, 1], vec![m; 3]).unwrap();
    assert!(same.metrics.iter().all(|s| s.std == 0.0));
    assert!(matches!(
        run_evaluation(&actor, &enc, 0, 0.6, 0),
        Err(Error::Contract(_))
    ));
}

#[test]
fn evaluation_never_mutates_the_actor() {
    let enc = encoder();
    let actor = zero_actor(&enc);
    let copy = actor.clone();
    run_evaluation(&actor, &enc, 2, MEDIUM_STRENGTH, 0).unwrap();
    assert_eq!(actor, copy);
}

#[test]
fn csv_reports_have_one_row_per_match_and_seed_group() {
    let enc = encoder();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero.json");
    let meta = CheckpointMetadata {
        players_per_team: 4,
        pe_dim: 16,
        ..CheckpointMetadata::default()
    };
    NetworkCheckpoint::new(zero_actor(&enc), None, meta)
        .save(&ckpt)
        .unwrap();
    let cfg = EvalConfig {
        matches: 3,
        seeds: vec![0, 1, 2, 3, 4],
        ..EvalConfig::default()
    };
    let out = dir.path().join("out");
    let reports = driver::evaluate(&ckpt, &cfg, &out).unwrap();
    assert_eq!(reports.len(), 5);

    let mut per_match = csv::Reader::from_path(out.join("eval_matches.csv")).unwrap();
    assert_eq!(per_match.headers().unwrap().len(), 2 + MatchStats::FIELDS.len());
    assert_eq!(per_match.records().count(), 15);
    let mut agg = csv::Reader::from_path(out.join("eval_aggregate.csv")).unwrap();
    let width = agg.headers().unwrap().len();
    assert_eq!(width, 3 + 2 * MatchStats::FIELDS.len());
    let rows: Vec<csv::StringRecord> = agg.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.len() == width));
    // A uniform random policy concedes far more than it scores against the medium opponent.
    for r in &reports {
        assert!(r.metric("goals_against").unwrap().iqm > r.metric("goals_for").unwrap().iqm);
        assert!(r.matches.iter().all(MatchStats::consistent));
    }
}

#[test]
fn missing_checkpoint_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = driver::evaluate(&dir.path().join("nope.json"), &EvalConfig::default(), dir.path()).unwrap_err();
    assert!(matches!(err, Error::Run(_)));
}

#[test]
fn match_seeds_are_distinct() {
    let s = match_seeds(7, 50);
    let mut u = s.clone();
    u.sort();
    u.dedup();
    assert_eq!(u.len(), 50);
}

proptest! {
    #[test]
    fn iqm_matches_oracle_and_properties(mut v in prop::collection::vec(-1e6f64..1e6, 1..100)) {
        let x = iqm(&v).unwrap();
        prop_assert_eq!(x.to_bits(), common::iqm_sort_trim_mean(&v).to_bits());
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= x && x <= hi);
        v.reverse();
        prop_assert_eq!(iqm(&v).unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn iqm_of_constant_is_constant(c in -1e6f64..1e6, n in 1usize..60) {
        let x = iqm(&vec![c; n]).unwrap();
        prop_assert!((x - c).abs() <= 1e-12 * c.abs().max(1.0), "{} vs {}", x, c);
    }
}
