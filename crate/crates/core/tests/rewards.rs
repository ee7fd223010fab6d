use kickoff_core::env::{self, Action, Event, MatchState, PlayerRef, ScenarioConfig, Team, Vec2};
use kickoff_core::features::FeatureEncoder;
use kickoff_core::nn::{Mlp, MlpSpec, OutputActivation, ParameterSet};
use kickoff_core::policy::{RolloutBatch, Transition};
use kickoff_core::rewards::*;
use kickoff_core::Error;
use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Four home and four away players on a spread grid, well inside the pitch.
fn spread_state() -> MatchState {
    let mut s = env::reset(&ScenarioConfig::kickoff(4), 0).unwrap();
    for (i, p) in s.home.iter_mut().enumerate() {
        p.position = Vec2::new(-0.8 + 0.2 * i as f64, -0.3);
    }
    for (i, p) in s.away.iter_mut().enumerate() {
        p.position = Vec2::new(-0.8 + 0.2 * i as f64, 0.3);
    }
    s.ball.position = s.home[0].position;
    s.ball.controller = None;
    s
}

/// Oracle: per-agent grouping count via an explicit pairwise scan.
fn clustered_agents(s: &MatchState, team: Team, threshold: f64) -> usize {
    let ps = s.team(team);
    (0..ps.len())
        .filter(|&i| (0..ps.len()).any(|j| j != i && ps[i].position.dist(ps[j].position) < threshold))
        .count()
}

#[test]
fn holding_the_ball_and_passing() {
    let cfg = ShapedRewardConfig::default();
    let mut s = spread_state();
    s.ball.controller = Some(PlayerRef::new(Team::Home, 0));
    let (h, a) = base_reward(&s, &[], &s, &cfg);
    assert_eq!((h, a), (0.0001, -0.0001));
    let pass = [Event::PassAttempt {
        team: Team::Home,
        good: true,
    }];
    let (h, a) = base_reward(&s, &pass, &s, &cfg);
    assert!((h - 0.0501).abs() < 1e-15 && a == -h);
    // A failed pass earns nothing.
    let bad = [Event::PassAttempt {
        team: Team::Home,
        good: false,
    }];
    assert_eq!(base_reward(&s, &bad, &s, &cfg).0, 0.0001);
}

#[test]
fn clustering_penalizes_each_crowded_agent() {
    let cfg = ShapedRewardConfig::default();
    let mut s = spread_state();
    s.home[1].position = s.home[0].position + Vec2::new(0.04, 0.0);
    assert_eq!(clustered_agents(&s, Team::Home, cfg.grouping_threshold), 2);
    let (h, a) = base_reward(&s, &[], &s, &cfg);
    assert!((h + 0.002).abs() < 1e-15, "{h}");
    assert_eq!(a, -h);
}

#[test]
fn goals_and_out_of_bounds() {
    let cfg = ShapedRewardConfig::default();
    let s = spread_state();
    let (h, _) = base_reward(&s, &[Event::Goal { team: Team::Away }], &s, &cfg);
    assert_eq!(h, -1.0);
    let mut out = s.clone();
    out.away[2].position = Vec2::new(0.0, 0.5);
    let (h, a) = base_reward(&s, &[], &out, &cfg);
    assert_eq!((h, a), (0.001, -0.001));
}

#[test]
fn ssir_bonus_examples() {
    let spec = SsirNetwork::spec(3, Action::COUNT);
    let zero = SsirNetwork::from_network(Mlp::zeros(spec.clone()));
    let obs = Array2::from_elem((2, 3), 0.7);
    assert_eq!(zero.bonus(obs.view(), &[1, 5]).unwrap(), 0.0);
    // Output bias alone sets r(o)[a]: +0.5 for action 1, -0.5 for action 5.
    let mut params = ParameterSet::zeros(&spec);
    params.layers[1].bias[1] = 0.5f64.atanh();
    params.layers[1].bias[5] = (-0.5f64).atanh();
    let net = SsirNetwork::from_network(Mlp::new(spec, params).unwrap());
    assert!(net.bonus(obs.view(), &[1, 5]).unwrap().abs() < 1e-15);
    assert!((net.bonus(obs.view(), &[1, 1]).unwrap() - 0.5).abs() < 1e-15);
    let r = total_reward(
        RewardVariant::Ssir,
        0.05,
        &IntrinsicInputs {
            ssir_mean: 0.2,
            rnd: 0.0,
        },
        0.1,
    );
    assert!((r - 0.07).abs() < 1e-15);
}

fn single_step_batch(obs: &[f64], actions: Vec<usize>) -> RolloutBatch {
    let n = actions.len();
    let mut batch = RolloutBatch::new(n, obs.len() / n, 1);
    batch
        .push(Transition {
            observations: obs.to_vec(),
            state: vec![0.0],
            next_state: vec![0.0],
            actions,
            log_probs: vec![0.0; n],
            reward: 0.0,
            done: false,
            events: 0,
        })
        .unwrap();
    batch
}

#[test]
fn ssir_regression_toward_a_positive_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = SsirNetwork::new(4, Action::COUNT, &mut rng);
    let obs = [0.3, -0.2, 0.5, 0.1];
    let batch = single_step_batch(&obs, vec![7]);
    let x = ArrayView2::from_shape((1, 4), &obs).unwrap();
    let mut losses = Vec::new();
    for _ in 0..500 {
        losses.push(net.update(&batch, &[1.0], 1e-2, 1, &mut rng).unwrap());
    }
    assert!(losses.iter().all(|l| *l >= 0.0));
    assert!(losses[499] < losses[0]);
    assert!(net.net.predict_batch(x).unwrap()[[0, 7]] > 0.95);
}

#[test]
fn ssir_zero_targets_drive_bonus_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = SsirNetwork::new(4, Action::COUNT, &mut rng);
    let obs: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
    let batch = single_step_batch(&obs, vec![2, 11]);
    for _ in 0..800 {
        net.update(&batch, &[0.0], 1e-2, 1, &mut rng).unwrap();
    }
    let x = ArrayView2::from_shape((2, 4), &obs).unwrap();
    assert!(net.bonus(x, &[2, 11]).unwrap().abs() < 1e-3);
}

#[test]
fn ssir_targets_are_clipped_normalized_advantages() {
    let t = ssir_targets(&[0.0, 0.0, 0.0, 10.0]);
    assert!(t.iter().all(|v| (-1.0..=1.0).contains(v)));
    assert_eq!(t[3], 1.0);
    assert!(ssir_targets(&[]).is_empty());
}

#[test]
fn rnd_identical_networks_give_zero_bonus() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = MlpSpec::with_hidden(5, 8, 1, RND_OUTPUTS, OutputActivation::Identity).unwrap();
    let net = Mlp::new(
        spec.clone(),
        ParameterSet::orthogonal(&spec, 2f64.sqrt(), 1.0, &mut rng),
    )
    .unwrap();
    let pair = RndPair::with_networks(net.clone(), net).unwrap();
    assert_eq!(pair.raw_bonus(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(), 0.0);
}

#[test]
fn rnd_mean_over_outputs_convention() {
    // Target outputs [1, 0, 0, 0] from its bias; predictor is all zeros.
    let spec = MlpSpec::new(vec![2, 3, RND_OUTPUTS], OutputActivation::Identity).unwrap();
    let mut target = ParameterSet::zeros(&spec);
    target.layers[1].bias[0] = 1.0;
    let pair = RndPair::with_networks(Mlp::new(spec.clone(), target).unwrap(), Mlp::zeros(spec)).unwrap();
    assert!((pair.raw_bonus(&[0.3, -0.4]).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn rnd_target_is_frozen() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pair = RndPair::new(6, &mut rng);
    let before = pair.target().net().clone();
    let states = Array2::from_shape_fn((32, 6), |(i, j)| ((i * 7 + j) as f64).cos());
    let mut losses = Vec::new();
    for _ in 0..300 {
        losses.push(pair.update(states.view(), 1e-3).unwrap());
    }
    assert_eq!(pair.target().net(), &before);
    let zeros = ParameterSet::zeros(&before.spec);
    assert!(matches!(
        pair.target_mut().try_update(&zeros, 0.1),
        Err(Error::Contract(_))
    ));
    // Loss non-increasing in 100-step moving average.
    let avg = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    assert!(avg(&losses[200..]) <= avg(&losses[100..200]));
    assert!(avg(&losses[100..200]) <= avg(&losses[..100]));
}

#[test]
fn warmup_gating() {
    assert!(!intrinsic_active(699, 700));
    assert!(intrinsic_active(700, 700));
    assert!(intrinsic_active(0, 0));
}

#[test]
fn base_variant_equals_zero_bonus_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let base: f64 = rng.random_range(-1.0..1.0);
        let x = IntrinsicInputs {
            ssir_mean: rng.random_range(-1.0..1.0),
            rnd: rng.random_range(0.0..2.0),
        };
        let b = total_reward(RewardVariant::Base, base, &x, 0.1);
        assert_eq!(b.to_bits(), total_reward(RewardVariant::Ssir, base, &x, 0.0).to_bits());
        let zero_rnd = IntrinsicInputs { rnd: 0.0, ..x };
        assert_eq!(
            b.to_bits(),
            total_reward(RewardVariant::Rnd, base, &zero_rnd, 0.1).to_bits()
        );
        // SSIR bound: the shift stays below alpha.
        assert!((total_reward(RewardVariant::Ssir, base, &x, 0.1) - base).abs() < 0.1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn base_reward_is_zero_sum(seed in any::<u64>(), strength in 0.05f64..1.0) {
        let cfg = ShapedRewardConfig::default();
        let sc = ScenarioConfig::self_play(4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = env::reset(&sc, seed).unwrap();
        for _ in 0..300 {
            if s.terminated {
                break;
            }
            let home: Vec<Action> = (0..4).map(|i| env::heuristic_action(&s, Team::Home, i, strength, &mut rng)).collect();
            let away: Vec<Action> = (0..4).map(|_| Action::from_index(rng.random_range(0..Action::COUNT)).unwrap()).collect();
            let r = env::step(&s, &home, &away).unwrap();
            let (h, a) = base_reward(&s, &r.events, &r.next_state, &cfg);
            prop_assert_eq!(h + a, 0.0);
            s = r.next_state;
        }
    }

    #[test]
    fn rnd_bonus_is_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = FeatureEncoder::new(4, 16).unwrap();
        let mut pair = RndPair::new(enc.critic_dim(), &mut rng);
        let mut s = env::reset(&ScenarioConfig::kickoff(4), seed).unwrap();
        let mut states = Vec::new();
        for _ in 0..50 {
            let acts: Vec<Action> = (0..4).map(|_| Action::from_index(rng.random_range(0..Action::COUNT)).unwrap()).collect();
            s = env::step(&s, &acts, &acts).unwrap().next_state;
            states.push(enc.critic(&s).unwrap());
        }
        let flat: Vec<f64> = states.iter().flatten().copied().collect();
        pair.update(ArrayView2::from_shape((50, enc.critic_dim()), &flat).unwrap(), 1e-3).unwrap();
        for st in &states {
            prop_assert!(pair.bonus(st).unwrap() >= 0.0);
        }
    }
}
