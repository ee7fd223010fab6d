use kickoff_core::env::*;
use kickoff_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn idle(n: usize) -> Vec<Action> {
    vec![Action::Idle; n]
}

fn kickoff_state(seed: u64) -> MatchState {
    reset(&ScenarioConfig::kickoff(4), seed).unwrap()
}

#[test]
fn reset_places_teams_and_ball() {
    let s = kickoff_state(7);
    assert_eq!(s.home.len(), 4);
    assert_eq!(s.away.len(), 4);
    assert_eq!(s.step, 0);
    assert_eq!(s.score, (0, 0));
    // The striker stands on the centre spot and owns the ball.
    assert_eq!(s.ball.controller, Some(PlayerRef::new(Team::Home, 3)));
    assert!(s.ball.position.norm() <= 0.02);
}

#[test]
fn reset_is_deterministic() {
    assert_eq!(kickoff_state(7), kickoff_state(7));
}

#[test]
fn eleven_a_side_uses_configured_positions() {
    let sc = ScenarioConfig::kickoff(11);
    let s = reset(&sc, 1).unwrap();
    assert_eq!(s.home.len(), 11);
    for (p, q) in s.home.iter().zip(&sc.home_positions) {
        assert_eq!((p.position.x, p.position.y), (q[0], q[1]));
    }
    for (p, q) in s.away.iter().zip(&sc.away_positions) {
        assert_eq!((p.position.x, p.position.y), (q[0], q[1]));
    }
}

#[test]
fn invalid_scenarios_are_config_errors() {
    let mut sc = ScenarioConfig::kickoff(4);
    sc.players_per_team = 0;
    assert!(matches!(reset(&sc, 0), Err(Error::Config(_))));
    let mut sc = ScenarioConfig::kickoff(4);
    sc.home_positions.clear();
    assert!(matches!(reset(&sc, 0), Err(Error::Config(_))));
    let mut sc = ScenarioConfig::kickoff(4);
    sc.opponent_strength = 0.0;
    assert!(matches!(reset(&sc, 0), Err(Error::Config(_))));
}

#[test]
fn scenario_toml_round_trip() {
    let sc = ScenarioConfig::curriculum(3, 4, 0.2);
    let text = sc.to_toml_string().unwrap();
    assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), sc);
}

#[test]
fn all_idle_is_a_no_op() {
    let s = kickoff_state(3);
    let r = step(&s, &idle(4), &idle(4)).unwrap();
    assert!(r.events.is_empty());
    assert!(!r.terminated);
    assert_eq!(r.scoring_reward_home, 0);
    for (a, b) in s
        .home
        .iter()
        .chain(&s.away)
        .zip(r.next_state.home.iter().chain(&r.next_state.away))
    {
        assert_eq!(a.position, b.position);
    }
    assert_eq!(r.next_state.step, 1);
}

#[test]
fn wrong_action_count_is_a_contract_violation() {
    let s = kickoff_state(0);
    assert!(matches!(step(&s, &idle(3), &idle(4)), Err(Error::Contract(_))));
}

#[test]
fn terminated_state_cannot_step() {
    let mut s = kickoff_state(0);
    s.terminated = true;
    assert!(matches!(step(&s, &idle(4), &idle(4)), Err(Error::State(_))));
}

/// Home carrier alone in front of an empty goal.
fn shooting_state(seed: u64, x: f64) -> MatchState {
    let mut sc = ScenarioConfig::curriculum(1, 4, 1.0);
    sc.home_positions[3] = [x, 0.0];
    sc.ball_start = [x, 0.0];
    // Keep every defender well away from the shooting lane.
    sc.away_positions = vec![[0.0, 0.4], [0.0, -0.4], [-0.2, 0.4], [-0.2, -0.4]];
    reset(&sc, seed).unwrap()
}

#[test]
fn close_range_shot_scores() {
    let s = shooting_state(11, 0.85);
    let mut home = idle(4);
    home[3] = Action::Shot;
    let r = step(&s, &home, &idle(4)).unwrap();
    assert_eq!(
        r.events,
        vec![
            Event::ShotAttempt {
                team: Team::Home,
                good: true
            },
            Event::Goal { team: Team::Home }
        ]
    );
    assert_eq!(r.scoring_reward_home, 1);
    assert!(r.terminated);
    assert_eq!(r.termination_cause, Some(TerminationCause::Goal));
    assert_eq!(r.next_state.score, (1, 0));
}

#[test]
fn shot_conversion_falls_with_distance() {
    let rate = |x: f64| {
        (0..400)
            .filter(|&seed| {
                let s = shooting_state(seed, x);
                let mut home = idle(4);
                home[3] = Action::Shot;
                step(&s, &home, &idle(4)).unwrap().scoring_reward_home == 1
            })
            .count() as f64
            / 400.0
    };
    let near = rate(0.8);
    let far = rate(0.2);
    assert!(near > 0.9, "near {near}");
    assert!(far < near, "far {far} near {near}");
}

#[test]
fn carrier_leaving_the_sideline_is_out_of_bounds() {
    let mut sc = ScenarioConfig::curriculum(4, 4, 1.0);
    let y = sc.field.half_width() - 0.005;
    sc.home_positions[3] = [0.3, y];
    sc.ball_start = [0.3, y];
    let s = reset(&sc, 5).unwrap();
    assert_eq!(s.ball.controller, Some(PlayerRef::new(Team::Home, 3)));
    let mut home = idle(4);
    home[3] = Action::Move(Compass::Top);
    let r = step(&s, &home, &idle(4)).unwrap();
    // Oracle: the new carrier position is beyond the half width.
    let p = r.next_state.home[3].position;
    assert!(p.y.abs() > sc.field.half_width());
    assert_eq!(r.events, vec![Event::OutOfBounds { team: Team::Home }]);
    assert!(r.terminated);
    assert_eq!(r.termination_cause, Some(TerminationCause::OutOfBounds));
}

#[test]
fn self_play_restarts_after_a_goal() {
    let mut sc = ScenarioConfig::self_play(4);
    sc.home_positions[3] = [0.85, 0.0];
    sc.ball_start = [0.85, 0.0];
    sc.away_positions = vec![[0.0, 0.4], [0.0, -0.4], [-0.2, 0.4], [-0.2, -0.4]];
    let s = reset(&sc, 2).unwrap();
    let mut home = idle(4);
    home[3] = Action::Shot;
    let r = step(&s, &home, &idle(4)).unwrap();
    assert_eq!(r.scoring_reward_home, 1);
    assert!(!r.terminated);
    // Away kicks off from the centre.
    assert_eq!(r.next_state.ball.controller, Some(PlayerRef::new(Team::Away, 3)));
    assert!(r.next_state.ball.position.norm() < 0.02);
}

#[test]
fn step_limit_terminates() {
    let mut sc = ScenarioConfig::kickoff(2);
    sc.episode_step_limit = 5;
    let mut s = reset(&sc, 0).unwrap();
    for i in 0..5 {
        let r = step(&s, &idle(2), &idle(2)).unwrap();
        assert_eq!(r.terminated, i == 4);
        s = r.next_state;
    }
    assert_eq!(s.step, 5);
}

#[test]
fn completed_pass_is_good() {
    let mut sc = ScenarioConfig::curriculum(8, 2, 1.0);
    sc.home_positions = vec![[-0.3, 0.0], [0.0, 0.0]];
    sc.ball_start = [-0.3, 0.0];
    sc.away_positions = vec![[0.9, 0.3], [0.8, -0.3]];
    let mut s = reset(&sc, 0).unwrap();
    let mut acts = vec![Action::ShortPass, Action::Idle];
    let mut events = Vec::new();
    for _ in 0..30 {
        let r = step(&s, &acts, &idle(2)).unwrap();
        events.extend(r.events);
        s = r.next_state;
        acts[0] = Action::Idle;
    }
    assert_eq!(
        events,
        vec![Event::PassAttempt {
            team: Team::Home,
            good: true
        }]
    );
    assert_eq!(s.ball.controller, Some(PlayerRef::new(Team::Home, 1)));
}

#[test]
fn intercepted_pass_is_bad() {
    let mut sc = ScenarioConfig::curriculum(8, 2, 1.0);
    sc.home_positions = vec![[-0.3, 0.0], [0.0, 0.0]];
    sc.ball_start = [-0.3, 0.0];
    sc.away_positions = vec![[0.9, 0.3], [-0.15, 0.0]];
    let mut s = reset(&sc, 0).unwrap();
    let mut acts = vec![Action::ShortPass, Action::Idle];
    let mut events = Vec::new();
    for _ in 0..20 {
        let r = step(&s, &acts, &idle(2)).unwrap();
        events.extend(r.events);
        s = r.next_state;
        acts[0] = Action::Idle;
    }
    assert_eq!(
        events,
        vec![
            Event::PassAttempt {
                team: Team::Home,
                good: false
            },
            Event::Interception { by_team: Team::Away }
        ]
    );
}

#[test]
fn reaction_rate_matches_strength() {
    let s = kickoff_state(0);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10_000;
    let fresh = (0..n)
        .filter(|_| heuristic_decide(&s, Team::Away, 2, 0.05, &mut rng).fresh)
        .count() as f64;
    // Binomial 99% interval around p = 0.05.
    let sd = (n as f64 * 0.05 * 0.95).sqrt();
    assert!((fresh - 500.0).abs() < 2.576 * sd, "fresh decisions {fresh}");
}

#[test]
fn heuristic_shoots_when_unmarked_in_the_box() {
    let s = shooting_state(0, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(heuristic_action(&s, Team::Home, 3, 1.0, &mut rng), Action::Shot);
}

#[test]
fn heuristic_chases_a_loose_ball() {
    let mut sc = ScenarioConfig::kickoff(4);
    sc.ball_start = [0.3, 0.2];
    let s = reset(&sc, 0).unwrap();
    assert!(s.ball.controller.is_none());
    // Away player closest to the ball.
    let (idx, _) = s
        .away
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.position.dist(s.ball.position)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = heuristic_action(&s, Team::Away, idx, 1.0, &mut rng);
    let Action::Move(d) = a else {
        panic!("expected a move, got {a:?}")
    };
    let to_ball = (s.ball.position - s.away[idx].position).unit();
    assert!(d.vector().dot(to_ball) > 0.9);
}

#[test]
fn replay_round_trip() {
    let s = kickoff_state(1);
    let r = step(&s, &idle(4), &idle(4)).unwrap();
    let rec = ReplayRecord::new(&r.next_state, &idle(4), &idle(4), &r.events);
    let mut buf = Vec::new();
    write_replay(&mut buf, std::slice::from_ref(&rec)).unwrap();
    assert_eq!(read_replay(&buf[..]).unwrap(), vec![rec]);
}

fn random_actions(rng: &mut ChaCha8Rng, n: usize) -> Vec<Action> {
    (0..n)
        .map(|_| Action::from_index(rng.random_range(0..Action::COUNT)).unwrap())
        .collect()
}

fn play(s0: MatchState, steps: usize, seed: u64, mirror: bool) -> Vec<(MatchState, Vec<Event>, i8)> {
    let n = s0.players_per_team();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = if mirror { s0.mirrored() } else { s0 };
    let mut out = Vec::new();
    for _ in 0..steps {
        if s.terminated {
            break;
        }
        let h = random_actions(&mut rng, n);
        let a = random_actions(&mut rng, n);
        let r = if mirror {
            let hm: Vec<_> = a.iter().map(|x| x.mirrored()).collect();
            let am: Vec<_> = h.iter().map(|x| x.mirrored()).collect();
            step(&s, &hm, &am).unwrap()
        } else {
            step(&s, &h, &a).unwrap()
        };
        s = r.next_state.clone();
        out.push((r.next_state, r.events, r.scoring_reward_home));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mirror_symmetry(seed in 0u64..1000, curriculum in 1u32..10) {
        let sc = if curriculum == 9 { ScenarioConfig::self_play(4) } else { ScenarioConfig::curriculum(curriculum, 4, 1.0) };
        let s0 = reset(&sc, seed).unwrap();
        let a = play(s0.clone(), 400, seed, false);
        let b = play(s0, 400, seed, true);
        prop_assert_eq!(a.len(), b.len());
        for ((sa, ea, ra), (sb, eb, rb)) in a.iter().zip(&b) {
            prop_assert_eq!(&sa.mirrored(), sb);
            let em: Vec<Event> = ea.iter().map(|e| e.mirrored()).collect();
            prop_assert_eq!(&em, eb);
            prop_assert_eq!(*ra, -*rb);
        }
    }

    #[test]
    fn step_invariants(seed in 0u64..1000, n in 1usize..6) {
        let s0 = reset(&ScenarioConfig::self_play(n), seed).unwrap();
        let mut s = s0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for _ in 0..300 {
            let h = random_actions(&mut rng, n);
            let a = random_actions(&mut rng, n);
            let r = step(&s, &h, &a).unwrap();
            let goals: i8 = r.events.iter().map(|e| match e {
                Event::Goal { team: Team::Home } => 1,
                Event::Goal { team: Team::Away } => -1,
                _ => 0,
            }).sum();
            prop_assert_eq!(goals, r.scoring_reward_home);
            for (i, e) in r.events.iter().enumerate() {
                if let Event::Goal { team } = e {
                    prop_assert!(i > 0);
                    prop_assert_eq!(r.events[i - 1], Event::ShotAttempt { team: *team, good: true });
                }
            }
            let ns = &r.next_state;
            prop_assert_eq!(ns.home.len(), n);
            prop_assert_eq!(ns.away.len(), n);
            prop_assert!(ns.step <= ns.rules.step_limit);
            if ns.ball.is_aerial() {
                prop_assert!(ns.ball.controller.is_none());
            }
            for p in ns.home.iter().chain(&ns.away) {
                prop_assert!((0.0..=1.0).contains(&p.tiredness));
            }
            // Determinism.
            prop_assert_eq!(&step(&s, &h, &a).unwrap().next_state, ns);
            s = r.next_state;
        }
    }
}
