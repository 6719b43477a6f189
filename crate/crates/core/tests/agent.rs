use std::sync::Arc;

use graspolab_core::gdqn::{
    greedy_action, q_targets, train, Agent, AgentConfig, ReplayMemory, Transition,
};
use graspolab_core::nn::{gdqn_specs, Network, Tensor, GDQN_INPUT};
use graspolab_core::sim::{EnvConfig, SimEnv};
use graspolab_core::{epsilon_at, select_action};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(fill: f64) -> Arc<Tensor> {
    Arc::new(Tensor::new(GDQN_INPUT.to_vec(), vec![fill; 84 * 84]).unwrap())
}

/// Zero weights with output biases `q`: Q is `q` for every state.
fn constant_q(q: &[f64]) -> Network {
    let mut net = Network::zeroed(GDQN_INPUT, &gdqn_specs(q.len())).unwrap();
    net.layer_weights_mut(3).1.copy_from_slice(q);
    net
}

fn flat(net: &Network) -> Vec<f64> {
    net.parameters().flat_map(|s| s.iter().copied()).collect()
}

#[test]
fn uniform_exploration_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[select_action(&[0.3, 2.0, -1.0], 1.0, &mut rng).unwrap()] += 1;
    }
    let p = 1.0 / 3.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn target_examples() {
    let s = state(0.2);
    let target = constant_q(&[0.5, 0.2, 0.1]);
    let live = Transition::new(s.clone(), 0, 0, s.clone(), false, 3).unwrap();
    assert!((q_targets(&[&live], &target, 0.99).unwrap()[0] - 0.495).abs() < 1e-12);
    let win = Transition::new(s.clone(), 1, 1, s.clone(), true, 3).unwrap();
    let lose = Transition::new(s.clone(), 1, 0, s, true, 3).unwrap();
    for (gamma, net) in [(0.99, &target), (0.0, &constant_q(&[9.0, -3.0, 4.0]))] {
        assert_eq!(
            q_targets(&[&win, &lose], net, gamma).unwrap(),
            vec![1.0, 0.0]
        );
    }
}

#[test]
fn zero_loss_batch_leaves_parameters() {
    let cfg = AgentConfig::default();
    let mut agent = Agent::with_network(cfg, constant_q(&[0.0, 0.0, 0.0])).unwrap();
    for i in 0..8 {
        agent.remember(
            Transition::new(state(i as f64 / 8.0), i % 3, 0, state(0.1), true, 3).unwrap(),
        );
    }
    let before = flat(agent.online());
    assert_eq!(agent.deep_q_learn().unwrap(), 0.0);
    assert_eq!(flat(agent.online()), before);
}

#[test]
fn single_transition_contracts_toward_target() {
    // At the default rate, sign-like RMSProp steps over every weight overshoot
    // a lone repeated sample and settle into a limit cycle.
    let cfg = AgentConfig {
        minibatch: 1,
        learning_rate: 1e-5,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(cfg).unwrap();
    let s = state(0.6);
    agent.remember(Transition::new(s.clone(), 1, 0, state(0.0), true, 3).unwrap());
    let gap = |a: &Agent| a.q_values(&s).unwrap()[1].abs();
    let mut gaps = vec![gap(&agent)];
    for _ in 0..120 {
        agent.deep_q_learn().unwrap();
        gaps.push(gap(&agent));
    }
    assert!(gaps[120] < 1e-6 * gaps[0], "{} -> {}", gaps[0], gaps[120]);
    assert!(
        gaps[3..].windows(2).all(|w| w[1] <= w[0] + 1e-12),
        "{gaps:?}"
    );
}

#[test]
fn learning_touches_online_only() {
    let mut agent = Agent::new(AgentConfig::default()).unwrap();
    for i in 0..8 {
        agent.remember(
            Transition::new(
                state(i as f64 / 8.0),
                i % 3,
                (i % 2) as u8,
                state(0.0),
                true,
                3,
            )
            .unwrap(),
        );
    }
    let target_before = flat(agent.target());
    let online_before = flat(agent.online());
    agent.deep_q_learn().unwrap();
    assert_eq!(flat(agent.target()), target_before);
    assert_ne!(flat(agent.online()), online_before);
    agent.sync_target();
    assert_eq!(flat(agent.target()), flat(agent.online()));
}

fn quick_config(episodes: usize, seed: u64) -> AgentConfig {
    AgentConfig {
        n_episodes: episodes,
        training_onset: 10,
        target_sync: 5,
        seed,
        ..AgentConfig::default()
    }
}

#[test]
fn zero_episodes_gives_untrained_network() {
    let mut env = SimEnv::new(EnvConfig::for_actions(3, 0).unwrap()).unwrap();
    let cfg = quick_config(0, 4);
    let out = train(
        &mut env,
        &AgentConfig {
            training_onset: 0,
            ..cfg
        },
    )
    .unwrap();
    assert!(out.log.is_empty());
    assert_eq!(flat(&out.network), flat(&Network::gdqn(3, 4).unwrap()));
}

#[test]
fn training_is_reproducible_and_scores_accumulate() {
    let run = || {
        let mut env = SimEnv::new(EnvConfig::for_actions(12, 6).unwrap()).unwrap();
        train(&mut env, &quick_config(40, 6)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(flat(&a.network), flat(&b.network));
    let mut score = 0;
    for (i, r) in a.log.iter().enumerate() {
        score += r.reward as u64;
        assert_eq!((r.episode, r.score), (i, score));
        assert_eq!(r.loss.is_some(), i >= 10);
        assert!(r.action < 12 && r.optimal_action < 12);
    }
}

proptest! {
    #[test]
    fn replay_keeps_the_newest(capacity in 1usize..64, appends in 0usize..200) {
        let mut m = ReplayMemory::new(capacity);
        for i in 0..appends {
            m.push(i);
            prop_assert!(m.len() <= capacity);
        }
        let kept: Vec<usize> = m.iter().copied().collect();
        let expected: Vec<usize> = (appends.saturating_sub(capacity)..appends).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn epsilon_is_monotone_and_bounded(n in 1usize..5000, eps_f in 0.0f64..1.0) {
        let cfg = AgentConfig { n_episodes: n, epsilon_final: eps_f, ..AgentConfig::default() };
        prop_assert_eq!(epsilon_at(0, &cfg), 1.0);
        prop_assert!((epsilon_at(n, &cfg) - eps_f).abs() <= 1e-9);
        let mut prev = f64::INFINITY;
        for e in (0..=n).step_by((n / 50).max(1)) {
            let v = epsilon_at(e, &cfg);
            prop_assert!(v <= prev && v >= eps_f && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn greedy_choice_survives_positive_scaling(
        q in proptest::collection::vec(-10.0f64..10.0, 1..25),
        scale in 1e-3f64..1e3,
    ) {
        let scaled: Vec<f64> = q.iter().map(|v| v * scale).collect();
        prop_assert_eq!(greedy_action(&q).unwrap(), greedy_action(&scaled).unwrap());
    }

    #[test]
    fn greedy_is_a_pure_function_of_the_state(fill in 0.0f64..1.0, seed in 0u64..4) {
        let net = Network::gdqn(12, seed).unwrap();
        let s = state(fill);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = net.forward(&s).unwrap();
        let a = select_action(q.data(), 0.0, &mut rng).unwrap();
        let b = select_action(net.forward(&s).unwrap().data(), 0.0, &mut rng).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a, greedy_action(q.data()).unwrap());
    }
}
