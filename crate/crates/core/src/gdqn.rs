//! Grasp-orientation Q-learning: action tables, epsilon-greedy selection,
//! replay memory, target-network Q-learning and the episode loop.

use alloc::collections::VecDeque;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{huber, HuberParams, Network, NnError, OptimizerState, Tensor, GDQN_INPUT};
use crate::sim::{EnvError, GraspEnvironment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("unsupported action count {0}; supply an explicit angle table")]
    UnsupportedActionCount(usize),
    #[error("empty Q-value vector")]
    EmptyQValues,
    #[error("invalid transition: {0}")]
    InvalidTransition(&'static str),
    #[error("replay memory holds {size} transitions, minibatch needs {needed}")]
    ReplayUnderfull { size: usize, needed: usize },
    #[error("invalid agent config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("episode {episode}: {source}")]
    Env { episode: usize, source: EnvError },
}

/// Gripper angles, degrees, for the supported action counts: 0/45/90 for
/// three actions, 15° steps for 12, 7.5° steps for 24.
pub fn action_angles(n_actions: usize) -> Result<Vec<f64>, AgentError> {
    match n_actions {
        3 => Ok(vec![0.0, 45.0, 90.0]),
        12 => Ok((0..12).map(|a| a as f64 * 15.0).collect()),
        24 => Ok((0..24).map(|a| a as f64 * 7.5).collect()),
        n => Err(AgentError::UnsupportedActionCount(n)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<Tensor>,
    pub action: usize,
    pub reward: u8,
    pub next_state: Arc<Tensor>,
    pub done: bool,
}

impl Transition {
    pub fn new(
        state: Arc<Tensor>,
        action: usize,
        reward: u8,
        next_state: Arc<Tensor>,
        done: bool,
        n_actions: usize,
    ) -> Result<Self, AgentError> {
        if reward > 1 {
            return Err(AgentError::InvalidTransition("reward must be 0 or 1"));
        }
        if action >= n_actions {
            return Err(AgentError::InvalidTransition("action out of range"));
        }
        if state.shape() != GDQN_INPUT || next_state.shape() != GDQN_INPUT {
            return Err(AgentError::InvalidTransition("states must be 84x84x1"));
        }
        Ok(Self {
            state,
            action,
            reward,
            next_state,
            done,
        })
    }
}

/// Fixed-capacity FIFO of transitions; appending when full evicts the oldest.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T = Transition> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayMemory<T> {
    pub const DEFAULT_CAPACITY: usize = 1000;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..k)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub n_actions: usize,
    pub gamma: f64,
    pub epsilon_final: f64,
    pub n_episodes: usize,
    /// Episode from which `deep_q_learn` runs (TOC).
    pub training_onset: usize,
    /// Online → target copy interval in episodes (TMC).
    pub target_sync: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub huber_delta: f64,
    pub rms_rho: f64,
    pub rms_epsilon: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            n_actions: 3,
            gamma: 0.99,
            epsilon_final: 0.1,
            n_episodes: 1000,
            training_onset: 50,
            target_sync: 25,
            minibatch: 8,
            learning_rate: 0.00025,
            replay_capacity: ReplayMemory::<Transition>::DEFAULT_CAPACITY,
            huber_delta: 1.0,
            rms_rho: OptimizerState::DEFAULT_RHO,
            rms_epsilon: OptimizerState::DEFAULT_EPSILON,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        action_angles(self.n_actions)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::InvalidConfig("gamma must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_final) {
            return Err(AgentError::InvalidConfig(
                "epsilon_final must lie in [0, 1]",
            ));
        }
        if self.training_onset > self.n_episodes {
            return Err(AgentError::InvalidConfig(
                "training_onset exceeds n_episodes",
            ));
        }
        if self.target_sync < 1 {
            return Err(AgentError::InvalidConfig("target_sync must be >= 1"));
        }
        if self.minibatch < 1 || self.minibatch > self.replay_capacity {
            return Err(AgentError::InvalidConfig(
                "minibatch must lie in [1, replay_capacity]",
            ));
        }
        if HuberParams::new(self.huber_delta).is_none() {
            return Err(AgentError::InvalidConfig("huber_delta must be positive"));
        }
        OptimizerState::new(self.learning_rate, self.rms_rho, self.rms_epsilon)?;
        Ok(())
    }
}

/// Linear anneal from 1.0 to `epsilon_final` over `n_episodes`.
pub fn epsilon_at(episode: usize, cfg: &AgentConfig) -> f64 {
    if cfg.n_episodes == 0 {
        return cfg.epsilon_final;
    }
    let decay = (1.0 - cfg.epsilon_final) / cfg.n_episodes as f64;
    (1.0 - episode as f64 * decay).max(cfg.epsilon_final)
}

/// Index of the largest Q-value, lowest index on ties.
pub fn greedy_action(q_values: &[f64]) -> Result<usize, AgentError> {
    let mut best = *q_values.first().ok_or(AgentError::EmptyQValues)?;
    let mut idx = 0;
    for (i, q) in q_values.iter().enumerate().skip(1) {
        if *q > best {
            best = *q;
            idx = i;
        }
    }
    Ok(idx)
}

/// Epsilon-greedy: uniform random with probability `epsilon`, else greedy.
pub fn select_action<R: Rng + ?Sized>(
    q_values: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, AgentError> {
    let greedy = greedy_action(q_values)?;
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..q_values.len()))
    } else {
        Ok(greedy)
    }
}

/// `y = r` for terminal transitions, else `r + γ·max_a Q_target(s', a)`.
pub fn q_targets(
    batch: &[&Transition],
    target: &Network,
    gamma: f64,
) -> Result<Vec<f64>, AgentError> {
    batch
        .iter()
        .map(|t| {
            let r = t.reward as f64;
            if t.done {
                Ok(r)
            } else {
                let q = target.forward(&t.next_state)?;
                let max = q.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(r + gamma * max)
            }
        })
        .collect()
}

/// Mean Huber loss of `Q(s_i, a_i)` against `targets`, with gradients
/// accumulated into `grads` (scaled by 1/batch). Only the taken action's
/// output receives gradient.
pub fn minibatch_loss(
    online: &mut Network,
    batch: &[&Transition],
    targets: &[f64],
    huber_params: HuberParams,
    grads: &mut crate::nn::Gradients,
) -> Result<f64, AgentError> {
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut out_grad = vec![0.0; online.output_len()];
    for (t, y) in batch.iter().zip(targets) {
        let q = online.forward_recorded(&t.state)?;
        let (loss, dq) = huber(q.data()[t.action], *y, huber_params);
        total += loss;
        out_grad.iter_mut().for_each(|g| *g = 0.0);
        out_grad[t.action] = dq * scale;
        online.backward_accumulate(&out_grad, grads)?;
    }
    Ok(total * scale)
}

/// Online and target networks, optimizer, replay memory and the
/// agent-side random stream.
#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    angles: Vec<f64>,
    online: Network,
    target: Network,
    optimizer: OptimizerState,
    replay: ReplayMemory,
    rng: ChaCha8Rng,
    huber: HuberParams,
}

impl Agent {
    pub fn new(cfg: AgentConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        let online = Network::gdqn(cfg.n_actions, cfg.seed)?;
        Self::with_network(cfg, online)
    }

    pub fn with_network(cfg: AgentConfig, online: Network) -> Result<Self, AgentError> {
        cfg.validate()?;
        if online.output_len() != cfg.n_actions {
            return Err(AgentError::InvalidConfig(
                "network output width must equal n_actions",
            ));
        }
        let angles = action_angles(cfg.n_actions)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            angles,
            target: online.clone(),
            online,
            optimizer: OptimizerState::new(cfg.learning_rate, cfg.rms_rho, cfg.rms_epsilon)?,
            replay: ReplayMemory::new(cfg.replay_capacity),
            huber: HuberParams::new(cfg.huber_delta).expect("validated"),
            rng,
            cfg,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn online(&self) -> &Network {
        &self.online
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn replay(&self) -> &ReplayMemory {
        &self.replay
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn into_network(self) -> Network {
        self.online
    }

    pub fn remember(&mut self, t: Transition) {
        self.replay.push(t);
    }

    pub fn sync_target(&mut self) {
        self.target
            .copy_parameters_from(&self.online)
            .expect("online and target share an architecture");
    }

    pub fn q_values(&self, state: &Tensor) -> Result<Vec<f64>, AgentError> {
        Ok(self.online.forward(state)?.into_vec())
    }

    /// One optimizer step on a uniformly sampled minibatch; returns the mean loss.
    pub fn deep_q_learn(&mut self) -> Result<f64, AgentError> {
        if self.replay.len() < self.cfg.minibatch {
            return Err(AgentError::ReplayUnderfull {
                size: self.replay.len(),
                needed: self.cfg.minibatch,
            });
        }
        let batch: Vec<Transition> = self
            .replay
            .sample(&mut self.rng, self.cfg.minibatch)
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = q_targets(&refs, &self.target, self.cfg.gamma)?;
        let mut grads = crate::nn::Gradients::zeros_like(&self.online);
        let loss = minibatch_loss(&mut self.online, &refs, &targets, self.huber, &mut grads)?;
        self.optimizer.apply(&mut self.online, &grads)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub action: usize,
    pub reward: u8,
    pub epsilon: f64,
    /// Running sum of rewards up to and including this episode.
    pub score: u64,
    /// Mean minibatch loss when a learning step ran this episode.
    pub loss: Option<f64>,
    pub greedy_action: usize,
    pub optimal_action: usize,
}

impl EpisodeRecord {
    /// Whether the greedy choice for this episode's state was the rewarded one.
    pub fn greedy_success(&self) -> bool {
        self.greedy_action == self.optimal_action
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub log: Vec<EpisodeRecord>,
}

/// Runs `cfg.n_episodes` single-step grasp cycles against `env`.
pub fn train<E: GraspEnvironment + ?Sized>(
    env: &mut E,
    cfg: &AgentConfig,
) -> Result<TrainOutcome, AgentError> {
    let agent = Agent::new(cfg.clone())?;
    train_agent(env, agent)
}

pub fn train_agent<E: GraspEnvironment + ?Sized>(
    env: &mut E,
    agent: Agent,
) -> Result<TrainOutcome, AgentError> {
    train_while(env, agent, |_| true)
}

/// Like [`train_agent`], but stops after any episode for which `keep_going`
/// returns false. The epsilon schedule still follows `n_episodes`.
pub fn train_while<E, F>(
    env: &mut E,
    mut agent: Agent,
    mut keep_going: F,
) -> Result<TrainOutcome, AgentError>
where
    E: GraspEnvironment + ?Sized,
    F: FnMut(&[EpisodeRecord]) -> bool,
{
    let cfg = agent.cfg.clone();
    let mut log = Vec::with_capacity(cfg.n_episodes);
    if cfg.n_episodes == 0 {
        return Ok(TrainOutcome {
            network: agent.into_network(),
            log,
        });
    }
    let mut state = Arc::new(env.reset());
    let mut score = 0u64;
    for episode in 0..cfg.n_episodes {
        let epsilon = epsilon_at(episode, &cfg);
        let q = agent.q_values(&state)?;
        let greedy = greedy_action(&q)?;
        let action = select_action(&q, epsilon, &mut agent.rng)?;
        let result = env
            .step(agent.angles[action])
            .map_err(|source| AgentError::Env { episode, source })?;
        let next = Arc::new(result.next_state);
        agent.remember(Transition::new(
            state,
            action,
            result.reward,
            next.clone(),
            result.done,
            cfg.n_actions,
        )?);
        let loss = if episode >= cfg.training_onset && agent.replay.len() >= cfg.minibatch {
            Some(agent.deep_q_learn()?)
        } else {
            None
        };
        if episode % cfg.target_sync == 0 {
            agent.sync_target();
        }
        state = next;
        score += result.reward as u64;
        log.push(EpisodeRecord {
            episode,
            action,
            reward: result.reward,
            epsilon,
            score,
            loss,
            greedy_action: greedy,
            optimal_action: result.optimal_action,
        });
        if !keep_going(&log) {
            break;
        }
    }
    Ok(TrainOutcome {
        network: agent.into_network(),
        log,
    })
}

/// Greedy (ε = 0) grasp attempts with a fixed network; one reward per attempt.
pub fn evaluate_greedy<E: GraspEnvironment + ?Sized>(
    env: &mut E,
    net: &Network,
    angles: &[f64],
    attempts: usize,
) -> Result<Vec<u8>, AgentError> {
    let mut rewards = Vec::with_capacity(attempts);
    if attempts == 0 {
        return Ok(rewards);
    }
    let mut state = env.reset();
    for episode in 0..attempts {
        let q = net.forward(&state)?;
        let a = greedy_action(q.data())?;
        let angle = *angles.get(a).ok_or(AgentError::InvalidConfig(
            "angle table shorter than network output",
        ))?;
        let r = env
            .step(angle)
            .map_err(|source| AgentError::Env { episode, source })?;
        rewards.push(r.reward);
        state = r.next_state;
    }
    Ok(rewards)
}
