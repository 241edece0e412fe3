//! Path-selection policies.
//!
//! The learning policy is an epsilon-greedy DQN agent: replay buffer,
//! online and target networks, per-episode exploration decay, and reward
//! shaping that maps round-trip delay into [0, 1]. The baseline policy
//! picks an interface uniformly at random. Both consume the same
//! normalized delay observations.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iface::Interface;
use crate::qnet::{
    td_targets, train_step, AdamState, QNet, QNetCheckpoint, QnetError, TrainBatch, ACTION_COUNT,
};
use crate::rng::{stream_rng, streams};

/// Transitions retained for experience replay.
pub const REPLAY_CAPACITY: usize = 2000;

/// Minibatch size per gradient step.
pub const BATCH_SIZE: usize = 32;

/// Discount factor for bootstrapped targets.
pub const DISCOUNT: f64 = 0.99;

/// Adam learning rate.
pub const LEARNING_RATE: f64 = 5e-4;

/// Episodes between target-network synchronizations.
pub const TARGET_SYNC_INTERVAL: u32 = 5;

/// Magic string identifying agent checkpoints.
pub const AGENT_CHECKPOINT_MAGIC: &str = "eupf-agent/1";

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Qnet(#[from] QnetError),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which policy drives an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Dqn,
    Random,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Dqn => "dqn",
            PolicyKind::Random => "random",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dqn" => Ok(PolicyKind::Dqn),
            "random" => Ok(PolicyKind::Random),
            other => Err(PolicyError::InvalidParams(format!(
                "unknown policy {other:?} (expected \"dqn\" or \"random\")"
            ))),
        }
    }
}

/// One decision outcome: normalized state seen, action taken, normalized
/// reward received, and the normalized state that followed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: f64,
    pub action: Interface,
    pub reward: f64,
    pub next_state: f64,
}

impl Transition {
    /// Validates the [0, 1] bounds on state, reward, and next state.
    pub fn new(
        state: f64,
        action: Interface,
        reward: f64,
        next_state: f64,
    ) -> Result<Self, PolicyError> {
        for (label, v) in [("state", state), ("reward", reward), ("next_state", next_state)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PolicyError::InvalidTransition(format!(
                    "{label} {v} outside [0, 1]"
                )));
            }
        }
        Ok(Transition { state, action, reward, next_state })
    }
}

/// Bounded FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

/// Column layout of a sampled minibatch, ready for target computation.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub states: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity) }
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

    /// Appends a transition, evicting the oldest once full.
    pub fn push(&mut self, transition: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
    }

    /// Uniform sample of `batch_size` distinct transitions, or None while
    /// the buffer holds fewer than that.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Option<SampledBatch> {
        if self.items.len() < batch_size {
            return None;
        }
        let picks = rand::seq::index::sample(rng, self.items.len(), batch_size);
        let mut batch = SampledBatch {
            states: Vec::with_capacity(batch_size),
            actions: Vec::with_capacity(batch_size),
            rewards: Vec::with_capacity(batch_size),
            next_states: Vec::with_capacity(batch_size),
        };
        for i in picks {
            let t = &self.items[i];
            batch.states.push(t.state);
            batch.actions.push(t.action.index());
            batch.rewards.push(t.reward);
            batch.next_states.push(t.next_state);
        }
        Some(batch)
    }

    /// Append then sample: the new transition is eligible immediately.
    pub fn push_and_sample<R: Rng>(
        &mut self,
        transition: Transition,
        batch_size: usize,
        rng: &mut R,
    ) -> Option<SampledBatch> {
        self.push(transition);
        self.sample(batch_size, rng)
    }

    /// Oldest-first view, for inspection in tests.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

/// Per-episode epsilon decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule { eps_start: 0.9, eps_end: 0.01, decay: 0.990 }
    }
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&self.eps_start)
            || !(0.0..=1.0).contains(&self.eps_end)
            || self.eps_end > self.eps_start
        {
            return Err(PolicyError::InvalidParams(format!(
                "exploration bounds must satisfy 0 <= eps_end <= eps_start <= 1, got start {} end {}",
                self.eps_start, self.eps_end
            )));
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(PolicyError::InvalidParams(format!(
                "decay must be in [0, 1], got {}",
                self.decay
            )));
        }
        Ok(())
    }

    /// `max(eps_end, eps_start * decay^episode)`.
    pub fn epsilon_at(&self, episode: u32) -> f64 {
        let decayed = self.eps_start * self.decay.powi(episode.min(i32::MAX as u32) as i32);
        decayed.max(self.eps_end)
    }
}

/// Min-max scaling between the smallest and largest observable round-trip
/// delays. Rewards reverse the order: zero delay scores 1, the ceiling
/// scores 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    pub rtt_floor_ms: f64,
    pub rtt_ceiling_ms: f64,
}

impl RewardNormalizer {
    pub fn new(rtt_floor_ms: f64, rtt_ceiling_ms: f64) -> Result<Self, PolicyError> {
        if !rtt_floor_ms.is_finite() || !rtt_ceiling_ms.is_finite() || rtt_ceiling_ms <= rtt_floor_ms
        {
            return Err(PolicyError::InvalidParams(format!(
                "need finite ceiling > floor, got floor {rtt_floor_ms} ceiling {rtt_ceiling_ms}"
            )));
        }
        Ok(RewardNormalizer { rtt_floor_ms, rtt_ceiling_ms })
    }

    fn fraction(&self, rtt_ms: f64) -> f64 {
        assert!(rtt_ms.is_finite(), "round-trip delay must be finite");
        ((rtt_ms - self.rtt_floor_ms) / (self.rtt_ceiling_ms - self.rtt_floor_ms)).clamp(0.0, 1.0)
    }

    /// Reward in [0, 1], decreasing in delay.
    pub fn reward(&self, rtt_ms: f64) -> f64 {
        1.0 - self.fraction(rtt_ms)
    }

    /// Network input in [0, 1], increasing in delay.
    pub fn state(&self, rtt_ms: f64) -> f64 {
        self.fraction(rtt_ms)
    }
}

/// Epsilon-greedy selection over the network's Q-values. Ties break toward
/// index 0. The exploration draw happens first; the uniform-action draw
/// happens only on the explore branch, so greedy steps consume exactly one
/// random number.
pub fn select_action<R: Rng>(
    net: &QNet,
    state: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<Interface, PolicyError> {
    assert!((0.0..=1.0).contains(&epsilon), "epsilon must be in [0, 1]");
    if rng.gen::<f64>() < epsilon {
        return Ok(select_action_random(rng));
    }
    let q = net.forward(state)?;
    Ok(greedy_action(q))
}

/// Argmax over the two Q-values, ties toward index 0.
pub fn greedy_action(q: [f64; ACTION_COUNT]) -> Interface {
    if q[1] > q[0] {
        Interface::N6b
    } else {
        Interface::N6a
    }
}

/// Uniform draw over the two interfaces.
pub fn select_action_random<R: Rng>(rng: &mut R) -> Interface {
    Interface::from_index(rng.gen_range(0..ACTION_COUNT))
}

/// Everything that parameterizes the learning policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqnHyperparameters {
    pub discount: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync_interval: u32,
    pub schedule: ExplorationSchedule,
}

impl Default for DqnHyperparameters {
    fn default() -> Self {
        DqnHyperparameters {
            discount: DISCOUNT,
            learning_rate: LEARNING_RATE,
            batch_size: BATCH_SIZE,
            replay_capacity: REPLAY_CAPACITY,
            target_sync_interval: TARGET_SYNC_INTERVAL,
            schedule: ExplorationSchedule::default(),
        }
    }
}

impl DqnHyperparameters {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(PolicyError::InvalidParams(format!(
                "discount must be in [0, 1], got {}",
                self.discount
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(PolicyError::InvalidParams(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(PolicyError::InvalidParams(format!(
                "batch size {} must be in 1..=replay capacity {}",
                self.batch_size, self.replay_capacity
            )));
        }
        if self.target_sync_interval == 0 {
            return Err(PolicyError::InvalidParams(
                "target sync interval must be positive".into(),
            ));
        }
        self.schedule.validate()
    }
}

/// The learning policy: online and target networks, replay buffer, and the
/// exploration state. All randomness flows through two named streams, one
/// for exploration draws and one for replay sampling, both derived from the
/// experiment's root seed.
#[derive(Debug)]
pub struct DqnAgent {
    hyper: DqnHyperparameters,
    normalizer: RewardNormalizer,
    online: QNet,
    target: QNet,
    adam: AdamState,
    buffer: ReplayBuffer,
    episode: u32,
    exploration_rng: ChaCha12Rng,
    replay_rng: ChaCha12Rng,
}

impl DqnAgent {
    /// Fresh agent at episode 0. Network initialization, exploration, and
    /// replay sampling each draw from their own stream of `root_seed`.
    pub fn new(
        root_seed: u64,
        hyper: DqnHyperparameters,
        normalizer: RewardNormalizer,
    ) -> Result<Self, PolicyError> {
        hyper.validate()?;
        let mut init_rng = stream_rng(root_seed, streams::INIT);
        let online = QNet::init_default(&mut init_rng);
        let target = online.clone();
        let adam = AdamState::new(&online, hyper.learning_rate);
        let buffer = ReplayBuffer::new(hyper.replay_capacity);
        Ok(DqnAgent {
            hyper,
            normalizer,
            online,
            target,
            adam,
            buffer,
            episode: 0,
            exploration_rng: stream_rng(root_seed, streams::EXPLORATION),
            replay_rng: stream_rng(root_seed, streams::REPLAY),
        })
    }

    pub fn hyperparameters(&self) -> &DqnHyperparameters {
        &self.hyper
    }

    pub fn normalizer(&self) -> &RewardNormalizer {
        &self.normalizer
    }

    pub fn episode(&self) -> u32 {
        self.episode
    }

    pub fn epsilon(&self) -> f64 {
        self.hyper.schedule.epsilon_at(self.episode)
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn online(&self) -> &QNet {
        &self.online
    }

    pub fn target_param_hash(&self) -> u64 {
        self.target.param_hash()
    }

    /// Marks the start of episode `episode`. On multiples of the sync
    /// interval (after the first episode) the target network is replaced
    /// with a copy of the online network; between those boundaries it is
    /// never touched. Returns whether a sync happened.
    pub fn begin_episode(&mut self, episode: u32) -> bool {
        self.episode = episode;
        if episode > 0 && episode % self.hyper.target_sync_interval == 0 {
            self.target = self.online.clone();
            true
        } else {
            false
        }
    }

    /// Epsilon-greedy action for the current episode's epsilon.
    pub fn act(&mut self, state: f64) -> Result<Interface, PolicyError> {
        select_action(&self.online, state, self.epsilon(), &mut self.exploration_rng)
    }

    /// Records the transition and, once the buffer can fill a minibatch,
    /// performs one gradient step against the target network. Returns the
    /// pre-update loss when a step ran.
    pub fn record_and_train(&mut self, transition: Transition) -> Result<Option<f64>, PolicyError> {
        let Some(batch) =
            self.buffer.push_and_sample(transition, self.hyper.batch_size, &mut self.replay_rng)
        else {
            return Ok(None);
        };
        let targets =
            td_targets(&batch.rewards, &batch.next_states, &self.target, self.hyper.discount)?;
        let train = TrainBatch::new(batch.states, batch.actions, targets)?;
        let loss = train_step(&mut self.online, &mut self.adam, &train)?;
        Ok(Some(loss))
    }

    pub fn to_checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            magic: AGENT_CHECKPOINT_MAGIC.to_string(),
            episode: self.episode,
            online: self.online.to_checkpoint(),
            target: self.target.to_checkpoint(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint())
            .map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    /// Restores networks and episode index from a checkpoint. Optimizer
    /// moments and buffer contents are not persisted: a restored agent
    /// resumes with fresh Adam state and an empty buffer.
    pub fn load(
        path: &Path,
        root_seed: u64,
        hyper: DqnHyperparameters,
        normalizer: RewardNormalizer,
    ) -> Result<Self, PolicyError> {
        let text = fs::read_to_string(path)?;
        let checkpoint: AgentCheckpoint =
            serde_json::from_str(&text).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        if checkpoint.magic != AGENT_CHECKPOINT_MAGIC {
            return Err(PolicyError::Checkpoint(format!(
                "magic {:?} is not {AGENT_CHECKPOINT_MAGIC:?}",
                checkpoint.magic
            )));
        }
        let mut agent = DqnAgent::new(root_seed, hyper, normalizer)?;
        agent.online = QNet::from_checkpoint(&checkpoint.online)?;
        agent.target = QNet::from_checkpoint(&checkpoint.target)?;
        agent.adam = AdamState::new(&agent.online, agent.hyper.learning_rate);
        agent.episode = checkpoint.episode;
        Ok(agent)
    }
}

/// On-disk agent dump: both networks plus the episode index.
#[derive(Debug, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub magic: String,
    pub episode: u32,
    pub online: QNetCheckpoint,
    pub target: QNetCheckpoint,
}
