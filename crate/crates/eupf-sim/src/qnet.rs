//! Minimal dense Q-network.
//!
//! A small fully connected network mapping a scalar state to one Q-value per
//! action, with ReLU hidden layers and an identity output. Forward pass,
//! backpropagation, and Adam are written out directly; everything is f64.
//! The production architecture is two hidden layers of 64 units; narrower
//! shapes with the same scalar-in / two-out contract are supported for
//! reduced test networks.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of discrete actions (one Q-value per N6 interface).
pub const ACTION_COUNT: usize = 2;

/// Production layer sizes: scalar state in, two Q-values out.
pub const DEFAULT_SHAPE: [usize; 4] = [1, 64, 64, 2];

/// Magic string identifying network checkpoints.
pub const QNET_CHECKPOINT_MAGIC: &str = "eupf-qnet/1";

#[derive(Debug, Error)]
pub enum QnetError {
    #[error("non-finite input: {0}")]
    NonFiniteInput(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged: non-finite loss or gradient")]
    TrainingDivergence,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// Row-major `[fan_out x fan_in]`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    fan_in: usize,
    fan_out: usize,
}

impl Layer {
    fn zeroed(fan_in: usize, fan_out: usize) -> Self {
        Layer { weights: vec![0.0; fan_in * fan_out], biases: vec![0.0; fan_out], fan_in, fan_out }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.fan_out {
            let w = &self.weights[row * self.fan_in..(row + 1) * self.fan_in];
            let mut acc = self.biases[row];
            for (wi, xi) in w.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Q-function approximator: weights and biases of the dense stack.
#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl QNet {
    /// Initializes a network of the given layer sizes with weights uniform
    /// in `±1/sqrt(fan_in)` and zero biases. The first size must be 1 (a
    /// scalar state) and the last [`ACTION_COUNT`].
    pub fn init<R: Rng>(shape: &[usize], rng: &mut R) -> Result<Self, QnetError> {
        Self::check_shape(shape)?;
        let mut layers = Vec::with_capacity(shape.len() - 1);
        for pair in shape.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut layer = Layer::zeroed(fan_in, fan_out);
            for w in layer.weights.iter_mut() {
                *w = rng.gen_range(-bound..=bound);
            }
            layers.push(layer);
        }
        Ok(QNet { shape: shape.to_vec(), layers })
    }

    /// The production 1-64-64-2 network.
    pub fn init_default<R: Rng>(rng: &mut R) -> Self {
        Self::init(&DEFAULT_SHAPE, rng).expect("default shape is valid")
    }

    fn check_shape(shape: &[usize]) -> Result<(), QnetError> {
        if shape.len() < 2 {
            return Err(QnetError::ShapeMismatch(format!(
                "need at least input and output sizes, got {shape:?}"
            )));
        }
        if shape[0] != 1 {
            return Err(QnetError::ShapeMismatch(format!(
                "input dimension must be 1, got {}",
                shape[0]
            )));
        }
        if *shape.last().unwrap() != ACTION_COUNT {
            return Err(QnetError::ShapeMismatch(format!(
                "output dimension must be {ACTION_COUNT}, got {}",
                shape.last().unwrap()
            )));
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(QnetError::ShapeMismatch(format!("zero-width layer in {shape:?}")));
        }
        Ok(())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Q-values for both actions at the given state. Pure; rejects
    /// non-finite inputs before any arithmetic.
    pub fn forward(&self, state: f64) -> Result<[f64; ACTION_COUNT], QnetError> {
        if !state.is_finite() {
            return Err(QnetError::NonFiniteInput(state));
        }
        let mut current = vec![state];
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&current, &mut next);
            if i < last {
                for v in next.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok([current[0], current[1]])
    }

    /// Forward pass keeping pre-activations per layer, for backprop.
    /// `pre[i]` is the affine output of layer i before ReLU.
    fn forward_trace(&self, state: f64) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = vec![state];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&current, &mut z);
            pre.push(z.clone());
            if i < last {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            current = z;
        }
        pre
    }

    /// All parameters as one flat vector, layer by layer, weights then
    /// biases within each layer.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        flat
    }

    /// Overwrites all parameters from a flat vector laid out as produced by
    /// [`QNet::flatten_params`].
    pub fn apply_params(&mut self, flat: &[f64]) -> Result<(), QnetError> {
        if flat.len() != self.param_count() {
            return Err(QnetError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w_len = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + w_len]);
            offset += w_len;
            let b_len = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(())
    }

    /// FNV-1a over the bit patterns of every parameter. Equal hashes across
    /// calls certify the network was not mutated.
    pub fn param_hash(&self) -> u64 {
        const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut hash = FNV_OFFSET;
        for layer in &self.layers {
            for v in layer.weights.iter().chain(layer.biases.iter()) {
                for byte in v.to_bits().to_le_bytes() {
                    hash ^= u64::from(byte);
                    hash = hash.wrapping_mul(FNV_PRIME);
                }
            }
        }
        hash
    }

    /// Mean squared TD error over the batch and its gradient with respect
    /// to every parameter (flat, [`QNet::flatten_params`] layout).
    /// Gradients flow only through the Q-value of each sample's chosen
    /// action.
    pub fn loss_and_gradient(&self, batch: &TrainBatch) -> Result<(f64, Vec<f64>), QnetError> {
        let batch_len = batch.len() as f64;
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer::zeroed(l.fan_in, l.fan_out))
            .collect();
        let mut loss = 0.0;

        for j in 0..batch.len() {
            let state = batch.states[j];
            let action = batch.actions[j];
            let target = batch.targets[j];

            let pre = self.forward_trace(state);
            let q = pre.last().unwrap()[action];
            let err = q - target;
            loss += err * err / batch_len;

            // Output delta: d(mean sq err)/dq, nonzero only on the chosen
            // action.
            let last = self.layers.len() - 1;
            let mut delta = vec![0.0; self.layers[last].fan_out];
            delta[action] = 2.0 * err / batch_len;

            for l in (0..self.layers.len()).rev() {
                let input: Vec<f64> = if l == 0 {
                    vec![state]
                } else {
                    pre[l - 1].iter().map(|z| z.max(0.0)).collect()
                };
                let grad = &mut grads[l];
                for row in 0..self.layers[l].fan_out {
                    let d = delta[row];
                    if d != 0.0 {
                        let w_row = &mut grad.weights
                            [row * self.layers[l].fan_in..(row + 1) * self.layers[l].fan_in];
                        for (g, x) in w_row.iter_mut().zip(&input) {
                            *g += d * x;
                        }
                        grad.biases[row] += d;
                    }
                }
                if l > 0 {
                    let layer = &self.layers[l];
                    let mut prev = vec![0.0; layer.fan_in];
                    for row in 0..layer.fan_out {
                        let d = delta[row];
                        if d != 0.0 {
                            let w_row = &layer.weights[row * layer.fan_in..(row + 1) * layer.fan_in];
                            for (p, w) in prev.iter_mut().zip(w_row) {
                                *p += d * w;
                            }
                        }
                    }
                    // ReLU gate of the upstream layer.
                    for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }

        let mut flat = Vec::with_capacity(self.param_count());
        for g in &grads {
            flat.extend_from_slice(&g.weights);
            flat.extend_from_slice(&g.biases);
        }
        if !loss.is_finite() || flat.iter().any(|g| !g.is_finite()) {
            return Err(QnetError::TrainingDivergence);
        }
        Ok((loss, flat))
    }
}

/// One minibatch of TD-learning inputs: states, chosen action indices, and
/// regression targets, all equal length.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub states: Vec<f64>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
}

impl TrainBatch {
    pub fn new(states: Vec<f64>, actions: Vec<usize>, targets: Vec<f64>) -> Result<Self, QnetError> {
        if states.is_empty() || states.len() != actions.len() || states.len() != targets.len() {
            return Err(QnetError::ShapeMismatch(format!(
                "batch lengths must be equal and >= 1: states {}, actions {}, targets {}",
                states.len(),
                actions.len(),
                targets.len()
            )));
        }
        if let Some(&bad) = states.iter().chain(targets.iter()).find(|v| !v.is_finite()) {
            return Err(QnetError::NonFiniteInput(bad));
        }
        if let Some(bad) = actions.iter().find(|&&a| a >= ACTION_COUNT) {
            return Err(QnetError::ShapeMismatch(format!("action index {bad} out of range")));
        }
        Ok(TrainBatch { states, actions, targets })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// TD regression targets: `r + gamma * max_a Q(next_state, a)` under the
/// target network. Every transition is bootstrapped (fixed-horizon episodes
/// have no absorbing state).
pub fn td_targets(
    rewards: &[f64],
    next_states: &[f64],
    target_net: &QNet,
    gamma: f64,
) -> Result<Vec<f64>, QnetError> {
    if rewards.len() != next_states.len() {
        return Err(QnetError::ShapeMismatch(format!(
            "rewards ({}) and next_states ({}) differ in length",
            rewards.len(),
            next_states.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(QnetError::ShapeMismatch(format!("gamma must be in [0, 1], got {gamma}")));
    }
    rewards
        .iter()
        .zip(next_states)
        .map(|(&r, &s_next)| {
            let q = target_net.forward(s_next)?;
            Ok(r + gamma * q[0].max(q[1]))
        })
        .collect()
}

/// Adam optimizer state: per-parameter moments plus step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_stability: f64,
}

impl AdamState {
    /// Moments zeroed, defaults beta1 0.9 / beta2 0.999 / epsilon 1e-8.
    pub fn new(net: &QNet, learning_rate: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; net.param_count()],
            second_moment: vec![0.0; net.param_count()],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_stability: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update of `net` along `grad`.
    pub fn apply(&mut self, net: &mut QNet, grad: &[f64]) -> Result<(), QnetError> {
        if grad.len() != self.first_moment.len() {
            return Err(QnetError::ShapeMismatch(format!(
                "gradient length {} does not match parameter count {}",
                grad.len(),
                self.first_moment.len()
            )));
        }
        self.step_count += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step_count as i32);
        let mut params = net.flatten_params();
        for i in 0..params.len() {
            let g = grad[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] =
                self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bias1;
            let v_hat = self.second_moment[i] / bias2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon_stability);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(QnetError::TrainingDivergence);
        }
        net.apply_params(&params)
    }
}

/// One gradient step on the mean squared TD error over `batch`. Returns the
/// pre-update loss.
pub fn train_step(net: &mut QNet, adam: &mut AdamState, batch: &TrainBatch) -> Result<f64, QnetError> {
    let (loss, grad) = net.loss_and_gradient(batch)?;
    adam.apply(net, &grad)?;
    Ok(loss)
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDump {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// On-disk network dump: magic string, layer sizes, row-major parameters.
#[derive(Debug, Serialize, Deserialize)]
pub struct QNetCheckpoint {
    pub magic: String,
    pub shape: Vec<usize>,
    layers: Vec<LayerDump>,
}

impl QNet {
    pub fn to_checkpoint(&self) -> QNetCheckpoint {
        QNetCheckpoint {
            magic: QNET_CHECKPOINT_MAGIC.to_string(),
            shape: self.shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDump { weights: l.weights.clone(), biases: l.biases.clone() })
                .collect(),
        }
    }

    pub fn from_checkpoint(checkpoint: &QNetCheckpoint) -> Result<Self, QnetError> {
        if checkpoint.magic != QNET_CHECKPOINT_MAGIC {
            return Err(QnetError::Checkpoint(format!(
                "magic {:?} is not {QNET_CHECKPOINT_MAGIC:?}",
                checkpoint.magic
            )));
        }
        Self::check_shape(&checkpoint.shape)?;
        if checkpoint.layers.len() != checkpoint.shape.len() - 1 {
            return Err(QnetError::Checkpoint(format!(
                "{} layer dumps for {} layer sizes",
                checkpoint.layers.len(),
                checkpoint.shape.len()
            )));
        }
        let mut layers = Vec::with_capacity(checkpoint.layers.len());
        for (i, pair) in checkpoint.shape.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let dump = &checkpoint.layers[i];
            if dump.weights.len() != fan_in * fan_out || dump.biases.len() != fan_out {
                return Err(QnetError::Checkpoint(format!(
                    "layer {i} has {} weights / {} biases, expected {} / {}",
                    dump.weights.len(),
                    dump.biases.len(),
                    fan_in * fan_out,
                    fan_out
                )));
            }
            if dump.weights.iter().chain(dump.biases.iter()).any(|v| !v.is_finite()) {
                return Err(QnetError::Checkpoint(format!("layer {i} holds non-finite values")));
            }
            layers.push(Layer {
                weights: dump.weights.clone(),
                biases: dump.biases.clone(),
                fan_in,
                fan_out,
            });
        }
        Ok(QNet { shape: checkpoint.shape.clone(), layers })
    }

    pub fn save(&self, path: &Path) -> Result<(), QnetError> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint())
            .map_err(|e| QnetError::Checkpoint(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, QnetError> {
        let text = fs::read_to_string(path)?;
        let checkpoint: QNetCheckpoint =
            serde_json::from_str(&text).map_err(|e| QnetError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&checkpoint)
    }
}
