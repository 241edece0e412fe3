//! Semi-Markov path degradation environment.
//!
//! Each N6 path is latently GOOD or BAD. A GOOD path degrades by a Bernoulli
//! trigger (per traversal or per step, depending on mode) and then stays BAD
//! for a fixed dwell before recovering. Observations are noisy delays: a
//! per-path floor, plus the bad-state delay while degraded, plus bounded
//! uniform jitter, clamped at zero because a measured round trip cannot be
//! negative.
//!
//! All randomness comes from a single generator seeded by [`EnvConfig::seed`],
//! so identical configurations replay bit-identical trajectories.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iface::{Interface, INTERFACES};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment parameter: {0}")]
    InvalidParams(String),
    #[error("failure probability is zero; long-run BAD fraction is 0 by convention")]
    ZeroFailureProbability,
}

/// Degradation parameters of one N6 path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    /// Probability that a trigger opportunity degrades the path.
    pub failure_probability: f64,
    /// Fixed dwell in the BAD state, in sim-clock milliseconds.
    pub failure_duration_ms: u64,
    /// Delay added to every observation while the path is BAD.
    pub bad_state_delay_ms: f64,
    /// Constant per-path floor delay. Zero by default.
    #[serde(default)]
    pub base_delay_ms: f64,
}

impl PathParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(0.0..=1.0).contains(&self.failure_probability) {
            return Err(EnvError::InvalidParams(format!(
                "failure_probability must be in [0, 1], got {}",
                self.failure_probability
            )));
        }
        if self.failure_duration_ms == 0 {
            return Err(EnvError::InvalidParams("failure_duration_ms must be > 0".into()));
        }
        if !self.bad_state_delay_ms.is_finite() || self.bad_state_delay_ms < 0.0 {
            return Err(EnvError::InvalidParams(format!(
                "bad_state_delay_ms must be finite and >= 0, got {}",
                self.bad_state_delay_ms
            )));
        }
        if !self.base_delay_ms.is_finite() || self.base_delay_ms < 0.0 {
            return Err(EnvError::InvalidParams(format!(
                "base_delay_ms must be finite and >= 0, got {}",
                self.base_delay_ms
            )));
        }
        Ok(())
    }
}

/// Latent condition of one path. A degraded path records the absolute
/// sim-clock time at which its dwell ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathState {
    Good,
    Bad { until_ms: u64 },
}

impl PathState {
    pub fn is_bad(self) -> bool {
        matches!(self, PathState::Bad { .. })
    }
}

/// When Bernoulli failure triggers are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// Only the path a packet traverses draws a trigger.
    #[serde(alias = "traversal")]
    PerTraversal,
    /// Both paths draw independent triggers every step.
    #[serde(alias = "per-step")]
    PerStep,
}

impl std::str::FromStr for TriggerMode {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traversal" | "per_traversal" => Ok(TriggerMode::PerTraversal),
            "per-step" | "per_step" => Ok(TriggerMode::PerStep),
            other => Err(EnvError::InvalidParams(format!(
                "unknown trigger mode {other:?} (expected \"traversal\" or \"per-step\")"
            ))),
        }
    }
}

/// Full environment configuration. Defaults reproduce the delay-induction
/// scenario: path A (MEC) p=0.01 / 10 s dwell, path B (cloud) p=0.10 / 20 s
/// dwell, 800 ms bad-state delay on both, 3 ms maximum jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub path_a: PathParams,
    pub path_b: PathParams,
    /// Maximum jitter amplitude in milliseconds; draws are uniform in
    /// `[-max_jitter_ms, +max_jitter_ms]`.
    pub max_jitter_ms: f64,
    pub trigger_mode: TriggerMode,
    /// Sim-clock advance per decision step, in milliseconds.
    pub step_ms: u64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            path_a: PathParams {
                failure_probability: 0.01,
                failure_duration_ms: 10_000,
                bad_state_delay_ms: 800.0,
                base_delay_ms: 0.0,
            },
            path_b: PathParams {
                failure_probability: 0.10,
                failure_duration_ms: 20_000,
                bad_state_delay_ms: 800.0,
                base_delay_ms: 0.0,
            },
            max_jitter_ms: 3.0,
            trigger_mode: TriggerMode::PerTraversal,
            step_ms: 1000,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        self.path_a.validate()?;
        self.path_b.validate()?;
        if !self.max_jitter_ms.is_finite() || self.max_jitter_ms < 0.0 {
            return Err(EnvError::InvalidParams(format!(
                "max_jitter_ms must be finite and >= 0, got {}",
                self.max_jitter_ms
            )));
        }
        if self.step_ms == 0 {
            return Err(EnvError::InvalidParams("step_ms must be > 0".into()));
        }
        Ok(())
    }

    pub fn params(&self, iface: Interface) -> &PathParams {
        match iface {
            Interface::N6a => &self.path_a,
            Interface::N6b => &self.path_b,
        }
    }

    /// Largest possible observation: max over paths of floor plus bad-state
    /// delay, plus jitter amplitude. Used as the normalization ceiling.
    pub fn max_observable_delay_ms(&self) -> f64 {
        let worst = INTERFACES
            .iter()
            .map(|i| self.params(*i).base_delay_ms + self.params(*i).bad_state_delay_ms)
            .fold(0.0, f64::max);
        worst + self.max_jitter_ms
    }
}

/// The two-path environment: sim clock, latent path states, and the seeded
/// generator driving triggers and jitter.
#[derive(Debug, Clone)]
pub struct PathEnvironment {
    config: EnvConfig,
    clock_ms: u64,
    state: [PathState; 2],
    rng: ChaCha12Rng,
}

impl PathEnvironment {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(PathEnvironment {
            config,
            clock_ms: 0,
            state: [PathState::Good; 2],
            rng: ChaCha12Rng::seed_from_u64(config.seed),
        })
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self, iface: Interface) -> PathState {
        self.state[iface.index()]
    }

    /// Returns both paths to GOOD without touching the clock or generator.
    /// Used by harnesses that reset the world between episodes.
    pub fn reset_paths(&mut self) {
        self.state = [PathState::Good; 2];
    }

    /// Advances the sim clock and evolves the latent states: any path whose
    /// dwell has elapsed recovers, then trigger draws are applied. In
    /// per-traversal mode only the traversed path draws; in per-step mode
    /// both draw, `n6a` first. A trigger on a BAD path is ignored (the dwell
    /// is never extended), and a path that recovered in this call does not
    /// draw until the next one, so a full step is spent GOOD between dwells.
    pub fn advance(&mut self, elapsed_ms: u64, traversed: Option<Interface>) {
        assert!(elapsed_ms > 0, "advance requires elapsed_ms > 0");
        self.clock_ms += elapsed_ms;

        let mut recovered_now = [false; 2];
        for iface in INTERFACES {
            let slot = iface.index();
            if let PathState::Bad { until_ms } = self.state[slot] {
                if self.clock_ms >= until_ms {
                    self.state[slot] = PathState::Good;
                    recovered_now[slot] = true;
                }
            }
        }

        for iface in INTERFACES {
            let eligible = match self.config.trigger_mode {
                TriggerMode::PerTraversal => traversed == Some(iface),
                TriggerMode::PerStep => true,
            };
            if !eligible {
                continue;
            }
            let slot = iface.index();
            if self.state[slot].is_bad() || recovered_now[slot] {
                continue;
            }
            let params = self.config.params(iface);
            if self.rng.gen::<f64>() < params.failure_probability {
                self.state[slot] = PathState::Bad {
                    until_ms: self.clock_ms + params.failure_duration_ms,
                };
            }
        }
    }

    /// One noisy delay observation of the given path, in milliseconds:
    /// `max(0, base + bad_delay[if BAD] + jitter)` with jitter uniform in
    /// `[-max_jitter_ms, +max_jitter_ms]`. Leaves the clock and latent
    /// states untouched; only the generator advances.
    pub fn observe_rtt(&mut self, iface: Interface) -> f64 {
        let params = self.config.params(iface);
        let mut delay = params.base_delay_ms;
        if self.state[iface.index()].is_bad() {
            delay += params.bad_state_delay_ms;
        }
        let j = self.config.max_jitter_ms;
        if j > 0.0 {
            delay += self.rng.gen_range(-j..=j);
        }
        delay.max(0.0)
    }
}

/// Long-run fraction of steps a path spends BAD in per-step mode, from
/// renewal theory: the mean cycle is `failure_duration` BAD plus a geometric
/// wait of `step / p` GOOD, giving `D / (D + step/p)`.
pub fn expected_bad_fraction(params: &PathParams, step_ms: u64) -> Result<f64, EnvError> {
    params.validate()?;
    if params.failure_probability == 0.0 {
        return Err(EnvError::ZeroFailureProbability);
    }
    let d = params.failure_duration_ms as f64;
    let wait = step_ms as f64 / params.failure_probability;
    Ok(d / (d + wait))
}
