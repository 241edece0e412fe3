//! Experiment orchestration and reporting.
//!
//! Runs the episode protocol for either policy, persists results as
//! version-stamped CSV plus a JSON summary, and compares finished runs.
//! Every step sends one uplink packet through the datapath and derives the
//! agent's reward from the passively measured round trip, not from the
//! environment's internal delay value.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::datapath::{
    encode_gtpu_header, packet_out_histogram, DatapathError, Direction, PacketEvent, PacketOut,
    PacketOutHistogram, SharedMaps, Teid, GTPU_MSG_GPDU,
};
use crate::env::{EnvError, PathEnvironment};
use crate::iface::Interface;
use crate::metrics::{rolling_mean, summarize_last, DescriptiveStats, MetricsError};
use crate::policy::{
    select_action_random, DqnAgent, PolicyError, PolicyKind, RewardNormalizer, Transition,
};
use crate::rng::{stream_rng, streams};

/// Tunnel id of the single simulated session.
pub const SESSION_TEID: Teid = Teid(100);

/// Nominal payload length stamped into generated packet headers.
const PAYLOAD_LEN: u16 = 100;

/// Rolling-mean window for the smoothed reward column.
pub const REWARD_ROLLING_WINDOW: usize = 10;

/// Trailing-episode window for summary statistics.
pub const SUMMARY_WINDOW: usize = 50;

/// Bucket width of the packet-out histogram, in sim seconds.
pub const PACKET_OUT_INTERVAL_S: u64 = 10;

const EPISODES_SCHEMA: &str = "# eupf-sim episodes schema v1";
const EPISODES_HEADER: &str = "episode,total_reward,reward_rolling10,mean_rtt_ms,actions_n6a,actions_n6b";
const STEPS_SCHEMA: &str = "# eupf-sim steps schema v1";
const STEPS_HEADER: &str = "episode,step,action,rtt_ms,reward";
const SUMMARY_SCHEMA: &str = "eupf-sim summary v1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Datapath(#[from] DatapathError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("cannot serialize summary: {0}")]
    Serialize(String),
    #[error("malformed run artifact: {0}")]
    Artifact(String),
    #[error("runs are not comparable: {0}")]
    Compare(String),
}

/// One decision step's outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u32,
    pub action: Interface,
    /// Round trip as measured by the datapath's pairing map, in ms.
    pub rtt_ms: f64,
    pub reward: f64,
}

/// Aggregates of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u32,
    pub total_reward: f64,
    pub mean_rtt_ms: f64,
    /// Actions taken, indexed like [`crate::iface::INTERFACES`].
    pub action_counts: [u32; 2],
    /// Per-step trace, kept only when the config enables it.
    pub steps: Option<Vec<StepRecord>>,
}

impl EpisodeRecord {
    pub fn n6a_share(&self) -> f64 {
        let total = self.action_counts[0] + self.action_counts[1];
        self.action_counts[0] as f64 / total as f64
    }
}

/// Everything a finished run produced, in memory.
#[derive(Debug)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub episodes: Vec<EpisodeRecord>,
    pub packet_out: Vec<PacketOut>,
    /// Per-episode hash of the target network's parameters; empty for the
    /// random policy.
    pub target_param_hashes: Vec<u64>,
}

enum PolicyRuntime {
    Dqn(Box<DqnAgent>),
    Random(ChaCha12Rng),
}

fn ns_to_ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

/// Runs the configured number of episodes and returns all records. Fully
/// deterministic for a given config: every random draw comes from a stream
/// derived from the root seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let mut env = PathEnvironment::new(config.env)?;
    let maps = SharedMaps::new();
    let normalizer = RewardNormalizer::new(0.0, config.env.max_observable_delay_ms())?;
    let mut policy = match config.policy {
        PolicyKind::Dqn => {
            PolicyRuntime::Dqn(Box::new(DqnAgent::new(config.seed, config.dqn, normalizer)?))
        }
        PolicyKind::Random => {
            PolicyRuntime::Random(stream_rng(config.seed, streams::EXPLORATION))
        }
    };

    let mut episodes = Vec::with_capacity(config.episodes as usize);
    let mut target_param_hashes = Vec::new();
    for episode in 0..config.episodes {
        if let PolicyRuntime::Dqn(agent) = &mut policy {
            agent.begin_episode(episode);
            target_param_hashes.push(agent.target_param_hash());
        }
        if config.reset_paths_each_episode {
            env.reset_paths();
        }
        episodes.push(run_episode(episode, config, &mut env, &maps, &mut policy, &normalizer)?);
    }
    Ok(RunResult {
        config: config.clone(),
        episodes,
        packet_out: maps.packet_out_events(),
        target_param_hashes,
    })
}

/// One episode: `steps_per_episode` decision cycles against a persistent
/// environment and datapath.
fn run_episode(
    episode: u32,
    config: &ExperimentConfig,
    env: &mut PathEnvironment,
    maps: &SharedMaps,
    policy: &mut PolicyRuntime,
    normalizer: &RewardNormalizer,
) -> Result<EpisodeRecord, HarnessError> {
    let mut steps = Vec::with_capacity(config.steps_per_episode as usize);
    let mut total_reward = 0.0;
    let mut rtt_sum = 0.0;
    let mut action_counts = [0u32; 2];

    for step in 0..config.steps_per_episode {
        let record = run_step(config, env, maps, policy, normalizer)?;
        total_reward += record.reward;
        rtt_sum += record.rtt_ms;
        action_counts[record.action.index()] += 1;
        steps.push(StepRecord { step, ..record });
    }

    Ok(EpisodeRecord {
        episode,
        total_reward,
        mean_rtt_ms: rtt_sum / config.steps_per_episode as f64,
        action_counts,
        steps: if config.trace_steps { Some(steps) } else { None },
    })
}

/// One decision cycle. The state fed to the policy is the last committed
/// round-trip measurement (zero before any exists); the environment then
/// advances to the packet's traversal instant, so a degradation trigger
/// drawn at this boundary is what the packet experiences; the reward is
/// computed from the delay the pairing map reports, closing the loop
/// through the measurement path.
fn run_step(
    config: &ExperimentConfig,
    env: &mut PathEnvironment,
    maps: &SharedMaps,
    policy: &mut PolicyRuntime,
    normalizer: &RewardNormalizer,
) -> Result<StepRecord, HarnessError> {
    let state = maps
        .read_observation(SESSION_TEID)
        .map(|o| normalizer.state(ns_to_ms(o.last_rtt_ns)))
        .unwrap_or(0.0);

    let action = match policy {
        PolicyRuntime::Dqn(agent) => agent.act(state)?,
        PolicyRuntime::Random(rng) => select_action_random(rng),
    };
    maps.write_action(SESSION_TEID, action);

    env.advance(config.env.step_ms, Some(action));
    let send_ns = env.clock_ms() * 1_000_000;
    let rtt_ns = (env.observe_rtt(action) * 1e6).round() as u64;

    let header = encode_gtpu_header(SESSION_TEID, GTPU_MSG_GPDU, PAYLOAD_LEN).to_vec();
    let request =
        PacketEvent { raw_header: header.clone(), timestamp_ns: send_ns, direction: Direction::Request };
    let sent = maps.handle_packet(&request)?;
    debug_assert_eq!(sent.forwarded, Some(action));

    let response =
        PacketEvent { raw_header: header, timestamp_ns: send_ns + rtt_ns, direction: Direction::Response };
    let outcome = maps.handle_packet(&response)?;
    let measured_ms =
        ns_to_ms(outcome.measured_rtt_ns.expect("response pairs with the request sent this step"));

    let reward = normalizer.reward(measured_ms);
    if let PolicyRuntime::Dqn(agent) = policy {
        let next_state = normalizer.state(measured_ms);
        agent.record_and_train(Transition::new(state, action, reward, next_state)?)?;
    }
    Ok(StepRecord { step: 0, action, rtt_ms: measured_ms, reward })
}

// ======================= summaries =======================

/// Trailing-window statistics block of a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    /// Episodes the window actually spans (min of 50 and the run length).
    pub episodes: usize,
    pub total_reward: DescriptiveStats,
    pub mean_rtt_ms: DescriptiveStats,
    pub n6a_share: f64,
}

/// All-episode means block of a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallSummary {
    pub mean_total_reward: f64,
    pub mean_rtt_ms: f64,
    pub n6a_share: f64,
}

/// The written form of a run: config echo plus derived statistics.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub schema: &'static str,
    pub config: ExperimentConfig,
    pub last_window: WindowSummary,
    pub overall: OverallSummary,
    pub packet_out: PacketOutHistogram,
}

impl RunResult {
    fn share_over(&self, records: &[EpisodeRecord]) -> f64 {
        let n6a: u64 = records.iter().map(|r| u64::from(r.action_counts[0])).sum();
        let total: u64 =
            records.iter().map(|r| u64::from(r.action_counts[0] + r.action_counts[1])).sum();
        n6a as f64 / total as f64
    }

    pub fn summary(&self) -> Result<RunSummary, HarnessError> {
        let rewards: Vec<f64> = self.episodes.iter().map(|r| r.total_reward).collect();
        let rtts: Vec<f64> = self.episodes.iter().map(|r| r.mean_rtt_ms).collect();
        let window = self.episodes.len().min(SUMMARY_WINDOW);
        let tail = &self.episodes[self.episodes.len() - window..];
        Ok(RunSummary {
            schema: SUMMARY_SCHEMA,
            config: self.config.clone(),
            last_window: WindowSummary {
                episodes: window,
                total_reward: summarize_last(&rewards, window)?,
                mean_rtt_ms: summarize_last(&rtts, window)?,
                n6a_share: self.share_over(tail),
            },
            overall: OverallSummary {
                mean_total_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
                mean_rtt_ms: rtts.iter().sum::<f64>() / rtts.len() as f64,
                n6a_share: self.share_over(&self.episodes),
            },
            packet_out: packet_out_histogram(&self.packet_out, PACKET_OUT_INTERVAL_S),
        })
    }
}

// ======================= output files =======================

/// Writes `episodes.csv`, `summary.json`, and (when tracing) `steps.csv`
/// into `dir`, creating it if needed.
pub fn write_outputs(result: &RunResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_episodes_csv(result, &dir.join("episodes.csv"))?;
    if result.config.trace_steps {
        write_steps_csv(result, &dir.join("steps.csv"))?;
    }
    let summary = result.summary()?;
    let json =
        serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

fn write_episodes_csv(result: &RunResult, path: &Path) -> Result<(), HarnessError> {
    let rewards: Vec<f64> = result.episodes.iter().map(|r| r.total_reward).collect();
    let smoothed = rolling_mean(&rewards, REWARD_ROLLING_WINDOW);
    let mut out = Vec::new();
    writeln!(out, "{EPISODES_SCHEMA}")?;
    writeln!(out, "{EPISODES_HEADER}")?;
    for (record, rolling) in result.episodes.iter().zip(&smoothed) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            record.episode,
            record.total_reward,
            rolling,
            record.mean_rtt_ms,
            record.action_counts[0],
            record.action_counts[1]
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_steps_csv(result: &RunResult, path: &Path) -> Result<(), HarnessError> {
    let mut out = Vec::new();
    writeln!(out, "{STEPS_SCHEMA}")?;
    writeln!(out, "{STEPS_HEADER}")?;
    for record in &result.episodes {
        let steps = record.steps.as_ref().ok_or_else(|| {
            HarnessError::Artifact(format!("episode {} has no step trace", record.episode))
        })?;
        for s in steps {
            writeln!(out, "{},{},{},{},{}", record.episode, s.step, s.action, s.rtt_ms, s.reward)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

// ======================= reading runs back =======================

/// `summary.json` as read from disk; the config echo stays untyped since
/// comparison only consumes the derived statistics.
#[derive(Debug, Deserialize)]
pub struct LoadedSummary {
    pub schema: String,
    pub config: serde_json::Value,
    pub last_window: WindowSummary,
    pub overall: OverallSummary,
    pub packet_out: PacketOutHistogram,
}

/// One row of `episodes.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode: u32,
    pub total_reward: f64,
    pub reward_rolling10: f64,
    pub mean_rtt_ms: f64,
    pub actions_n6a: u32,
    pub actions_n6b: u32,
}

impl EpisodeRow {
    pub fn n6a_share(&self) -> f64 {
        self.actions_n6a as f64 / (self.actions_n6a + self.actions_n6b) as f64
    }
}

/// A run directory read back for comparison.
#[derive(Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub summary: LoadedSummary,
    pub episodes: Vec<EpisodeRow>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, HarnessError> {
    let summary_path = dir.join("summary.json");
    let text = fs::read_to_string(&summary_path)?;
    let summary: LoadedSummary = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Artifact(format!("{}: {e}", summary_path.display())))?;
    if summary.schema != SUMMARY_SCHEMA {
        return Err(HarnessError::Artifact(format!(
            "unsupported summary schema {:?}",
            summary.schema
        )));
    }
    let episodes = read_episodes_csv(&dir.join("episodes.csv"))?;
    Ok(LoadedRun { dir: dir.to_path_buf(), summary, episodes })
}

fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRow>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, what: &str| {
        HarnessError::Artifact(format!("{}:{line}: {what}", path.display()))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, line)) if line == EPISODES_SCHEMA => {}
        _ => return Err(bad(1, "missing episodes schema stamp")),
    }
    match lines.next() {
        Some((_, line)) if line == EPISODES_HEADER => {}
        _ => return Err(bad(2, "unexpected episodes header")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(idx + 1, "expected 6 fields"));
        }
        let parse_err = |what| bad(idx + 1, what);
        rows.push(EpisodeRow {
            episode: fields[0].parse().map_err(|_| parse_err("bad episode"))?,
            total_reward: fields[1].parse().map_err(|_| parse_err("bad total_reward"))?,
            reward_rolling10: fields[2].parse().map_err(|_| parse_err("bad reward_rolling10"))?,
            mean_rtt_ms: fields[3].parse().map_err(|_| parse_err("bad mean_rtt_ms"))?,
            actions_n6a: fields[4].parse().map_err(|_| parse_err("bad actions_n6a"))?,
            actions_n6b: fields[5].parse().map_err(|_| parse_err("bad actions_n6b"))?,
        });
    }
    Ok(rows)
}

// ======================= run comparison =======================

/// Headline numbers of one side of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunDigest {
    pub overall_mean_rtt_ms: f64,
    pub overall_mean_reward: f64,
    pub last_window_mean_rtt_ms: f64,
    pub last_window_rtt_range_ms: f64,
    pub last_window_mean_reward: f64,
    pub last_window_n6a_share: f64,
}

impl RunDigest {
    fn from_summary(s: &LoadedSummary) -> Self {
        RunDigest {
            overall_mean_rtt_ms: s.overall.mean_rtt_ms,
            overall_mean_reward: s.overall.mean_total_reward,
            last_window_mean_rtt_ms: s.last_window.mean_rtt_ms.mean,
            last_window_rtt_range_ms: s.last_window.mean_rtt_ms.range(),
            last_window_mean_reward: s.last_window.total_reward.mean,
            last_window_n6a_share: s.last_window.n6a_share,
        }
    }

    fn minus(&self, other: &RunDigest) -> RunDigest {
        RunDigest {
            overall_mean_rtt_ms: self.overall_mean_rtt_ms - other.overall_mean_rtt_ms,
            overall_mean_reward: self.overall_mean_reward - other.overall_mean_reward,
            last_window_mean_rtt_ms: self.last_window_mean_rtt_ms - other.last_window_mean_rtt_ms,
            last_window_rtt_range_ms: self.last_window_rtt_range_ms
                - other.last_window_rtt_range_ms,
            last_window_mean_reward: self.last_window_mean_reward - other.last_window_mean_reward,
            last_window_n6a_share: self.last_window_n6a_share - other.last_window_n6a_share,
        }
    }
}

/// Per-episode curves of both runs, aligned by episode index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub episode: u32,
    pub reward_rolling_a: f64,
    pub reward_rolling_b: f64,
    pub n6a_share_a: f64,
    pub n6a_share_b: f64,
}

/// Side-by-side report over two finished runs.
#[derive(Debug, Serialize)]
pub struct ComparisonReport {
    pub run_a: String,
    pub run_b: String,
    pub a: RunDigest,
    pub b: RunDigest,
    /// Field-wise `b - a`.
    pub delta: RunDigest,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_runs(a: &LoadedRun, b: &LoadedRun) -> Result<ComparisonReport, HarnessError> {
    if a.episodes.len() != b.episodes.len() {
        return Err(HarnessError::Compare(format!(
            "episode counts differ: {} has {}, {} has {}",
            a.dir.display(),
            a.episodes.len(),
            b.dir.display(),
            b.episodes.len()
        )));
    }
    let digest_a = RunDigest::from_summary(&a.summary);
    let digest_b = RunDigest::from_summary(&b.summary);
    let rows = a
        .episodes
        .iter()
        .zip(&b.episodes)
        .map(|(ra, rb)| ComparisonRow {
            episode: ra.episode,
            reward_rolling_a: ra.reward_rolling10,
            reward_rolling_b: rb.reward_rolling10,
            n6a_share_a: ra.n6a_share(),
            n6a_share_b: rb.n6a_share(),
        })
        .collect();
    Ok(ComparisonReport {
        run_a: a.dir.display().to_string(),
        run_b: b.dir.display().to_string(),
        a: digest_a,
        b: digest_b,
        delta: digest_b.minus(&digest_a),
        rows,
    })
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run A: {}", self.run_a)?;
        writeln!(f, "run B: {}", self.run_b)?;
        writeln!(f)?;
        writeln!(f, "{:<28} {:>12} {:>12} {:>12}", "metric", "run A", "run B", "B - A")?;
        let mut row = |label: &str, a: f64, b: f64, d: f64| {
            writeln!(f, "{label:<28} {a:>12.4} {b:>12.4} {d:>12.4}")
        };
        row("overall mean RTT (ms)", self.a.overall_mean_rtt_ms, self.b.overall_mean_rtt_ms, self.delta.overall_mean_rtt_ms)?;
        row("overall mean reward", self.a.overall_mean_reward, self.b.overall_mean_reward, self.delta.overall_mean_reward)?;
        row("last-window mean RTT (ms)", self.a.last_window_mean_rtt_ms, self.b.last_window_mean_rtt_ms, self.delta.last_window_mean_rtt_ms)?;
        row("last-window RTT range (ms)", self.a.last_window_rtt_range_ms, self.b.last_window_rtt_range_ms, self.delta.last_window_rtt_range_ms)?;
        row("last-window mean reward", self.a.last_window_mean_reward, self.b.last_window_mean_reward, self.delta.last_window_mean_reward)?;
        row("last-window n6a share", self.a.last_window_n6a_share, self.b.last_window_n6a_share, self.delta.last_window_n6a_share)?;
        writeln!(f)?;
        writeln!(f, "per-episode curves (rolling reward, n6a share):")?;
        writeln!(
            f,
            "{:>8} {:>12} {:>12} {:>10} {:>10}",
            "episode", "reward A", "reward B", "share A", "share B"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8} {:>12.4} {:>12.4} {:>10.4} {:>10.4}",
                r.episode, r.reward_rolling_a, r.reward_rolling_b, r.n6a_share_a, r.n6a_share_b
            )?;
        }
        Ok(())
    }
}
