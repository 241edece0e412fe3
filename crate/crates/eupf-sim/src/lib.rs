//! Simulator and training harness for intelligent N6 path selection at an
//! enhanced 5G User Plane Function.
//!
//! The crate models two alternative N6 egress paths (`n6a` toward MEC, `n6b`
//! toward cloud) whose latent GOOD/BAD condition evolves under semi-Markov
//! degradation, a simulated UPF datapath that measures per-TEID round-trip
//! proxies from GTP-U traffic and steers packets through a per-TEID action
//! map, and a from-scratch DQN agent that learns to pick the low-delay path
//! from those passive measurements.
//!
//! Module layout:
//!
//! - [`iface`]: the two N6 interfaces and action indexing
//! - [`env`]: semi-Markov path degradation and noisy delay observations
//! - [`datapath`]: GTP-U TEID parsing, RTT pairing map, action map, counters
//! - [`qnet`]: minimal dense Q-network with backprop and Adam
//! - [`policy`]: replay buffer, exploration schedule, DQN and random agents
//! - [`config`]: experiment configuration and file loading
//! - [`metrics`]: rolling means, descriptive statistics, histograms
//! - [`harness`]: episode/experiment orchestration, persistence, comparison

pub mod config;
pub mod datapath;
pub mod env;
pub mod harness;
pub mod iface;
pub mod metrics;
pub mod policy;
pub mod qnet;
pub mod rng;


pub use config::ExperimentConfig;
pub use iface::Interface;
