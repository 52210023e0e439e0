//! Decentralized multi-armed bandits with gossip-based insert-eliminate
//! exploration under a communication budget.

pub mod agent;
pub mod bandit;
pub mod cli;
pub mod config;
pub mod error;
pub mod network;
pub mod output;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod spreading;
pub mod theory;

pub use error::{Error, Result};
