//! Experiment runner for Chef's Hat agents: self-play pretraining,
//! tournaments with full event logs, the rivalry-weight search and the
//! metric files derived from their outputs.

pub mod ablation;
pub mod config;
pub mod lineup;
pub mod metrics;
pub mod runs;
