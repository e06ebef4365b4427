//! Chef's Hat as a multi-agent learning environment.
//!
//! - [`engine`]: rules, action table and observation encoding.
//! - [`nn`]: dense networks with hand-written backpropagation.
//! - [`replay`]: prioritised and opponent-weighted experience replay.
//! - [`agents`]: random, DQL and PPO players plus introspective confidence.
//! - [`rivalry`]: trait aggregation and rivalry arithmetic.
//! - [`predictor`]: opponent trait predictor trained on action windows.
//! - [`eventlog`]: line-delimited turn records and engine replay.

pub mod agents;
pub mod engine;
pub mod error;
pub mod eventlog;
pub mod nn;
pub mod predictor;
pub mod replay;
pub mod rivalry;
pub mod table;

pub use error::{Error, Result};
