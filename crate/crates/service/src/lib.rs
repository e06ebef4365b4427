//! Game service: a human plays a full game against three agents over a
//! websocket, agents keep learning between matches, and every turn is
//! appended to a per-session log that the engine can replay.

pub mod config;
pub mod error;
pub mod server;
pub mod session;
pub mod wire;

pub use config::{AgentRole, AgentSpec, ServiceConfig};
pub use error::{Result, ServiceError};
pub use session::{start_session, LearningReport, Phase, Session};
pub use wire::WireMessage;
