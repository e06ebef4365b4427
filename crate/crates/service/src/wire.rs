//! Messages exchanged with a client: one JSON object per frame, each with a
//! `type` and a `payload`.

use chefs_core::engine::NUM_PLAYERS;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum WireMessage {
    Join(JoinPayload),
    Joined(JoinedPayload),
    StateUpdate(StateUpdate),
    ActionRequest(ActionRequest),
    Action(ActionPayload),
    ActionRejected(ActionRejected),
    MatchEnd(MatchEnd),
    GameEnd(GameEnd),
    Error(ErrorPayload),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JoinPayload {
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinedPayload {
    pub session_id: String,
    pub seat: usize,
    pub players: [String; NUM_PLAYERS],
}

/// What the human sees after every applied turn and at each deal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub hand: Vec<u8>,
    pub board: Vec<u8>,
    pub scores: [u32; NUM_PLAYERS],
    pub turn: usize,
    pub match_no: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub mask: Vec<bool>,
    pub deadline_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionPayload {
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRejected {
    pub index: usize,
    /// `OUT_OF_TURN`, `ILLEGAL_ACTION` or `GAME_OVER`.
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchEnd {
    pub match_no: u32,
    pub points: [u32; NUM_PLAYERS],
    pub scores: [u32; NUM_PLAYERS],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameEnd {
    pub scores: [u32; NUM_PLAYERS],
    pub winner: Option<usize>,
    /// Set when the session aborted instead of finishing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

impl WireMessage {
    pub fn parse(text: &str) -> Result<WireMessage, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialise")
    }

    pub fn error(message: impl Into<String>) -> WireMessage {
        WireMessage::Error(ErrorPayload {
            message: message.into(),
        })
    }

    pub fn action(index: usize) -> WireMessage {
        WireMessage::Action(ActionPayload { index })
    }

    pub fn join() -> WireMessage {
        WireMessage::Join(JoinPayload::default())
    }

    /// Ends the game or the session.
    pub fn is_terminal(&self) -> bool {
        matches!(self, WireMessage::GameEnd(_))
    }
}
