//! Wire messages: one JSON object per websocket text message.

use serde::{Deserialize, Serialize};

use navlearn::env::{Action, N_BEAMS};
use navlearn::RewardParts;

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    /// Velocity command; held until the next one arrives.
    Cmd { lv: f64, av: f64, seq: u64 },
    Reset {},
    Record { on: bool },
    /// Flushes the demonstration file.
    Save {},
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalMsg {
    /// Distance to the goal, meters.
    pub distance: f64,
    /// Goal bearing relative to the heading, radians.
    pub bearing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionMsg {
    pub lv: f64,
    pub av: f64,
}

impl From<Action> for ActionMsg {
    fn from(a: Action) -> Self {
        Self { lv: a.lv, av: a.av }
    }
}

/// Simulation state after one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: u64,
    pub episode: u64,
    pub pose: PoseMsg,
    /// Raw beam distances, meters.
    pub beams: Vec<f64>,
    pub goal: GoalMsg,
    pub goal_position: [f64; 2],
    pub last_action: ActionMsg,
    pub reward: f64,
    pub parts: RewardParts,
    pub cumulative_reward: f64,
    pub done: bool,
    pub reason: String,
    pub recording: bool,
    pub paused: bool,
    pub demo_count: usize,
}

impl Frame {
    pub fn beam_count_ok(&self) -> bool {
        self.beams.len() == N_BEAMS
    }
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Hello { role: Role },
    Frame(Frame),
    Error { message: String },
    Saved { demo_count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Controller,
    Spectator,
}

impl ServerMessage {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages always encode")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
}
