//! Versioned JSON messages exchanged with console clients.
//!
//! Every message is an envelope `{"v": 1, "type": ..., "id": ..., "payload": ...}`.
//! `id` is optional on commands and echoed on the single `ack` or `error`
//! reply each command receives.

use std::collections::BTreeMap;

use cuelayer_core::interpret::{ActionSpec, CueSource, FlagValue, Mode};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_ACTOR: &str = "trainer";

/// Error codes carried by `error` replies.
pub mod codes {
    /// Unparseable JSON, wrong version, unknown type or a payload that does
    /// not fit the command.
    pub const BAD_REQUEST: &str = "bad_request";
    /// Unknown proposal id.
    pub const NOT_FOUND: &str = "not_found";
    /// Proposal already decided or expired.
    pub const CONFLICT: &str = "conflict";
    /// Replay control without a replay.
    pub const UNAVAILABLE: &str = "unavailable";
}

/// Outbound message types.
pub mod types {
    pub const ACK: &str = "ack";
    pub const ERROR: &str = "error";
    pub const STATE: &str = "state";
    pub const FEATURE: &str = "feature";
    pub const MARKER: &str = "marker";
    pub const PROPOSAL: &str = "proposal";
    pub const REVIEW: &str = "review";
    pub const DECISION: &str = "decision";
    pub const ACTION: &str = "action";
    pub const EXPIRED: &str = "expired";
    pub const REPLAY_FINISHED: &str = "replay_finished";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn new(kind: &str, id: Option<Value>, payload: Value) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            kind: kind.into(),
            id,
            payload,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecidePayload {
    pub proposal_id: String,
    #[serde(default = "default_actor")]
    pub actor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverridePayload {
    pub proposal_id: String,
    pub actions: Vec<ActionSpec>,
    #[serde(default = "default_actor")]
    pub actor: String,
}

fn default_actor() -> String {
    DEFAULT_ACTOR.into()
}

/// Storybook flags to merge into the current context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectContextPayload {
    pub flags: BTreeMap<String, FlagValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetWeightPayload {
    pub modality: CueSource,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetModePayload {
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReplayCommand {
    Pause,
    Resume,
    Speed { speed: f64 },
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Approve(DecidePayload),
    Reject(DecidePayload),
    Override(OverridePayload),
    InjectContext(InjectContextPayload),
    SetWeight(SetWeightPayload),
    SetMode(SetModePayload),
    Replay(ReplayCommand),
    GetState,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Approve(_) => "approve",
            Command::Reject(_) => "reject",
            Command::Override(_) => "override",
            Command::InjectContext(_) => "inject_context",
            Command::SetWeight(_) => "set_weight",
            Command::SetMode(_) => "set_mode",
            Command::Replay(_) => "replay",
            Command::GetState => "get_state",
        }
    }
}

/// Failure to handle a command, sent back as an `error` reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandError {
    pub code: String,
    pub message: String,
}

impl CommandError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(codes::BAD_REQUEST, message)
    }
}

/// Parses one inbound text message. The returned id is the envelope id when
/// it could be read, so that even a rejected command is answered with it.
pub fn parse_command(text: &str) -> (Option<Value>, Result<Command, CommandError>) {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return (None, Err(CommandError::bad_request(format!("malformed JSON: {e}")))),
    };
    let id = value.get("id").cloned();
    let env: Envelope = match serde_json::from_value(value) {
        Ok(e) => e,
        Err(e) => return (id, Err(CommandError::bad_request(format!("malformed envelope: {e}")))),
    };
    if env.v != PROTOCOL_VERSION {
        let msg = format!("unsupported protocol version {}", env.v);
        return (env.id, Err(CommandError::bad_request(msg)));
    }
    let payload = if env.payload.is_null() {
        Value::Object(Default::default())
    } else {
        env.payload
    };
    fn typed<T: serde::de::DeserializeOwned>(kind: &str, p: Value) -> Result<T, CommandError> {
        serde_json::from_value(p).map_err(|e| CommandError::bad_request(format!("bad {kind} payload: {e}")))
    }
    let k = env.kind.as_str();
    let cmd = match k {
        "approve" => typed(k, payload).map(Command::Approve),
        "reject" => typed(k, payload).map(Command::Reject),
        "override" => typed(k, payload).map(Command::Override),
        "inject_context" => typed(k, payload).map(Command::InjectContext),
        "set_weight" => typed::<SetWeightPayload>(k, payload).and_then(|p| {
            if (0.0..=1.0).contains(&p.weight) {
                Ok(Command::SetWeight(p))
            } else {
                Err(CommandError::bad_request(format!("weight {} outside [0, 1]", p.weight)))
            }
        }),
        "set_mode" => typed(k, payload).map(Command::SetMode),
        "replay" => typed(k, payload).map(Command::Replay),
        "get_state" => Ok(Command::GetState),
        other => Err(CommandError::bad_request(format!("unknown command type `{other}`"))),
    };
    (env.id, cmd)
}

pub fn ack(id: Option<Value>, command: &str, result: Value) -> String {
    let payload = serde_json::json!({ "command": command, "result": result });
    Envelope::new(types::ACK, id, payload).to_json()
}

pub fn error(id: Option<Value>, err: &CommandError) -> String {
    Envelope::new(types::ERROR, id, serde_json::to_value(err).expect("error serializes")).to_json()
}

pub fn event<T: Serialize>(kind: &str, payload: &T) -> String {
    Envelope::new(kind, None, serde_json::to_value(payload).expect("payload serializes")).to_json()
}
