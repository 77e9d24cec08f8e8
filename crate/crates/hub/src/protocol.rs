//! Wire protocol: every frame is one UTF-8 JSON object `{type, seq, payload}`.
//!
//! Inbound payloads are strict (`deny_unknown_fields` where the shape
//! allows it) so a typo is a protocol error rather than a silent no-op.

use roomcast_core::arbiter::UserId;
use roomcast_core::attention::{InputKind, Intent};
use roomcast_core::layout::{PanelId, Rect, SeatSide};
use roomcast_core::model::{AttentionLevel, ContentDescriptor, ContentKind, DisplayRole};
use roomcast_core::sports::{FeedEvent, MatchDescriptor};
use roomcast_core::timeline::Transport;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::polls::Privacy;
use crate::registry::DisplayRegistration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl Message {
    pub fn new(kind: &str, seq: u64, payload: Value) -> Self {
        Message {
            kind: kind.to_string(),
            seq,
            payload,
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("frame is not a protocol message: {0}")]
    Frame(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("bad `{kind}` payload: {reason}")]
    Payload { kind: String, reason: String },
}

pub const INBOUND_TYPES: &[&str] = &[
    "register",
    "transport",
    "input-event",
    "token-op",
    "poll-op",
    "cast",
    "object-detect",
    "panel-op",
    "feed",
    "match-op",
    "show",
    "presence-change",
    "environment-change",
    "preferences",
    "clock-sync",
    "wizard-inject",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TransportOp {
    pub user: UserId,
    #[serde(flatten)]
    pub command: Transport,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputOp {
    pub display_id: String,
    pub input: InputKind,
    #[serde(default)]
    pub intent: Option<Intent>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TokenOp {
    Request { user: UserId },
    Pass { user: UserId, to: UserId },
    Release { user: UserId },
    Withdraw { user: UserId },
    AdminReset,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PollOp {
    Open {
        poll_id: String,
        question: String,
        options: Vec<String>,
    },
    Vote {
        poll_id: String,
        user: UserId,
        option: String,
        #[serde(default)]
        privacy: Option<Privacy>,
    },
    Close {
        poll_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CastOp {
    pub user: UserId,
    pub target: DisplayRole,
    /// `null` clears the cast overlay on the target.
    pub content: Option<ContentDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectState {
    Present,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDetect {
    pub rect: Rect,
    pub state: ObjectState,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PanelOp {
    Open {
        seat: SeatSide,
        w: i64,
        h: i64,
        content: ContentDescriptor,
    },
    Move {
        panel_id: PanelId,
        rect: Rect,
    },
    Rotate {
        panel_id: PanelId,
        quarter_turns: i32,
    },
    Close {
        panel_id: PanelId,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedOp {
    pub event: FeedEvent,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MatchOp {
    Add { descriptor: MatchDescriptor },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShowOp {
    pub role: DisplayRole,
    pub id: String,
    /// `null` takes the item down.
    pub content: Option<ContentDescriptor>,
    #[serde(default)]
    pub attention: Option<AttentionLevel>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresenceChange {
    pub user: UserId,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentChange {
    pub actuator: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencesOp {
    pub user: UserId,
    #[serde(default)]
    pub interests: BTreeSet<ContentKind>,
    #[serde(default)]
    pub privacy_default: Privacy,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSyncReq {
    #[serde(default)]
    pub client_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerMessage {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WizardInject {
    pub message: InnerMessage,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "kebab-case")]
pub enum Inbound {
    Register(DisplayRegistration),
    Transport(TransportOp),
    InputEvent(InputOp),
    TokenOp(TokenOp),
    PollOp(PollOp),
    Cast(CastOp),
    ObjectDetect(ObjectDetect),
    PanelOp(PanelOp),
    Feed(FeedOp),
    MatchOp(MatchOp),
    Show(ShowOp),
    PresenceChange(PresenceChange),
    EnvironmentChange(EnvironmentChange),
    Preferences(PreferencesOp),
    ClockSync(ClockSyncReq),
    WizardInject(WizardInject),
}

impl Inbound {
    pub fn decode(kind: &str, payload: &Value) -> Result<Inbound, ProtocolError> {
        if !INBOUND_TYPES.contains(&kind) {
            return Err(ProtocolError::UnknownType(kind.to_string()));
        }
        // unit-like payloads may be omitted
        let payload = if payload.is_null() && kind == "clock-sync" {
            json!({})
        } else {
            payload.clone()
        };
        serde_json::from_value(json!({ "type": kind, "payload": payload })).map_err(|e| ProtocolError::Payload {
            kind: kind.to_string(),
            reason: e.to_string(),
        })
    }
}

/// Splits a text frame into its envelope. A frame that is not even an
/// envelope still yields its `seq` when one can be recovered, so the error
/// reply can reference it.
pub fn parse_frame(text: &str) -> Result<Message, (Option<u64>, ProtocolError)> {
    match serde_json::from_str::<Message>(text) {
        Ok(m) => Ok(m),
        Err(e) => {
            let seq = serde_json::from_str::<Value>(text)
                .ok()
                .and_then(|v| v.get("seq").and_then(Value::as_u64));
            Err((seq, ProtocolError::Frame(e.to_string())))
        }
    }
}

/// Where an outbound message goes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum To {
    Display(String),
    /// The connection (or injector) whose message is being handled.
    Sender,
    All,
}

impl To {
    pub fn label(&self) -> &str {
        match self {
            To::Display(id) => id,
            To::Sender => "@sender",
            To::All => "*",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Addressed {
    pub to: To,
    pub msg: Message,
}
