//! The message loop: decode, apply transactionally, settle, publish.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::compose::{compose, RenderState};
use crate::prefs::Preferences;
use crate::protocol::{parse_frame, Addressed, Inbound, Message, To};
use crate::session::{Effect, HubError, Session};

#[derive(Debug, Clone)]
struct Published {
    rev: u64,
    fields: Map<String, Value>,
}

/// Single-master owner of a [`Session`]. Displays see the session only
/// through snapshots and field-level diffs.
#[derive(Debug, Clone)]
pub struct Hub {
    session: Session,
    published: BTreeMap<String, Published>,
    seq: u64,
    pending: Vec<Addressed>,
}

fn apply(s: &mut Session, inbound: Inbound, nested: bool) -> Result<Vec<Effect>, HubError> {
    match inbound {
        Inbound::Register(reg) => s.register(reg),
        Inbound::Transport(op) => s.transport(op),
        Inbound::InputEvent(op) => s.input(op),
        Inbound::TokenOp(op) => s.token_op(op),
        Inbound::PollOp(op) => s.poll_op(op),
        Inbound::Cast(op) => s.cast(op),
        Inbound::ObjectDetect(op) => s.object(op),
        Inbound::PanelOp(op) => s.panel_op(op),
        Inbound::Feed(op) => s.feed(&op.event),
        Inbound::MatchOp(op) => s.match_op(op),
        Inbound::Show(op) => s.show(op),
        Inbound::PresenceChange(op) => s.presence(op),
        Inbound::EnvironmentChange(op) => s.environment_change(op),
        Inbound::Preferences(op) => s.preferences(op),
        Inbound::ClockSync(req) => Ok(s.clock_sync(req.client_ms)),
        Inbound::WizardInject(w) => {
            if nested || w.message.kind == "wizard-inject" {
                return Err(HubError::NestedInject);
            }
            let inner = Inbound::decode(&w.message.kind, &w.message.payload)?;
            apply(s, inner, true)
        }
    }
}

impl Hub {
    pub fn new(session: Session) -> Self {
        let mut hub = Hub {
            session,
            published: BTreeMap::new(),
            seq: 0,
            pending: Vec::new(),
        };
        let effects = hub.session.start();
        hub.session.settle();
        hub.pending = hub.effect_messages(effects, None);
        hub
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn now_ms(&self) -> u64 {
        self.session.now_ms
    }

    pub fn compose(&self) -> BTreeMap<String, RenderState> {
        compose(&self.session)
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn message(&mut self, kind: &str, payload: Value) -> Message {
        let seq = self.next_seq();
        Message::new(kind, seq, payload)
    }

    fn error(&mut self, in_reply_to: Option<u64>, err: &HubError) -> Addressed {
        let msg = self.message(
            "error",
            json!({ "code": err.code(), "message": err.to_string(), "in_reply_to": in_reply_to }),
        );
        Addressed { to: To::Sender, msg }
    }

    fn effect_messages(&mut self, effects: Vec<Effect>, reply_kind: Option<(&str, u64)>) -> Vec<Addressed> {
        let mut out = Vec::new();
        for e in effects {
            match e {
                Effect::Environment {
                    actuator,
                    value,
                    cue_id,
                    source,
                } => {
                    let at_ms = self.session.now_ms;
                    let msg = self.message(
                        "environment",
                        json!({ "at_ms": at_ms, "actuator": actuator, "value": value, "cue_id": cue_id, "source": source }),
                    );
                    out.push(Addressed { to: To::All, msg });
                }
                Effect::Reply(mut payload) => {
                    let (kind, seq) = reply_kind.unwrap_or(("ack", 0));
                    let kind = if kind == "clock-sync" { "clock-sync" } else { "ack" };
                    if let Value::Object(m) = &mut payload {
                        m.insert("in_reply_to".into(), json!(seq));
                    }
                    let msg = self.message(kind, payload);
                    out.push(Addressed { to: To::Sender, msg });
                }
            }
        }
        out
    }

    /// Snapshots for displays not yet published to, diffs for displays
    /// whose render state changed, nothing for the rest.
    fn publish(&mut self) -> Vec<Addressed> {
        let at_ms = self.session.now_ms;
        let states = compose(&self.session);
        let mut out = Vec::new();
        for (id, state) in states {
            let fields = state.to_fields();
            match self.published.get(&id).cloned() {
                None => {
                    let msg = self.message(
                        "snapshot",
                        json!({ "display_id": id, "rev": 1, "at_ms": at_ms, "state": Value::Object(fields.clone()) }),
                    );
                    out.push(Addressed {
                        to: To::Display(id.clone()),
                        msg,
                    });
                    self.published.insert(id, Published { rev: 1, fields });
                }
                Some(prev) => {
                    let changes: Map<String, Value> = fields
                        .iter()
                        .filter(|(k, v)| prev.fields.get(*k) != Some(v))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect();
                    if changes.is_empty() {
                        continue;
                    }
                    let rev = prev.rev + 1;
                    let msg = self.message(
                        "diff",
                        json!({ "display_id": id, "base_rev": prev.rev, "rev": rev, "at_ms": at_ms, "changes": Value::Object(changes) }),
                    );
                    out.push(Addressed {
                        to: To::Display(id.clone()),
                        msg,
                    });
                    self.published.insert(id, Published { rev, fields });
                }
            }
        }
        out
    }

    /// Handles one raw text frame.
    pub fn handle_text(&mut self, text: &str) -> Vec<Addressed> {
        match parse_frame(text) {
            Ok(msg) => self.handle(msg),
            Err((seq, err)) => {
                let mut out = std::mem::take(&mut self.pending);
                out.push(self.error(seq, &HubError::Protocol(err)));
                out
            }
        }
    }

    /// Applies one message. A message that fails leaves the session exactly
    /// as it was and yields a single error reply.
    pub fn handle(&mut self, msg: Message) -> Vec<Addressed> {
        let mut out = std::mem::take(&mut self.pending);
        let inbound = match Inbound::decode(&msg.kind, &msg.payload) {
            Ok(i) => i,
            Err(e) => {
                out.push(self.error(Some(msg.seq), &HubError::Protocol(e)));
                return out;
            }
        };
        let is_register = matches!(inbound, Inbound::Register(_));
        let mut next = self.session.clone();
        match apply(&mut next, inbound, false) {
            Ok(effects) => {
                self.session = next;
                self.session.settle();
                let has_reply = effects.iter().any(|e| matches!(e, Effect::Reply(_)));
                out.extend(self.effect_messages(effects, Some((&msg.kind, msg.seq))));
                if !has_reply && !is_register {
                    let ack = self.message("ack", json!({ "in_reply_to": msg.seq }));
                    out.push(Addressed {
                        to: To::Sender,
                        msg: ack,
                    });
                }
                out.extend(self.publish());
            }
            Err(e) => out.push(self.error(Some(msg.seq), &e)),
        }
        out
    }

    /// Advances virtual time by `dt_ms` and publishes what changed.
    pub fn tick(&mut self, dt_ms: u64) -> Vec<Addressed> {
        let mut out = std::mem::take(&mut self.pending);
        let effects = self.session.advance_time(dt_ms);
        self.session.settle();
        out.extend(self.effect_messages(effects, None));
        out.extend(self.publish());
        out
    }

    /// Drops a display whose connection went away; it may register again.
    pub fn disconnect(&mut self, display_id: &str) -> Vec<Addressed> {
        if self.session.unregister(display_id).is_err() {
            return Vec::new();
        }
        self.published.remove(display_id);
        let mut out = std::mem::take(&mut self.pending);
        self.session.settle();
        out.extend(self.publish());
        out
    }

    /// The preference store, once per change, for persisting.
    pub fn take_dirty_prefs(&mut self) -> Option<Preferences> {
        if self.session.prefs_dirty {
            self.session.prefs_dirty = false;
            Some(self.session.prefs.clone())
        } else {
            None
        }
    }
}
