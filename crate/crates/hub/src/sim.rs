//! Simulated displays for tests and demos.
//!
//! A [`SimDisplay`] keeps the render state a real client would hold by
//! applying snapshots and diffs. [`SimRoom`] runs displays in-process
//! against a [`Hub`] on virtual time; [`SimClient`] talks to a running
//! server over a WebSocket.

use std::collections::BTreeMap;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Map, Value};
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use crate::hub::Hub;
use crate::protocol::{Addressed, Message, To};
use crate::registry::DisplayRegistration;

#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub t_ms: u64,
    pub msg: Message,
}

#[derive(Debug, Clone)]
pub struct SimDisplay {
    pub registration: DisplayRegistration,
    pub received: Vec<Received>,
    pub state: Option<Map<String, Value>>,
    pub rev: u64,
    /// Diffs dropped because their base revision did not match.
    pub rejected_diffs: usize,
}

impl SimDisplay {
    pub fn new(registration: DisplayRegistration) -> Self {
        SimDisplay {
            registration,
            received: Vec::new(),
            state: None,
            rev: 0,
            rejected_diffs: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.registration.display_id
    }

    /// Records a message and folds snapshots and in-sequence diffs into
    /// the local state.
    pub fn accept(&mut self, t_ms: u64, msg: Message) {
        let p = &msg.payload;
        if p.get("display_id").and_then(Value::as_str) == Some(self.id()) {
            match msg.kind.as_str() {
                "snapshot" => {
                    if let Some(Value::Object(s)) = p.get("state") {
                        self.state = Some(s.clone());
                        self.rev = p["rev"].as_u64().unwrap_or(0);
                    }
                }
                "diff" => match (&mut self.state, p["base_rev"].as_u64(), p.get("changes")) {
                    (Some(state), Some(base), Some(Value::Object(changes))) if base == self.rev => {
                        for (k, v) in changes {
                            state.insert(k.clone(), v.clone());
                        }
                        self.rev = p["rev"].as_u64().unwrap_or(self.rev + 1);
                    }
                    _ => self.rejected_diffs += 1,
                },
                _ => {}
            }
        }
        self.received.push(Received { t_ms, msg });
    }

    pub fn field(&self, name: &str) -> Option<&Value> {
        self.state.as_ref()?.get(name)
    }

    /// Content items currently rendered, as JSON objects.
    pub fn content(&self) -> Vec<&Value> {
        self.field("content")
            .and_then(Value::as_array)
            .map(|a| a.iter().collect())
            .unwrap_or_default()
    }

    pub fn mode(&self) -> Option<&str> {
        self.field("mode")?.as_str()
    }

    fn trace(&self) -> Vec<String> {
        self.received
            .iter()
            .map(|r| format!("{:>8} {}", r.t_ms, r.msg.to_text()))
            .collect()
    }
}

#[derive(Debug, Error)]
#[error("condition on `{display_id}` not met within {timeout_ms} ms\n{}", trace.join("\n"))]
pub struct EventuallyFailure {
    pub display_id: String,
    pub timeout_ms: u64,
    pub trace: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("hub rejected `{kind}`: {code}: {message}")]
    Rejected {
        kind: String,
        code: String,
        message: String,
    },
    #[error("unknown simulated display `{0}`")]
    UnknownDisplay(String),
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("timed out waiting for the hub")]
    Timeout,
}

fn rejection(kind: &str, replies: &[Message]) -> Option<SimError> {
    replies.iter().find(|m| m.kind == "error").map(|m| SimError::Rejected {
        kind: kind.to_string(),
        code: m.payload["code"].as_str().unwrap_or_default().to_string(),
        message: m.payload["message"].as_str().unwrap_or_default().to_string(),
    })
}

/// In-process room on virtual time.
pub struct SimRoom {
    hub: Hub,
    displays: BTreeMap<String, SimDisplay>,
    seq: u64,
    tick_ms: u64,
}

impl SimRoom {
    pub fn new(hub: Hub, tick_ms: u64) -> Self {
        SimRoom {
            hub,
            displays: BTreeMap::new(),
            seq: 0,
            tick_ms: tick_ms.max(1),
        }
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }

    pub fn now_ms(&self) -> u64 {
        self.hub.now_ms()
    }

    pub fn display(&self, id: &str) -> Option<&SimDisplay> {
        self.displays.get(id)
    }

    pub fn displays(&self) -> impl Iterator<Item = &SimDisplay> {
        self.displays.values()
    }

    fn route(&mut self, out: Vec<Addressed>, sender: Option<&str>) -> Vec<Message> {
        let t = self.hub.now_ms();
        let mut replies = Vec::new();
        for a in out {
            match a.to {
                To::Display(id) => {
                    if let Some(d) = self.displays.get_mut(&id) {
                        d.accept(t, a.msg);
                    }
                }
                To::All => {
                    for d in self.displays.values_mut() {
                        d.accept(t, a.msg.clone());
                    }
                }
                To::Sender => {
                    if let Some(d) = sender.and_then(|s| self.displays.get_mut(s)) {
                        d.accept(t, a.msg.clone());
                    }
                    replies.push(a.msg);
                }
            }
        }
        replies
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    /// Registers a display and delivers its snapshot.
    pub fn connect(&mut self, registration: DisplayRegistration) -> Result<(), SimError> {
        let id = registration.display_id.clone();
        let seq = self.next_seq();
        let payload = serde_json::to_value(&registration).expect("registrations serialize");
        let out = self.hub.handle(Message::new("register", seq, payload));
        let rejected = rejection(
            "register",
            &out.iter()
                .filter(|a| a.to == To::Sender)
                .map(|a| a.msg.clone())
                .collect::<Vec<_>>(),
        );
        if let Some(e) = rejected {
            self.route(out, None);
            return Err(e);
        }
        self.displays.insert(id.clone(), SimDisplay::new(registration));
        self.route(out, Some(&id));
        Ok(())
    }

    pub fn disconnect(&mut self, id: &str) {
        if self.displays.remove(id).is_some() {
            let out = self.hub.disconnect(id);
            self.route(out, None);
        }
    }

    /// Sends a message from outside any display; returns the replies.
    pub fn send(&mut self, kind: &str, payload: Value) -> Vec<Message> {
        let seq = self.next_seq();
        let out = self.hub.handle(Message::new(kind, seq, payload));
        self.route(out, None)
    }

    /// Sends a message from a connected display; replies reach it too.
    pub fn send_from(&mut self, id: &str, kind: &str, payload: Value) -> Result<Vec<Message>, SimError> {
        if !self.displays.contains_key(id) {
            return Err(SimError::UnknownDisplay(id.to_string()));
        }
        let seq = self.next_seq();
        let out = self.hub.handle(Message::new(kind, seq, payload));
        Ok(self.route(out, Some(id)))
    }

    /// Injects an event exactly as a device would send it.
    pub fn inject(&mut self, kind: &str, payload: Value) -> Vec<Message> {
        self.send(
            "wizard-inject",
            json!({ "message": { "type": kind, "payload": payload } }),
        )
    }

    pub fn tick(&mut self) {
        let out = self.hub.tick(self.tick_ms);
        self.route(out, None);
    }

    pub fn advance(&mut self, ms: u64) {
        let end = self.hub.now_ms() + ms;
        while self.hub.now_ms() < end {
            let dt = self.tick_ms.min(end - self.hub.now_ms());
            let out = self.hub.tick(dt);
            self.route(out, None);
        }
    }

    /// Ticks until `pred` holds on display `id`, for at most `timeout_ms`
    /// of virtual time. Returns the virtual time it took.
    pub fn assert_eventually(
        &mut self,
        id: &str,
        timeout_ms: u64,
        pred: impl Fn(&SimDisplay) -> bool,
    ) -> Result<u64, EventuallyFailure> {
        let start = self.hub.now_ms();
        loop {
            let elapsed = self.hub.now_ms() - start;
            match self.displays.get(id) {
                Some(d) if pred(d) => return Ok(elapsed),
                _ => {}
            }
            if elapsed >= timeout_ms {
                return Err(EventuallyFailure {
                    display_id: id.to_string(),
                    timeout_ms,
                    trace: self.displays.get(id).map(SimDisplay::trace).unwrap_or_default(),
                });
            }
            let dt = self.tick_ms.min(timeout_ms - elapsed);
            let out = self.hub.tick(dt);
            self.route(out, None);
        }
    }
}

/// A display connected to a running server.
pub struct SimClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pub display: SimDisplay,
    seq: u64,
    started: tokio::time::Instant,
}

impl SimClient {
    /// Connects, registers and waits for the first snapshot.
    pub async fn connect(addr: &str, registration: DisplayRegistration) -> Result<SimClient, SimError> {
        let (ws, _) = connect_async(format!("ws://{addr}"))
            .await
            .map_err(|e| SimError::Connection(e.to_string()))?;
        let mut client = SimClient {
            ws,
            display: SimDisplay::new(registration.clone()),
            seq: 0,
            started: tokio::time::Instant::now(),
        };
        client
            .send(
                "register",
                serde_json::to_value(&registration).expect("registrations serialize"),
            )
            .await?;
        let reply = client
            .wait_for(Duration::from_secs(5), |m| m.kind == "snapshot" || m.kind == "error")
            .await?;
        match rejection("register", std::slice::from_ref(&reply)) {
            Some(e) => Err(e),
            None => Ok(client),
        }
    }

    pub async fn send(&mut self, kind: &str, payload: Value) -> Result<u64, SimError> {
        self.seq += 1;
        let text = Message::new(kind, self.seq, payload).to_text();
        self.ws
            .send(WsMessage::text(text))
            .await
            .map_err(|e| SimError::Connection(e.to_string()))?;
        Ok(self.seq)
    }

    /// Next protocol message, applied to the local display state.
    pub async fn recv(&mut self) -> Result<Message, SimError> {
        loop {
            let frame = self
                .ws
                .next()
                .await
                .ok_or_else(|| SimError::Connection("closed by hub".into()))?
                .map_err(|e| SimError::Connection(e.to_string()))?;
            if let WsMessage::Text(text) = frame {
                let msg: Message =
                    serde_json::from_str(text.as_str()).map_err(|e| SimError::Connection(e.to_string()))?;
                let t_ms = self.started.elapsed().as_millis() as u64;
                self.display.accept(t_ms, msg.clone());
                return Ok(msg);
            }
        }
    }

    pub async fn wait_for(&mut self, timeout: Duration, pred: impl Fn(&Message) -> bool) -> Result<Message, SimError> {
        tokio::time::timeout(timeout, async {
            loop {
                let m = self.recv().await?;
                if pred(&m) {
                    return Ok(m);
                }
            }
        })
        .await
        .map_err(|_| SimError::Timeout)?
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}
