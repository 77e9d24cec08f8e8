//! Scripted Wizard-of-Oz scenarios.
//!
//! A scenario declares the room (displays, content, media, matches), then
//! lists steps. Each step has one trigger (a virtual time, a pattern over
//! logged messages, or a facilitator label) and a list of actions, each of
//! which reaches the hub as a `wizard-inject` message exactly like a
//! device would send it. Every message in and out is recorded in an
//! NDJSON event log with its virtual timestamp.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use roomcast_core::attention::{InputKind, Intent};
use roomcast_core::model::{AttentionLevel, ContentDescriptor, DisplayRole};
use roomcast_core::plot::{parse_plot, PlotError, PlotTrack};
use roomcast_core::sports::{FeedEvent, MatchDescriptor};
use roomcast_core::track::{self, AmbientTrack, TrackDoc, TrackError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, EngineConfig};
use crate::hub::Hub;
use crate::prefs::Preferences;
use crate::protocol::{Addressed, Message, To};
use crate::registry::{DisplayRegistration, Registry};
use crate::session::Session;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("display `{0}` is not declared")]
    UndeclaredDisplay(String),
    #[error("no display with role {} is declared", .0.as_str())]
    UndeclaredRole(DisplayRole),
    #[error("content `{0}` is not declared")]
    UndeclaredContent(String),
    #[error("facilitator label `{0}` does not match any manual step")]
    UnknownLabel(String),
    #[error("step {index}: at_ms {at_ms} is earlier than the previous timed step ({previous})")]
    UnorderedTrigger { index: usize, at_ms: u64, previous: u64 },
    #[error("facilitator cues must be in time order")]
    UnorderedFacilitator,
    #[error("invalid display list: {0}")]
    Displays(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Plot(#[from] PlotError),
}

/// A file path (relative to the scenario file) or an inline document.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Path(String),
    Inline(Value),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    In,
    Out,
}

/// Matches a logged message: direction, type, recipient, and a payload
/// that must contain the pattern payload as a sub-document.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pattern {
    #[serde(default)]
    pub dir: Option<Dir>,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub to: Option<String>,
    #[serde(default)]
    pub payload: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    AtMs(u64),
    On(Pattern),
    Manual(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShowAction {
    pub role: DisplayRole,
    pub content: String,
    #[serde(default)]
    pub attention: Option<AttentionLevel>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputAction {
    pub display_id: String,
    pub input: InputKind,
    #[serde(default)]
    pub intent: Option<Intent>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMessage {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Show(ShowAction),
    Hide(ShowAction),
    InputEvent(InputAction),
    EnvironmentChange { actuator: String, value: Value },
    PresenceChange { user: String, present: bool },
    FeedEvent(FeedEvent),
    Message(RawMessage),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub trigger: Trigger,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacilitatorCue {
    pub at_ms: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    #[serde(default)]
    config: Option<Source>,
    #[serde(default)]
    displays: Vec<DisplayRegistration>,
    #[serde(default)]
    content: BTreeMap<String, ContentDescriptor>,
    #[serde(default)]
    track: Option<Source>,
    #[serde(default)]
    plot: Option<Source>,
    #[serde(default)]
    prefs: Option<Preferences>,
    #[serde(default)]
    matches: Vec<Source>,
    #[serde(default)]
    tick_ms: Option<u64>,
    #[serde(default)]
    end_ms: Option<u64>,
    #[serde(default)]
    facilitator: Vec<FacilitatorCue>,
    #[serde(default)]
    steps: Vec<Step>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: EngineConfig,
    pub displays: Vec<DisplayRegistration>,
    pub content: BTreeMap<String, ContentDescriptor>,
    pub track: AmbientTrack,
    pub plot: Option<PlotTrack>,
    pub prefs: Preferences,
    pub matches: Vec<MatchDescriptor>,
    pub tick_ms: u64,
    pub end_ms: u64,
    pub facilitator: Vec<FacilitatorCue>,
    pub steps: Vec<Step>,
}

fn read_source(src: &Source, base: Option<&Path>) -> Result<Value, ScenarioError> {
    match src {
        Source::Inline(v) => Ok(v.clone()),
        Source::Path(p) => {
            let path: PathBuf = base.map(|b| b.join(p)).unwrap_or_else(|| PathBuf::from(p));
            let text = std::fs::read_to_string(&path).map_err(|e| ScenarioError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            serde_json::from_str(&text).map_err(|e| ScenarioError::Malformed(format!("{}: {e}", path.display())))
        }
    }
}

fn malformed(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Malformed(e.to_string())
}

/// Parses and validates a scenario. Relative paths resolve against `base`.
pub fn load_scenario(document: &[u8], base: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let text = std::str::from_utf8(document).map_err(malformed)?;
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(malformed)?;

    let config = match &doc.config {
        Some(src) => EngineConfig::from_json(&read_source(src, base)?.to_string())?,
        None => EngineConfig::default(),
    };

    let track_value = doc.track.as_ref().map(|s| read_source(s, base)).transpose()?;
    let track = match &track_value {
        Some(v) => {
            let d: TrackDoc = serde_json::from_value(v.clone()).map_err(malformed)?;
            track::track_from_doc(d)?
        }
        None => Session::empty_track(),
    };
    let plot_value = match &doc.plot {
        Some(src) => Some(read_source(src, base)?),
        None => track_value.filter(|v| v.get("plot").is_some_and(|p| !p.is_null())),
    };
    let plot = plot_value.map(|v| parse_plot(v.to_string().as_bytes())).transpose()?;
    let matches = doc
        .matches
        .iter()
        .map(|s| read_source(s, base).and_then(|v| serde_json::from_value(v).map_err(malformed)))
        .collect::<Result<Vec<MatchDescriptor>, _>>()?;

    let mut registry = Registry::default();
    for d in &doc.displays {
        registry
            .register(d.clone())
            .map_err(|e| ScenarioError::Displays(e.to_string()))?;
    }
    let roles: BTreeSet<DisplayRole> = doc.displays.iter().map(|d| d.role).collect();

    let manual: BTreeSet<&str> = doc
        .steps
        .iter()
        .filter_map(|s| match &s.trigger {
            Trigger::Manual(l) => Some(l.as_str()),
            _ => None,
        })
        .collect();
    let mut last_at = 0;
    for (index, step) in doc.steps.iter().enumerate() {
        if let Trigger::AtMs(at_ms) = step.trigger {
            if at_ms < last_at {
                return Err(ScenarioError::UnorderedTrigger {
                    index,
                    at_ms,
                    previous: last_at,
                });
            }
            last_at = at_ms;
        }
        for action in &step.actions {
            match action {
                Action::Show(s) | Action::Hide(s) => {
                    if !roles.contains(&s.role) {
                        return Err(ScenarioError::UndeclaredRole(s.role));
                    }
                    if !doc.content.contains_key(&s.content) {
                        return Err(ScenarioError::UndeclaredContent(s.content.clone()));
                    }
                }
                Action::InputEvent(i) if registry.get(&i.display_id).is_none() => {
                    return Err(ScenarioError::UndeclaredDisplay(i.display_id.clone()));
                }
                _ => {}
            }
        }
    }
    if doc.facilitator.windows(2).any(|w| w[1].at_ms < w[0].at_ms) {
        return Err(ScenarioError::UnorderedFacilitator);
    }
    if let Some(f) = doc.facilitator.iter().find(|f| !manual.contains(f.label.as_str())) {
        return Err(ScenarioError::UnknownLabel(f.label.clone()));
    }

    let latest = doc
        .steps
        .iter()
        .filter_map(|s| match s.trigger {
            Trigger::AtMs(t) => Some(t),
            _ => None,
        })
        .chain(doc.facilitator.iter().map(|f| f.at_ms))
        .max()
        .unwrap_or(0);
    let tick_ms = doc.tick_ms.unwrap_or(config.tick_ms);
    if tick_ms == 0 {
        return Err(ScenarioError::Malformed("tick_ms must be positive".into()));
    }
    Ok(Scenario {
        name: doc.name,
        displays: doc.displays,
        content: doc.content,
        track,
        plot,
        prefs: doc.prefs.unwrap_or_default(),
        matches,
        tick_ms,
        end_ms: doc.end_ms.unwrap_or(latest).max(latest),
        facilitator: doc.facilitator,
        steps: doc.steps,
        config,
    })
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let bytes = std::fs::read(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_scenario(&bytes, path.parent())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLine {
    pub t_ms: u64,
    pub dir: Dir,
    pub to: String,
    pub msg: Message,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventLog {
    pub lines: Vec<LogLine>,
}

impl EventLog {
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&serde_json::to_string(l).expect("log lines serialize"));
            out.push('\n');
        }
        out
    }
}

/// `payload` contains `pattern`: objects key-wise, arrays when every pattern
/// element is contained in some payload element, scalars by equality.
pub fn contains(payload: &Value, pattern: &Value) -> bool {
    match (payload, pattern) {
        (Value::Object(p), Value::Object(q)) => q.iter().all(|(k, v)| p.get(k).is_some_and(|pv| contains(pv, v))),
        (Value::Array(p), Value::Array(q)) => q.iter().all(|v| p.iter().any(|pv| contains(pv, v))),
        _ => payload == pattern,
    }
}

impl Pattern {
    pub fn matches(&self, line: &LogLine) -> bool {
        self.dir.as_ref().is_none_or(|d| *d == line.dir)
            && self.kind == line.msg.kind
            && self.to.as_ref().is_none_or(|t| *t == line.to)
            && self.payload.as_ref().is_none_or(|p| contains(&line.msg.payload, p))
    }
}

fn action_message(scenario: &Scenario, action: &Action) -> (String, Value) {
    match action {
        Action::Show(s) => (
            "show".into(),
            json!({ "role": s.role, "id": s.content, "content": scenario.content[&s.content], "attention": s.attention }),
        ),
        Action::Hide(s) => (
            "show".into(),
            json!({ "role": s.role, "id": s.content, "content": null }),
        ),
        Action::InputEvent(i) => (
            "input-event".into(),
            json!({ "display_id": i.display_id, "input": i.input, "intent": i.intent }),
        ),
        Action::EnvironmentChange { actuator, value } => (
            "environment-change".into(),
            json!({ "actuator": actuator, "value": value }),
        ),
        Action::PresenceChange { user, present } => {
            ("presence-change".into(), json!({ "user": user, "present": present }))
        }
        Action::FeedEvent(e) => ("feed".into(), json!({ "event": e })),
        Action::Message(m) => (m.kind.clone(), m.payload.clone()),
    }
}

/// Wraps a device-shaped message for injection by the facilitator.
pub fn inject_message(seq: u64, kind: &str, payload: Value) -> Message {
    Message::new(
        "wizard-inject",
        seq,
        json!({ "message": { "type": kind, "payload": payload } }),
    )
}

/// Injects one event into a live hub exactly as a device would send it.
pub fn inject(hub: &mut Hub, seq: u64, kind: &str, payload: Value) -> Vec<Addressed> {
    hub.handle(inject_message(seq, kind, payload))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunMode {
    Virtual,
    /// Sleeps so that virtual time runs `speed` times faster than wall time.
    Realtime {
        speed: f64,
    },
}

/// Drives one scenario against a fresh hub.
pub struct Runner<'a> {
    scenario: &'a Scenario,
    hub: Hub,
    log: EventLog,
    seq: u64,
    fired: Vec<bool>,
    scanned: usize,
    next_facilitator: usize,
}

impl<'a> Runner<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let session = Session::new(
            scenario.config.clone(),
            scenario.track.clone(),
            scenario.plot.clone(),
            scenario.prefs.clone(),
        );
        let mut r = Runner {
            scenario,
            hub: Hub::new(session),
            log: EventLog::default(),
            seq: 0,
            fired: vec![false; scenario.steps.len()],
            scanned: 0,
            next_facilitator: 0,
        };
        for d in &scenario.displays {
            r.send("register", serde_json::to_value(d).expect("registrations serialize"));
        }
        for m in &scenario.matches {
            r.send("match-op", json!({ "op": "add", "descriptor": m }));
        }
        r
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn now_ms(&self) -> u64 {
        self.hub.now_ms()
    }

    fn record(&mut self, out: Vec<Addressed>) {
        let t_ms = self.hub.now_ms();
        for a in out {
            let to = match a.to {
                To::Sender => "wizard".to_string(),
                other => other.label().to_string(),
            };
            self.log.lines.push(LogLine {
                t_ms,
                dir: Dir::Out,
                to,
                msg: a.msg,
            });
        }
    }

    fn send_raw(&mut self, msg: Message) {
        self.log.lines.push(LogLine {
            t_ms: self.hub.now_ms(),
            dir: Dir::In,
            to: "hub".into(),
            msg: msg.clone(),
        });
        let out = self.hub.handle(msg);
        self.record(out);
    }

    fn send(&mut self, kind: &str, payload: Value) {
        self.seq += 1;
        self.send_raw(Message::new(kind, self.seq, payload));
        self.scan_patterns();
    }

    fn inject(&mut self, kind: &str, payload: Value) {
        self.seq += 1;
        self.send_raw(inject_message(self.seq, kind, payload));
    }

    fn fire(&mut self, index: usize) {
        if self.fired[index] {
            return;
        }
        self.fired[index] = true;
        for action in &self.scenario.steps[index].actions {
            let (kind, payload) = action_message(self.scenario, action);
            self.inject(&kind, payload);
        }
    }

    /// Fires pattern steps against every log line not yet examined,
    /// including lines their own actions produce.
    fn scan_patterns(&mut self) {
        while self.scanned < self.log.lines.len() {
            let line = self.log.lines[self.scanned].clone();
            self.scanned += 1;
            for i in 0..self.scenario.steps.len() {
                if let Trigger::On(p) = &self.scenario.steps[i].trigger {
                    if !self.fired[i] && p.matches(&line) {
                        self.fire(i);
                    }
                }
            }
        }
    }

    /// Fires every manual step carrying `label`. Returns whether any fired.
    pub fn manual(&mut self, label: &str) -> bool {
        let hits: Vec<usize> = (0..self.scenario.steps.len())
            .filter(|&i| !self.fired[i] && matches!(&self.scenario.steps[i].trigger, Trigger::Manual(l) if l == label))
            .collect();
        for &i in &hits {
            self.fire(i);
        }
        self.scan_patterns();
        !hits.is_empty()
    }

    fn fire_due(&mut self) {
        let now = self.hub.now_ms();
        for i in 0..self.scenario.steps.len() {
            if matches!(self.scenario.steps[i].trigger, Trigger::AtMs(t) if t <= now) {
                self.fire(i);
                self.scan_patterns();
            }
        }
        while let Some(f) = self.scenario.facilitator.get(self.next_facilitator) {
            if f.at_ms > now {
                break;
            }
            self.next_facilitator += 1;
            let label = f.label.clone();
            self.manual(&label);
        }
        self.scan_patterns();
    }

    /// Fires what is due, then advances one tick. Returns `false` once the
    /// scenario's end time has been reached.
    pub fn step(&mut self) -> bool {
        self.fire_due();
        let now = self.hub.now_ms();
        if now >= self.scenario.end_ms {
            return false;
        }
        let dt = self.scenario.tick_ms.min(self.scenario.end_ms - now);
        let out = self.hub.tick(dt);
        self.record(out);
        self.scan_patterns();
        true
    }

    pub fn finish(mut self, mode: RunMode) -> EventLog {
        loop {
            let before = self.hub.now_ms();
            if !self.step() {
                break;
            }
            if let RunMode::Realtime { speed } = mode {
                let dt = (self.hub.now_ms() - before) as f64 / speed.max(f64::MIN_POSITIVE);
                std::thread::sleep(Duration::from_secs_f64(dt / 1000.0));
            }
        }
        self.log
    }
}

/// Runs a scenario to its end time and returns the event log.
pub fn run(scenario: &Scenario, mode: RunMode) -> EventLog {
    Runner::new(scenario).finish(mode)
}
