//! Shared domain vocabulary: media time, display roles, attention levels,
//! content descriptors and cues.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Milliseconds from media start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MediaTime(pub u64);

impl MediaTime {
    pub const ZERO: MediaTime = MediaTime(0);

    pub fn from_millis(ms: u64) -> Self {
        MediaTime(ms)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }
}

impl fmt::Display for MediaTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisplayRole {
    PrimaryTv,
    SurroundWall,
    AugmenTable,
    Personal,
}

impl DisplayRole {
    pub const ALL: [DisplayRole; 4] = [
        DisplayRole::PrimaryTv,
        DisplayRole::SurroundWall,
        DisplayRole::AugmenTable,
        DisplayRole::Personal,
    ];

    /// Roles that exist at most once per room and are seen by everybody.
    pub fn is_shared(self) -> bool {
        !matches!(self, DisplayRole::Personal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DisplayRole::PrimaryTv => "primary-tv",
            DisplayRole::SurroundWall => "surround-wall",
            DisplayRole::AugmenTable => "augmen-table",
            DisplayRole::Personal => "personal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        DisplayRole::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for DisplayRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How strongly a piece of content should claim the viewer's gaze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionLevel {
    Ambient,
    Glance,
    Focus,
}

impl AttentionLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            AttentionLevel::Ambient => "ambient",
            AttentionLevel::Glance => "glance",
            AttentionLevel::Focus => "focus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ambient" => Some(AttentionLevel::Ambient),
            "glance" => Some(AttentionLevel::Glance),
            "focus" => Some(AttentionLevel::Focus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Auto,
    OnDemand,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Auto => "auto",
            Activation::OnDemand => "on-demand",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Activation::Auto),
            "on-demand" => Some(Activation::OnDemand),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContentKind {
    Soundtrack,
    Actor,
    Location,
    Stat,
    ReplayVideo,
    Poll,
    News,
    Lineup,
    EnvironmentAction,
    SocialFeed,
    Mockup,
}

impl ContentKind {
    pub const ALL: [ContentKind; 11] = [
        ContentKind::Soundtrack,
        ContentKind::Actor,
        ContentKind::Location,
        ContentKind::Stat,
        ContentKind::ReplayVideo,
        ContentKind::Poll,
        ContentKind::News,
        ContentKind::Lineup,
        ContentKind::EnvironmentAction,
        ContentKind::SocialFeed,
        ContentKind::Mockup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContentKind::Soundtrack => "soundtrack",
            ContentKind::Actor => "actor",
            ContentKind::Location => "location",
            ContentKind::Stat => "stat",
            ContentKind::ReplayVideo => "replay-video",
            ContentKind::Poll => "poll",
            ContentKind::News => "news",
            ContentKind::Lineup => "lineup",
            ContentKind::EnvironmentAction => "environment-action",
            ContentKind::SocialFeed => "social-feed",
            ContentKind::Mockup => "mockup",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ContentKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ContentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Payload = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentDescriptor {
    pub kind: ContentKind,
    #[serde(default)]
    pub payload: Payload,
}

impl ContentDescriptor {
    pub fn new(kind: ContentKind) -> Self {
        ContentDescriptor {
            kind,
            payload: Payload::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.payload.insert(key.to_string(), value.into());
        self
    }

    pub fn poll_options(&self) -> Option<Vec<String>> {
        let options = self.payload.get("options")?.as_array()?;
        options.iter().map(|o| o.as_str().map(str::to_string)).collect()
    }

    /// Checks the per-kind payload rules. Returns a human readable reason on
    /// failure.
    pub fn check_payload(&self) -> Result<(), String> {
        match self.kind {
            ContentKind::Poll => match self.poll_options() {
                None => Err("poll payload needs an `options` array of strings".into()),
                Some(opts) if opts.len() < 2 => Err(format!("poll needs at least 2 options, got {}", opts.len())),
                Some(opts) => {
                    let mut seen = std::collections::BTreeSet::new();
                    match opts.iter().find(|o| !seen.insert(o.as_str())) {
                        Some(dup) => Err(format!("poll option `{dup}` listed twice")),
                        None => Ok(()),
                    }
                }
            },
            ContentKind::EnvironmentAction => {
                let actuator = self.payload.get("actuator").and_then(Value::as_str);
                match (actuator, self.payload.get("value")) {
                    (Some(_), Some(_)) => Ok(()),
                    (None, _) => Err("environment-action payload needs a string `actuator`".into()),
                    (_, None) => Err("environment-action payload needs a `value`".into()),
                }
            }
            _ => Ok(()),
        }
    }
}

/// Half-open interval `[start, end)` of media time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: MediaTime,
    pub end: MediaTime,
}

impl Window {
    pub fn new(start: u64, end: u64) -> Self {
        Window {
            start: MediaTime(start),
            end: MediaTime(end),
        }
    }

    pub fn contains(&self, t: MediaTime) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub id: String,
    pub window: Window,
    pub target: DisplayRole,
    pub content: ContentDescriptor,
    pub attention: AttentionLevel,
    pub activation: Activation,
    pub priority: i32,
}

impl Cue {
    pub fn is_environment_action(&self) -> bool {
        self.content.kind == ContentKind::EnvironmentAction
    }

    /// Canonical track order: start time, then id.
    pub fn canonical_cmp(&self, other: &Cue) -> Ordering {
        self.window
            .start
            .cmp(&other.window.start)
            .then_with(|| self.id.cmp(&other.id))
    }

    /// Render order on a display: priority desc, attention desc, start asc, id.
    pub fn render_cmp(&self, other: &Cue) -> Ordering {
        other
            .priority
            .cmp(&self.priority)
            .then_with(|| other.attention.cmp(&self.attention))
            .then_with(|| self.window.start.cmp(&other.window.start))
            .then_with(|| self.id.cmp(&other.id))
    }
}
