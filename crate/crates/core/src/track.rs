//! Ambient-track documents: the sidecar file of timeline-keyed cues that
//! rides alongside a movie or episode the way an external subtitle file does.
//!
//! Document layout (UTF-8 JSON):
//!
//! ```json
//! { "media_id": "ep-01", "duration_ms": 3600000,
//!   "cues": [ { "id": "c1", "start_ms": 10000, "end_ms": 20000,
//!               "target": "surround-wall", "kind": "actor",
//!               "attention": "glance", "activation": "on-demand",
//!               "priority": 0, "payload": { "name": "..." } } ] }
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Activation, AttentionLevel, ContentDescriptor, ContentKind, Cue, DisplayRole, MediaTime, Payload, Window,
};

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("malformed track document: {0}")]
    Malformed(String),
    #[error("cue `{id}`: start ≥ end ({start} ≥ {end})")]
    EmptyWindow { id: String, start: u64, end: u64 },
    #[error("duplicate cue id `{0}`")]
    DuplicateId(String),
    #[error("cue `{id}` ends at {end} past track duration {duration}")]
    ExceedsDuration { id: String, end: u64, duration: u64 },
    #[error("cue `{id}`: unknown kind `{kind}`")]
    UnknownKind { id: String, kind: String },
    #[error("cue `{id}`: unknown {field} `{value}`")]
    UnknownValue {
        id: String,
        field: &'static str,
        value: String,
    },
    #[error("cue `{id}`: {reason}")]
    MissingPayload { id: String, reason: String },
    #[error("cue `{id}`: environment actions must use auto activation")]
    OnDemandAction { id: String },
    #[error("time {t} outside track range [0, {duration})")]
    OutOfRange { t: u64, duration: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientTrack {
    pub media_id: String,
    pub duration: MediaTime,
    pub cues: Vec<Cue>,
}

/// Wire form of a cue, field names exactly as they appear in track files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueDoc {
    pub id: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub target: String,
    pub kind: String,
    pub attention: String,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<i32>,
    #[serde(default)]
    pub payload: Payload,
}

/// Wire form of a track. `plot` is carried through untouched so that plot
/// sidecars can share the envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackDoc {
    pub media_id: String,
    pub duration_ms: u64,
    #[serde(default)]
    pub cues: Vec<CueDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<serde_json::Value>,
}

impl AmbientTrack {
    /// Builds a track from already-typed cues, enforcing every invariant and
    /// putting the cues into canonical order.
    pub fn new(media_id: impl Into<String>, duration: MediaTime, mut cues: Vec<Cue>) -> Result<Self, TrackError> {
        let mut ids = BTreeSet::new();
        for cue in &cues {
            check_cue(cue, duration)?;
            if !ids.insert(cue.id.as_str()) {
                return Err(TrackError::DuplicateId(cue.id.clone()));
            }
        }
        canonicalize(&mut cues);
        Ok(AmbientTrack {
            media_id: media_id.into(),
            duration,
            cues,
        })
    }

    pub fn cue(&self, id: &str) -> Option<&Cue> {
        self.cues.iter().find(|c| c.id == id)
    }

    pub fn to_doc(&self) -> TrackDoc {
        TrackDoc {
            media_id: self.media_id.clone(),
            duration_ms: self.duration.0,
            cues: self.cues.iter().map(cue_to_doc).collect(),
            plot: None,
        }
    }
}

/// Sorts cues by start time, ties broken by id.
pub fn canonicalize(cues: &mut [Cue]) {
    cues.sort_by(Cue::canonical_cmp);
}

fn check_cue(cue: &Cue, duration: MediaTime) -> Result<(), TrackError> {
    if cue.window.is_empty() {
        return Err(TrackError::EmptyWindow {
            id: cue.id.clone(),
            start: cue.window.start.0,
            end: cue.window.end.0,
        });
    }
    if cue.window.end > duration {
        return Err(TrackError::ExceedsDuration {
            id: cue.id.clone(),
            end: cue.window.end.0,
            duration: duration.0,
        });
    }
    cue.content
        .check_payload()
        .map_err(|reason| TrackError::MissingPayload {
            id: cue.id.clone(),
            reason,
        })?;
    if cue.is_environment_action() && cue.activation != Activation::Auto {
        return Err(TrackError::OnDemandAction { id: cue.id.clone() });
    }
    Ok(())
}

pub fn cue_from_doc(doc: CueDoc) -> Result<Cue, TrackError> {
    let unknown = |field: &'static str, value: &str| TrackError::UnknownValue {
        id: doc.id.clone(),
        field,
        value: value.to_string(),
    };
    let kind = ContentKind::parse(&doc.kind).ok_or_else(|| TrackError::UnknownKind {
        id: doc.id.clone(),
        kind: doc.kind.clone(),
    })?;
    let target = DisplayRole::parse(&doc.target).ok_or_else(|| unknown("target", &doc.target))?;
    let attention = AttentionLevel::parse(&doc.attention).ok_or_else(|| unknown("attention", &doc.attention))?;
    let activation = Activation::parse(&doc.activation).ok_or_else(|| unknown("activation", &doc.activation))?;
    Ok(Cue {
        window: Window::new(doc.start_ms, doc.end_ms),
        target,
        content: ContentDescriptor {
            kind,
            payload: doc.payload,
        },
        attention,
        activation,
        priority: doc.priority.unwrap_or(0),
        id: doc.id,
    })
}

pub fn cue_to_doc(cue: &Cue) -> CueDoc {
    CueDoc {
        id: cue.id.clone(),
        start_ms: cue.window.start.0,
        end_ms: cue.window.end.0,
        target: cue.target.as_str().to_string(),
        kind: cue.content.kind.as_str().to_string(),
        attention: cue.attention.as_str().to_string(),
        activation: cue.activation.as_str().to_string(),
        priority: (cue.priority != 0).then_some(cue.priority),
        payload: cue.content.payload.clone(),
    }
}

pub fn track_from_doc(doc: TrackDoc) -> Result<AmbientTrack, TrackError> {
    let cues = doc.cues.into_iter().map(cue_from_doc).collect::<Result<Vec<_>, _>>()?;
    AmbientTrack::new(doc.media_id, MediaTime(doc.duration_ms), cues)
}

pub fn parse_track_doc(document: &[u8]) -> Result<TrackDoc, TrackError> {
    let text = std::str::from_utf8(document).map_err(|e| TrackError::Malformed(e.to_string()))?;
    serde_json::from_str(text).map_err(|e| TrackError::Malformed(e.to_string()))
}

/// Parses a track document into its canonical form.
pub fn parse_track(document: &[u8]) -> Result<AmbientTrack, TrackError> {
    track_from_doc(parse_track_doc(document)?)
}

/// Serializes a track as a pretty-printed document that [`parse_track`]
/// reads back to an equal value.
pub fn serialize_track(track: &AmbientTrack) -> String {
    serde_json::to_string_pretty(&track.to_doc()).expect("track documents always serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub cue_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn push(&mut self, severity: Severity, cue_id: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            severity,
            cue_id: cue_id.to_string(),
            message: message.into(),
        });
    }
}

/// Checks every track invariant and per-kind payload rule without failing
/// fast. Overlapping focus cues on the same display are reported as warnings
/// since both would compete for the viewer's full attention.
pub fn validate_track(track: &AmbientTrack) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = BTreeSet::new();
    for cue in &track.cues {
        if let Err(e) = check_cue(cue, track.duration) {
            report.push(Severity::Error, &cue.id, e.to_string());
        }
        if !ids.insert(cue.id.as_str()) {
            report.push(Severity::Error, &cue.id, "duplicate cue id");
        }
    }
    if track.cues.windows(2).any(|w| w[0].canonical_cmp(&w[1]).is_gt()) {
        report.push(Severity::Error, "", "cues are not in canonical order");
    }
    for (i, a) in track.cues.iter().enumerate() {
        for b in &track.cues[i + 1..] {
            if a.attention == AttentionLevel::Focus
                && b.attention == AttentionLevel::Focus
                && a.target == b.target
                && a.window.overlaps(&b.window)
            {
                report.push(
                    Severity::Warning,
                    &b.id,
                    format!("focus cue overlaps focus cue `{}` on {}", a.id, a.target),
                );
            }
        }
    }
    report
}

/// All cues whose window contains `t`, by linear scan in track order.
pub fn cues_at(track: &AmbientTrack, t: MediaTime) -> Result<Vec<&Cue>, TrackError> {
    if t >= track.duration {
        return Err(TrackError::OutOfRange {
            t: t.0,
            duration: track.duration.0,
        });
    }
    Ok(track.cues.iter().filter(|c| c.window.contains(t)).collect())
}
