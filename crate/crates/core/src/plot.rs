//! Narrative map tracks: where each character is at a given media time,
//! which faction colour they wear, and which regional events are live.
//!
//! Plot data rides in the `plot` section of an ambient-track document:
//!
//! ```json
//! "plot": {
//!   "regions":    { "north": { "name": "The North", "x": 0.3, "y": 0.1 } },
//!   "factions":   [ { "id": "wolf", "name": "House of the Wolf", "color": 0 } ],
//!   "characters": { "ari": { "name": "Ari", "image": "img/ari.png",
//!                            "faction": "wolf", "start_region": "north",
//!                            "first_seen_ms": 0 } },
//!   "movements":  [ { "character": "ari", "from": "north", "to": "bay",
//!                     "t0_ms": 60000, "t1_ms": 120000 } ],
//!   "region_events": [ { "region": "bay", "kind": "volcano-steaming",
//!                        "start_ms": 100000, "end_ms": 200000 } ]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MediaTime, Window};
use crate::track::{parse_track_doc, Severity, TrackError, ValidationReport};

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("document has no plot section")]
    MissingPlot,
    #[error("malformed plot section: {0}")]
    Malformed(String),
    #[error("unknown character `{0}`")]
    UnknownCharacter(String),
    #[error("character `{0}` has no start region and has not moved yet")]
    NoStartRegion(String),
    #[error("{what} references unknown {kind} `{id}`")]
    DanglingReference {
        what: String,
        kind: &'static str,
        id: String,
    },
    #[error("movement of `{character}` at {t0}: t0 must be before t1 ({t1})")]
    EmptyMovement { character: String, t0: u64, t1: u64 },
    #[error("movements of `{0}` overlap in time")]
    OverlappingMovements(String),
    #[error("colour {color} used by more than one faction")]
    DuplicateColor { color: u32 },
    #[error("time {t} outside media range [0, {duration})")]
    OutOfRange { t: u64, duration: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactionDoc {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Faction {
    pub id: String,
    pub name: String,
    pub color: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Character {
    pub name: String,
    #[serde(default)]
    pub image: String,
    pub faction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_region: Option<String>,
    #[serde(default)]
    pub first_seen_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Movement {
    pub character: String,
    pub from: String,
    pub to: String,
    pub t0_ms: u64,
    pub t1_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionEvent {
    pub region: String,
    pub kind: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl RegionEvent {
    fn window(&self) -> Window {
        Window::new(self.start_ms, self.end_ms)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotDoc {
    #[serde(default)]
    pub regions: BTreeMap<String, Region>,
    #[serde(default)]
    pub factions: Vec<FactionDoc>,
    #[serde(default)]
    pub characters: BTreeMap<String, Character>,
    #[serde(default)]
    pub movements: Vec<Movement>,
    #[serde(default)]
    pub region_events: Vec<RegionEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotTrack {
    pub media_id: String,
    pub duration: MediaTime,
    pub regions: BTreeMap<String, Region>,
    pub factions: BTreeMap<String, Faction>,
    pub characters: BTreeMap<String, Character>,
    /// Per character, sorted by `t0_ms`.
    pub movements: BTreeMap<String, Vec<Movement>>,
    pub region_events: Vec<RegionEvent>,
}

/// Gives every faction without an explicit colour the smallest index not
/// yet taken, visiting factions in id order so the result only depends on
/// the document.
fn assign_colors(docs: &[FactionDoc]) -> Result<BTreeMap<String, Faction>, PlotError> {
    let mut taken = BTreeSet::new();
    for f in docs {
        if let Some(c) = f.color {
            if !taken.insert(c) {
                return Err(PlotError::DuplicateColor { color: c });
            }
        }
    }
    let mut sorted: Vec<&FactionDoc> = docs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = BTreeMap::new();
    let mut next = 0u32;
    for f in sorted {
        let color = match f.color {
            Some(c) => c,
            None => {
                while taken.contains(&next) {
                    next += 1;
                }
                taken.insert(next);
                next
            }
        };
        let faction = Faction {
            id: f.id.clone(),
            name: f.name.clone(),
            color,
        };
        if out.insert(f.id.clone(), faction).is_some() {
            return Err(PlotError::Malformed(format!("faction `{}` declared twice", f.id)));
        }
    }
    Ok(out)
}

impl PlotTrack {
    pub fn from_doc(media_id: String, duration: MediaTime, doc: PlotDoc) -> Result<Self, PlotError> {
        let factions = assign_colors(&doc.factions)?;
        let dangling = |what: String, kind: &'static str, id: &str| PlotError::DanglingReference {
            what,
            kind,
            id: id.to_string(),
        };
        for (id, c) in &doc.characters {
            if !factions.contains_key(&c.faction) {
                return Err(dangling(format!("character `{id}`"), "faction", &c.faction));
            }
            if let Some(r) = &c.start_region {
                if !doc.regions.contains_key(r) {
                    return Err(dangling(format!("character `{id}`"), "region", r));
                }
            }
        }
        let mut movements: BTreeMap<String, Vec<Movement>> = BTreeMap::new();
        for m in doc.movements {
            let what = format!("movement of `{}`", m.character);
            if !doc.characters.contains_key(&m.character) {
                return Err(dangling(what, "character", &m.character));
            }
            for r in [&m.from, &m.to] {
                if !doc.regions.contains_key(r) {
                    return Err(dangling(what.clone(), "region", r));
                }
            }
            if m.t0_ms >= m.t1_ms {
                return Err(PlotError::EmptyMovement {
                    character: m.character,
                    t0: m.t0_ms,
                    t1: m.t1_ms,
                });
            }
            movements.entry(m.character.clone()).or_default().push(m);
        }
        for (character, list) in movements.iter_mut() {
            list.sort_by_key(|m| (m.t0_ms, m.t1_ms));
            if list.windows(2).any(|w| w[1].t0_ms < w[0].t1_ms) {
                return Err(PlotError::OverlappingMovements(character.clone()));
            }
        }
        for e in &doc.region_events {
            if !doc.regions.contains_key(&e.region) {
                return Err(dangling(format!("region event `{}`", e.kind), "region", &e.region));
            }
            if e.start_ms >= e.end_ms {
                return Err(PlotError::Malformed(format!(
                    "region event `{}` at `{}` has start ≥ end",
                    e.kind, e.region
                )));
            }
        }
        Ok(PlotTrack {
            media_id,
            duration,
            regions: doc.regions,
            factions,
            characters: doc.characters,
            movements,
            region_events: doc.region_events,
        })
    }

    fn centroid(&self, region: &str) -> (f64, f64) {
        let r = &self.regions[region];
        (r.x, r.y)
    }

    fn check_time(&self, t: MediaTime) -> Result<(), PlotError> {
        if t >= self.duration {
            return Err(PlotError::OutOfRange {
                t: t.0,
                duration: self.duration.0,
            });
        }
        Ok(())
    }
}

/// Reads the plot section of a track document.
pub fn parse_plot(document: &[u8]) -> Result<PlotTrack, PlotError> {
    let doc = parse_track_doc(document)?;
    let plot = doc.plot.ok_or(PlotError::MissingPlot)?;
    let plot: PlotDoc = serde_json::from_value(plot).map_err(|e| PlotError::Malformed(e.to_string()))?;
    PlotTrack::from_doc(doc.media_id, MediaTime(doc.duration_ms), plot)
}

/// Soft checks: characters that start a movement somewhere other than where
/// they last stood would visibly teleport; centroids off the map.
pub fn validate_plot(plot: &PlotTrack) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (id, r) in &plot.regions {
        if !(0.0..=1.0).contains(&r.x) || !(0.0..=1.0).contains(&r.y) {
            report.push(Severity::Warning, id, "region centroid lies outside the map");
        }
    }
    for (id, c) in &plot.characters {
        let list = plot.movements.get(id).map(Vec::as_slice).unwrap_or(&[]);
        if c.start_region.is_none() && list.is_empty() {
            report.push(
                Severity::Warning,
                id,
                "character has neither a start region nor movements",
            );
        }
        let mut resting = c.start_region.clone();
        for m in list {
            if let Some(r) = &resting {
                if *r != m.from {
                    report.push(
                        Severity::Warning,
                        id,
                        format!("teleports from `{r}` to `{}` at {} ms", m.from, m.t0_ms),
                    );
                }
            }
            resting = Some(m.to.clone());
        }
    }
    report
}

pub fn character_position(plot: &PlotTrack, character: &str, t: MediaTime) -> Result<(f64, f64), PlotError> {
    plot.check_time(t)?;
    let c = plot
        .characters
        .get(character)
        .ok_or_else(|| PlotError::UnknownCharacter(character.to_string()))?;
    let t = t.0;
    let mut resting = c.start_region.as_deref();
    for m in plot.movements.get(character).map(Vec::as_slice).unwrap_or(&[]) {
        if t < m.t0_ms {
            break;
        }
        if t < m.t1_ms {
            let (ax, ay) = plot.centroid(&m.from);
            let (bx, by) = plot.centroid(&m.to);
            let s = (t - m.t0_ms) as f64 / (m.t1_ms - m.t0_ms) as f64;
            return Ok((ax + s * (bx - ax), ay + s * (by - ay)));
        }
        resting = Some(&m.to);
    }
    resting
        .map(|r| plot.centroid(r))
        .ok_or_else(|| PlotError::NoStartRegion(character.to_string()))
}

pub fn faction_color(plot: &PlotTrack, character: &str) -> Result<u32, PlotError> {
    let c = plot
        .characters
        .get(character)
        .ok_or_else(|| PlotError::UnknownCharacter(character.to_string()))?;
    Ok(plot.factions[&c.faction].color)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActiveEvent {
    pub region: String,
    pub kind: String,
}

pub fn active_region_events(plot: &PlotTrack, t: MediaTime) -> Vec<ActiveEvent> {
    plot.region_events
        .iter()
        .filter(|e| e.window().contains(t))
        .map(|e| ActiveEvent {
            region: e.region.clone(),
            kind: e.kind.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marker {
    pub character: String,
    pub name: String,
    pub image: String,
    pub x: f64,
    pub y: f64,
    pub color: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapFrame {
    pub t_ms: u64,
    pub markers: Vec<Marker>,
    pub events: Vec<ActiveEvent>,
}

/// The table map at `t`: a marker for every character already introduced
/// and placeable, in character-id order, plus the live region events.
pub fn map_frame(plot: &PlotTrack, t: MediaTime) -> Result<MapFrame, PlotError> {
    plot.check_time(t)?;
    let mut markers = Vec::new();
    for (id, c) in &plot.characters {
        if t.0 < c.first_seen_ms {
            continue;
        }
        let (x, y) = match character_position(plot, id, t) {
            Ok(p) => p,
            Err(PlotError::NoStartRegion(_)) => continue,
            Err(e) => return Err(e),
        };
        markers.push(Marker {
            character: id.clone(),
            name: c.name.clone(),
            image: c.image.clone(),
            x,
            y,
            color: faction_color(plot, id)?,
        });
    }
    Ok(MapFrame {
        t_ms: t.0,
        markers,
        events: active_region_events(plot, t),
    })
}
