//! Per-display render states. `compose` is a pure function of the session.

use std::collections::BTreeMap;

use roomcast_core::attention::SurfaceMode;
use roomcast_core::layout::{PanelId, Rect, SeatSide};
use roomcast_core::model::{Activation, AttentionLevel, ContentDescriptor, ContentKind, Cue, DisplayRole, MediaTime};
use roomcast_core::plot::{map_frame, MapFrame};
use roomcast_core::sports::{avatar_states, fatigue_index, heatmap, Avatar, Phase};
use roomcast_core::timeline::PlayState;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::polls::{Aggregates, PollState, Privacy};
use crate::registry::DisplayRegistration;
use crate::session::Session;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderItem {
    pub id: String,
    pub kind: ContentKind,
    pub attention: AttentionLevel,
    pub activation: Activation,
    pub priority: i32,
    pub start_ms: u64,
    /// Absent for open-ended items.
    pub end_ms: Option<u64>,
    pub payload: BTreeMap<String, Value>,
}

impl From<&Cue> for RenderItem {
    fn from(c: &Cue) -> Self {
        RenderItem {
            id: c.id.clone(),
            kind: c.content.kind,
            attention: c.attention,
            activation: c.activation,
            priority: c.priority,
            start_ms: c.window.start.0,
            end_ms: (c.window.end.0 != u64::MAX).then_some(c.window.end.0),
            payload: c.content.payload.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediaView {
    pub media_id: String,
    pub duration_ms: u64,
    pub state: PlayState,
    pub rate: [u64; 2],
    /// Play head at `anchor_ms`; clients extrapolate from there.
    pub position_ms: u64,
    pub anchor_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MyVote {
    pub option: String,
    pub privacy: Privacy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PollView {
    #[serde(flatten)]
    pub aggregates: Aggregates,
    pub options: Vec<String>,
    /// Only on the voter's own personal display.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub my_vote: Option<MyVote>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CastView {
    pub content: ContentDescriptor,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchPane {
    pub match_id: String,
    pub home: String,
    pub away: String,
    pub score: (u32, u32),
    pub minute: u64,
    pub second: u64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelView {
    pub id: PanelId,
    pub rect: Rect,
    pub rotation: u16,
    pub seat: SeatSide,
    pub hidden: bool,
    pub content: ContentDescriptor,
    /// Data resolved for analytic panels (heatmap, player card).
    pub view: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldView {
    pub match_id: String,
    pub avatars: Vec<Avatar>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableView {
    pub width: i64,
    pub height: i64,
    pub obstacles: Vec<Rect>,
    pub panels: Vec<PanelView>,
    pub fields: Vec<FieldView>,
    pub map: Option<MapFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonalView {
    pub holds_token: bool,
    /// 1-based place in the token queue.
    pub queue_position: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderState {
    pub display_id: String,
    pub role: DisplayRole,
    pub mode: SurfaceMode,
    pub brightness: f64,
    pub on_demand_active: bool,
    pub media: MediaView,
    pub content: Vec<RenderItem>,
    pub polls: Vec<PollView>,
    pub cast: Option<CastView>,
    pub matches: Vec<MatchPane>,
    pub table: Option<TableView>,
    pub personal: Option<PersonalView>,
}

impl RenderState {
    /// Top-level fields as a JSON object; diffs replace whole fields.
    pub fn to_fields(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("render state serializes") {
            Value::Object(m) => m,
            _ => unreachable!("render state is a struct"),
        }
    }
}

fn media_view(s: &Session) -> MediaView {
    MediaView {
        media_id: s.timeline.track().media_id.clone(),
        duration_ms: s.clock.duration.0,
        state: s.clock.state,
        rate: [*s.clock.rate.numer(), *s.clock.rate.denom()],
        position_ms: s.anchor.position_ms,
        anchor_ms: s.anchor.at_ms,
    }
}

fn poll_views(s: &Session, voter: Option<&str>) -> Vec<PollView> {
    s.polls
        .values()
        .filter(|p| p.state == PollState::Open)
        .map(|p| PollView {
            aggregates: p.aggregates(),
            options: p.options.clone(),
            my_vote: voter.and_then(|u| p.votes.get(u)).map(|v| MyVote {
                option: v.option.clone(),
                privacy: v.privacy,
            }),
        })
        .collect()
}

fn panel_view(s: &Session, content: &ContentDescriptor) -> Option<Value> {
    let view = content.payload.get("view")?.as_str()?;
    let match_id = content.payload.get("match_id")?.as_str()?;
    let player_id = content.payload.get("player_id")?.as_str()?;
    let player = s.sports.get(match_id)?.players.get(player_id)?;
    let cfg = &s.sports.config;
    match view {
        "heatmap" => {
            let h = heatmap(&player.samples, cfg.heatmap_rows, cfg.heatmap_cols);
            Some(json!({ "rows": h.rows, "cols": h.cols, "normalized": h.normalized }))
        }
        "player" => Some(json!({
            "name": player.name,
            "distance_m": player.cumulative_distance_m,
            "fatigue": fatigue_index(player, cfg.d_max_m),
            "goals": player.goals,
            "yellow": player.yellow,
            "red": player.red,
        })),
        _ => None,
    }
}

fn table_view(s: &Session) -> TableView {
    let panels = s
        .table
        .panels
        .values()
        .map(|p| {
            let content = s
                .panel_content
                .get(&p.id)
                .cloned()
                .unwrap_or_else(|| ContentDescriptor::new(ContentKind::Stat));
            PanelView {
                id: p.id,
                rect: p.rect,
                rotation: p.rotation,
                seat: p.owner,
                hidden: p.hidden,
                view: panel_view(s, &content),
                content,
            }
        })
        .collect();
    let fields = s
        .sports
        .matches()
        .map(|m| FieldView {
            match_id: m.match_id.clone(),
            avatars: avatar_states(m, s.sports.config.d_max_m),
        })
        .collect();
    let map = s.plot.as_ref().and_then(|plot| {
        if plot.duration.0 == 0 {
            return None;
        }
        let t = s.clock.position.0.min(plot.duration.0 - 1);
        map_frame(plot, MediaTime(t)).ok()
    });
    TableView {
        width: s.table.width,
        height: s.table.height,
        obstacles: s.table.obstacles.clone(),
        panels,
        fields,
        map,
    }
}

pub fn compose_one(s: &Session, reg: &DisplayRegistration) -> RenderState {
    let att = &s.attention[&reg.display_id];
    let content = s.surface_cues(reg).iter().map(RenderItem::from).collect();
    let polls = match reg.role {
        DisplayRole::SurroundWall => poll_views(s, None),
        DisplayRole::Personal => poll_views(s, reg.user.as_deref()),
        _ => Vec::new(),
    };
    let matches = if reg.role == DisplayRole::PrimaryTv {
        s.sports
            .matches()
            .map(|m| {
                let (minute, second) = m.minute_second();
                MatchPane {
                    match_id: m.match_id.clone(),
                    home: m.home.name.clone(),
                    away: m.away.name.clone(),
                    score: m.score,
                    minute,
                    second,
                    phase: m.phase,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let personal = reg.user.as_deref().map(|u| PersonalView {
        holds_token: s.token.holds(u),
        queue_position: s.token.queue.iter().position(|q| q == u).map(|i| i + 1),
    });
    RenderState {
        display_id: reg.display_id.clone(),
        role: reg.role,
        mode: att.mode,
        brightness: att.brightness,
        on_demand_active: att.on_demand_active,
        media: media_view(s),
        content,
        polls,
        cast: s.casts.get(&reg.role).map(|c| CastView {
            content: c.content.clone(),
            at_ms: c.at_ms,
        }),
        matches,
        table: (reg.role == DisplayRole::AugmenTable).then(|| table_view(s)),
        personal,
    }
}

pub fn compose(s: &Session) -> BTreeMap<String, RenderState> {
    s.registry
        .iter()
        .map(|reg| (reg.display_id.clone(), compose_one(s, reg)))
        .collect()
}
