//! Live football analytics: match registry, feed ingestion, fatigue,
//! heatmaps and key-moment cue injection for the wall.

mod feed;
mod heatmap;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::model::{Activation, AttentionLevel, ContentDescriptor, ContentKind, Cue, DisplayRole, Window};

pub use feed::{parse_feed, serialize_feed, FeedParseError};
#[cfg(feature = "parallel")]
pub use heatmap::heatmap_parallel;
pub use heatmap::{bin, heatmap, heatmap_sequential, Heatmap};

pub const MAX_MATCHES: usize = 4;
pub const MAX_ACTIVE_PLAYERS: usize = 22;

#[derive(Debug, Error, PartialEq)]
pub enum SportsError {
    #[error("already showing {MAX_MATCHES} matches")]
    CapacityExceeded,
    #[error("match `{0}` is already registered")]
    DuplicateMatch(String),
    #[error("unknown match `{0}`")]
    UnknownMatch(String),
    #[error("unknown player `{player}` in match `{match_id}`")]
    UnknownPlayer { match_id: String, player: String },
    #[error("team `{team}` is not playing in match `{match_id}`")]
    UnknownTeam { match_id: String, team: String },
    #[error("match `{match_id}`: event at {t_ms} ms precedes previous event at {last_ms} ms")]
    TimeRegression { match_id: String, t_ms: u64, last_ms: u64 },
    #[error("position ({x}, {y}) outside the unit square")]
    BadCoordinate { x: f64, y: f64 },
    #[error("invalid match descriptor: {0}")]
    BadDescriptor(String),
    #[error("VAR poll: {0}")]
    BadPoll(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldSpec {
    pub length_m: f64,
    pub width_m: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec {
            length_m: 105.0,
            width_m: 68.0,
        }
    }
}

impl FieldSpec {
    /// Metres between two normalized positions.
    pub fn distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let dx = (b.0 - a.0) * self.length_m;
        let dy = (b.1 - a.1) * self.width_m;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SportsConfig {
    pub field: FieldSpec,
    pub d_max_m: f64,
    pub heatmap_rows: usize,
    pub heatmap_cols: usize,
    pub last_n: usize,
    pub cue_window_ms: u64,
}

impl Default for SportsConfig {
    fn default() -> Self {
        SportsConfig {
            field: FieldSpec::default(),
            d_max_m: 12_000.0,
            heatmap_rows: 16,
            heatmap_cols: 24,
            last_n: 5,
            cue_window_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Home,
    Away,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamInfo {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineupEntry {
    pub player_id: String,
    pub name: String,
    /// Formation slot in normalized field coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<(f64, f64)>,
    #[serde(default = "yes")]
    pub starter: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineups {
    #[serde(default)]
    pub home: Vec<LineupEntry>,
    #[serde(default)]
    pub away: Vec<LineupEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormResult {
    W,
    D,
    L,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecentForm {
    #[serde(default)]
    pub home: Vec<FormResult>,
    #[serde(default)]
    pub away: Vec<FormResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PastResult {
    pub home_goals: u32,
    pub away_goals: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDescriptor {
    pub match_id: String,
    pub home: TeamInfo,
    pub away: TeamInfo,
    #[serde(default)]
    pub lineups: Lineups,
    #[serde(default)]
    pub recent_form: RecentForm,
    #[serde(default)]
    pub head_to_head: Vec<PastResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    PreMatch,
    Live,
    Paused,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t_ms: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerState {
    pub player_id: String,
    pub team_id: String,
    pub side: Side,
    pub name: String,
    pub slot: (f64, f64),
    pub position: (f64, f64),
    pub cumulative_distance_m: f64,
    pub goals: u32,
    pub yellow: u32,
    pub red: u32,
    pub active: bool,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CardColor {
    Yellow,
    Red,
}

/// One line of a match feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeedEvent {
    PositionSample {
        match_id: String,
        player_id: String,
        t_ms: u64,
        x: f64,
        y: f64,
    },
    Goal {
        match_id: String,
        team_id: String,
        player_id: String,
        t_ms: u64,
    },
    Card {
        match_id: String,
        player_id: String,
        color: CardColor,
        t_ms: u64,
    },
    Penalty {
        match_id: String,
        t_ms: u64,
    },
    FreeKick {
        match_id: String,
        t_ms: u64,
    },
    VarReview {
        match_id: String,
        t_ms: u64,
        question: String,
        options: Vec<String>,
    },
    KickOff {
        match_id: String,
        t_ms: u64,
    },
    Final {
        match_id: String,
        t_ms: u64,
    },
}

impl FeedEvent {
    pub fn match_id(&self) -> &str {
        match self {
            FeedEvent::PositionSample { match_id, .. }
            | FeedEvent::Goal { match_id, .. }
            | FeedEvent::Card { match_id, .. }
            | FeedEvent::Penalty { match_id, .. }
            | FeedEvent::FreeKick { match_id, .. }
            | FeedEvent::VarReview { match_id, .. }
            | FeedEvent::KickOff { match_id, .. }
            | FeedEvent::Final { match_id, .. } => match_id,
        }
    }

    pub fn t_ms(&self) -> u64 {
        match self {
            FeedEvent::PositionSample { t_ms, .. }
            | FeedEvent::Goal { t_ms, .. }
            | FeedEvent::Card { t_ms, .. }
            | FeedEvent::Penalty { t_ms, .. }
            | FeedEvent::FreeKick { t_ms, .. }
            | FeedEvent::VarReview { t_ms, .. }
            | FeedEvent::KickOff { t_ms, .. }
            | FeedEvent::Final { t_ms, .. } => *t_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchState {
    pub match_id: String,
    pub home: TeamInfo,
    pub away: TeamInfo,
    pub score: (u32, u32),
    /// Match clock: timestamp of the latest ingested event.
    pub clock_ms: u64,
    pub phase: Phase,
    pub players: BTreeMap<String, PlayerState>,
    pub lineups: Lineups,
    pub recent_form: RecentForm,
    pub head_to_head: Vec<PastResult>,
    pub pre_match_cues: Vec<Cue>,
    /// Key-moment cues in injection order.
    pub injected: Vec<Cue>,
    last_event_ms: Option<u64>,
}

impl MatchState {
    pub fn minute_second(&self) -> (u64, u64) {
        (self.clock_ms / 60_000, (self.clock_ms / 1000) % 60)
    }

    fn side_of(&self, team_id: &str) -> Option<Side> {
        if team_id == self.home.id {
            Some(Side::Home)
        } else if team_id == self.away.id {
            Some(Side::Away)
        } else {
            None
        }
    }

    /// Injected cues whose window contains the match clock.
    pub fn live_injected(&self) -> impl Iterator<Item = &Cue> {
        let now = crate::model::MediaTime(self.clock_ms);
        self.injected.iter().filter(move |c| c.window.contains(now))
    }

    fn score_cue(&self) -> Cue {
        let (minute, second) = self.minute_second();
        let content = ContentDescriptor::new(ContentKind::Stat)
            .with("topic", "score")
            .with("match_id", self.match_id.clone())
            .with("home", self.home.name.clone())
            .with("away", self.away.name.clone())
            .with("score", vec![self.score.0, self.score.1])
            .with("minute", minute)
            .with("second", second)
            .with("phase", serde_json::to_value(self.phase).expect("phase serializes"));
        ambient_cue(format!("{}/score", self.match_id), content, 0)
    }

    fn player_stats_cue(&self) -> Cue {
        let stats: Vec<_> = self
            .players
            .values()
            .filter(|p| p.goals > 0 || p.yellow > 0 || p.red > 0)
            .map(|p| {
                json!({
                    "player_id": p.player_id,
                    "name": p.name,
                    "goals": p.goals,
                    "yellow": p.yellow,
                    "red": p.red,
                })
            })
            .collect();
        let content = ContentDescriptor::new(ContentKind::Stat)
            .with("topic", "players")
            .with("match_id", self.match_id.clone())
            .with("players", stats);
        ambient_cue(format!("{}/players", self.match_id), content, -1)
    }

    /// What the wall shows for this match right now: pre-match context
    /// before kick-off, live details plus any key-moment cue afterwards.
    pub fn wall_cues(&self) -> Vec<Cue> {
        match self.phase {
            Phase::PreMatch => self.pre_match_cues.clone(),
            Phase::Live | Phase::Paused => {
                let mut cues = vec![self.score_cue(), self.player_stats_cue()];
                cues.extend(self.live_injected().cloned());
                cues
            }
            Phase::Finished => vec![self.score_cue(), self.player_stats_cue()],
        }
    }
}

fn ambient_cue(id: String, content: ContentDescriptor, priority: i32) -> Cue {
    Cue {
        id,
        window: Window::new(0, u64::MAX),
        target: DisplayRole::SurroundWall,
        content,
        attention: AttentionLevel::Ambient,
        activation: Activation::Auto,
        priority,
    }
}

fn default_slot(side: Side, index: usize, count: usize) -> (f64, f64) {
    let x = match side {
        Side::Home => 0.25,
        Side::Away => 0.75,
    };
    let y = (index as f64 + 1.0) / (count as f64 + 1.0);
    (x, y)
}

fn pre_match_cues(d: &MatchDescriptor, last_n: usize) -> Vec<Cue> {
    let names = |entries: &[LineupEntry]| -> Vec<String> {
        entries.iter().filter(|e| e.starter).map(|e| e.name.clone()).collect()
    };
    let tail = |v: &[FormResult]| -> Vec<FormResult> { v[v.len().saturating_sub(last_n)..].to_vec() };
    let lineup = ContentDescriptor::new(ContentKind::Lineup)
        .with("match_id", d.match_id.clone())
        .with("home", names(&d.lineups.home))
        .with("away", names(&d.lineups.away));
    let form = ContentDescriptor::new(ContentKind::Stat)
        .with("topic", "form")
        .with("match_id", d.match_id.clone())
        .with(
            "home",
            serde_json::to_value(tail(&d.recent_form.home)).expect("form serializes"),
        )
        .with(
            "away",
            serde_json::to_value(tail(&d.recent_form.away)).expect("form serializes"),
        );
    let h2h = ContentDescriptor::new(ContentKind::Stat)
        .with("topic", "head-to-head")
        .with("match_id", d.match_id.clone())
        .with(
            "results",
            serde_json::to_value(&d.head_to_head).expect("results serialize"),
        );
    vec![
        ambient_cue(format!("{}/lineups", d.match_id), lineup, 2),
        ambient_cue(format!("{}/form", d.match_id), form, 1),
        ambient_cue(format!("{}/head-to-head", d.match_id), h2h, 0),
    ]
}

fn build_match(d: &MatchDescriptor, config: &SportsConfig) -> Result<MatchState, SportsError> {
    if d.home.id == d.away.id {
        return Err(SportsError::BadDescriptor("home and away teams are the same".into()));
    }
    let mut players = BTreeMap::new();
    for (side, team, entries) in [
        (Side::Home, &d.home, &d.lineups.home),
        (Side::Away, &d.away, &d.lineups.away),
    ] {
        for (i, e) in entries.iter().enumerate() {
            let slot = e.slot.unwrap_or_else(|| default_slot(side, i, entries.len()));
            if !(0.0..=1.0).contains(&slot.0) || !(0.0..=1.0).contains(&slot.1) {
                return Err(SportsError::BadCoordinate { x: slot.0, y: slot.1 });
            }
            let p = PlayerState {
                player_id: e.player_id.clone(),
                team_id: team.id.clone(),
                side,
                name: e.name.clone(),
                slot,
                position: slot,
                cumulative_distance_m: 0.0,
                goals: 0,
                yellow: 0,
                red: 0,
                active: e.starter,
                samples: Vec::new(),
            };
            if players.insert(e.player_id.clone(), p).is_some() {
                return Err(SportsError::BadDescriptor(format!(
                    "player `{}` listed twice",
                    e.player_id
                )));
            }
        }
    }
    let active = players.values().filter(|p| p.active).count();
    if active > MAX_ACTIVE_PLAYERS {
        return Err(SportsError::BadDescriptor(format!(
            "{active} starters listed, at most {MAX_ACTIVE_PLAYERS} allowed"
        )));
    }
    let keep_last = |v: &[FormResult]| v[v.len().saturating_sub(config.last_n)..].to_vec();
    Ok(MatchState {
        match_id: d.match_id.clone(),
        home: d.home.clone(),
        away: d.away.clone(),
        score: (0, 0),
        clock_ms: 0,
        phase: Phase::PreMatch,
        players,
        lineups: d.lineups.clone(),
        recent_form: RecentForm {
            home: keep_last(&d.recent_form.home),
            away: keep_last(&d.recent_form.away),
        },
        head_to_head: d.head_to_head.clone(),
        pre_match_cues: pre_match_cues(d, config.last_n),
        injected: Vec::new(),
        last_event_ms: None,
    })
}

fn injected_cue(m: &MatchState, t_ms: u64, window_ms: u64, content: ContentDescriptor, priority: i32) -> Cue {
    Cue {
        id: format!("{}/{:04}-{}", m.match_id, m.injected.len(), content.kind.as_str()),
        window: Window::new(t_ms, t_ms.saturating_add(window_ms)),
        target: DisplayRole::SurroundWall,
        content,
        attention: AttentionLevel::Focus,
        activation: Activation::Auto,
        priority,
    }
}

fn replay_content(match_id: &str, moment: &str, t_ms: u64) -> ContentDescriptor {
    ContentDescriptor::new(ContentKind::ReplayVideo)
        .with("match_id", match_id)
        .with("moment", moment)
        .with("t_ms", t_ms)
}

/// Applies one event to one match. Every check runs before any mutation, so
/// an error leaves the match untouched.
fn ingest_into(m: &mut MatchState, event: &FeedEvent, config: &SportsConfig) -> Result<Vec<Cue>, SportsError> {
    let t_ms = event.t_ms();
    if let Some(last) = m.last_event_ms {
        if t_ms < last {
            return Err(SportsError::TimeRegression {
                match_id: m.match_id.clone(),
                t_ms,
                last_ms: last,
            });
        }
    }
    let unknown_player = |player: &str| SportsError::UnknownPlayer {
        match_id: m.match_id.clone(),
        player: player.to_string(),
    };
    let mut injected = Vec::new();
    match event {
        FeedEvent::PositionSample { player_id, x, y, .. } => {
            if !(0.0..=1.0).contains(x) || !(0.0..=1.0).contains(y) {
                return Err(SportsError::BadCoordinate { x: *x, y: *y });
            }
            let p = m.players.get_mut(player_id).ok_or_else(|| unknown_player(player_id))?;
            if let Some(prev) = p.samples.last() {
                p.cumulative_distance_m += config.field.distance((prev.x, prev.y), (*x, *y));
            }
            p.samples.push(Sample { t_ms, x: *x, y: *y });
            p.position = (*x, *y);
        }
        FeedEvent::Goal { team_id, player_id, .. } => {
            let side = m.side_of(team_id).ok_or_else(|| SportsError::UnknownTeam {
                match_id: m.match_id.clone(),
                team: team_id.clone(),
            })?;
            if !m.players.contains_key(player_id) {
                return Err(unknown_player(player_id));
            }
            let p = m.players.get_mut(player_id).expect("checked above");
            p.goals += 1;
            let scorer = p.name.clone();
            match side {
                Side::Home => m.score.0 += 1,
                Side::Away => m.score.1 += 1,
            }
            let content = replay_content(&m.match_id, "goal", t_ms)
                .with("team_id", team_id.clone())
                .with("player", scorer);
            injected.push(injected_cue(m, t_ms, config.cue_window_ms, content, 1));
        }
        FeedEvent::Card { player_id, color, .. } => {
            let p = m.players.get_mut(player_id).ok_or_else(|| unknown_player(player_id))?;
            match color {
                CardColor::Yellow => p.yellow += 1,
                CardColor::Red => {
                    p.red += 1;
                    p.active = false;
                }
            }
        }
        FeedEvent::Penalty { .. } | FeedEvent::FreeKick { .. } => {
            let moment = if matches!(event, FeedEvent::Penalty { .. }) {
                "penalty"
            } else {
                "free-kick"
            };
            let content = replay_content(&m.match_id, moment, t_ms);
            injected.push(injected_cue(m, t_ms, config.cue_window_ms, content, 1));
        }
        FeedEvent::VarReview { question, options, .. } => {
            let content = ContentDescriptor::new(ContentKind::Poll)
                .with("match_id", m.match_id.clone())
                .with("question", question.clone())
                .with("options", options.clone());
            content.check_payload().map_err(SportsError::BadPoll)?;
            injected.push(injected_cue(m, t_ms, config.cue_window_ms, content, 2));
        }
        FeedEvent::KickOff { .. } => m.phase = Phase::Live,
        FeedEvent::Final { .. } => m.phase = Phase::Finished,
    }
    m.last_event_ms = Some(t_ms);
    m.clock_ms = t_ms;
    m.injected.extend(injected.iter().cloned());
    Ok(injected)
}

/// Registered matches for one session, at most [`MAX_MATCHES`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SportsBoard {
    pub config: SportsConfig,
    matches: BTreeMap<String, MatchState>,
}

impl SportsBoard {
    pub fn new(config: SportsConfig) -> Self {
        SportsBoard {
            config,
            matches: BTreeMap::new(),
        }
    }

    pub fn matches(&self) -> impl Iterator<Item = &MatchState> {
        self.matches.values()
    }

    pub fn get(&self, match_id: &str) -> Option<&MatchState> {
        self.matches.get(match_id)
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Registers a match in pre-match phase and returns the wall cues
    /// generated for it (lineups, form, head-to-head).
    pub fn add_match(&mut self, descriptor: &MatchDescriptor) -> Result<Vec<Cue>, SportsError> {
        if self.matches.contains_key(&descriptor.match_id) {
            return Err(SportsError::DuplicateMatch(descriptor.match_id.clone()));
        }
        if self.matches.len() >= MAX_MATCHES {
            return Err(SportsError::CapacityExceeded);
        }
        let state = build_match(descriptor, &self.config)?;
        let cues = state.pre_match_cues.clone();
        self.matches.insert(descriptor.match_id.clone(), state);
        Ok(cues)
    }

    pub fn ingest(&mut self, event: &FeedEvent) -> Result<Vec<Cue>, SportsError> {
        let config = &self.config;
        let m = self
            .matches
            .get_mut(event.match_id())
            .ok_or_else(|| SportsError::UnknownMatch(event.match_id().to_string()))?;
        let mut scratch = m.clone();
        let cues = ingest_into(&mut scratch, event, config)?;
        *m = scratch;
        Ok(cues)
    }

    /// Replays a whole feed in order, one match at a time. All-or-nothing:
    /// on error the board is left as it was and the earliest failing event
    /// (by feed position) is reported.
    pub fn replay_sequential(&mut self, events: &[FeedEvent]) -> Result<Vec<Cue>, SportsError> {
        let mut lanes = self.partition(events)?;
        let results: Vec<_> = lanes.iter_mut().map(|lane| run_lane(lane, &self.config)).collect();
        self.commit(lanes, results)
    }

    /// Same contract as [`SportsBoard::replay_sequential`]; matches are
    /// independent pipelines and run on the rayon pool.
    #[cfg(feature = "parallel")]
    pub fn replay_parallel(&mut self, events: &[FeedEvent]) -> Result<Vec<Cue>, SportsError> {
        let mut lanes = self.partition(events)?;
        let config = &self.config;
        let results: Vec<_> = lanes.par_iter_mut().map(|lane| run_lane(lane, config)).collect();
        self.commit(lanes, results)
    }

    pub fn replay(&mut self, events: &[FeedEvent]) -> Result<Vec<Cue>, SportsError> {
        #[cfg(feature = "parallel")]
        {
            self.replay_parallel(events)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.replay_sequential(events)
        }
    }

    fn partition<'e>(&self, events: &'e [FeedEvent]) -> Result<Vec<Lane<'e>>, SportsError> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut lanes: Vec<Lane<'e>> = Vec::new();
        for (pos, e) in events.iter().enumerate() {
            let id = e.match_id();
            let lane = match index.get(id) {
                Some(&l) => l,
                None => {
                    let state = self
                        .matches
                        .get(id)
                        .ok_or_else(|| SportsError::UnknownMatch(id.to_string()))?
                        .clone();
                    lanes.push(Lane {
                        state,
                        events: Vec::new(),
                    });
                    index.insert(id, lanes.len() - 1);
                    lanes.len() - 1
                }
            };
            lanes[lane].events.push((pos, e));
        }
        Ok(lanes)
    }

    fn commit(&mut self, lanes: Vec<Lane<'_>>, results: Vec<LaneResult>) -> Result<Vec<Cue>, SportsError> {
        let mut cues = Vec::new();
        let mut first_err: Option<(usize, SportsError)> = None;
        for r in results {
            match r {
                Ok(c) => cues.extend(c),
                Err((pos, e)) => {
                    if first_err.as_ref().is_none_or(|(p, _)| pos < *p) {
                        first_err = Some((pos, e));
                    }
                }
            }
        }
        if let Some((_, e)) = first_err {
            return Err(e);
        }
        for lane in lanes {
            self.matches.insert(lane.state.match_id.clone(), lane.state);
        }
        cues.sort_by_key(|(pos, _)| *pos);
        Ok(cues.into_iter().map(|(_, c)| c).collect())
    }
}

struct Lane<'e> {
    state: MatchState,
    events: Vec<(usize, &'e FeedEvent)>,
}

/// Cues tagged with their feed position, or the first failing event.
type LaneResult = Result<Vec<(usize, Cue)>, (usize, SportsError)>;

fn run_lane(lane: &mut Lane<'_>, config: &SportsConfig) -> LaneResult {
    let mut out = Vec::new();
    for &(pos, e) in &lane.events {
        let cues = ingest_into(&mut lane.state, e, config).map_err(|err| (pos, err))?;
        out.extend(cues.into_iter().map(|c| (pos, c)));
    }
    Ok(out)
}

/// Fatigue as the clamped ratio of distance covered to `d_max_m`.
pub fn fatigue_index(player: &PlayerState, d_max_m: f64) -> f64 {
    if d_max_m <= 0.0 {
        return 1.0;
    }
    (player.cumulative_distance_m / d_max_m).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Badges {
    pub goals: u32,
    pub yellow: u32,
    pub red: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Avatar {
    pub player_id: String,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub side: Side,
    pub badges: Badges,
    pub fatigue: f64,
}

/// One avatar per player on the pitch, at their latest sampled position or
/// their formation slot before any sample arrives.
pub fn avatar_states(m: &MatchState, d_max_m: f64) -> Vec<Avatar> {
    m.players
        .values()
        .filter(|p| p.active)
        .map(|p| Avatar {
            player_id: p.player_id.clone(),
            name: p.name.clone(),
            x: p.position.0,
            y: p.position.1,
            side: p.side,
            badges: Badges {
                goals: p.goals,
                yellow: p.yellow,
                red: p.red,
            },
            fatigue: fatigue_index(p, d_max_m),
        })
        .collect()
}

/// Builds descriptors for a bare feed that arrives without match metadata:
/// every player mentioned becomes a starter of the side they scored for
/// (home when unknown), and teams are named after the first two team ids
/// seen in goals.
pub fn discover_descriptors(events: &[FeedEvent]) -> Vec<MatchDescriptor> {
    struct Seen {
        teams: Vec<String>,
        players: Vec<(String, Option<String>)>,
    }
    let mut by_match: BTreeMap<String, Seen> = BTreeMap::new();
    for e in events {
        let seen = by_match.entry(e.match_id().to_string()).or_insert(Seen {
            teams: Vec::new(),
            players: Vec::new(),
        });
        let (player, team) = match e {
            FeedEvent::PositionSample { player_id, .. } | FeedEvent::Card { player_id, .. } => (Some(player_id), None),
            FeedEvent::Goal { player_id, team_id, .. } => (Some(player_id), Some(team_id)),
            _ => (None, None),
        };
        if let Some(t) = team {
            if !seen.teams.contains(t) {
                seen.teams.push(t.clone());
            }
        }
        if let Some(p) = player {
            match seen.players.iter_mut().find(|(id, _)| id == p) {
                Some(entry) => {
                    if entry.1.is_none() {
                        entry.1 = team.cloned();
                    }
                }
                None => seen.players.push((p.clone(), team.cloned())),
            }
        }
    }
    by_match
        .into_iter()
        .map(|(match_id, seen)| {
            let home_id = seen.teams.first().cloned().unwrap_or_else(|| "home".into());
            let away_id = seen.teams.get(1).cloned().unwrap_or_else(|| {
                if home_id == "away" {
                    "visitors".into()
                } else {
                    "away".into()
                }
            });
            let mut lineups = Lineups::default();
            for (player_id, team) in seen.players {
                let entry = LineupEntry {
                    name: player_id.clone(),
                    player_id,
                    slot: None,
                    starter: false,
                };
                if team.as_deref() == Some(away_id.as_str()) {
                    lineups.away.push(entry);
                } else {
                    lineups.home.push(entry);
                }
            }
            MatchDescriptor {
                match_id,
                home: TeamInfo {
                    name: home_id.clone(),
                    id: home_id,
                },
                away: TeamInfo {
                    name: away_id.clone(),
                    id: away_id,
                },
                lineups,
                recent_form: RecentForm::default(),
                head_to_head: Vec::new(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn descriptor(id: &str) -> MatchDescriptor {
        let entry = |p: &str, slot: Option<(f64, f64)>| LineupEntry {
            player_id: p.into(),
            name: p.to_uppercase(),
            slot,
            starter: true,
        };
        MatchDescriptor {
            match_id: id.into(),
            home: TeamInfo {
                id: "ath".into(),
                name: "Athletic".into(),
            },
            away: TeamInfo {
                id: "rov".into(),
                name: "Rovers".into(),
            },
            lineups: Lineups {
                home: vec![entry("h9", Some((0.0, 0.0))), entry("h10", None)],
                away: vec![entry("a4", Some((0.7, 0.5)))],
            },
            recent_form: RecentForm {
                home: vec![
                    FormResult::W,
                    FormResult::W,
                    FormResult::D,
                    FormResult::L,
                    FormResult::W,
                    FormResult::W,
                ],
                away: vec![FormResult::L],
            },
            head_to_head: vec![PastResult {
                home_goals: 2,
                away_goals: 1,
                label: None,
            }],
        }
    }

    fn board() -> SportsBoard {
        let mut b = SportsBoard::new(SportsConfig::default());
        b.add_match(&descriptor("m1")).unwrap();
        b
    }

    #[test]
    fn capacity_is_four() {
        let mut b = SportsBoard::new(SportsConfig::default());
        for i in 0..4 {
            b.add_match(&descriptor(&format!("m{i}"))).unwrap();
        }
        assert_eq!(b.add_match(&descriptor("m4")), Err(SportsError::CapacityExceeded));
        assert_eq!(
            b.add_match(&descriptor("m0")),
            Err(SportsError::DuplicateMatch("m0".into()))
        );
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn pre_match_cues_target_the_wall() {
        let mut b = SportsBoard::new(SportsConfig::default());
        let cues = b.add_match(&descriptor("m1")).unwrap();
        assert_eq!(cues.len(), 3);
        assert!(cues.iter().all(|c| c.target == DisplayRole::SurroundWall));
        let lineup = cues.iter().find(|c| c.content.kind == ContentKind::Lineup).unwrap();
        assert_eq!(lineup.content.payload["home"], json!(["H9", "H10"]));
        assert_eq!(b.get("m1").unwrap().phase, Phase::PreMatch);
        // last_n = 5 keeps the five most recent results
        assert_eq!(b.get("m1").unwrap().recent_form.home.len(), 5);
    }

    #[test]
    fn goal_updates_score_and_injects_replay() {
        let mut b = board();
        let cues = b
            .ingest(&FeedEvent::Goal {
                match_id: "m1".into(),
                team_id: "ath".into(),
                player_id: "h9".into(),
                t_ms: 600_000,
            })
            .unwrap();
        let m = b.get("m1").unwrap();
        assert_eq!(m.score, (1, 0));
        assert_eq!(m.players["h9"].goals, 1);
        assert_eq!(cues.len(), 1);
        assert_eq!(cues[0].content.kind, ContentKind::ReplayVideo);
        assert_eq!(cues[0].window, Window::new(600_000, 630_000));
    }

    #[test]
    fn var_review_injects_focus_poll() {
        let mut b = board();
        let cues = b
            .ingest(&FeedEvent::VarReview {
                match_id: "m1".into(),
                t_ms: 10,
                question: "Penalty?".into(),
                options: vec!["yes".into(), "no".into()],
            })
            .unwrap();
        assert_eq!(cues[0].content.kind, ContentKind::Poll);
        assert_eq!(cues[0].attention, AttentionLevel::Focus);
        assert_eq!(cues[0].content.poll_options().unwrap(), ["yes", "no"]);
        let bad = b.ingest(&FeedEvent::VarReview {
            match_id: "m1".into(),
            t_ms: 11,
            question: "?".into(),
            options: vec!["only".into()],
        });
        assert!(matches!(bad, Err(SportsError::BadPoll(_))));
    }

    #[test]
    fn position_samples_accumulate_metres() {
        let mut b = board();
        for (t, x, y) in [(0, 0.0, 0.0), (1000, 0.3, 0.4)] {
            b.ingest(&FeedEvent::PositionSample {
                match_id: "m1".into(),
                player_id: "h9".into(),
                t_ms: t,
                x,
                y,
            })
            .unwrap();
        }
        let d = b.get("m1").unwrap().players["h9"].cumulative_distance_m;
        // sqrt(31.5^2 + 27.2^2)
        assert!((d - 41.618_385_50).abs() < 1e-6, "{d}");
    }

    #[test]
    fn errors_leave_state_untouched() {
        let mut b = board();
        b.ingest(&FeedEvent::KickOff {
            match_id: "m1".into(),
            t_ms: 5000,
        })
        .unwrap();
        let before = b.clone();
        assert!(matches!(
            b.ingest(&FeedEvent::Penalty {
                match_id: "m1".into(),
                t_ms: 4000
            }),
            Err(SportsError::TimeRegression { .. })
        ));
        assert!(matches!(
            b.ingest(&FeedEvent::Card {
                match_id: "m1".into(),
                player_id: "ghost".into(),
                color: CardColor::Red,
                t_ms: 6000
            }),
            Err(SportsError::UnknownPlayer { .. })
        ));
        assert!(matches!(
            b.ingest(&FeedEvent::Penalty {
                match_id: "zz".into(),
                t_ms: 6000
            }),
            Err(SportsError::UnknownMatch(_))
        ));
        assert!(matches!(
            b.ingest(&FeedEvent::Goal {
                match_id: "m1".into(),
                team_id: "nobody".into(),
                player_id: "h9".into(),
                t_ms: 6000
            }),
            Err(SportsError::UnknownTeam { .. })
        ));
        assert_eq!(b, before);
    }

    #[test]
    fn fatigue_ratio() {
        let mut p = board().get("m1").unwrap().players["h9"].clone();
        assert_eq!(fatigue_index(&p, 12_000.0), 0.0);
        p.cumulative_distance_m = 6000.0;
        assert_eq!(fatigue_index(&p, 12_000.0), 0.5);
        p.cumulative_distance_m = 12_000.0;
        assert_eq!(fatigue_index(&p, 12_000.0), 1.0);
        p.cumulative_distance_m = 20_000.0;
        assert_eq!(fatigue_index(&p, 12_000.0), 1.0);
    }

    #[test]
    fn avatars_follow_samples_or_slots() {
        let mut b = board();
        b.ingest(&FeedEvent::Goal {
            match_id: "m1".into(),
            team_id: "ath".into(),
            player_id: "h9".into(),
            t_ms: 1,
        })
        .unwrap();
        b.ingest(&FeedEvent::Card {
            match_id: "m1".into(),
            player_id: "h9".into(),
            color: CardColor::Yellow,
            t_ms: 2,
        })
        .unwrap();
        b.ingest(&FeedEvent::PositionSample {
            match_id: "m1".into(),
            player_id: "h9".into(),
            t_ms: 3,
            x: 0.4,
            y: 0.6,
        })
        .unwrap();
        let avatars = avatar_states(b.get("m1").unwrap(), 12_000.0);
        let h9 = avatars.iter().find(|a| a.player_id == "h9").unwrap();
        assert_eq!(
            h9.badges,
            Badges {
                goals: 1,
                yellow: 1,
                red: 0
            }
        );
        assert_eq!((h9.x, h9.y), (0.4, 0.6));
        let a4 = avatars.iter().find(|a| a.player_id == "a4").unwrap();
        assert_eq!((a4.x, a4.y), (0.7, 0.5));
        let h10 = avatars.iter().find(|a| a.player_id == "h10").unwrap();
        assert_eq!((h10.x, h10.y), default_slot(Side::Home, 1, 2));
    }

    #[test]
    fn red_card_takes_player_off() {
        let mut b = board();
        b.ingest(&FeedEvent::Card {
            match_id: "m1".into(),
            player_id: "a4".into(),
            color: CardColor::Red,
            t_ms: 2,
        })
        .unwrap();
        let avatars = avatar_states(b.get("m1").unwrap(), 12_000.0);
        assert!(avatars.iter().all(|a| a.player_id != "a4"));
    }

    #[test]
    fn replay_is_all_or_nothing() {
        let mut b = board();
        let before = b.clone();
        let events = vec![
            FeedEvent::KickOff {
                match_id: "m1".into(),
                t_ms: 0,
            },
            FeedEvent::Penalty {
                match_id: "m1".into(),
                t_ms: 10,
            },
            FeedEvent::Penalty {
                match_id: "m1".into(),
                t_ms: 5,
            },
        ];
        assert!(b.replay_sequential(&events).is_err());
        assert_eq!(b, before);
        let cues = b.replay_sequential(&events[..2]).unwrap();
        assert_eq!(cues.len(), 1);
        assert_eq!(b.get("m1").unwrap().phase, Phase::Live);
    }

    #[test]
    fn wall_cues_by_phase() {
        let mut b = board();
        assert_eq!(b.get("m1").unwrap().wall_cues().len(), 3);
        b.ingest(&FeedEvent::KickOff {
            match_id: "m1".into(),
            t_ms: 0,
        })
        .unwrap();
        b.ingest(&FeedEvent::Penalty {
            match_id: "m1".into(),
            t_ms: 1000,
        })
        .unwrap();
        let wall = b.get("m1").unwrap().wall_cues();
        assert!(wall.iter().any(|c| c.content.kind == ContentKind::ReplayVideo));
        b.ingest(&FeedEvent::KickOff {
            match_id: "m1".into(),
            t_ms: 31_000,
        })
        .unwrap();
        let wall = b.get("m1").unwrap().wall_cues();
        assert!(wall.iter().all(|c| c.content.kind != ContentKind::ReplayVideo));
    }

    #[test]
    fn discovered_descriptors_cover_feed_players() {
        let events = vec![
            FeedEvent::PositionSample {
                match_id: "x".into(),
                player_id: "p1".into(),
                t_ms: 0,
                x: 0.1,
                y: 0.1,
            },
            FeedEvent::Goal {
                match_id: "x".into(),
                team_id: "blue".into(),
                player_id: "p2".into(),
                t_ms: 1,
            },
        ];
        let ds = discover_descriptors(&events);
        assert_eq!(ds.len(), 1);
        let mut b = SportsBoard::new(SportsConfig::default());
        b.add_match(&ds[0]).unwrap();
        b.replay(&events).unwrap();
        assert_eq!(b.get("x").unwrap().score, (1, 0));
    }
}
