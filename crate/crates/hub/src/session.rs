//! Authoritative room state and the transitions the message loop applies
//! to it. Every transition either succeeds completely or returns an error
//! before touching anything the caller can observe.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use roomcast_core::arbiter::{self, CommandClass, ControlToken, Decision, TokenError, UserId};
use roomcast_core::attention::{self, InputEvent, SurfaceAttentionState};
use roomcast_core::layout::{LayoutError, PanelId, SurfaceLayout};
use roomcast_core::model::{
    Activation, AttentionLevel, ContentDescriptor, ContentKind, Cue, DisplayRole, MediaTime, Window,
};
use roomcast_core::plot::PlotTrack;
use roomcast_core::sports::{SportsBoard, SportsError};
use roomcast_core::timeline::{self, MediaClock, Timeline, TimelineError, Transport};
use roomcast_core::track::AmbientTrack;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::EngineConfig;
use crate::polls::{Poll, PollError, PollState, Privacy};
use crate::prefs::{Preferences, UserPrefs};
use crate::protocol::{
    CastOp, EnvironmentChange, InputOp, MatchOp, ObjectDetect, ObjectState, PanelOp, PollOp, PreferencesOp,
    PresenceChange, ProtocolError, ShowOp, TokenOp, TransportOp,
};
use crate::registry::{DisplayRegistration, Registry, RegistryError};

#[derive(Debug, Error, PartialEq)]
pub enum HubError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("sender does not hold the control token")]
    Denied,
    #[error("sender does not hold the control token")]
    NotHolder,
    #[error(transparent)]
    Poll(#[from] PollError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Sports(#[from] SportsError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error("no shared {} display to target", .0.as_str())]
    UnknownTarget(DisplayRole),
    #[error("no object at that position")]
    UnknownObstacle,
    #[error("wizard-inject cannot wrap another wizard-inject")]
    NestedInject,
}

impl HubError {
    pub fn code(&self) -> &'static str {
        match self {
            HubError::Protocol(ProtocolError::Frame(_)) => "malformed",
            HubError::Protocol(ProtocolError::UnknownType(_)) => "unknown-type",
            HubError::Protocol(ProtocolError::Payload { .. }) => "malformed",
            HubError::Registry(RegistryError::RoleOccupied(_)) => "role-occupied",
            HubError::Registry(RegistryError::DuplicateId(_)) => "duplicate-id",
            HubError::Registry(RegistryError::UnknownDisplay(_)) => "unknown-display",
            HubError::Registry(_) => "bad-registration",
            HubError::Denied => "denied",
            HubError::NotHolder => "not-holder",
            HubError::Poll(PollError::Closed(_)) => "poll-closed",
            HubError::Poll(PollError::UnknownOption { .. }) => "unknown-option",
            HubError::Poll(PollError::UnknownPoll(_)) => "unknown-poll",
            HubError::Poll(_) => "bad-poll",
            HubError::Layout(LayoutError::NoSpace { .. }) => "no-space",
            HubError::Layout(LayoutError::WouldOverlap(_)) => "would-overlap",
            HubError::Layout(LayoutError::UnknownPanel(_)) => "unknown-panel",
            HubError::Layout(_) => "bad-layout",
            HubError::Sports(SportsError::CapacityExceeded) => "capacity-exceeded",
            HubError::Sports(_) => "bad-feed",
            HubError::Timeline(_) => "bad-transport",
            HubError::UnknownTarget(_) => "unknown-target",
            HubError::UnknownObstacle => "unknown-obstacle",
            HubError::NestedInject => "malformed",
        }
    }
}

impl From<TokenError> for HubError {
    fn from(_: TokenError) -> Self {
        HubError::NotHolder
    }
}

/// Side effects beyond render-state changes.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Environment {
        actuator: String,
        value: Value,
        cue_id: Option<String>,
        source: &'static str,
    },
    Reply(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CastOverlay {
    pub content: ContentDescriptor,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShowItem {
    pub content: ContentDescriptor,
    pub attention: AttentionLevel,
    pub at_ms: u64,
}

/// Last transport change, from which clients extrapolate the play head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockAnchor {
    pub position_ms: u64,
    pub at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub config: EngineConfig,
    pub plot: Option<Arc<PlotTrack>>,
    pub clock: MediaClock,
    pub anchor: ClockAnchor,
    pub timeline: Timeline,
    pub registry: Registry,
    pub attention: BTreeMap<String, SurfaceAttentionState>,
    pub token: ControlToken,
    pub polls: BTreeMap<String, Poll>,
    pub prefs: Preferences,
    pub prefs_dirty: bool,
    pub casts: BTreeMap<DisplayRole, CastOverlay>,
    pub table: SurfaceLayout,
    pub panel_content: BTreeMap<PanelId, ContentDescriptor>,
    pub sports: SportsBoard,
    pub shows: BTreeMap<DisplayRole, BTreeMap<String, ShowItem>>,
    pub present: BTreeSet<UserId>,
    pub environment: BTreeMap<String, Value>,
    /// Virtual wall clock in milliseconds.
    pub now_ms: u64,
}

fn env_effect(cue: &Cue) -> Effect {
    Effect::Environment {
        actuator: cue
            .content
            .payload
            .get("actuator")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        value: cue.content.payload.get("value").cloned().unwrap_or(Value::Null),
        cue_id: Some(cue.id.clone()),
        source: "track",
    }
}

impl Session {
    pub fn new(config: EngineConfig, track: AmbientTrack, plot: Option<PlotTrack>, prefs: Preferences) -> Self {
        let clock = MediaClock::new(track.duration);
        let table = SurfaceLayout::new(config.table.width, config.table.height, config.table.grid_step);
        let sports = SportsBoard::new(config.sports.clone());
        Session {
            plot: plot.map(Arc::new),
            clock,
            anchor: ClockAnchor {
                position_ms: 0,
                at_ms: 0,
            },
            timeline: Timeline::new(Arc::new(track)),
            registry: Registry::default(),
            attention: BTreeMap::new(),
            token: ControlToken::default(),
            polls: BTreeMap::new(),
            prefs,
            prefs_dirty: false,
            casts: BTreeMap::new(),
            table,
            panel_content: BTreeMap::new(),
            sports,
            shows: BTreeMap::new(),
            present: BTreeSet::new(),
            environment: BTreeMap::new(),
            now_ms: 0,
            config,
        }
    }

    pub fn empty_track() -> AmbientTrack {
        AmbientTrack::new("none", MediaTime(0), Vec::new()).expect("empty track is valid")
    }

    /// Lands the play head on its current position as a seek would, so cues
    /// live at the start are active and their actions fire.
    pub fn start(&mut self) -> Vec<Effect> {
        self.move_head(self.clock.position, true)
    }

    fn move_head(&mut self, pos: MediaTime, is_seek: bool) -> Vec<Effect> {
        let adv = self.timeline.move_to(pos, is_seek);
        let effects: Vec<Effect> = adv
            .actions_to_fire
            .iter()
            .filter_map(|id| self.timeline.track().cue(id))
            .map(env_effect)
            .collect();
        for e in &effects {
            if let Effect::Environment { actuator, value, .. } = e {
                self.environment.insert(actuator.clone(), value.clone());
            }
        }
        effects
    }

    /// Advances virtual time. Playback moves the play head contiguously.
    pub fn advance_time(&mut self, dt_ms: u64) -> Vec<Effect> {
        self.now_ms += dt_ms;
        let next = timeline::tick(&self.clock, dt_ms);
        let moved = next.position != self.clock.position;
        self.clock = next;
        if moved {
            self.move_head(self.clock.position, false)
        } else {
            Vec::new()
        }
    }

    fn interested(&self, role: DisplayRole, bound: Option<&str>, kind: ContentKind) -> bool {
        match role {
            DisplayRole::Personal => bound.is_some_and(|u| self.prefs.interested(u, kind)),
            _ => self.present.iter().any(|u| self.prefs.interested(u, kind)),
        }
    }

    /// Everything cue-shaped a display shows, in render order.
    pub fn surface_cues(&self, reg: &DisplayRegistration) -> Vec<Cue> {
        let att = self.attention.get(&reg.display_id);
        let on_demand = att.is_some_and(|a| a.on_demand_active);
        let track = self.timeline.track();
        let active = &self.timeline.state().active;
        let mut cues: Vec<Cue> = track
            .cues
            .iter()
            .filter(|c| c.target == reg.role && active.contains(&c.id) && !c.is_environment_action())
            .filter(|c| match c.activation {
                Activation::Auto => true,
                Activation::OnDemand => on_demand || self.interested(reg.role, reg.user.as_deref(), c.content.kind),
            })
            .cloned()
            .collect();
        if reg.role == DisplayRole::SurroundWall {
            for m in self.sports.matches() {
                cues.extend(m.wall_cues());
            }
        }
        if let Some(items) = self.shows.get(&reg.role) {
            for (id, item) in items {
                cues.push(Cue {
                    id: format!("show/{id}"),
                    window: Window::new(item.at_ms, u64::MAX),
                    target: reg.role,
                    content: item.content.clone(),
                    attention: item.attention,
                    activation: Activation::Auto,
                    priority: 3,
                });
            }
        }
        cues.sort_by(Cue::render_cmp);
        cues
    }

    fn table_has_content(&self) -> bool {
        self.table.visible_panels().next().is_some() || self.plot.is_some() || !self.sports.is_empty()
    }

    /// Cues the attention engine sees for a display: its content plus the
    /// cast overlay (focus) and, on the table, the panels and maps (ambient).
    pub fn attention_cues(&self, reg: &DisplayRegistration) -> Vec<Cue> {
        let mut cues = self.surface_cues(reg);
        let pseudo = |id: &str, attention| Cue {
            id: id.into(),
            window: Window::new(0, u64::MAX),
            target: reg.role,
            content: ContentDescriptor::new(ContentKind::Stat),
            attention,
            activation: Activation::Auto,
            priority: 0,
        };
        if self.casts.contains_key(&reg.role) {
            cues.push(pseudo("cast", AttentionLevel::Focus));
        }
        if reg.role == DisplayRole::AugmenTable && self.table_has_content() {
            cues.push(pseudo("table", AttentionLevel::Ambient));
        }
        cues
    }

    /// Post-transition housekeeping: polls opened by a cue close once that
    /// cue is no longer live, then every surface takes one attention step.
    pub fn settle(&mut self) {
        let live: BTreeSet<String> = self
            .sports
            .matches()
            .flat_map(|m| m.live_injected().map(|c| c.id.clone()))
            .collect();
        for poll in self.polls.values_mut() {
            if poll.state == PollState::Open && poll.source_cue.as_ref().is_some_and(|c| !live.contains(c)) {
                poll.close();
            }
        }
        let policy = self.config.attention;
        let regs: Vec<DisplayRegistration> = self.registry.iter().cloned().collect();
        for reg in regs {
            let cues = self.attention_cues(&reg);
            if let Some(state) = self.attention.get(&reg.display_id) {
                let next = attention::step(state, self.now_ms, &cues, &policy);
                self.attention.insert(reg.display_id.clone(), next);
            }
        }
    }

    pub fn register(&mut self, reg: DisplayRegistration) -> Result<Vec<Effect>, HubError> {
        self.registry.check(&reg)?;
        let state = SurfaceAttentionState::new(
            reg.display_id.clone(),
            reg.role,
            reg.supports_on_demand(),
            self.now_ms,
            &self.config.attention,
        );
        if let Some(u) = &reg.user {
            self.present.insert(u.clone());
        }
        self.attention.insert(reg.display_id.clone(), state);
        self.registry.register(reg)?;
        Ok(Vec::new())
    }

    pub fn unregister(&mut self, display_id: &str) -> Result<(), HubError> {
        self.registry.unregister(display_id)?;
        self.attention.remove(display_id);
        Ok(())
    }

    fn require(&self, user: &str, class: CommandClass) -> Result<(), HubError> {
        match arbiter::authorize(&self.token, user, class) {
            Decision::Allow => Ok(()),
            Decision::Deny => Err(HubError::Denied),
        }
    }

    pub fn transport(&mut self, op: TransportOp) -> Result<Vec<Effect>, HubError> {
        self.require(&op.user, CommandClass::SharedDisplayControl)?;
        let next = timeline::apply_transport(&self.clock, op.command)?;
        self.clock = next;
        self.anchor = ClockAnchor {
            position_ms: self.clock.position.0,
            at_ms: self.now_ms,
        };
        Ok(match op.command {
            Transport::Seek { t_ms } => self.move_head(MediaTime(t_ms), true),
            Transport::Play | Transport::Pause => Vec::new(),
        })
    }

    pub fn input(&mut self, op: InputOp) -> Result<Vec<Effect>, HubError> {
        let state = self
            .attention
            .get(&op.display_id)
            .ok_or_else(|| RegistryError::UnknownDisplay(op.display_id.clone()))?;
        let event = InputEvent {
            input: op.input,
            intent: op.intent,
        };
        let next = attention::on_input(state, event, self.now_ms, &self.config.attention);
        self.attention.insert(op.display_id, next);
        Ok(Vec::new())
    }

    pub fn token_op(&mut self, op: TokenOp) -> Result<Vec<Effect>, HubError> {
        self.token = match op {
            TokenOp::Request { user } => arbiter::request(&self.token, &user),
            TokenOp::Pass { user, to } => arbiter::pass(&self.token, &user, &to)?,
            TokenOp::Release { user } => arbiter::release(&self.token, &user)?,
            TokenOp::Withdraw { user } => arbiter::withdraw(&self.token, &user),
            TokenOp::AdminReset => arbiter::admin_reset(&self.token),
        };
        Ok(Vec::new())
    }

    fn open_poll(&mut self, poll: Poll) -> Result<(), HubError> {
        if self.polls.contains_key(&poll.poll_id) {
            return Err(PollError::DuplicatePoll(poll.poll_id).into());
        }
        self.polls.insert(poll.poll_id.clone(), poll);
        Ok(())
    }

    pub fn poll_op(&mut self, op: PollOp) -> Result<Vec<Effect>, HubError> {
        match op {
            PollOp::Open {
                poll_id,
                question,
                options,
            } => self.open_poll(Poll::new(poll_id, question, options)?)?,
            PollOp::Vote {
                poll_id,
                user,
                option,
                privacy,
            } => {
                let privacy = privacy.unwrap_or_else(|| self.prefs.privacy_default(&user));
                self.polls
                    .get_mut(&poll_id)
                    .ok_or(PollError::UnknownPoll(poll_id.clone()))?
                    .vote(&user, &option, privacy)?;
            }
            PollOp::Close { poll_id } => self
                .polls
                .get_mut(&poll_id)
                .ok_or(PollError::UnknownPoll(poll_id))?
                .close(),
        }
        Ok(Vec::new())
    }

    pub fn cast(&mut self, op: CastOp) -> Result<Vec<Effect>, HubError> {
        if !op.target.is_shared() || self.registry.by_role(op.target).is_none() {
            return Err(HubError::UnknownTarget(op.target));
        }
        self.require(&op.user, CommandClass::SharedDisplayCast)?;
        match op.content {
            Some(content) => {
                self.casts.insert(
                    op.target,
                    CastOverlay {
                        content,
                        at_ms: self.now_ms,
                    },
                );
            }
            None => {
                self.casts.remove(&op.target);
            }
        }
        Ok(Vec::new())
    }

    pub fn object(&mut self, op: ObjectDetect) -> Result<Vec<Effect>, HubError> {
        match op.state {
            ObjectState::Present => {
                self.table.add_obstacle(op.rect)?;
            }
            ObjectState::Removed => {
                self.table.remove_obstacle(op.rect).ok_or(HubError::UnknownObstacle)?;
            }
        }
        Ok(Vec::new())
    }

    pub fn panel_op(&mut self, op: PanelOp) -> Result<Vec<Effect>, HubError> {
        match op {
            PanelOp::Open { seat, w, h, content } => {
                let id = self.table.place_panel(w, h, seat)?;
                self.panel_content.insert(id, content);
                return Ok(vec![Effect::Reply(json!({ "panel_id": id }))]);
            }
            PanelOp::Move { panel_id, rect } => {
                self.table.move_panel(panel_id, rect)?;
            }
            PanelOp::Rotate {
                panel_id,
                quarter_turns,
            } => {
                self.table.rotate_panel(panel_id, quarter_turns)?;
            }
            PanelOp::Close { panel_id } => {
                self.table.remove_panel(panel_id)?;
                self.panel_content.remove(&panel_id);
            }
        }
        Ok(Vec::new())
    }

    pub fn feed(&mut self, event: &roomcast_core::sports::FeedEvent) -> Result<Vec<Effect>, HubError> {
        let injected = self.sports.ingest(event)?;
        for cue in injected.iter().filter(|c| c.content.kind == ContentKind::Poll) {
            let options = cue.content.poll_options().unwrap_or_default();
            let question = cue
                .content
                .payload
                .get("question")
                .and_then(Value::as_str)
                .unwrap_or_default();
            let mut poll = Poll::new(cue.id.clone(), question, options)?;
            poll.source_cue = Some(cue.id.clone());
            self.open_poll(poll)?;
        }
        Ok(Vec::new())
    }

    pub fn match_op(&mut self, op: MatchOp) -> Result<Vec<Effect>, HubError> {
        match op {
            MatchOp::Add { descriptor } => {
                self.sports.add_match(&descriptor)?;
            }
        }
        Ok(Vec::new())
    }

    pub fn show(&mut self, op: ShowOp) -> Result<Vec<Effect>, HubError> {
        match op.content {
            Some(content) => {
                self.shows.entry(op.role).or_default().insert(
                    op.id,
                    ShowItem {
                        content,
                        attention: op.attention.unwrap_or(AttentionLevel::Focus),
                        at_ms: self.now_ms,
                    },
                );
            }
            None => {
                if let Some(items) = self.shows.get_mut(&op.role) {
                    items.remove(&op.id);
                }
            }
        }
        Ok(Vec::new())
    }

    pub fn presence(&mut self, op: PresenceChange) -> Result<Vec<Effect>, HubError> {
        if op.present {
            self.present.insert(op.user);
        } else {
            self.present.remove(&op.user);
        }
        Ok(Vec::new())
    }

    pub fn environment_change(&mut self, op: EnvironmentChange) -> Result<Vec<Effect>, HubError> {
        self.environment.insert(op.actuator.clone(), op.value.clone());
        Ok(vec![Effect::Environment {
            actuator: op.actuator,
            value: op.value,
            cue_id: None,
            source: "wizard",
        }])
    }

    pub fn preferences(&mut self, op: PreferencesOp) -> Result<Vec<Effect>, HubError> {
        self.prefs.users.insert(
            op.user,
            UserPrefs {
                interests: op.interests,
                privacy_default: op.privacy_default,
            },
        );
        self.prefs_dirty = true;
        Ok(Vec::new())
    }

    pub fn clock_sync(&self, client_ms: Option<u64>) -> Vec<Effect> {
        vec![Effect::Reply(json!({
            "client_ms": client_ms,
            "hub_ms": self.now_ms,
            "position_ms": self.clock.position.0,
            "state": self.clock.state,
            "rate": [*self.clock.rate.numer(), *self.clock.rate.denom()],
        }))]
    }

    /// Privacy of `user`'s current vote in every poll they voted in.
    pub fn votes_of(&self, user: &str) -> BTreeMap<String, (String, Privacy)> {
        self.polls
            .iter()
            .filter_map(|(id, p)| p.votes.get(user).map(|v| (id.clone(), (v.option.clone(), v.privacy))))
            .collect()
    }
}
