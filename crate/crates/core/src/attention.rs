//! Per-surface attention mediation.
//!
//! Each secondary surface runs a small state machine: its mode is derived
//! from the content live on it, whether the viewer asked for on-demand
//! content, and how long it has been idle. Brightness follows the mode.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Activation, AttentionLevel, Cue, DisplayRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceMode {
    Hibernated,
    Ambient,
    Glance,
    Focus,
}

impl From<AttentionLevel> for SurfaceMode {
    fn from(level: AttentionLevel) -> Self {
        match level {
            AttentionLevel::Ambient => SurfaceMode::Ambient,
            AttentionLevel::Glance => SurfaceMode::Glance,
            AttentionLevel::Focus => SurfaceMode::Focus,
        }
    }
}

pub const PULSE_BOOST: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("brightness levels must satisfy 0 < ambient ≤ glance ≤ focus ≤ 1 (got {0}, {1}, {2})")]
    NotMonotone(f64, f64, f64),
    #[error("hibernate_after_ms must be positive")]
    ZeroHibernate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionPolicy {
    pub ambient: f64,
    pub glance: f64,
    pub focus: f64,
    pub hibernate_after_ms: u64,
    pub transition_pulse: bool,
}

impl Default for AttentionPolicy {
    fn default() -> Self {
        AttentionPolicy {
            ambient: 0.3,
            glance: 0.6,
            focus: 0.9,
            hibernate_after_ms: 30_000,
            transition_pulse: true,
        }
    }
}

impl AttentionPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let (a, g, f) = (self.ambient, self.glance, self.focus);
        if !(0.0 < a && a <= g && g <= f && f <= 1.0) {
            return Err(PolicyError::NotMonotone(a, g, f));
        }
        if self.hibernate_after_ms == 0 {
            return Err(PolicyError::ZeroHibernate);
        }
        Ok(())
    }

    pub fn brightness(&self, mode: SurfaceMode) -> f64 {
        match mode {
            SurfaceMode::Hibernated => 0.0,
            SurfaceMode::Ambient => self.ambient,
            SurfaceMode::Glance => self.glance,
            SurfaceMode::Focus => self.focus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    HandGesture,
    VoiceCommand,
    Touch,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Activate,
    Deactivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEvent {
    pub input: InputKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<Intent>,
}

impl InputEvent {
    pub fn activate(input: InputKind) -> Self {
        InputEvent {
            input,
            intent: Some(Intent::Activate),
        }
    }

    pub fn plain(input: InputKind) -> Self {
        InputEvent { input, intent: None }
    }

    /// Only mid-air gestures and voice commands toggle on-demand content.
    fn toggle(&self) -> Option<Intent> {
        match self.input {
            InputKind::HandGesture | InputKind::VoiceCommand => self.intent,
            InputKind::Touch | InputKind::Remote => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceAttentionState {
    pub display_id: String,
    pub role: DisplayRole,
    pub mode: SurfaceMode,
    pub brightness: f64,
    pub last_input_at: u64,
    pub on_demand_active: bool,
    pub supports_on_demand: bool,
}

impl SurfaceAttentionState {
    /// A freshly registered surface: idle since `now`, hibernated unless it
    /// is the TV, which carries the main media and never sleeps.
    pub fn new(
        display_id: impl Into<String>,
        role: DisplayRole,
        supports_on_demand: bool,
        now: u64,
        policy: &AttentionPolicy,
    ) -> Self {
        let mode = if hibernation_exempt(role) {
            SurfaceMode::Ambient
        } else {
            SurfaceMode::Hibernated
        };
        SurfaceAttentionState {
            display_id: display_id.into(),
            role,
            mode,
            brightness: policy.brightness(mode),
            last_input_at: now,
            on_demand_active: false,
            supports_on_demand,
        }
    }
}

pub fn hibernation_exempt(role: DisplayRole) -> bool {
    role == DisplayRole::PrimaryTv
}

pub fn on_input(
    state: &SurfaceAttentionState,
    event: InputEvent,
    now: u64,
    policy: &AttentionPolicy,
) -> SurfaceAttentionState {
    let mut next = state.clone();
    next.last_input_at = now;
    match event.toggle() {
        Some(Intent::Activate) if state.supports_on_demand => {
            next.on_demand_active = true;
            if state.mode == SurfaceMode::Hibernated {
                next.mode = SurfaceMode::Glance;
                next.brightness = policy.brightness(SurfaceMode::Glance);
            }
        }
        Some(Intent::Deactivate) => next.on_demand_active = false,
        _ => {}
    }
    next
}

pub fn derive_mode(active_cues: &[Cue], on_demand_active: bool, idle_ms: u64, policy: &AttentionPolicy) -> SurfaceMode {
    if active_cues.iter().any(|c| c.attention == AttentionLevel::Focus) {
        SurfaceMode::Focus
    } else if on_demand_active && idle_ms < policy.hibernate_after_ms {
        SurfaceMode::Glance
    } else if active_cues.iter().any(|c| c.activation == Activation::Auto) {
        SurfaceMode::Ambient
    } else {
        SurfaceMode::Hibernated
    }
}

/// One attention step at wall time `now`.
pub fn step(
    state: &SurfaceAttentionState,
    now: u64,
    active_cues: &[Cue],
    policy: &AttentionPolicy,
) -> SurfaceAttentionState {
    let idle = now.saturating_sub(state.last_input_at);
    let mut mode = derive_mode(active_cues, state.on_demand_active, idle, policy);
    if hibernation_exempt(state.role) {
        mode = mode.max(SurfaceMode::Ambient);
    }
    let mut next = state.clone();
    let settled = policy.brightness(mode);
    next.brightness = if policy.transition_pulse && mode > state.mode {
        (settled + PULSE_BOOST).min(1.0)
    } else {
        settled
    };
    if mode == SurfaceMode::Hibernated {
        next.on_demand_active = false;
    }
    next.mode = mode;
    next
}
