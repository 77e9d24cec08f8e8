//! Media transport clock and cue scheduling.
//!
//! The scheduler answers "which cues are live at t" with a stabbing query
//! over cues sorted by start, pruned by a running maximum of end times.
//! [`crate::track::cues_at`] is the linear-scan reference it must agree with.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Activation, Cue, DisplayRole, MediaTime};
use crate::track::AmbientTrack;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimelineError {
    #[error("seek target {target} outside [0, {duration}]")]
    SeekOutOfRange { target: u64, duration: u64 },
    #[error("playback rate must have a nonzero denominator")]
    BadRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlayState {
    Playing,
    Paused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Transport {
    Play,
    Pause,
    Seek { t_ms: u64 },
}

/// Transport clock. Position advances by `rate · wall_dt`; the fractional
/// millisecond left over is kept in `carry` (in units of `1/rate.denom()` ms)
/// so that slow rational rates accumulate without drift.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaClock {
    pub position: MediaTime,
    pub duration: MediaTime,
    pub rate: Ratio<u64>,
    pub state: PlayState,
    carry: u64,
}

impl MediaClock {
    pub fn new(duration: MediaTime) -> Self {
        MediaClock {
            position: MediaTime::ZERO,
            duration,
            rate: Ratio::from_integer(1),
            state: PlayState::Paused,
            carry: 0,
        }
    }

    pub fn is_playing(&self) -> bool {
        self.state == PlayState::Playing
    }

    pub fn with_rate(mut self, numer: u64, denom: u64) -> Result<Self, TimelineError> {
        if denom == 0 {
            return Err(TimelineError::BadRate);
        }
        self.rate = Ratio::new(numer, denom);
        self.carry = 0;
        Ok(self)
    }
}

/// Advances a playing clock by `wall_dt` milliseconds, clamped to the
/// media duration. Paused clocks do not move.
pub fn tick(clock: &MediaClock, wall_dt: u64) -> MediaClock {
    let mut next = clock.clone();
    if clock.state == PlayState::Paused {
        return next;
    }
    let denom = *clock.rate.denom();
    let scaled = clock.rate.numer() * wall_dt + clock.carry;
    let whole = scaled / denom;
    let position = clock.position.0.saturating_add(whole);
    if position >= clock.duration.0 {
        next.position = clock.duration;
        next.carry = 0;
    } else {
        next.position = MediaTime(position);
        next.carry = scaled % denom;
    }
    next
}

pub fn apply_transport(clock: &MediaClock, cmd: Transport) -> Result<MediaClock, TimelineError> {
    let mut next = clock.clone();
    match cmd {
        Transport::Play => next.state = PlayState::Playing,
        Transport::Pause => next.state = PlayState::Paused,
        Transport::Seek { t_ms } => {
            if t_ms > clock.duration.0 {
                return Err(TimelineError::SeekOutOfRange {
                    target: t_ms,
                    duration: clock.duration.0,
                });
            }
            next.position = MediaTime(t_ms);
            next.carry = 0;
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineState {
    pub active: BTreeSet<String>,
    /// Environment-action cues already fired for the current stay inside
    /// their window.
    pub fired: BTreeSet<String>,
}

/// Result of moving the play head. Id lists follow canonical track order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Advance {
    pub state: TimelineState,
    pub entered: Vec<String>,
    pub exited: Vec<String>,
    /// Cues whose whole window fell inside one playback step, so they were
    /// never observed as active.
    pub passed: Vec<String>,
    pub actions_to_fire: Vec<String>,
}

/// Interval index over a track's cues.
#[derive(Debug, Clone)]
pub struct Scheduler {
    /// (start, end, cue index) sorted by start then cue index.
    spans: Vec<(u64, u64, usize)>,
    /// `max_end[i]` = max end over `spans[..=i]`.
    max_end: Vec<u64>,
}

impl Scheduler {
    pub fn new(track: &AmbientTrack) -> Self {
        let mut spans: Vec<_> = track
            .cues
            .iter()
            .enumerate()
            .map(|(i, c)| (c.window.start.0, c.window.end.0, i))
            .collect();
        spans.sort_unstable();
        let max_end = spans
            .iter()
            .scan(0u64, |m, &(_, end, _)| {
                *m = (*m).max(end);
                Some(*m)
            })
            .collect();
        Scheduler { spans, max_end }
    }

    /// Indices (into `track.cues`) of every cue with `start ≤ t < end`,
    /// sorted ascending.
    pub fn active_at(&self, t: MediaTime) -> Vec<usize> {
        let t = t.0;
        let upper = self.spans.partition_point(|&(start, _, _)| start <= t);
        let mut hits = Vec::new();
        for i in (0..upper).rev() {
            if self.max_end[i] <= t {
                break;
            }
            let (_, end, idx) = self.spans[i];
            if end > t {
                hits.push(idx);
            }
        }
        hits.sort_unstable();
        hits
    }

    /// Cues whose window lies strictly after `from` and ends no later than
    /// `to`, i.e. fully traversed by forward playback over `(from, to]`.
    fn traversed(&self, from: u64, to: u64) -> Vec<usize> {
        let lo = self.spans.partition_point(|&(start, _, _)| start <= from);
        let hi = self.spans.partition_point(|&(start, _, _)| start <= to);
        let mut hits: Vec<_> = self.spans[lo..hi]
            .iter()
            .filter(|&&(_, end, _)| end <= to)
            .map(|&(_, _, idx)| idx)
            .collect();
        hits.sort_unstable();
        hits
    }
}

fn ids(track: &AmbientTrack, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| track.cues[i].id.clone()).collect()
}

/// Moves the play head from `old_pos` to `new_pos` and reports what changed.
///
/// An environment action fires when it is entered and not already fired for
/// this stay in its window; leaving the window (by any means) re-arms it.
pub fn advance_with(
    track: &AmbientTrack,
    scheduler: &Scheduler,
    ts: &TimelineState,
    old_pos: MediaTime,
    new_pos: MediaTime,
    is_seek: bool,
) -> Advance {
    let now_idx = scheduler.active_at(new_pos);
    let active: BTreeSet<String> = now_idx.iter().map(|&i| track.cues[i].id.clone()).collect();

    let entered_idx: Vec<usize> = now_idx
        .iter()
        .copied()
        .filter(|&i| !ts.active.contains(&track.cues[i].id))
        .collect();
    let mut exited_idx: Vec<usize> = track
        .cues
        .iter()
        .enumerate()
        .filter(|(_, c)| ts.active.contains(&c.id) && !active.contains(&c.id))
        .map(|(i, _)| i)
        .collect();
    exited_idx.sort_unstable();

    let passed_idx = if !is_seek && new_pos > old_pos {
        scheduler
            .traversed(old_pos.0, new_pos.0)
            .into_iter()
            .filter(|&i| !ts.active.contains(&track.cues[i].id))
            .collect()
    } else {
        Vec::new()
    };

    let mut fire_idx: Vec<usize> = entered_idx
        .iter()
        .chain(passed_idx.iter())
        .copied()
        .filter(|&i| track.cues[i].is_environment_action() && !ts.fired.contains(&track.cues[i].id))
        .collect();
    fire_idx.sort_unstable();

    let mut fired: BTreeSet<String> = ts.fired.intersection(&active).cloned().collect();
    for &i in &fire_idx {
        if active.contains(&track.cues[i].id) {
            fired.insert(track.cues[i].id.clone());
        }
    }

    Advance {
        state: TimelineState { active, fired },
        entered: ids(track, &entered_idx),
        exited: ids(track, &exited_idx),
        passed: ids(track, &passed_idx),
        actions_to_fire: ids(track, &fire_idx),
    }
}

/// Convenience form of [`advance_with`] that builds a throwaway scheduler.
pub fn advance(
    track: &AmbientTrack,
    ts: &TimelineState,
    old_pos: MediaTime,
    new_pos: MediaTime,
    is_seek: bool,
) -> Advance {
    advance_with(track, &Scheduler::new(track), ts, old_pos, new_pos, is_seek)
}

/// Per-role render lists. Auto cues always show; on-demand cues only where
/// the surface is active. Environment actions never render, they go to the
/// actuators instead.
pub fn active_render_set(
    track: &AmbientTrack,
    ts: &TimelineState,
    surface_active: &BTreeMap<DisplayRole, bool>,
) -> BTreeMap<DisplayRole, Vec<Cue>> {
    let mut out: BTreeMap<DisplayRole, Vec<Cue>> = DisplayRole::ALL.iter().map(|&r| (r, Vec::new())).collect();
    for cue in &track.cues {
        if !ts.active.contains(&cue.id) || cue.is_environment_action() {
            continue;
        }
        let shown = match cue.activation {
            Activation::Auto => true,
            Activation::OnDemand => surface_active.get(&cue.target).copied().unwrap_or(false),
        };
        if shown {
            out.entry(cue.target).or_default().push(cue.clone());
        }
    }
    for list in out.values_mut() {
        list.sort_by(Cue::render_cmp);
    }
    out
}

/// A track bound to its scheduler and a running state. This is what the hub
/// drives; it owns the only mutable copy of the state.
#[derive(Debug, Clone)]
pub struct Timeline {
    track: Arc<AmbientTrack>,
    scheduler: Arc<Scheduler>,
    state: TimelineState,
    position: MediaTime,
}

impl Timeline {
    pub fn new(track: Arc<AmbientTrack>) -> Self {
        let scheduler = Arc::new(Scheduler::new(&track));
        Timeline {
            track,
            scheduler,
            state: TimelineState::default(),
            position: MediaTime::ZERO,
        }
    }

    pub fn track(&self) -> &AmbientTrack {
        &self.track
    }

    pub fn state(&self) -> &TimelineState {
        &self.state
    }

    pub fn position(&self) -> MediaTime {
        self.position
    }

    /// Moves to `new_pos` and commits the resulting state.
    pub fn move_to(&mut self, new_pos: MediaTime, is_seek: bool) -> Advance {
        let adv = advance_with(
            &self.track,
            &self.scheduler,
            &self.state,
            self.position,
            new_pos,
            is_seek,
        );
        self.state = adv.state.clone();
        self.position = new_pos;
        adv
    }

    pub fn render_set(&self, surface_active: &BTreeMap<DisplayRole, bool>) -> BTreeMap<DisplayRole, Vec<Cue>> {
        active_render_set(&self.track, &self.state, surface_active)
    }
}
