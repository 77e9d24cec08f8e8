//! Acceptance suite. Prints one PASS/FAIL line per criterion with the
//! measured value and exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use roomcast_core::arbiter::{self, ControlToken};
use roomcast_core::attention::{self, AttentionPolicy, InputEvent, InputKind, SurfaceAttentionState, SurfaceMode};
use roomcast_core::layout::{Rect, SeatSide, SurfaceLayout};
use roomcast_core::model::{
    Activation, AttentionLevel, ContentDescriptor, ContentKind, Cue, DisplayRole, MediaTime, Window,
};
use roomcast_core::plot::{character_position, faction_color, parse_plot};
use roomcast_core::sports::{heatmap, parse_feed, FeedEvent, MatchDescriptor, SportsBoard, SportsConfig, SportsError};
use roomcast_core::timeline::{apply_transport, tick, MediaClock, Timeline, Transport};
use roomcast_core::track::{cues_at, parse_track, AmbientTrack};
use roomcast_hub::prefs::Preferences;
use roomcast_hub::protocol::{Addressed, Message};
use roomcast_hub::registry::DisplayRegistration;
use roomcast_hub::sim::SimRoom;
use roomcast_hub::{EngineConfig, Hub, Session};

const SEED: u64 = 0x5eed_2026;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

fn read_fixture(rel: &str) -> Vec<u8> {
    std::fs::read(fixture(rel)).unwrap_or_else(|e| panic!("fixture {rel}: {e}"))
}

// ---------------------------------------------------------------- tracks

fn content(kind_ix: usize) -> ContentDescriptor {
    let kind = [
        ContentKind::Soundtrack,
        ContentKind::Actor,
        ContentKind::Location,
        ContentKind::Stat,
        ContentKind::Poll,
        ContentKind::EnvironmentAction,
    ][kind_ix % 6];
    let c = ContentDescriptor::new(kind);
    match kind {
        ContentKind::Poll => c.with("options", vec!["a", "b"]).with("question", "?"),
        ContentKind::EnvironmentAction => c.with("actuator", "lights").with("value", 0.2),
        _ => c.with("title", format!("item {kind_ix}")),
    }
}

fn random_track(rng: &mut ChaCha8Rng, max_cues: usize) -> AmbientTrack {
    let duration = rng.gen_range(2..600_000u64);
    let n = rng.gen_range(0..=max_cues);
    let mut cues = Vec::with_capacity(n);
    for i in 0..n {
        let start = rng.gen_range(0..duration - 1);
        let len = rng.gen_range(1..60_000u64);
        let content = content(rng.gen_range(0..6));
        let activation = if rng.gen_bool(0.2) && content.kind != ContentKind::EnvironmentAction {
            Activation::OnDemand
        } else {
            Activation::Auto
        };
        cues.push(Cue {
            id: format!("c{i:03}"),
            window: Window::new(start, (start + len).min(duration)),
            target: DisplayRole::ALL[rng.gen_range(0..4)],
            content,
            attention: [AttentionLevel::Ambient, AttentionLevel::Glance, AttentionLevel::Focus][rng.gen_range(0..3)],
            activation,
            priority: rng.gen_range(-2..3),
        });
    }
    AmbientTrack::new("media", MediaTime(duration), cues).expect("generated cues are valid")
}

fn scan(track: &AmbientTrack, t: MediaTime) -> BTreeSet<String> {
    track
        .cues
        .iter()
        .filter(|c| c.window.start <= t && t < c.window.end)
        .map(|c| c.id.clone())
        .collect()
}

fn scheduler_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let started = Instant::now();
    let (mut steps, mut mismatches) = (0u64, 0u64);
    for _ in 0..1000 {
        let track = random_track(&mut rng, 100);
        let d = track.duration.0;
        let mut clock = MediaClock::new(track.duration);
        let mut tl = Timeline::new(Arc::new(track.clone()));
        tl.move_to(MediaTime::ZERO, true);
        for _ in 0..rng.gen_range(1..=200) {
            let (next, seek) = match rng.gen_range(0..8) {
                0..=3 => (tick(&clock, rng.gen_range(0..20_000)), false),
                4 => (apply_transport(&clock, Transport::Play).unwrap(), false),
                5 => (apply_transport(&clock, Transport::Pause).unwrap(), false),
                _ => (
                    apply_transport(
                        &clock,
                        Transport::Seek {
                            t_ms: rng.gen_range(0..d),
                        },
                    )
                    .unwrap(),
                    true,
                ),
            };
            clock = next;
            tl.move_to(clock.position, seek);
            steps += 1;
            let expected = scan(&track, clock.position);
            let mut ok = tl.state().active == expected;
            if clock.position < track.duration {
                let indexed: BTreeSet<String> = cues_at(&track, clock.position)
                    .unwrap()
                    .into_iter()
                    .map(|c| c.id.clone())
                    .collect();
                ok &= indexed == expected;
            }
            if !ok {
                mismatches += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} mismatches over {steps} steps on 1000 tracks, {secs:.2} s (limit 10 s)"),
    )
}

fn action_firing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut tracks = vec![parse_track(&read_fixture("tracks/film.json")).unwrap()];
    tracks.extend((0..200).map(|_| random_track(&mut rng, 60)));
    let (mut contiguous_bad, mut seek_bad, mut actions, mut scripts) = (0, 0, 0, 0);
    for track in &tracks {
        let expected: Vec<&str> = track
            .cues
            .iter()
            .filter(|c| c.is_environment_action())
            .map(|c| c.id.as_str())
            .collect();
        actions += expected.len();

        let mut clock = apply_transport(&MediaClock::new(track.duration), Transport::Play).unwrap();
        let mut tl = Timeline::new(Arc::new(track.clone()));
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let mut record = |ids: Vec<String>| ids.into_iter().for_each(|id| *counts.entry(id).or_default() += 1);
        record(tl.move_to(MediaTime::ZERO, true).actions_to_fire);
        while clock.position < track.duration {
            clock = tick(&clock, rng.gen_range(1..15_000));
            record(tl.move_to(clock.position, false).actions_to_fire);
        }
        contiguous_bad += expected.iter().filter(|id| counts.get(**id) != Some(&1)).count();
        contiguous_bad += counts.keys().filter(|id| !expected.contains(&id.as_str())).count();

        for cue in track.cues.iter().filter(|c| c.is_environment_action()) {
            let inside = cue.window.start;
            let outside = if cue.window.end < track.duration {
                cue.window.end
            } else if cue.window.start.0 > 0 {
                MediaTime(cue.window.start.0 - 1)
            } else {
                continue;
            };
            scripts += 1;
            let mut tl = Timeline::new(Arc::new(track.clone()));
            tl.move_to(outside, true);
            let mut fired = 0;
            for pos in [inside, outside, inside] {
                fired += tl
                    .move_to(pos, true)
                    .actions_to_fire
                    .iter()
                    .filter(|id| **id == cue.id)
                    .count();
            }
            if fired != 2 {
                seek_bad += 1;
            }
        }
    }
    outcome(
        contiguous_bad == 0 && seek_bad == 0,
        format!(
            "contiguous: {contiguous_bad} of {actions} actions not fired exactly once; seek in/out/in: {seek_bad} of {scripts} scripts not firing exactly twice"
        ),
    )
}

// ----------------------------------------------------------------- token

#[derive(Clone, Copy, Debug)]
enum TokenOp {
    Request(usize),
    Release(usize),
    Pass(usize, usize),
}

const USERS: [&str; 3] = ["u0", "u1", "u2"];

fn key(t: &ControlToken) -> (Option<String>, Vec<String>) {
    (t.holder.clone(), t.queue.iter().cloned().collect())
}

/// Checks one transition against the queue discipline; `None` when it holds.
fn token_violation(before: &ControlToken, op: TokenOp) -> Option<String> {
    let holds = |u: &str| before.holder.as_deref() == Some(u);
    let (after, expected_holder, expected_queue): (ControlToken, Option<String>, VecDeque<String>) = match op {
        TokenOp::Request(u) => {
            let u = USERS[u];
            let after = arbiter::request(before, u);
            let (h, mut q) = (before.holder.clone(), before.queue.clone());
            match &h {
                None => return check_state(&after, Some(u.to_string()), q, op),
                Some(x) if x == u => {}
                Some(_) if q.iter().any(|w| w == u) => {}
                Some(_) => q.push_back(u.to_string()),
            }
            (after, h, q)
        }
        TokenOp::Release(u) => {
            let u = USERS[u];
            match arbiter::release(before, u) {
                Err(_) if !holds(u) => return None,
                Err(e) => return Some(format!("{op:?} by holder failed: {e}")),
                Ok(_) if !holds(u) => return Some(format!("{op:?} accepted from non-holder")),
                Ok(after) => {
                    let mut q = before.queue.clone();
                    let head = q.pop_front();
                    (after, head, q)
                }
            }
        }
        TokenOp::Pass(u, v) => {
            let (u, v) = (USERS[u], USERS[v]);
            match arbiter::pass(before, u, v) {
                Err(_) if !holds(u) => return None,
                Err(e) => return Some(format!("{op:?} by holder failed: {e}")),
                Ok(_) if !holds(u) => return Some(format!("{op:?} accepted from non-holder")),
                Ok(after) => {
                    let q = before.queue.iter().filter(|w| *w != v).cloned().collect();
                    (after, Some(v.to_string()), q)
                }
            }
        }
    };
    check_state(&after, expected_holder, expected_queue, op)
}

fn check_state(after: &ControlToken, holder: Option<String>, queue: VecDeque<String>, op: TokenOp) -> Option<String> {
    if let Err(e) = after.check_invariants() {
        return Some(format!("{op:?}: {e}"));
    }
    if let Some(h) = &after.holder {
        if after.queue.contains(h) {
            return Some(format!("{op:?}: holder {h} also queued"));
        }
    }
    if after.holder != holder || after.queue != queue {
        return Some(format!(
            "{op:?}: got {:?}, expected holder {holder:?} queue {queue:?}",
            key(after)
        ));
    }
    None
}

fn token_exhaustive() -> Outcome {
    let started = Instant::now();
    let mut ops = Vec::new();
    for u in 0..3 {
        ops.push(TokenOp::Request(u));
        ops.push(TokenOp::Release(u));
        for v in 0..3 {
            if u != v {
                ops.push(TokenOp::Pass(u, v));
            }
        }
    }
    // Every sequence of length <= 8 passes through states of this frontier,
    // and each check depends only on (state, op).
    let mut seen: BTreeMap<(Option<String>, Vec<String>), ControlToken> = BTreeMap::new();
    let start = ControlToken::default();
    seen.insert(key(&start), start.clone());
    let mut frontier = vec![start];
    let (mut transitions, mut violations) = (0u64, Vec::new());
    for _depth in 0..8 {
        let mut next = Vec::new();
        for state in &frontier {
            for &op in &ops {
                transitions += 1;
                if let Some(v) = token_violation(state, op) {
                    violations.push(v);
                }
                let after = match op {
                    TokenOp::Request(u) => arbiter::request(state, USERS[u]),
                    TokenOp::Release(u) => arbiter::release(state, USERS[u]).unwrap_or_else(|_| state.clone()),
                    TokenOp::Pass(u, v) => arbiter::pass(state, USERS[u], USERS[v]).unwrap_or_else(|_| state.clone()),
                };
                if let std::collections::btree_map::Entry::Vacant(e) = seen.entry(key(&after)) {
                    e.insert(after.clone());
                    next.push(after);
                }
            }
        }
        frontier = next;
    }
    let secs = started.elapsed().as_secs_f64();
    let sequences = (ops.len() as u64).pow(8);
    outcome(
        violations.is_empty() && secs < 30.0,
        format!(
            "{} violations; {} reachable states, {transitions} transitions checked (all {sequences} sequences of depth 8), {secs:.2} s (limit 30 s){}",
            violations.len(),
            seen.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- sports

fn sports_feed() -> Outcome {
    let config = SportsConfig::default();
    let bytes = read_fixture("feeds/m1.ndjson");
    let events = parse_feed(&bytes).unwrap();
    let descriptor: MatchDescriptor = serde_json::from_slice(&read_fixture("matches/m1.json")).unwrap();
    let mut board = SportsBoard::new(config.clone());
    board.add_match(&descriptor).unwrap();
    board.replay(&events).unwrap();
    let m = board.get("m1").unwrap();

    // independent reading of the raw feed
    let mut raw: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for line in std::str::from_utf8(&bytes)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
    {
        let v: Value = serde_json::from_str(line).unwrap();
        if v["type"] == "position-sample" {
            raw.entry(v["player_id"].as_str().unwrap().to_string())
                .or_default()
                .push((v["x"].as_f64().unwrap(), v["y"].as_f64().unwrap()));
        }
    }
    let total: usize = raw.values().map(Vec::len).sum();

    let mut worst_rel = 0.0f64;
    let mut cell_mismatches = 0usize;
    let mut sum_mismatches = 0usize;
    let (rows, cols) = (config.heatmap_rows, config.heatmap_cols);
    let brute = |pts: &[(f64, f64)]| -> Vec<u64> {
        let mut out = vec![0u64; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[r * cols + c] = pts
                    .iter()
                    .filter(|(x, y)| {
                        let (sy, sx) = (y * rows as f64, x * cols as f64);
                        let in_row = sy >= r as f64 && (sy < (r + 1) as f64 || r == rows - 1);
                        let in_col = sx >= c as f64 && (sx < (c + 1) as f64 || c == cols - 1);
                        in_row && in_col
                    })
                    .count() as u64;
            }
        }
        out
    };
    let mut all_samples = Vec::new();
    for (pid, pts) in &raw {
        let Some(p) = m.players.get(pid) else {
            sum_mismatches += 1;
            continue;
        };
        let oracle: f64 = pts
            .windows(2)
            .map(|w| (((w[1].0 - w[0].0) * 105.0).powi(2) + ((w[1].1 - w[0].1) * 68.0).powi(2)).sqrt())
            .sum();
        let rel = (p.cumulative_distance_m - oracle).abs() / oracle.max(f64::MIN_POSITIVE);
        worst_rel = worst_rel.max(rel);
        let h = heatmap(&p.samples, rows, cols);
        if h.total() != pts.len() as u64 {
            sum_mismatches += 1;
        }
        cell_mismatches += h.counts.iter().zip(brute(pts)).filter(|(a, b)| **a != *b).count();
        all_samples.extend(p.samples.iter().copied());
    }
    let whole = heatmap(&all_samples, rows, cols);
    let all_pts: Vec<(f64, f64)> = raw.values().flatten().copied().collect();
    cell_mismatches += whole
        .counts
        .iter()
        .zip(brute(&all_pts))
        .filter(|(a, b)| **a != *b)
        .count();
    if whole.total() != total as u64 {
        sum_mismatches += 1;
    }

    let mut capped = SportsBoard::new(config);
    let mut accepted = 0;
    let mut fifth = None;
    for n in 1..=5 {
        let d: MatchDescriptor = serde_json::from_slice(&read_fixture(&format!("matches/m{n}.json"))).unwrap();
        match capped.add_match(&d) {
            Ok(_) => accepted += 1,
            Err(e) if n == 5 => fifth = Some(e),
            Err(_) => {}
        }
    }
    let cap_ok = accepted == 4 && matches!(fifth, Some(SportsError::CapacityExceeded));

    outcome(
        total == 2400 && worst_rel <= 1e-9 && cell_mismatches == 0 && sum_mismatches == 0 && cap_ok,
        format!(
            "{total} samples; worst distance rel err {worst_rel:.2e} (limit 1e-9); heatmap total {} , {cell_mismatches} cell mismatches, {sum_mismatches} sum mismatches; {accepted} matches accepted, 5th {}",
            whole.total(),
            match &fifth {
                Some(e) => format!("rejected ({e})"),
                None => "accepted".to_string(),
            }
        ),
    )
}

fn key_moments() -> Outcome {
    let config = EngineConfig::default();
    let tick_ms = config.tick_ms;
    let session = Session::new(config, Session::empty_track(), None, Preferences::default());
    let mut room = SimRoom::new(Hub::new(session), tick_ms);
    room.connect(DisplayRegistration::new("wall", DisplayRole::SurroundWall))
        .unwrap();
    let descriptor: Value = serde_json::from_slice(&read_fixture("matches/m1.json")).unwrap();
    let replies = room.send("match-op", json!({ "op": "add", "descriptor": descriptor }));
    if replies.iter().any(|m| m.kind == "error") {
        return outcome(false, format!("match-op add rejected: {replies:?}"));
    }
    let events = parse_feed(&read_fixture("feeds/m1.ndjson")).unwrap();
    let mut latencies: Vec<(String, Option<u64>)> = Vec::new();
    for ev in &events {
        let replies = room.send("feed", json!({ "event": ev }));
        if let Some(e) = replies.iter().find(|m| m.kind == "error") {
            return outcome(false, format!("feed event rejected: {}", e.to_text()));
        }
        let (label, want_kind, moment) = match ev {
            FeedEvent::Penalty { .. } => ("penalty replay", "replay-video", Some("penalty")),
            FeedEvent::VarReview { .. } => ("var poll", "poll", None),
            _ => continue,
        };
        let shown = room.assert_eventually("wall", tick_ms, |d| {
            d.content().iter().any(|c| {
                c["kind"] == want_kind
                    && c["attention"] == "focus"
                    && moment.is_none_or(|m| c["payload"]["moment"] == m)
            })
        });
        latencies.push((label.to_string(), shown.ok()));
    }
    let found = |label: &str| latencies.iter().any(|(l, t)| l == label && t.is_some());
    let pass =
        found("penalty replay") && found("var poll") && latencies.iter().all(|(_, t)| t.is_some_and(|t| t <= tick_ms));
    let parts: Vec<String> = latencies
        .iter()
        .map(|(l, t)| match t {
            Some(t) => format!("{l} after {t} ms"),
            None => format!("{l} missing"),
        })
        .collect();
    outcome(
        pass,
        format!(
            "{} feed events; {} (limit one tick = {tick_ms} ms)",
            events.len(),
            parts.join(", ")
        ),
    )
}

// ------------------------------------------------------------- attention

fn attention_sequences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let modes = [
        SurfaceMode::Hibernated,
        SurfaceMode::Ambient,
        SurfaceMode::Glance,
        SurfaceMode::Focus,
    ];
    let pool: Vec<Cue> = (0..12)
        .map(|i| Cue {
            id: format!("a{i}"),
            window: Window::new(0, 1),
            target: DisplayRole::SurroundWall,
            content: content(i % 5),
            attention: [AttentionLevel::Ambient, AttentionLevel::Glance, AttentionLevel::Focus][i % 3],
            activation: if i % 4 == 3 {
                Activation::OnDemand
            } else {
                Activation::Auto
            },
            priority: 0,
        })
        .collect();
    let (mut monotone_bad, mut hibernate_bad, mut wake_bad, mut activations) = (0, 0, 0, 0);
    for _ in 0..10_000 {
        let mut levels = [
            rng.gen_range(0.01..=1.0),
            rng.gen_range(0.01..=1.0),
            rng.gen_range(0.01..=1.0f64),
        ];
        levels.sort_by(f64::total_cmp);
        let policy = AttentionPolicy {
            ambient: levels[0],
            glance: levels[1],
            focus: levels[2],
            hibernate_after_ms: rng.gen_range(1_000..60_000),
            transition_pulse: rng.gen_bool(0.5),
        };
        policy.validate().unwrap();
        if modes
            .windows(2)
            .any(|w| policy.brightness(w[0]) > policy.brightness(w[1]))
        {
            monotone_bad += 1;
        }
        let role = DisplayRole::ALL[rng.gen_range(0..4)];
        let supports = rng.gen_bool(0.8);
        let mut now = 0u64;
        let mut s = SurfaceAttentionState::new("s", role, supports, now, &policy);
        let mut cues: Vec<Cue> = Vec::new();
        let mut settled: Vec<(SurfaceMode, f64)> = Vec::new();
        let mut check_step = |before: &SurfaceAttentionState, after: &SurfaceAttentionState, bad: &mut i32| {
            let base = policy.brightness(after.mode);
            let rose = after.mode > before.mode;
            if policy.transition_pulse && rose {
                if after.brightness < base {
                    *bad += 1;
                }
            } else if after.brightness != base {
                *bad += 1;
            } else {
                settled.push((after.mode, after.brightness));
            }
        };
        for _ in 0..rng.gen_range(1..60) {
            match rng.gen_range(0..4) {
                0 => {
                    let kind = [
                        InputKind::HandGesture,
                        InputKind::VoiceCommand,
                        InputKind::Touch,
                        InputKind::Remote,
                    ][rng.gen_range(0..4)];
                    let activate = rng.gen_bool(0.6);
                    let ev = if activate {
                        InputEvent::activate(kind)
                    } else {
                        InputEvent::plain(kind)
                    };
                    let was_hibernated = s.mode == SurfaceMode::Hibernated;
                    s = attention::on_input(&s, ev, now, &policy);
                    if activate && supports && matches!(kind, InputKind::HandGesture | InputKind::VoiceCommand) {
                        activations += 1;
                        let next = attention::step(&s, now, &cues, &policy);
                        if (was_hibernated && s.mode < SurfaceMode::Glance) || next.mode < SurfaceMode::Glance {
                            wake_bad += 1;
                        }
                        check_step(&s, &next, &mut monotone_bad);
                        s = next;
                    }
                }
                1 => {
                    cues = pool.iter().filter(|_| rng.gen_bool(0.15)).cloned().collect();
                }
                _ => {
                    now += rng.gen_range(0..20_000);
                    let next = attention::step(&s, now, &cues, &policy);
                    check_step(&s, &next, &mut monotone_bad);
                    s = next;
                }
            }
        }
        // idle tail: no input, no cues
        let dt = rng.gen_range(1..5_000u64);
        let deadline = s.last_input_at + policy.hibernate_after_ms;
        let mut steps_past = 0;
        let mut asleep = false;
        while steps_past < 2 {
            now += dt;
            let next = attention::step(&s, now, &[], &policy);
            check_step(&s, &next, &mut monotone_bad);
            s = next;
            if now >= deadline {
                steps_past += 1;
                let want = if attention::hibernation_exempt(role) {
                    SurfaceMode::Ambient
                } else {
                    SurfaceMode::Hibernated
                };
                if s.mode == want {
                    asleep = true;
                    break;
                }
            }
        }
        if !asleep {
            hibernate_bad += 1;
        }
        for (i, lo) in modes.iter().enumerate() {
            for hi in &modes[i + 1..] {
                let max_lo = settled
                    .iter()
                    .filter(|(m, _)| m == lo)
                    .map(|(_, b)| *b)
                    .fold(f64::MIN, f64::max);
                let min_hi = settled
                    .iter()
                    .filter(|(m, _)| m == hi)
                    .map(|(_, b)| *b)
                    .fold(f64::MAX, f64::min);
                if max_lo > min_hi {
                    monotone_bad += 1;
                }
            }
        }
    }
    outcome(
        monotone_bad == 0 && hibernate_bad == 0 && wake_bad == 0,
        format!(
            "10000 sequences: {monotone_bad} brightness violations, {hibernate_bad} late hibernations (limit timeout + 1 step), {wake_bad} of {activations} activations below glance"
        ),
    )
}

// ---------------------------------------------------------------- layout

fn overlap(a: &Rect, b: &Rect) -> i64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    w.max(0) * h.max(0)
}

fn total_overlap(l: &SurfaceLayout) -> i64 {
    let vis: Vec<&Rect> = l.panels.values().filter(|p| !p.hidden).map(|p| &p.rect).collect();
    let mut area = 0;
    for (i, a) in vis.iter().enumerate() {
        area += vis[i + 1..].iter().map(|b| overlap(a, b)).sum::<i64>();
        area += l.obstacles.iter().map(|o| overlap(a, o)).sum::<i64>();
        if a.x < 0 || a.y < 0 || a.x + a.w > l.width || a.y + a.h > l.height {
            area += 1;
        }
    }
    area
}

fn random_rect(rng: &mut ChaCha8Rng, width: i64, height: i64) -> Rect {
    let w = rng.gen_range(20..=width / 3);
    let h = rng.gen_range(20..=height / 3);
    Rect::new(rng.gen_range(0..=width - w), rng.gen_range(0..=height - h), w, h)
}

/// Closest free grid placement by exhaustive search, as squared distance in
/// doubled coordinates.
fn brute_force_best(l: &SurfaceLayout, w: i64, h: i64, seat: SeatSide) -> Option<f64> {
    let (ax, ay) = match seat {
        SeatSide::Left => (0.0, l.height as f64 / 2.0),
        SeatSide::Right => (l.width as f64, l.height as f64 / 2.0),
    };
    let on_grid = |v: i64, max: i64| v % l.grid_step == 0 || v == max;
    let mut best: Option<f64> = None;
    for y in 0..=l.height - h {
        if !on_grid(y, l.height - h) {
            continue;
        }
        for x in 0..=l.width - w {
            if !on_grid(x, l.width - w) {
                continue;
            }
            let r = Rect::new(x, y, w, h);
            let blocked = l.obstacles.iter().any(|o| overlap(o, &r) > 0)
                || l.panels.values().any(|p| !p.hidden && overlap(&p.rect, &r) > 0);
            if blocked {
                continue;
            }
            let d = ((x as f64 + w as f64 / 2.0 - ax).powi(2) + (y as f64 + h as f64 / 2.0 - ay).powi(2)).sqrt();
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

fn layout_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let (mut ops_run, mut overlapping) = (0, 0);
    for _ in 0..500 {
        let mut l = SurfaceLayout::new(1600, 900, 10);
        let mut obstacles: Vec<Rect> = Vec::new();
        for _ in 0..rng.gen_range(1..40) {
            let seat = if rng.gen_bool(0.5) {
                SeatSide::Left
            } else {
                SeatSide::Right
            };
            let ids: Vec<_> = l.panels.keys().copied().collect();
            let pick = (!ids.is_empty()).then(|| ids[rng.gen_range(0..ids.len())]);
            match rng.gen_range(0..7) {
                0 | 1 => {
                    let _ = l.place_panel(rng.gen_range(50..500), rng.gen_range(50..400), seat);
                }
                2 => {
                    let r = random_rect(&mut rng, 1600, 900);
                    if l.add_obstacle(r).is_ok() {
                        obstacles.push(r);
                    }
                }
                3 => {
                    if !obstacles.is_empty() {
                        let o = obstacles.swap_remove(rng.gen_range(0..obstacles.len()));
                        let _ = l.remove_obstacle(o);
                    }
                }
                4 => {
                    if let Some(id) = pick {
                        let _ = l.move_panel(id, random_rect(&mut rng, 1600, 900));
                    }
                }
                5 => {
                    if let Some(id) = pick {
                        let _ = l.rotate_panel(id, rng.gen_range(-3..4));
                    }
                }
                _ => {
                    if let Some(id) = pick {
                        let _ = l.remove_panel(id);
                    }
                }
            }
            ops_run += 1;
            if total_overlap(&l) != 0 {
                overlapping += 1;
            }
        }
    }

    let (mut cases, mut optimal) = (0, 0);
    let mut worst = 0.0f64;
    while cases < 100 {
        let mut l = SurfaceLayout::new(
            rng.gen_range(300..900),
            rng.gen_range(200..500),
            [5, 10, 20][rng.gen_range(0..3)],
        );
        for _ in 0..rng.gen_range(0..4) {
            let _ = l.add_obstacle(random_rect(&mut rng, l.width, l.height));
        }
        for _ in 0..rng.gen_range(0..4) {
            let seat = if rng.gen_bool(0.5) {
                SeatSide::Left
            } else {
                SeatSide::Right
            };
            let _ = l.place_panel(rng.gen_range(30..l.width / 3), rng.gen_range(30..l.height / 3), seat);
        }
        let seat = if rng.gen_bool(0.5) {
            SeatSide::Left
        } else {
            SeatSide::Right
        };
        let (w, h) = (rng.gen_range(17..l.width / 2), rng.gen_range(17..l.height / 2));
        let Some(best) = brute_force_best(&l, w, h, seat) else {
            continue;
        };
        cases += 1;
        let Ok(id) = l.place_panel(w, h, seat) else { continue };
        let r = l.panels[&id].rect;
        let (ax, ay) = match seat {
            SeatSide::Left => (0.0, l.height as f64 / 2.0),
            SeatSide::Right => (l.width as f64, l.height as f64 / 2.0),
        };
        let got = ((r.x as f64 + r.w as f64 / 2.0 - ax).powi(2) + (r.y as f64 + r.h as f64 / 2.0 - ay).powi(2)).sqrt();
        worst = worst.max((got - best).abs());
        if (got - best).abs() <= 1e-9 {
            optimal += 1;
        }
    }
    outcome(
        overlapping == 0 && optimal == 100,
        format!("{overlapping} of {ops_run} ops left overlap; place_panel optimal in {optimal}/{cases} cases (worst gap {worst:.3})"),
    )
}

// ------------------------------------------------------------------ plot

fn plot_checks() -> Outcome {
    let bytes = read_fixture("plot/saga.json");
    let plot = parse_plot(&bytes).unwrap();
    let doc: Value = serde_json::from_slice(&bytes).unwrap();
    let p = &doc["plot"];
    let region = |id: &str| {
        (
            p["regions"][id]["x"].as_f64().unwrap(),
            p["regions"][id]["y"].as_f64().unwrap(),
        )
    };
    let duration = doc["duration_ms"].as_u64().unwrap();
    let characters: Vec<String> = p["characters"].as_object().unwrap().keys().cloned().collect();

    let expected = |ch: &str, t: u64| -> (f64, f64) {
        let mut moves: Vec<&Value> = p["movements"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|m| m["character"] == ch)
            .collect();
        moves.sort_by_key(|m| m["t0_ms"].as_u64().unwrap());
        let mut at = region(p["characters"][ch]["start_region"].as_str().unwrap());
        for m in moves {
            let (t0, t1) = (m["t0_ms"].as_u64().unwrap(), m["t1_ms"].as_u64().unwrap());
            let (a, b) = (region(m["from"].as_str().unwrap()), region(m["to"].as_str().unwrap()));
            if t < t0 {
                break;
            }
            if t >= t1 {
                at = b;
                continue;
            }
            let s = (t - t0) as f64 / (t1 - t0) as f64;
            return (a.0 + (b.0 - a.0) * s, a.1 + (b.1 - a.1) * s);
        }
        at
    };

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst = 0.0f64;
    let mut samples = 0;
    for _ in 0..1000 {
        let t = rng.gen_range(0..duration);
        for ch in &characters {
            let got = character_position(&plot, ch, MediaTime(t)).unwrap();
            let want = expected(ch, t);
            worst = worst.max((got.0 - want.0).abs()).max((got.1 - want.1).abs());
            samples += 1;
        }
    }

    let mut color_bad = 0;
    for a in &characters {
        for b in &characters {
            let same = p["characters"][a]["faction"] == p["characters"][b]["faction"];
            let (ca, cb) = (faction_color(&plot, a).unwrap(), faction_color(&plot, b).unwrap());
            if same != (ca == cb) {
                color_bad += 1;
            }
        }
    }
    outcome(
        worst <= 1e-12 && color_bad == 0,
        format!(
            "{samples} positions, worst error {worst:.1e} (limit 1e-12); {color_bad} colour violations over {} character pairs",
            characters.len() * characters.len()
        ),
    )
}

// ----------------------------------------------------------------- polls

fn poll_privacy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let (mut sum_bad, mut leaks, mut votes_cast) = (0, 0, 0);
    for _ in 0..200 {
        let track = parse_track(&read_fixture("tracks/film.json")).unwrap();
        let mut hub = Hub::new(Session::new(
            EngineConfig::default(),
            track,
            None,
            Preferences::default(),
        ));
        let mut seq = 0;
        let mut msg = |kind: &str, payload: Value| {
            seq += 1;
            Message::new(kind, seq, payload)
        };
        let mut outbound: Vec<Addressed> = Vec::new();
        for u in 0..8 {
            outbound.extend(hub.handle(msg(
                "register",
                json!({"display_id": format!("dev-{u}"), "role": "personal", "user": format!("voter-{u:02}")}),
            )));
        }
        outbound.extend(hub.handle(msg("register", json!({"display_id": "wall", "role": "surround-wall"}))));
        outbound.extend(hub.handle(msg(
            "poll-op",
            json!({"op": "open", "poll_id": "p", "question": "Which?", "options": ["a", "b", "c"]}),
        )));
        let mut latest: BTreeMap<String, bool> = BTreeMap::new();
        let mut private_since: BTreeMap<String, usize> = BTreeMap::new();
        for _ in 0..rng.gen_range(1..150) {
            if rng.gen_bool(0.05) {
                outbound.extend(hub.tick(rng.gen_range(1..2000)));
                continue;
            }
            let user = format!("voter-{:02}", rng.gen_range(0..12));
            let option = ["a", "b", "c", "z"][rng.gen_range(0..4)];
            let private = rng.gen_bool(0.5);
            let start = outbound.len();
            let out = hub.handle(msg(
                "poll-op",
                json!({"op": "vote", "poll_id": "p", "user": user, "option": option, "privacy": if private { "private" } else { "public" }}),
            ));
            let ok = !out.iter().any(|a| a.msg.kind == "error");
            outbound.extend(out);
            if ok {
                votes_cast += 1;
                latest.insert(user.clone(), private);
                if private {
                    private_since.insert(user, start);
                } else {
                    private_since.remove(&user);
                }
            }
            let agg = hub.session().polls["p"].aggregates();
            if agg.total != latest.len() as u64
                || agg.counts.iter().map(|c| c.count).sum::<u64>() != latest.len() as u64
            {
                sum_bad += 1;
            }
        }
        outbound.extend(hub.tick(1000));
        for (user, from) in &private_since {
            let needle = format!("\"{user}\"");
            leaks += outbound[*from..]
                .iter()
                .filter(|a| a.msg.to_text().contains(&needle))
                .count();
        }
    }
    outcome(
        sum_bad == 0 && leaks == 0,
        format!("200 polls, {votes_cast} accepted votes: {sum_bad} aggregate/voter-count mismatches, {leaks} outbound messages naming a private voter"),
    )
}

// ---------------------------------------------------------------- replay

fn replay_golden() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut scenarios: Vec<PathBuf> = std::fs::read_dir(fixture("scenarios"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    scenarios.sort();
    let mut failures = Vec::new();
    for s in &scenarios {
        let name = s.file_stem().unwrap().to_string_lossy().to_string();
        let golden = std::fs::read(fixture(&format!("golden/{name}.ndjson"))).unwrap_or_default();
        for run in 0..2 {
            let out = dir.path().join(format!("{name}-{run}.ndjson"));
            let status = Command::new(env!("CARGO_BIN_EXE_roomcast"))
                .args(["replay", s.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            let produced = std::fs::read(&out).unwrap_or_default();
            if !status.status.success() || produced != golden {
                failures.push(format!("{name} run {}", run + 1));
            }
        }
    }
    outcome(
        failures.is_empty() && !scenarios.is_empty(),
        format!(
            "{} scenarios x 2 runs, {} differ from golden{}",
            scenarios.len(),
            failures.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(": {}", failures.join(", "))
            }
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("scheduler matches linear-scan oracle", scheduler_vs_oracle),
        ("environment actions fire once per entry", action_firing),
        ("control token exhaustive check", token_exhaustive),
        ("sports distance, heatmap and capacity", sports_feed),
        ("key moments reach the wall within one tick", key_moments),
        ("attention policy sequences", attention_sequences),
        ("layout non-overlap and optimal placement", layout_checks),
        ("plot interpolation and faction colours", plot_checks),
        ("poll aggregates and vote privacy", poll_privacy),
        ("scenario replay matches golden logs", replay_golden),
    ];
    let mut failed = 0;
    let started = Instant::now();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{verdict} [{:>2}] {name}: {} ({:.1?})", i + 1, o.detail, t.elapsed());
    }
    let total: Duration = started.elapsed();
    println!(
        "{} of {} criteria passed in {total:.1?}",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
