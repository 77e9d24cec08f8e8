#![allow(dead_code)]

use std::path::PathBuf;

use roomcast_core::model::DisplayRole;
use roomcast_core::track::parse_track;
use roomcast_hub::prefs::Preferences;
use roomcast_hub::registry::{Capability, DisplayRegistration};
use roomcast_hub::{EngineConfig, Hub, Session};
use serde_json::{json, Value};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

pub fn film_hub() -> Hub {
    let track = parse_track(&std::fs::read(fixture("tracks/film.json")).unwrap()).unwrap();
    let prefs = Preferences::load(&fixture("config/prefs.json")).unwrap();
    Hub::new(Session::new(EngineConfig::default(), track, None, prefs))
}

pub fn room_displays() -> Vec<DisplayRegistration> {
    vec![
        DisplayRegistration::new("tv", DisplayRole::PrimaryTv),
        DisplayRegistration::new("wall", DisplayRole::SurroundWall).with(Capability::Gesture),
        DisplayRegistration::new("table", DisplayRole::AugmenTable).with(Capability::Touch),
        DisplayRegistration::new("phone-ana", DisplayRole::Personal).for_user("ana"),
        DisplayRegistration::new("phone-ben", DisplayRole::Personal).for_user("ben"),
        DisplayRegistration::new("phone-cy", DisplayRole::Personal).for_user("cy"),
    ]
}

pub fn match_descriptor(n: u32) -> Value {
    serde_json::from_slice(&std::fs::read(fixture(&format!("matches/m{n}.json"))).unwrap()).unwrap()
}

const USERS: [&str; 3] = ["ana", "ben", "cy"];
const SHARED: [&str; 3] = ["primary-tv", "surround-wall", "augmen-table"];

/// One message built from a few random numbers. Covers every inbound
/// type, valid and invalid arguments alike.
pub fn random_message(op: u8, a: u16, b: u16) -> (String, Value) {
    let user = USERS[a as usize % 3];
    let other = USERS[b as usize % 3];
    let (kind, payload) = match op % 20 {
        0 => ("transport", json!({"user": user, "command": "play"})),
        1 => ("transport", json!({"user": user, "command": "pause"})),
        2 => (
            "transport",
            json!({"user": user, "command": "seek", "t_ms": (a as u64 * 97) % 700_000}),
        ),
        3 => ("token-op", json!({"op": "request", "user": user})),
        4 => ("token-op", json!({"op": "pass", "user": user, "to": other})),
        5 => (
            "token-op",
            json!({"op": (["release", "withdraw", "admin-reset"][b as usize % 3]), "user": user}),
        ),
        6 => (
            "poll-op",
            json!({"op": "open", "poll_id": format!("p{}", a % 3), "question": "Q?", "options": ["x", "y", "z"]}),
        ),
        7 => (
            "poll-op",
            json!({
                "op": "vote", "poll_id": format!("p{}", a % 3), "user": other,
                "option": (["x", "y", "z", "w"][b as usize % 4]),
                "privacy": (["public", "private"][(a / 3) as usize % 2]),
            }),
        ),
        8 => ("poll-op", json!({"op": "close", "poll_id": format!("p{}", a % 3)})),
        9 => (
            "input-event",
            json!({
                "display_id": (["tv", "wall", "table", "phone-ana", "ghost"][a as usize % 5]),
                "input": (["hand-gesture", "voice-command", "touch", "remote"][b as usize % 4]),
                "intent": (["activate", "deactivate"][(a / 5) as usize % 2]),
            }),
        ),
        10 => (
            "cast",
            json!({
                "user": user, "target": SHARED[b as usize % 3],
                "content": if a.is_multiple_of(4) { Value::Null } else { json!({"kind": "news", "payload": {"n": a}}) },
            }),
        ),
        11 => (
            "panel-op",
            json!({
                "op": "open", "seat": (["left", "right"][a as usize % 2]),
                "w": 100 + (a % 700) as i64, "h": 80 + (b % 500) as i64,
                "content": {"kind": "stat", "payload": {}},
            }),
        ),
        12 => (
            "panel-op",
            json!({"op": "move", "panel_id": a % 5, "rect": {"x": (b % 1600) as i64, "y": (a % 900) as i64, "w": 200, "h": 150}}),
        ),
        13 => (
            "panel-op",
            json!({"op": (["close", "rotate"][b as usize % 2]), "panel_id": a % 5, "quarter_turns": 1}),
        ),
        14 => (
            "object-detect",
            json!({
                "rect": {"x": (a % 8) as i64 * 200, "y": (b % 4) as i64 * 200, "w": 300, "h": 250},
                "state": (["present", "removed"][(a / 8) as usize % 2]),
            }),
        ),
        15 => ("elapse", json!(a % 5000)),
        16 => ("presence-change", json!({"user": user, "present": b.is_multiple_of(2)})),
        17 => (
            "show",
            json!({
                "role": SHARED[a as usize % 3], "id": format!("s{}", b % 2),
                "content": if a.is_multiple_of(3) { Value::Null } else { json!({"kind": "mockup", "payload": {}}) },
            }),
        ),
        18 => (
            "preferences",
            json!({"user": user, "interests": [(["actor", "location", "soundtrack"][b as usize % 3])], "privacy_default": (["public", "private"][a as usize % 2])}),
        ),
        _ => ("clock-sync", json!({"client_ms": a})),
    };
    (kind.to_string(), payload)
}
