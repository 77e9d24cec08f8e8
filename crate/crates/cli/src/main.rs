//! `roomcast`: validate content files, serve the hub, replay scenarios and
//! export player analytics.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error.

use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use roomcast_core::plot::{parse_plot, validate_plot};
use roomcast_core::sports::{heatmap, parse_feed, FeedEvent, MatchDescriptor, SportsBoard, SportsConfig};
use roomcast_core::track::{parse_track, parse_track_doc, validate_track, Severity, ValidationReport};
use roomcast_hub::prefs::Preferences;
use roomcast_hub::server::{shutdown_signal, ServeOptions, Server};
use roomcast_hub::wizard::{load_scenario_file, run, RunMode};
use roomcast_hub::{EngineConfig, Hub, Message, Session};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "roomcast",
    version,
    about = "Orchestrate ambient second-screen content across a room of displays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an ambient track, a plot track or a scenario. Prints one
    /// line per finding; exits 1 on any error-severity finding, 2 if the
    /// file cannot be read.
    Validate {
        /// Track, plot or scenario document (JSON)
        path: PathBuf,
    },
    /// Run the hub and accept display connections over WebSocket until
    /// interrupted (ctrl-c or SIGTERM).
    Serve(ServeArgs),
    /// Run a scenario and write its event log as newline-delimited JSON.
    Replay {
        /// Scenario document (JSON)
        scenario: PathBuf,
        /// Where to write the event log
        #[arg(long)]
        out: PathBuf,
        /// Pace the run against the wall clock instead of virtual time
        #[arg(long, conflicts_with = "virtual_time")]
        realtime: bool,
        /// Run on virtual time (the default)
        #[arg(long = "virtual")]
        virtual_time: bool,
        /// Wall-clock speed-up for --realtime
        #[arg(long, default_value_t = 1.0, requires = "realtime")]
        speed: f64,
    },
    /// Export one player's heatmap (CSV) or distance and fatigue (JSON)
    /// from a match feed.
    Export(ExportArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// Engine configuration (JSON)
    config: PathBuf,
    /// TCP port to listen on
    #[arg(long)]
    port: u16,
    /// Address to bind
    #[arg(long, default_value_t = Ipv4Addr::LOCALHOST.into())]
    bind: std::net::IpAddr,
    /// Ambient track to play
    #[arg(long)]
    track: Option<PathBuf>,
    /// Plot track for the table map
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Preference store; created on first change
    #[arg(long)]
    prefs: Option<PathBuf>,
    /// Match descriptors to register at start-up
    #[arg(long = "match")]
    matches: Vec<PathBuf>,
    /// Match feed to replay into the hub
    #[arg(long)]
    feed: Option<PathBuf>,
    /// Feed replay speed-up
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
}

#[derive(Args)]
struct ExportArgs {
    /// Match feed (newline-delimited JSON)
    feed: PathBuf,
    /// Player id
    #[arg(long)]
    player: String,
    /// Emit the occupancy grid as CSV
    #[arg(long, conflicts_with = "distance", required_unless_present = "distance")]
    heatmap: bool,
    /// Emit distance and fatigue as JSON
    #[arg(long)]
    distance: bool,
    /// Match descriptor; with it the whole feed is replayed and checked
    #[arg(long = "match")]
    descriptor: Option<PathBuf>,
    /// Engine configuration supplying field size, grid and fatigue scale
    #[arg(long)]
    config: Option<PathBuf>,
}

/// A failure with its exit code. `error` is `None` once already reported.
struct Failure {
    code: u8,
    error: Option<anyhow::Error>,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: Some(error.into()),
    }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: Some(error.into()),
    }
}

/// Validation findings go to standard output with the report.
fn reported(message: impl std::fmt::Display) -> Failure {
    println!("error: {message}");
    Failure { code: 1, error: None }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(runtime)
}

fn print_report(report: &ValidationReport) {
    for i in &report.issues {
        let sev = match i.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if i.cue_id.is_empty() {
            println!("{sev}: {}", i.message);
        } else {
            println!("{sev}: {}: {}", i.cue_id, i.message);
        }
    }
}

fn validate(path: &Path) -> Outcome {
    let bytes = read(path)?;
    let doc: Value = serde_json::from_slice(&bytes).map_err(|e| reported(format!("not a JSON document: {e}")))?;
    let is_scenario = doc.get("name").is_some() && doc.get("duration_ms").is_none();
    let mut report = ValidationReport::default();
    let what = if is_scenario {
        let s = load_scenario_file(path).map_err(reported)?;
        report.issues.extend(validate_track(&s.track).issues);
        if let Some(p) = &s.plot {
            report.issues.extend(validate_plot(p).issues);
        }
        "scenario"
    } else {
        let track = parse_track(&bytes).map_err(reported)?;
        report.issues.extend(validate_track(&track).issues);
        let has_plot = parse_track_doc(&bytes).map(|d| d.plot.is_some()).unwrap_or(false);
        if has_plot {
            let plot = parse_plot(&bytes).map_err(reported)?;
            report.issues.extend(validate_plot(&plot).issues);
            "plot track"
        } else {
            "track"
        }
    };
    print_report(&report);
    let errors = report.issues.iter().filter(|i| i.severity == Severity::Error).count();
    let warnings = report.issues.len() - errors;
    if errors > 0 {
        println!(
            "{}: {what} invalid ({errors} errors, {warnings} warnings)",
            path.display()
        );
        return Err(Failure { code: 1, error: None });
    }
    println!("{}: {what} ok ({warnings} warnings)", path.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Outcome {
    let config_text = String::from_utf8(read(&args.config)?).map_err(invalid)?;
    let config = EngineConfig::from_json(&config_text).map_err(invalid)?;
    let track = match &args.track {
        Some(p) => parse_track(&read(p)?).map_err(invalid)?,
        None => Session::empty_track(),
    };
    let plot = match &args.plot {
        Some(p) => Some(parse_plot(&read(p)?).map_err(invalid)?),
        None => None,
    };
    let prefs = match &args.prefs {
        Some(p) => Preferences::load(p).map_err(invalid)?,
        None => Preferences::default(),
    };
    let feed = match &args.feed {
        Some(p) => parse_feed(&read(p)?).map_err(invalid)?,
        None => Vec::new(),
    };
    if !(args.speed > 0.0 && args.speed.is_finite()) {
        return Err(invalid(anyhow!("--speed must be a positive number")));
    }
    let mut hub = Hub::new(Session::new(config.clone(), track, plot, prefs));
    for (i, p) in args.matches.iter().enumerate() {
        let descriptor: Value = serde_json::from_slice(&read(p)?).map_err(invalid)?;
        let out = hub.handle(Message::new(
            "match-op",
            i as u64 + 1,
            json!({ "op": "add", "descriptor": descriptor }),
        ));
        if let Some(err) = out.iter().find(|a| a.msg.kind == "error") {
            return Err(invalid(anyhow!("{}: {}", p.display(), err.msg.payload["message"])));
        }
    }
    let options = ServeOptions {
        tick_ms: config.tick_ms,
        feed,
        speed: args.speed,
        prefs_path: args.prefs.clone(),
    };
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async move {
        let addr = SocketAddr::new(args.bind, args.port);
        let server = Server::bind(addr, hub, options)
            .await
            .with_context(|| format!("cannot listen on {addr}"))
            .map_err(runtime)?;
        let local = server.local_addr().map_err(runtime)?;
        tracing::info!(%local, "hub listening");
        server.run(shutdown_signal()).await;
        Ok(())
    })
}

fn replay(scenario: &Path, out: &Path, mode: RunMode) -> Outcome {
    read(scenario)?;
    let s = load_scenario_file(scenario).map_err(invalid)?;
    let log = run(&s, mode);
    std::fs::write(out, log.to_ndjson())
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(runtime)?;
    eprintln!("{}: {} events -> {}", s.name, log.lines.len(), out.display());
    Ok(())
}

fn export(args: ExportArgs) -> Outcome {
    let config = match &args.config {
        Some(p) => EngineConfig::from_json(&String::from_utf8(read(p)?).map_err(invalid)?).map_err(invalid)?,
        None => EngineConfig::default(),
    };
    let sports: SportsConfig = config.sports;
    let events = parse_feed(&read(&args.feed)?).map_err(invalid)?;

    let (samples, distance_m, match_id) = match &args.descriptor {
        Some(p) => {
            let descriptor: MatchDescriptor = serde_json::from_slice(&read(p)?).map_err(invalid)?;
            let mut board = SportsBoard::new(sports.clone());
            board.add_match(&descriptor).map_err(invalid)?;
            let relevant: Vec<FeedEvent> = events
                .iter()
                .filter(|e| e.match_id() == descriptor.match_id)
                .cloned()
                .collect();
            board.replay(&relevant).map_err(invalid)?;
            let m = board.get(&descriptor.match_id).expect("registered above");
            let player = m
                .players
                .get(&args.player)
                .ok_or_else(|| invalid(anyhow!("unknown player `{}` in match {}", args.player, m.match_id)))?;
            (
                player.samples.clone(),
                player.cumulative_distance_m,
                Some(m.match_id.clone()),
            )
        }
        None => {
            let mut samples = Vec::new();
            let mut known = false;
            for e in &events {
                if let FeedEvent::PositionSample {
                    player_id, t_ms, x, y, ..
                } = e
                {
                    if *player_id == args.player {
                        samples.push(roomcast_core::sports::Sample {
                            t_ms: *t_ms,
                            x: *x,
                            y: *y,
                        });
                    }
                }
                known |= matches!(e, FeedEvent::PositionSample { player_id, .. }
                    | FeedEvent::Goal { player_id, .. }
                    | FeedEvent::Card { player_id, .. } if *player_id == args.player);
            }
            if !events.is_empty() && !known {
                return Err(invalid(anyhow!("unknown player `{}`: no events in feed", args.player)));
            }
            let distance = samples
                .windows(2)
                .map(|w| sports.field.distance((w[0].x, w[0].y), (w[1].x, w[1].y)))
                .sum();
            let match_id = events.first().map(|e| e.match_id().to_string());
            (samples, distance, match_id)
        }
    };

    if args.heatmap {
        print!(
            "{}",
            heatmap(&samples, sports.heatmap_rows, sports.heatmap_cols).to_csv()
        );
    } else {
        let fatigue = if sports.d_max_m <= 0.0 {
            1.0
        } else {
            (distance_m / sports.d_max_m).min(1.0)
        };
        let out = json!({
            "player_id": args.player,
            "match_id": match_id,
            "samples": samples.len(),
            "distance_m": distance_m,
            "fatigue": fatigue,
            "d_max_m": sports.d_max_m,
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("JSON values serialize"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let serving = matches!(cli.command, Command::Serve(_));
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(if serving { "info" } else { "warn" }));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let outcome = match cli.command {
        Command::Validate { path } => validate(&path),
        Command::Serve(args) => serve(args),
        Command::Replay {
            scenario,
            out,
            realtime,
            speed,
            ..
        } => {
            let mode = if realtime {
                RunMode::Realtime { speed }
            } else {
                RunMode::Virtual
            };
            replay(&scenario, &out, mode)
        }
        Command::Export(args) => export(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            if let Some(e) = error {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}
