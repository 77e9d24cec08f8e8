//! WebSocket server. One task owns the [`Hub`]; connection tasks only
//! move frames between their socket and that task.

use std::collections::BTreeMap;
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use roomcast_core::sports::FeedEvent;
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc::{self, UnboundedSender};
use tokio::time::Instant;
use tokio_tungstenite::tungstenite::Message as WsMessage;

use crate::hub::Hub;
use crate::protocol::{parse_frame, Addressed, Message, To};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub tick_ms: u64,
    /// Events replayed in file order, paced by their match clock.
    pub feed: Vec<FeedEvent>,
    pub speed: f64,
    pub prefs_path: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            tick_ms: 100,
            feed: Vec::new(),
            speed: 1.0,
            prefs_path: None,
        }
    }
}

type ConnId = u64;

enum Event {
    Connected(ConnId, UnboundedSender<String>),
    Frame(ConnId, String),
    Closed(ConnId),
}

pub struct Server {
    listener: TcpListener,
    hub: Hub,
    options: ServeOptions,
}

#[derive(Default)]
struct Connections {
    out: BTreeMap<ConnId, UnboundedSender<String>>,
    bound: BTreeMap<ConnId, String>,
}

impl Connections {
    fn conn_of(&self, display_id: &str) -> Option<ConnId> {
        self.bound
            .iter()
            .find(|(_, d)| d.as_str() == display_id)
            .map(|(c, _)| *c)
    }

    fn route(&self, out: Vec<Addressed>, sender: Option<ConnId>) {
        for a in out {
            let text = a.msg.to_text();
            match a.to {
                To::Display(id) => {
                    if let Some(tx) = self.conn_of(&id).and_then(|c| self.out.get(&c)) {
                        let _ = tx.send(text);
                    }
                }
                To::Sender => {
                    if let Some(tx) = sender.and_then(|c| self.out.get(&c)) {
                        let _ = tx.send(text);
                    }
                }
                To::All => {
                    for tx in self.out.values() {
                        let _ = tx.send(text.clone());
                    }
                }
            }
        }
    }
}

async fn connection(id: ConnId, stream: TcpStream, events: UnboundedSender<Event>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            tracing::debug!(conn = id, "handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    if events.send(Event::Connected(id, tx)).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(WsMessage::text(text)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(frame) = source.next().await {
        match frame {
            Ok(WsMessage::Text(t)) => {
                if events.send(Event::Frame(id, t.as_str().to_string())).is_err() {
                    break;
                }
            }
            Ok(WsMessage::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    let _ = events.send(Event::Closed(id));
    let _ = writer.await;
}

impl Server {
    pub async fn bind(addr: SocketAddr, hub: Hub, options: ServeOptions) -> io::Result<Server> {
        let listener = TcpListener::bind(addr).await?;
        Ok(Server { listener, hub, options })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves, then closes every connection and
    /// returns the hub.
    pub async fn run(self, shutdown: impl Future<Output = ()>) -> Hub {
        let Server {
            listener,
            mut hub,
            options,
        } = self;
        let (events_tx, mut events) = mpsc::unbounded_channel::<Event>();
        let acceptor = tokio::spawn(async move {
            let mut next: ConnId = 0;
            loop {
                match listener.accept().await {
                    Ok((stream, peer)) => {
                        next += 1;
                        tracing::info!(conn = next, %peer, "connected");
                        tokio::spawn(connection(next, stream, events_tx.clone()));
                    }
                    Err(e) => tracing::warn!("accept failed: {e}"),
                }
            }
        });

        let mut conns = Connections::default();
        let mut ticker = tokio::time::interval(Duration::from_millis(options.tick_ms.max(1)));
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        let feed_t0 = options.feed.first().map(|e| e.t_ms()).unwrap_or(0);
        let started = Instant::now();
        let mut feed_next = 0;
        let mut last_tick = Instant::now();
        let mut seq = 0u64;
        tokio::pin!(shutdown);

        loop {
            tokio::select! {
                _ = &mut shutdown => break,
                ev = events.recv() => match ev {
                    None => break,
                    Some(Event::Connected(id, tx)) => {
                        conns.out.insert(id, tx);
                    }
                    Some(Event::Frame(id, text)) => {
                        let registering = parse_frame(&text)
                            .ok()
                            .filter(|m| m.kind == "register" && !conns.bound.contains_key(&id))
                            .and_then(|m| m.payload.get("display_id").and_then(Value::as_str).map(str::to_string));
                        let out = hub.handle_text(&text);
                        if let Some(display_id) = registering {
                            let accepted = out.iter().any(|a| a.to == To::Display(display_id.clone()) && a.msg.kind == "snapshot");
                            if accepted {
                                tracing::info!(conn = id, %display_id, "registered");
                                conns.bound.insert(id, display_id);
                            }
                        }
                        conns.route(out, Some(id));
                    }
                    Some(Event::Closed(id)) => {
                        conns.out.remove(&id);
                        if let Some(display_id) = conns.bound.remove(&id) {
                            tracing::info!(conn = id, %display_id, "disconnected");
                            let out = hub.disconnect(&display_id);
                            conns.route(out, None);
                        }
                    }
                },
                _ = ticker.tick() => {
                    let now = Instant::now();
                    let dt = now.duration_since(last_tick).as_millis() as u64;
                    if dt > 0 {
                        last_tick = now;
                        let out = hub.tick(dt);
                        conns.route(out, None);
                    }
                    let elapsed = started.elapsed().as_secs_f64() * 1000.0 * options.speed;
                    while let Some(ev) = options.feed.get(feed_next) {
                        if (ev.t_ms().saturating_sub(feed_t0)) as f64 > elapsed {
                            break;
                        }
                        feed_next += 1;
                        seq += 1;
                        let out = hub.handle(Message::new("feed", seq, json!({ "event": ev })));
                        conns.route(out.into_iter().filter(|a| a.to != To::Sender).collect(), None);
                    }
                }
            }
            if let (Some(prefs), Some(path)) = (hub.take_dirty_prefs(), &options.prefs_path) {
                if let Err(e) = prefs.save(path) {
                    tracing::warn!("saving preferences failed: {e}");
                }
            }
        }
        acceptor.abort();
        conns.out.clear();
        tracing::info!("hub stopped");
        hub
    }
}

/// Resolves on ctrl-c or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let mut term = match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => return ctrl_c.await,
        };
        tokio::select! {
            _ = ctrl_c => {},
            _ = term.recv() => {},
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}
