//! Websocket transport. A single simulation task owns the [`SessionCore`];
//! connections talk to it only through a command queue and a frame broadcast.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use log::{info, warn};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::{Instant, MissedTickBehavior};
use tower_http::services::ServeDir;

use navlearn::geometry::WorldSpec;

use crate::protocol::{parse_client, ClientMessage, Role, ServerMessage};
use crate::session::{Reply, SessionCore};

pub const TICK: Duration = Duration::from_millis(100);
pub const RESUME_GRACE: Duration = Duration::from_secs(60);

enum Inbound {
    Connect { reply: oneshot::Sender<(u64, Role)> },
    Disconnect { id: u64 },
    Command { id: u64, msg: ClientMessage, reply: oneshot::Sender<Result<Reply, String>> },
}

#[derive(Clone)]
struct AppState {
    inbound: mpsc::Sender<Inbound>,
    frames: broadcast::Sender<Arc<String>>,
    world: Arc<WorldSpec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub tick: Duration,
    pub resume_grace: Duration,
    /// Directory of static UI assets served at `/`.
    pub assets: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { tick: TICK, resume_grace: RESUME_GRACE, assets: None }
    }
}

/// Owns the session; steps it on a fixed tick and serializes all access.
async fn simulation_loop(mut session: SessionCore, mut inbound: mpsc::Receiver<Inbound>, frames: broadcast::Sender<Arc<String>>, opts: ServeOptions) {
    let mut ticker = tokio::time::interval(opts.tick);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    let mut next_id = 0u64;
    let mut controller: Option<u64> = None;
    let mut paused_since: Option<Instant> = None;
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                if let Some(t) = paused_since {
                    if t.elapsed() >= opts.resume_grace {
                        if let Err(e) = session.expire() {
                            warn!("could not close abandoned episode: {e}");
                        }
                        paused_since = Some(Instant::now());
                    }
                }
                match session.tick() {
                    Ok(Some(frame)) => {
                        let _ = frames.send(Arc::new(ServerMessage::Frame(frame).to_text()));
                    }
                    Ok(None) => {}
                    Err(e) => warn!("tick failed: {e}"),
                }
            }
            msg = inbound.recv() => {
                let Some(msg) = msg else { break };
                match msg {
                    Inbound::Connect { reply } => {
                        next_id += 1;
                        let role = if controller.is_none() {
                            controller = Some(next_id);
                            session.resume();
                            paused_since = None;
                            Role::Controller
                        } else {
                            Role::Spectator
                        };
                        let _ = reply.send((next_id, role));
                    }
                    Inbound::Disconnect { id } => {
                        if controller == Some(id) {
                            controller = None;
                            session.pause();
                            paused_since = Some(Instant::now());
                            info!("controller left; session paused");
                        }
                    }
                    Inbound::Command { id, msg, reply } => {
                        let result = if controller == Some(id) {
                            session.handle(msg).map_err(|e| e.to_string())
                        } else {
                            Err("spectators cannot send commands".to_string())
                        };
                        let _ = reply.send(result);
                    }
                }
            }
        }
    }
    if let Err(e) = session.finish() {
        warn!("could not flush demo file: {e}");
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(socket: WebSocket, state: AppState) {
    let (reply_tx, reply_rx) = oneshot::channel();
    if state.inbound.send(Inbound::Connect { reply: reply_tx }).await.is_err() {
        return;
    }
    let Ok((id, role)) = reply_rx.await else { return };
    let (mut tx, mut rx) = socket.split();
    let (out_tx, mut out_rx) = mpsc::channel::<String>(64);
    let mut frames = state.frames.subscribe();
    let writer = tokio::spawn(async move {
        loop {
            let text = tokio::select! {
                m = out_rx.recv() => match m { Some(t) => t, None => break },
                f = frames.recv() => match f {
                    Ok(t) => (*t).clone(),
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(_) => break,
                },
            };
            if tx.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    let _ = out_tx.send(ServerMessage::Hello { role }.to_text()).await;
    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let response = match parse_client(&text) {
            Err(e) => Some(ServerMessage::Error { message: e }),
            Ok(cmd) => {
                let (reply_tx, reply_rx) = oneshot::channel();
                if state.inbound.send(Inbound::Command { id, msg: cmd, reply: reply_tx }).await.is_err() {
                    break;
                }
                match reply_rx.await {
                    Ok(Ok(Reply::Saved { demo_count })) => Some(ServerMessage::Saved { demo_count }),
                    Ok(Ok(Reply::None)) => None,
                    Ok(Err(e)) => Some(ServerMessage::Error { message: e }),
                    Err(_) => break,
                }
            }
        };
        if let Some(r) = response {
            let _ = out_tx.send(r.to_text()).await;
        }
    }
    let _ = state.inbound.send(Inbound::Disconnect { id }).await;
    writer.abort();
}

async fn world_handler(State(state): State<AppState>) -> Json<WorldSpec<f64>> {
    Json((*state.world).clone())
}

/// Builds the router and starts the simulation task.
pub fn router(session: SessionCore, world: WorldSpec<f64>, opts: ServeOptions) -> Router {
    let (in_tx, in_rx) = mpsc::channel(256);
    let (frames, _) = broadcast::channel(64);
    tokio::spawn(simulation_loop(session, in_rx, frames.clone(), opts.clone()));
    let state = AppState { inbound: in_tx, frames, world: Arc::new(world) };
    let app = Router::new().route("/ws", get(ws_handler)).route("/world", get(world_handler)).with_state(state);
    match opts.assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Serves until the listener fails. Returns the bound address through `bound` once listening.
pub async fn serve(addr: SocketAddr, session: SessionCore, world: WorldSpec<f64>, opts: ServeOptions, bound: Option<oneshot::Sender<SocketAddr>>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    info!("tele-op service listening on {local}");
    if let Some(b) = bound {
        let _ = b.send(local);
    }
    axum::serve(listener, router(session, world, opts)).await
}
