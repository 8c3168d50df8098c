//! Live mode: the world advances at wall-clock pace and browser consoles
//! drive operators over a websocket.
//!
//! Client to server: `{"type":"input","op":"down","target":"limb1/j1","speed":0.2}`.
//! Server to client: `hello` once, then `telemetry` frames and `joint` states
//! at most [`MAX_RATE_HZ`] times a second.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::broadcast;
use tokio::task::JoinHandle;

use super::scenario::Scenario;
use super::world::{World, WorldOptions};
use super::OpsError;
use crate::stack::operator::parse_target;
use crate::stack::{JointTelemetry, NodeTelemetry, ScriptEvent, ScriptOp};

pub const MAX_RATE_HZ: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Input {
        op: ScriptOp,
        target: String,
        #[serde(default)]
        speed: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Hello { operator: String, operators: Vec<String> },
    Telemetry { frame: NodeTelemetry },
    Joint { name: String, angle: f64, target: Option<f64> },
    Error { message: String },
}

impl From<JointTelemetry> for ServerMsg {
    fn from(j: JointTelemetry) -> Self {
        ServerMsg::Joint {
            name: j.name,
            angle: j.angle,
            target: j.target,
        }
    }
}

struct Shared {
    world: World,
    bound: BTreeSet<String>,
    /// Targets each console currently holds down.
    held: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Clone)]
struct AppState {
    shared: Arc<Mutex<Shared>>,
    updates: broadcast::Sender<Arc<Vec<String>>>,
}

#[derive(Debug, Deserialize)]
struct ConnectQuery {
    operator: Option<String>,
}

/// A running server: its address and the tasks behind it.
pub struct LiveHandle {
    pub addr: SocketAddr,
    server: JoinHandle<()>,
    ticker: JoinHandle<()>,
}

impl LiveHandle {
    pub fn abort(&self) {
        self.server.abort();
        self.ticker.abort();
    }

    /// Wait until the server stops.
    pub async fn join(self) {
        let _ = self.server.await;
        self.ticker.abort();
    }
}

/// Bind `addr` and start stepping `scenario` in real time. Consoles are the
/// only input source: the scenario's operator script is not played.
pub async fn spawn(scenario: &Scenario, addr: SocketAddr) -> Result<LiveHandle, OpsError> {
    let mut scenario = scenario.clone();
    scenario.operator_script.clear();
    let world = World::new(
        &scenario,
        WorldOptions {
            record_log: false,
            record_truth: false,
        },
    )?;
    let tick = world.params.tick;
    let (updates, _) = broadcast::channel(256);
    let state = AppState {
        shared: Arc::new(Mutex::new(Shared {
            world,
            bound: BTreeSet::new(),
            held: BTreeMap::new(),
        })),
        updates,
    };

    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let app = Router::new().route("/ws", get(upgrade)).with_state(state.clone());
    let server = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    let ticker = tokio::spawn(run_clock(state, tick));
    Ok(LiveHandle { addr, server, ticker })
}

/// Serve until the process is stopped.
pub async fn serve(scenario: &Scenario, addr: SocketAddr) -> Result<(), OpsError> {
    let handle = spawn(scenario, addr).await?;
    handle.join().await;
    Ok(())
}

async fn run_clock(state: AppState, tick: f64) {
    let every = ((1.0 / (MAX_RATE_HZ * tick)).ceil() as u64).max(1);
    let mut interval = tokio::time::interval(Duration::from_secs_f64(tick));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let batch = {
            let mut shared = state.shared.lock().expect("world lock");
            if shared.world.step().is_err() {
                return;
            }
            if shared.world.steps() % every != 0 {
                continue;
            }
            let world = &mut shared.world;
            world.commands.clear();
            world.events.clear();
            world.ir_events.clear();
            let mut batch: Vec<ServerMsg> = std::mem::take(&mut world.telemetry)
                .into_iter()
                .map(|frame| ServerMsg::Telemetry { frame })
                .collect();
            batch.extend(shared.world.joint_states().into_iter().map(ServerMsg::from));
            batch
        };
        let text = batch
            .iter()
            .map(|m| serde_json::to_string(m).expect("message serializes"))
            .collect();
        let _ = state.updates.send(Arc::new(text));
    }
}

async fn upgrade(ws: WebSocketUpgrade, Query(q): Query<ConnectQuery>, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| console(socket, q.operator, state))
}

fn claim(state: &AppState, wanted: Option<String>) -> Result<(String, Vec<String>), String> {
    let mut shared = state.shared.lock().expect("world lock");
    let operators = shared.world.operators();
    let pick = match wanted {
        Some(op) if !operators.contains(&op) => return Err(format!("{op} is not an operator node")),
        Some(op) if shared.bound.contains(&op) => return Err(format!("{op} already has a console")),
        Some(op) => op,
        None => operators
            .iter()
            .find(|o| !shared.bound.contains(*o))
            .cloned()
            .ok_or("every operator already has a console")?,
    };
    shared.bound.insert(pick.clone());
    Ok((pick, operators))
}

fn handle_input(state: &AppState, operator: &str, msg: ClientMsg) -> Result<(), String> {
    let ClientMsg::Input { op, target, speed } = msg;
    let mut shared = state.shared.lock().expect("world lock");
    parse_target(&shared.world.desc, &target)?;
    if !matches!(op, ScriptOp::Down | ScriptOp::Up | ScriptOp::Grip | ScriptOp::Calibrate) {
        return Err(format!("{op:?} needs a payload and is script-only"));
    }
    let held = shared.held.entry(operator.to_string()).or_default();
    match op {
        ScriptOp::Down => held.insert(target.clone()),
        ScriptOp::Up => held.remove(&target),
        _ => false,
    };
    shared.world.inject(ScriptEvent::new(0.0, operator, op, &target, speed));
    Ok(())
}

fn release(state: &AppState, operator: &str) {
    let mut shared = state.shared.lock().expect("world lock");
    let held = shared.held.remove(operator).unwrap_or_default();
    let mut targets: BTreeSet<String> = held;
    if let Some(node) = shared.world.operator(operator) {
        targets.extend(node.held_targets());
    }
    for target in targets {
        shared.world.inject(ScriptEvent::new(0.0, operator, ScriptOp::Up, &target, 0.0));
    }
    shared.bound.remove(operator);
}

async fn send(tx: &mut futures::stream::SplitSink<WebSocket, Message>, msg: &ServerMsg) -> bool {
    let text = serde_json::to_string(msg).expect("message serializes");
    tx.send(Message::Text(text.into())).await.is_ok()
}

async fn console(socket: WebSocket, wanted: Option<String>, state: AppState) {
    let (mut tx, mut rx) = socket.split();
    let (operator, operators) = match claim(&state, wanted) {
        Ok(v) => v,
        Err(message) => {
            let _ = send(&mut tx, &ServerMsg::Error { message }).await;
            let _ = tx.send(Message::Close(None)).await;
            return;
        }
    };
    let mut updates = state.updates.subscribe();
    if !send(
        &mut tx,
        &ServerMsg::Hello {
            operator: operator.clone(),
            operators,
        },
    )
    .await
    {
        release(&state, &operator);
        return;
    }
    loop {
        tokio::select! {
            incoming = rx.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let result = serde_json::from_str::<ClientMsg>(&text)
                    .map_err(|e| e.to_string())
                    .and_then(|m| handle_input(&state, &operator, m));
                if let Err(message) = result {
                    if !send(&mut tx, &ServerMsg::Error { message }).await {
                        break;
                    }
                }
            }
            update = updates.recv() => {
                match update {
                    Ok(batch) => {
                        let mut ok = true;
                        for text in batch.iter() {
                            if tx.send(Message::Text(text.clone().into())).await.is_err() {
                                ok = false;
                                break;
                            }
                        }
                        if !ok {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        }
    }
    release(&state, &operator);
}
