//! Live mode: the simulation paced by the wall clock, a bus listener for
//! external headset clients, and an HTTP/WebSocket port for the operator
//! console.
//!
//! WebSocket messages are binary and carry bus frames verbatim. The console
//! sends `/holo/command` (voice text), `/ui/gaze` and `/ui/head`; it receives
//! `/ui/events`, `/ui/snapshot` and the robot telemetry. Console poses are
//! in the physical world, robot convention.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tungstenite::Message;

use crate::bus::{encode_frame, Endpoint, Envelope, FrameDecoder};
use crate::clock::SimTime;
use crate::frames::{AnchorRegistry, DEFAULT_DEDUP_RADIUS};
use crate::geometry::{Convention, Transform, Vec3};
use crate::harness::{robot_topics, HarnessError, HeadsetSim, Outgoing, RobotSim, Scenario};
use crate::modes::json_envelope;
use crate::msgs::{self, CommandMsg, GazeMsg, HeadMsg, PoseMsg};
use crate::robot::Handled;

pub const DEFAULT_UI_PORT: u16 = 8080;
const SNAPSHOT_PERIOD: Duration = Duration::from_millis(100);
const FALLBACK_INDEX: &str = "<!doctype html><title>teleop</title><p>Operator console assets are not installed. \
Connect a WebSocket client to <code>/bus</code> on this port.</p>\n";

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub scenario: Scenario,
    pub bus_port: u16,
    pub ui_port: u16,
    /// Directory of console assets; a placeholder page is served without one.
    pub assets: Option<PathBuf>,
    /// Anchor store file, loaded if present and rewritten after setup.
    pub anchor_store: Option<PathBuf>,
    pub seed: u64,
}

/// Scene state streamed to the console on `/ui/snapshot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMsg {
    pub t: f64,
    pub mode: String,
    pub active: bool,
    pub head: PoseMsg,
    pub cursor: Option<Vec3>,
    pub selection: Option<Vec3>,
    pub body: PoseMsg,
    pub hand: PoseMsg,
    pub gripper_open: f64,
    pub gripper_rotation: f64,
    pub power: String,
    pub lease: String,
    pub posture: String,
    /// Scene boxes as `[min, max]`.
    pub boxes: Vec<[Vec3; 2]>,
    pub markers: Vec<Vec3>,
}

type Clients = Arc<Mutex<Vec<Sender<Vec<u8>>>>>;

pub struct Server {
    opts: ServeOptions,
    bus: TcpListener,
    ui: TcpListener,
}

impl Server {
    pub fn bind(opts: ServeOptions) -> Result<Self, HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(e.to_string());
        let bus = TcpListener::bind(("127.0.0.1", opts.bus_port)).map_err(io)?;
        let ui = TcpListener::bind(("127.0.0.1", opts.ui_port)).map_err(io)?;
        bus.set_nonblocking(true).map_err(io)?;
        Ok(Self { opts, bus, ui })
    }

    pub fn bus_addr(&self) -> SocketAddr {
        self.bus.local_addr().expect("bound listener")
    }

    pub fn ui_addr(&self) -> SocketAddr {
        self.ui.local_addr().expect("bound listener")
    }

    /// Runs until `stop` is set.
    pub fn run(self, stop: Arc<AtomicBool>) -> Result<(), HarnessError> {
        let scenario = &self.opts.scenario;
        let mut registry = match &self.opts.anchor_store {
            Some(path) if path.exists() => {
                AnchorRegistry::load(path, DEFAULT_DEDUP_RADIUS).map_err(|e| HarnessError::Io(e.to_string()))?
            }
            _ => AnchorRegistry::with_seed(DEFAULT_DEDUP_RADIUS, self.opts.seed),
        };
        let (anchor, _) = registry.create_anchor(&scenario.anchor.pose.transform(), 0.0);
        if let Some(path) = &self.opts.anchor_store {
            registry.save(path).map_err(|e| HarnessError::Io(e.to_string()))?;
        }
        let anchors = Arc::new(RwLock::new(registry));
        let mut headset = HeadsetSim::new(scenario, &anchor, self.opts.seed);
        let mut robot = RobotSim::new(scenario, anchors);

        let clients: Clients = Arc::default();
        let (ui_tx, ui_rx) = mpsc::channel();
        spawn_ui_acceptor(self.ui, self.opts.assets.clone(), Arc::clone(&clients), ui_tx, Arc::clone(&stop));

        let dt = SimTime::from_secs(scenario.dt);
        let mut externals: Vec<Endpoint> = Vec::new();
        let mut pending: Vec<Envelope> = outgoing_to_robot(headset.startup(), &clients);
        let start = Instant::now();
        let mut last_snapshot = None::<Instant>;
        let mut k: u64 = 0;
        while !stop.load(Ordering::Relaxed) {
            let now = SimTime::from_nanos(dt.as_nanos() * k);
            accept_externals(&self.bus, &mut externals);
            apply_console_input(&ui_rx, &mut headset, &mut pending, &clients);
            serve_externals(&mut externals, &mut robot);

            pending.extend(outgoing_to_robot(headset.tick(now), &clients));
            let out = robot.tick(now, std::mem::take(&mut pending));
            for env in &out.publish {
                broadcast(&clients, env);
                for ep in &externals {
                    let _ = ep.publish(&env.topic, &env.payload);
                }
            }
            if last_snapshot.map_or(true, |t| t.elapsed() >= SNAPSHOT_PERIOD) {
                last_snapshot = Some(Instant::now());
                broadcast(&clients, &json_envelope(msgs::UI_SNAPSHOT, &snapshot(now, &headset, &robot, scenario)));
            }

            k += 1;
            let due = start + Duration::from_nanos(dt.as_nanos().saturating_mul(k));
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        Ok(())
    }
}

/// Headset output: robot-bound envelopes are returned, console events are
/// broadcast, service calls become requests answered locally.
fn outgoing_to_robot(out: Vec<Outgoing>, clients: &Clients) -> Vec<Envelope> {
    let mut to_robot = Vec::new();
    for o in out {
        match o {
            Outgoing::Publish(env) if env.topic == msgs::UI_EVENTS => broadcast(clients, &env),
            Outgoing::Publish(env) => to_robot.push(env),
            Outgoing::Call { name, body } => to_robot.push(local_request(&name, &body)),
        }
    }
    to_robot
}

/// A service request frame whose reply nobody waits for.
fn local_request(name: &str, body: &[u8]) -> Envelope {
    let body: serde_json::Value = serde_json::from_slice(body).unwrap_or(serde_json::Value::Null);
    let frame = serde_json::json!({ "sid": 0, "kind": "request", "body": body });
    Envelope::new(format!("{}{name}", crate::bus::SERVICE_PREFIX), serde_json::to_vec(&frame).expect("json value"))
}

fn accept_externals(listener: &TcpListener, externals: &mut Vec<Endpoint>) {
    while let Ok((stream, _)) = listener.accept() {
        if stream.set_nonblocking(false).is_ok() {
            if let Ok(ep) = Endpoint::from_stream(stream, robot_topics()) {
                externals.push(ep);
            }
        }
    }
    externals.retain(|ep| ep.closed().is_none());
}

fn serve_externals(externals: &mut [Endpoint], robot: &mut RobotSim) {
    for ep in externals.iter() {
        for env in ep.drain() {
            if let Handled::Reply { request, result } = robot.robot_mut().handle_envelope(&env) {
                let _ = ep.respond(&request, result);
            }
        }
    }
}

fn apply_console_input(rx: &Receiver<Envelope>, headset: &mut HeadsetSim, pending: &mut Vec<Envelope>, clients: &Clients) {
    while let Ok(env) = rx.try_recv() {
        match env.topic.as_str() {
            msgs::HOLO_COMMAND => {
                if let Ok(msg) = serde_json::from_slice::<CommandMsg>(&env.payload) {
                    pending.extend(outgoing_to_robot(headset.command(&msg.cmd), clients));
                }
            }
            msgs::UI_GAZE => {
                if let Ok(g) = serde_json::from_slice::<Option<GazeMsg>>(&env.payload) {
                    headset.set_gaze(g.map(|g| (g.origin, g.dir)));
                }
            }
            msgs::UI_HEAD => {
                if let Ok(h) = serde_json::from_slice::<HeadMsg>(&env.payload) {
                    let pose = Transform::new(h.pos, h.quat.normalized(), Convention::RosRhZup);
                    headset.set_head(pose, h.roll);
                }
            }
            _ => {}
        }
    }
}

fn broadcast(clients: &Clients, env: &Envelope) {
    let Ok(bytes) = encode_frame(env) else { return };
    let mut list = clients.lock().unwrap_or_else(|p| p.into_inner());
    list.retain(|tx| tx.send(bytes.clone()).is_ok());
}

fn snapshot(now: SimTime, headset: &HeadsetSim, robot: &RobotSim, scenario: &Scenario) -> SnapshotMsg {
    let st = robot.robot().state();
    let modes = headset.modes();
    SnapshotMsg {
        t: now.as_secs(),
        mode: modes.current().name().into(),
        active: modes.is_active(),
        head: PoseMsg::from(headset.head()),
        cursor: headset.cursor_physical(),
        selection: headset.selection_physical(),
        body: PoseMsg::from(&st.body),
        hand: PoseMsg::from(&st.hand_world()),
        gripper_open: st.gripper_open,
        gripper_rotation: st.gripper_rotation,
        power: st.power.to_string(),
        lease: st.lease.to_string(),
        posture: st.posture.to_string(),
        boxes: scenario.scene.boxes.iter().map(|b| [b.min.into(), b.max.into()]).collect(),
        markers: scenario.scene.markers.iter().map(|m| (*m).into()).collect(),
    }
}

fn spawn_ui_acceptor(
    listener: TcpListener,
    assets: Option<PathBuf>,
    clients: Clients,
    input: Sender<Envelope>,
    stop: Arc<AtomicBool>,
) {
    thread::spawn(move || {
        for stream in listener.incoming() {
            if stop.load(Ordering::Relaxed) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let (assets, clients, input) = (assets.clone(), Arc::clone(&clients), input.clone());
            thread::spawn(move || {
                if is_websocket_upgrade(&stream) {
                    websocket_session(stream, clients, input);
                } else {
                    let _ = serve_static(stream, assets.as_deref());
                }
            });
        }
    });
}

fn is_websocket_upgrade(stream: &TcpStream) -> bool {
    let mut buf = [0u8; 2048];
    let _ = stream.set_read_timeout(Some(Duration::from_secs(2)));
    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        let n = stream.peek(&mut buf).unwrap_or(0);
        let head = String::from_utf8_lossy(&buf[..n]).to_ascii_lowercase();
        if head.contains("\r\n\r\n") || n == buf.len() || n == 0 || Instant::now() > deadline {
            return head.contains("upgrade: websocket");
        }
        thread::sleep(Duration::from_millis(5));
    }
}

fn websocket_session(stream: TcpStream, clients: Clients, input: Sender<Envelope>) {
    let _ = stream.set_read_timeout(None);
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    let _ = ws.get_mut().set_read_timeout(Some(Duration::from_millis(20)));
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    clients.lock().unwrap_or_else(|p| p.into_inner()).push(tx);
    let mut decoder = FrameDecoder::new();
    loop {
        match ws.read() {
            Ok(Message::Binary(bytes)) => match decoder.feed(&bytes) {
                Ok(envs) => {
                    for env in envs {
                        if input.send(env).is_err() {
                            return;
                        }
                    }
                }
                Err(_) => {
                    let _ = ws.close(None);
                    return;
                }
            },
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
        while let Ok(bytes) = rx.try_recv() {
            if ws.send(Message::Binary(bytes)).is_err() {
                return;
            }
        }
    }
}

fn serve_static(mut stream: TcpStream, assets: Option<&Path>) -> std::io::Result<()> {
    let mut buf = [0u8; 4096];
    let n = stream.read(&mut buf)?;
    let request = String::from_utf8_lossy(&buf[..n]);
    let path = request.lines().next().and_then(|l| l.split_whitespace().nth(1)).unwrap_or("/");
    let path = path.split('?').next().unwrap_or("/");
    let rel = if path == "/" { "index.html" } else { path.trim_start_matches('/') };
    let (status, ctype, body) = match load_asset(assets, rel) {
        Some(body) => ("200 OK", content_type(rel), body),
        None if rel == "index.html" => ("200 OK", "text/html; charset=utf-8", FALLBACK_INDEX.as_bytes().to_vec()),
        None => ("404 Not Found", "text/plain", b"not found\n".to_vec()),
    };
    write!(stream, "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len())?;
    stream.write_all(&body)
}

fn load_asset(root: Option<&Path>, rel: &str) -> Option<Vec<u8>> {
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    std::fs::read(root?.join(rel)).ok()
}

fn content_type(path: &str) -> &'static str {
    match path.rsplit('.').next() {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

