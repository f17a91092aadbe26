use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use teleop_core::bus::{decode_frames, encode_frame, BusError, Direction, Endpoint, Envelope, TopicRegistry};
use teleop_core::harness::Scenario;
use teleop_core::msgs::{self, CommandMsg, UiEvent};
use teleop_core::serve::{ServeOptions, Server, SnapshotMsg};
use tungstenite::Message;

const IDLE: &str = r#"
version = 1
name = "idle"
time_limit = 600.0
[success]
body_within = { point = [3.0, 0.0, 0.0], radius = 0.1 }
"#;

struct Running {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    bus: SocketAddr,
    ui: SocketAddr,
}

impl Drop for Running {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn start(assets: Option<std::path::PathBuf>) -> Running {
    let opts = ServeOptions {
        scenario: Scenario::parse(IDLE).unwrap(),
        bus_port: 0,
        ui_port: 0,
        assets,
        anchor_store: None,
        seed: 1,
    };
    let server = Server::bind(opts).unwrap();
    let (bus, ui) = (server.bus_addr(), server.ui_addr());
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let handle = thread::spawn(move || server.run(flag).unwrap());
    Running { stop, handle: Some(handle), bus, ui }
}

fn http_get(addr: SocketAddr, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut text = String::new();
    s.read_to_string(&mut text).unwrap();
    let code = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = text.split_once("\r\n\r\n").map(|(_, b)| b.to_owned()).unwrap_or_default();
    (code, body)
}

#[test]
fn serves_placeholder_and_assets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>console</p>").unwrap();
    std::fs::write(dir.path().join("app.js"), "let x = 1;").unwrap();

    let bare = start(None);
    let (code, body) = http_get(bare.ui, "/");
    assert_eq!(code, 200);
    assert!(body.contains("WebSocket"));

    let with = start(Some(dir.path().to_owned()));
    assert_eq!(http_get(with.ui, "/"), (200, "<p>console</p>".into()));
    assert_eq!(http_get(with.ui, "/app.js"), (200, "let x = 1;".into()));
    assert_eq!(http_get(with.ui, "/missing.css").0, 404);
    assert_ne!(http_get(with.ui, "/../Cargo.toml").0, 200);
}

fn next_envelope(ws: &mut tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>) -> Vec<Envelope> {
    match ws.read() {
        Ok(Message::Binary(bytes)) => {
            let (envs, rest) = decode_frames(&bytes).unwrap();
            assert!(rest.is_empty(), "one or more whole frames per message");
            envs
        }
        Ok(_) => Vec::new(),
        Err(e) => panic!("websocket closed: {e}"),
    }
}

#[test]
fn websocket_carries_bus_frames() {
    let srv = start(None);
    let (mut ws, _) = tungstenite::connect(format!("ws://{}/bus", srv.ui)).unwrap();
    if let tungstenite::stream::MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    let cmd = Envelope::new(msgs::HOLO_COMMAND, serde_json::to_vec(&CommandMsg::plain("claim")).unwrap());
    ws.send(Message::binary(encode_frame(&cmd).unwrap())).unwrap();

    let deadline = Instant::now() + Duration::from_secs(10);
    let (mut tooltip, mut claimed, mut telemetry) = (false, false, false);
    while Instant::now() < deadline && !(tooltip && claimed && telemetry) {
        for env in next_envelope(&mut ws) {
            match env.topic.as_str() {
                msgs::UI_EVENTS => {
                    let ev: UiEvent = serde_json::from_slice(&env.payload).unwrap();
                    tooltip |= ev == UiEvent::Tooltip { text: "claim".into() };
                }
                msgs::UI_SNAPSHOT => {
                    let snap: SnapshotMsg = serde_json::from_slice(&env.payload).unwrap();
                    claimed |= snap.lease == "claimed";
                }
                msgs::SPOT_STATUS => telemetry = true,
                _ => {}
            }
        }
    }
    assert!(tooltip && claimed && telemetry, "tooltip {tooltip} claimed {claimed} telemetry {telemetry}");
}

#[test]
fn external_bus_client_drives_the_robot() {
    let srv = start(None);
    let topics = TopicRegistry::new()
        .with(msgs::HOLO_COMMAND, Direction::Outbound, "CommandMsg")
        .with(msgs::SPOT_STATUS, Direction::Inbound, "StatusMsg")
        .with(msgs::SPOT_JOINT_STATES, Direction::Inbound, "JointStatesMsg");
    let client = Endpoint::connect(srv.bus, topics).unwrap();

    let err = client
        .call_service(msgs::SVC_GRIPPER_ANGLE_OPEN, br#"{"angle":1.0}"#, Duration::from_secs(5))
        .unwrap_err();
    assert!(matches!(&err, BusError::Remote(m) if m.contains("lease_required")), "{err}");

    for c in ["claim", "power on"] {
        client.publish_json(msgs::HOLO_COMMAND, &CommandMsg::plain(c)).unwrap();
    }
    let reply = client.call_service(msgs::SVC_GRIPPER_ANGLE_OPEN, br#"{"angle":1.0}"#, Duration::from_secs(5)).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&reply).unwrap();
    assert_eq!(v["angle"], 1.0);

    let deadline = Instant::now() + Duration::from_secs(5);
    let mut powered = false;
    while Instant::now() < deadline && !powered {
        if let Some(env) = client.recv_timeout(Duration::from_millis(200)) {
            if env.topic == msgs::SPOT_STATUS {
                let st: msgs::StatusMsg = serde_json::from_slice(&env.payload).unwrap();
                powered = st.power == "on";
            }
        }
    }
    assert!(powered);
}
