//! Exercises the WebSocket control surface end to end, in process: a client
//! connects to a served session, streams snapshots, and drives it with
//! commands exactly as an operator console would.

use loco_core::device::DeviceEmulator;
use loco_core::map::{CityMap, GoalZone, StartPose};
use loco_core::session::read_trial_logs;
use loco_host::config::{HostError, InputSourceConfig, ServeConfig};
use loco_host::serve::{run_serve_with, BoundPorts, ServeOutcome};
use serde_json::Value;
use std::collections::BTreeMap;
use std::net::{TcpStream, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

/// One-goal map with no walls. The goal sits `goal_x` meters straight
/// ahead of the start pose (heading 0 points along +x).
fn one_goal_map(goal_x: f64) -> CityMap {
    let map = CityMap {
        start: StartPose {
            x: 0.0,
            y: 0.0,
            heading_deg: 0.0,
        },
        goals: vec![GoalZone {
            id: "kiosk".to_string(),
            name: "Kiosk".to_string(),
            center: [goal_x, 0.0],
            radius: 2.0,
        }],
        walls: Vec::new(),
        guidance: BTreeMap::from([("kiosk".to_string(), vec![[0.0, 0.0], [goal_x, 0.0]])]),
    };
    map.validate().expect("test map is valid");
    map
}

struct Served {
    handle: JoinHandle<Result<ServeOutcome, HostError>>,
    ports: BoundPorts,
    stop: Arc<AtomicBool>,
}

impl Served {
    fn start(config: ServeConfig) -> Served {
        let stop = Arc::new(AtomicBool::new(false));
        let (ports_tx, ports_rx) = mpsc::channel();
        let thread_stop = stop.clone();
        let handle =
            std::thread::spawn(move || run_serve_with(&config, thread_stop, Some(ports_tx)));
        let ports = ports_rx
            .recv_timeout(Duration::from_secs(10))
            .expect("service reports its ports");
        Served {
            handle,
            ports,
            stop,
        }
    }

    fn stop(self) -> ServeOutcome {
        self.stop.store(true, Ordering::Relaxed);
        self.handle
            .join()
            .expect("serve thread exits")
            .expect("serve exits cleanly")
    }
}

fn serve_config(
    dir: &Path,
    map: &CityMap,
    condition: &str,
    input: InputSourceConfig,
) -> ServeConfig {
    let map_path = dir.join("map.json");
    std::fs::write(&map_path, map.to_json_pretty()).unwrap();
    ServeConfig {
        participant: "p99".to_string(),
        condition: condition.parse().unwrap(),
        map: Some(map_path),
        params: None,
        seed: 0,
        input,
        snapshot_hz: 30,
        ws_port: 0,
        out_dir: dir.join("out"),
    }
}

fn connect(port: u16) -> Client {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        match tungstenite::connect(format!("ws://127.0.0.1:{port}")) {
            Ok((ws, _)) => return ws,
            Err(e) => {
                assert!(Instant::now() < deadline, "could not connect: {e}");
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

fn send(ws: &mut Client, json: &str) {
    ws.send(Message::Text(json.to_string())).unwrap();
}

/// Reads messages until one satisfies `pred`, failing after `secs`.
fn wait_for(ws: &mut Client, secs: u64, what: &str, pred: impl Fn(&Value) -> bool) -> Value {
    let deadline = Instant::now() + Duration::from_secs(secs);
    while Instant::now() < deadline {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let value: Value = serde_json::from_str(&text).expect("messages are JSON");
                if pred(&value) {
                    return value;
                }
            }
            Ok(_) => {}
            Err(e) => panic!("connection dropped while waiting for {what}: {e}"),
        }
    }
    panic!("no {what} within {secs} s");
}

fn wait_for_ack(ws: &mut Client, cmd: &str) {
    let reply = wait_for(ws, 10, "ack or error", |v| {
        matches!(v["type"].as_str(), Some("ack") | Some("error"))
    });
    assert_eq!(reply["type"], "ack", "command {cmd} rejected: {reply}");
    assert_eq!(reply["cmd"], cmd);
}

fn wait_for_error(ws: &mut Client, needle: &str) -> String {
    let reply = wait_for(ws, 10, "error reply", |v| v["type"] == "error");
    let message = reply["message"].as_str().expect("errors carry a message");
    assert!(
        message.contains(needle),
        "error {message:?} does not mention {needle:?}"
    );
    message.to_string()
}

#[test]
fn dwell_completion_streams_events_and_writes_logs() {
    let dir = tempfile::tempdir().unwrap();
    // Goal zone at the start pose: the avatar completes by standing still.
    let map = one_goal_map(0.0);
    let config = serve_config(dir.path(), &map, "joystick", InputSourceConfig::Client);
    let out_dir = config.out_dir.clone();
    let served = Served::start(config);
    let mut ws = connect(served.ports.ws_port);

    let hello = wait_for(&mut ws, 10, "first snapshot", |v| v["type"] == "snapshot");
    assert_eq!(hello["condition"], "joystick");
    assert_eq!(hello["session_complete"], false);
    assert_eq!(hello["trials_total"], 1);
    assert_eq!(hello["tick"], 0, "session does not tick before start");

    send(&mut ws, r#"{"type":"command","cmd":"start"}"#);
    wait_for_ack(&mut ws, "start");

    let started = wait_for(&mut ws, 10, "trial_started event", |v| {
        v["type"] == "event" && v["kind"] == "trial_started"
    });
    assert_eq!(started["goal_id"], "kiosk");
    assert_eq!(started["goal_name"], "Kiosk");

    wait_for(&mut ws, 10, "dwell_started event", |v| {
        v["type"] == "event" && v["kind"] == "dwell_started"
    });
    let complete = wait_for(&mut ws, 10, "trial_complete event", |v| {
        v["type"] == "event" && v["kind"] == "trial_complete"
    });
    let completion_s = complete["completion_s"].as_f64().unwrap();
    assert!(
        (2.0..2.5).contains(&completion_s),
        "standing-still completion is the 2 s dwell plus the prompt tick, got {completion_s}"
    );
    wait_for(&mut ws, 10, "session_complete event", |v| {
        v["type"] == "event" && v["kind"] == "session_complete"
    });
    wait_for(&mut ws, 10, "completed snapshot", |v| {
        v["type"] == "snapshot" && v["session_complete"] == true
    });

    let outcome = served.stop();
    assert!(outcome.completed);
    assert_eq!(outcome.logs_written, 1);
    let text = std::fs::read_to_string(out_dir.join("trial_logs.jsonl")).unwrap();
    let logs = read_trial_logs(&text).unwrap();
    assert_eq!(logs.len(), 1);
    assert_eq!(logs[0].goal_id, "kiosk");
    assert!(!logs[0].aborted);
    assert!(out_dir.join("summary.csv").exists());
}

#[test]
fn command_validation_names_the_offending_state() {
    let dir = tempfile::tempdir().unwrap();
    let map = one_goal_map(100.0);
    let config = serve_config(dir.path(), &map, "scooter", InputSourceConfig::Client);
    let out_dir = config.out_dir.clone();
    let served = Served::start(config);
    let mut ws = connect(served.ports.ws_port);

    send(&mut ws, "not json");
    wait_for_error(&mut ws, "JSON");
    send(&mut ws, r#"{"cmd":"start"}"#);
    wait_for_error(&mut ws, "command");
    send(&mut ws, r#"{"type":"command","cmd":"warp"}"#);
    wait_for_error(&mut ws, "unrecognized");
    send(&mut ws, r#"{"type":"command","cmd":"pause"}"#);
    wait_for_error(&mut ws, "idle");
    send(&mut ws, r#"{"type":"command","cmd":"resume"}"#);
    wait_for_error(&mut ws, "idle");

    // Condition can change before the session starts; snapshots follow.
    send(
        &mut ws,
        r#"{"type":"command","cmd":"set_condition","condition":"joystick"}"#,
    );
    wait_for_ack(&mut ws, "set_condition");
    wait_for(&mut ws, 10, "joystick snapshot", |v| {
        v["type"] == "snapshot" && v["condition"] == "joystick"
    });

    send(&mut ws, r#"{"type":"command","cmd":"start"}"#);
    wait_for_ack(&mut ws, "start");
    send(&mut ws, r#"{"type":"command","cmd":"start"}"#);
    wait_for_error(&mut ws, "running");
    send(
        &mut ws,
        r#"{"type":"command","cmd":"set_condition","condition":"scooter"}"#,
    );
    wait_for_error(&mut ws, "running");

    send(
        &mut ws,
        r#"{"type":"command","cmd":"inject_input","yaw":0.0,"slide":1.0}"#,
    );
    wait_for_ack(&mut ws, "inject_input");
    wait_for(&mut ws, 10, "snapshot showing motion", |v| {
        v["type"] == "snapshot" && v["avatar"]["linear_vel"].as_f64().unwrap() > 0.1
    });

    send(&mut ws, r#"{"type":"command","cmd":"pause"}"#);
    wait_for_ack(&mut ws, "pause");
    send(&mut ws, r#"{"type":"command","cmd":"resume"}"#);
    wait_for_ack(&mut ws, "resume");

    // Aborting the only trial ends the session and logs the partial trial.
    send(&mut ws, r#"{"type":"command","cmd":"abort"}"#);
    wait_for(&mut ws, 10, "session_complete event", |v| {
        v["type"] == "event" && v["kind"] == "session_complete"
    });
    wait_for_ack(&mut ws, "abort");

    // A completed session accepts a condition change, which rebuilds it.
    send(
        &mut ws,
        r#"{"type":"command","cmd":"set_condition","condition":"scooter"}"#,
    );
    wait_for_ack(&mut ws, "set_condition");
    wait_for(&mut ws, 10, "rebuilt snapshot", |v| {
        v["type"] == "snapshot" && v["condition"] == "scooter" && v["session_complete"] == false
    });

    let outcome = served.stop();
    assert_eq!(outcome.logs_written, 1);
    let text = std::fs::read_to_string(out_dir.join("trial_logs.jsonl")).unwrap();
    let logs = read_trial_logs(&text).unwrap();
    assert_eq!(logs.len(), 1);
    assert!(logs[0].aborted);
}

#[test]
fn udp_telemetry_moves_the_avatar_and_stale_input_decays() {
    let dir = tempfile::tempdir().unwrap();
    let map = one_goal_map(100.0);
    let config = serve_config(
        dir.path(),
        &map,
        "scooter",
        InputSourceConfig::Udp { port: 0 },
    );
    let served = Served::start(config);
    let udp_port = served.ports.udp_port.expect("udp source binds a port");
    let mut ws = connect(served.ports.ws_port);
    wait_for(&mut ws, 10, "first snapshot", |v| v["type"] == "snapshot");

    send(&mut ws, r#"{"type":"command","cmd":"start"}"#);
    wait_for_ack(&mut ws, "start");
    send(
        &mut ws,
        r#"{"type":"command","cmd":"inject_input","yaw":0.0,"slide":1.0}"#,
    );
    wait_for_error(&mut ws, "client input source");

    // Stream straight-ahead full-speed telemetry for half a second.
    let socket = UdpSocket::bind(("127.0.0.1", 0)).unwrap();
    socket.connect(("127.0.0.1", udp_port)).unwrap();
    let mut emulator = DeviceEmulator::new(Default::default()).unwrap();
    for _ in 0..50 {
        let frame = emulator.emit_speed(0.0, 1.0);
        socket.send(&frame.encode().unwrap()).unwrap();
        std::thread::sleep(Duration::from_millis(10));
    }

    let moving = wait_for(&mut ws, 10, "snapshot showing telemetry motion", |v| {
        v["type"] == "snapshot" && v["avatar"]["x"].as_f64().unwrap() > 0.1
    });
    assert!(moving["input"]["slide"].as_f64().unwrap() > 0.5);
    assert!(
        moving["avatar"]["linear_vel"].as_f64().unwrap() > 0.5,
        "full-slide telemetry accelerates the avatar"
    );
    assert_eq!(
        moving["avatar"]["y"].as_f64().unwrap(),
        0.0,
        "heading 0 telemetry drives the avatar along +x only"
    );

    // No more datagrams: the latch goes stale and the avatar brakes to rest.
    let stopped = wait_for(&mut ws, 10, "snapshot at rest after staleness", |v| {
        v["type"] == "snapshot"
            && v["input"]["slide"] == 0.0
            && v["avatar"]["linear_vel"].as_f64().unwrap().abs() < 1e-9
    });
    assert!(stopped["avatar"]["x"].as_f64().unwrap() > 0.1);

    served.stop();
}
