//! The live session service: one authoritative 100 Hz tick loop that owns
//! the session and pipeline, fed by message queues from the UDP telemetry
//! reader and the WebSocket clients. Clients receive immutable state
//! snapshots and session events; they never touch simulation state directly.

use crate::config::{load_map, load_params, read_file, HostError, InputSourceConfig, ServeConfig};
use crate::headless::write_outputs;
use loco_core::device::DeviceCalibration;
use loco_core::mapping::{InputSource, NormalizedInput};
use loco_core::runtime::{
    snapshot, CommandTrace, Pipeline, ScooterFrameMapper, SnapshotPacer, TraceFeed,
};
use loco_core::session::{make_session, Condition, Session, TrialLog};
use loco_core::sim::TICK_DT;
use loco_core::wire::EncoderFrame;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::net::{TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TrySendError};
use std::sync::Arc;
use std::time::{Duration, Instant};
use tungstenite::{HandshakeError, Message, WebSocket};

/// Commands accepted over the WebSocket, as `{"type": "command", "cmd": ...}`
/// messages.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    /// Begin ticking the session.
    Start,
    /// Freeze the session clock; state is preserved.
    Pause,
    /// Continue a paused session.
    Resume,
    /// Abandon the current trial, logging it as aborted.
    Abort,
    /// Latch one normalized input sample. Only valid with the `client`
    /// input source.
    InjectInput { yaw: f64, slide: f64 },
    /// Rebuild the session under a different condition. Only valid before
    /// `start` or after the session completes.
    SetCondition { condition: Condition },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Start => "start",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Abort => "abort",
            Command::InjectInput { .. } => "inject_input",
            Command::SetCondition { .. } => "set_condition",
        }
    }
}

/// Lifecycle of the served session. `serve` starts idle and waits for a
/// `start` command; completion pauses the clock for good unless a
/// `set_condition` rebuild follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunState {
    Idle,
    Running,
    Paused,
    Complete,
}

impl RunState {
    fn name(&self) -> &'static str {
        match self {
            RunState::Idle => "idle",
            RunState::Running => "running",
            RunState::Paused => "paused",
            RunState::Complete => "complete",
        }
    }
}

/// Messages into the tick loop. Everything that mutates session state
/// arrives through this queue.
enum LoopMsg {
    /// A decoded input sample from the UDP reader.
    Input(NormalizedInput),
    /// Raw command text from a client; parsed on the loop thread so replies
    /// stay ordered with state changes.
    Command {
        client: u64,
        text: String,
    },
    ClientConnected {
        client: u64,
        out: SyncSender<String>,
    },
    ClientGone {
        client: u64,
    },
}

/// Ports actually bound, reported before the loop starts. Distinguishes the
/// requested port from the assigned one when a config asks for port 0.
#[derive(Debug, Clone, Copy)]
pub struct BoundPorts {
    pub ws_port: u16,
    pub udp_port: Option<u16>,
}

/// What the service did before it was stopped.
#[derive(Debug, Clone)]
pub struct ServeOutcome {
    pub ticks: u64,
    pub completed: bool,
    pub logs_written: usize,
}

/// Runs the service until `stop` is set. Blocks the calling thread; the
/// WebSocket listener, UDP reader, and per-client connections run on
/// worker threads that only communicate through queues.
pub fn run_serve(config: &ServeConfig, stop: Arc<AtomicBool>) -> Result<ServeOutcome, HostError> {
    run_serve_with(config, stop, None)
}

/// [`run_serve`] variant that reports the bound ports through `ports_tx`,
/// so callers binding port 0 can learn the assigned ones.
pub fn run_serve_with(
    config: &ServeConfig,
    stop: Arc<AtomicBool>,
    ports_tx: Option<Sender<BoundPorts>>,
) -> Result<ServeOutcome, HostError> {
    let map = load_map(config.map.as_deref())?;
    let params = load_params(config.params.as_deref())?;
    if matches!(config.input, InputSourceConfig::Udp { .. })
        && config.condition == Condition::Joystick
    {
        return Err(HostError::Data(
            "udp telemetry carries scooter encoder frames; use the client or trace \
             input source for the joystick condition"
                .to_string(),
        ));
    }

    // A trace source is read once up front so a bad file fails fast.
    let trace = match &config.input {
        InputSourceConfig::Trace { path } => {
            let text = read_file(path)?;
            let trace = CommandTrace::parse(&text)
                .map_err(|e| HostError::Data(format!("{}: {e}", path.display())))?;
            if trace.condition != config.condition {
                return Err(HostError::Data(format!(
                    "trace {} was recorded under the {} condition, not {}",
                    path.display(),
                    trace.condition.as_str(),
                    config.condition.as_str()
                )));
            }
            Some(trace)
        }
        _ => None,
    };

    let listener = TcpListener::bind(("0.0.0.0", config.ws_port))
        .map_err(|e| HostError::from_io(&format!("ws port {}", config.ws_port), &e))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| HostError::Internal(format!("ws listener: {e}")))?;
    let ws_port = listener
        .local_addr()
        .map_err(|e| HostError::Internal(format!("ws listener: {e}")))?
        .port();

    let (tx, rx) = mpsc::channel::<LoopMsg>();

    let udp_port = match &config.input {
        InputSourceConfig::Udp { port } => {
            let socket = UdpSocket::bind(("0.0.0.0", *port))
                .map_err(|e| HostError::from_io(&format!("udp port {port}"), &e))?;
            let bound = socket
                .local_addr()
                .map_err(|e| HostError::Internal(format!("udp socket: {e}")))?
                .port();
            spawn_udp_reader(socket, &params, tx.clone(), stop.clone())?;
            Some(bound)
        }
        _ => None,
    };

    if let Some(ports_tx) = ports_tx {
        let _ = ports_tx.send(BoundPorts { ws_port, udp_port });
    }
    spawn_acceptor(listener, tx.clone(), stop.clone());

    let loop_ctx = LoopCtx {
        config: config.clone(),
        map,
        params,
        trace,
        rx,
        stop,
    };
    tick_loop(loop_ctx)
}

struct LoopCtx {
    config: ServeConfig,
    map: loco_core::map::CityMap,
    params: loco_core::mapping::ParamSet,
    trace: Option<CommandTrace>,
    rx: Receiver<LoopMsg>,
    stop: Arc<AtomicBool>,
}

/// Session plus pipeline, rebuilt together on `set_condition`.
struct Stage {
    session: Session,
    pipeline: Pipeline,
    /// Next trace row to feed, for the trace input source.
    trace_pos: usize,
    feed: Option<TraceFeed>,
    /// Whether this session's logs have been folded into the output files.
    captured: bool,
}

impl Stage {
    fn build(ctx: &LoopCtx, condition: Condition) -> Result<Stage, HostError> {
        let source = match condition {
            Condition::Scooter => InputSource::Scooter,
            Condition::Joystick => InputSource::Joystick,
        };
        let session = make_session(
            &ctx.config.participant,
            condition,
            ctx.map.clone(),
            ctx.config.seed,
        );
        let pipeline = Pipeline::new(ctx.params, source, ctx.map.start.heading_deg);
        let feed = match &ctx.trace {
            Some(_) => Some(
                TraceFeed::new(condition, &ctx.params, None)
                    .map_err(|e| HostError::Internal(e.to_string()))?,
            ),
            None => None,
        };
        Ok(Stage {
            session,
            pipeline,
            trace_pos: 0,
            feed,
            captured: false,
        })
    }
}

fn tick_loop(ctx: LoopCtx) -> Result<ServeOutcome, HostError> {
    let mut stage = Stage::build(&ctx, ctx.config.condition)?;
    let mut state = RunState::Idle;
    let mut clients: BTreeMap<u64, SyncSender<String>> = BTreeMap::new();
    let mut all_logs: Vec<TrialLog> = Vec::new();
    let pacer = SnapshotPacer::new(ctx.config.snapshot_hz);
    let mut iter: u64 = 0;
    let mut ticks: u64 = 0;
    let mut completed = false;

    let period = Duration::from_secs_f64(TICK_DT);
    let mut next_tick = Instant::now();

    while !ctx.stop.load(Ordering::Relaxed) {
        // Drain every pending message before computing the tick, so inputs
        // and commands take effect on the tick they arrived for.
        while let Ok(msg) = ctx.rx.try_recv() {
            match msg {
                LoopMsg::Input(input) => {
                    stage
                        .pipeline
                        .offer_input(input, stage.session.tick_count());
                }
                LoopMsg::ClientConnected { client, out } => {
                    let hello = snapshot_json(&stage);
                    let _ = out.try_send(hello);
                    clients.insert(client, out);
                }
                LoopMsg::ClientGone { client } => {
                    clients.remove(&client);
                }
                LoopMsg::Command { client, text } => {
                    let reply = match parse_command(&text) {
                        Ok(cmd) => {
                            match apply_command(&cmd, &ctx, &mut stage, &mut state, &mut all_logs)?
                            {
                                Applied::Ok => {
                                    format!(r#"{{"type":"ack","cmd":"{}"}}"#, cmd.name())
                                }
                                Applied::Rejected(message) => error_json(&message),
                                Applied::Completed(final_event) => {
                                    completed = true;
                                    broadcast(&mut clients, &final_event);
                                    format!(r#"{{"type":"ack","cmd":"{}"}}"#, cmd.name())
                                }
                            }
                        }
                        Err(message) => error_json(&message),
                    };
                    send_to(&mut clients, client, reply);
                }
            }
        }

        if state == RunState::Running {
            if let (Some(trace), Some(feed)) = (&ctx.trace, &mut stage.feed) {
                if let Some(row) = trace.rows.get(stage.trace_pos) {
                    feed.feed(*row, stage.session.tick_count(), &mut stage.pipeline)
                        .map_err(|e| HostError::Internal(e.to_string()))?;
                    stage.trace_pos += 1;
                }
            }
            let events = stage.pipeline.tick(&mut stage.session);
            ticks += 1;
            for event in &events {
                let json = event_json(event);
                broadcast(&mut clients, &json);
            }
            if stage.session.is_complete() {
                state = RunState::Complete;
                completed = true;
                capture_logs(&ctx, &mut stage, &mut all_logs)?;
            }
        }

        iter += 1;
        if pacer.due(iter) {
            let json = snapshot_json(&stage);
            broadcast(&mut clients, &json);
        }

        next_tick += period;
        let now = Instant::now();
        if next_tick > now {
            std::thread::sleep(next_tick - now);
        } else {
            // Fell behind (debugger pause, loaded machine): resynchronize
            // instead of bursting to catch up.
            next_tick = now;
        }
    }

    if !stage.captured && !stage.session.logs().is_empty() {
        capture_logs(&ctx, &mut stage, &mut all_logs)?;
    }
    Ok(ServeOutcome {
        ticks,
        completed,
        logs_written: all_logs.len(),
    })
}

/// Folds the stage's logs into the cumulative output files. Cumulative so a
/// `set_condition` rerun appends to, rather than clobbers, the first
/// condition's logs.
fn capture_logs(
    ctx: &LoopCtx,
    stage: &mut Stage,
    all_logs: &mut Vec<TrialLog>,
) -> Result<(), HostError> {
    stage.captured = true;
    all_logs.extend(stage.session.logs().iter().cloned());
    write_outputs(&ctx.config.out_dir, all_logs)
}

enum Applied {
    Ok,
    /// Command was valid JSON but not legal right now; reply only.
    Rejected(String),
    /// An abort ended the whole session; broadcast this event.
    Completed(String),
}

fn apply_command(
    cmd: &Command,
    ctx: &LoopCtx,
    stage: &mut Stage,
    state: &mut RunState,
    all_logs: &mut Vec<TrialLog>,
) -> Result<Applied, HostError> {
    match cmd {
        Command::Start => match state {
            RunState::Idle => {
                *state = RunState::Running;
                Ok(Applied::Ok)
            }
            _ => Ok(Applied::Rejected(format!(
                "cannot start while {}",
                state.name()
            ))),
        },
        Command::Pause => match state {
            RunState::Running => {
                *state = RunState::Paused;
                Ok(Applied::Ok)
            }
            _ => Ok(Applied::Rejected(format!(
                "cannot pause while {}",
                state.name()
            ))),
        },
        Command::Resume => match state {
            RunState::Paused => {
                *state = RunState::Running;
                Ok(Applied::Ok)
            }
            _ => Ok(Applied::Rejected(format!(
                "cannot resume while {}",
                state.name()
            ))),
        },
        Command::Abort => match state {
            RunState::Running | RunState::Paused => match stage.session.abort_trial() {
                Some(event) => {
                    *state = RunState::Complete;
                    capture_logs(ctx, stage, all_logs)?;
                    Ok(Applied::Completed(event_json(&event)))
                }
                None => Ok(Applied::Ok),
            },
            _ => Ok(Applied::Rejected(format!(
                "cannot abort while {}",
                state.name()
            ))),
        },
        Command::InjectInput { yaw, slide } => {
            if ctx.config.input != InputSourceConfig::Client {
                return Ok(Applied::Rejected(
                    "inject_input requires the client input source".to_string(),
                ));
            }
            if !yaw.is_finite() || !slide.is_finite() {
                return Ok(Applied::Rejected(
                    "inject_input values must be finite".to_string(),
                ));
            }
            let input = NormalizedInput::new(
                *yaw,
                *slide,
                stage.pipeline.source(),
                stage.session.time_s(),
            );
            stage
                .pipeline
                .offer_input(input, stage.session.tick_count());
            Ok(Applied::Ok)
        }
        Command::SetCondition { condition } => {
            match state {
                RunState::Idle | RunState::Complete => {}
                RunState::Running | RunState::Paused => {
                    return Ok(Applied::Rejected(format!(
                        "cannot change condition while {}; abort or finish the session first",
                        state.name()
                    )));
                }
            }
            if let Some(trace) = &ctx.trace {
                if trace.condition != *condition {
                    return Ok(Applied::Rejected(format!(
                        "the trace input was recorded under the {} condition",
                        trace.condition.as_str()
                    )));
                }
            }
            if matches!(ctx.config.input, InputSourceConfig::Udp { .. })
                && *condition == Condition::Joystick
            {
                return Ok(Applied::Rejected(
                    "udp telemetry carries scooter encoder frames; the joystick \
                     condition needs the client or trace input source"
                        .to_string(),
                ));
            }
            *stage = Stage::build(ctx, *condition)?;
            *state = RunState::Idle;
            Ok(Applied::Ok)
        }
    }
}

fn parse_command(text: &str) -> Result<Command, String> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| format!("message is not JSON: {e}"))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| "message must be a JSON object".to_string())?;
    match obj.remove("type") {
        Some(serde_json::Value::String(t)) if t == "command" => {}
        _ => return Err(r#"message must carry "type": "command""#.to_string()),
    }
    serde_json::from_value(value).map_err(|e| format!("unrecognized command: {e}"))
}

fn snapshot_json(stage: &Stage) -> String {
    let snap = snapshot(&stage.session, &stage.pipeline);
    tagged_json("snapshot", serde_json::to_value(&snap))
}

fn event_json(event: &loco_core::session::SessionEvent) -> String {
    tagged_json("event", serde_json::to_value(event))
}

fn tagged_json(tag: &str, value: serde_json::Result<serde_json::Value>) -> String {
    let mut value = value.expect("loop state serialization cannot fail");
    value
        .as_object_mut()
        .expect("loop messages serialize to objects")
        .insert("type".to_string(), serde_json::Value::String(tag.into()));
    value.to_string()
}

fn error_json(message: &str) -> String {
    serde_json::json!({ "type": "error", "message": message }).to_string()
}

fn send_to(clients: &mut BTreeMap<u64, SyncSender<String>>, client: u64, json: String) {
    if let Some(out) = clients.get(&client) {
        match out.try_send(json) {
            // A client that stopped draining its queue loses messages
            // rather than stalling the tick loop.
            Ok(()) | Err(TrySendError::Full(_)) => {}
            Err(TrySendError::Disconnected(_)) => {
                clients.remove(&client);
            }
        }
    }
}

fn broadcast(clients: &mut BTreeMap<u64, SyncSender<String>>, json: &str) {
    let gone: Vec<u64> = clients
        .iter()
        .filter_map(|(id, out)| match out.try_send(json.to_string()) {
            Ok(()) | Err(TrySendError::Full(_)) => None,
            Err(TrySendError::Disconnected(_)) => Some(*id),
        })
        .collect();
    for id in gone {
        clients.remove(&id);
    }
}

/// Reads telemetry datagrams and forwards decoded frames to the loop.
/// Non-frame traffic on the port is ignored; the wire codec rejects it.
fn spawn_udp_reader(
    socket: UdpSocket,
    params: &loco_core::mapping::ParamSet,
    tx: Sender<LoopMsg>,
    stop: Arc<AtomicBool>,
) -> Result<(), HostError> {
    socket
        .set_read_timeout(Some(Duration::from_millis(50)))
        .map_err(|e| HostError::Internal(format!("udp socket: {e}")))?;
    let mapper = ScooterFrameMapper::new(DeviceCalibration::default(), params.max_slide_speed);
    std::thread::spawn(move || {
        let mut buf = [0u8; 64];
        while !stop.load(Ordering::Relaxed) {
            match socket.recv(&mut buf) {
                Ok(n) => {
                    if let Ok(frame) = EncoderFrame::decode(&buf[..n]) {
                        let input = mapper.input_from_frame(&frame);
                        if tx.send(LoopMsg::Input(input)).is_err() {
                            break;
                        }
                    }
                }
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut => {}
                Err(_) => break,
            }
        }
    });
    Ok(())
}

/// Accepts WebSocket connections and hands each to its own thread.
fn spawn_acceptor(listener: TcpListener, tx: Sender<LoopMsg>, stop: Arc<AtomicBool>) {
    std::thread::spawn(move || {
        let mut next_id: u64 = 1;
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let id = next_id;
                    next_id += 1;
                    let tx = tx.clone();
                    let stop = stop.clone();
                    std::thread::spawn(move || client_thread(stream, id, tx, stop));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(_) => break,
            }
        }
    });
}

/// Services one client: reads command messages into the loop queue and
/// drains the loop's outgoing queue onto the socket. Alternating with short
/// read timeouts keeps one thread per client without async machinery.
fn client_thread(stream: TcpStream, id: u64, tx: Sender<LoopMsg>, stop: Arc<AtomicBool>) {
    if stream
        .set_read_timeout(Some(Duration::from_millis(1000)))
        .is_err()
    {
        return;
    }
    let mut ws = match accept_with_retries(stream) {
        Some(ws) => ws,
        None => return,
    };
    if ws
        .get_ref()
        .set_read_timeout(Some(Duration::from_millis(5)))
        .is_err()
    {
        return;
    }
    let (out_tx, out_rx) = mpsc::sync_channel::<String>(64);
    if tx
        .send(LoopMsg::ClientConnected {
            client: id,
            out: out_tx,
        })
        .is_err()
    {
        return;
    }

    'serve: while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                if tx.send(LoopMsg::Command { client: id, text }).is_err() {
                    break;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut => {}
            Err(_) => break,
        }
        while let Ok(json) = out_rx.try_recv() {
            if ws.send(Message::Text(json)).is_err() {
                break 'serve;
            }
        }
    }
    let _ = ws.close(None);
    let _ = tx.send(LoopMsg::ClientGone { client: id });
}

/// Completes the WebSocket handshake on a stream with a read timeout,
/// retrying the interrupted state until it finishes or gives up.
fn accept_with_retries(stream: TcpStream) -> Option<WebSocket<TcpStream>> {
    let mut attempt = tungstenite::accept(stream);
    for _ in 0..200 {
        match attempt {
            Ok(ws) => return Some(ws),
            Err(HandshakeError::Interrupted(mid)) => {
                std::thread::sleep(Duration::from_millis(5));
                attempt = mid.handshake();
            }
            Err(HandshakeError::Failure(_)) => return None,
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commands_parse_from_tagged_messages() {
        assert_eq!(
            parse_command(r#"{"type":"command","cmd":"start"}"#).unwrap(),
            Command::Start
        );
        assert_eq!(
            parse_command(r#"{"type":"command","cmd":"inject_input","yaw":0.5,"slide":1.0}"#)
                .unwrap(),
            Command::InjectInput {
                yaw: 0.5,
                slide: 1.0
            }
        );
        assert_eq!(
            parse_command(r#"{"type":"command","cmd":"set_condition","condition":"joystick"}"#)
                .unwrap(),
            Command::SetCondition {
                condition: Condition::Joystick
            }
        );
        assert!(parse_command(r#"{"cmd":"start"}"#).is_err());
        assert!(parse_command(r#"{"type":"command","cmd":"warp"}"#).is_err());
        assert!(parse_command("not json").is_err());
    }
}
