//! Fixed-rate pipeline from normalized input to avatar motion and trial
//! state, plus recorded command traces for headless, reproducible runs.
//!
//! Per tick the pipeline samples the most recent input (held between
//! arrivals, decayed to zero once stale), shapes it into velocity targets,
//! applies the acceleration clamp, integrates the pose, resolves wall
//! contact, and advances the trial engine. Every step is deterministic, so
//! a recorded command trace replays to bit-identical trajectories.

use crate::device::{DeviceCalibration, DeviceEmulator};
use crate::mapping::{
    clamp_step, counts_to_slide, handlebar_to_yaw, joystick_to_input, target_velocities,
    DirectHeadingTracker, InputSource, NormalizedInput, ParamSet, YawMode,
    HANDLEBAR_FULL_SCALE_DEG,
};
use crate::pilot::{PilotParams, ScriptedPilot};
use crate::session::{Condition, Session, SessionEvent, TrialLog, TrialPhase};
use crate::sim::{integrate_pose, AvatarState, DEFAULT_COLLISION_RADIUS, TICK_DT, TICK_RATE_HZ};
use crate::wire::{EncoderFrame, WireError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Ticks an input is held before the pipeline treats it as stale and decays
/// the velocity targets to zero (200 ms at the 100 Hz tick rate).
pub const STALE_INPUT_TICKS: u64 = 20;

/// Nominal pose-snapshot stream rate for attached viewers, Hz.
pub const DEFAULT_SNAPSHOT_HZ: u64 = 30;

/// Ticks of zero input recorded after each trial completion. The pad keeps
/// command rows aligned with trial boundaries even when a lossy replay
/// finishes a trial a few ticks away from where the recording did.
pub const TRACE_GUARD_TICKS: u64 = 100;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("command trace is invalid: {0}")]
    BadTrace(String),
    #[error("telemetry frame rejected: {0}")]
    Wire(#[from] WireError),
    #[error("session did not complete within {0} ticks")]
    Timeout(u64),
    #[error(transparent)]
    Device(#[from] crate::device::DeviceError),
    #[error(transparent)]
    Session(#[from] crate::session::SessionError),
}

/// Most recent input plus its arrival tick; zero until anything arrives.
#[derive(Debug, Clone, Copy)]
pub struct InputLatch {
    held: Option<(NormalizedInput, u64)>,
}

impl InputLatch {
    pub fn new() -> Self {
        InputLatch { held: None }
    }

    pub fn offer(&mut self, input: NormalizedInput, at_tick: u64) {
        self.held = Some((input, at_tick));
    }

    /// Input to act on at `now_tick`: the held value while fresh, zero once
    /// it has been stale for more than [`STALE_INPUT_TICKS`].
    pub fn sample(&self, now_tick: u64, source: InputSource) -> NormalizedInput {
        match self.held {
            Some((input, at)) if now_tick.saturating_sub(at) <= STALE_INPUT_TICKS => input,
            _ => NormalizedInput::zero(source, now_tick as f64 / TICK_RATE_HZ),
        }
    }
}

impl Default for InputLatch {
    fn default() -> Self {
        Self::new()
    }
}

/// Input-to-motion pipeline for one session.
#[derive(Debug, Clone)]
pub struct Pipeline {
    params: ParamSet,
    source: InputSource,
    latch: InputLatch,
    tracker: DirectHeadingTracker,
    last_input: NormalizedInput,
    collision_radius: f64,
}

impl Pipeline {
    pub fn new(params: ParamSet, source: InputSource, start_heading_deg: f64) -> Pipeline {
        Pipeline {
            params,
            source,
            latch: InputLatch::new(),
            tracker: DirectHeadingTracker::new(start_heading_deg),
            last_input: NormalizedInput::zero(source, 0.0),
            collision_radius: DEFAULT_COLLISION_RADIUS,
        }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn source(&self) -> InputSource {
        self.source
    }

    /// Latches a new input sample. Call once per arriving datagram or
    /// gamepad poll; the value holds until the next arrival or staleness.
    pub fn offer_input(&mut self, input: NormalizedInput, at_tick: u64) {
        self.latch.offer(input, at_tick);
    }

    /// Input the pipeline acted on during the latest tick.
    pub fn last_input(&self) -> &NormalizedInput {
        &self.last_input
    }

    /// Runs one simulation tick against `session` and returns its events.
    pub fn tick(&mut self, session: &mut Session) -> Vec<SessionEvent> {
        let now = session.tick_count();
        let input = self.latch.sample(now, self.source);
        self.last_input = input;
        let motion = self.params.motion;

        let (v_target, w_rate) = target_velocities(&input, &motion);
        let w_target = match motion.yaw_mode {
            YawMode::RateControl => w_rate,
            YawMode::DirectHeading => self.tracker.angular_target(
                input.yaw,
                session.avatar().heading_deg,
                &motion,
                TICK_DT,
            ),
        };

        {
            let avatar = session.avatar_mut();
            avatar.linear_vel = clamp_step(
                avatar.linear_vel,
                v_target,
                motion.linear_accel_limit,
                TICK_DT,
            );
            avatar.angular_vel = clamp_step(
                avatar.angular_vel,
                w_target,
                motion.angular_accel_limit,
                TICK_DT,
            );
            integrate_pose(avatar, TICK_DT);
        }
        session.resolve_walls(self.collision_radius);

        let events = session.tick();
        if events
            .iter()
            .any(|e| matches!(e, SessionEvent::TrialComplete { .. }))
        {
            // The avatar teleported home; re-anchor heading control there.
            self.tracker.reset(session.map().start.heading_deg);
        }
        events
    }
}

/// Converts raw scooter telemetry frames into normalized input.
#[derive(Debug, Clone)]
pub struct ScooterFrameMapper {
    calibration: DeviceCalibration,
    max_slide_speed: f64,
}

impl ScooterFrameMapper {
    pub fn new(calibration: DeviceCalibration, max_slide_speed: f64) -> ScooterFrameMapper {
        ScooterFrameMapper {
            calibration,
            max_slide_speed,
        }
    }

    pub fn input_from_frame(&self, frame: &EncoderFrame) -> NormalizedInput {
        let yaw = handlebar_to_yaw(frame.handlebar_raw, self.calibration.center_raw)
            .expect("decoded frames are range-checked");
        let slide = counts_to_slide(
            frame.treadmill_delta,
            self.calibration.sample_dt(),
            self.calibration.counts_per_meter,
            self.max_slide_speed,
        );
        NormalizedInput::new(
            yaw,
            slide,
            InputSource::Scooter,
            frame.device_time_ms as f64 / 1000.0,
        )
    }
}

/// Emits `true` on the ticks where a nominally `hz`-rate stream should send,
/// spreading emissions evenly across the 100 Hz tick grid.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotPacer {
    hz: u64,
}

impl SnapshotPacer {
    pub fn new(hz: u64) -> SnapshotPacer {
        SnapshotPacer {
            hz: hz.clamp(1, TICK_RATE_HZ as u64),
        }
    }

    pub fn due(&self, tick: u64) -> bool {
        (tick * self.hz) % (TICK_RATE_HZ as u64) < self.hz
    }
}

/// Pose and trial state published to attached viewers.
#[derive(Debug, Clone, Serialize)]
pub struct StateSnapshot {
    pub tick: u64,
    pub time_s: f64,
    pub avatar: AvatarState,
    pub condition: Condition,
    pub trial_index: usize,
    pub trials_total: usize,
    pub phase: Option<TrialPhase>,
    pub goal_id: Option<String>,
    pub goal_name: Option<String>,
    pub session_complete: bool,
    pub input: NormalizedInput,
}

pub fn snapshot(session: &Session, pipeline: &Pipeline) -> StateSnapshot {
    let goal = session.current_goal();
    StateSnapshot {
        tick: session.tick_count(),
        time_s: session.time_s(),
        avatar: *session.avatar(),
        condition: session.condition,
        trial_index: session.trial_index(),
        trials_total: session.trials_total(),
        phase: session.current_phase(),
        goal_id: goal.map(|g| g.id.clone()),
        goal_name: goal.map(|g| g.name.clone()),
        session_complete: session.is_complete(),
        input: *pipeline.last_input(),
    }
}

/// Recorded per-tick commands: one `(yaw, slide)` row per 100 Hz tick, both
/// normalized to `[-1, 1]`. Rows are written with Rust's shortest
/// round-trip float formatting, so a parsed trace is bit-identical to the
/// one recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandTrace {
    pub condition: Condition,
    pub rows: Vec<[f64; 2]>,
}

impl CommandTrace {
    pub fn parse(text: &str) -> Result<CommandTrace, RuntimeError> {
        let mut condition = None;
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(value) = line.strip_prefix("condition:") {
                if condition.is_some() {
                    return Err(RuntimeError::BadTrace(format!(
                        "line {}: duplicate condition header",
                        i + 1
                    )));
                }
                condition = Some(
                    value
                        .trim()
                        .parse::<Condition>()
                        .map_err(|e| RuntimeError::BadTrace(format!("line {}: {e}", i + 1)))?,
                );
                continue;
            }
            let mut parts = line.split_whitespace();
            let yaw = parts
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| {
                    RuntimeError::BadTrace(format!("line {}: expected `yaw slide`", i + 1))
                })?;
            let slide = parts
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| {
                    RuntimeError::BadTrace(format!("line {}: expected `yaw slide`", i + 1))
                })?;
            if parts.next().is_some() {
                return Err(RuntimeError::BadTrace(format!(
                    "line {}: expected exactly two values",
                    i + 1
                )));
            }
            if !(yaw.is_finite() && slide.is_finite()) {
                return Err(RuntimeError::BadTrace(format!(
                    "line {}: values must be finite",
                    i + 1
                )));
            }
            if condition.is_none() {
                return Err(RuntimeError::BadTrace(format!(
                    "line {}: command rows before the condition header",
                    i + 1
                )));
            }
            rows.push([yaw, slide]);
        }
        let condition = condition
            .ok_or_else(|| RuntimeError::BadTrace("missing `condition:` header".into()))?;
        if rows.is_empty() {
            return Err(RuntimeError::BadTrace("trace has no command rows".into()));
        }
        Ok(CommandTrace { condition, rows })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("# command trace: one `yaw slide` row per 100 Hz tick\n");
        out.push_str(&format!("condition: {}\n", self.condition.as_str()));
        for [yaw, slide] in &self.rows {
            out.push_str(&format!("{yaw} {slide}\n"));
        }
        out
    }

    pub fn duration_s(&self) -> f64 {
        self.rows.len() as f64 / TICK_RATE_HZ
    }
}

/// Drops datagrams with independent probability `rate` per frame.
#[derive(Debug, Clone)]
pub struct DropInjector {
    rate: f64,
    rng: ChaCha8Rng,
}

impl DropInjector {
    pub fn new(rate: f64, seed: u64) -> DropInjector {
        DropInjector {
            rate: rate.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn drops_next(&mut self) -> bool {
        self.rate > 0.0 && self.rng.gen::<f64>() < self.rate
    }
}

/// Outcome of a headless run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub logs: Vec<TrialLog>,
    pub ticks: u64,
    pub datagrams_sent: u64,
    pub datagrams_dropped: u64,
    pub completed: bool,
}

/// Feeds one recorded command row into the pipeline through the
/// condition-matched path. The scooter path round-trips through the device
/// emulator and the wire codec exactly as live telemetry would.
pub struct TraceFeed {
    emulator: Option<DeviceEmulator>,
    mapper: Option<ScooterFrameMapper>,
    drop: Option<DropInjector>,
    max_slide_speed: f64,
    sent: u64,
    dropped: u64,
}

impl TraceFeed {
    pub fn new(
        condition: Condition,
        params: &ParamSet,
        drop: Option<DropInjector>,
    ) -> Result<TraceFeed, RuntimeError> {
        let (emulator, mapper) = match condition {
            Condition::Scooter => {
                let calibration = DeviceCalibration::default();
                (
                    Some(DeviceEmulator::new(calibration.clone())?),
                    Some(ScooterFrameMapper::new(calibration, params.max_slide_speed)),
                )
            }
            Condition::Joystick => (None, None),
        };
        Ok(TraceFeed {
            emulator,
            mapper,
            drop,
            max_slide_speed: params.max_slide_speed,
            sent: 0,
            dropped: 0,
        })
    }

    pub fn feed(
        &mut self,
        row: [f64; 2],
        tick: u64,
        pipeline: &mut Pipeline,
    ) -> Result<(), RuntimeError> {
        let [yaw, slide] = row;
        match (&mut self.emulator, &self.mapper) {
            (Some(emulator), Some(mapper)) => {
                let handlebar_deg = yaw * HANDLEBAR_FULL_SCALE_DEG;
                let belt_speed = slide * self.max_slide_speed;
                let frame = emulator.emit_speed(handlebar_deg, belt_speed);
                let bytes = frame.encode()?;
                self.sent += 1;
                if self.drop.as_mut().is_some_and(|d| d.drops_next()) {
                    self.dropped += 1;
                    return Ok(());
                }
                let decoded = EncoderFrame::decode(&bytes)?;
                pipeline.offer_input(mapper.input_from_frame(&decoded), tick);
            }
            _ => {
                let time_s = tick as f64 / TICK_RATE_HZ;
                let (input, _) = joystick_to_input(slide, yaw, time_s);
                self.sent += 1;
                pipeline.offer_input(input, tick);
            }
        }
        Ok(())
    }
}

/// Replays a command trace against a fresh session until the session
/// completes or the trace (plus a grace period) runs out.
pub fn replay_trace(
    trace: &CommandTrace,
    mut session: Session,
    params: &ParamSet,
    drop: Option<DropInjector>,
) -> Result<RunReport, RuntimeError> {
    let source = match trace.condition {
        Condition::Scooter => InputSource::Scooter,
        Condition::Joystick => InputSource::Joystick,
    };
    let mut pipeline = Pipeline::new(*params, source, session.map().start.heading_deg);
    let mut feed = TraceFeed::new(trace.condition, params, drop)?;

    // Allow a lossy replay to finish trials the recording completed right at
    // its end: keep ticking on stale (zero) input for up to 30 s extra.
    let grace_ticks = 30 * TICK_RATE_HZ as u64;
    let max_ticks = trace.rows.len() as u64 + grace_ticks;

    let mut tick = 0u64;
    while !session.is_complete() && tick < max_ticks {
        if let Some(row) = trace.rows.get(tick as usize) {
            feed.feed(*row, tick, &mut pipeline)?;
        }
        pipeline.tick(&mut session);
        tick += 1;
    }

    let completed = session.is_complete();
    Ok(RunReport {
        logs: session.into_logs(),
        ticks: tick,
        datagrams_sent: feed.sent,
        datagrams_dropped: feed.dropped,
        completed,
    })
}

/// Drives a session to completion with the scripted pilot, recording the
/// command rows so the run can be replayed. The pilot's commands are
/// consumed through the same condition path a replay uses, so a lossless
/// replay reproduces the recorded trajectory bit for bit.
pub fn record_pilot_session(
    mut session: Session,
    params: &ParamSet,
    pilot_params: PilotParams,
) -> Result<(CommandTrace, RunReport), RuntimeError> {
    let condition = session.condition;
    let source = match condition {
        Condition::Scooter => InputSource::Scooter,
        Condition::Joystick => InputSource::Joystick,
    };
    let mut pipeline = Pipeline::new(*params, source, session.map().start.heading_deg);
    let mut feed = TraceFeed::new(condition, params, None)?;

    // 20 minutes of simulated time bounds a six-trial session comfortably.
    let max_ticks = 20 * 60 * TICK_RATE_HZ as u64;
    let mut rows: Vec<[f64; 2]> = Vec::new();
    let mut pilot: Option<(String, ScriptedPilot)> = None;
    let mut guard_remaining = 0u64;

    let mut tick = 0u64;
    while !session.is_complete() {
        if tick >= max_ticks {
            return Err(RuntimeError::Timeout(max_ticks));
        }
        let command = if guard_remaining > 0 {
            guard_remaining -= 1;
            [0.0, 0.0]
        } else if let Some(goal) = session.current_goal() {
            let goal_id = goal.id.clone();
            let needs_new = pilot.as_ref().map(|(id, _)| id != &goal_id).unwrap_or(true);
            if needs_new {
                let p = ScriptedPilot::for_goal(session.map(), &goal_id, pilot_params)
                    .expect("validated maps have guidance for every goal");
                pilot = Some((goal_id, p));
            }
            let (yaw, slide) = pilot.as_ref().unwrap().1.control(session.avatar());
            [yaw, slide]
        } else {
            // Prompt tick for the first trial: no goal is active yet.
            [0.0, 0.0]
        };

        rows.push(command);
        feed.feed(command, tick, &mut pipeline)?;
        let events = pipeline.tick(&mut session);
        if events
            .iter()
            .any(|e| matches!(e, SessionEvent::TrialComplete { .. }))
        {
            guard_remaining = TRACE_GUARD_TICKS;
        }
        tick += 1;
    }

    let trace = CommandTrace { condition, rows };
    let completed = session.is_complete();
    let report = RunReport {
        logs: session.into_logs(),
        ticks: tick,
        datagrams_sent: feed.sent,
        datagrams_dropped: feed.dropped,
        completed,
    };
    Ok((trace, report))
}
