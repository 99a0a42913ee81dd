//! Trial sequencing for a navigation session.
//!
//! A session runs a shuffled sequence of goal trials on one map under one
//! input condition. Each trial walks Prompt -> Navigating -> Dwelling ->
//! Complete; completing the last trial ends the session. The engine is
//! driven at the fixed simulation rate and counts dwell time in whole ticks
//! so completion thresholds never drift with float accumulation.

use crate::map::{CityMap, GOAL_DWELL_S};
use crate::sim::{teleport, AvatarState, TICK_DT, TICK_RATE_HZ};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Input condition under which a session is run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Scooter,
    Joystick,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Scooter => "scooter",
            Condition::Joystick => "joystick",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scooter" => Ok(Condition::Scooter),
            "joystick" => Ok(Condition::Joystick),
            other => Err(format!(
                "unknown condition {other:?} (expected scooter or joystick)"
            )),
        }
    }
}

/// Avatar speed below which it counts as stationary for dwell purposes,
/// in m/s. Angular motion does not reset the dwell.
pub const STATIONARY_EPS: f64 = 0.05;

/// Phase of the current trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPhase {
    /// Goal prompt is being shown; navigation starts on the next tick.
    Prompt,
    /// Avatar is en route to the goal zone.
    Navigating,
    /// Avatar is inside the zone and (near-)stationary; dwell is accruing.
    Dwelling,
}

/// Events emitted by [`Session::tick`] for the host to broadcast and log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    TrialStarted {
        trial_index: usize,
        goal_id: String,
        goal_name: String,
    },
    DwellStarted {
        trial_index: usize,
        goal_id: String,
    },
    DwellReset {
        trial_index: usize,
        goal_id: String,
    },
    TrialComplete {
        trial_index: usize,
        goal_id: String,
        completion_s: f64,
    },
    SessionComplete {
        trials_completed: usize,
    },
    /// Emitted when the engine is ticked after the session already ended.
    TickedAfterCompletion,
}

/// Record of one finished (or aborted) trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub participant: String,
    pub condition: Condition,
    pub trial_index: usize,
    pub goal_id: String,
    /// Wall-clock trial duration in seconds, including the final dwell.
    pub completion_s: f64,
    pub aborted: bool,
    /// Avatar poses sampled at 10 Hz from trial start, as
    /// `[time_s, x, y, heading_deg]` rows. Times are absolute session time.
    pub trace: Vec<[f64; 4]>,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("goal id {0:?} is not on the map")]
    UnknownGoal(String),
    #[error("trial log I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("trial log line is invalid: {0}")]
    BadLog(String),
}

/// Ticks of consecutive qualifying dwell needed to complete a trial.
fn dwell_ticks_required() -> u32 {
    (GOAL_DWELL_S / TICK_DT).round() as u32
}

/// Pose trace sample stride in ticks (10 Hz at the 100 Hz simulation rate).
const TRACE_STRIDE_TICKS: u32 = 10;

/// One in-progress trial.
#[derive(Debug, Clone)]
struct ActiveTrial {
    goal_index: usize,
    phase: TrialPhase,
    start_tick: u64,
    dwell_ticks: u32,
    trace: Vec<[f64; 4]>,
}

/// Navigation session: a goal order, the avatar, and trial bookkeeping.
#[derive(Debug, Clone)]
pub struct Session {
    pub participant: String,
    pub condition: Condition,
    map: CityMap,
    /// Indices into `map.goals`, in presentation order.
    order: Vec<usize>,
    avatar: AvatarState,
    tick: u64,
    current: usize,
    active: Option<ActiveTrial>,
    logs: Vec<TrialLog>,
    complete: bool,
}

/// Builds a session whose goal order is a seeded shuffle of every goal on
/// the map. The same seed always yields the same order.
pub fn make_session(participant: &str, condition: Condition, map: CityMap, seed: u64) -> Session {
    let mut order: Vec<usize> = (0..map.goals.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates, spelled out so the order survives rand upgrades.
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    Session::with_order(participant, condition, map, order)
}

impl Session {
    /// Session over an explicit goal order (map indices).
    fn with_order(
        participant: &str,
        condition: Condition,
        map: CityMap,
        order: Vec<usize>,
    ) -> Session {
        let avatar = AvatarState {
            x: map.start.x,
            y: map.start.y,
            heading_deg: map.start.heading_deg,
            linear_vel: 0.0,
            angular_vel: 0.0,
        };
        Session {
            participant: participant.to_string(),
            condition,
            map,
            order,
            avatar,
            tick: 0,
            current: 0,
            active: None,
            logs: Vec::new(),
            complete: false,
        }
    }

    /// Single-goal session, for focused runs and the pilot.
    pub fn single_trial(
        participant: &str,
        condition: Condition,
        map: CityMap,
        goal_id: &str,
    ) -> Result<Session, SessionError> {
        let idx = map
            .goals
            .iter()
            .position(|g| g.id == goal_id)
            .ok_or_else(|| SessionError::UnknownGoal(goal_id.to_string()))?;
        Ok(Session::with_order(participant, condition, map, vec![idx]))
    }

    pub fn map(&self) -> &CityMap {
        &self.map
    }

    pub fn avatar(&self) -> &AvatarState {
        &self.avatar
    }

    pub fn avatar_mut(&mut self) -> &mut AvatarState {
        &mut self.avatar
    }

    /// Pushes the avatar out of any wall it overlaps and damps velocity
    /// into the wall. Returns whether a contact was resolved.
    pub fn resolve_walls(&mut self, radius: f64) -> bool {
        crate::sim::resolve_collision(&mut self.avatar, &self.map.walls, radius)
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Ticks elapsed since the session started.
    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn time_s(&self) -> f64 {
        self.tick as f64 / TICK_RATE_HZ
    }

    /// Goal currently being navigated to, if a trial is active.
    pub fn current_goal(&self) -> Option<&crate::map::GoalZone> {
        self.active
            .as_ref()
            .map(|t| &self.map.goals[self.order[t.goal_index]])
    }

    pub fn current_phase(&self) -> Option<TrialPhase> {
        self.active.as_ref().map(|t| t.phase)
    }

    /// Zero-based index of the current trial.
    pub fn trial_index(&self) -> usize {
        self.current
    }

    pub fn trials_total(&self) -> usize {
        self.order.len()
    }

    pub fn logs(&self) -> &[TrialLog] {
        &self.logs
    }

    pub fn into_logs(self) -> Vec<TrialLog> {
        self.logs
    }

    /// Advances trial state by one simulation tick. Call after the avatar
    /// pose for this tick is final (post-integration, post-collision).
    pub fn tick(&mut self) -> Vec<SessionEvent> {
        let mut events = Vec::new();
        if self.complete {
            self.tick += 1;
            events.push(SessionEvent::TickedAfterCompletion);
            return events;
        }

        if self.active.is_none() {
            // Prompt tick: present the goal, start navigating next tick.
            let goal = &self.map.goals[self.order[self.current]];
            events.push(SessionEvent::TrialStarted {
                trial_index: self.current,
                goal_id: goal.id.clone(),
                goal_name: goal.name.clone(),
            });
            self.active = Some(ActiveTrial {
                goal_index: self.current,
                phase: TrialPhase::Prompt,
                start_tick: self.tick,
                dwell_ticks: 0,
                trace: vec![[
                    self.time_s(),
                    self.avatar.x,
                    self.avatar.y,
                    self.avatar.heading_deg,
                ]],
            });
            self.tick += 1;
            return events;
        }

        let trial = self.active.as_mut().expect("active trial");
        if trial.phase == TrialPhase::Prompt {
            trial.phase = TrialPhase::Navigating;
        }

        let goal = &self.map.goals[self.order[trial.goal_index]];
        let dx = self.avatar.x - goal.center[0];
        let dy = self.avatar.y - goal.center[1];
        let inside = dx * dx + dy * dy <= goal.radius * goal.radius;
        let stationary = self.avatar.linear_vel.abs() <= STATIONARY_EPS;

        if inside && stationary {
            if trial.phase == TrialPhase::Navigating {
                trial.phase = TrialPhase::Dwelling;
                events.push(SessionEvent::DwellStarted {
                    trial_index: self.current,
                    goal_id: goal.id.clone(),
                });
            }
            trial.dwell_ticks += 1;
        } else if trial.phase == TrialPhase::Dwelling {
            trial.phase = TrialPhase::Navigating;
            trial.dwell_ticks = 0;
            events.push(SessionEvent::DwellReset {
                trial_index: self.current,
                goal_id: goal.id.clone(),
            });
        }

        self.tick += 1;

        // Record the 10 Hz pose trace relative to trial start.
        let ticks_in_trial = (self.tick - trial.start_tick) as u32;
        if ticks_in_trial % TRACE_STRIDE_TICKS == 0 {
            trial.trace.push([
                self.tick as f64 / TICK_RATE_HZ,
                self.avatar.x,
                self.avatar.y,
                self.avatar.heading_deg,
            ]);
        }

        if trial.dwell_ticks >= dwell_ticks_required() {
            let completion_s = (self.tick - trial.start_tick) as f64 / TICK_RATE_HZ;
            let goal_id = goal.id.clone();
            let trace = std::mem::take(&mut trial.trace);
            events.push(SessionEvent::TrialComplete {
                trial_index: self.current,
                goal_id: goal_id.clone(),
                completion_s,
            });
            self.logs.push(TrialLog {
                participant: self.participant.clone(),
                condition: self.condition,
                trial_index: self.current,
                goal_id,
                completion_s,
                aborted: false,
                trace,
            });
            self.active = None;
            self.current += 1;
            teleport(
                &mut self.avatar,
                self.map.start.x,
                self.map.start.y,
                self.map.start.heading_deg,
            );
            if self.current >= self.order.len() {
                self.complete = true;
                events.push(SessionEvent::SessionComplete {
                    trials_completed: self.logs.len(),
                });
            }
        }

        events
    }

    /// Abandons the current trial, logging it as aborted. The avatar returns
    /// to the start; the next tick prompts the following trial (or ends the
    /// session if this was the last one).
    pub fn abort_trial(&mut self) -> Option<SessionEvent> {
        let trial = self.active.take()?;
        let goal = &self.map.goals[self.order[trial.goal_index]];
        let completion_s = (self.tick - trial.start_tick) as f64 / TICK_RATE_HZ;
        self.logs.push(TrialLog {
            participant: self.participant.clone(),
            condition: self.condition,
            trial_index: self.current,
            goal_id: goal.id.clone(),
            completion_s,
            aborted: true,
            trace: trial.trace,
        });
        self.current += 1;
        teleport(
            &mut self.avatar,
            self.map.start.x,
            self.map.start.y,
            self.map.start.heading_deg,
        );
        if self.current >= self.order.len() {
            self.complete = true;
            return Some(SessionEvent::SessionComplete {
                trials_completed: self.logs.len(),
            });
        }
        None
    }
}

/// Writes trial logs as JSON lines, one object per trial.
pub fn write_trial_logs<W: Write>(mut out: W, logs: &[TrialLog]) -> Result<(), SessionError> {
    for log in logs {
        let line = serde_json::to_string(log).expect("trial log serialization cannot fail");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parses JSON-lines trial logs produced by [`write_trial_logs`].
pub fn read_trial_logs(text: &str) -> Result<Vec<TrialLog>, SessionError> {
    let mut logs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let log: TrialLog = serde_json::from_str(line)
            .map_err(|e| SessionError::BadLog(format!("line {}: {e}", i + 1)))?;
        logs.push(log);
    }
    Ok(logs)
}

/// Writes the per-trial summary CSV (`participant,condition,goal,completion_s`).
pub fn write_summary_csv<W: Write>(out: W, logs: &[TrialLog]) -> Result<(), SessionError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant", "condition", "goal", "completion_s"])
        .map_err(|e| SessionError::BadLog(e.to_string()))?;
    for log in logs {
        w.write_record([
            log.participant.as_str(),
            log.condition.as_str(),
            log.goal_id.as_str(),
            &log.completion_s.to_string(),
        ])
        .map_err(|e| SessionError::BadLog(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
