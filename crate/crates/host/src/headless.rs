//! Headless entry points: trace replay, pilot trace recording, and synthetic
//! cohort simulation. These run the same pipeline as `serve`, stepping
//! simulated time as fast as it will go.

use crate::config::{load_map, load_params, read_file, HostError};
use loco_core::cohort::simulate_cohort;
use loco_core::pilot::PilotParams;
use loco_core::runtime::{
    record_pilot_session, replay_trace, CommandTrace, DropInjector, RunReport, RuntimeError,
};
use loco_core::session::{
    make_session, write_summary_csv, write_trial_logs, Condition, Session, SessionError, TrialLog,
};
use std::path::Path;

fn runtime_error(e: RuntimeError) -> HostError {
    match e {
        RuntimeError::BadTrace(_) => HostError::Data(e.to_string()),
        _ => HostError::Internal(e.to_string()),
    }
}

fn session_error(e: SessionError) -> HostError {
    match e {
        SessionError::UnknownGoal(_) => HostError::Data(e.to_string()),
        _ => HostError::Internal(e.to_string()),
    }
}

/// Builds the session a trace-producing or trace-consuming run plays
/// against: the full seeded trial order, or one trial when `goal` is given.
fn build_session(
    participant: &str,
    condition: Condition,
    map: loco_core::map::CityMap,
    seed: u64,
    goal: Option<&str>,
) -> Result<Session, HostError> {
    match goal {
        Some(goal_id) => {
            Session::single_trial(participant, condition, map, goal_id).map_err(session_error)
        }
        None => Ok(make_session(participant, condition, map, seed)),
    }
}

/// Writes `trial_logs.jsonl` and `summary.csv` into `out_dir`, creating the
/// directory if needed.
pub fn write_outputs(out_dir: &Path, logs: &[TrialLog]) -> Result<(), HostError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HostError::from_io(&out_dir.display().to_string(), &e))?;
    let logs_path = out_dir.join("trial_logs.jsonl");
    let mut buffer = Vec::new();
    write_trial_logs(&mut buffer, logs).map_err(|e| HostError::Internal(e.to_string()))?;
    std::fs::write(&logs_path, buffer)
        .map_err(|e| HostError::from_io(&logs_path.display().to_string(), &e))?;
    let csv_path = out_dir.join("summary.csv");
    let mut buffer = Vec::new();
    write_summary_csv(&mut buffer, logs).map_err(|e| HostError::Internal(e.to_string()))?;
    std::fs::write(&csv_path, buffer)
        .map_err(|e| HostError::from_io(&csv_path.display().to_string(), &e))?;
    Ok(())
}

/// Options for a headless trace replay.
pub struct RunOptions<'a> {
    pub trace: &'a Path,
    pub map: Option<&'a Path>,
    pub params: Option<&'a Path>,
    /// Must match the trace header when given; the header alone decides
    /// when absent.
    pub condition: Option<Condition>,
    pub participant: &'a str,
    pub seed: u64,
    /// Replay against a single-trial session for this goal instead of the
    /// full seeded order. Must match the flag the trace was recorded with.
    pub goal: Option<&'a str>,
    /// Uniform datagram drop `(rate, seed)`, scooter condition only.
    pub drop: Option<(f64, u64)>,
    pub out_dir: &'a Path,
}

/// Replays a recorded command trace and writes the trial logs and summary.
pub fn run_trace(options: &RunOptions) -> Result<RunReport, HostError> {
    let text = read_file(options.trace)?;
    let trace = CommandTrace::parse(&text)
        .map_err(|e| HostError::Data(format!("{}: {e}", options.trace.display())))?;
    if let Some(requested) = options.condition {
        if requested != trace.condition {
            return Err(HostError::Data(format!(
                "trace {} was recorded under the {} condition, not {}",
                options.trace.display(),
                trace.condition.as_str(),
                requested.as_str()
            )));
        }
    }
    let map = load_map(options.map)?;
    let params = load_params(options.params)?;
    let session = build_session(
        options.participant,
        trace.condition,
        map,
        options.seed,
        options.goal,
    )?;
    let drop = match options.drop {
        Some((rate, seed)) => {
            if !(0.0..1.0).contains(&rate) {
                return Err(HostError::Data(format!(
                    "drop rate {rate} must be in [0, 1)"
                )));
            }
            Some(DropInjector::new(rate, seed))
        }
        None => None,
    };
    let report = replay_trace(&trace, session, &params, drop).map_err(runtime_error)?;
    write_outputs(options.out_dir, &report.logs)?;
    Ok(report)
}

/// Options for recording a pilot trace.
pub struct PilotOptions<'a> {
    pub map: Option<&'a Path>,
    pub params: Option<&'a Path>,
    pub participant: &'a str,
    pub condition: Condition,
    pub seed: u64,
    /// Record a single trial toward this goal instead of a full session.
    pub goal: Option<&'a str>,
}

/// Drives the scripted pilot through a session and returns the recorded
/// trace plus the run it produced.
pub fn record_pilot(options: &PilotOptions) -> Result<(CommandTrace, RunReport), HostError> {
    let map = load_map(options.map)?;
    let params = load_params(options.params)?;
    let session = build_session(
        options.participant,
        options.condition,
        map,
        options.seed,
        options.goal,
    )?;
    record_pilot_session(session, &params, PilotParams::default()).map_err(runtime_error)
}

/// Simulates a counterbalanced cohort and writes the combined outputs.
/// Returns (participants simulated, trial logs written).
pub fn run_cohort(n: usize, seed: u64, out_dir: &Path) -> Result<(usize, usize), HostError> {
    let runs = simulate_cohort(n, seed).map_err(runtime_error)?;
    let logs: Vec<TrialLog> = runs.into_iter().flat_map(|r| r.logs).collect();
    write_outputs(out_dir, &logs)?;
    Ok((n, logs.len()))
}
