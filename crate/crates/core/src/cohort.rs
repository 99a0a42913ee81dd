//! Synthetic study cohort: scripted-pilot sessions for a panel of
//! participants under both input conditions.
//!
//! Each participant completes one full session per condition on the bundled
//! map, with condition order counterbalanced across the panel and per-pilot
//! tuning jittered per participant so paired comparisons see realistic
//! variance. Everything derives from one master seed, so a cohort is fully
//! reproducible.

use crate::map::default_map;
use crate::mapping::ParamSet;
use crate::pilot::PilotParams;
use crate::runtime::{record_pilot_session, RuntimeError};
use crate::session::{make_session, Condition, TrialLog};

/// Default panel size, matching the study design.
pub const DEFAULT_PARTICIPANTS: usize = 14;

/// One participant's worth of cohort output.
#[derive(Debug, Clone)]
pub struct ParticipantRun {
    pub participant: String,
    /// Conditions in the order the participant ran them.
    pub condition_order: [Condition; 2],
    pub logs: Vec<TrialLog>,
}

/// splitmix64 step, used to derive independent sub-seeds from the master
/// seed without any correlation between participants or conditions.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for one (participant, condition) cell of the design.
fn cell_seed(master: u64, participant_index: usize, condition: Condition) -> u64 {
    let tag = match condition {
        Condition::Scooter => 1,
        Condition::Joystick => 2,
    };
    splitmix64(splitmix64(master ^ (participant_index as u64 + 1)) ^ tag)
}

/// Unit-interval value derived from a seed, for parameter jitter.
fn unit(seed: u64) -> f64 {
    (splitmix64(seed) >> 11) as f64 / (1u64 << 53) as f64
}

/// Pilot tuning for one (participant, condition) cell: lookahead in
/// [4.5, 6.5] m and slide scale in [0.90, 1.0], so different participants
/// ride measurably differently and the paired per-participant differences
/// are nonzero.
pub fn jittered_pilot(master: u64, participant_index: usize, condition: Condition) -> PilotParams {
    let seed = cell_seed(master, participant_index, condition);
    PilotParams {
        lookahead_m: 4.5 + 2.0 * unit(seed ^ 0xA5A5),
        slide_scale: 0.90 + 0.10 * unit(seed ^ 0x5A5A),
        ..PilotParams::default()
    }
}

/// Runs the full cohort: `n` participants, two sessions each on the bundled
/// map, goal order reshuffled per session, condition order alternating by
/// participant (odd indices start with the scooter, even with the joystick,
/// giving an exact split for even `n`).
pub fn simulate_cohort(n: usize, master_seed: u64) -> Result<Vec<ParticipantRun>, RuntimeError> {
    let params = ParamSet::default();
    let mut runs = Vec::with_capacity(n);
    for i in 0..n {
        let participant = format!("p{:02}", i + 1);
        let condition_order = if i % 2 == 0 {
            [Condition::Scooter, Condition::Joystick]
        } else {
            [Condition::Joystick, Condition::Scooter]
        };
        let mut logs = Vec::new();
        for condition in condition_order {
            let seed = cell_seed(master_seed, i, condition);
            let session = make_session(&participant, condition, default_map(), seed);
            let pilot = jittered_pilot(master_seed, i, condition);
            let (_, report) = record_pilot_session(session, &params, pilot)?;
            if !report.completed {
                return Err(RuntimeError::Timeout(report.ticks));
            }
            logs.extend(report.logs);
        }
        runs.push(ParticipantRun {
            participant,
            condition_order,
            logs,
        });
    }
    Ok(runs)
}
