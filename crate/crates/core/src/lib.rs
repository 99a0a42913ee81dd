//! Simulation core for a handlebar-and-treadle locomotion rig: the device
//! wire protocol and emulator, input-to-velocity mapping, avatar kinematics,
//! the navigation-trial session engine, and the statistics pipeline that
//! compares the scooter condition against a joystick baseline.
//!
//! Everything here is deterministic and clock-free. The fixed 100 Hz tick
//! is advanced by the caller ([`runtime::Pipeline::tick`]), so tests and
//! headless runs can step simulated time as fast as they like while a live
//! host paces the same loop against a wall clock.

pub mod cohort;
pub mod device;
pub mod map;
pub mod mapping;
pub mod pilot;
pub mod runtime;
pub mod session;
pub mod sim;
pub mod stats;
pub mod summary;
pub mod survey;
pub mod wire;

pub use cohort::ParticipantRun;
pub use device::{DeviceCalibration, DeviceEmulator};
pub use map::{CityMap, GoalZone, StartPose};
pub use mapping::{MotionParams, NormalizedInput, ParamSet, YawMode};
pub use pilot::{PilotParams, ScriptedPilot};
pub use runtime::{CommandTrace, Pipeline, RunReport, StateSnapshot};
pub use session::{Condition, Session, SessionEvent, TrialLog, TrialPhase};
pub use sim::{AvatarState, Wall, TICK_DT, TICK_RATE_HZ};
pub use stats::{TestKind, TestReport};
pub use summary::{AnalysisReport, PairedSample, ResponseRecord};
pub use survey::{QuestionnaireKind, QuestionnaireScores};
pub use wire::{EncoderFrame, WireError, DEFAULT_TELEMETRY_PORT};
