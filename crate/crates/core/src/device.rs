//! Software stand-in for the scooter rig: a scripted handlebar/treadmill
//! device that produces the same telemetry frames the hardware would.
//!
//! An [`InputTrace`] scripts handlebar angle and belt speed over time. The
//! emulator samples it at the device rate, quantizes the handlebar onto the
//! 14-bit encoder grid, converts belt motion to integer counts with a
//! fractional carry (so no motion is ever lost to rounding), and emits
//! [`EncoderFrame`]s. Transport concerns (loss, latency, reordering) are not
//! modeled here; tests inject those at the byte level.

use crate::wire::{EncoderFrame, FLAG_ABSOLUTE_ENCODER_VALID, HANDLEBAR_RAW_MAX};
use thiserror::Error;

/// Encoder counts per full handlebar turn (14-bit absolute encoder).
pub const COUNTS_PER_TURN: u32 = 1 << 14;

/// Physical constants of one rig unit, as shipped in its calibration record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceCalibration {
    /// Raw encoder count that reads as handlebar angle zero.
    pub center_raw: u16,
    /// Treadmill encoder counts per meter of belt travel.
    pub counts_per_meter: f64,
    /// Telemetry sample rate in Hz; one frame is emitted per sample.
    pub sample_rate_hz: f64,
}

impl Default for DeviceCalibration {
    fn default() -> Self {
        DeviceCalibration {
            center_raw: 8192,
            counts_per_meter: 2000.0,
            sample_rate_hz: 100.0,
        }
    }
}

impl DeviceCalibration {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.center_raw > HANDLEBAR_RAW_MAX {
            return Err(DeviceError::BadCalibration(format!(
                "center_raw {} exceeds {HANDLEBAR_RAW_MAX}",
                self.center_raw
            )));
        }
        if !(self.counts_per_meter.is_finite() && self.counts_per_meter > 0.0) {
            return Err(DeviceError::BadCalibration(format!(
                "counts_per_meter must be positive, got {}",
                self.counts_per_meter
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(DeviceError::BadCalibration(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }

    /// Seconds between telemetry samples.
    pub fn sample_dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid calibration: {0}")]
    BadCalibration(String),
}

/// Snap a handlebar angle in degrees onto the absolute encoder grid.
///
/// `raw = (center_raw + round(angle_deg * 16384 / 360)) mod 16384`. Angles
/// beyond a full turn wrap, matching what a physical absolute encoder reads.
pub fn quantize_handlebar(angle_deg: f64, center_raw: u16) -> u16 {
    let offset = (angle_deg * COUNTS_PER_TURN as f64 / 360.0).round() as i64;
    (center_raw as i64 + offset).rem_euclid(COUNTS_PER_TURN as i64) as u16
}

/// Inverse of [`quantize_handlebar`] up to quantization: the angle in degrees
/// that a raw reading represents, as the shortest signed offset from center.
/// The grid pitch 360/16384 is exactly representable in binary, so
/// quantize-then-read round-trips grid-aligned angles bit-exactly.
pub fn handlebar_angle_deg(raw: u16, center_raw: u16) -> f64 {
    let diff = (raw as i64 - center_raw as i64).rem_euclid(COUNTS_PER_TURN as i64);
    let signed = if diff > (COUNTS_PER_TURN / 2) as i64 {
        diff - COUNTS_PER_TURN as i64
    } else {
        diff
    };
    signed as f64 * (360.0 / COUNTS_PER_TURN as f64)
}

/// Converts belt travel to integer encoder counts without losing motion to
/// truncation: the fractional remainder carries into the next sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct CountAccumulator {
    carry: f64,
}

impl CountAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed `meters` of belt travel; returns the whole counts to emit now.
    /// Saturates at the i16 frame field range, which at plausible
    /// calibrations would take >160 m/s of belt speed to reach.
    pub fn advance(&mut self, meters: f64, counts_per_meter: f64) -> i16 {
        self.carry += meters * counts_per_meter;
        let whole = self.carry.trunc();
        self.carry -= whole;
        whole.clamp(i16::MIN as f64, i16::MAX as f64) as i16
    }

    /// Convenience for one sample of constant belt speed.
    pub fn advance_speed(&mut self, belt_speed_mps: f64, dt: f64, counts_per_meter: f64) -> i16 {
        self.advance(belt_speed_mps * dt, counts_per_meter)
    }
}

/// How scripted values behave between keyframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    /// Hold the previous keyframe's values until the next keyframe time.
    Step,
    /// Interpolate linearly between keyframes.
    Linear,
}

/// One scripted sample: `time_s handlebar_deg belt_speed_mps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceKey {
    pub time_s: f64,
    pub handlebar_deg: f64,
    pub belt_speed_mps: f64,
}

/// Scripted device motion: keyframes at strictly increasing times plus an
/// interpolation mode. Before the first keyframe and after the last, values
/// hold at the nearest keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTrace {
    pub mode: TraceMode,
    pub keys: Vec<TraceKey>,
}

impl InputTrace {
    pub fn new(mode: TraceMode, keys: Vec<TraceKey>) -> Result<Self, DeviceError> {
        let trace = InputTrace { mode, keys };
        trace.validate()?;
        Ok(trace)
    }

    fn validate(&self) -> Result<(), DeviceError> {
        if self.keys.is_empty() {
            return Err(DeviceError::InvalidTrace("trace has no keyframes".into()));
        }
        for (i, k) in self.keys.iter().enumerate() {
            if !(k.time_s.is_finite()
                && k.handlebar_deg.is_finite()
                && k.belt_speed_mps.is_finite())
            {
                return Err(DeviceError::InvalidTrace(format!(
                    "keyframe {i} has a non-finite value"
                )));
            }
            if i > 0 && k.time_s <= self.keys[i - 1].time_s {
                return Err(DeviceError::InvalidTrace(format!(
                    "keyframe times must be strictly increasing (key {i} at {} follows {})",
                    k.time_s,
                    self.keys[i - 1].time_s
                )));
            }
        }
        Ok(())
    }

    /// Parse the text format: a `mode: step|linear` header line, then one
    /// `time_s handlebar_deg belt_speed_mps` triple per line. `#` starts a
    /// comment anywhere on a line; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, DeviceError> {
        let mut mode: Option<TraceMode> = None;
        let mut keys = Vec::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if mode.is_none() {
                let rest = line.strip_prefix("mode:").ok_or_else(|| {
                    DeviceError::InvalidTrace(format!(
                        "line {}: expected `mode: step|linear` header, got {line:?}",
                        lineno + 1
                    ))
                })?;
                mode = Some(match rest.trim() {
                    "step" => TraceMode::Step,
                    "linear" => TraceMode::Linear,
                    other => {
                        return Err(DeviceError::InvalidTrace(format!(
                            "line {}: unknown mode {other:?}",
                            lineno + 1
                        )))
                    }
                });
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(DeviceError::InvalidTrace(format!(
                    "line {}: expected 3 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|_| {
                    DeviceError::InvalidTrace(format!(
                        "line {}: bad {what} value {s:?}",
                        lineno + 1
                    ))
                })
            };
            keys.push(TraceKey {
                time_s: parse(fields[0], "time")?,
                handlebar_deg: parse(fields[1], "handlebar angle")?,
                belt_speed_mps: parse(fields[2], "belt speed")?,
            });
        }
        let mode =
            mode.ok_or_else(|| DeviceError::InvalidTrace("missing `mode:` header".into()))?;
        InputTrace::new(mode, keys)
    }

    /// Render back to the text format. `f64` Display prints the shortest
    /// string that round-trips, so parse(serialize(t)) == t bit-for-bit.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(match self.mode {
            TraceMode::Step => "mode: step\n",
            TraceMode::Linear => "mode: linear\n",
        });
        for k in &self.keys {
            out.push_str(&format!(
                "{} {} {}\n",
                k.time_s, k.handlebar_deg, k.belt_speed_mps
            ));
        }
        out
    }

    /// Time of the last keyframe; the emulator stops sampling there.
    pub fn duration_s(&self) -> f64 {
        self.keys.last().map(|k| k.time_s).unwrap_or(0.0)
    }

    /// Instantaneous (handlebar_deg, belt_speed_mps) at time `t`.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        let keys = &self.keys;
        if t <= keys[0].time_s {
            return (keys[0].handlebar_deg, keys[0].belt_speed_mps);
        }
        if t >= keys[keys.len() - 1].time_s {
            let k = &keys[keys.len() - 1];
            return (k.handlebar_deg, k.belt_speed_mps);
        }
        // Index of the last key with time <= t.
        let idx = match keys.binary_search_by(|k| k.time_s.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let a = &keys[idx];
        match self.mode {
            TraceMode::Step => (a.handlebar_deg, a.belt_speed_mps),
            TraceMode::Linear => {
                let b = &keys[idx + 1];
                let frac = (t - a.time_s) / (b.time_s - a.time_s);
                (
                    a.handlebar_deg + frac * (b.handlebar_deg - a.handlebar_deg),
                    a.belt_speed_mps + frac * (b.belt_speed_mps - a.belt_speed_mps),
                )
            }
        }
    }

    /// Exact integral of belt speed over `[t0, t1)` in meters, resolving
    /// keyframe boundaries analytically so step edges and linear kinks inside
    /// the window do not lose motion. This keeps total emitted counts within
    /// one count of `counts_per_meter * integral(speed)` for any trace.
    pub fn integrate_belt(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let keys = &self.keys;
        let mut total = 0.0;
        // Constant extensions before the first and after the last keyframe.
        let first_t = keys[0].time_s;
        let last_t = keys[keys.len() - 1].time_s;
        if t0 < first_t {
            total += keys[0].belt_speed_mps * (t1.min(first_t) - t0);
        }
        if t1 > last_t {
            total += keys[keys.len() - 1].belt_speed_mps * (t1 - t0.max(last_t));
        }
        for w in keys.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let lo = t0.max(a.time_s);
            let hi = t1.min(b.time_s);
            if hi <= lo {
                continue;
            }
            match self.mode {
                TraceMode::Step => total += a.belt_speed_mps * (hi - lo),
                TraceMode::Linear => {
                    let span = b.time_s - a.time_s;
                    let v_at = |t: f64| {
                        a.belt_speed_mps
                            + (t - a.time_s) / span * (b.belt_speed_mps - a.belt_speed_mps)
                    };
                    total += 0.5 * (v_at(lo) + v_at(hi)) * (hi - lo);
                }
            }
        }
        total
    }
}

/// Streaming frame source: feed per-sample commands, get wire frames. Used
/// both for scripted traces ([`run_trace`]) and closed-loop drivers that
/// decide each sample's command on the fly.
#[derive(Debug, Clone)]
pub struct DeviceEmulator {
    calibration: DeviceCalibration,
    accumulator: CountAccumulator,
    next_seq: u32,
    sample_index: u64,
}

impl DeviceEmulator {
    pub fn new(calibration: DeviceCalibration) -> Result<Self, DeviceError> {
        calibration.validate()?;
        Ok(DeviceEmulator {
            calibration,
            accumulator: CountAccumulator::new(),
            next_seq: 0,
            sample_index: 0,
        })
    }

    pub fn calibration(&self) -> &DeviceCalibration {
        &self.calibration
    }

    /// Emit the frame for the current sample given this sample's handlebar
    /// angle and the belt travel in meters over the sample window.
    pub fn emit(&mut self, handlebar_deg: f64, belt_meters: f64) -> EncoderFrame {
        let dt = self.calibration.sample_dt();
        let frame = EncoderFrame {
            seq: self.next_seq,
            device_time_ms: (self.sample_index as f64 * dt * 1000.0).round() as u32,
            handlebar_raw: quantize_handlebar(handlebar_deg, self.calibration.center_raw),
            treadmill_delta: self
                .accumulator
                .advance(belt_meters, self.calibration.counts_per_meter),
            flags: FLAG_ABSOLUTE_ENCODER_VALID,
        };
        self.next_seq = self.next_seq.wrapping_add(1);
        self.sample_index += 1;
        frame
    }

    /// Emit the frame for one sample of constant belt speed.
    pub fn emit_speed(&mut self, handlebar_deg: f64, belt_speed_mps: f64) -> EncoderFrame {
        self.emit(handlebar_deg, belt_speed_mps * self.calibration.sample_dt())
    }
}

/// Run a trace through the emulator: one frame per device sample, handlebar
/// sampled at the window start, belt integrated exactly over the window.
/// A trace of duration T yields `round(T * sample_rate)` frames.
pub fn run_trace(
    trace: &InputTrace,
    calibration: &DeviceCalibration,
) -> Result<Vec<EncoderFrame>, DeviceError> {
    trace.validate()?;
    let mut emulator = DeviceEmulator::new(*calibration)?;
    let dt = calibration.sample_dt();
    let n = (trace.duration_s() * calibration.sample_rate_hz).round() as u64;
    let mut frames = Vec::with_capacity(n as usize);
    for k in 0..n {
        let t0 = k as f64 * dt;
        let t1 = (k + 1) as f64 * dt;
        let (deg, _) = trace.sample(t0);
        frames.push(emulator.emit(deg, trace.integrate_belt(t0, t1)));
    }
    Ok(frames)
}
