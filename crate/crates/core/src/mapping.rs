//! Normalizes raw device and gamepad input into a shared `[-1, 1]` command
//! space and maps commands to target velocities.
//!
//! Both input devices land in the same [`NormalizedInput`] before any motion
//! math runs, so the downstream pipeline is identical for both: same
//! acceleration curve, same velocity and acceleration limits. Holding the
//! handlebar at +45 degrees and holding the turn stick at half deflection are
//! indistinguishable from the pipeline's point of view.
//!
//! Sign convention: positive yaw input means counter-clockwise rotation
//! (heading increases). The handlebar maps its +-90 degree throw onto
//! [-1, 1]; angles past the throw saturate.

use crate::device::{handlebar_angle_deg, COUNTS_PER_TURN};
use crate::wire::HANDLEBAR_RAW_MAX;
use thiserror::Error;

/// Handlebar throw in degrees that maps to full-scale yaw input.
pub const HANDLEBAR_FULL_SCALE_DEG: f64 = 90.0;

/// Which device produced an input sample. Does not affect any motion math;
/// it exists for logging and UI display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Scooter,
    Joystick,
}

/// How yaw input steers the avatar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YawMode {
    /// Yaw input commands angular velocity directly (default).
    #[default]
    RateControl,
    /// Yaw input commands a heading offset from a reference heading; the
    /// avatar turns toward it at the clamped angular rate. See
    /// [`DirectHeadingTracker`].
    DirectHeading,
}

/// One device-agnostic input sample. Both axes are guaranteed in `[-1, 1]`
/// and never NaN: the constructor clamps, and maps NaN to zero.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NormalizedInput {
    /// Turn command: positive is counter-clockwise.
    pub yaw: f64,
    /// Slide (translation) command: positive is forward.
    pub slide: f64,
    pub source: InputSource,
    /// Sample time in seconds on the session clock.
    pub time_s: f64,
}

impl NormalizedInput {
    pub fn new(yaw: f64, slide: f64, source: InputSource, time_s: f64) -> Self {
        let sanitize = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        NormalizedInput {
            yaw: sanitize(yaw),
            slide: sanitize(slide),
            source,
            time_s,
        }
    }

    /// A zero command, used for failsafe decay when input goes stale.
    pub fn zero(source: InputSource, time_s: f64) -> Self {
        NormalizedInput {
            yaw: 0.0,
            slide: 0.0,
            source,
            time_s,
        }
    }
}

/// Motion-shaping parameters shared by both input conditions. One instance
/// drives both devices in a study session so motion profiles stay matched.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MotionParams {
    /// Maximum avatar translation speed, m/s.
    pub max_linear_speed: f64,
    /// Maximum avatar turn rate, deg/s.
    pub max_angular_speed: f64,
    /// Translation acceleration limit, m/s^2.
    pub linear_accel_limit: f64,
    /// Turn acceleration limit, deg/s^2.
    pub angular_accel_limit: f64,
    /// Response-curve exponent applied to the slide axis only; 1.0 is linear.
    pub curve_exponent: f64,
    /// Radial deadzone on both axes, fraction of full scale, `0..=0.2`.
    pub deadzone: f64,
    pub yaw_mode: YawMode,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            max_linear_speed: 5.0,
            max_angular_speed: 90.0,
            linear_accel_limit: 4.0,
            angular_accel_limit: 360.0,
            curve_exponent: 1.0,
            deadzone: 0.05,
            yaw_mode: YawMode::RateControl,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<(), MappingError> {
        let positive = [
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("linear_accel_limit", self.linear_accel_limit),
            ("angular_accel_limit", self.angular_accel_limit),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(MappingError::BadParam {
                    name,
                    reason: format!("must be a positive number, got {value}"),
                });
            }
        }
        if !(self.curve_exponent.is_finite() && self.curve_exponent > 0.0) {
            return Err(MappingError::BadParam {
                name: "curve_exponent",
                reason: format!("must be a positive number, got {}", self.curve_exponent),
            });
        }
        if !(self.deadzone.is_finite() && (0.0..=0.2).contains(&self.deadzone)) {
            return Err(MappingError::BadParam {
                name: "deadzone",
                reason: format!("must be in [0, 0.2], got {}", self.deadzone),
            });
        }
        Ok(())
    }
}

/// Full motion configuration: the shared [`MotionParams`] plus the belt speed
/// that reads as full-scale slide input on the scooter side. Parsed from the
/// `key = value` params file; one file drives both conditions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamSet {
    pub motion: MotionParams,
    /// Belt speed in m/s that maps to slide input 1.0.
    pub max_slide_speed: f64,
}

impl Default for ParamSet {
    fn default() -> Self {
        ParamSet {
            motion: MotionParams::default(),
            max_slide_speed: 1.0,
        }
    }
}

impl ParamSet {
    pub fn validate(&self) -> Result<(), MappingError> {
        self.motion.validate()?;
        if !(self.max_slide_speed.is_finite() && self.max_slide_speed > 0.0) {
            return Err(MappingError::BadParam {
                name: "max_slide_speed",
                reason: format!("must be a positive number, got {}", self.max_slide_speed),
            });
        }
        Ok(())
    }

    /// Parse the params file format: `key = value` lines, `#` comments,
    /// blank lines ignored. Unknown keys are rejected so typos surface.
    pub fn parse(text: &str) -> Result<ParamSet, MappingError> {
        let mut params = ParamSet::default();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| MappingError::BadConfig {
                    line: lineno + 1,
                    reason: format!("expected `key = value`, got {line:?}"),
                })?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<f64>().map_err(|_| MappingError::BadConfig {
                    line: lineno + 1,
                    reason: format!("bad numeric value {v:?} for {key}"),
                })
            };
            match key {
                "max_linear_speed" => params.motion.max_linear_speed = num(value)?,
                "max_angular_speed" => params.motion.max_angular_speed = num(value)?,
                "linear_accel_limit" => params.motion.linear_accel_limit = num(value)?,
                "angular_accel_limit" => params.motion.angular_accel_limit = num(value)?,
                "curve_exponent" => params.motion.curve_exponent = num(value)?,
                "deadzone" => params.motion.deadzone = num(value)?,
                "max_slide_speed" => params.max_slide_speed = num(value)?,
                "yaw_mode" => {
                    params.motion.yaw_mode = match value {
                        "rate" => YawMode::RateControl,
                        "direct" => YawMode::DirectHeading,
                        other => {
                            return Err(MappingError::BadConfig {
                                line: lineno + 1,
                                reason: format!(
                                    "yaw_mode must be `rate` or `direct`, got {other:?}"
                                ),
                            })
                        }
                    }
                }
                other => {
                    return Err(MappingError::BadConfig {
                        line: lineno + 1,
                        reason: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        params.validate()?;
        Ok(params)
    }

    /// Render to the params file format, parseable by [`ParamSet::parse`].
    pub fn serialize(&self) -> String {
        let yaw_mode = match self.motion.yaw_mode {
            YawMode::RateControl => "rate",
            YawMode::DirectHeading => "direct",
        };
        format!(
            "# motion parameters, shared by both input conditions\n\
             max_linear_speed = {}      # m/s\n\
             max_angular_speed = {}     # deg/s\n\
             linear_accel_limit = {}    # m/s^2\n\
             angular_accel_limit = {}   # deg/s^2\n\
             curve_exponent = {}\n\
             deadzone = {}\n\
             yaw_mode = {yaw_mode}\n\
             max_slide_speed = {}       # belt m/s at full slide input\n",
            self.motion.max_linear_speed,
            self.motion.max_angular_speed,
            self.motion.linear_accel_limit,
            self.motion.angular_accel_limit,
            self.motion.curve_exponent,
            self.motion.deadzone,
            self.max_slide_speed,
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("handlebar raw value {got} exceeds 14-bit range 0..={HANDLEBAR_RAW_MAX}")]
    RawOutOfRange { got: u16 },
    #[error("invalid motion parameter {name}: {reason}")]
    BadParam { name: &'static str, reason: String },
    #[error("params file line {line}: {reason}")]
    BadConfig { line: usize, reason: String },
}

/// Map a raw absolute-encoder reading to yaw input: the shortest signed
/// angular offset from center, scaled so +-90 degrees is full deflection,
/// clamped to `[-1, 1]`.
pub fn handlebar_to_yaw(raw: u16, center_raw: u16) -> Result<f64, MappingError> {
    if raw > HANDLEBAR_RAW_MAX {
        return Err(MappingError::RawOutOfRange { got: raw });
    }
    debug_assert!(center_raw < COUNTS_PER_TURN as u16);
    let angle = handlebar_angle_deg(raw, center_raw);
    Ok((angle / HANDLEBAR_FULL_SCALE_DEG).clamp(-1.0, 1.0))
}

/// Estimate belt speed from one frame's treadmill delta and map it to slide
/// input: `delta / (counts_per_meter * dt)` m/s, scaled so `max_slide_speed`
/// is full deflection, clamped to `[-1, 1]`.
pub fn counts_to_slide(
    treadmill_delta: i16,
    dt: f64,
    counts_per_meter: f64,
    max_slide_speed: f64,
) -> f64 {
    debug_assert!(dt > 0.0 && counts_per_meter > 0.0 && max_slide_speed > 0.0);
    let belt_speed = treadmill_delta as f64 / (counts_per_meter * dt);
    (belt_speed / max_slide_speed).clamp(-1.0, 1.0)
}

/// Map gamepad axes to input: left stick Y is slide, right stick X is yaw.
/// Out-of-range or NaN axes are clamped/zeroed; the bool reports whether
/// anything had to be fixed up so the caller can log a warning.
pub fn joystick_to_input(left_y: f64, right_x: f64, time_s: f64) -> (NormalizedInput, bool) {
    let out_of_range = |x: f64| x.is_nan() || !(-1.0..=1.0).contains(&x);
    let clamped = out_of_range(left_y) || out_of_range(right_x);
    (
        NormalizedInput::new(right_x, left_y, InputSource::Joystick, time_s),
        clamped,
    )
}

/// Radial deadzone with rescale: dead inside `deadzone`, then linear from 0
/// at the deadzone edge back to 1 at full deflection. Continuous and odd.
pub fn deadzone_rescale(x: f64, deadzone: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&deadzone));
    let magnitude = ((x.abs() - deadzone) / (1.0 - deadzone)).max(0.0);
    x.signum() * magnitude
}

/// Map one input sample to target velocities `(v, w)`:
/// `v = max_linear * sign(s) * |d(s)|^curve_exponent` and, under rate
/// control, `w = max_angular * d(yaw)` with no curve (turn rate stays
/// proportional, which keeps steering predictable). Under
/// [`YawMode::DirectHeading`] the angular half is produced by
/// [`DirectHeadingTracker::angular_target`] instead.
pub fn target_velocities(input: &NormalizedInput, params: &MotionParams) -> (f64, f64) {
    let slide = deadzone_rescale(input.slide, params.deadzone);
    let v = params.max_linear_speed * slide.signum() * slide.abs().powf(params.curve_exponent);
    let yaw = deadzone_rescale(input.yaw, params.deadzone);
    let w = params.max_angular_speed * yaw;
    (v, w)
}

/// Move `current` toward `target` by at most `limit * dt` per call. This is
/// the only place velocity is allowed to change, which is what makes the
/// per-tick acceleration bound hold exactly.
pub fn clamp_step(current: f64, target: f64, limit: f64, dt: f64) -> f64 {
    let max_delta = limit * dt;
    current + (target - current).clamp(-max_delta, max_delta)
}

/// Angular control state for [`YawMode::DirectHeading`]: yaw input commands
/// a heading offset in `[-90, +90]` degrees from a reference heading (the
/// avatar's heading when the trial started or the mode engaged). The avatar
/// turns toward the commanded heading at up to the angular speed limit.
#[derive(Debug, Clone, Copy)]
pub struct DirectHeadingTracker {
    reference_heading_deg: f64,
}

impl DirectHeadingTracker {
    pub fn new(reference_heading_deg: f64) -> Self {
        DirectHeadingTracker {
            reference_heading_deg,
        }
    }

    /// Re-anchor the reference, e.g. after a teleport.
    pub fn reset(&mut self, reference_heading_deg: f64) {
        self.reference_heading_deg = reference_heading_deg;
    }

    /// Angular velocity target that closes the gap between the current
    /// heading and the commanded heading within `dt`, saturated to the
    /// angular speed limit. The downstream acceleration clamp still applies.
    pub fn angular_target(
        &self,
        yaw_input: f64,
        current_heading_deg: f64,
        params: &MotionParams,
        dt: f64,
    ) -> f64 {
        let yaw = deadzone_rescale(yaw_input, params.deadzone);
        let desired = self.reference_heading_deg + yaw * HANDLEBAR_FULL_SCALE_DEG;
        let error = shortest_angle_deg(desired - current_heading_deg);
        (error / dt).clamp(-params.max_angular_speed, params.max_angular_speed)
    }
}

/// Wrap an angle difference into `(-180, 180]` degrees.
pub fn shortest_angle_deg(diff: f64) -> f64 {
    let wrapped = diff.rem_euclid(360.0);
    if wrapped > 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handlebar_quarter_turn_is_full_scale() {
        assert_eq!(handlebar_to_yaw(12288, 8192).unwrap(), 1.0);
        assert_eq!(handlebar_to_yaw(4096, 8192).unwrap(), -1.0);
        assert_eq!(handlebar_to_yaw(8192, 8192).unwrap(), 0.0);
        // 45 degrees right of center: 8192 + 2048.
        assert_eq!(handlebar_to_yaw(10240, 8192).unwrap(), 0.5);
    }

    #[test]
    fn handlebar_saturates_past_the_throw() {
        // Exactly opposite the center is a tie for shortest path; offsets
        // wrap into (-180, 180], so it reads +180 degrees and clamps to 1.0.
        assert_eq!(handlebar_to_yaw(0, 8192).unwrap(), 1.0);
        // Wrap-around: center 16000, reading 500 is +884 counts = +19.4 deg.
        let yaw = handlebar_to_yaw(500, 16000).unwrap();
        assert!((yaw - 884.0 * (360.0 / 16384.0) / 90.0).abs() < 1e-12);
        assert_eq!(
            handlebar_to_yaw(16384, 8192),
            Err(MappingError::RawOutOfRange { got: 16384 })
        );
    }

    #[test]
    fn counts_map_to_slide_via_belt_speed() {
        // 20 counts in 10 ms at 2000 counts/m = 1.0 m/s.
        assert_eq!(counts_to_slide(20, 0.01, 2000.0, 1.0), 1.0);
        assert_eq!(counts_to_slide(10, 0.01, 2000.0, 1.0), 0.5);
        assert_eq!(counts_to_slide(-10, 0.01, 2000.0, 1.0), -0.5);
        // Faster than max_slide_speed saturates.
        assert_eq!(counts_to_slide(100, 0.01, 2000.0, 1.0), 1.0);
    }

    #[test]
    fn joystick_axes_map_and_clamp() {
        let (input, clamped) = joystick_to_input(0.75, -1.0, 1.0);
        assert!(!clamped);
        assert_eq!(input.slide, 0.75);
        assert_eq!(input.yaw, -1.0);
        assert_eq!(input.source, InputSource::Joystick);

        let (input, clamped) = joystick_to_input(1.5, f64::NAN, 2.0);
        assert!(clamped);
        assert_eq!(input.slide, 1.0);
        assert_eq!(input.yaw, 0.0);
    }

    #[test]
    fn deadzone_rescale_shape() {
        assert_eq!(deadzone_rescale(0.0, 0.05), 0.0);
        assert_eq!(deadzone_rescale(0.05, 0.05), 0.0);
        assert_eq!(deadzone_rescale(1.0, 0.05), 1.0);
        assert_eq!(deadzone_rescale(-1.0, 0.05), -1.0);
        let mid = deadzone_rescale(0.525, 0.05);
        assert!((mid - 0.5).abs() < 1e-12);
        assert_eq!(deadzone_rescale(0.3, 0.0), 0.3);
    }

    #[test]
    fn target_velocities_follow_curve_and_limits() {
        let params = MotionParams {
            deadzone: 0.0,
            ..MotionParams::default()
        };
        let input = NormalizedInput::new(0.5, 1.0, InputSource::Scooter, 0.0);
        let (v, w) = target_velocities(&input, &params);
        assert_eq!(v, 5.0);
        assert_eq!(w, 45.0);

        // curve_exponent = 2: slide 0.5 gives 5.0 * 0.25 = 1.25 m/s, while
        // yaw stays linear.
        let squared = MotionParams {
            curve_exponent: 2.0,
            deadzone: 0.0,
            ..MotionParams::default()
        };
        let input = NormalizedInput::new(0.5, 0.5, InputSource::Joystick, 0.0);
        let (v, w) = target_velocities(&input, &squared);
        assert!((v - 1.25).abs() < 1e-12);
        assert_eq!(w, 45.0);

        // The curve preserves sign for reverse slide.
        let input = NormalizedInput::new(0.0, -0.5, InputSource::Joystick, 0.0);
        let (v, _) = target_velocities(&input, &squared);
        assert!((v + 1.25).abs() < 1e-12);
    }

    #[test]
    fn clamp_step_limits_rate_of_change() {
        // 4 m/s^2 for 10 ms allows 0.04 m/s of change.
        assert!((clamp_step(0.0, 5.0, 4.0, 0.01) - 0.04).abs() < 1e-15);
        assert!((clamp_step(5.0, 0.0, 4.0, 0.01) - 4.96).abs() < 1e-15);
        // Already within reach: lands exactly on target.
        assert_eq!(clamp_step(1.0, 1.02, 4.0, 0.01), 1.02);
        assert_eq!(clamp_step(1.0, 1.0, 4.0, 0.01), 1.0);
    }

    #[test]
    fn normalized_input_never_stores_nan() {
        let input = NormalizedInput::new(f64::NAN, 2.0, InputSource::Scooter, 0.0);
        assert_eq!(input.yaw, 0.0);
        assert_eq!(input.slide, 1.0);
    }

    #[test]
    fn params_file_roundtrip_and_errors() {
        let text = "\n# tuning\nmax_linear_speed = 4.0\ndeadzone = 0.1 # wide\nyaw_mode = direct\n";
        let params = ParamSet::parse(text).unwrap();
        assert_eq!(params.motion.max_linear_speed, 4.0);
        assert_eq!(params.motion.deadzone, 0.1);
        assert_eq!(params.motion.yaw_mode, YawMode::DirectHeading);
        // Unspecified keys keep defaults.
        assert_eq!(params.motion.max_angular_speed, 90.0);
        assert_eq!(params.max_slide_speed, 1.0);

        let reparsed = ParamSet::parse(&params.serialize()).unwrap();
        assert_eq!(reparsed, params);

        assert!(matches!(
            ParamSet::parse("max_linear_speed 4.0\n"),
            Err(MappingError::BadConfig { line: 1, .. })
        ));
        assert!(matches!(
            ParamSet::parse("warp_speed = 9\n"),
            Err(MappingError::BadConfig { .. })
        ));
        assert!(matches!(
            ParamSet::parse("deadzone = 0.5\n"),
            Err(MappingError::BadParam {
                name: "deadzone",
                ..
            })
        ));
        assert!(matches!(
            ParamSet::parse("max_linear_speed = -1\n"),
            Err(MappingError::BadParam { .. })
        ));
    }

    #[test]
    fn direct_heading_tracker_converges() {
        let params = MotionParams::default();
        let tracker = DirectHeadingTracker::new(0.0);
        // Full right (negative CCW? positive yaw = CCW): yaw 0.5 commands
        // +45 degrees. Far from it, the target saturates at max rate.
        let w = tracker.angular_target(0.5, 0.0, &params, 0.01);
        assert_eq!(w, 90.0);
        // Close to the commanded heading, the rate tapers to close exactly.
        let near = 45.0 - 45.0 * params.deadzone / (1.0 - params.deadzone) - 0.5;
        let w = tracker.angular_target(0.5, near, &params, 0.01);
        assert!(w > 0.0 && w <= 90.0);
        // At the commanded heading the target is zero.
        let commanded = deadzone_rescale(0.5, params.deadzone) * 90.0;
        let w = tracker.angular_target(0.5, commanded, &params, 0.01);
        assert!(w.abs() < 1e-9);
    }

    #[test]
    fn shortest_angle_wraps_into_half_open_range() {
        assert_eq!(shortest_angle_deg(0.0), 0.0);
        assert_eq!(shortest_angle_deg(190.0), -170.0);
        assert_eq!(shortest_angle_deg(-190.0), 170.0);
        assert_eq!(shortest_angle_deg(180.0), 180.0);
        assert_eq!(shortest_angle_deg(540.0), 180.0);
    }
}
