//! Scripted pilot: a pure-pursuit controller that drives the avatar along a
//! goal's guidance polyline and parks it in the zone.
//!
//! The pilot exists to exercise the full stack without a human: it reads the
//! avatar pose, looks ahead along the guidance path, and emits the same
//! normalized (yaw, slide) commands a participant would produce. Trials it
//! completes land in the study's expected duration envelope on the bundled
//! map.

use crate::map::CityMap;
use crate::mapping::shortest_angle_deg;
use crate::sim::AvatarState;

/// Tuning for the scripted pilot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotParams {
    /// Pure-pursuit lookahead distance along the path, in meters.
    pub lookahead_m: f64,
    /// Scale on the slide command, `(0, 1]`. Below 1.0 the pilot rides
    /// slower, like a cautious participant.
    pub slide_scale: f64,
    /// Distance from the path end at which the pilot stops commanding
    /// motion and lets the zone dwell begin, in meters.
    pub stop_radius_m: f64,
}

impl Default for PilotParams {
    fn default() -> Self {
        PilotParams {
            lookahead_m: 5.5,
            slide_scale: 1.0,
            stop_radius_m: 2.0,
        }
    }
}

/// Pure-pursuit follower for one goal's guidance polyline.
#[derive(Debug, Clone)]
pub struct ScriptedPilot {
    path: Vec<[f64; 2]>,
    params: PilotParams,
}

impl ScriptedPilot {
    /// Pilot for `goal_id` on `map`. Returns `None` when the map has no
    /// guidance for that goal (validated maps always do).
    pub fn for_goal(map: &CityMap, goal_id: &str, params: PilotParams) -> Option<ScriptedPilot> {
        let path = map.guidance.get(goal_id)?.clone();
        if path.len() < 2 {
            return None;
        }
        Some(ScriptedPilot { path, params })
    }

    /// Normalized (yaw, slide) command for the current pose.
    ///
    /// Yaw steers toward a point `lookahead_m` further along the path than
    /// the avatar's closest point; slide backs off as the required turn
    /// grows, and both go to zero within `stop_radius_m` of the path end.
    pub fn control(&self, avatar: &AvatarState) -> (f64, f64) {
        let end = self.path[self.path.len() - 1];
        let to_end = ((avatar.x - end[0]).powi(2) + (avatar.y - end[1]).powi(2)).sqrt();
        if to_end <= self.params.stop_radius_m {
            return (0.0, 0.0);
        }

        let along = self.closest_arclength(avatar.x, avatar.y);
        let target = self.point_at_arclength(along + self.params.lookahead_m);
        let desired_deg = (target[1] - avatar.y)
            .atan2(target[0] - avatar.x)
            .to_degrees();
        let err = shortest_angle_deg(desired_deg - avatar.heading_deg);

        let yaw = (err / 90.0).clamp(-1.0, 1.0);
        let abs_err = err.abs();
        let slide = if abs_err < 45.0 {
            1.0
        } else {
            // Ease off through the turn: full speed below 45 degrees of
            // error, tapering to 0.2 at a full reversal.
            1.0 - (abs_err - 45.0) / 135.0 * 0.8
        };
        (yaw, slide * self.params.slide_scale)
    }

    /// Arclength of the path point closest to `(x, y)`.
    fn closest_arclength(&self, x: f64, y: f64) -> f64 {
        let mut best_d2 = f64::INFINITY;
        let mut best_s = 0.0;
        let mut base = 0.0;
        for w in self.path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((x - a[0]) * ab[0] + (y - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
            };
            let px = a[0] + t * ab[0];
            let py = a[1] + t * ab[1];
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best_s = base + t * len2.sqrt();
            }
            base += len2.sqrt();
        }
        best_s
    }

    /// Point at arclength `s` along the path, clamped to the ends.
    fn point_at_arclength(&self, s: f64) -> [f64; 2] {
        if s <= 0.0 {
            return self.path[0];
        }
        let mut remaining = s;
        for w in self.path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let seg = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if remaining <= seg {
                let t = if seg == 0.0 { 0.0 } else { remaining / seg };
                return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            }
            remaining -= seg;
        }
        self.path[self.path.len() - 1]
    }
}
