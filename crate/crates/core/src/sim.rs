//! Avatar kinematics on a fixed timestep plus wall collision response.
//!
//! The avatar is a heading-constrained point with a collision disc: it
//! translates only along its heading (no strafing) and turns in place.
//! Integration is semi-implicit: heading updates first, then position moves
//! along the new heading. All state is `f64` and every operation is ordered
//! deterministically, so identical input streams give bit-identical
//! trajectories on every platform.

use serde::{Deserialize, Serialize};

/// Simulation timestep in seconds. The pipeline runs at a fixed 100 Hz.
pub const TICK_DT: f64 = 0.01;

/// Simulation tick rate in Hz. Convert tick counts to seconds by dividing
/// by this rather than multiplying by [`TICK_DT`]: division rounds once, so
/// whole-tick times print as the short decimals they represent.
pub const TICK_RATE_HZ: f64 = 100.0;

/// Collision disc radius around the avatar in meters.
pub const DEFAULT_COLLISION_RADIUS: f64 = 0.4;

/// Full kinematic state of the avatar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvatarState {
    /// Position in meters, world frame.
    pub x: f64,
    pub y: f64,
    /// Heading in degrees, `[0, 360)`; 0 along +x, increasing
    /// counter-clockwise.
    pub heading_deg: f64,
    /// Signed translation speed along the heading, m/s.
    pub linear_vel: f64,
    /// Signed turn rate, deg/s, positive counter-clockwise.
    pub angular_vel: f64,
}

impl AvatarState {
    pub fn at_rest(x: f64, y: f64, heading_deg: f64) -> Self {
        AvatarState {
            x,
            y,
            heading_deg: wrap_heading(heading_deg),
            linear_vel: 0.0,
            angular_vel: 0.0,
        }
    }

    /// Velocity as a world-frame vector.
    pub fn velocity_vec(&self) -> [f64; 2] {
        let rad = self.heading_deg.to_radians();
        [self.linear_vel * rad.cos(), self.linear_vel * rad.sin()]
    }
}

/// One wall segment from `a` to `b`, in meters. Walls are one-dimensional
/// segments; rooms and buildings are built from several.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// Wrap a heading into `[0, 360)`.
pub fn wrap_heading(heading_deg: f64) -> f64 {
    let wrapped = heading_deg.rem_euclid(360.0);
    // rem_euclid of a tiny negative can round up to exactly 360.0.
    if wrapped >= 360.0 {
        0.0
    } else {
        wrapped
    }
}

/// Advance pose by one step of semi-implicit Euler: heading first, then
/// translation along the updated heading.
pub fn integrate_pose(avatar: &mut AvatarState, dt: f64) {
    avatar.heading_deg = wrap_heading(avatar.heading_deg + avatar.angular_vel * dt);
    let rad = avatar.heading_deg.to_radians();
    avatar.x += avatar.linear_vel * dt * rad.cos();
    avatar.y += avatar.linear_vel * dt * rad.sin();
}

/// Closest point on segment `ab` to point `p`.
fn closest_point_on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> [f64; 2] {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return a;
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    [a[0] + t * ab[0], a[1] + t * ab[1]]
}

/// Push the avatar's collision disc out of any wall it penetrates and zero
/// the velocity component into the wall (slide response). Tangential motion
/// is preserved; speed magnitude never increases. Returns true if any wall
/// was touched.
///
/// Walls are processed in order in a single pass, which is ample at 100 Hz
/// where penetration depth per tick is millimeters.
pub fn resolve_collision(avatar: &mut AvatarState, walls: &[Wall], radius: f64) -> bool {
    let mut touched = false;
    for wall in walls {
        // Cheap reject: disc bounding box vs segment bounding box.
        let (min_x, max_x) = (wall.a[0].min(wall.b[0]), wall.a[0].max(wall.b[0]));
        let (min_y, max_y) = (wall.a[1].min(wall.b[1]), wall.a[1].max(wall.b[1]));
        if avatar.x < min_x - radius
            || avatar.x > max_x + radius
            || avatar.y < min_y - radius
            || avatar.y > max_y + radius
        {
            continue;
        }
        let p = [avatar.x, avatar.y];
        let c = closest_point_on_segment(wall.a, wall.b, p);
        let offset = [p[0] - c[0], p[1] - c[1]];
        let dist2 = offset[0] * offset[0] + offset[1] * offset[1];
        if dist2 >= radius * radius {
            continue;
        }
        touched = true;
        let normal = if dist2 > 0.0 {
            let dist = dist2.sqrt();
            [offset[0] / dist, offset[1] / dist]
        } else {
            // Disc center exactly on the wall: push out perpendicular to the
            // segment, picking the side the avatar is heading away from.
            let ab = [wall.b[0] - wall.a[0], wall.b[1] - wall.a[1]];
            let len = (ab[0] * ab[0] + ab[1] * ab[1]).sqrt();
            if len == 0.0 {
                [1.0, 0.0]
            } else {
                let perp = [-ab[1] / len, ab[0] / len];
                let vel = avatar.velocity_vec();
                if vel[0] * perp[0] + vel[1] * perp[1] >= 0.0 {
                    perp
                } else {
                    [-perp[0], -perp[1]]
                }
            }
        };
        avatar.x = c[0] + normal[0] * radius;
        avatar.y = c[1] + normal[1] * radius;
        // Remove the inward normal component of velocity. The avatar cannot
        // strafe, so the slid velocity projects back onto the heading axis:
        // v' = v * (1 - (dir . n)^2) whenever v flows into the wall.
        let rad = avatar.heading_deg.to_radians();
        let dir = [rad.cos(), rad.sin()];
        let dir_dot_n = dir[0] * normal[0] + dir[1] * normal[1];
        if avatar.linear_vel * dir_dot_n < 0.0 {
            avatar.linear_vel *= 1.0 - dir_dot_n * dir_dot_n;
        }
    }
    touched
}

/// Instantly set pose and stop: velocities reset to zero so the avatar does
/// not carry momentum across a teleport.
pub fn teleport(avatar: &mut AvatarState, x: f64, y: f64, heading_deg: f64) {
    avatar.x = x;
    avatar.y = y;
    avatar.heading_deg = wrap_heading(heading_deg);
    avatar.linear_vel = 0.0;
    avatar.angular_vel = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrate_turns_before_translating() {
        // Heading 0, v = 1 m/s, w = 90 deg/s, dt = 0.5 s: heading becomes 45
        // and the step moves along the new heading.
        let mut avatar = AvatarState::at_rest(0.0, 0.0, 0.0);
        avatar.linear_vel = 1.0;
        avatar.angular_vel = 90.0;
        integrate_pose(&mut avatar, 0.5);
        assert_eq!(avatar.heading_deg, 45.0);
        assert!((avatar.x - 0.5 * 45f64.to_radians().cos()).abs() < 1e-12);
        assert!((avatar.y - 0.5 * 45f64.to_radians().sin()).abs() < 1e-12);
        assert!((avatar.x - 0.35355339059327373).abs() < 1e-12);
    }

    #[test]
    fn heading_wraps_into_range() {
        let mut avatar = AvatarState::at_rest(0.0, 0.0, 350.0);
        avatar.angular_vel = 90.0;
        integrate_pose(&mut avatar, 0.5);
        assert_eq!(avatar.heading_deg, 35.0);

        avatar.angular_vel = -90.0;
        integrate_pose(&mut avatar, 1.0);
        assert_eq!(avatar.heading_deg, 305.0);

        assert_eq!(wrap_heading(360.0), 0.0);
        assert_eq!(wrap_heading(-1e-300), 0.0);
        assert!(wrap_heading(719.5) - 359.5 < 1e-12);
    }

    #[test]
    fn zero_velocity_is_a_fixed_point() {
        let mut avatar = AvatarState::at_rest(3.0, -2.0, 123.0);
        let before = avatar;
        integrate_pose(&mut avatar, TICK_DT);
        assert_eq!(avatar, before);
    }

    fn vertical_wall_at_x(x: f64) -> Wall {
        Wall {
            a: [x, -100.0],
            b: [x, 100.0],
        }
    }

    #[test]
    fn collision_pushes_disc_out_of_wall() {
        // Avatar center 0.3 m from the wall: pushed back to 0.4.
        let mut avatar = AvatarState::at_rest(9.7, 0.0, 0.0);
        let touched = resolve_collision(&mut avatar, &[vertical_wall_at_x(10.0)], 0.4);
        assert!(touched);
        assert!((avatar.x - 9.6).abs() < 1e-12);
        assert_eq!(avatar.y, 0.0);
    }

    #[test]
    fn head_on_collision_stops_motion() {
        let mut avatar = AvatarState::at_rest(9.7, 0.0, 0.0);
        avatar.linear_vel = 2.0;
        resolve_collision(&mut avatar, &[vertical_wall_at_x(10.0)], 0.4);
        assert_eq!(avatar.linear_vel, 0.0);
    }

    #[test]
    fn parallel_motion_is_preserved() {
        let mut avatar = AvatarState::at_rest(9.7, 0.0, 90.0);
        avatar.linear_vel = 2.0;
        resolve_collision(&mut avatar, &[vertical_wall_at_x(10.0)], 0.4);
        assert_eq!(avatar.linear_vel, 2.0);
        assert!((avatar.x - 9.6).abs() < 1e-12);
    }

    #[test]
    fn oblique_collision_reduces_speed() {
        // 45 degrees into the wall: v' = v * (1 - cos^2(45)) = v/2.
        let mut avatar = AvatarState::at_rest(9.7, 0.0, 45.0);
        avatar.linear_vel = 2.0;
        resolve_collision(&mut avatar, &[vertical_wall_at_x(10.0)], 0.4);
        assert!((avatar.linear_vel - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moving_away_from_wall_is_untouched() {
        let mut avatar = AvatarState::at_rest(9.7, 0.0, 180.0);
        avatar.linear_vel = 2.0;
        resolve_collision(&mut avatar, &[vertical_wall_at_x(10.0)], 0.4);
        assert_eq!(avatar.linear_vel, 2.0, "outward motion must not be damped");
        // Position still projects out.
        assert!((avatar.x - 9.6).abs() < 1e-12);
    }

    #[test]
    fn reversing_into_wall_stops_motion() {
        // Facing away but backing into the wall: inflow check uses the
        // velocity vector, not the facing.
        let mut avatar = AvatarState::at_rest(9.7, 0.0, 180.0);
        avatar.linear_vel = -2.0;
        resolve_collision(&mut avatar, &[vertical_wall_at_x(10.0)], 0.4);
        assert_eq!(avatar.linear_vel, 0.0);
    }

    #[test]
    fn segment_endpoint_acts_as_corner() {
        let wall = Wall {
            a: [0.0, 0.0],
            b: [10.0, 0.0],
        };
        // Approaching the endpoint at (10, 0) diagonally from outside.
        let mut avatar = AvatarState::at_rest(10.2, 0.2, 0.0);
        resolve_collision(&mut avatar, &[wall], 0.4);
        let dist = ((avatar.x - 10.0).powi(2) + avatar.y.powi(2)).sqrt();
        assert!(
            (dist - 0.4).abs() < 1e-12,
            "pushed to disc radius, got {dist}"
        );
    }

    #[test]
    fn collision_never_increases_speed() {
        let walls = [vertical_wall_at_x(1.0)];
        for heading in 0..360 {
            let mut avatar = AvatarState::at_rest(0.8, 0.0, heading as f64);
            avatar.linear_vel = 3.0;
            let before = avatar.linear_vel.abs();
            resolve_collision(&mut avatar, &walls, 0.4);
            assert!(avatar.linear_vel.abs() <= before + 1e-12);
        }
    }

    #[test]
    fn far_walls_are_ignored() {
        let mut avatar = AvatarState::at_rest(0.0, 0.0, 0.0);
        avatar.linear_vel = 5.0;
        let before = avatar;
        let touched = resolve_collision(&mut avatar, &[vertical_wall_at_x(10.0)], 0.4);
        assert!(!touched);
        assert_eq!(avatar, before);
    }

    #[test]
    fn teleport_zeroes_velocities() {
        let mut avatar = AvatarState::at_rest(1.0, 2.0, 30.0);
        avatar.linear_vel = 4.0;
        avatar.angular_vel = -50.0;
        teleport(&mut avatar, -7.0, 8.0, 450.0);
        assert_eq!(avatar.x, -7.0);
        assert_eq!(avatar.y, 8.0);
        assert_eq!(avatar.heading_deg, 90.0);
        assert_eq!(avatar.linear_vel, 0.0);
        assert_eq!(avatar.angular_vel, 0.0);
    }
}
