//! Navigation environment: a city map with a start pose, goal zones, wall
//! segments, and one guidance polyline per goal.
//!
//! Maps load from JSON and are validated before use so the trial engine can
//! assume every goal is reachable along its guidance path. A default city is
//! bundled: an axis-aligned street grid (20 m streets, 80 m buildings) with
//! six destinations whose routes range from roughly 320 to 510 meters.

use crate::sim::Wall;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Goal zone radius in meters, unless the map says otherwise.
pub const DEFAULT_GOAL_RADIUS: f64 = 2.0;
/// How long the avatar must dwell stationary inside a goal zone to complete
/// a trial, in seconds. Fixed by the study design.
pub const GOAL_DWELL_S: f64 = 2.0;

/// Where trials start and where the avatar teleports after each completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

/// A circular destination zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalZone {
    /// Stable identifier used in logs and CLI flags.
    pub id: String,
    /// Display name shown in trial prompts.
    pub name: String,
    pub center: [f64; 2],
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    DEFAULT_GOAL_RADIUS
}

/// Validated navigation environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityMap {
    pub start: StartPose,
    pub goals: Vec<GoalZone>,
    #[serde(default)]
    pub walls: Vec<Wall>,
    /// Guidance polyline per goal id, from the start position into the zone.
    pub guidance: BTreeMap<String, Vec<[f64; 2]>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map JSON is invalid: {0}")]
    Parse(String),
    #[error("map validation failed for goal {goal:?}: {reason}")]
    BadGoal { goal: String, reason: String },
    #[error("map validation failed: {0}")]
    Invalid(String),
}

impl CityMap {
    pub fn from_json(text: &str) -> Result<CityMap, MapError> {
        let map: CityMap =
            serde_json::from_str(text).map_err(|e| MapError::Parse(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.goals.is_empty() {
            return Err(MapError::Invalid("map has no goals".into()));
        }
        let finite2 = |p: &[f64; 2]| p[0].is_finite() && p[1].is_finite();
        if !(self.start.x.is_finite()
            && self.start.y.is_finite()
            && self.start.heading_deg.is_finite())
        {
            return Err(MapError::Invalid(
                "start pose has a non-finite value".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for goal in &self.goals {
            if goal.id.is_empty() {
                return Err(MapError::Invalid("a goal has an empty id".into()));
            }
            if !seen.insert(goal.id.as_str()) {
                return Err(MapError::Invalid(format!(
                    "duplicate goal id {:?}",
                    goal.id
                )));
            }
            let bad = |reason: String| MapError::BadGoal {
                goal: goal.id.clone(),
                reason,
            };
            if !finite2(&goal.center) {
                return Err(bad("center has a non-finite coordinate".into()));
            }
            if !(goal.radius.is_finite() && goal.radius > 0.0) {
                return Err(bad(format!("radius must be positive, got {}", goal.radius)));
            }
            let path = self
                .guidance
                .get(&goal.id)
                .ok_or_else(|| bad("no guidance polyline".into()))?;
            if path.len() < 2 {
                return Err(bad("guidance polyline needs at least 2 points".into()));
            }
            if let Some(p) = path.iter().find(|p| !finite2(p)) {
                return Err(bad(format!("guidance point {p:?} is non-finite")));
            }
            let first = path[0];
            let start_dist =
                ((first[0] - self.start.x).powi(2) + (first[1] - self.start.y).powi(2)).sqrt();
            if start_dist > 1e-6 {
                return Err(bad(format!(
                    "guidance must begin at the start position ({} m away)",
                    start_dist
                )));
            }
            let last = path[path.len() - 1];
            let end_dist =
                ((last[0] - goal.center[0]).powi(2) + (last[1] - goal.center[1]).powi(2)).sqrt();
            if end_dist > goal.radius {
                return Err(bad(format!(
                    "guidance must end inside the goal zone (ends {end_dist:.2} m from center, radius {})",
                    goal.radius
                )));
            }
        }
        for (id, _) in &self.guidance {
            if !self.goals.iter().any(|g| &g.id == id) {
                return Err(MapError::Invalid(format!(
                    "guidance references unknown goal id {id:?}"
                )));
            }
        }
        for (i, wall) in self.walls.iter().enumerate() {
            if !(finite2(&wall.a) && finite2(&wall.b)) {
                return Err(MapError::Invalid(format!(
                    "wall {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(())
    }

    pub fn goal(&self, id: &str) -> Option<&GoalZone> {
        self.goals.iter().find(|g| g.id == id)
    }

    /// Guidance polyline length in meters for one goal.
    pub fn guidance_length(&self, goal_id: &str) -> Option<f64> {
        self.guidance.get(goal_id).map(|p| polyline_length(p))
    }
}

/// Total length of a polyline in meters.
pub fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

/// The bundled default city: streets on a 100 m grid (20 m wide), buildings
/// filling the blocks between them, six goals fanning out from a central
/// start. Routes follow street centerlines, so every path keeps 10 m of
/// clearance from walls.
pub fn default_map() -> CityMap {
    // Building blocks by grid cell: cell (i, j) occupies
    // [100i + 10, 100i + 90] x [100j + 10, 100j + 90].
    const BLOCKS: &[(i32, i32)] = &[
        (0, 0),
        (1, 0),
        (2, 0),
        (0, -1),
        (1, -1),
        (2, -1),
        (-1, 0),
        (-1, -1),
        (0, 1),
        (-1, 1),
        (1, 1),
        (-2, 0),
        (-2, -1),
        (-2, -2),
        (-1, -2),
        (0, -2),
        (-1, -3),
        (-2, -3),
        (-3, 0),
        (-3, 1),
        (-4, 1),
    ];
    let mut walls = Vec::with_capacity(BLOCKS.len() * 4);
    for &(i, j) in BLOCKS {
        let x0 = i as f64 * 100.0 + 10.0;
        let x1 = i as f64 * 100.0 + 90.0;
        let y0 = j as f64 * 100.0 + 10.0;
        let y1 = j as f64 * 100.0 + 90.0;
        walls.push(Wall {
            a: [x0, y0],
            b: [x1, y0],
        });
        walls.push(Wall {
            a: [x1, y0],
            b: [x1, y1],
        });
        walls.push(Wall {
            a: [x1, y1],
            b: [x0, y1],
        });
        walls.push(Wall {
            a: [x0, y1],
            b: [x0, y0],
        });
    }

    let goal_specs: &[(&str, &str, [f64; 2], &[[f64; 2]])] = &[
        (
            "pizzeria",
            "Pizzeria",
            [320.0, 0.0],
            &[[0.0, 0.0], [320.0, 0.0]],
        ),
        (
            "library",
            "Library",
            [160.0, 200.0],
            &[[0.0, 0.0], [0.0, 200.0], [160.0, 200.0]],
        ),
        (
            "cinema",
            "Cinema",
            [-200.0, -200.0],
            &[[0.0, 0.0], [-200.0, 0.0], [-200.0, -200.0]],
        ),
        (
            "market",
            "Market",
            [240.0, 200.0],
            &[[0.0, 0.0], [100.0, 0.0], [100.0, 200.0], [240.0, 200.0]],
        ),
        (
            "museum",
            "Museum",
            [-180.0, -300.0],
            &[[0.0, 0.0], [0.0, -300.0], [-180.0, -300.0]],
        ),
        (
            "harbor",
            "Harbor",
            [-300.0, 210.0],
            &[
                [0.0, 0.0],
                [-100.0, 0.0],
                [-100.0, 100.0],
                [-300.0, 100.0],
                [-300.0, 210.0],
            ],
        ),
    ];

    let mut goals = Vec::new();
    let mut guidance = BTreeMap::new();
    for (id, name, center, path) in goal_specs {
        goals.push(GoalZone {
            id: id.to_string(),
            name: name.to_string(),
            center: *center,
            radius: DEFAULT_GOAL_RADIUS,
        });
        guidance.insert(id.to_string(), path.to_vec());
    }

    let map = CityMap {
        start: StartPose {
            x: 0.0,
            y: 0.0,
            heading_deg: 0.0,
        },
        goals,
        walls,
        guidance,
    };
    debug_assert!(map.validate().is_ok());
    map
}
