use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::geometry::UavPose;

use super::Scene;

/// Distance kept between the UAV and whatever it ran into.
pub const COLLISION_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionVerb {
    Right,
    Left,
    Lift,
    Down,
    Straight,
    Back,
    Stop,
}

impl ActionVerb {
    pub const ALL: [ActionVerb; 7] = [
        ActionVerb::Right,
        ActionVerb::Left,
        ActionVerb::Lift,
        ActionVerb::Down,
        ActionVerb::Straight,
        ActionVerb::Back,
        ActionVerb::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionVerb::Right => "right",
            ActionVerb::Left => "left",
            ActionVerb::Lift => "lift",
            ActionVerb::Down => "down",
            ActionVerb::Straight => "straight",
            ActionVerb::Back => "back",
            ActionVerb::Stop => "stop",
        }
    }
}

impl fmt::Display for ActionVerb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownVerb(pub String);

impl fmt::Display for UnknownVerb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown action verb `{}`", self.0)
    }
}

impl std::error::Error for UnknownVerb {}

impl FromStr for ActionVerb {
    type Err = UnknownVerb;

    /// Case-insensitive; also accepts `up`, `forward` and `backward`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "right" => ActionVerb::Right,
            "left" => ActionVerb::Left,
            "lift" | "up" => ActionVerb::Lift,
            "down" => ActionVerb::Down,
            "straight" | "forward" => ActionVerb::Straight,
            "back" | "backward" => ActionVerb::Back,
            "stop" => ActionVerb::Stop,
            _ => return Err(UnknownVerb(s.to_string())),
        })
    }
}

/// Per-action turn and travel limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionLimits {
    pub max_degree: f64,
    pub max_distance: f64,
}

impl Default for ActionLimits {
    fn default() -> Self {
        Self {
            max_degree: 15.0,
            max_distance: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub verb: ActionVerb,
    /// Degrees, `[0, max_degree]`.
    pub degree: f64,
    /// Meters, `[0, max_distance]`.
    pub distance: f64,
}

impl Action {
    pub fn new(verb: ActionVerb, degree: f64, distance: f64) -> Self {
        Self {
            verb,
            degree,
            distance,
        }
    }

    pub fn stop() -> Self {
        Self::new(ActionVerb::Stop, 0.0, 0.0)
    }

    pub fn is_valid(&self, limits: &ActionLimits) -> bool {
        (0.0..=limits.max_degree).contains(&self.degree)
            && (0.0..=limits.max_distance).contains(&self.distance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOutcome {
    pub pose: UavPose,
    pub collided: bool,
    /// Meters actually flown.
    pub travelled: f64,
}

/// Executes one action. Turns rotate first and then fly `distance` along the
/// new heading. Translation stops [`COLLISION_MARGIN`] short of the first
/// obstacle or flight-volume boundary on the way.
pub fn apply_action(scene: &Scene, pose: &UavPose, action: &Action) -> ActionOutcome {
    let turn = action.degree.to_radians();
    let (pose, dir) = match action.verb {
        ActionVerb::Stop => {
            return ActionOutcome {
                pose: *pose,
                collided: false,
                travelled: 0.0,
            }
        }
        ActionVerb::Left => {
            let p = pose.with_yaw(pose.yaw + turn);
            (p, p.heading())
        }
        ActionVerb::Right => {
            let p = pose.with_yaw(pose.yaw - turn);
            (p, p.heading())
        }
        ActionVerb::Straight => (*pose, pose.heading()),
        ActionVerb::Back => (*pose, -pose.heading()),
        ActionVerb::Lift => (*pose, Vector3::z()),
        ActionVerb::Down => (*pose, -Vector3::z()),
    };
    if action.distance <= 0.0 {
        return ActionOutcome {
            pose,
            collided: false,
            travelled: 0.0,
        };
    }
    let start = pose.position();
    let obstacle = scene
        .raycast(&start, &dir, action.distance + COLLISION_MARGIN)
        .map_or(f64::INFINITY, |h| h.t);
    let contact = obstacle.min(scene.bounds_exit(&start, &dir));
    let (travelled, collided) = if contact > action.distance {
        (action.distance, false)
    } else {
        ((contact - COLLISION_MARGIN).max(0.0), true)
    };
    ActionOutcome {
        pose: pose.with_position(start + dir * travelled),
        collided,
        travelled,
    }
}
