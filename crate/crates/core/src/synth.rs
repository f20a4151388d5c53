//! Deterministic synthetic fixtures: a riverside town scene, ten episodes
//! with reference routes, and scripted replies that replay those routes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{normalize_angle, UavPose};
use crate::legend::{LabelId, Legend};
use crate::planner::serialize_action;
use crate::world::{apply_action, Action, ActionLimits, ActionVerb, Canopy, Episode, Scene};

pub const ROAD: LabelId = LabelId(1);
pub const BUILDING: LabelId = LabelId(2);
pub const RIVER: LabelId = LabelId(3);
pub const TREE: LabelId = LabelId(4);
pub const GRASS: LabelId = LabelId(5);
pub const PARKING: LabelId = LabelId(6);
pub const WATER: LabelId = LabelId(7);

pub const CELL: f64 = 5.0;
pub const SIDE: usize = 128;
pub const START_ALTITUDE: f64 = 5.0;
pub const CRUISE_ALTITUDE: f64 = 40.0;
/// Action budget left over after the reference route.
pub const SLACK_ACTIONS: usize = 10;
const SEED: u64 = 0x5EED_2024;

pub fn riverside_legend() -> Legend {
    [
        (1, "road"),
        (2, "building"),
        (3, "river"),
        (4, "tree"),
        (5, "grass"),
        (6, "parking lot"),
        (7, "water"),
    ]
    .into_iter()
    .collect()
}

fn river_center(y: f64) -> f64 {
    300.0 + 20.0 * (y / 80.0).sin()
}

fn base_label(x: f64, y: f64) -> LabelId {
    let on_road = (200.0..215.0).contains(&y)
        || (120.0..135.0).contains(&x)
        || ((440.0..455.0).contains(&y) && x >= 300.0);
    if on_road {
        ROAD
    } else if (x - river_center(y)).abs() < 15.0 {
        RIVER
    } else if (x - 500.0).hypot(y - 500.0) < 45.0 {
        WATER
    } else if (160.0..220.0).contains(&x) && (230.0..270.0).contains(&y) {
        PARKING
    } else {
        GRASS
    }
}

/// 640 m square town: two crossing roads plus a northern road, a
/// meandering river, a lake, a parking lot, two building districts and a
/// wooded park whose canopy hangs over grass.
pub fn riverside_scene() -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let n = SIDE * SIDE;
    let mut heights = vec![0.0; n];
    let mut labels = vec![GRASS; n];
    for j in 0..SIDE {
        for i in 0..SIDE {
            let (x, y) = ((i as f64 + 0.5) * CELL, (j as f64 + 0.5) * CELL);
            labels[j * SIDE + i] = base_label(x, y);
        }
    }
    // building footprints: 4x4-cell lots, 3x3 cells built, on grass only
    let districts = [(30usize, 12usize, 54usize, 36usize), (72, 48, 120, 84)];
    for (i0, j0, i1, j1) in districts {
        for bj in (j0..j1).step_by(4) {
            for bi in (i0..i1).step_by(4) {
                if rng.random::<f64>() < 0.25 {
                    continue;
                }
                let h = rng.random_range(12..=30) as f64;
                let cells: Vec<usize> = (bj..bj + 3)
                    .flat_map(|j| (bi..bi + 3).map(move |i| j * SIDE + i))
                    .collect();
                if cells.iter().all(|&c| labels[c] == GRASS) {
                    for c in cells {
                        labels[c] = BUILDING;
                        heights[c] = h;
                    }
                }
            }
        }
    }
    let mut scene = Scene::new(CELL, (0.0, 0.0), SIDE, SIDE, heights, labels, riverside_legend())
        .expect("generated scene is valid");
    // park canopy over grass
    for j in 60..84 {
        for i in 4..20 {
            if scene.label((i, j)) == GRASS && rng.random::<f64>() < 0.6 {
                let top = rng.random_range(9..=14) as f64;
                scene
                    .add_canopy((i, j), Canopy { bottom: 3.0, top, label: TREE })
                    .expect("canopy in bounds");
            }
        }
    }
    scene
}

/// A reference route: start, then horizontal waypoints flown at cruise
/// altitude.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpec {
    pub id: &'static str,
    pub instruction: &'static str,
    pub start: (f64, f64),
    pub yaw_degrees: f64,
    pub waypoints: &'static [(f64, f64)],
}

pub const ROUTES: [RouteSpec; 10] = [
    RouteSpec {
        id: "e01",
        instruction: "Lift off and fly east along the road, then stop above the river.",
        start: (127.0, 207.0),
        yaw_degrees: 0.0,
        waypoints: &[(300.0, 207.0)],
    },
    RouteSpec {
        id: "e02",
        instruction: "Take off, fly north along the road and stop next to the tree line.",
        start: (127.0, 207.0),
        yaw_degrees: 90.0,
        waypoints: &[(127.0, 400.0)],
    },
    RouteSpec {
        id: "e03",
        instruction: "Rise up and follow the road east to the crossroad.",
        start: (60.0, 210.0),
        yaw_degrees: 0.0,
        waypoints: &[(127.0, 210.0)],
    },
    RouteSpec {
        id: "e04",
        instruction: "Lift off over the parking lot, fly south across the road and stop at the building.",
        start: (190.0, 250.0),
        yaw_degrees: 270.0,
        waypoints: &[(190.0, 150.0)],
    },
    RouteSpec {
        id: "e05",
        instruction: "Go up, fly north along the river, then turn left and cross the river.",
        start: (340.0, 100.0),
        yaw_degrees: 90.0,
        waypoints: &[(340.0, 300.0), (260.0, 300.0)],
    },
    RouteSpec {
        id: "e06",
        instruction: "Lift off, fly east along the road, then turn left and stop above the water.",
        start: (420.0, 447.0),
        yaw_degrees: 0.0,
        waypoints: &[(500.0, 447.0), (500.0, 500.0)],
    },
    RouteSpec {
        id: "e07",
        instruction: "Take off, fly east along the road, cross the river, then turn left at the tall building and stop at the road.",
        start: (220.0, 207.0),
        yaw_degrees: 0.0,
        waypoints: &[(420.0, 207.0), (420.0, 447.0)],
    },
    RouteSpec {
        id: "e08",
        instruction: "Climb, fly west, then turn left and stop over the water.",
        start: (600.0, 600.0),
        yaw_degrees: 180.0,
        waypoints: &[(500.0, 600.0), (500.0, 500.0)],
    },
    RouteSpec {
        id: "e09",
        instruction: "Lift off and fly northeast until you reach the road.",
        start: (30.0, 30.0),
        yaw_degrees: 45.0,
        waypoints: &[(127.0, 127.0)],
    },
    RouteSpec {
        id: "e10",
        instruction: "Lift off and fly to the river.",
        start: (270.0, 207.0),
        yaw_degrees: 0.0,
        waypoints: &[(300.0, 207.0)],
    },
];

/// Splits `total` into chunks of at most `max`.
fn chunks(total: f64, max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut left = total;
    while left > 1e-9 {
        let c = left.min(max);
        out.push(c);
        left -= c;
    }
    out
}

/// Reference actions for a route: climb to cruise altitude, then for each
/// waypoint turn in whole degrees and fly in whole meters, then stop.
pub fn route_actions(spec: &RouteSpec, limits: &ActionLimits) -> Vec<Action> {
    let mut actions: Vec<Action> = chunks(CRUISE_ALTITUDE - START_ALTITUDE, limits.max_distance)
        .into_iter()
        .map(|d| Action::new(ActionVerb::Lift, 0.0, d))
        .collect();
    let (mut x, mut y) = spec.start;
    let mut yaw = spec.yaw_degrees.to_radians();
    for &(wx, wy) in spec.waypoints {
        let want = (wy - y).atan2(wx - x);
        let mut delta = normalize_angle(want - yaw).to_degrees();
        if delta > 180.0 {
            delta -= 360.0;
        }
        let delta = delta.round();
        let verb = if delta >= 0.0 { ActionVerb::Left } else { ActionVerb::Right };
        for d in chunks(delta.abs(), limits.max_degree) {
            actions.push(Action::new(verb, d, 0.0));
        }
        yaw += delta.to_radians();
        let dist = (wx - x).hypot(wy - y).round();
        for d in chunks(dist, limits.max_distance) {
            actions.push(Action::new(ActionVerb::Straight, 0.0, d));
        }
        (x, y) = (wx, wy);
    }
    actions.push(Action::stop());
    actions
}

/// Builds the episode by flying the reference actions in the scene; the goal
/// is where the route actually ends.
pub fn build_episode(scene: &Scene, spec: &RouteSpec, actions: &[Action]) -> Episode {
    let start = UavPose::at(spec.start.0, spec.start.1, START_ALTITUDE, spec.yaw_degrees.to_radians());
    let mut path = vec![start];
    let mut pose = start;
    for a in actions.iter().filter(|a| a.verb != ActionVerb::Stop) {
        let out = apply_action(scene, &pose, a);
        assert!(!out.collided, "reference route {} collides", spec.id);
        pose = out.pose;
        path.push(rounded(&pose));
    }
    let goal = pose.position();
    Episode {
        id: spec.id.to_string(),
        instruction: spec.instruction.to_string(),
        start,
        goal: nalgebra::Point3::new(round6(goal.x), round6(goal.y), round6(goal.z)),
        ground_truth_path: path,
        max_actions: actions.len() + SLACK_ACTIONS,
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Keeps fixture text tidy; sub-micrometre drift is noise.
fn rounded(p: &UavPose) -> UavPose {
    let deg = |r: f64| round6(r.to_degrees()).to_radians();
    UavPose::new(round6(p.x), round6(p.y), round6(p.z), deg(p.pitch), deg(p.roll), deg(p.yaw))
}

/// Scripted replies replaying `actions`, one section per step.
pub fn script_text(actions: &[Action]) -> String {
    let mut s = String::new();
    for (i, a) in actions.iter().enumerate() {
        s.push_str(&format!(
            "=== step {i} ===\nThought: Following the reference route.\n{}\n",
            serialize_action(a)
        ));
    }
    s
}

/// One generated fixture episode.
#[derive(Debug, Clone)]
pub struct FixtureEpisode {
    pub episode: Episode,
    pub actions: Vec<Action>,
}

pub fn riverside_suite(scene: &Scene) -> Vec<FixtureEpisode> {
    let limits = ActionLimits::default();
    ROUTES
        .iter()
        .map(|spec| {
            let actions = route_actions(spec, &limits);
            FixtureEpisode {
                episode: build_episode(scene, spec, &actions),
                actions,
            }
        })
        .collect()
}

/// `(relative path, contents)` for every fixture file.
pub fn fixture_files() -> Vec<(String, String)> {
    let scene = riverside_scene();
    let mut files = vec![("riverside.scene".to_string(), scene.to_document())];
    for f in riverside_suite(&scene) {
        let id = &f.episode.id;
        files.push((format!("episodes/{id}.episode"), f.episode.to_document()));
        files.push((format!("scripts/{id}.script"), script_text(&f.actions)));
    }
    files
}
