use std::fmt::Write as _;

use nalgebra::Point3;

use crate::docfmt::{self, DocError, Document};
use crate::geometry::UavPose;

use super::{Scene, WorldError};

pub const EPISODE_HEADER: &str = "stmr-episode v1";
pub const DEFAULT_MAX_ACTIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub instruction: String,
    pub start: UavPose,
    pub goal: Point3<f64>,
    pub ground_truth_path: Vec<UavPose>,
    pub max_actions: usize,
}

fn pose_from_values(v: &[f64]) -> UavPose {
    UavPose::new(
        v[0],
        v[1],
        v[2],
        v[3].to_radians(),
        v[4].to_radians(),
        v[5].to_radians(),
    )
}

/// Degrees rounded to 1e-9 so that whole-degree angles print as such.
pub(crate) fn degrees_text(radians: f64) -> f64 {
    let d = (radians.to_degrees() * 1e9).round() / 1e9;
    if d == 0.0 {
        0.0
    } else {
        d
    }
}

pub(crate) fn pose_to_text(p: &UavPose) -> String {
    format!(
        "{} {} {} {} {} {}",
        p.x,
        p.y,
        p.z,
        degrees_text(p.pitch),
        degrees_text(p.roll),
        degrees_text(p.yaw)
    )
}

fn same_pose(a: &UavPose, b: &UavPose) -> bool {
    (a.position() - b.position()).norm() < 1e-6
}

impl Episode {
    /// Parses an episode document. Poses are `x y z pitch roll yaw` with
    /// angles in degrees.
    pub fn parse(text: &str) -> Result<Episode, WorldError> {
        let (ep, errs) = parse_episode_document(text);
        match ep {
            Some(e) if errs.is_empty() => Ok(e),
            _ => Err(WorldError::Parse(errs)),
        }
    }

    pub fn to_document(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{EPISODE_HEADER}").unwrap();
        writeln!(s, "id = {}", self.id).unwrap();
        writeln!(s, "instruction = {}", self.instruction).unwrap();
        writeln!(s, "start = {}", pose_to_text(&self.start)).unwrap();
        writeln!(s, "goal = {} {} {}", self.goal.x, self.goal.y, self.goal.z).unwrap();
        writeln!(s, "max_actions = {}", self.max_actions).unwrap();
        writeln!(s, "path =").unwrap();
        for p in &self.ground_truth_path {
            writeln!(s, "{}", pose_to_text(p)).unwrap();
        }
        s
    }

    /// Violations of this episode against a scene: start, goal and every
    /// path pose must be in bounds, and the start must be in free space.
    pub fn check_against(&self, scene: &Scene) -> Vec<String> {
        let mut out = Vec::new();
        if !scene.in_bounds(&self.start.position()) {
            out.push(format!("episode {}: start outside scene bounds", self.id));
        } else if scene.is_obstacle(&self.start.position()) {
            out.push(format!("episode {}: start inside an obstacle", self.id));
        }
        if !scene.in_bounds(&self.goal) {
            out.push(format!("episode {}: goal outside scene bounds", self.id));
        }
        for (i, p) in self.ground_truth_path.iter().enumerate() {
            if !scene.in_bounds(&p.position()) {
                out.push(format!("episode {}: path pose {i} outside scene bounds", self.id));
            }
        }
        out
    }

    /// Horizontal plus vertical length of the reference path in meters.
    pub fn path_length(&self) -> f64 {
        self.ground_truth_path
            .windows(2)
            .map(|w| (w[1].position() - w[0].position()).norm())
            .sum()
    }
}

pub fn parse_episode_document(text: &str) -> (Option<Episode>, Vec<DocError>) {
    let doc = match Document::parse(text, EPISODE_HEADER) {
        Ok(d) => d,
        Err(e) => return (None, vec![e]),
    };
    let mut errs = Vec::new();
    fn take<'a>(r: Result<(usize, &'a str), DocError>, errs: &mut Vec<DocError>) -> Option<(usize, &'a str)> {
        r.map_err(|e| errs.push(e)).ok()
    }
    let id = take(doc.require_scalar("id"), &mut errs).map(|(_, s)| s.to_string());
    let instruction = take(doc.require_scalar("instruction"), &mut errs).map(|(_, s)| s.to_string());
    let start = take(doc.require_scalar("start"), &mut errs);
    let goal = take(doc.require_scalar("goal"), &mut errs);

    let start = start.and_then(|(line, s)| {
        docfmt::fixed_numbers::<f64>(line, s, 6, "start")
            .map_err(|e| errs.push(e))
            .ok()
            .map(|v| pose_from_values(&v))
    });
    let goal = goal.and_then(|(line, s)| {
        docfmt::fixed_numbers::<f64>(line, s, 3, "goal")
            .map_err(|e| errs.push(e))
            .ok()
            .map(|v| Point3::new(v[0], v[1], v[2]))
    });
    let max_actions = match doc.parsed::<usize>("max_actions") {
        Ok(Some(0)) => {
            errs.push(DocError::new(
                doc.get("max_actions").map_or(0, |e| e.line),
                "max_actions must be at least 1",
            ));
            DEFAULT_MAX_ACTIONS
        }
        Ok(v) => v.unwrap_or(DEFAULT_MAX_ACTIONS),
        Err(e) => {
            errs.push(e);
            DEFAULT_MAX_ACTIONS
        }
    };
    let mut path = Vec::new();
    match doc.require_block("path") {
        Ok(block) => {
            for (n, line) in block {
                match docfmt::fixed_numbers::<f64>(*n, line, 6, "path") {
                    Ok(v) => path.push(pose_from_values(&v)),
                    Err(e) => errs.push(e),
                }
            }
            if block.is_empty() {
                errs.push(DocError::new(
                    doc.get("path").map_or(0, |e| e.line),
                    "path must not be empty",
                ));
            }
        }
        Err(e) => errs.push(e),
    }
    if let Some(inst) = &instruction {
        if inst.trim().is_empty() {
            errs.push(DocError::new(0, "instruction must not be empty"));
        }
    }
    if let (Some(s), Some(first)) = (&start, path.first()) {
        if !same_pose(s, first) {
            errs.push(DocError::new(
                doc.get("path").map_or(0, |e| e.line),
                "path must begin at start",
            ));
        }
    }
    let (Some(id), Some(instruction), Some(start), Some(goal)) = (id, instruction, start, goal)
    else {
        return (None, errs);
    };
    (
        Some(Episode {
            id,
            instruction,
            start,
            goal,
            ground_truth_path: path,
            max_actions,
        }),
        errs,
    )
}
