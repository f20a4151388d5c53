//! Episode runner, metrics and result reporting.

mod runner;
mod trace;

pub use runner::*;
pub use trace::*;

use std::fmt;
use std::fmt::Write as _;

use nalgebra::Point3;
use thiserror::Error;

use crate::geometry::UavPose;
use crate::world::Action;

pub const DEFAULT_SUCCESS_RADIUS: f64 = 20.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no results to aggregate")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace: {0}")]
    Trace(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    StopAction,
    MaxActions,
    Error,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::StopAction => "stop-action",
            StopReason::MaxActions => "max-actions",
            StopReason::Error => "error",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 3D Euclidean distance.
pub fn navigation_error(stop: &Point3<f64>, goal: &Point3<f64>) -> f64 {
    (stop - goal).norm()
}

/// Deliberately stopped strictly inside the radius.
pub fn success(ne: f64, stopped_by: StopReason, radius: f64) -> bool {
    ne < radius && stopped_by == StopReason::StopAction
}

/// Distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Closest approach of the piecewise-linear trajectory to the goal.
pub fn closest_approach(trajectory: &[UavPose], goal: &Point3<f64>) -> f64 {
    match trajectory {
        [] => f64::INFINITY,
        [only] => navigation_error(&only.position(), goal),
        _ => trajectory
            .windows(2)
            .map(|w| point_segment_distance(goal, &w[0].position(), &w[1].position()))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Some point of the flown path, including between waypoints, came
/// strictly within the radius.
pub fn oracle_success(trajectory: &[UavPose], goal: &Point3<f64>, radius: f64) -> bool {
    closest_approach(trajectory, goal) < radius
}

/// Everything recorded for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    /// Pose when the prompt was built.
    pub pose: UavPose,
    pub prompt: String,
    /// Raw replies, one per attempt.
    pub responses: Vec<String>,
    pub transcripts: Vec<String>,
    pub action: Action,
    /// Clamping, plan reconciliation, fallback and collision notes.
    pub notes: Vec<String>,
    /// Serialized matrix for this step, whatever the prompt encoder.
    pub matrix_text: String,
    /// Full top-down map snapshot.
    pub map_dump: String,
    pub plan_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub trajectory: Vec<UavPose>,
    pub stop_pose: UavPose,
    pub stopped_by: StopReason,
    pub error: Option<String>,
    pub ne: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub steps: Vec<StepTrace>,
}

impl EpisodeResult {
    /// Actions executed, not counting the final stop.
    pub fn actions_taken(&self) -> usize {
        self.trajectory.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub episodes: usize,
    pub mean_ne: f64,
    /// Percent.
    pub sr: f64,
    /// Percent.
    pub osr: f64,
}

pub fn aggregate(results: &[EpisodeResult]) -> Result<Summary, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = results.len() as f64;
    let pct = |k: usize| 100.0 * k as f64 / n;
    Ok(Summary {
        episodes: results.len(),
        mean_ne: results.iter().map(|r| r.ne).sum::<f64>() / n,
        sr: pct(results.iter().filter(|r| r.success).count()),
        osr: pct(results.iter().filter(|r| r.oracle_success).count()),
    })
}

/// `episode_id,ne,success,oracle_success,steps,stopped_by`, NE to 3 decimals.
pub fn results_csv(results: &[EpisodeResult]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode_id", "ne", "success", "oracle_success", "steps", "stopped_by"])?;
    for r in results {
        w.write_record([
            r.episode_id.clone(),
            format!("{:.3}", r.ne),
            r.success.to_string(),
            r.oracle_success.to_string(),
            r.steps.len().to_string(),
            r.stopped_by.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Human-readable table with NE/m, SR/% and OSR/% columns.
pub fn results_table(results: &[EpisodeResult]) -> Result<String, EvalError> {
    let s = aggregate(results)?;
    let mut out = String::new();
    let width = results.iter().map(|r| r.episode_id.len()).max().unwrap_or(0).max(7);
    writeln!(out, "{:<width$}  {:>8}  {:>6}  {:>6}  {:>5}  stopped_by", "episode", "NE/m", "SR/%", "OSR/%", "steps").unwrap();
    for r in results {
        let pct = |b: bool| if b { "100" } else { "0" };
        writeln!(
            out,
            "{:<width$}  {:>8.1}  {:>6}  {:>6}  {:>5}  {}",
            r.episode_id,
            r.ne,
            pct(r.success),
            pct(r.oracle_success),
            r.steps.len(),
            r.stopped_by
        )
        .unwrap();
    }
    writeln!(out, "{:<width$}  {:>8.1}  {:>6.1}  {:>6.1}", "overall", s.mean_ne, s.sr, s.osr).unwrap();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(ne: f64, success: bool, oracle: bool) -> EpisodeResult {
        let p = UavPose::at(0.0, 0.0, 0.0, 0.0);
        EpisodeResult {
            episode_id: "e".into(),
            trajectory: vec![p],
            stop_pose: p,
            stopped_by: StopReason::StopAction,
            error: None,
            ne,
            success,
            oracle_success: oracle,
            steps: vec![],
        }
    }

    #[test]
    fn ne_examples() {
        let o = Point3::origin();
        assert_eq!(navigation_error(&o, &o), 0.0);
        assert_eq!(navigation_error(&Point3::new(20.0, 0.0, 0.0), &o), 20.0);
        assert_eq!(navigation_error(&Point3::new(3.0, 4.0, 12.0), &o), 13.0);
    }

    #[test]
    fn success_rule() {
        assert!(success(19.9, StopReason::StopAction, 20.0));
        assert!(!success(5.0, StopReason::MaxActions, 20.0));
        assert!(!success(20.0, StopReason::StopAction, 20.0));
    }

    #[test]
    fn oracle_mid_segment() {
        let traj = [UavPose::at(-50.0, 10.0, 0.0, 0.0), UavPose::at(50.0, 10.0, 0.0, 0.0)];
        let goal = Point3::origin();
        assert!((closest_approach(&traj, &goal) - 10.0).abs() < 1e-12);
        assert!(oracle_success(&traj, &goal, 20.0));
        let far = [UavPose::at(-50.0, 30.0, 0.0, 0.0), UavPose::at(50.0, 30.0, 0.0, 0.0)];
        assert!(!oracle_success(&far, &goal, 20.0));
    }

    #[test]
    fn aggregate_percentages() {
        let rs: Vec<_> = (0..10).map(|i| result(i as f64, i < 4, i < 7)).collect();
        let s = aggregate(&rs).unwrap();
        assert_eq!((s.sr, s.osr, s.mean_ne), (40.0, 70.0, 4.5));
        let s = aggregate(&[result(0.0, true, true)]).unwrap();
        assert_eq!((s.mean_ne, s.sr, s.osr), (0.0, 100.0, 100.0));
        assert!(matches!(aggregate(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn csv_layout() {
        let csv = results_csv(&[result(1.23456, true, true)]).unwrap();
        assert_eq!(csv, "episode_id,ne,success,oracle_success,steps,stopped_by\ne,1.235,true,true,0,stop-action\n");
        assert!(results_table(&[result(1.0, false, true)]).unwrap().contains("overall"));
    }
}
