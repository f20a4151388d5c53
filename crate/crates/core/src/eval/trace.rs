use std::fs;
use std::path::{Path, PathBuf};

use crate::geometry::UavPose;
use crate::planner::serialize_action;
use crate::world::pose_to_text;

use super::{results_csv, results_table, EpisodeResult, EvalError};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

fn pose_line(p: &UavPose) -> String {
    pose_to_text(p) + "\n"
}

/// Pose from a `pose.txt` line: `x y z pitch roll yaw`, angles in degrees.
pub fn parse_pose_line(text: &str) -> Option<UavPose> {
    let v: Vec<f64> = text.split_whitespace().map(|t| t.parse().ok()).collect::<Option<_>>()?;
    (v.len() == 6).then(|| {
        UavPose::new(v[0], v[1], v[2], v[3].to_radians(), v[4].to_radians(), v[5].to_radians())
    })
}

pub fn step_dir(out: &Path, episode_id: &str, step: usize) -> PathBuf {
    out.join(episode_id).join(format!("step_{step}"))
}

/// Writes `<out>/<episode-id>/step_<n>/{prompt,response,matrix,pose,map,plan,action}.txt`
/// plus `exchange.json` when the backend produced a wire transcript.
pub fn write_episode_trace(out: &Path, result: &EpisodeResult) -> Result<(), EvalError> {
    let ep_dir = out.join(&result.episode_id);
    if ep_dir.exists() {
        fs::remove_dir_all(&ep_dir)?;
    }
    for s in &result.steps {
        let dir = step_dir(out, &result.episode_id, s.step);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("prompt.txt"), &s.prompt)?;
        let response = if s.responses.len() == 1 {
            s.responses[0].clone()
        } else {
            s.responses
                .iter()
                .enumerate()
                .map(|(i, r)| format!("=== attempt {i} ===\n{r}"))
                .collect()
        };
        fs::write(dir.join("response.txt"), response)?;
        fs::write(dir.join("matrix.txt"), &s.matrix_text)?;
        fs::write(dir.join("pose.txt"), pose_line(&s.pose))?;
        fs::write(dir.join("map.txt"), &s.map_dump)?;
        fs::write(dir.join("plan.txt"), &s.plan_text)?;
        let mut action = serialize_action(&s.action) + "\n";
        for n in &s.notes {
            action.push_str(&format!("note: {n}\n"));
        }
        fs::write(dir.join("action.txt"), action)?;
        if !s.transcripts.is_empty() {
            fs::write(dir.join("exchange.json"), s.transcripts.join("\n"))?;
        }
    }
    let mut outcome = format!(
        "stopped_by = {}\nne = {:.3}\nsuccess = {}\noracle_success = {}\nstop_pose = {}",
        result.stopped_by,
        result.ne,
        result.success,
        result.oracle_success,
        pose_line(&result.stop_pose)
    );
    if let Some(e) = &result.error {
        outcome.push_str(&format!("error = {e}\n"));
    }
    fs::create_dir_all(&ep_dir)?;
    fs::write(ep_dir.join("outcome.txt"), outcome)?;
    Ok(())
}

/// Traces for every episode plus `results.csv` and `summary.txt`.
pub fn write_suite(out: &Path, results: &[EpisodeResult]) -> Result<(), EvalError> {
    fs::create_dir_all(out)?;
    for r in results {
        write_episode_trace(out, r)?;
    }
    fs::write(out.join(RESULTS_CSV), results_csv(results)?)?;
    fs::write(out.join(SUMMARY_TXT), results_table(results)?)?;
    Ok(())
}

/// One recorded step read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub pose: UavPose,
    pub matrix_text: String,
    pub map_dump: String,
}

/// Number of `step_<n>` directories in an episode trace.
pub fn count_steps(episode_dir: &Path) -> Result<usize, EvalError> {
    let mut n = 0;
    while episode_dir.join(format!("step_{n}")).is_dir() {
        n += 1;
    }
    if n == 0 && !episode_dir.is_dir() {
        return Err(EvalError::Trace(format!("{} is not a trace directory", episode_dir.display())));
    }
    Ok(n)
}

pub fn read_step(episode_dir: &Path, step: usize) -> Result<StepRecord, EvalError> {
    let dir = episode_dir.join(format!("step_{step}"));
    let read = |name: &str| {
        fs::read_to_string(dir.join(name))
            .map_err(|e| EvalError::Trace(format!("{}: {e}", dir.join(name).display())))
    };
    let pose_text = read("pose.txt")?;
    let pose = parse_pose_line(&pose_text)
        .ok_or_else(|| EvalError::Trace(format!("{}: bad pose", dir.display())))?;
    Ok(StepRecord {
        pose,
        matrix_text: read("matrix.txt")?,
        map_dump: read("map.txt")?,
    })
}
