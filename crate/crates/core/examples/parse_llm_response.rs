//! Parses model replies in the Thought / Observation / Plan / Action format,
//! including sloppy and broken ones.

use stmr::planner::{parse_response, serialize_action};
use stmr::world::ActionLimits;

pub const REPLIES: &[&str] = &[
    "Thought: the road runs east.\nObservation: road ahead.\nPlan:\n1. (Completed) Take off.\n2. (In Process) Fly east along the road.\nAction: (straight), (0 degrees), (10 meters)",
    "**Thought:** turn toward the river\n**Action:** turn left by 30 degrees",
    "Thought: climbing.\nAction: lift 25m",
    "Thought: done.\nAction: stop",
    "Action: (left), (90 degrees)",
    "Thought: I am not sure what to do.",
    "Action: fly sideways 10 meters",
];

pub fn run() -> Vec<(String, Result<String, String>)> {
    let limits = ActionLimits::default();
    REPLIES
        .iter()
        .map(|raw| {
            let outcome = parse_response(raw, &limits)
                .map(|r| {
                    let mut s = serialize_action(&r.action);
                    for n in &r.notes {
                        s.push_str(&format!(" [{n}]"));
                    }
                    s
                })
                .map_err(|e| e.to_string());
            (raw.lines().last().unwrap_or_default().to_string(), outcome)
        })
        .collect()
}

#[allow(dead_code)]
fn main() {
    for (line, outcome) in run() {
        match outcome {
            Ok(a) => println!("{line:<40} -> {a}"),
            Err(e) => println!("{line:<40} !! {e}"),
        }
    }
}
