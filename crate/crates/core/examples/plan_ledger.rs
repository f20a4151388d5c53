//! Decomposes an instruction into sub-goals and advances the ledger as
//! landmarks show up next to the UAV in hand-made matrices.

use stmr::geometry::UavPose;
use stmr::plan::{decompose_instruction, reconcile, PlanStrategy, PlanTracker};
use stmr::perception::{RuleBasedExtractor, DEFAULT_THRESHOLD};
use stmr::stmr::{Orientation, StmrMatrix, DEFAULT_CELL_METRIC, DEFAULT_MATRIX_SIZE};
use stmr::synth::{riverside_legend, BUILDING, RIVER, ROAD};

fn matrix_with_neighbor(label: Option<i32>) -> StmrMatrix {
    let n = DEFAULT_MATRIX_SIZE;
    let mut m = StmrMatrix {
        size: n,
        cells: vec![0; n * n],
        legend: riverside_legend(),
        orientation: Orientation::from_pose(&UavPose::at(0.0, 0.0, 40.0, 0.0)),
        cell_metric: DEFAULT_CELL_METRIC,
    };
    if let Some(l) = label {
        m.set(n / 2, n / 2 + 1, l);
    }
    m
}

pub fn run() -> Vec<String> {
    let legend = riverside_legend();
    let extractor = RuleBasedExtractor::for_legend(&legend);
    let instruction = "Take off, fly east along the road, cross the river, then turn left at the tall building and stop at the road.";
    let plan = decompose_instruction(instruction, &extractor).expect("instruction has clauses");
    let mut tracker = PlanTracker::new(PlanStrategy::Stateful, plan);
    let mut frames = vec![tracker.state().to_text()];

    // the model reports the take-off done; nothing on the map can confirm it
    let notes = tracker.reconcile("1. (Completed) Take off.\n2. (In Process) Fly east along the road.");
    frames.push(format!("{}notes: {notes:?}\n", tracker.state().to_text()));

    let sightings = [None, Some(ROAD.0 as i32), Some(RIVER.0 as i32), Some(BUILDING.0 as i32)];
    for s in sightings {
        tracker.step(&matrix_with_neighbor(s), &legend, DEFAULT_THRESHOLD);
        frames.push(tracker.state().to_text());
    }

    // the ledger, not the model, decides landmark-backed sub-goals
    let mut copy = tracker.state().clone();
    let notes = reconcile(&mut copy, "1. (Completed) Take off.\n2. (Completed) x.\n3. (Completed) x.\n4. (Completed) x.\n5. (Completed) x.");
    frames.push(format!("overclaiming reply: {notes:?}\n"));
    frames
}

#[allow(dead_code)]
fn main() {
    for f in run() {
        println!("{f}");
    }
}
