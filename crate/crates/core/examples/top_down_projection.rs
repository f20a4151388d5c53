//! Builds the voxel map along the first part of a reference route and prints
//! the top-down projection around the final pose.

use std::collections::BTreeSet;

use stmr::cli::ascii_map;
use stmr::eval::default_rig;
use stmr::geometry::backproject_image;
use stmr::mapping::{project_top_down, VoxelGrid, DEFAULT_VOXEL_SIZE};
use stmr::perception::{masks_to_label_image, OraclePerceptor, Perceptor};
use stmr::synth::{riverside_scene, riverside_suite};

pub struct Report {
    pub voxels: usize,
    pub cells: usize,
    pub ascii: String,
}

pub fn run() -> Report {
    let scene = riverside_scene();
    let rig = default_rig();
    let suite = riverside_suite(&scene);
    let ep = &suite.iter().find(|f| f.episode.id == "e07").expect("e07 exists").episode;
    let mut grid = VoxelGrid::new(DEFAULT_VOXEL_SIZE);
    let path = &ep.ground_truth_path;
    for (step, pose) in path.iter().take(path.len() / 2).enumerate() {
        let view = scene.render(pose, &rig).expect("pose inside the scene");
        // every mask is kept here; the agent would filter by instruction
        let masks = OraclePerceptor.perceive(&view, scene.legend(), step).expect("oracle");
        let (w, h) = view.labels.dims();
        let labels = masks_to_label_image(&masks, w, h);
        let cloud = backproject_image(&view.depth, &labels, &rig, pose).expect("shapes agree");
        grid.insert_points(&cloud, scene.legend()).expect("legend labels");
    }
    let mut map = project_top_down(&grid, &BTreeSet::new());
    let last = path[path.len() / 2 - 1];
    for w in path[..path.len() / 2].windows(2) {
        map.mark_segment(&w[0], &w[1]);
    }
    let uav = map.cell_of(last.x, last.y);
    Report {
        voxels: grid.len(),
        cells: map.labels().count(),
        ascii: ascii_map(&map, scene.legend(), uav),
    }
}

#[allow(dead_code)]
fn main() {
    let r = run();
    println!("{} voxels, {} labelled cells", r.voxels, r.cells);
    print!("{}", r.ascii);
}
