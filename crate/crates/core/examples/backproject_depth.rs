//! Renders one depth view of the riverside scene, lifts every pixel into the
//! world and projects it back to check the pixel it came from.

use stmr::eval::default_rig;
use stmr::geometry::{backproject_pixel, camera_to_world, project_to_pixel, UavPose};
use stmr::synth::riverside_scene;

pub struct Report {
    pub points: usize,
    pub max_pixel_error: f64,
    pub nearest: f64,
    pub farthest: f64,
}

pub fn run() -> Report {
    let scene = riverside_scene();
    let rig = default_rig();
    let pose = UavPose::at(300.0, 200.0, 40.0, 0.0);
    let view = scene.render(&pose, &rig).expect("pose inside the scene");
    let k = &rig.intrinsics;
    let r = rig.camera_rotation(&pose);
    let mut report = Report {
        points: 0,
        max_pixel_error: 0.0,
        nearest: f64::INFINITY,
        farthest: 0.0,
    };
    for (u, v, &d) in view.depth.enumerate() {
        if !(d.is_finite() && d > 0.0 && d <= rig.max_range) {
            continue;
        }
        let cam = backproject_pixel(u as f64, v as f64, d, k).expect("valid pixel");
        let world = camera_to_world(&cam, &pose, &rig.mount).expect("finite pose");
        // back into the camera frame and through the pinhole again
        let back = r.inverse() * (world - pose.position());
        let (pu, pv, z) = project_to_pixel(&back.into(), k).expect("in front of the camera");
        let err = (pu - u as f64).abs().max((pv - v as f64).abs()).max((z - d).abs());
        report.max_pixel_error = report.max_pixel_error.max(err);
        let range = (world - pose.position()).norm();
        report.nearest = report.nearest.min(range);
        report.farthest = report.farthest.max(range);
        report.points += 1;
    }
    report
}

#[allow(dead_code)]
fn main() {
    let r = run();
    println!("{} points lifted", r.points);
    println!("range {:.1} .. {:.1} m", r.nearest, r.farthest);
    println!("worst round-trip error {:.2e}", r.max_pixel_error);
}
