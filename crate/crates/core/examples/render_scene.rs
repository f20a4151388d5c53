//! Renders the label image seen from a few poses and prints it as text, one
//! character per pixel.

use stmr::eval::default_rig;
use stmr::geometry::{LabelImage, UavPose};
use stmr::synth::riverside_scene;

fn glyph(id: u32) -> char {
    match id {
        0 => ' ',
        n if n < 10 => char::from_digit(n, 10).expect("single digit"),
        _ => '#',
    }
}

pub fn ascii(labels: &LabelImage) -> String {
    let mut s = String::new();
    for v in 0..labels.height() {
        for u in 0..labels.width() {
            s.push(glyph(labels.get(u, v).0));
        }
        s.push('\n');
    }
    s
}

pub fn run() -> Vec<(String, String)> {
    let scene = riverside_scene();
    let rig = default_rig();
    let poses = [
        ("over the bridge, facing east", UavPose::at(300.0, 207.0, 40.0, 0.0)),
        ("above the lake, facing north", UavPose::at(500.0, 440.0, 40.0, 90f64.to_radians())),
        ("by the towers, facing west", UavPose::at(300.0, 300.0, 40.0, 180f64.to_radians())),
    ];
    poses
        .iter()
        .map(|(name, pose)| {
            let view = scene.render(pose, &rig).expect("pose inside the scene");
            (name.to_string(), ascii(&view.labels))
        })
        .collect()
}

#[allow(dead_code)]
fn main() {
    let scene = riverside_scene();
    let key: Vec<String> = scene.legend().iter().map(|(id, n)| format!("{}={n}", id.0)).collect();
    println!("{}", key.join(" "));
    for (name, art) in run() {
        println!("\n{name}\n{art}");
    }
}
