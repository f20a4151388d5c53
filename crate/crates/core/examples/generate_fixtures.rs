//! Regenerates the bundled riverside fixtures (scene, episodes, reference
//! scripts). Writes into `fixtures/` of this crate, or into the directory
//! given as the first argument.

use std::path::PathBuf;

use stmr::synth::fixture_files;

pub fn run() -> Vec<(String, String)> {
    fixture_files()
}

#[allow(dead_code)]
fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    for (rel, contents) in run() {
        let path = out.join(rel);
        std::fs::create_dir_all(path.parent().expect("file has a parent"))?;
        std::fs::write(&path, contents)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
