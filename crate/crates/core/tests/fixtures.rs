//! The bundled fixtures are what the generator produces, and the generator
//! output is frozen by digest.

use std::path::Path;

use sha2::{Digest, Sha256};
use stmr::cli::cmd_validate;
use stmr::synth::fixture_files;
use stmr::world::{Episode, Scene};

const FROZEN: &str = "5c11bd172f53aff572ea77eb5ec6d1e712e98407377c844cb1076245cbebd80a";

fn dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[test]
fn generator_output_is_frozen() {
    let mut files = fixture_files();
    files.sort();
    let mut h = Sha256::new();
    for (rel, contents) in &files {
        h.update(rel.as_bytes());
        h.update(b"\n");
        h.update(contents.as_bytes());
    }
    assert_eq!(hex::encode(h.finalize()), FROZEN);
}

#[test]
fn bundle_equals_generator() {
    for (rel, contents) in fixture_files() {
        let disk = std::fs::read_to_string(dir().join(&rel)).unwrap();
        assert!(disk == contents, "{rel} differs from generator output");
    }
}

#[test]
fn bundle_parses_and_validates() {
    let scene = Scene::parse(&std::fs::read_to_string(dir().join("riverside.scene")).unwrap()).unwrap();
    assert_eq!(scene.dims(), (128, 128));
    let mut paths = vec![dir().join("riverside.scene")];
    for i in 1..=10 {
        let p = dir().join(format!("episodes/e{i:02}.episode"));
        let ep = Episode::parse(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert!(ep.check_against(&scene).is_empty(), "{}", ep.id);
        paths.push(p);
    }
    let (report, violations) = cmd_validate(&paths).unwrap();
    assert_eq!(violations, 0, "{report}");
}
