//! Loads the bundled fixture files and replays the reference scripts through
//! the full agent loop, writing traces to a temporary directory.

use std::path::{Path, PathBuf};

use stmr::cli::{load_episode_file, load_scene_file};
use stmr::eval::{results_table, write_suite, AgentConfig, EpisodeResult, Harness};
use stmr::perception::{OraclePerceptor, RuleBasedExtractor};
use stmr::planner::ScriptedBackend;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn run_into(out: Option<&Path>) -> Vec<EpisodeResult> {
    let dir = fixtures();
    let scene = load_scene_file(&dir.join("riverside.scene")).expect("bundled scene");
    let episodes: Vec<_> = ["e03", "e07", "e10"]
        .iter()
        .map(|id| load_episode_file(&dir.join("episodes").join(format!("{id}.episode"))).expect("bundled episode"))
        .collect();
    let backend = ScriptedBackend::load(&dir.join("scripts")).expect("bundled scripts");
    let extractor = RuleBasedExtractor::for_legend(scene.legend());
    let config = AgentConfig::default();
    let harness = Harness {
        scene: &scene,
        perceptor: &OraclePerceptor,
        backend: &backend,
        extractor: &extractor,
        config: &config,
    };
    let results = harness.run_suite(&episodes, 2).expect("thread pool");
    if let Some(out) = out {
        write_suite(out, &results).expect("trace directory writable");
    }
    results
}

pub fn run() -> Vec<EpisodeResult> {
    run_into(None)
}

#[allow(dead_code)]
fn main() {
    let out = std::env::temp_dir().join("stmr-scripted-episode");
    let results = run_into(Some(&out));
    print!("{}", results_table(&results).expect("non-empty"));
    println!("traces in {}", out.display());
}
