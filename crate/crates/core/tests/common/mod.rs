//! Brute-force oracles shared by the integration tests. They are written
//! from the definitions, not from the library code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use stmr::legend::{LabelId, Legend};
use stmr::mapping::{CellKey, VoxelGrid, VoxelKey};
use stmr::stmr::LocalWindow;

pub fn riverside_legend() -> Legend {
    stmr::synth::riverside_legend()
}

/// Column scan: walk every column from the highest occupied level down.
/// The first sub-goal voxel met wins; without one, the first voxel met.
pub fn brute_force_projection(
    voxels: &BTreeMap<VoxelKey, LabelId>,
    subgoals: &BTreeSet<LabelId>,
) -> BTreeMap<CellKey, LabelId> {
    let (mut zmin, mut zmax) = (i64::MAX, i64::MIN);
    let mut columns: BTreeSet<CellKey> = BTreeSet::new();
    for &(i, j, k) in voxels.keys() {
        zmin = zmin.min(k);
        zmax = zmax.max(k);
        columns.insert((i, j));
    }
    let mut out = BTreeMap::new();
    for (i, j) in columns {
        let mut top = None;
        let mut goal = None;
        let mut k = zmax;
        while k >= zmin {
            if let Some(&l) = voxels.get(&(i, j, k)) {
                top.get_or_insert(l);
                if goal.is_none() && subgoals.contains(&l) {
                    goal = Some(l);
                }
            }
            k -= 1;
        }
        out.insert((i, j), goal.or(top).expect("column has a voxel"));
    }
    out
}

/// Grid whose voxels each hold a single-label histogram.
pub fn grid_from(voxels: &BTreeMap<VoxelKey, LabelId>, voxel_size: f64) -> VoxelGrid {
    let mut g = VoxelGrid::new(voxel_size);
    for (&k, &l) in voxels {
        g.add(k, l, 1);
    }
    g
}

/// Block histogram, arg-max with the lower id on ties, then the trajectory
/// and sub-goal rules.
pub fn pool_oracle(window: &LocalWindow, size: usize, subgoals: &BTreeSet<LabelId>) -> Vec<i32> {
    let n = window.side / size;
    let mut out = Vec::with_capacity(size * size);
    for mr in 0..size {
        for mc in 0..size {
            let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
            let mut traj = false;
            for r in 0..n {
                for c in 0..n {
                    let (row, col) = (mr * n + r, mc * n + c);
                    traj |= window.trajectory[row * window.side + col];
                    let l = window.labels[row * window.side + col].0;
                    if l != 0 {
                        *hist.entry(l).or_default() += 1;
                    }
                }
            }
            let best = hist.values().copied().max();
            let winner = best.and_then(|b| hist.iter().find(|(_, &c)| c == b).map(|(&l, _)| l));
            out.push(match winner {
                Some(w) if subgoals.contains(&LabelId(w)) => w as i32,
                _ if traj => -1,
                Some(w) => w as i32,
                None => 0,
            });
        }
    }
    out
}

/// Plain TF-IDF cosine: raw counts times `ln(N / (1 + df)) + 1`.
pub fn tfidf_oracle(a: &str, b: &str, corpus: &[&str]) -> f64 {
    let tok = |s: &str| -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    };
    let n = corpus.len() as f64;
    let idf = |t: &str| {
        let df = corpus.iter().filter(|d| tok(d).iter().any(|x| x == t)).count() as f64;
        (n / (1.0 + df)).ln() + 1.0
    };
    let vec = |s: &str| {
        let mut v: BTreeMap<String, f64> = BTreeMap::new();
        for t in tok(s) {
            *v.entry(t).or_default() += 1.0;
        }
        for (t, w) in v.iter_mut() {
            *w *= idf(t);
        }
        v
    };
    let (va, vb) = (vec(a), vec(b));
    let dot: f64 = va.iter().map(|(t, x)| x * vb.get(t).unwrap_or(&0.0)).sum();
    let norm = |v: &BTreeMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(&va) * norm(&vb))
}

/// The bundled suite replayed with its reference scripts.
pub fn run_reference_suite(config: &stmr::eval::AgentConfig, parallel: usize) -> Vec<stmr::eval::EpisodeResult> {
    run_reference(config, parallel, &[])
}

/// Like [`run_reference_suite`] restricted to `ids`; all episodes when empty.
pub fn run_reference(config: &stmr::eval::AgentConfig, parallel: usize, ids: &[&str]) -> Vec<stmr::eval::EpisodeResult> {
    use stmr::perception::{OraclePerceptor, RuleBasedExtractor};
    use stmr::planner::{parse_script, ScriptedBackend};
    use stmr::synth::{riverside_scene, riverside_suite, script_text};

    let scene = riverside_scene();
    let suite = riverside_suite(&scene);
    let mut backend = ScriptedBackend::new();
    for f in &suite {
        backend = backend.with_script(f.episode.id.clone(), parse_script(&script_text(&f.actions)).unwrap());
    }
    let extractor = RuleBasedExtractor::for_legend(scene.legend());
    let episodes: Vec<_> = suite
        .into_iter()
        .map(|f| f.episode)
        .filter(|e| ids.is_empty() || ids.contains(&e.id.as_str()))
        .collect();
    let harness = stmr::eval::Harness {
        scene: &scene,
        perceptor: &OraclePerceptor,
        backend: &backend,
        extractor: &extractor,
        config,
    };
    harness.run_suite(&episodes, parallel).unwrap()
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Compares against `tests/golden/<name>`; with `STMR_BLESS=1` the file is
/// rewritten instead.
pub fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var("STMR_BLESS").is_ok_and(|v| v == "1") {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with STMR_BLESS=1 to create it", path.display()));
    assert!(expected == actual, "{name} differs from its golden file; rerun with STMR_BLESS=1 if the change is intended\n--- actual ---\n{actual}");
}
