//! Pulls landmark phrases out of instructions and matches them against the
//! scene legend and against free-form mask captions with TF-IDF cosine.

use stmr::perception::{
    extract_landmarks, filter_masks, match_to_legend, PerceivedMask, RuleBasedExtractor, TfIdfCorpus,
    DEFAULT_THRESHOLD,
};
use stmr::synth::{riverside_legend, ROUTES};

pub struct Match {
    pub instruction: String,
    pub landmarks: Vec<String>,
    pub matched: Vec<(String, u32)>,
    pub missing: Vec<String>,
}

pub fn run() -> (Vec<Match>, Vec<(String, f64, bool)>) {
    let legend = riverside_legend();
    let extractor = RuleBasedExtractor::for_legend(&legend);
    let matches = ROUTES
        .iter()
        .map(|r| {
            let lms = extract_landmarks(r.instruction, &extractor).expect("non-empty instruction");
            let (matched, missing) = match_to_legend(&lms, &legend, DEFAULT_THRESHOLD);
            Match {
                instruction: r.instruction.to_string(),
                landmarks: lms.as_slice().to_vec(),
                matched: matched.into_iter().map(|(k, v)| (k, v.0)).collect(),
                missing,
            }
        })
        .collect();

    // captions a learned segmenter might produce, scored against one set
    let lms = extract_landmarks("fly past the tall building to the river", &extractor).expect("landmarks");
    let captions = ["tall building", "a white building", "river", "grass field", "building"];
    let corpus = TfIdfCorpus::new(lms.iter().chain(captions.iter().copied()));
    let masks: Vec<PerceivedMask> = captions
        .iter()
        .map(|c| PerceivedMask {
            pixels: Vec::new(),
            caption: c.to_string(),
            matched_landmark: None,
            label: None,
        })
        .collect();
    let kept: Vec<String> = filter_masks(masks, &lms, DEFAULT_THRESHOLD)
        .into_iter()
        .map(|m| m.caption)
        .collect();
    let scores = captions
        .iter()
        .map(|c| {
            let best = lms
                .iter()
                .filter_map(|l| corpus.similarity(c, l).ok())
                .fold(0.0, f64::max);
            (c.to_string(), best, kept.iter().any(|k| k == c))
        })
        .collect();
    (matches, scores)
}

#[allow(dead_code)]
fn main() {
    let (matches, scores) = run();
    for m in &matches {
        println!("{}", m.instruction);
        println!("  landmarks {:?}", m.landmarks);
        println!("  legend    {:?}", m.matched);
        if !m.missing.is_empty() {
            println!("  unmatched {:?}", m.missing);
        }
    }
    println!("\ncaption scores (threshold {DEFAULT_THRESHOLD}):");
    for (c, s, kept) in scores {
        println!("  {c:<18} {s:.3} {}", if kept { "kept" } else { "dropped" });
    }
}
