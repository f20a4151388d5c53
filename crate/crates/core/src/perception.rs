//! Landmark extraction, TF-IDF caption matching and perceptor backends.
//!
//! TF-IDF details: text is lowercased and split on non-alphanumerics with no
//! stemming; term frequency is the raw count; inverse document frequency is
//! `ln(N / (1 + df)) + 1` over the supplied corpus. Similarity is the cosine
//! of the two weighted vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Image, LabelImage};
use crate::legend::{LabelId, Legend};
use crate::world::View;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("similarity undefined: `{0}` has no tokens")]
    UndefinedSimilarity(String),
    #[error("TF-IDF corpus is empty")]
    EmptyCorpus,
    #[error("perception backend failed: {message}")]
    Backend { message: String, raw: String },
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn term_counts(text: &str) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tokenize(text) {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Document frequencies over a fixed document set.
#[derive(Debug, Clone)]
pub struct TfIdfCorpus {
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl TfIdfCorpus {
    pub fn new<I, S>(docs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut n_docs = 0;
        let mut df = HashMap::new();
        for d in docs {
            n_docs += 1;
            let unique: BTreeSet<String> = tokenize(d.as_ref()).into_iter().collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        Self { n_docs, df }
    }

    pub fn len(&self) -> usize {
        self.n_docs
    }

    pub fn is_empty(&self) -> bool {
        self.n_docs == 0
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0);
        (self.n_docs as f64 / (1.0 + df as f64)).ln() + 1.0
    }

    fn weights(&self, counts: &BTreeMap<String, usize>) -> BTreeMap<String, f64> {
        counts
            .iter()
            .map(|(t, &c)| (t.clone(), c as f64 * self.idf(t)))
            .collect()
    }

    /// Cosine similarity in `[0, 1]`. Documents with identical term counts
    /// score exactly `1.0`.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, PerceptionError> {
        if self.is_empty() {
            return Err(PerceptionError::EmptyCorpus);
        }
        let ca = term_counts(a);
        if ca.is_empty() {
            return Err(PerceptionError::UndefinedSimilarity(a.to_string()));
        }
        let cb = term_counts(b);
        if cb.is_empty() {
            return Err(PerceptionError::UndefinedSimilarity(b.to_string()));
        }
        if ca == cb {
            return Ok(1.0);
        }
        let (wa, wb) = (self.weights(&ca), self.weights(&cb));
        let dot: f64 = wa
            .iter()
            .filter_map(|(t, x)| wb.get(t).map(|y| x * y))
            .sum();
        if dot == 0.0 {
            return Ok(0.0);
        }
        let na = wa.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb = wb.values().map(|x| x * x).sum::<f64>().sqrt();
        Ok((dot / (na * nb)).clamp(0.0, 1.0))
    }
}

pub fn tfidf_similarity<S: AsRef<str>>(
    a: &str,
    b: &str,
    corpus: &[S],
) -> Result<f64, PerceptionError> {
    TfIdfCorpus::new(corpus.iter().map(AsRef::as_ref)).similarity(a, b)
}

/// Ordered, lowercased, deduplicated landmark phrases.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LandmarkSet {
    landmarks: Vec<String>,
}

impl LandmarkSet {
    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut landmarks: Vec<String> = Vec::new();
        for p in phrases {
            let p = tokenize(p.as_ref()).join(" ");
            if !p.is_empty() && !landmarks.contains(&p) {
                landmarks.push(p);
            }
        }
        Self { landmarks }
    }

    pub fn as_slice(&self) -> &[String] {
        &self.landmarks
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.landmarks.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }
}

/// Turns an instruction into landmark phrases. Remote implementations call
/// an LLM; [`RuleBasedExtractor`] is the deterministic local fallback.
pub trait LandmarkExtractor: Send + Sync {
    fn extract(&self, instruction: &str) -> Result<Vec<String>, PerceptionError>;
}

const BUILTIN_LANDMARKS: &[&str] = &[
    "road", "street", "highway", "lane", "path", "building", "house", "tower", "roof",
    "skyscraper", "factory", "church", "river", "water", "lake", "pond", "bridge", "tree",
    "trees", "forest", "park", "grass", "field", "lawn", "parking lot", "car", "square",
    "plaza", "hill", "fence", "wall", "crossroad", "intersection", "railway", "tunnel",
    "traffic light", "playground", "stadium", "gate",
];

const MODIFIERS: &[&str] = &[
    "white", "red", "blue", "green", "yellow", "black", "gray", "grey", "brown", "orange",
    "tall", "small", "big", "large", "high", "low", "short", "wide", "narrow",
];

/// Longest-match lexicon scan. Colour and size adjectives directly before a
/// lexicon noun are kept as part of the phrase (`white building`).
#[derive(Debug, Clone)]
pub struct RuleBasedExtractor {
    lexicon: Vec<Vec<String>>,
}

impl Default for RuleBasedExtractor {
    fn default() -> Self {
        Self::with_vocabulary(std::iter::empty::<&str>())
    }
}

impl RuleBasedExtractor {
    /// Built-in lexicon plus extra category names, such as a scene legend.
    pub fn with_vocabulary<I, S>(extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lexicon: Vec<Vec<String>> = BUILTIN_LANDMARKS.iter().map(|s| tokenize(s)).collect();
        for e in extra {
            let toks = tokenize(e.as_ref());
            if !toks.is_empty() && !lexicon.contains(&toks) {
                lexicon.push(toks);
            }
        }
        // longest phrases first so "parking lot" wins over "lot"
        lexicon.sort_by_key(|t| std::cmp::Reverse(t.len()));
        Self { lexicon }
    }

    pub fn for_legend(legend: &Legend) -> Self {
        Self::with_vocabulary(legend.names())
    }

    fn match_at(&self, tokens: &[String], at: usize) -> Option<usize> {
        self.lexicon
            .iter()
            .find(|phrase| tokens[at..].starts_with(phrase))
            .map(Vec::len)
    }
}

impl LandmarkExtractor for RuleBasedExtractor {
    fn extract(&self, instruction: &str) -> Result<Vec<String>, PerceptionError> {
        let tokens = tokenize(instruction);
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut j = i;
            while j < tokens.len() && MODIFIERS.contains(&tokens[j].as_str()) {
                j += 1;
            }
            if j < tokens.len() {
                if let Some(len) = self.match_at(&tokens, j) {
                    out.push(tokens[i..j + len].join(" "));
                    i = j + len;
                    continue;
                }
            }
            i += 1;
        }
        Ok(out)
    }
}

pub fn extract_landmarks(
    instruction: &str,
    extractor: &dyn LandmarkExtractor,
) -> Result<LandmarkSet, PerceptionError> {
    if tokenize(instruction).is_empty() {
        return Err(PerceptionError::EmptyInstruction);
    }
    Ok(LandmarkSet::new(extractor.extract(instruction)?))
}

/// Legend id for each landmark whose TF-IDF similarity to a legend name
/// exceeds `tau`. The corpus is the landmark phrases plus the legend names.
/// Unmatched landmarks are returned separately.
pub fn match_to_legend(
    landmarks: &LandmarkSet,
    legend: &Legend,
    tau: f64,
) -> (BTreeMap<String, LabelId>, Vec<String>) {
    let corpus = TfIdfCorpus::new(landmarks.iter().chain(legend.names()));
    let mut matched = BTreeMap::new();
    let mut missing = Vec::new();
    for lm in landmarks.iter() {
        let best = legend
            .iter()
            .filter_map(|(id, name)| corpus.similarity(lm, name).ok().map(|s| (id, s)))
            .fold(None, |best: Option<(LabelId, f64)>, (id, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((id, s)),
            });
        match best {
            Some((id, s)) if s > tau => {
                matched.insert(lm.to_string(), id);
            }
            _ => missing.push(lm.to_string()),
        }
    }
    (matched, missing)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceivedMask {
    /// Row-major pixel indices into the view.
    pub pixels: Vec<usize>,
    pub caption: String,
    pub matched_landmark: Option<String>,
    pub label: Option<LabelId>,
}

/// Keeps masks whose best landmark similarity is strictly above `tau`. The
/// corpus is every landmark phrase plus every caption in `masks`. Kept masks
/// get `matched_landmark` set to the best landmark (first one on ties) and
/// keep their label if they already had one.
pub fn filter_masks(
    masks: Vec<PerceivedMask>,
    landmarks: &LandmarkSet,
    tau: f64,
) -> Vec<PerceivedMask> {
    if landmarks.is_empty() || masks.is_empty() {
        return Vec::new();
    }
    let corpus = TfIdfCorpus::new(
        landmarks
            .iter()
            .chain(masks.iter().map(|m| m.caption.as_str())),
    );
    masks
        .into_iter()
        .filter_map(|mut m| {
            let (best, score) = best_landmark(&corpus, &m.caption, landmarks)?;
            (score > tau).then(|| {
                m.matched_landmark = Some(best);
                m
            })
        })
        .collect()
}

fn best_landmark(
    corpus: &TfIdfCorpus,
    caption: &str,
    landmarks: &LandmarkSet,
) -> Option<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    for lm in landmarks.iter() {
        let Ok(s) = corpus.similarity(caption, lm) else {
            continue;
        };
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((lm.to_string(), s));
        }
    }
    best
}

/// Label image where only pixels covered by labelled masks carry a label.
pub fn masks_to_label_image(masks: &[PerceivedMask], width: usize, height: usize) -> LabelImage {
    let mut img = Image::filled(width, height, LabelId::NONE);
    for m in masks {
        if let Some(label) = m.label {
            for &p in &m.pixels {
                img.set(p % width, p / width, label);
            }
        }
    }
    img
}

/// Produces semantic masks and captions for a rendered view.
pub trait Perceptor: Send + Sync {
    fn perceive(
        &self,
        view: &View,
        legend: &Legend,
        step: usize,
    ) -> Result<Vec<PerceivedMask>, PerceptionError>;
}

/// Ground-truth perception: one mask per 4-connected same-label region of
/// the rendered label image, captioned with the legend name.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePerceptor;

impl Perceptor for OraclePerceptor {
    fn perceive(
        &self,
        view: &View,
        legend: &Legend,
        _step: usize,
    ) -> Result<Vec<PerceivedMask>, PerceptionError> {
        Ok(connected_regions(&view.labels)
            .into_iter()
            .map(|(label, pixels)| PerceivedMask {
                pixels,
                caption: legend.name(label).unwrap_or("unknown").to_string(),
                matched_landmark: None,
                label: Some(label),
            })
            .collect())
    }
}

/// 4-connected components of non-`NONE` pixels, in row-major order of their
/// first pixel.
pub fn connected_regions(labels: &LabelImage) -> Vec<(LabelId, Vec<usize>)> {
    let (w, h) = labels.dims();
    let px = labels.pixels();
    let mut seen = vec![false; px.len()];
    let mut out = Vec::new();
    for start in 0..px.len() {
        if seen[start] || px[start].is_none() {
            continue;
        }
        let label = px[start];
        let mut region = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            region.push(i);
            let (u, v) = (i % w, i / w);
            let mut visit = |n: usize| {
                if !seen[n] && px[n] == label {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        region.sort_unstable();
        out.push((label, region));
    }
    out
}

/// Oracle perception with seeded mask drops and caption corruption, for
/// studying how missed landmarks affect navigation.
#[derive(Debug, Clone, Copy)]
pub struct DegradedPerceptor {
    pub drop_rate: f64,
    pub corrupt_rate: f64,
    pub seed: u64,
}

impl DegradedPerceptor {
    pub fn new(drop_rate: f64, seed: u64) -> Self {
        Self {
            drop_rate,
            corrupt_rate: 0.0,
            seed,
        }
    }
}

const DISTRACTOR_CAPTIONS: &[&str] = &["shadow", "blurry object", "vehicle", "sign"];

impl Perceptor for DegradedPerceptor {
    fn perceive(
        &self,
        view: &View,
        legend: &Legend,
        step: usize,
    ) -> Result<Vec<PerceivedMask>, PerceptionError> {
        let masks = OraclePerceptor.perceive(view, legend, step)?;
        // per-step stream so results do not depend on call history
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        Ok(masks
            .into_iter()
            .filter_map(|mut m| {
                if rng.random::<f64>() < self.drop_rate {
                    return None;
                }
                if rng.random::<f64>() < self.corrupt_rate {
                    m.caption = DISTRACTOR_CAPTIONS[rng.random_range(0..DISTRACTOR_CAPTIONS.len())]
                        .to_string();
                }
                Some(m)
            })
            .collect())
    }
}
