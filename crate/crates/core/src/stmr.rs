//! The matrix map prompt: local window extraction, semantic pooling, text
//! serialization, plus the topological and metric text encoders used for
//! comparison runs.
//!
//! The window is aligned with the world axes, not with the UAV heading;
//! heading is carried only by the orientation token in the center cell.
//! Row 0 is the northernmost row and column 0 the westernmost. With the
//! center at `[size/2, size/2]` the window spans `size/2` matrix cells west
//! and north of the UAV cell and `size/2 - 1` cells east and south.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Point3;
use thiserror::Error;

use crate::geometry::{normalize_angle, UavPose};
use crate::legend::{LabelId, Legend};
use crate::mapping::TopDownMap;

pub const DEFAULT_MATRIX_SIZE: usize = 20;
pub const DEFAULT_CELL_METRIC: f64 = 5.0;
pub const UNEXPLORED: i32 = 0;
pub const TRAJECTORY: i32 = -1;
/// Version of the matrix text layout.
pub const MATRIX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StmrError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("matrix text: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixConfig {
    pub size: usize,
    /// Meters per matrix cell.
    pub cell_metric: f64,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            size: DEFAULT_MATRIX_SIZE,
            cell_metric: DEFAULT_CELL_METRIC,
        }
    }
}

/// Square cut of the top-down map, row 0 north, at source-map resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWindow {
    pub side: usize,
    pub cell_metric: f64,
    pub labels: Vec<LabelId>,
    pub trajectory: Vec<bool>,
    /// World `(x, y)` of the north-west corner.
    pub north_west: (f64, f64),
}

impl LocalWindow {
    pub fn label(&self, row: usize, col: usize) -> LabelId {
        self.labels[row * self.side + col]
    }

    pub fn is_trajectory(&self, row: usize, col: usize) -> bool {
        self.trajectory[row * self.side + col]
    }
}

/// Cuts the `size x size` matrix-cell window around the UAV. Each matrix
/// cell spans `cell_metric / map.cell_size()` source cells per side, which
/// must be a whole number.
pub fn extract_local_window(
    map: &TopDownMap,
    pose: &UavPose,
    cfg: &MatrixConfig,
) -> Result<LocalWindow, StmrError> {
    if cfg.size < 2 || cfg.size % 2 != 0 {
        return Err(StmrError::Shape(format!(
            "matrix size must be even and >= 2, got {}",
            cfg.size
        )));
    }
    let ratio = cfg.cell_metric / map.cell_size();
    let block = ratio.round();
    if block < 1.0 || (ratio - block).abs() > 1e-9 {
        return Err(StmrError::Shape(format!(
            "cell metric {} is not a whole multiple of map cell size {}",
            cfg.cell_metric,
            map.cell_size()
        )));
    }
    let n = block as i64;
    let half = (cfg.size / 2) as i64;
    let mi = (pose.x / cfg.cell_metric).floor() as i64;
    let mj = (pose.y / cfg.cell_metric).floor() as i64;
    let first_i = (mi - half) * n;
    let top_j = (mj + half) * n + n - 1;
    let side = cfg.size * n as usize;
    let mut labels = Vec::with_capacity(side * side);
    let mut trajectory = Vec::with_capacity(side * side);
    for r in 0..side as i64 {
        for c in 0..side as i64 {
            let cell = (first_i + c, top_j - r);
            labels.push(map.label(cell).unwrap_or(LabelId::NONE));
            trajectory.push(map.is_trajectory(cell));
        }
    }
    Ok(LocalWindow {
        side,
        cell_metric: cfg.cell_metric,
        labels,
        trajectory,
        north_west: (
            first_i as f64 * map.cell_size(),
            (top_j + 1) as f64 * map.cell_size(),
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orientation {
    /// Index into [`COMPASS`], 0 = east, counter-clockwise.
    pub compass: usize,
    pub pitch_degrees: i64,
}

pub const COMPASS: [&str; 8] = [
    "east",
    "northeast",
    "north",
    "northwest",
    "west",
    "southwest",
    "south",
    "southeast",
];

impl Orientation {
    pub fn from_pose(pose: &UavPose) -> Self {
        let sector = (normalize_angle(pose.yaw) / (PI / 4.0)).round() as usize % 8;
        let pitch = pose.pitch.to_degrees().round() as i64;
        Self {
            compass: sector,
            pitch_degrees: pitch,
        }
    }

    pub fn token(&self) -> String {
        format!("{}{}", COMPASS[self.compass], self.pitch_degrees)
    }

    pub fn parse(token: &str) -> Option<Self> {
        // longest names first: "northeast" must not parse as "north" + "east0"
        let mut names: Vec<(usize, &str)> = COMPASS.iter().copied().enumerate().collect();
        names.sort_by_key(|(_, n)| std::cmp::Reverse(n.len()));
        names.into_iter().find_map(|(i, name)| {
            let rest = token.strip_prefix(name)?;
            let pitch = rest.parse::<i64>().ok()?;
            Some(Self {
                compass: i,
                pitch_degrees: pitch,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StmrMatrix {
    pub size: usize,
    /// Row-major, row 0 north.
    pub cells: Vec<i32>,
    pub legend: Legend,
    pub orientation: Orientation,
    pub cell_metric: f64,
}

impl StmrMatrix {
    pub fn center(&self) -> (usize, usize) {
        (self.size / 2, self.size / 2)
    }

    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.cells[row * self.size + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: i32) {
        self.cells[row * self.size + col] = v;
    }

    pub fn orientation_token(&self) -> String {
        self.orientation.token()
    }

    /// Values of the cells within Chebyshev distance `radius` of the center.
    pub fn near_center(&self, radius: usize) -> impl Iterator<Item = i32> + '_ {
        let (cr, cc) = self.center();
        let rows = cr.saturating_sub(radius)..=(cr + radius).min(self.size - 1);
        rows.flat_map(move |r| {
            let cols = cc.saturating_sub(radius)..=(cc + radius).min(self.size - 1);
            cols.map(move |c| self.get(r, c))
        })
    }

    /// Every cell is a legend id, unexplored or trajectory.
    pub fn check_values(&self) -> Result<(), StmrError> {
        if self.cells.len() != self.size * self.size {
            return Err(StmrError::Shape(format!(
                "{} cells for a {}x{} matrix",
                self.cells.len(),
                self.size,
                self.size
            )));
        }
        for (i, &v) in self.cells.iter().enumerate() {
            let ok = v == UNEXPLORED
                || v == TRAJECTORY
                || (v > 0 && self.legend.contains(LabelId(v as u32)));
            if !ok {
                return Err(StmrError::Format(format!(
                    "value {v} at [{}, {}] not in legend",
                    i / self.size,
                    i % self.size
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = legend_line(&self.legend);
        s.push('\n');
        let (cr, cc) = self.center();
        let token = self.orientation.token();
        for r in 0..self.size {
            let row: Vec<String> = (0..self.size)
                .map(|c| {
                    if (r, c) == (cr, cc) {
                        token.clone()
                    } else {
                        self.get(r, c).to_string()
                    }
                })
                .collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        s
    }
}

/// `[0:Unexplored 1:road 2:building ... -1:your past trajectory]`
pub fn legend_line(legend: &Legend) -> String {
    let mut items = vec!["0:Unexplored".to_string()];
    items.extend(legend.iter().map(|(id, n)| format!("{id}:{n}")));
    items.push("-1:your past trajectory".to_string());
    format!("[{}]", items.join(" "))
}

fn parse_legend_line(line: &str) -> Result<Legend, StmrError> {
    let inner = line
        .trim()
        .strip_prefix('[')
        .and_then(|l| l.strip_suffix(']'))
        .ok_or_else(|| StmrError::Format("legend line must be bracketed".into()))?;
    let mut items: Vec<(i64, String)> = Vec::new();
    for tok in inner.split_whitespace() {
        let starts_item = tok
            .split_once(':')
            .and_then(|(id, _)| id.parse::<i64>().ok().map(|id| (id, tok)));
        match starts_item {
            Some((id, tok)) => {
                let name = tok.split_once(':').map(|(_, n)| n).unwrap_or("");
                items.push((id, name.to_string()));
            }
            None => {
                let last = items
                    .last_mut()
                    .ok_or_else(|| StmrError::Format(format!("stray legend token `{tok}`")))?;
                last.1.push(' ');
                last.1.push_str(tok);
            }
        }
    }
    let mut legend = Legend::new();
    for (id, name) in items {
        match id {
            0 | -1 => {}
            id if id > 0 => {
                legend.insert(LabelId(id as u32), name);
            }
            _ => return Err(StmrError::Format(format!("legend id {id} is invalid"))),
        }
    }
    Ok(legend)
}

/// Pools a window into the matrix. Each matrix cell takes the most frequent
/// explored label in its block (lower id on ties, `0` if the block is
/// unexplored). A block containing trajectory becomes `-1` unless its winner
/// is a current sub-goal label.
pub fn pool_to_matrix(
    window: &LocalWindow,
    size: usize,
    subgoal_labels: &BTreeSet<LabelId>,
    legend: &Legend,
) -> Result<StmrMatrix, StmrError> {
    if size == 0 || window.side % size != 0 {
        return Err(StmrError::Shape(format!(
            "window side {} not divisible by matrix size {size}",
            window.side
        )));
    }
    let block = window.side / size;
    let mut cells = vec![UNEXPLORED; size * size];
    let mut counts: Vec<(LabelId, usize)> = Vec::new();
    for mr in 0..size {
        for mc in 0..size {
            counts.clear();
            let mut has_traj = false;
            for r in mr * block..(mr + 1) * block {
                for c in mc * block..(mc + 1) * block {
                    has_traj |= window.is_trajectory(r, c);
                    let l = window.label(r, c);
                    if l.is_none() {
                        continue;
                    }
                    match counts.iter_mut().find(|(k, _)| *k == l) {
                        Some((_, n)) => *n += 1,
                        None => counts.push((l, 1)),
                    }
                }
            }
            let winner = counts
                .iter()
                .copied()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(l, _)| l);
            let value = match winner {
                Some(w) if subgoal_labels.contains(&w) => w.0 as i32,
                _ if has_traj => TRAJECTORY,
                Some(w) => w.0 as i32,
                None => UNEXPLORED,
            };
            cells[mr * size + mc] = value;
        }
    }
    Ok(StmrMatrix {
        size,
        cells,
        legend: legend.clone(),
        orientation: Orientation {
            compass: 0,
            pitch_degrees: 0,
        },
        cell_metric: window.cell_metric,
    })
}

/// Renders the matrix as prompt text with the orientation token for `pose`.
pub fn serialize_matrix(m: &StmrMatrix, pose: &UavPose) -> String {
    let mut m = m.clone();
    m.orientation = Orientation::from_pose(pose);
    m.to_text()
}

/// Parses matrix text back. The center cell holds the orientation token in
/// text, so it comes back as `-1` (the UAV's own position).
pub fn parse_matrix(text: &str) -> Result<StmrMatrix, StmrError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let legend = parse_legend_line(
        lines
            .next()
            .ok_or_else(|| StmrError::Format("empty matrix text".into()))?,
    )?;
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split_whitespace().collect()).collect();
    let size = rows.len();
    if size < 2 || size % 2 != 0 {
        return Err(StmrError::Shape(format!("{size} rows")));
    }
    let mut cells = Vec::with_capacity(size * size);
    let mut orientation = None;
    for (r, row) in rows.iter().enumerate() {
        if row.len() != size {
            return Err(StmrError::Shape(format!(
                "row {r} has {} values, expected {size}",
                row.len()
            )));
        }
        for (c, tok) in row.iter().enumerate() {
            if let Ok(v) = tok.parse::<i32>() {
                if (r, c) == (size / 2, size / 2) {
                    return Err(StmrError::Format("center cell must be the orientation token".into()));
                }
                cells.push(v);
            } else if (r, c) == (size / 2, size / 2) {
                orientation = Some(
                    Orientation::parse(tok)
                        .ok_or_else(|| StmrError::Format(format!("bad orientation token `{tok}`")))?,
                );
                cells.push(TRAJECTORY);
            } else {
                return Err(StmrError::Format(format!("non-numeric value `{tok}` at [{r}, {c}]")));
            }
        }
    }
    let m = StmrMatrix {
        size,
        cells,
        legend,
        orientation: orientation.expect("center visited"),
        cell_metric: DEFAULT_CELL_METRIC,
    };
    m.check_values()?;
    Ok(m)
}

/// Format check used on prompt map blocks.
pub fn check_matrix_text(text: &str, expected_size: usize) -> Result<(), StmrError> {
    let m = parse_matrix(text)?;
    if m.size != expected_size {
        return Err(StmrError::Shape(format!(
            "{}x{} matrix, expected {expected_size}x{expected_size}",
            m.size, m.size
        )));
    }
    Ok(())
}

/// A visited location in the topological encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub position: Point3<f64>,
    pub captions: Vec<String>,
}

/// Visited places with insertion-ordered adjacency.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopoGraph {
    pub places: Vec<Place>,
    pub adjacency: Vec<Vec<usize>>,
    pub current: Option<usize>,
}

impl TopoGraph {
    pub fn add_place(&mut self, position: Point3<f64>, captions: Vec<String>) -> usize {
        self.places.push(Place { position, captions });
        self.adjacency.push(Vec::new());
        self.places.len() - 1
    }

    pub fn connect(&mut self, a: usize, b: usize) {
        if a == b || self.adjacency[a].contains(&b) {
            return;
        }
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
    }

    /// Records a visit: reuses a place within `merge_radius` meters
    /// (horizontal) or creates one, links it to the previous place and
    /// merges in the captions seen there.
    pub fn visit(&mut self, pose: &UavPose, captions: &[String], merge_radius: f64) -> usize {
        let p = pose.position();
        let near = self.places.iter().position(|pl| {
            (pl.position.x - p.x).hypot(pl.position.y - p.y) < merge_radius
        });
        let idx = match near {
            Some(i) => {
                for c in captions {
                    if !self.places[i].captions.contains(c) {
                        self.places[i].captions.push(c.clone());
                    }
                }
                i
            }
            None => {
                let mut uniq: Vec<String> = Vec::new();
                for c in captions {
                    if !uniq.contains(c) {
                        uniq.push(c.clone());
                    }
                }
                self.add_place(p, uniq)
            }
        };
        if let Some(prev) = self.current {
            self.connect(prev, idx);
        }
        self.current = Some(idx);
        idx
    }
}

fn place_list(ids: &[usize]) -> String {
    let joined: Vec<String> = ids.iter().map(ToString::to_string).collect();
    if ids.len() == 1 {
        format!("Place {}", joined[0])
    } else {
        format!("Places {}", joined.join(", "))
    }
}

/// Caption line per place, then one connectivity sentence per place that
/// still has an edge not mentioned by an earlier sentence.
pub fn encode_topo(graph: &TopoGraph) -> String {
    let mut s = String::new();
    for (i, p) in graph.places.iter().enumerate() {
        let caption = if p.captions.is_empty() {
            "no landmarks recognized".to_string()
        } else {
            p.captions.join(", ")
        };
        writeln!(s, "Place {i}: {caption}.").unwrap();
    }
    let mut mentioned: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, adj) in graph.adjacency.iter().enumerate() {
        let edge = |j: usize| (i.min(j), i.max(j));
        if adj.is_empty() || adj.iter().all(|&j| mentioned.contains(&edge(j))) {
            continue;
        }
        writeln!(s, "Place {i} is connected with {}.", place_list(adj)).unwrap();
        mentioned.extend(adj.iter().map(|&j| edge(j)));
    }
    if let Some(c) = graph.current {
        writeln!(s, "You are at Place {c}.").unwrap();
    }
    s
}

/// Direction words for the eight 45° sectors, clockwise from straight ahead.
pub const SECTORS: [&str; 8] = [
    "front",
    "right front",
    "right",
    "right back",
    "back",
    "left back",
    "left",
    "left front",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricObservation {
    pub name: String,
    /// Radians relative to heading, clockwise positive.
    pub bearing: f64,
    /// Meters.
    pub range: f64,
}

impl MetricObservation {
    /// Bearing and horizontal range of a world point as seen from `pose`.
    pub fn from_world(name: impl Into<String>, point: &Point3<f64>, pose: &UavPose) -> Self {
        let (dx, dy) = (point.x - pose.x, point.y - pose.y);
        let world = dy.atan2(dx);
        Self {
            name: name.into(),
            bearing: normalize_angle(pose.yaw - world),
            range: dx.hypot(dy),
        }
    }

    /// `(sector index, clockwise offset from the sector's start)`.
    fn sector(&self) -> (usize, f64) {
        let b = normalize_angle(self.bearing + PI / 8.0);
        let idx = ((b / (PI / 4.0)).floor() as usize).min(7);
        (idx, b - idx as f64 * PI / 4.0)
    }
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some(c) if "aeiou".contains(c.to_ascii_lowercase()) => "an",
        _ => "a",
    }
}

/// One clause per observation, e.g. `a building in the right front 10 meters away`,
/// ordered clockwise starting from straight ahead.
pub fn encode_metric(observations: &[MetricObservation]) -> String {
    if observations.is_empty() {
        return "No landmarks observed.".to_string();
    }
    let mut obs: Vec<&MetricObservation> = observations.iter().collect();
    obs.sort_by(|a, b| {
        let (sa, oa) = a.sector();
        let (sb, ob) = b.sector();
        sa.cmp(&sb)
            .then(oa.total_cmp(&ob))
            .then(a.range.total_cmp(&b.range))
            .then(a.name.cmp(&b.name))
    });
    let clauses: Vec<String> = obs
        .iter()
        .map(|o| {
            format!(
                "{} {} in the {} {} meters away",
                article(&o.name),
                o.name,
                SECTORS[o.sector().0],
                o.range.round() as i64
            )
        })
        .collect();
    format!("{}.", clauses.join(", "))
}
