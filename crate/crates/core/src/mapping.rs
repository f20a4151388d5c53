//! Semantic voxel accumulation and sub-goal-aware top-down projection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{SemanticPointCloud, UavPose};
use crate::legend::{LabelId, Legend};

pub const DEFAULT_VOXEL_SIZE: f64 = 5.0;
pub const MAP_HEADER: &str = "stmr-map v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("point label {0} is not registered in the legend")]
    UnknownLabel(LabelId),
    #[error("invalid map dump: {0}")]
    Dump(String),
}

pub type VoxelKey = (i64, i64, i64);
pub type CellKey = (i64, i64);

/// Sparse voxel grid; each voxel keeps a per-label point count.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    voxel_size: f64,
    voxels: HashMap<VoxelKey, BTreeMap<LabelId, u32>>,
}

impl VoxelGrid {
    pub fn new(voxel_size: f64) -> Self {
        assert!(voxel_size > 0.0, "voxel size must be positive");
        Self {
            voxel_size,
            voxels: HashMap::new(),
        }
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn key_of(&self, x: f64, y: f64, z: f64) -> VoxelKey {
        let s = self.voxel_size;
        (
            (x / s).floor() as i64,
            (y / s).floor() as i64,
            (z / s).floor() as i64,
        )
    }

    /// Adds `count` observations of `label` to one voxel.
    pub fn add(&mut self, key: VoxelKey, label: LabelId, count: u32) {
        if count == 0 {
            return;
        }
        *self.voxels.entry(key).or_default().entry(label).or_insert(0) += count;
    }

    pub fn histogram(&self, key: VoxelKey) -> Option<&BTreeMap<LabelId, u32>> {
        self.voxels.get(&key)
    }

    /// Most frequent label of a voxel; ties go to the lower id.
    pub fn category(&self, key: VoxelKey) -> Option<LabelId> {
        self.voxels.get(&key).and_then(argmax_label)
    }

    /// `(key, category)` for every occupied voxel, in key order.
    pub fn categories(&self) -> Vec<(VoxelKey, LabelId)> {
        let mut v: Vec<_> = self
            .voxels
            .iter()
            .filter_map(|(k, h)| argmax_label(h).map(|c| (*k, c)))
            .collect();
        v.sort_unstable();
        v
    }

    /// Inserts a cloud; the whole cloud is rejected if any label is unknown.
    pub fn insert_points(
        &mut self,
        cloud: &SemanticPointCloud,
        legend: &Legend,
    ) -> Result<(), MappingError> {
        if let Some(p) = cloud.points.iter().find(|p| !legend.contains(p.label)) {
            return Err(MappingError::UnknownLabel(p.label));
        }
        for p in &cloud.points {
            let key = self.key_of(p.position.x, p.position.y, p.position.z);
            self.add(key, p.label, 1);
        }
        Ok(())
    }
}

fn argmax_label(h: &BTreeMap<LabelId, u32>) -> Option<LabelId> {
    // BTreeMap iterates ascending, so keeping the first maximum breaks ties
    // toward the lower id
    h.iter()
        .fold(None, |best: Option<(LabelId, u32)>, (&l, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
        .map(|(l, _)| l)
}

/// World-anchored 2D semantic grid with a separate trajectory layer. Cell
/// `(i, j)` covers `[i*s, (i+1)*s) x [j*s, (j+1)*s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopDownMap {
    cell_size: f64,
    labels: BTreeMap<CellKey, LabelId>,
    trajectory: BTreeSet<CellKey>,
}

impl TopDownMap {
    pub fn new(cell_size: f64) -> Self {
        Self {
            cell_size,
            labels: BTreeMap::new(),
            trajectory: BTreeSet::new(),
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cell_of(&self, x: f64, y: f64) -> CellKey {
        (
            (x / self.cell_size).floor() as i64,
            (y / self.cell_size).floor() as i64,
        )
    }

    /// `None` means unexplored.
    pub fn label(&self, cell: CellKey) -> Option<LabelId> {
        self.labels.get(&cell).copied()
    }

    pub fn set_label(&mut self, cell: CellKey, label: LabelId) {
        self.labels.insert(cell, label);
    }

    pub fn labels(&self) -> impl Iterator<Item = (CellKey, LabelId)> + '_ {
        self.labels.iter().map(|(k, l)| (*k, *l))
    }

    pub fn is_trajectory(&self, cell: CellKey) -> bool {
        self.trajectory.contains(&cell)
    }

    pub fn trajectory(&self) -> impl Iterator<Item = CellKey> + '_ {
        self.trajectory.iter().copied()
    }

    pub fn mark_cell(&mut self, cell: CellKey) {
        self.trajectory.insert(cell);
    }

    /// Flags the cell under the pose.
    pub fn mark_waypoint(&mut self, pose: &UavPose) {
        let c = self.cell_of(pose.x, pose.y);
        self.trajectory.insert(c);
    }

    /// Flags every cell the ground track from `a` to `b` passes through, so
    /// consecutive waypoints stay connected even for moves longer than a cell.
    pub fn mark_segment(&mut self, a: &UavPose, b: &UavPose) {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len = dx.hypot(dy);
        let n = (len / (self.cell_size * 0.25)).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let c = self.cell_of(a.x + dx * t, a.y + dy * t);
            self.trajectory.insert(c);
        }
    }

    /// Bounding box `(min_i, min_j, max_i, max_j)` over labels and trajectory.
    pub fn extent(&self) -> Option<(i64, i64, i64, i64)> {
        let keys = self.labels.keys().chain(self.trajectory.iter());
        keys.fold(None, |acc, &(i, j)| match acc {
            None => Some((i, j, i, j)),
            Some((a, b, c, d)) => Some((a.min(i), b.min(j), c.max(i), d.max(j))),
        })
    }

    /// Plain-text snapshot: header, legend block, extent, then one row per
    /// map row (north first) with `0` for unexplored and `-1` for trajectory.
    pub fn dump(&self, legend: &Legend) -> String {
        let mut s = String::new();
        writeln!(s, "{MAP_HEADER}").unwrap();
        writeln!(s, "cell_size = {}", self.cell_size).unwrap();
        writeln!(s, "legend =").unwrap();
        for (id, name) in legend.iter() {
            writeln!(s, "{id} {name}").unwrap();
        }
        writeln!(s).unwrap();
        let Some((i0, j0, i1, j1)) = self.extent() else {
            writeln!(s, "extent = 0 0 -1 -1").unwrap();
            writeln!(s, "cells =").unwrap();
            return s;
        };
        writeln!(s, "extent = {i0} {j0} {i1} {j1}").unwrap();
        writeln!(s, "cells =").unwrap();
        for j in (j0..=j1).rev() {
            let row: Vec<String> = (i0..=i1)
                .map(|i| {
                    if self.is_trajectory((i, j)) {
                        "-1".to_string()
                    } else {
                        self.label((i, j)).map_or(0, |l| l.0).to_string()
                    }
                })
                .collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        s
    }

    /// Reads a [`TopDownMap::dump`]. Returns the map and the legend. Cells
    /// written as `-1` come back as trajectory without a semantic label.
    pub fn parse_dump(text: &str) -> Result<(TopDownMap, Legend), MappingError> {
        use crate::docfmt::{fixed_numbers, numbers, Document};
        let err = |e: crate::docfmt::DocError| MappingError::Dump(e.to_string());
        let doc = Document::parse(text, MAP_HEADER).map_err(err)?;
        let cell_size: f64 = doc
            .parsed("cell_size")
            .map_err(err)?
            .ok_or_else(|| MappingError::Dump("missing cell_size".into()))?;
        let mut legend = Legend::new();
        for (_, item) in doc.block("legend").map_err(err)?.unwrap_or(&[]) {
            let (id, name) = item
                .split_once(' ')
                .ok_or_else(|| MappingError::Dump(format!("bad legend item `{item}`")))?;
            let id: u32 = id
                .parse()
                .map_err(|_| MappingError::Dump(format!("bad legend id `{id}`")))?;
            legend.insert(LabelId(id), name.trim());
        }
        let (line, ext) = doc.require_scalar("extent").map_err(err)?;
        let e = fixed_numbers::<i64>(line, ext, 4, "extent").map_err(err)?;
        let mut map = TopDownMap::new(cell_size);
        let rows = doc.block("cells").map_err(err)?.unwrap_or(&[]);
        if e[2] < e[0] {
            return Ok((map, legend));
        }
        let expect_rows = (e[3] - e[1] + 1) as usize;
        if rows.len() != expect_rows {
            return Err(MappingError::Dump(format!(
                "expected {expect_rows} rows, found {}",
                rows.len()
            )));
        }
        for (r, (line, text)) in rows.iter().enumerate() {
            let j = e[3] - r as i64;
            let vals = numbers::<i64>(*line, text, "cells").map_err(err)?;
            for (c, v) in vals.into_iter().enumerate() {
                let i = e[0] + c as i64;
                match v {
                    -1 => {
                        map.trajectory.insert((i, j));
                    }
                    0 => {}
                    v if v > 0 => map.set_label((i, j), LabelId(v as u32)),
                    v => return Err(MappingError::Dump(format!("bad cell value {v}"))),
                }
            }
        }
        Ok((map, legend))
    }
}

/// Projects every occupied voxel column onto the ground plane.
///
/// A column takes the category of its highest voxel, unless some voxel in the
/// column has a category in `subgoal_labels`; then the highest such voxel
/// wins. The result has an empty trajectory layer.
pub fn project_top_down(grid: &VoxelGrid, subgoal_labels: &BTreeSet<LabelId>) -> TopDownMap {
    // per column: (top k, top label), (top sub-goal k, label)
    let mut columns: HashMap<CellKey, ((i64, LabelId), Option<(i64, LabelId)>)> = HashMap::new();
    for (&(i, j, k), hist) in &grid.voxels {
        let Some(c) = argmax_label(hist) else {
            continue;
        };
        let goal = subgoal_labels.contains(&c).then_some((k, c));
        columns
            .entry((i, j))
            .and_modify(|(top, best_goal)| {
                if k > top.0 {
                    *top = (k, c);
                }
                if let Some(g) = goal {
                    if best_goal.is_none_or(|b| g.0 > b.0) {
                        *best_goal = Some(g);
                    }
                }
            })
            .or_insert(((k, c), goal));
    }
    let mut map = TopDownMap::new(grid.voxel_size);
    for (cell, (top, goal)) in columns {
        map.set_label(cell, goal.map_or(top.1, |g| g.1));
    }
    map
}
