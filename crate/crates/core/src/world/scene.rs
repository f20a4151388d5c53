use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};

use crate::docfmt::{self, DocError, Document};
use crate::geometry::{CameraRig, DepthImage, Image, LabelImage, UavPose};
use crate::legend::{LabelId, Legend};

use super::WorldError;

pub const SCENE_HEADER: &str = "stmr-scene v1";
pub const DEFAULT_CEILING: f64 = 200.0;

/// A floating slab over a cell (tree crown, awning) that hides the ground
/// label from above but leaves it visible from below the band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canopy {
    pub bottom: f64,
    pub top: f64,
    pub label: LabelId,
}

/// 2.5D semantic heightmap.
///
/// Cell `(i, j)` covers `[ox + i*cs, ox + (i+1)*cs) x [oy + j*cs, oy + (j+1)*cs)`,
/// with `j = 0` the southernmost row. In scene files rows are written
/// north-first so the text reads like a map.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    cell_size: f64,
    origin: (f64, f64),
    cols: usize,
    rows: usize,
    ceiling: f64,
    heights: Vec<f64>,
    labels: Vec<LabelId>,
    canopies: BTreeMap<(usize, usize), Canopy>,
    legend: Legend,
}

/// First surface intersection of a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; world point is `origin + t * dir`.
    pub t: f64,
    pub point: Point3<f64>,
    pub label: LabelId,
    pub cell: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub depth: DepthImage,
    pub labels: LabelImage,
}

impl Scene {
    /// Builds a scene from south-first row-major grids.
    pub fn new(
        cell_size: f64,
        origin: (f64, f64),
        cols: usize,
        rows: usize,
        heights: Vec<f64>,
        labels: Vec<LabelId>,
        legend: Legend,
    ) -> Result<Self, WorldError> {
        let scene = Scene {
            cell_size,
            origin,
            cols,
            rows,
            ceiling: DEFAULT_CEILING,
            heights,
            labels,
            canopies: BTreeMap::new(),
            legend,
        };
        let v = scene.violations();
        if v.is_empty() {
            Ok(scene)
        } else {
            Err(WorldError::Parse(v))
        }
    }

    pub fn with_ceiling(mut self, ceiling: f64) -> Self {
        self.ceiling = ceiling;
        self
    }

    pub fn add_canopy(&mut self, cell: (usize, usize), canopy: Canopy) -> Result<(), WorldError> {
        if cell.0 >= self.cols || cell.1 >= self.rows {
            return Err(WorldError::OutOfBounds(format!("canopy cell {cell:?}")));
        }
        if !self.legend.contains(canopy.label) || !(canopy.bottom < canopy.top) {
            return Err(WorldError::Parse(vec![DocError::new(
                0,
                format!("invalid canopy at {cell:?}"),
            )]));
        }
        self.canopies.insert(cell, canopy);
        Ok(())
    }

    fn violations(&self) -> Vec<DocError> {
        let mut out = Vec::new();
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            out.push(DocError::new(0, "cell_size must be positive"));
        }
        if self.cols == 0 || self.rows == 0 {
            out.push(DocError::new(0, "grid must be non-empty"));
        }
        if self.heights.len() != self.cols * self.rows || self.labels.len() != self.cols * self.rows
        {
            out.push(DocError::new(0, "height and label grids must match dimensions"));
            return out;
        }
        for (idx, (&h, &l)) in self.heights.iter().zip(&self.labels).enumerate() {
            let (i, j) = (idx % self.cols, idx / self.cols);
            if !(h.is_finite() && h >= 0.0) {
                out.push(DocError::new(0, format!("height at cell ({i}, {j}) must be >= 0")));
            }
            if !self.legend.contains(l) {
                out.push(DocError::new(
                    0,
                    format!("label {l} at cell ({i}, {j}) not in legend"),
                ));
            }
        }
        out
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn legend(&self) -> &Legend {
        &self.legend
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    /// `(min_x, min_y, max_x, max_y)` of the ground footprint.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.origin.0,
            self.origin.1,
            self.origin.0 + self.cols as f64 * self.cell_size,
            self.origin.1 + self.rows as f64 * self.cell_size,
        )
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let (x0, y0, x1, y1) = self.bounds();
        x >= x0 && x < x1 && y >= y0 && y < y1
    }

    pub fn in_bounds(&self, p: &Point3<f64>) -> bool {
        self.contains_xy(p.x, p.y) && p.z >= 0.0 && p.z <= self.ceiling
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        self.contains_xy(x, y).then(|| {
            let i = ((x - self.origin.0) / self.cell_size).floor() as usize;
            let j = ((y - self.origin.1) / self.cell_size).floor() as usize;
            (i.min(self.cols - 1), j.min(self.rows - 1))
        })
    }

    pub fn height(&self, cell: (usize, usize)) -> f64 {
        self.heights[cell.1 * self.cols + cell.0]
    }

    pub fn label(&self, cell: (usize, usize)) -> LabelId {
        self.labels[cell.1 * self.cols + cell.0]
    }

    pub fn canopy(&self, cell: (usize, usize)) -> Option<&Canopy> {
        self.canopies.get(&cell)
    }

    pub fn canopies(&self) -> impl Iterator<Item = ((usize, usize), &Canopy)> {
        self.canopies.iter().map(|(c, k)| (*c, k))
    }

    /// Whether a point lies inside solid terrain or a canopy slab.
    pub fn is_obstacle(&self, p: &Point3<f64>) -> bool {
        let Some(cell) = self.cell_of(p.x, p.y) else {
            return false;
        };
        if p.z <= self.height(cell) {
            return true;
        }
        self.canopy(cell)
            .is_some_and(|c| p.z >= c.bottom && p.z <= c.top)
    }

    /// Number of cells per label, for fixture checks and summaries.
    pub fn label_histogram(&self) -> BTreeMap<LabelId, usize> {
        let mut h = BTreeMap::new();
        for &l in &self.labels {
            *h.entry(l).or_insert(0) += 1;
        }
        for c in self.canopies.values() {
            *h.entry(c.label).or_insert(0) += 1;
        }
        h
    }

    /// Parameter range `[t0, t1]` over which the ray is inside the ground
    /// footprint, clipped to `t >= 0`.
    fn footprint_span(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<(f64, f64)> {
        let (x0, y0, x1, y1) = self.bounds();
        let mut t0: f64 = 0.0;
        let mut t1 = f64::INFINITY;
        for (oa, da, lo, hi) in [(o.x, d.x, x0, x1), (o.y, d.y, y0, y1)] {
            if da == 0.0 {
                if oa < lo || oa >= hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - oa) / da, (hi - oa) / da);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }

    /// Earliest intersection of the segment `[ta, tb]` with the solid parts of `cell`.
    fn hit_in_cell(
        &self,
        cell: (usize, usize),
        o: &Point3<f64>,
        d: &Vector3<f64>,
        ta: f64,
        tb: f64,
    ) -> Option<(f64, LabelId)> {
        let z_at = |t: f64| o.z + d.z * t;
        let h = self.height(cell);
        let ground = if z_at(ta) <= h {
            Some(ta)
        } else if d.z < 0.0 {
            let t = (h - o.z) / d.z;
            (t <= tb).then_some(t)
        } else {
            None
        };
        let canopy = self.canopy(cell).and_then(|c| {
            if d.z == 0.0 {
                (o.z >= c.bottom && o.z <= c.top).then_some(ta)
            } else {
                let (a, b) = ((c.bottom - o.z) / d.z, (c.top - o.z) / d.z);
                let lo = a.min(b).max(ta);
                let hi = a.max(b).min(tb);
                (lo <= hi).then_some(lo)
            }
        });
        match (ground, canopy) {
            (Some(g), Some(c)) if c <= g => Some((c, self.canopy(cell).unwrap().label)),
            (Some(g), _) => Some((g, self.label(cell))),
            (None, Some(c)) => Some((c, self.canopy(cell).unwrap().label)),
            (None, None) => None,
        }
    }

    /// First intersection with terrain or canopy for `t` in `[0, t_max]`,
    /// walking the grid cell by cell (Amanatides-Woo traversal).
    pub fn raycast(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<Hit> {
        let (t_start, t_end) = self.footprint_span(origin, dir)?;
        let t_end = t_end.min(t_max);
        if t_start > t_end {
            return None;
        }
        let cs = self.cell_size;
        let start = origin + dir * t_start;
        let clamp_i = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        let mut i = clamp_i((start.x - self.origin.0) / cs, self.cols);
        let mut j = clamp_i((start.y - self.origin.1) / cs, self.rows);

        let axis = |o: f64, d: f64, idx: usize, base: f64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, (base + (idx + 1) as f64 * cs - o) / d, cs / d)
            } else if d < 0.0 {
                (-1, (base + idx as f64 * cs - o) / d, -cs / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_x, mut next_x, delta_x) = axis(origin.x, dir.x, i, self.origin.0);
        let (step_y, mut next_y, delta_y) = axis(origin.y, dir.y, j, self.origin.1);

        let mut ta = t_start;
        loop {
            let tb = next_x.min(next_y).min(t_end);
            if let Some((t, label)) = self.hit_in_cell((i, j), origin, dir, ta, tb) {
                return Some(Hit {
                    t,
                    point: origin + dir * t,
                    label,
                    cell: (i, j),
                });
            }
            if tb >= t_end {
                return None;
            }
            ta = tb;
            if next_x <= next_y {
                let ni = i as i64 + step_x;
                if ni < 0 || ni >= self.cols as i64 {
                    return None;
                }
                i = ni as usize;
                next_x += delta_x;
            } else {
                let nj = j as i64 + step_y;
                if nj < 0 || nj >= self.rows as i64 {
                    return None;
                }
                j = nj as usize;
                next_y += delta_y;
            }
        }
    }

    /// Distance along unit `dir` until the point would leave the flight volume.
    pub fn bounds_exit(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> f64 {
        let (x0, y0, x1, y1) = self.bounds();
        let mut t = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, x0, x1),
            (origin.y, dir.y, y0, y1),
            (origin.z, dir.z, 0.0, self.ceiling),
        ] {
            if d > 0.0 {
                t = t.min((hi - o) / d);
            } else if d < 0.0 {
                t = t.min((lo - o) / d);
            }
        }
        t.max(0.0)
    }

    /// Ray-cast depth and label images. Depth is z-depth along the optical
    /// axis; pixels with no surface within `max_range` get depth `0` and
    /// [`LabelId::NONE`].
    pub fn render(&self, pose: &UavPose, rig: &CameraRig) -> Result<View, WorldError> {
        let p = pose.position();
        if !pose.is_finite() || !self.in_bounds(&p) {
            return Err(WorldError::OutOfBounds(format!(
                "pose ({:.3}, {:.3}, {:.3}) outside scene",
                p.x, p.y, p.z
            )));
        }
        if self.is_obstacle(&p) {
            return Err(WorldError::OutOfBounds(format!(
                "pose ({:.3}, {:.3}, {:.3}) inside an obstacle",
                p.x, p.y, p.z
            )));
        }
        let k = &rig.intrinsics;
        let r = rig.camera_rotation(pose);
        let mut depth = Image::filled(k.width, k.height, 0.0);
        let mut labels = Image::filled(k.width, k.height, LabelId::NONE);
        for v in 0..k.height {
            for u in 0..k.width {
                // camera ray has unit z, so the ray parameter is the z-depth
                let dir = r * k.ray(u as f64, v as f64);
                if let Some(hit) = self.raycast(&p, &dir, rig.max_range) {
                    if hit.t > 0.0 {
                        depth.set(u, v, hit.t);
                        labels.set(u, v, hit.label);
                    }
                }
            }
        }
        Ok(View { depth, labels })
    }

    pub fn parse(text: &str) -> Result<Scene, WorldError> {
        let (scene, violations) = parse_scene_document(text);
        match scene {
            Some(s) if violations.is_empty() => Ok(s),
            _ => Err(WorldError::Parse(violations)),
        }
    }

    /// Serializes to the `stmr-scene v1` document format.
    pub fn to_document(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{SCENE_HEADER}").unwrap();
        writeln!(s, "cell_size = {}", self.cell_size).unwrap();
        writeln!(s, "origin = {} {}", self.origin.0, self.origin.1).unwrap();
        writeln!(s, "ceiling = {}", self.ceiling).unwrap();
        writeln!(s, "legend =").unwrap();
        for (id, name) in self.legend.iter() {
            writeln!(s, "{id} {name}").unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "height =").unwrap();
        for j in (0..self.rows).rev() {
            let row: Vec<String> = (0..self.cols)
                .map(|i| self.height((i, j)).to_string())
                .collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "label =").unwrap();
        for j in (0..self.rows).rev() {
            let row: Vec<String> = (0..self.cols)
                .map(|i| self.label((i, j)).to_string())
                .collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        if !self.canopies.is_empty() {
            writeln!(s).unwrap();
            writeln!(s, "canopy =").unwrap();
            for (&(i, j), c) in &self.canopies {
                let file_row = self.rows - 1 - j;
                writeln!(s, "{i} {file_row} {} {} {}", c.bottom, c.top, c.label).unwrap();
            }
        }
        s
    }
}

fn parse_grid<T: std::str::FromStr>(
    block: &[(usize, String)],
    what: &str,
    out: &mut Vec<DocError>,
) -> (Vec<Vec<T>>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (n, text) in block {
        match docfmt::numbers::<T>(*n, text, what) {
            Ok(r) => {
                rows.push(r);
                lines.push(*n);
            }
            Err(e) => out.push(e),
        }
    }
    (rows, lines)
}

/// Parses a scene document, collecting every schema violation rather than
/// stopping at the first one. The scene is returned only when it could be
/// assembled; callers must still check the violation list.
pub fn parse_scene_document(text: &str) -> (Option<Scene>, Vec<DocError>) {
    let doc = match Document::parse(text, SCENE_HEADER) {
        Ok(d) => d,
        Err(e) => return (None, vec![e]),
    };
    let mut errs = Vec::new();

    let cell_size = match doc.parsed::<f64>("cell_size") {
        Ok(Some(v)) if v.is_finite() && v > 0.0 => Some(v),
        Ok(Some(_)) => {
            errs.push(DocError::new(
                doc.get("cell_size").map_or(0, |e| e.line),
                "cell_size must be positive",
            ));
            None
        }
        Ok(None) => {
            errs.push(DocError::new(0, "missing field `cell_size`"));
            None
        }
        Err(e) => {
            errs.push(e);
            None
        }
    };
    let origin = match doc.scalar("origin") {
        Ok(None) => (0.0, 0.0),
        Ok(Some((line, s))) => match docfmt::fixed_numbers::<f64>(line, s, 2, "origin") {
            Ok(v) => (v[0], v[1]),
            Err(e) => {
                errs.push(e);
                (0.0, 0.0)
            }
        },
        Err(e) => {
            errs.push(e);
            (0.0, 0.0)
        }
    };
    let ceiling = match doc.parsed::<f64>("ceiling") {
        Ok(v) => v.unwrap_or(DEFAULT_CEILING),
        Err(e) => {
            errs.push(e);
            DEFAULT_CEILING
        }
    };

    let mut legend = Legend::new();
    match doc.require_block("legend") {
        Ok(block) => {
            for (n, text) in block {
                let mut parts = text.splitn(2, char::is_whitespace);
                let id = parts.next().unwrap_or("");
                let name = parts.next().unwrap_or("").trim();
                match id.parse::<u32>() {
                    Ok(0) => errs.push(DocError::new(*n, "legend id 0 is reserved for Unexplored")),
                    Ok(id) if !name.is_empty() => {
                        if legend.insert(LabelId(id), name.to_lowercase()).is_some() {
                            errs.push(DocError::new(*n, format!("duplicate legend id {id}")));
                        }
                    }
                    _ => errs.push(DocError::new(*n, format!("legend: expected `<id> <name>`, found `{text}`"))),
                }
            }
        }
        Err(e) => errs.push(e),
    }

    let heights = doc.require_block("height").map_err(|e| errs.push(e)).ok();
    let labels = doc.require_block("label").map_err(|e| errs.push(e)).ok();
    let (Some(hb), Some(lb)) = (heights, labels) else {
        return (None, errs);
    };
    let (hrows, hlines) = parse_grid::<f64>(hb, "height", &mut errs);
    let (lrows, llines) = parse_grid::<u32>(lb, "label", &mut errs);

    let rows = hrows.len();
    let cols = hrows.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        errs.push(DocError::new(
            doc.get("height").map_or(0, |e| e.line),
            "height grid is empty",
        ));
        return (None, errs);
    }
    for (r, line) in hrows.iter().zip(&hlines) {
        if r.len() != cols {
            errs.push(DocError::new(*line, format!("height: expected {cols} columns, found {}", r.len())));
        }
    }
    if lrows.len() != rows {
        errs.push(DocError::new(
            doc.get("label").map_or(0, |e| e.line),
            format!("label grid has {} rows, height grid has {rows}", lrows.len()),
        ));
    }
    for (r, line) in lrows.iter().zip(&llines) {
        if r.len() != cols {
            errs.push(DocError::new(*line, format!("label: expected {cols} columns, found {}", r.len())));
        }
    }
    for (file_row, (r, line)) in hrows.iter().zip(&hlines).enumerate() {
        for (col, h) in r.iter().enumerate() {
            if !(h.is_finite() && *h >= 0.0) {
                errs.push(DocError::new(
                    *line,
                    format!("height {h} at cell (col {col}, row {file_row}) must be >= 0"),
                ));
            }
        }
    }
    for (file_row, (r, line)) in lrows.iter().zip(&llines).enumerate() {
        for (col, l) in r.iter().enumerate() {
            if !legend.contains(LabelId(*l)) {
                errs.push(DocError::new(
                    *line,
                    format!("label {l} at cell (col {col}, row {file_row}) not in legend"),
                ));
            }
        }
    }
    if !errs.is_empty() {
        return (None, errs);
    }

    let mut heights = Vec::with_capacity(rows * cols);
    let mut labels = Vec::with_capacity(rows * cols);
    for file_row in (0..rows).rev() {
        heights.extend_from_slice(&hrows[file_row]);
        labels.extend(lrows[file_row].iter().map(|&l| LabelId(l)));
    }
    let mut scene = Scene {
        cell_size: cell_size.unwrap_or(1.0),
        origin,
        cols,
        rows,
        ceiling,
        heights,
        labels,
        canopies: BTreeMap::new(),
        legend,
    };

    match doc.block("canopy") {
        Ok(Some(block)) => {
            for (n, text) in block {
                let parsed = docfmt::fixed_numbers::<f64>(*n, text, 5, "canopy");
                let v = match parsed {
                    Ok(v) => v,
                    Err(e) => {
                        errs.push(e);
                        continue;
                    }
                };
                let (col, file_row) = (v[0] as usize, v[1] as usize);
                if v[0].fract() != 0.0 || v[1].fract() != 0.0 || col >= cols || file_row >= rows {
                    errs.push(DocError::new(*n, format!("canopy cell (col {}, row {}) outside grid", v[0], v[1])));
                    continue;
                }
                let label = LabelId(v[4] as u32);
                if !scene.legend.contains(label) {
                    errs.push(DocError::new(
                        *n,
                        format!("canopy label {} at cell (col {col}, row {file_row}) not in legend", label),
                    ));
                    continue;
                }
                let j = rows - 1 - file_row;
                if !(v[2] < v[3]) || v[2] <= scene.height((col, j)) {
                    errs.push(DocError::new(
                        *n,
                        format!("canopy at cell (col {col}, row {file_row}) needs ground < bottom < top"),
                    ));
                    continue;
                }
                scene.canopies.insert(
                    (col, j),
                    Canopy {
                        bottom: v[2],
                        top: v[3],
                        label,
                    },
                );
            }
        }
        Ok(None) => {}
        Err(e) => errs.push(e),
    }
    (Some(scene), errs)
}
