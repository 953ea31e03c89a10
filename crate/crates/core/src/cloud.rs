//! Point-cloud data model, XYZ file I/O and radius-neighborhood queries.
//!
//! Coordinates are millimetres in 64-bit floats. Sphere memberships use the
//! open ball (strict `<`), which every caller in this crate relies on.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{require_positive, Error, Result};

/// A 3D point in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Squared Euclidean distance to `other`.
    pub fn dist2(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Binary organ label. Serialized as `1` (leaf) and `2` (stem).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Leaf,
    Stem,
}

impl Label {
    pub fn code(self) -> u8 {
        match self {
            Label::Leaf => 1,
            Label::Stem => 2,
        }
    }

    pub fn from_code(code: i64) -> Option<Label> {
        match code {
            1 => Some(Label::Leaf),
            2 => Some(Label::Stem),
            _ => None,
        }
    }
}

/// Ordered point collection; points are addressed by dense zero-based index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: u32) -> Point3 {
        self.points[index as usize]
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Componentwise min/max over all points.
    pub fn bounding_box(&self) -> Result<Aabb> {
        let first = *self.points.first().ok_or(Error::EmptyCloud)?;
        let mut min = first;
        let mut max = first;
        for p in &self.points[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            min.z = min.z.min(p.z);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
            max.z = max.z.max(p.z);
        }
        Ok(Aabb { min, max })
    }
}

/// Axis-aligned bounding box, `min` componentwise ≤ `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn extents(&self) -> [f64; 3] {
        [
            self.max.x - self.min.x,
            self.max.y - self.min.y,
            self.max.z - self.min.z,
        ]
    }

    pub fn diagonal(&self) -> f64 {
        let [ex, ey, ez] = self.extents();
        (ex * ex + ey * ey + ez * ez).sqrt()
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

// Grid resolution cap per axis keeps the cell table bounded for sparse or
// elongated clouds.
const MAX_CELLS_PER_AXIS: usize = 512;

/// Uniform voxel grid over an immutable copy of the cloud.
///
/// Radius queries return exactly the brute-force result set; the grid only
/// prunes which points get distance-tested.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    bbox: Aabb,
    cell: f64,
    dims: [usize; 3],
    /// CSR layout: `starts` has one entry per cell plus a terminator,
    /// `items` holds point indices grouped by cell, ascending within a cell.
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl SpatialIndex {
    /// Builds the index. Errors on an empty cloud.
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        let bbox = cloud.bounding_box()?;
        let n = cloud.len();
        let [ex, ey, ez] = bbox.extents();
        let max_extent = ex.max(ey).max(ez);

        // Aim for a handful of points per cell; degenerate extents fall back
        // to a single slab along that axis.
        let volume = ex.max(1e-12) * ey.max(1e-12) * ez.max(1e-12);
        let mut cell = (volume / n as f64).cbrt();
        cell = cell.max(max_extent / MAX_CELLS_PER_AXIS as f64).max(1e-9);

        let dims = [
            (ex / cell) as usize + 1,
            (ey / cell) as usize + 1,
            (ez / cell) as usize + 1,
        ];
        let ncells = dims[0] * dims[1] * dims[2];

        let cell_of = |p: &Point3| -> usize {
            let ix = (((p.x - bbox.min.x) / cell) as usize).min(dims[0] - 1);
            let iy = (((p.y - bbox.min.y) / cell) as usize).min(dims[1] - 1);
            let iz = (((p.z - bbox.min.z) / cell) as usize).min(dims[2] - 1);
            (ix * dims[1] + iy) * dims[2] + iz
        };

        let mut counts = vec![0u32; ncells + 1];
        for p in cloud.iter() {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts;
        let mut fill = starts.clone();
        let mut items = vec![0u32; n];
        for (i, p) in cloud.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }

        Ok(Self {
            points: cloud.points().to_vec(),
            bbox,
            cell,
            dims,
            starts,
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: u32) -> Point3 {
        self.points[index as usize]
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    /// Indices of all points with squared distance to `center` strictly
    /// below `r²`, ascending. Errors on `r ≤ 0`.
    pub fn radius_query(&self, center: Point3, r: f64) -> Result<Vec<u32>> {
        require_positive("r", r)?;
        let r2 = r * r;
        let lo = |c: f64, m: f64, d: usize| -> usize {
            (((c - r - m) / self.cell).floor().max(0.0) as usize).min(d - 1)
        };
        let hi = |c: f64, m: f64, d: usize| -> usize {
            (((c + r - m) / self.cell).floor().max(0.0) as usize).min(d - 1)
        };
        let (x0, x1) = (
            lo(center.x, self.bbox.min.x, self.dims[0]),
            hi(center.x, self.bbox.min.x, self.dims[0]),
        );
        let (y0, y1) = (
            lo(center.y, self.bbox.min.y, self.dims[1]),
            hi(center.y, self.bbox.min.y, self.dims[1]),
        );
        let (z0, z1) = (
            lo(center.z, self.bbox.min.z, self.dims[2]),
            hi(center.z, self.bbox.min.z, self.dims[2]),
        );

        let mut out = Vec::new();
        for ix in x0..=x1 {
            for iy in y0..=y1 {
                let row = (ix * self.dims[1] + iy) * self.dims[2];
                let a = self.starts[row + z0] as usize;
                let b = self.starts[row + z1 + 1] as usize;
                for &id in &self.items[a..b] {
                    if self.points[id as usize].dist2(&center) < r2 {
                        out.push(id);
                    }
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

fn parse_coord(path: &Path, line_no: usize, token: &str, what: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(path, line_no, format!("invalid {what} value `{token}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(
            path,
            line_no,
            format!("non-finite {what} value `{token}`"),
        ));
    }
    Ok(v)
}

/// Reads an ASCII XYZ file: one point per line, `x y z [extra columns...]`,
/// whitespace-separated. Blank lines and lines starting with `#` are skipped;
/// columns beyond the first three are ignored.
pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut next = |what: &str| -> Result<f64> {
            let tok = fields.next().ok_or_else(|| {
                Error::parse(
                    path,
                    line_no,
                    format!("expected 3 numeric fields, missing {what}"),
                )
            })?;
            parse_coord(path, line_no, tok, what)
        };
        let x = next("x")?;
        let y = next("y")?;
        let z = next("z")?;
        points.push(Point3::new(x, y, z));
    }
    Ok(PointCloud::new(points))
}

/// Reads a labeled file. Accepts either the 4-column format written by
/// [`save_labeled`] (label is the 4th column) or a bare label per line.
pub fn load_labeled(path: impl AsRef<Path>) -> Result<(PointCloud, Vec<Label>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let label_tok = match fields.len() {
            1 => fields[0],
            0..=3 => {
                return Err(Error::parse(
                    path,
                    line_no,
                    "expected `x y z label` or a bare label",
                ))
            }
            _ => {
                let x = parse_coord(path, line_no, fields[0], "x")?;
                let y = parse_coord(path, line_no, fields[1], "y")?;
                let z = parse_coord(path, line_no, fields[2], "z")?;
                points.push(Point3::new(x, y, z));
                fields[3]
            }
        };
        let code: i64 = label_tok
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid label `{label_tok}`")))?;
        let label = Label::from_code(code).ok_or_else(|| {
            Error::parse(
                path,
                line_no,
                format!("unknown label code `{code}` (expected 1 or 2)"),
            )
        })?;
        labels.push(label);
    }
    Ok((PointCloud::new(points), labels))
}

/// Writes `x y z label` per point, label `1` = leaf, `2` = stem. Coordinates
/// use the shortest decimal representation that round-trips through `f64`.
pub fn save_labeled(path: impl AsRef<Path>, cloud: &PointCloud, labels: &[Label]) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            points: cloud.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (p, label) in cloud.iter().zip(labels) {
        writeln!(w, "{} {} {} {}", p.x, p.y, p.z, label.code()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes an ASCII PLY with per-point RGB for external viewers:
/// leaf = green (0,255,0), stem = red (255,0,0).
pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud, labels: &[Label]) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            points: cloud.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", cloud.len())?;
        writeln!(w, "property double x")?;
        writeln!(w, "property double y")?;
        writeln!(w, "property double z")?;
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
        writeln!(w, "end_header")?;
        for (p, label) in cloud.iter().zip(labels) {
            let (r, g, b) = match label {
                Label::Leaf => (0, 255, 0),
                Label::Stem => (255, 0, 0),
            };
            writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, r, g, b)?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Brute-force reference for [`SpatialIndex::radius_query`]; used by tests
/// and kept here so callers can cross-check the index on their own data.
pub fn radius_scan(cloud: &PointCloud, center: Point3, r: f64) -> Vec<u32> {
    let r2 = r * r;
    cloud
        .iter()
        .enumerate()
        .filter(|(_, p)| p.dist2(&center) < r2)
        .map(|(i, _)| i as u32)
        .collect()
}

/// Sorted set union helper shared by the training-set expansion paths.
pub(crate) fn union_sorted(sets: impl IntoIterator<Item = Vec<u32>>) -> Vec<u32> {
    let mut all = BTreeSet::new();
    for set in sets {
        all.extend(set);
    }
    all.into_iter().collect()
}
