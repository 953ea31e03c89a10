//! Grid-projection density scoring and stem sample selection.
//!
//! For a candidate point, all neighbors inside a sphere are projected onto
//! the XOY plane; the circumscribed square of the projected circle is meshed
//! at a fixed spacing and the density is points-per-occupied-cell. Vertical
//! structures (stems) stack many points into few cells and score high;
//! spread leaves score near 1.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::{Label, Point3, PointCloud, SpatialIndex};
use crate::error::{require_positive, Error, Result};
use crate::hull::SampleSet;

/// Parameters of the stem sample search.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityParams {
    /// Number of random candidate points to score (the CLI's `--p`).
    pub candidates: usize,
    /// Neighborhood sphere radius in mm (the CLI's `--r`).
    pub radius: f64,
    /// Projection grid spacing in mm.
    pub grid_spacing: f64,
    /// How many top-density candidates become stem samples (the CLI's `--n`).
    pub keep: usize,
    /// RNG seed for the candidate draw.
    pub seed: u64,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            candidates: 500,
            radius: 5.0,
            grid_spacing: 0.1,
            keep: 20,
            seed: 0,
        }
    }
}

impl DensityParams {
    pub fn validate(&self) -> Result<()> {
        if self.keep < 1 {
            return Err(Error::param("n", "must keep at least 1 sample"));
        }
        if self.candidates < self.keep {
            return Err(Error::param(
                "p",
                format!(
                    "candidate count {} must be >= n = {}",
                    self.candidates, self.keep
                ),
            ));
        }
        require_positive("r", self.radius)?;
        require_positive("grid-spacing", self.grid_spacing)?;
        if self.grid_spacing >= 2.0 * self.radius {
            return Err(Error::param(
                "grid-spacing",
                format!(
                    "must be smaller than the sphere diameter {} mm",
                    2.0 * self.radius
                ),
            ));
        }
        Ok(())
    }
}

/// Density measurement of one sphere: `density = points_in_sphere /
/// occupied_cells`, or all zero when the sphere is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDensity {
    pub points_in_sphere: usize,
    pub occupied_cells: usize,
    pub density: f64,
}

/// Per-candidate diagnostic row, exportable as CSV `index,l,num,m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityReport {
    pub index: u32,
    pub measure: GridDensity,
}

/// Computes the grid-projection density of the sphere around `center`.
///
/// In-sphere points map to half-open cells of the square `[cx-r, cx+r] x
/// [cy-r, cy+r]`; the grid is anchored to that square, so translating cloud
/// and center together leaves the result unchanged.
pub fn grid_density(
    index: &SpatialIndex,
    center: Point3,
    r: f64,
    grid_spacing: f64,
) -> Result<GridDensity> {
    require_positive("grid-spacing", grid_spacing)?;
    let ids = index.radius_query(center, r)?;
    if ids.is_empty() {
        return Ok(GridDensity {
            points_in_sphere: 0,
            occupied_cells: 0,
            density: 0.0,
        });
    }
    let ox = center.x - r;
    let oy = center.y - r;
    let mut cells: HashSet<(i64, i64)> = HashSet::with_capacity(ids.len());
    for &id in &ids {
        let p = index.point(id);
        let cx = ((p.x - ox) / grid_spacing).floor() as i64;
        let cy = ((p.y - oy) / grid_spacing).floor() as i64;
        cells.insert((cx, cy));
    }
    let l = ids.len();
    let num = cells.len();
    Ok(GridDensity {
        points_in_sphere: l,
        occupied_cells: num,
        density: l as f64 / num as f64,
    })
}

/// Draws `p` distinct candidates, scores them, and keeps the `n` densest as
/// the stem sample set. Deterministic for a fixed cloud and parameters.
///
/// Candidates are drawn by Fisher-Yates over the coordinate-sorted point
/// order, so the selected points do not depend on the cloud's storage order.
/// Ties on density break by larger in-sphere count, then smaller index.
pub fn select_stem_samples(
    index: &SpatialIndex,
    params: &DensityParams,
) -> Result<(SampleSet, Vec<DensityReport>)> {
    params.validate()?;
    let n_points = index.len();
    if n_points < params.candidates {
        return Err(Error::NotEnoughPoints {
            requested: params.candidates,
            available: n_points,
        });
    }

    let candidates = canonical_draw(index, params.candidates, params.seed);

    let reports: Vec<DensityReport> = candidates
        .par_iter()
        .map(|&id| {
            let measure = grid_density(index, index.point(id), params.radius, params.grid_spacing)?;
            debug_assert!(measure.points_in_sphere >= 1, "candidate is a cloud point");
            Ok(DensityReport { index: id, measure })
        })
        .collect::<Result<_>>()?;

    let mut ranked: Vec<&DensityReport> = reports.iter().collect();
    ranked.sort_by(|a, b| {
        b.measure
            .density
            .partial_cmp(&a.measure.density)
            .expect("density is never NaN")
            .then(b.measure.points_in_sphere.cmp(&a.measure.points_in_sphere))
            .then(a.index.cmp(&b.index))
    });
    let mut indices: Vec<u32> = ranked[..params.keep].iter().map(|r| r.index).collect();
    indices.sort_unstable();

    Ok((
        SampleSet {
            indices,
            kind: Label::Stem,
        },
        reports,
    ))
}

/// Draws `count` distinct point indices without replacement, seeded.
///
/// The Fisher-Yates shuffle runs over the coordinate-sorted point order, so
/// for a fixed seed the drawn point set is invariant to how the cloud file
/// happens to be ordered.
pub(crate) fn canonical_draw(index: &SpatialIndex, count: usize, seed: u64) -> Vec<u32> {
    let n = index.len();
    debug_assert!(count <= n);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        let pa = index.point(a);
        let pb = index.point(b);
        pa.x.total_cmp(&pb.x)
            .then(pa.y.total_cmp(&pb.y))
            .then(pa.z.total_cmp(&pb.z))
            .then(a.cmp(&b))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..count {
        let j = rng.random_range(k..n);
        order.swap(k, j);
    }
    order.truncate(count);
    order
}

/// Thresholds of the automated stem-sample acceptance check and retry bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    /// Max pairwise XY distance among samples, as a fraction of the larger
    /// horizontal bounding-box extent.
    pub compactness_factor: f64,
    /// Min vertical spread of samples, as a fraction of the Z extent.
    pub spread_factor: f64,
    /// How many reselections (seed+1 each) to attempt before giving up.
    pub max_retries: u32,
    /// Escape hatch: accept any sample set unchecked.
    pub enabled: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            compactness_factor: 0.25,
            spread_factor: 0.3,
            max_retries: 10,
            enabled: true,
        }
    }
}

/// Why a stem sample set was rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    /// Samples scatter too widely in XY to be one stem.
    Compactness { spread: f64, limit: f64 },
    /// Samples cover too little of the plant's height.
    Spread { spread: f64, required: f64 },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Compactness { spread, limit } => {
                write!(
                    f,
                    "horizontal sample spread {spread:.3} mm exceeds {limit:.3} mm"
                )
            }
            Rejection::Spread { spread, required } => {
                write!(
                    f,
                    "vertical sample spread {spread:.3} mm is below {required:.3} mm"
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validation {
    Accepted,
    Rejected(Rejection),
}

/// Automated plausibility check for a stem sample set: a stem is
/// horizontally compact and vertically extended.
pub fn validate_stem_samples(
    cloud: &PointCloud,
    samples: &SampleSet,
    cfg: &ValidationConfig,
) -> Result<Validation> {
    if samples.indices.is_empty() {
        return Err(Error::EmptySamples);
    }
    debug_assert_eq!(samples.kind, Label::Stem);
    let bbox = cloud.bounding_box()?;
    let [ex, ey, ez] = bbox.extents();

    let pts: Vec<Point3> = samples.indices.iter().map(|&i| cloud.point(i)).collect();
    let mut max_xy2: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let dx = pts[i].x - pts[j].x;
            let dy = pts[i].y - pts[j].y;
            max_xy2 = max_xy2.max(dx * dx + dy * dy);
        }
    }
    let limit = cfg.compactness_factor * ex.max(ey);
    if max_xy2.sqrt() > limit {
        return Ok(Validation::Rejected(Rejection::Compactness {
            spread: max_xy2.sqrt(),
            limit,
        }));
    }

    let z_min = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let z_max = pts.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    let required = cfg.spread_factor * ez;
    if z_max - z_min < required {
        return Ok(Validation::Rejected(Rejection::Spread {
            spread: z_max - z_min,
            required,
        }));
    }
    Ok(Validation::Accepted)
}

/// Writes the per-candidate diagnostics as CSV with header `index,l,num,m`.
pub fn write_density_csv(path: impl AsRef<Path>, reports: &[DensityReport]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "index,l,num,m")?;
        for r in reports {
            writeln!(
                w,
                "{},{},{},{}",
                r.index, r.measure.points_in_sphere, r.measure.occupied_cells, r.measure.density
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}
