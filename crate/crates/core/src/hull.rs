//! 3D convex hull (quickhull) and the leaf training-set construction built
//! on its vertices.
//!
//! Hull vertices are the strict extreme points of the cloud: points that are
//! merely coplanar with a hull face stay interior and are never reported as
//! vertices. Plane-side tests use a tolerance proportional to the cloud's
//! bounding-box diagonal.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cloud::{union_sorted, Label, Point3, PointCloud, SpatialIndex};
use crate::error::{require_positive, Error, Result};

/// Plane-side tolerance as a fraction of the bounding-box diagonal.
pub const HULL_EPS_FACTOR: f64 = 1e-7;

/// Triangulated convex hull over a source cloud. Vertex and face indices
/// refer to points of that cloud.
#[derive(Debug, Clone)]
pub struct HullMesh {
    /// Sorted, deduplicated indices of the hull's extreme points.
    pub vertices: Vec<u32>,
    /// Outward-oriented triangles.
    pub faces: Vec<[u32; 3]>,
}

/// Indices of selected sample points, leaf or stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub indices: Vec<u32>,
    pub kind: Label,
}

/// Class-labeled training subsets fed to the SVM: `leaf` is class 1,
/// `stem` is class 2.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub leaf: Vec<u32>,
    pub stem: Vec<u32>,
}

impl TrainingSet {
    /// Removes the intersection from both sides; a point carrying both
    /// class labels would poison the SVM. Returns the resolved set and the
    /// number of dropped points.
    pub fn resolve_overlap(leaf: Vec<u32>, stem: Vec<u32>) -> (TrainingSet, usize) {
        let leaf_set: BTreeSet<u32> = leaf.iter().copied().collect();
        let stem_set: BTreeSet<u32> = stem.iter().copied().collect();
        let overlap: BTreeSet<u32> = leaf_set.intersection(&stem_set).copied().collect();
        let resolved = TrainingSet {
            leaf: leaf.into_iter().filter(|i| !overlap.contains(i)).collect(),
            stem: stem.into_iter().filter(|i| !overlap.contains(i)).collect(),
        };
        (resolved, overlap.len())
    }
}

impl HullMesh {
    /// Leaf sample points: the hull apexes, which on an upright potted
    /// plant are usually leaf tips.
    pub fn leaf_samples(&self) -> SampleSet {
        SampleSet {
            indices: self.vertices.clone(),
            kind: Label::Leaf,
        }
    }

    /// Writes the hull as an ASCII OFF mesh for external viewers.
    pub fn write_off(&self, path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let remap: HashMap<u32, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(pos, &v)| (v, pos))
            .collect();
        let mut emit = || -> std::io::Result<()> {
            writeln!(w, "OFF")?;
            writeln!(w, "{} {} 0", self.vertices.len(), self.faces.len())?;
            for &v in &self.vertices {
                let p = cloud.point(v);
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
            for f in &self.faces {
                writeln!(w, "3 {} {} {}", remap[&f[0]], remap[&f[1]], remap[&f[2]])?;
            }
            w.flush()
        };
        emit().map_err(|e| Error::io(path, e))
    }
}

/// The union over all sample centers of the open ball of radius `r`, i.e.
/// the leaf/stem training-set construction. Duplicates are counted once;
/// the result is sorted ascending.
pub fn expand_training(index: &SpatialIndex, samples: &SampleSet, r: f64) -> Result<Vec<u32>> {
    require_positive("r", r)?;
    if samples.indices.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut balls = Vec::with_capacity(samples.indices.len());
    for &s in &samples.indices {
        balls.push(index.radius_query(index.point(s), r)?);
    }
    Ok(union_sorted(balls))
}

type Vec3 = [f64; 3];

fn sub(a: Point3, b: Point3) -> Vec3 {
    [a.x - b.x, a.y - b.y, a.z - b.z]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
struct Face {
    verts: [u32; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<u32>,
    farthest: u32,
    farthest_sd: f64,
    alive: bool,
}

impl Face {
    fn sd(&self, p: Point3) -> f64 {
        dot(self.normal, p.coords()) - self.offset
    }

    fn edges(&self) -> [(u32, u32); 3] {
        let [a, b, c] = self.verts;
        [(a, b), (b, c), (c, a)]
    }
}

struct Builder<'a> {
    points: &'a [Point3],
    eps: f64,
    min_area: f64,
    interior: Point3,
    faces: Vec<Face>,
    /// Directed edge -> alive face owning it. Every edge of the current
    /// closed mesh has its twin owned by the adjacent face.
    edge_owner: HashMap<(u32, u32), usize>,
}

impl<'a> Builder<'a> {
    fn register(&mut self, face_id: usize) {
        for e in self.faces[face_id].edges() {
            self.edge_owner.insert(e, face_id);
        }
    }

    fn retire(&mut self, face_id: usize) -> Vec<u32> {
        let edges = self.faces[face_id].edges();
        let face = &mut self.faces[face_id];
        face.alive = false;
        let orphans = std::mem::take(&mut face.outside);
        for e in edges {
            self.edge_owner.remove(&e);
        }
        orphans
    }

    /// Builds a face with outward orientation (interior reference below the
    /// plane). Nearly collinear triangles inherit `fallback` as their plane
    /// so slivers stay consistent with the neighboring geometry.
    fn make_face(&self, a: u32, b: u32, c: u32, fallback: Option<(Vec3, f64)>) -> Face {
        let pa = self.points[a as usize];
        let pb = self.points[b as usize];
        let pc = self.points[c as usize];
        let n = cross(sub(pb, pa), sub(pc, pa));
        let len = norm(n);
        let (mut normal, mut offset);
        if len > self.min_area {
            normal = [n[0] / len, n[1] / len, n[2] / len];
            offset = dot(normal, pa.coords());
        } else if let Some((fn_, fo)) = fallback {
            normal = fn_;
            offset = fo;
        } else {
            normal = [0.0, 0.0, 1.0];
            offset = dot(normal, pa.coords());
        }
        let mut verts = [a, b, c];
        if dot(normal, self.interior.coords()) - offset > 0.0 {
            verts.swap(1, 2);
            normal = [-normal[0], -normal[1], -normal[2]];
            offset = -offset;
        }
        Face {
            verts,
            normal,
            offset,
            outside: Vec::new(),
            farthest: 0,
            farthest_sd: f64::NEG_INFINITY,
            alive: true,
        }
    }

    fn assign_to_best(&mut self, point_ids: impl IntoIterator<Item = u32>, face_ids: &[usize]) {
        for id in point_ids {
            let p = self.points[id as usize];
            let mut best: Option<(usize, f64)> = None;
            for &fi in face_ids {
                let sd = self.faces[fi].sd(p);
                if sd > self.eps && best.is_none_or(|(_, b)| sd > b) {
                    best = Some((fi, sd));
                }
            }
            if let Some((fi, sd)) = best {
                let face = &mut self.faces[fi];
                face.outside.push(id);
                if sd > face.farthest_sd {
                    face.farthest_sd = sd;
                    face.farthest = id;
                }
            }
        }
    }
}

/// Computes the convex hull of the cloud with the quickhull incremental
/// facet expansion. Errors when fewer than 4 points are given or the cloud
/// is degenerate (all points within tolerance of a common plane).
pub fn convex_hull_3d(cloud: &PointCloud) -> Result<HullMesh> {
    let n = cloud.len();
    if n < 4 {
        return Err(Error::TooFewPoints(n));
    }
    let points = cloud.points();
    let bbox = cloud.bounding_box()?;
    let diag = bbox.diagonal();
    if diag == 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let eps = HULL_EPS_FACTOR * diag;

    let (t0, t1, t2, t3) = initial_tetrahedron(points, eps)?;
    let centroid = {
        let mut c = [0.0; 3];
        for &i in &[t0, t1, t2, t3] {
            let p = points[i as usize];
            c[0] += p.x;
            c[1] += p.y;
            c[2] += p.z;
        }
        Point3::new(c[0] / 4.0, c[1] / 4.0, c[2] / 4.0)
    };

    let mut builder = Builder {
        points,
        eps,
        min_area: 1e-14 * diag * diag,
        interior: centroid,
        faces: Vec::new(),
        edge_owner: HashMap::new(),
    };

    for (a, b, c) in [(t0, t1, t2), (t0, t1, t3), (t0, t2, t3), (t1, t2, t3)] {
        let face = builder.make_face(a, b, c, None);
        builder.faces.push(face);
        builder.register(builder.faces.len() - 1);
    }
    let initial: Vec<usize> = (0..4).collect();
    let tetra = [t0, t1, t2, t3];
    builder.assign_to_best((0..n as u32).filter(|i| !tetra.contains(i)), &initial);

    let mut worklist: Vec<usize> = (0..4).collect();
    while let Some(fi) = worklist.pop() {
        if !builder.faces[fi].alive || builder.faces[fi].outside.is_empty() {
            continue;
        }
        let eye_id = builder.faces[fi].farthest;
        let eye = points[eye_id as usize];

        let mut visible: Vec<usize> = builder
            .faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.alive && f.sd(eye) > builder.eps)
            .map(|(i, _)| i)
            .collect();

        let horizon = extract_horizon(&builder, &mut visible)?;

        // The invisible face across each horizon edge donates its plane to
        // sliver cone faces whose own normal is unreliable.
        let fallbacks: Vec<Option<(Vec3, f64)>> = horizon
            .iter()
            .map(|&(a, b)| {
                builder.edge_owner.get(&(b, a)).map(|&fi| {
                    let f = &builder.faces[fi];
                    (f.normal, f.offset)
                })
            })
            .collect();

        // Retire visible faces and collect their orphaned outside points.
        let mut orphans: Vec<u32> = Vec::new();
        for vi in visible {
            orphans.extend(builder.retire(vi));
        }
        orphans.retain(|&id| id != eye_id);

        // Cone of new faces from the eye over the horizon.
        let mut new_ids = Vec::with_capacity(horizon.len());
        for (&(a, b), fallback) in horizon.iter().zip(fallbacks) {
            let face = builder.make_face(a, b, eye_id, fallback);
            builder.faces.push(face);
            let id = builder.faces.len() - 1;
            builder.register(id);
            new_ids.push(id);
        }
        builder.assign_to_best(orphans, &new_ids);
        for &ni in &new_ids {
            if !builder.faces[ni].outside.is_empty() {
                worklist.push(ni);
            }
        }
    }

    let mut faces = Vec::new();
    let mut vertices = BTreeSet::new();
    for face in builder.faces.iter().filter(|f| f.alive) {
        faces.push(face.verts);
        vertices.extend(face.verts);
    }
    Ok(HullMesh {
        vertices: vertices.into_iter().collect(),
        faces,
    })
}

/// Oriented boundary edges of the visible region. Expands the visible set
/// when the boundary is not a single simple loop (coplanar-degenerate
/// islands or pinch vertices).
fn extract_horizon(builder: &Builder<'_>, visible: &mut Vec<usize>) -> Result<Vec<(u32, u32)>> {
    loop {
        let mut in_visible = vec![false; builder.faces.len()];
        for &vi in visible.iter() {
            in_visible[vi] = true;
        }
        let mut horizon: Vec<(u32, u32)> = Vec::new();
        for &vi in visible.iter() {
            for (a, b) in builder.faces[vi].edges() {
                match builder.edge_owner.get(&(b, a)) {
                    Some(&other) if in_visible[other] => {}
                    _ => horizon.push((a, b)),
                }
            }
        }

        if horizon_is_simple_loop(&horizon) {
            return Ok(horizon);
        }

        // Pull in invisible faces bordering the broken horizon on two or
        // more edges; this fills islands and merges pinched loops.
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for &(a, b) in &horizon {
            if let Some(&fi) = builder.edge_owner.get(&(b, a)) {
                if !in_visible[fi] {
                    *counts.entry(fi).or_default() += 1;
                }
            }
        }
        let mut additions: Vec<usize> = counts
            .into_iter()
            .filter_map(|(fi, c)| (c >= 2).then_some(fi))
            .collect();
        additions.sort_unstable();
        if additions.is_empty() {
            return Err(Error::HullInternal("horizon is not a simple loop"));
        }
        visible.extend(additions);
    }
}

fn horizon_is_simple_loop(horizon: &[(u32, u32)]) -> bool {
    if horizon.is_empty() {
        return false;
    }
    let mut next: HashMap<u32, u32> = HashMap::new();
    for &(a, b) in horizon {
        if next.insert(a, b).is_some() {
            return false; // vertex leaves the horizon twice
        }
    }
    if next.len() != horizon.len() {
        return false;
    }
    // A single cycle must traverse every edge before closing.
    let start = horizon[0].0;
    let mut cur = start;
    let mut steps = 0usize;
    loop {
        match next.get(&cur) {
            Some(&b) => {
                cur = b;
                steps += 1;
            }
            None => return false,
        }
        if cur == start {
            return steps == horizon.len();
        }
        if steps > horizon.len() {
            return false;
        }
    }
}

/// Picks four affinely independent points spanning the cloud: the most
/// distant axis-extreme pair, the point farthest from their line, then the
/// point farthest from their plane.
fn initial_tetrahedron(points: &[Point3], eps: f64) -> Result<(u32, u32, u32, u32)> {
    let mut extremes = [0usize; 6];
    for (i, p) in points.iter().enumerate() {
        let c = p.coords();
        for axis in 0..3 {
            if c[axis] < points[extremes[axis * 2]].coords()[axis] {
                extremes[axis * 2] = i;
            }
            if c[axis] > points[extremes[axis * 2 + 1]].coords()[axis] {
                extremes[axis * 2 + 1] = i;
            }
        }
    }

    let (mut p0, mut p1, mut best) = (extremes[0], extremes[1], -1.0);
    for i in 0..6 {
        for j in (i + 1)..6 {
            let d = points[extremes[i]].dist2(&points[extremes[j]]);
            if d > best {
                best = d;
                p0 = extremes[i];
                p1 = extremes[j];
            }
        }
    }
    if best.sqrt() <= eps {
        return Err(Error::Degenerate(
            "all points coincide within tolerance".into(),
        ));
    }

    let dir = sub(points[p1], points[p0]);
    let dir_len = norm(dir);
    let (mut p2, mut best) = (0usize, -1.0);
    for (i, p) in points.iter().enumerate() {
        let d = norm(cross(sub(*p, points[p0]), dir)) / dir_len;
        if d > best {
            best = d;
            p2 = i;
        }
    }
    if best <= eps {
        return Err(Error::Degenerate(
            "points are collinear within tolerance".into(),
        ));
    }

    let n = cross(dir, sub(points[p2], points[p0]));
    let n_len = norm(n);
    let unit = [n[0] / n_len, n[1] / n_len, n[2] / n_len];
    let off = dot(unit, points[p0].coords());
    let (mut p3, mut best) = (0usize, -1.0);
    for (i, p) in points.iter().enumerate() {
        let d = (dot(unit, p.coords()) - off).abs();
        if d > best {
            best = d;
            p3 = i;
        }
    }
    if best <= eps {
        return Err(Error::Degenerate(
            "points are coplanar within tolerance".into(),
        ));
    }

    Ok((p0 as u32, p1 as u32, p2 as u32, p3 as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn cloud_from(coords: &[(f64, f64, f64)]) -> PointCloud {
        PointCloud::new(
            coords
                .iter()
                .map(|&(x, y, z)| Point3::new(x, y, z))
                .collect(),
        )
    }

    fn uniform_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> PointCloud {
        let mut points = Vec::with_capacity(n);
        while points.len() < n {
            let p = Point3::new(
                rng.random_range(-radius..radius),
                rng.random_range(-radius..radius),
                rng.random_range(-radius..radius),
            );
            if p.dist2(&Point3::new(0.0, 0.0, 0.0)) < radius * radius {
                points.push(p);
            }
        }
        PointCloud::new(points)
    }

    /// O(n^4) extreme-point oracle: a point is a hull vertex iff it lies on
    /// a plane spanned by 3 points with every other point strictly on one
    /// side. Valid for points in general position.
    pub(crate) fn oracle_vertices(cloud: &PointCloud) -> BTreeSet<u32> {
        let pts = cloud.points();
        let n = pts.len();
        let mut verts = BTreeSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let nrm = cross(sub(pts[j], pts[i]), sub(pts[k], pts[i]));
                    if norm(nrm) == 0.0 {
                        continue;
                    }
                    let off = dot(nrm, pts[i].coords());
                    let mut pos = false;
                    let mut neg = false;
                    for (t, p) in pts.iter().enumerate() {
                        if t == i || t == j || t == k {
                            continue;
                        }
                        let sd = dot(nrm, p.coords()) - off;
                        if sd > 0.0 {
                            pos = true;
                        } else if sd < 0.0 {
                            neg = true;
                        }
                        if pos && neg {
                            break;
                        }
                    }
                    if !(pos && neg) {
                        verts.insert(i as u32);
                        verts.insert(j as u32);
                        verts.insert(k as u32);
                    }
                }
            }
        }
        verts
    }

    /// Independent cross-check of the oracle itself: v is NOT a vertex iff
    /// it is a convex combination of the others, decided by scanning all
    /// tetrahedra for barycentric containment. Only usable on tiny inputs.
    fn barycentric_non_vertices(cloud: &PointCloud) -> BTreeSet<u32> {
        let pts = cloud.points();
        let n = pts.len();
        let mut inside = BTreeSet::new();
        for v in 0..n {
            'search: for a in 0..n {
                for b in (a + 1)..n {
                    for c in (b + 1)..n {
                        for d in (c + 1)..n {
                            if [a, b, c, d].contains(&v) {
                                continue;
                            }
                            if tetra_contains(pts[a], pts[b], pts[c], pts[d], pts[v]) {
                                inside.insert(v as u32);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        inside
    }

    fn tetra_contains(a: Point3, b: Point3, c: Point3, d: Point3, p: Point3) -> bool {
        let vol = |x: Point3, y: Point3, z: Point3, w: Point3| -> f64 {
            dot(sub(y, x), cross(sub(z, x), sub(w, x)))
        };
        let total = vol(a, b, c, d);
        if total == 0.0 {
            return false;
        }
        let s = total.signum();
        let v0 = vol(p, b, c, d) * s;
        let v1 = vol(a, p, c, d) * s;
        let v2 = vol(a, b, p, d) * s;
        let v3 = vol(a, b, c, p) * s;
        v0 >= 0.0 && v1 >= 0.0 && v2 >= 0.0 && v3 >= 0.0
    }

    fn check_mesh_invariants(cloud: &PointCloud, hull: &HullMesh) {
        // Closed 2-manifold: every edge shared by exactly two faces, with
        // opposite orientations.
        let mut directed = HashSet::new();
        for f in &hull.faces {
            for e in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                assert!(directed.insert(e), "directed edge {e:?} appears twice");
            }
        }
        for &(a, b) in &directed {
            assert!(directed.contains(&(b, a)), "edge ({a},{b}) lacks its twin");
        }
        let e = directed.len() / 2;
        let v = hull.vertices.len();
        let f = hull.faces.len();
        assert_eq!(
            v + f,
            e + 2,
            "Euler characteristic violated: V={v} E={e} F={f}"
        );

        // Every listed vertex is referenced by at least one face.
        let referenced: BTreeSet<u32> = hull.faces.iter().flatten().copied().collect();
        assert_eq!(referenced, hull.vertices.iter().copied().collect());

        // Containment: every cloud point on or inside every face plane.
        let eps = HULL_EPS_FACTOR * cloud.bounding_box().unwrap().diagonal();
        for face in &hull.faces {
            let a = cloud.point(face[0]);
            let b = cloud.point(face[1]);
            let c = cloud.point(face[2]);
            let n = cross(sub(b, a), sub(c, a));
            let len = norm(n);
            if len < 1e-12 {
                continue; // sliver face, plane direction unreliable
            }
            let unit = [n[0] / len, n[1] / len, n[2] / len];
            let off = dot(unit, a.coords());
            for p in cloud.iter() {
                let sd = dot(unit, p.coords()) - off;
                assert!(sd <= eps, "point {p:?} lies {sd} above a hull face");
            }
        }
    }

    #[test]
    fn tetrahedron_hull() {
        let cloud = cloud_from(&[
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 0.0, 1.0),
        ]);
        let hull = convex_hull_3d(&cloud).unwrap();
        assert_eq!(hull.vertices, vec![0, 1, 2, 3]);
        assert_eq!(hull.faces.len(), 4);
        check_mesh_invariants(&cloud, &hull);
    }

    #[test]
    fn cube_with_centroid_excludes_interior() {
        let mut coords: Vec<(f64, f64, f64)> = (0..8)
            .map(|i| {
                (
                    ((i & 1) as f64),
                    (((i >> 1) & 1) as f64),
                    (((i >> 2) & 1) as f64),
                )
            })
            .collect();
        coords.push((0.5, 0.5, 0.5));
        let cloud = cloud_from(&coords);
        let hull = convex_hull_3d(&cloud).unwrap();
        assert_eq!(hull.vertices, (0..8).collect::<Vec<u32>>());
        check_mesh_invariants(&cloud, &hull);
    }

    #[test]
    fn too_few_points() {
        let cloud = cloud_from(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]);
        assert!(matches!(
            convex_hull_3d(&cloud),
            Err(Error::TooFewPoints(3))
        ));
    }

    #[test]
    fn coplanar_cloud_is_degenerate() {
        let cloud = cloud_from(&[
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (1.0, 1.0, 0.0),
            (0.3, 0.7, 0.0),
        ]);
        assert!(matches!(convex_hull_3d(&cloud), Err(Error::Degenerate(_))));
    }

    #[test]
    fn collinear_cloud_is_degenerate() {
        let cloud = cloud_from(&[
            (0.0, 0.0, 0.0),
            (1.0, 1.0, 1.0),
            (2.0, 2.0, 2.0),
            (3.0, 3.0, 3.0),
        ]);
        assert!(matches!(convex_hull_3d(&cloud), Err(Error::Degenerate(_))));
    }

    #[test]
    fn hull_matches_oracle_on_random_subsamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ball = uniform_ball(&mut rng, 200, 1.0);
        for _ in 0..5 {
            let mut picked: Vec<u32> = (0..200).collect();
            for k in 0..40 {
                let j = rng.random_range(k..200);
                picked.swap(k, j);
            }
            let sub: Vec<Point3> = picked[..40].iter().map(|&i| ball.point(i)).collect();
            let cloud = PointCloud::new(sub);
            let hull = convex_hull_3d(&cloud).unwrap();
            let got: BTreeSet<u32> = hull.vertices.iter().copied().collect();
            assert_eq!(got, oracle_vertices(&cloud));
            check_mesh_invariants(&cloud, &hull);
        }
    }

    #[test]
    fn oracle_agrees_with_barycentric_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..4 {
            let cloud = uniform_ball(&mut rng, 12, 1.0);
            let verts = oracle_vertices(&cloud);
            let non: BTreeSet<u32> = barycentric_non_vertices(&cloud);
            let all: BTreeSet<u32> = (0..12).collect();
            let complement: BTreeSet<u32> = all.difference(&non).copied().collect();
            assert_eq!(verts, complement);
        }
    }

    #[test]
    fn vertex_set_invariant_under_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = uniform_ball(&mut rng, 120, 2.0);
        let hull = convex_hull_3d(&cloud).unwrap();
        let verts: BTreeSet<_> = hull
            .vertices
            .iter()
            .map(|&i| cloud.point(i).coords().map(f64::to_bits))
            .collect();

        let mut shuffled: Vec<Point3> = cloud.points().to_vec();
        for k in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=k);
            shuffled.swap(k, j);
        }
        let cloud2 = PointCloud::new(shuffled);
        let hull2 = convex_hull_3d(&cloud2).unwrap();
        let verts2: BTreeSet<_> = hull2
            .vertices
            .iter()
            .map(|&i| cloud2.point(i).coords().map(f64::to_bits))
            .collect();
        assert_eq!(verts, verts2);
    }

    #[test]
    fn rerun_on_vertices_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cloud = uniform_ball(&mut rng, 300, 5.0);
        let hull = convex_hull_3d(&cloud).unwrap();
        let vertex_points: Vec<Point3> = hull.vertices.iter().map(|&i| cloud.point(i)).collect();
        let vertex_cloud = PointCloud::new(vertex_points);
        let hull2 = convex_hull_3d(&vertex_cloud).unwrap();
        assert_eq!(
            hull2.vertices.len(),
            hull.vertices.len(),
            "every hull vertex must stay extreme when re-hulled alone"
        );
    }

    #[test]
    fn leaf_samples_are_hull_vertices() {
        let cloud = cloud_from(&[
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 0.0, 1.0),
            (0.2, 0.2, 0.2),
        ]);
        let hull = convex_hull_3d(&cloud).unwrap();
        let samples = hull.leaf_samples();
        assert_eq!(samples.kind, Label::Leaf);
        assert_eq!(samples.indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn expand_training_basic() {
        let cloud = cloud_from(&[(0.0, 0.0, 0.0), (0.1, 0.0, 0.0), (0.3, 0.0, 0.0)]);
        let index = SpatialIndex::build(&cloud).unwrap();
        let samples = SampleSet {
            indices: vec![0],
            kind: Label::Leaf,
        };
        let got = expand_training(&index, &samples, 0.2).unwrap();
        assert_eq!(got, vec![0, 1], "sample itself plus the 0.1 point");
    }

    #[test]
    fn expand_training_union_counts_once() {
        // Two samples whose balls overlap on a shared midpoint.
        let cloud = cloud_from(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.5, 0.0, 0.0)]);
        let index = SpatialIndex::build(&cloud).unwrap();
        let samples = SampleSet {
            indices: vec![0, 1],
            kind: Label::Leaf,
        };
        let got = expand_training(&index, &samples, 0.7).unwrap();
        assert_eq!(got, vec![0, 1, 2]);

        // Brute-force union over all points and samples.
        let mut want = BTreeSet::new();
        for &s in &samples.indices {
            let c = cloud.point(s);
            for (i, p) in cloud.iter().enumerate() {
                if p.dist2(&c) < 0.7 * 0.7 {
                    want.insert(i as u32);
                }
            }
        }
        assert_eq!(got, want.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn expand_training_monotone_in_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = uniform_ball(&mut rng, 300, 10.0);
        let index = SpatialIndex::build(&cloud).unwrap();
        let samples = SampleSet {
            indices: vec![0, 5, 9],
            kind: Label::Stem,
        };
        let small = expand_training(&index, &samples, 1.0).unwrap();
        let large = expand_training(&index, &samples, 2.5).unwrap();
        let large_set: BTreeSet<u32> = large.into_iter().collect();
        assert!(small.iter().all(|i| large_set.contains(i)));
    }

    #[test]
    fn expand_training_rejects_bad_input() {
        let cloud = cloud_from(&[(0.0, 0.0, 0.0)]);
        let index = SpatialIndex::build(&cloud).unwrap();
        let samples = SampleSet {
            indices: vec![0],
            kind: Label::Leaf,
        };
        assert!(expand_training(&index, &samples, 0.0).is_err());
        let empty = SampleSet {
            indices: vec![],
            kind: Label::Leaf,
        };
        assert!(matches!(
            expand_training(&index, &empty, 1.0),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn resolve_overlap_drops_from_both() {
        let (set, dropped) = TrainingSet::resolve_overlap(vec![1, 2, 3, 4], vec![3, 4, 5]);
        assert_eq!(set.leaf, vec![1, 2]);
        assert_eq!(set.stem, vec![5]);
        assert_eq!(dropped, 2);
    }
}
