//! Labeled synthetic potted plants for benchmarking: an upright cylindrical
//! stem plus elliptical leaf patches attached along it, with ground-truth
//! organ labels. Default proportions follow a small houseplant
//! (roughly 140 x 110 x 200 mm, thin stem, broad drooping leaves).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Label, Point3, PointCloud};
use crate::error::{require_positive, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub stem_height: f64,
    pub stem_radius: f64,
    pub leaf_count: usize,
    pub leaf_length: f64,
    pub leaf_width: f64,
    /// Downward tilt of each leaf from horizontal, degrees in [0, 90].
    pub leaf_droop_deg: f64,
    pub points_total: usize,
    /// Per-axis Gaussian jitter applied to every point, mm.
    pub noise_sigma: f64,
    /// Adds one long, narrow, near-vertical leaf hugging the stem; it
    /// projects as densely as the stem and defeats the density sampler.
    pub slender_leaf: bool,
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            stem_height: 200.0,
            stem_radius: 1.5,
            leaf_count: 8,
            leaf_length: 70.0,
            leaf_width: 35.0,
            leaf_droop_deg: 30.0,
            points_total: 100_000,
            noise_sigma: 0.08,
            slender_leaf: false,
            seed: 0,
        }
    }
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stem-height", self.stem_height),
            ("stem-radius", self.stem_radius),
            ("leaf-length", self.leaf_length),
            ("leaf-width", self.leaf_width),
        ] {
            require_positive(name, v)?;
        }
        if self.points_total < 1000 {
            return Err(Error::param(
                "points",
                format!("need at least 1000 points, got {}", self.points_total),
            ));
        }
        if !(0.0..=90.0).contains(&self.leaf_droop_deg) {
            return Err(Error::param(
                "droop",
                format!(
                    "must be within [0, 90] degrees, got {}",
                    self.leaf_droop_deg
                ),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::param(
                "noise",
                format!("must be >= 0, got {}", self.noise_sigma),
            ));
        }
        Ok(())
    }
}

struct LeafPatch {
    attach: Point3,
    /// Outward-and-down major axis (unit).
    e1: [f64; 3],
    /// Horizontal tangential minor axis (unit).
    e2: [f64; 3],
    half_length: f64,
    half_width: f64,
}

impl LeafPatch {
    fn area(&self) -> f64 {
        std::f64::consts::PI * self.half_length * self.half_width
    }

    /// Uniform point on the elliptical patch; the inner ellipse end sits at
    /// the attachment.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let rad = rng.random_range(0.0f64..1.0).sqrt();
        let u = rad * theta.cos();
        let v = rad * theta.sin();
        let along = self.half_length * (1.0 + u);
        let across = self.half_width * v;
        Point3::new(
            self.attach.x + along * self.e1[0] + across * self.e2[0],
            self.attach.y + along * self.e1[1] + across * self.e2[1],
            self.attach.z + along * self.e1[2] + across * self.e2[2],
        )
    }
}

fn leaf_patch(
    spec: &PlantSpec,
    height: f64,
    azimuth: f64,
    droop_deg: f64,
    half_length: f64,
    half_width: f64,
) -> LeafPatch {
    let (sin_a, cos_a) = azimuth.sin_cos();
    let droop = droop_deg.to_radians();
    let (sin_d, cos_d) = droop.sin_cos();
    let outward = [cos_a, sin_a, 0.0];
    LeafPatch {
        attach: Point3::new(
            spec.stem_radius * outward[0],
            spec.stem_radius * outward[1],
            height,
        ),
        e1: [cos_d * outward[0], cos_d * outward[1], -sin_d],
        e2: [-sin_a, cos_a, 0.0],
        half_length,
        half_width,
    }
}

/// Generates the labeled plant. Deterministic for a fixed spec; the point
/// budget splits across stem and leaves proportionally to surface area.
pub fn generate_plant(spec: &PlantSpec) -> Result<(PointCloud, Vec<Label>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Leaf placement: attachment heights over the upper stem, azimuths in a
    // jittered spiral so leaves spread around the plant.
    let mut patches = Vec::with_capacity(spec.leaf_count + 1);
    for i in 0..spec.leaf_count {
        let frac = if spec.leaf_count == 1 {
            1.0
        } else {
            i as f64 / (spec.leaf_count - 1) as f64
        };
        let height = spec.stem_height * (0.35 + 0.65 * frac) - rng.random_range(0.0..8.0);
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        patches.push(leaf_patch(
            spec,
            height.clamp(0.0, spec.stem_height),
            azimuth,
            spec.leaf_droop_deg,
            spec.leaf_length / 2.0,
            spec.leaf_width / 2.0,
        ));
    }
    if spec.slender_leaf {
        // Long, narrow, near-vertical: hangs alongside the stem and mimics
        // its projected footprint.
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        patches.push(leaf_patch(
            spec,
            0.75 * spec.stem_height,
            azimuth,
            88.0,
            0.45 * spec.stem_height / 2.0,
            2.0 * spec.stem_radius,
        ));
    }

    let stem_area = std::f64::consts::TAU * spec.stem_radius * spec.stem_height;
    let total_area: f64 = stem_area + patches.iter().map(LeafPatch::area).sum::<f64>();

    // Largest-remainder split of the point budget.
    let mut weights = vec![stem_area / total_area];
    weights.extend(patches.iter().map(|p| p.area() / total_area));
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|w| (w * spec.points_total as f64).floor() as usize)
        .collect();
    let mut shortfall = spec.points_total - counts.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..weights.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = weights[a] * spec.points_total as f64 - counts[a] as f64;
        let rb = weights[b] * spec.points_total as f64 - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle().take(weights.len() * 2) {
        if shortfall == 0 {
            break;
        }
        counts[i] += 1;
        shortfall -= 1;
    }

    let mut points = Vec::with_capacity(spec.points_total);
    let mut labels = Vec::with_capacity(spec.points_total);
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).expect("sigma validated"))
    } else {
        None
    };
    let jitter = |p: Point3, rng: &mut ChaCha8Rng| -> Point3 {
        match &noise {
            Some(n) => Point3::new(
                p.x + n.sample(rng),
                p.y + n.sample(rng),
                p.z + n.sample(rng),
            ),
            None => p,
        }
    };

    for _ in 0..counts[0] {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let z = rng.random_range(0.0..spec.stem_height);
        let p = Point3::new(
            spec.stem_radius * theta.cos(),
            spec.stem_radius * theta.sin(),
            z,
        );
        points.push(jitter(p, &mut rng));
        labels.push(Label::Stem);
    }
    for (patch, &count) in patches.iter().zip(&counts[1..]) {
        for _ in 0..count {
            let p = patch.sample(&mut rng);
            points.push(jitter(p, &mut rng));
            labels.push(Label::Leaf);
        }
    }

    Ok((PointCloud::new(points), labels))
}
