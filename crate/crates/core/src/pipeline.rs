//! End-to-end orchestration: hull -> leaf training set, density -> stem
//! training set (with the validation retry loop), SVM training, whole-cloud
//! classification, and optional scoring against a reference labeling.

use serde::Serialize;

use crate::cloud::{Label, PointCloud, SpatialIndex};
use crate::density::{
    select_stem_samples, validate_stem_samples, DensityParams, DensityReport, Validation,
    ValidationConfig,
};
use crate::error::{require_positive, Error, Result};
use crate::eval::{confusion, ConfusionMatrix, MetricsSummary, SvmSummary};
use crate::hull::{convex_hull_3d, expand_training, SampleSet, TrainingSet};
use crate::svm::{self, SvmParams};

/// Abort when overlap resolution would drop more than this fraction of
/// either training set.
const MAX_OVERLAP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Leaf training-set expansion radius in mm (the CLI's `--r1`).
    pub leaf_expand_radius: f64,
    /// Stem training-set expansion radius in mm (the CLI's `--r2`).
    pub stem_expand_radius: f64,
    pub density: DensityParams,
    pub svm: SvmParams,
    pub validation: ValidationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new()
    }
}

impl PipelineConfig {
    /// Defaults for dense scanner clouds: 0.2 mm expansion radii plus the
    /// density, SVM, and validation defaults.
    pub fn new() -> Self {
        Self {
            leaf_expand_radius: 0.2,
            stem_expand_radius: 0.2,
            density: DensityParams::default(),
            svm: SvmParams::default(),
            validation: ValidationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("r1", self.leaf_expand_radius)?;
        require_positive("r2", self.stem_expand_radius)?;
        self.density.validate()?;
        self.svm.validate()
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReportParams {
    pub r1: f64,
    pub r2: f64,
    pub p: usize,
    pub r: f64,
    pub grid_spacing: f64,
    pub n: usize,
    pub svm_c: f64,
    /// Resolved RBF width actually used by the model.
    pub svm_gamma: f64,
    pub svm_tol: f64,
    pub svm_max_passes: usize,
    pub svm_scaling: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReportCounts {
    pub points: usize,
    pub hull_vertices: usize,
    pub leaf_samples: usize,
    pub leaf_training: usize,
    pub stem_samples: usize,
    pub stem_training: usize,
    pub overlap_dropped: usize,
    pub stem_selection_attempts: u32,
}

/// Machine-readable record of one pipeline run; serializes to a single JSON
/// line. Identical input and config produce byte-identical reports.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunReport {
    pub method: &'static str,
    pub seed: u64,
    pub params: ReportParams,
    pub counts: ReportCounts,
    pub svm: SvmSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSummary>,
}

impl RunReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub labels: Vec<Label>,
    pub report: RunReport,
    pub confusion: Option<ConfusionMatrix>,
    pub kappa: Option<f64>,
}

/// Stem sampling with the reselection loop: rejected sample sets are redrawn
/// with seed+1 until accepted or the retry budget runs out. Returns the
/// samples, their density diagnostics, and how many attempts were used.
pub fn select_validated_stem_samples(
    cloud: &PointCloud,
    index: &SpatialIndex,
    density: &DensityParams,
    validation: &ValidationConfig,
) -> Result<(SampleSet, Vec<DensityReport>, u32)> {
    let mut attempt: u32 = 0;
    loop {
        let params = DensityParams {
            seed: density.seed + attempt as u64,
            ..density.clone()
        };
        let (samples, reports) = select_stem_samples(index, &params)?;
        if !validation.enabled {
            return Ok((samples, reports, attempt + 1));
        }
        match validate_stem_samples(cloud, &samples, validation)? {
            Validation::Accepted => return Ok((samples, reports, attempt + 1)),
            Validation::Rejected(rejection) => {
                if attempt >= validation.max_retries {
                    return Err(Error::RetriesExhausted {
                        attempts: attempt + 1,
                        last: rejection.to_string(),
                    });
                }
                attempt += 1;
            }
        }
    }
}

/// Runs the full automated classification. When `truth` is given the run is
/// scored and the metrics are embedded in the report.
pub fn run(
    cloud: &PointCloud,
    truth: Option<&[Label]>,
    config: &PipelineConfig,
) -> Result<RunOutcome> {
    config.validate()?;
    if let Some(t) = truth {
        if t.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                labels: t.len(),
                points: cloud.len(),
            });
        }
    }

    let index = SpatialIndex::build(cloud)?;

    // Leaf side: hull apexes expanded by r1.
    let hull = convex_hull_3d(cloud)?;
    let leaf_samples = hull.leaf_samples();
    let leaf_training = expand_training(&index, &leaf_samples, config.leaf_expand_radius)?;

    // Stem side: density selection, reselecting with seed+1 until the
    // samples look like one stem.
    let (stem_samples, _, attempts) =
        select_validated_stem_samples(cloud, &index, &config.density, &config.validation)?;
    let stem_training = expand_training(&index, &stem_samples, config.stem_expand_radius)?;

    // A point in both training sets would enter the SVM with
    // contradictory labels; drop such points from both sets.
    let leaf_size = leaf_training.len();
    let stem_size = stem_training.len();
    let (training, overlap_dropped) = TrainingSet::resolve_overlap(leaf_training, stem_training);
    if overlap_dropped as f64 > MAX_OVERLAP_FRACTION * leaf_size as f64 {
        return Err(Error::OverlapTooLarge {
            set: "leaf",
            dropped: overlap_dropped,
            set_size: leaf_size,
        });
    }
    if overlap_dropped as f64 > MAX_OVERLAP_FRACTION * stem_size as f64 {
        return Err(Error::OverlapTooLarge {
            set: "stem",
            dropped: overlap_dropped,
            set_size: stem_size,
        });
    }
    if training.leaf.is_empty() {
        return Err(Error::EmptyClass("leaf"));
    }
    if training.stem.is_empty() {
        return Err(Error::EmptyClass("stem"));
    }

    let leaf_points: Vec<_> = training.leaf.iter().map(|&i| cloud.point(i)).collect();
    let stem_points: Vec<_> = training.stem.iter().map(|&i| cloud.point(i)).collect();
    let outcome = svm::train(&leaf_points, &stem_points, &config.svm)?;
    let labels = outcome.model.predict(cloud);
    debug_assert_eq!(labels.len(), cloud.len());

    let (cm, metrics) = match truth {
        Some(t) => {
            let cm = confusion(t, &labels)?;
            let metrics = MetricsSummary::from_confusion(&cm)?;
            (Some(cm), Some(metrics))
        }
        None => (None, None),
    };

    let report = RunReport {
        method: "automated",
        seed: config.density.seed,
        params: ReportParams {
            r1: config.leaf_expand_radius,
            r2: config.stem_expand_radius,
            p: config.density.candidates,
            r: config.density.radius,
            grid_spacing: config.density.grid_spacing,
            n: config.density.keep,
            svm_c: config.svm.c,
            svm_gamma: outcome.model.gamma,
            svm_tol: config.svm.tol,
            svm_max_passes: config.svm.max_passes,
            svm_scaling: config.svm.scaling,
        },
        counts: ReportCounts {
            points: cloud.len(),
            hull_vertices: hull.vertices.len(),
            leaf_samples: leaf_samples.indices.len(),
            leaf_training: leaf_size,
            stem_samples: stem_samples.indices.len(),
            stem_training: stem_size,
            overlap_dropped,
            stem_selection_attempts: attempts,
        },
        svm: SvmSummary::from_outcome(&outcome),
        metrics,
    };

    Ok(RunOutcome {
        labels,
        report,
        confusion: cm,
        kappa: metrics.map(|m| m.kappa),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;
    use crate::svm::Gamma;
    use crate::synth::{generate_plant, PlantSpec};

    fn small_plant(seed: u64) -> (PointCloud, Vec<Label>) {
        generate_plant(&PlantSpec {
            points_total: 20_000,
            seed,
            ..PlantSpec::default()
        })
        .unwrap()
    }

    fn small_config() -> PipelineConfig {
        // Sparser synthetic clouds want a narrower kernel and more stem
        // samples than the scanner-density defaults.
        PipelineConfig {
            density: DensityParams {
                candidates: 300,
                keep: 40,
                ..DensityParams::default()
            },
            svm: SvmParams {
                gamma: Gamma::Value(30.0),
                ..SvmParams::default()
            },
            ..PipelineConfig::new()
        }
    }

    #[test]
    fn end_to_end_on_synthetic_plant() {
        let (cloud, truth) = small_plant(42);
        let outcome = run(&cloud, Some(&truth), &small_config()).unwrap();
        assert_eq!(outcome.labels.len(), cloud.len());
        let kappa = outcome.kappa.expect("scored run has kappa");
        assert!(kappa > 0.5, "kappa = {kappa}");
        assert!(outcome.report.metrics.is_some());
        assert_eq!(outcome.report.counts.points, cloud.len());
    }

    #[test]
    fn identical_runs_are_byte_identical() {
        let (cloud, truth) = small_plant(7);
        let config = small_config();
        let a = run(&cloud, Some(&truth), &config).unwrap();
        let b = run(&cloud, Some(&truth), &config).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.report.to_json_line(), b.report.to_json_line());
    }

    #[test]
    fn tiny_cloud_fails_cleanly_at_the_hull() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ]);
        let err = run(&cloud, None, &small_config()).unwrap_err();
        assert!(matches!(err, Error::TooFewPoints(3)));
    }

    #[test]
    fn zero_radius_fails_before_any_compute() {
        let (cloud, _) = small_plant(3);
        let config = PipelineConfig {
            leaf_expand_radius: 0.0,
            ..small_config()
        };
        let err = run(&cloud, None, &config).unwrap_err();
        match err {
            Error::InvalidParam { name, .. } => assert_eq!(name, "r1"),
            other => panic!("expected parameter error, got {other:?}"),
        }
    }

    #[test]
    fn truth_length_mismatch_is_rejected() {
        let (cloud, truth) = small_plant(5);
        let err = run(&cloud, Some(&truth[..10]), &small_config()).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn unscored_run_omits_metrics() {
        let (cloud, _) = small_plant(9);
        let outcome = run(&cloud, None, &small_config()).unwrap();
        assert!(outcome.kappa.is_none());
        assert!(outcome.confusion.is_none());
        assert!(!outcome.report.to_json_line().contains("metrics"));
    }
}
