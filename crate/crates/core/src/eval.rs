//! Classifier scoring: confusion matrix via set cardinalities, accuracy,
//! Cohen's kappa, and the random-selection baseline.
//!
//! Leaf is the positive class throughout.

use serde::Serialize;

use crate::cloud::{Label, PointCloud, SpatialIndex};
use crate::density::canonical_draw;
use crate::error::{Error, Result};
use crate::hull::{expand_training, SampleSet, TrainingSet};
use crate::svm::{self, SvmParams};

/// TP/TN/FP/FN counts. `tp` counts points both labelings call leaf, `tn`
/// points both call stem; `fp`/`fn` are the remainders of the predicted
/// leaf/stem sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.false_neg
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Cohen's kappa. With a degenerate chance agreement (both labelings
    /// single-class) returns 1 on perfect agreement and 0 otherwise.
    pub fn kappa(&self) -> Result<f64> {
        let n = self.total();
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        let (tp, tn, fp, fnn) = (
            self.tp as u128,
            self.tn as u128,
            self.fp as u128,
            self.false_neg as u128,
        );
        let n_sq = (n as u128) * (n as u128);
        let chance = (tp + fp) * (tp + fnn) + (fnn + tn) * (fp + tn);
        let p_o = (self.tp + self.tn) as f64 / n as f64;
        if chance >= n_sq {
            return Ok(if self.fp == 0 && self.false_neg == 0 {
                1.0
            } else {
                0.0
            });
        }
        let p_e = chance as f64 / n_sq as f64;
        Ok((p_o - p_e) / (1.0 - p_e))
    }
}

/// Counts agreement between a standard labeling and a predicted one.
pub fn confusion(standard: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    if standard.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            labels: predicted.len(),
            points: standard.len(),
        });
    }
    let mut cm = ConfusionMatrix {
        tp: 0,
        tn: 0,
        fp: 0,
        false_neg: 0,
    };
    for (&s, &p) in standard.iter().zip(predicted) {
        match (s, p) {
            (Label::Leaf, Label::Leaf) => cm.tp += 1,
            (Label::Stem, Label::Stem) => cm.tn += 1,
            (Label::Stem, Label::Leaf) => cm.fp += 1,
            (Label::Leaf, Label::Stem) => cm.false_neg += 1,
        }
    }
    Ok(cm)
}

/// One scored run as a JSON-lines record.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct MetricsSummary {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    pub accuracy: f64,
    pub kappa: f64,
}

impl MetricsSummary {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            tp: cm.tp,
            tn: cm.tn,
            fp: cm.fp,
            false_neg: cm.false_neg,
            accuracy: cm.accuracy(),
            kappa: cm.kappa()?,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

impl std::fmt::Display for MetricsSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "tp {}  tn {}  fp {}  fn {}  accuracy {:.4}  kappa {:.4}",
            self.tp, self.tn, self.fp, self.false_neg, self.accuracy, self.kappa
        )
    }
}

/// Condensed training diagnostics for reports.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SvmSummary {
    pub iterations: usize,
    pub converged: bool,
    pub support_vectors: usize,
    pub bias: f64,
}

impl SvmSummary {
    pub fn from_outcome(outcome: &svm::TrainOutcome) -> Self {
        Self {
            iterations: outcome.diag.iterations,
            converged: outcome.diag.converged,
            support_vectors: outcome.model.support_vectors.len(),
            bias: outcome.model.bias,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub method: &'static str,
    pub seed: u64,
    pub draws: usize,
    pub attempts: u32,
    pub leaf_samples: usize,
    pub stem_samples: usize,
    pub leaf_training: usize,
    pub stem_training: usize,
    pub overlap_dropped: usize,
    pub svm: SvmSummary,
    pub metrics: MetricsSummary,
}

impl BaselineReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub labels: Vec<Label>,
    pub confusion: ConfusionMatrix,
    pub kappa: f64,
    pub report: BaselineReport,
}

const BASELINE_RETRIES: u32 = 10;

/// The comparison method: k random points, split by their ground-truth
/// organ into leaf and stem samples, then expanded and classified exactly
/// like the automated pipeline.
#[allow(clippy::too_many_arguments)]
pub fn random_baseline(
    cloud: &PointCloud,
    index: &SpatialIndex,
    truth: &[Label],
    k: usize,
    leaf_expand_radius: f64,
    stem_expand_radius: f64,
    seed: u64,
    svm_params: &SvmParams,
) -> Result<BaselineOutcome> {
    if truth.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            labels: truth.len(),
            points: cloud.len(),
        });
    }
    if k < 2 {
        return Err(Error::param(
            "k",
            "need at least 2 draws to cover both classes",
        ));
    }
    if k > cloud.len() {
        return Err(Error::NotEnoughPoints {
            requested: k,
            available: cloud.len(),
        });
    }

    // Redraw until both organs appear among the k points.
    let mut chosen = None;
    let mut attempts = 0;
    for attempt in 0..=BASELINE_RETRIES {
        attempts = attempt + 1;
        let draw = canonical_draw(index, k, seed + attempt as u64);
        let (leaf_ids, stem_ids): (Vec<u32>, Vec<u32>) = draw
            .into_iter()
            .partition(|&i| truth[i as usize] == Label::Leaf);
        if !leaf_ids.is_empty() && !stem_ids.is_empty() {
            chosen = Some((leaf_ids, stem_ids));
            break;
        }
    }
    let Some((mut leaf_ids, mut stem_ids)) = chosen else {
        return Err(Error::RetriesExhausted {
            attempts,
            last: "random draw never contained both organs".into(),
        });
    };
    leaf_ids.sort_unstable();
    stem_ids.sort_unstable();

    let leaf_samples = SampleSet {
        indices: leaf_ids,
        kind: Label::Leaf,
    };
    let stem_samples = SampleSet {
        indices: stem_ids,
        kind: Label::Stem,
    };
    let leaf_training = expand_training(index, &leaf_samples, leaf_expand_radius)?;
    let stem_training = expand_training(index, &stem_samples, stem_expand_radius)?;
    let (training, overlap_dropped) = TrainingSet::resolve_overlap(leaf_training, stem_training);
    if training.leaf.is_empty() {
        return Err(Error::EmptyClass("leaf"));
    }
    if training.stem.is_empty() {
        return Err(Error::EmptyClass("stem"));
    }

    let leaf_points: Vec<_> = training.leaf.iter().map(|&i| cloud.point(i)).collect();
    let stem_points: Vec<_> = training.stem.iter().map(|&i| cloud.point(i)).collect();
    let outcome = svm::train(&leaf_points, &stem_points, svm_params)?;
    let labels = outcome.model.predict(cloud);
    let cm = confusion(truth, &labels)?;
    let metrics = MetricsSummary::from_confusion(&cm)?;

    let report = BaselineReport {
        method: "random-baseline",
        seed,
        draws: k,
        attempts,
        leaf_samples: leaf_samples.indices.len(),
        stem_samples: stem_samples.indices.len(),
        leaf_training: training.leaf.len(),
        stem_training: training.stem.len(),
        overlap_dropped,
        svm: SvmSummary::from_outcome(&outcome),
        metrics,
    };

    Ok(BaselineOutcome {
        labels,
        confusion: cm,
        kappa: metrics.kappa,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const L: Label = Label::Leaf;
    const S: Label = Label::Stem;

    #[test]
    fn confusion_perfect_agreement() {
        let standard: Vec<Label> = [vec![L; 10], vec![S; 5]].concat();
        let cm = confusion(&standard, &standard).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                tp: 10,
                tn: 5,
                fp: 0,
                false_neg: 0
            }
        );
    }

    #[test]
    fn confusion_hand_enumerated() {
        let standard = [L, L, S, S];
        let predicted = [L, S, L, S];
        let cm = confusion(&standard, &predicted).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                tp: 1,
                tn: 1,
                fp: 1,
                false_neg: 1
            }
        );
    }

    #[test]
    fn confusion_all_predicted_leaf() {
        let standard = [L, L, L, S, S];
        let predicted = [L; 5];
        let cm = confusion(&standard, &predicted).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                tp: 3,
                tn: 0,
                fp: 2,
                false_neg: 0
            }
        );
    }

    #[test]
    fn confusion_length_mismatch() {
        assert!(matches!(
            confusion(&[L, S], &[L]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kappa_perfect_is_one() {
        let cm = ConfusionMatrix {
            tp: 7,
            tn: 3,
            fp: 0,
            false_neg: 0,
        };
        assert_eq!(cm.kappa().unwrap(), 1.0);
    }

    #[test]
    fn kappa_chance_level_is_zero() {
        // Balanced truth, everything predicted leaf: p_o = p_e = 0.5.
        let cm = ConfusionMatrix {
            tp: 50,
            tn: 0,
            fp: 50,
            false_neg: 0,
        };
        assert_eq!(cm.kappa().unwrap(), 0.0);
    }

    #[test]
    fn kappa_degenerate_single_class() {
        let cm = ConfusionMatrix {
            tp: 9,
            tn: 0,
            fp: 0,
            false_neg: 0,
        };
        assert_eq!(cm.kappa().unwrap(), 1.0);
    }

    #[test]
    fn kappa_empty_matrix_errors() {
        let cm = ConfusionMatrix {
            tp: 0,
            tn: 0,
            fp: 0,
            false_neg: 0,
        };
        assert!(matches!(cm.kappa(), Err(Error::EmptyMatrix)));
    }

    /// Independent route: exact integer numerator/denominator.
    fn kappa_oracle(cm: &ConfusionMatrix) -> f64 {
        let n = cm.total() as i128;
        let (tp, tn, fp, fnn) = (
            cm.tp as i128,
            cm.tn as i128,
            cm.fp as i128,
            cm.false_neg as i128,
        );
        let chance = (tp + fp) * (tp + fnn) + (fnn + tn) * (fp + tn);
        let numer = n * (tp + tn) - chance;
        let denom = n * n - chance;
        if denom == 0 {
            return if fp == 0 && fnn == 0 { 1.0 } else { 0.0 };
        }
        numer as f64 / denom as f64
    }

    #[test]
    fn kappa_matches_integer_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..500 {
            let cm = ConfusionMatrix {
                tp: rng.random_range(0..1_000_000),
                tn: rng.random_range(0..1_000_000),
                fp: rng.random_range(0..1_000_000),
                false_neg: rng.random_range(0..1_000_000),
            };
            if cm.total() == 0 {
                continue;
            }
            let got = cm.kappa().unwrap();
            let want = kappa_oracle(&cm);
            assert!((got - want).abs() <= 1e-12, "{got} vs {want} for {cm:?}");
            assert!((-1.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn kappa_symmetric_under_class_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for _ in 0..100 {
            let cm = ConfusionMatrix {
                tp: rng.random_range(0..10_000),
                tn: rng.random_range(0..10_000),
                fp: rng.random_range(0..10_000),
                false_neg: rng.random_range(0..10_000),
            };
            if cm.total() == 0 {
                continue;
            }
            let swapped = ConfusionMatrix {
                tp: cm.tn,
                tn: cm.tp,
                fp: cm.false_neg,
                false_neg: cm.fp,
            };
            let a = cm.kappa().unwrap();
            let b = swapped.kappa().unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn prop_marginal_identities(
            labels in prop::collection::vec((0u8..2, 0u8..2), 1..200),
        ) {
            let standard: Vec<Label> =
                labels.iter().map(|&(s, _)| if s == 0 { L } else { S }).collect();
            let predicted: Vec<Label> =
                labels.iter().map(|&(_, p)| if p == 0 { L } else { S }).collect();
            let cm = confusion(&standard, &predicted).unwrap();
            let pred_leaf = predicted.iter().filter(|&&l| l == L).count() as u64;
            let pred_stem = predicted.iter().filter(|&&l| l == S).count() as u64;
            prop_assert_eq!(cm.tp + cm.fp, pred_leaf);
            prop_assert_eq!(cm.tn + cm.false_neg, pred_stem);
            prop_assert_eq!(cm.total(), standard.len() as u64);
        }

        #[test]
        fn prop_permutation_invariance(
            labels in prop::collection::vec((0u8..2, 0u8..2), 2..100),
            seed in 0u64..1000,
        ) {
            let standard: Vec<Label> =
                labels.iter().map(|&(s, _)| if s == 0 { L } else { S }).collect();
            let predicted: Vec<Label> =
                labels.iter().map(|&(_, p)| if p == 0 { L } else { S }).collect();
            let cm = confusion(&standard, &predicted).unwrap();

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..labels.len()).collect();
            for k in (1..perm.len()).rev() {
                let j = rng.random_range(0..=k);
                perm.swap(k, j);
            }
            let std2: Vec<Label> = perm.iter().map(|&i| standard[i]).collect();
            let pred2: Vec<Label> = perm.iter().map(|&i| predicted[i]).collect();
            let cm2 = confusion(&std2, &pred2).unwrap();
            prop_assert_eq!(cm, cm2);
        }
    }

    /// Separable toy plant: thin cylinder plus a far-away horizontal disc.
    fn separable_plant(seed: u64, n_stem: usize, n_leaf: usize) -> (PointCloud, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_stem {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let z = rng.random_range(0.0..100.0);
            points.push(Point3::new(1.5 * theta.cos(), 1.5 * theta.sin(), z));
            labels.push(S);
        }
        for _ in 0..n_leaf {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let rad = 25.0 * rng.random_range(0.0f64..1.0).sqrt();
            points.push(Point3::new(
                rad * theta.cos() + 50.0,
                rad * theta.sin(),
                60.0,
            ));
            labels.push(L);
        }
        (PointCloud::new(points), labels)
    }

    #[test]
    fn baseline_is_deterministic() {
        let (cloud, truth) = separable_plant(11, 300, 500);
        let index = SpatialIndex::build(&cloud).unwrap();
        let params = SvmParams::default();
        let a = random_baseline(&cloud, &index, &truth, 50, 2.0, 2.0, 7, &params).unwrap();
        let b = random_baseline(&cloud, &index, &truth, 50, 2.0, 2.0, 7, &params).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.confusion, b.confusion);
        assert_eq!(a.report.to_json_line(), b.report.to_json_line());
    }

    #[test]
    fn baseline_with_all_points_is_nearly_perfect() {
        let (cloud, truth) = separable_plant(12, 250, 450);
        let index = SpatialIndex::build(&cloud).unwrap();
        let params = SvmParams::default();
        let out =
            random_baseline(&cloud, &index, &truth, cloud.len(), 1.0, 1.0, 3, &params).unwrap();
        assert!(out.kappa > 0.95, "kappa = {}", out.kappa);
    }

    #[test]
    fn baseline_rejects_oversized_k() {
        let (cloud, truth) = separable_plant(13, 50, 50);
        let index = SpatialIndex::build(&cloud).unwrap();
        let err = random_baseline(
            &cloud,
            &index,
            &truth,
            cloud.len() + 1,
            1.0,
            1.0,
            0,
            &SvmParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotEnoughPoints { .. }));
    }

    #[test]
    fn baseline_exhausts_retries_on_single_class_truth() {
        let (cloud, _) = separable_plant(14, 100, 100);
        let truth = vec![L; cloud.len()];
        let index = SpatialIndex::build(&cloud).unwrap();
        let err = random_baseline(
            &cloud,
            &index,
            &truth,
            10,
            1.0,
            1.0,
            0,
            &SvmParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::RetriesExhausted { .. }));
    }
}
