//! Automated leaf/stem classification of potted-plant point clouds.
//!
//! The pipeline self-generates its own training data from the cloud's
//! geometry and trains a binary classifier from it:
//!
//! 1. **hull** — 3D convex hull; the hull apexes (leaf tips) become leaf
//!    sample points, expanded into the leaf training set by small spheres.
//! 2. **density** — grid-projection density scoring of random candidates;
//!    the densest points (vertical stems project onto few grid cells)
//!    become stem samples, expanded the same way.
//! 3. **svm** — soft-margin SVM with RBF kernel trained on the two sets,
//!    then applied to every point.
//! 4. **eval** — confusion matrix and Cohen's kappa against a reference
//!    labeling, plus a random-selection baseline.
//!
//! `synth` generates labeled synthetic potted plants for benchmarking, and
//! `pipeline` wires the stages end to end.

pub mod cloud;
pub mod density;
pub mod error;
pub mod eval;
pub mod hull;
pub mod pipeline;
pub mod svm;
pub mod synth;

pub use cloud::{Label, Point3, PointCloud, SpatialIndex};
pub use error::{Error, Result};
