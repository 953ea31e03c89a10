//! Soft-margin binary SVM with RBF kernel, trained by sequential minimal
//! optimization with second-order working-set selection.
//!
//! Features are the raw point coordinates, standardized per axis by default;
//! the scaler is part of the model so predictions are well-defined. Leaf is
//! class 1 (y = +1), stem is class 2 (y = -1), and a decision value of
//! exactly zero classifies as leaf.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::cloud::{Label, Point3, PointCloud};
use crate::error::{require_positive, Error, Result};

const TAU: f64 = 1e-12;

/// Kernel row cache budget; small training sets effectively keep the whole
/// Gram matrix, larger ones evict least-recently-used rows.
const CACHE_BYTES: usize = 256 << 20;

/// RBF width: fixed, or derived from the training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `1 / (3 * mean per-axis variance)` of the (scaled) training features.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    /// Soft-margin penalty.
    pub c: f64,
    pub gamma: Gamma,
    /// KKT violation tolerance; optimization stops below it.
    pub tol: f64,
    /// Iteration budget in units of the training-set size.
    pub max_passes: usize,
    /// Standardize each axis by training mean/std.
    pub scaling: bool,
    /// Record the dual objective after every working-set update.
    pub track_objective: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            gamma: Gamma::Auto,
            tol: 1e-3,
            max_passes: 100,
            scaling: true,
            track_objective: false,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("c", self.c)?;
        require_positive("tol", self.tol)?;
        if let Gamma::Value(g) = self.gamma {
            require_positive("gamma", g)?;
        }
        if self.max_passes == 0 {
            return Err(Error::param("max-passes", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-axis standardization fitted on the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: [f64; 3],
    pub scale: [f64; 3],
}

impl Scaler {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 3],
            scale: [1.0; 3],
        }
    }

    pub fn fit(points: &[Point3]) -> Self {
        let n = points.len() as f64;
        let mut mean = [0.0; 3];
        for p in points {
            let c = p.coords();
            for a in 0..3 {
                mean[a] += c[a];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = [0.0; 3];
        for p in points {
            let c = p.coords();
            for a in 0..3 {
                let d = c[a] - mean[a];
                var[a] += d * d;
            }
        }
        let mut scale = [0.0; 3];
        for a in 0..3 {
            let std = (var[a] / n).sqrt();
            scale[a] = if std > 1e-12 { std } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn apply(&self, p: Point3) -> [f64; 3] {
        [
            (p.x - self.mean[0]) / self.scale[0],
            (p.y - self.mean[1]) / self.scale[1],
            (p.z - self.mean[2]) / self.scale[2],
        ]
    }
}

/// The RBF similarity `exp(-gamma * |a-b|^2)`, in (0, 1]. Errors on a
/// negative gamma.
pub fn rbf_kernel(a: Point3, b: Point3, gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::param("gamma", format!("must be >= 0, got {gamma}")));
    }
    Ok((-gamma * a.dist2(&b)).exp())
}

fn rbf(a: &[f64; 3], b: &[f64; 3], gamma: f64) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (-gamma * (dx * dx + dy * dy + dz * dz)).exp()
}

/// Trained classifier: support vectors live in the scaled feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<[f64; 3]>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub scaler: Scaler,
}

impl SvmModel {
    /// Signed decision value; positive means leaf.
    pub fn decision(&self, p: Point3) -> f64 {
        let x = self.scaler.apply(p);
        let mut sum = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            sum += coef * rbf(sv, &x, self.gamma);
        }
        sum
    }

    pub fn predict_point(&self, p: Point3) -> Label {
        if self.decision(p) >= 0.0 {
            Label::Leaf
        } else {
            Label::Stem
        }
    }

    /// Classifies every point of the cloud.
    pub fn predict(&self, cloud: &PointCloud) -> Vec<Label> {
        cloud
            .points()
            .par_iter()
            .map(|&p| self.predict_point(p))
            .collect()
    }

    /// Writes the versioned ASCII model format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            writeln!(w, "stemleaf-svm-v1")?;
            let m = self.scaler.mean;
            let s = self.scaler.scale;
            writeln!(w, "mean {} {} {}", m[0], m[1], m[2])?;
            writeln!(w, "scale {} {} {}", s[0], s[1], s[2])?;
            writeln!(w, "gamma {}", self.gamma)?;
            writeln!(w, "bias {}", self.bias)?;
            writeln!(w, "support_vectors {}", self.support_vectors.len())?;
            for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
                writeln!(w, "{} {} {} {}", coef, sv[0], sv[1], sv[2])?;
            }
            w.flush()
        };
        emit().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SvmModel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(line))) => Ok((i + 1, line)),
                Some((i, Err(e))) => Err(Error::parse(path, i + 1, e.to_string())),
                None => Err(Error::parse(path, 0, format!("missing {what}"))),
            }
        };
        let (ln, header) = next_line("header")?;
        if header.trim() != "stemleaf-svm-v1" {
            return Err(Error::parse(path, ln, "not a stemleaf-svm-v1 model file"));
        }
        let mut fields = |key: &str, count: usize| -> Result<Vec<f64>> {
            let (ln, line) = next_line(key)?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::parse(path, ln, format!("expected `{key}` line")));
            }
            let vals: Vec<f64> = parts
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, ln, e.to_string()))?;
            if vals.len() != count {
                return Err(Error::parse(
                    path,
                    ln,
                    format!("`{key}` expects {count} values, got {}", vals.len()),
                ));
            }
            Ok(vals)
        };
        let mean = fields("mean", 3)?;
        let scale = fields("scale", 3)?;
        let gamma = fields("gamma", 1)?[0];
        let bias = fields("bias", 1)?[0];
        let nsv = fields("support_vectors", 1)?[0] as usize;
        let mut support_vectors = Vec::with_capacity(nsv);
        let mut dual_coefs = Vec::with_capacity(nsv);
        for _ in 0..nsv {
            let (ln, line) = next_line("support vector")?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, ln, e.to_string()))?;
            if vals.len() != 4 {
                return Err(Error::parse(path, ln, "support vector line needs 4 values"));
            }
            dual_coefs.push(vals[0]);
            support_vectors.push([vals[1], vals[2], vals[3]]);
        }
        Ok(SvmModel {
            support_vectors,
            dual_coefs,
            bias,
            gamma,
            scaler: Scaler {
                mean: [mean[0], mean[1], mean[2]],
                scale: [scale[0], scale[1], scale[2]],
            },
        })
    }
}

/// Solver state of one training run, kept for correctness checks: alphas
/// cover the full training set (leaf block first, then stem).
#[derive(Debug, Clone)]
pub struct TrainDiagnostics {
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal KKT violation (working-set selection gap).
    pub final_violation: f64,
    /// Dual objective after each update, when tracking was enabled.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SvmModel,
    pub diag: TrainDiagnostics,
}

/// Trains on the two classes (leaf = class 1 = +1, stem = class 2 = -1).
///
/// Non-convergence within the iteration budget is reported through
/// `diag.converged`; the model is still returned.
pub fn train(leaf: &[Point3], stem: &[Point3], params: &SvmParams) -> Result<TrainOutcome> {
    params.validate()?;
    if leaf.is_empty() {
        return Err(Error::EmptyClass("leaf"));
    }
    if stem.is_empty() {
        return Err(Error::EmptyClass("stem"));
    }

    let raw: Vec<Point3> = leaf.iter().chain(stem.iter()).copied().collect();
    let labels: Vec<f64> = std::iter::repeat_n(1.0, leaf.len())
        .chain(std::iter::repeat_n(-1.0, stem.len()))
        .collect();
    let scaler = if params.scaling {
        Scaler::fit(&raw)
    } else {
        Scaler::identity()
    };
    let x: Vec<[f64; 3]> = raw.iter().map(|&p| scaler.apply(p)).collect();
    let gamma = resolve_gamma(params.gamma, &x);

    let n = x.len();
    let max_iter = params.max_passes.saturating_mul(n).max(1000);
    let cache_rows = (CACHE_BYTES / (8 * n)).max(2);
    let kernel = |i: usize, j: usize| rbf(&x[i], &x[j], gamma);
    let qd = vec![1.0; n];
    let solved = solve_smo(
        &kernel,
        &qd,
        &labels,
        params.c,
        params.tol,
        max_iter,
        params.track_objective,
        cache_rows,
    );

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (t, &a) in solved.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x[t]);
            dual_coefs.push(a * labels[t]);
        }
    }

    Ok(TrainOutcome {
        model: SvmModel {
            support_vectors,
            dual_coefs,
            bias: solved.bias,
            gamma,
            scaler,
        },
        diag: TrainDiagnostics {
            alphas: solved.alpha,
            labels,
            iterations: solved.iterations,
            converged: solved.converged,
            final_violation: solved.final_violation,
            objective: solved.objective,
        },
    })
}

fn resolve_gamma(gamma: Gamma, x: &[[f64; 3]]) -> f64 {
    match gamma {
        Gamma::Value(g) => g,
        Gamma::Auto => {
            let n = x.len() as f64;
            let mut mean = [0.0; 3];
            for p in x {
                for a in 0..3 {
                    mean[a] += p[a];
                }
            }
            for m in &mut mean {
                *m /= n;
            }
            let mut var_sum = 0.0;
            for p in x {
                for a in 0..3 {
                    let d = p[a] - mean[a];
                    var_sum += d * d;
                }
            }
            let mean_var = var_sum / (3.0 * n);
            if mean_var > 1e-12 {
                1.0 / (3.0 * mean_var)
            } else {
                1.0
            }
        }
    }
}

struct Solved {
    alpha: Vec<f64>,
    bias: f64,
    iterations: usize,
    converged: bool,
    final_violation: f64,
    objective: Vec<f64>,
}

struct RowCache<'a> {
    kernel: &'a dyn Fn(usize, usize) -> f64,
    n: usize,
    rows: HashMap<usize, (u64, Vec<f64>)>,
    stamp: u64,
    cap: usize,
}

impl<'a> RowCache<'a> {
    fn new(kernel: &'a dyn Fn(usize, usize) -> f64, n: usize, cap: usize) -> Self {
        Self {
            kernel,
            n,
            rows: HashMap::new(),
            stamp: 0,
            cap,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.stamp += 1;
        let stamp = self.stamp;
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.cap {
                if let Some((&oldest, _)) = self.rows.iter().min_by_key(|(_, (s, _))| *s) {
                    self.rows.remove(&oldest);
                }
            }
            let row: Vec<f64> = (0..self.n).map(|j| (self.kernel)(i, j)).collect();
            self.rows.insert(i, (stamp, row));
        }
        let entry = self.rows.get_mut(&i).expect("row just inserted");
        entry.0 = stamp;
        &entry.1
    }
}

/// SMO with the second-order working-set selection of the standard solver:
/// `i` maximizes the KKT violation over the "up" set, `j` minimizes the
/// resulting pair objective over the "down" set.
#[allow(clippy::too_many_arguments)]
fn solve_smo(
    kernel: &dyn Fn(usize, usize) -> f64,
    qd: &[f64],
    y: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
    track_objective: bool,
    cache_rows: usize,
) -> Solved {
    let n = y.len();
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let mut cache = RowCache::new(kernel, n, cache_rows);
    let mut objective = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut final_violation = f64::INFINITY;

    while iterations < max_iter {
        // Select i: the worst violator among points that can move up.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            if up {
                let v = -y[t] * grad[t];
                if v >= g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            final_violation = 0.0;
            break;
        };

        // Select j: best second-order decrease among points that can move
        // down, while tracking the opposite violation bound.
        let (mut g_max2, mut j_sel, mut obj_min) = (f64::NEG_INFINITY, None, f64::INFINITY);
        {
            let ki = cache.row(i);
            for t in 0..n {
                let down = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
                if !down {
                    continue;
                }
                let yg = y[t] * grad[t];
                if yg > g_max2 {
                    g_max2 = yg;
                }
                let grad_diff = g_max + yg;
                if grad_diff > 0.0 {
                    let mut quad = qd[i] + qd[t] - 2.0 * ki[t];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        final_violation = g_max + g_max2;
        if final_violation < tol || j_sel.is_none() {
            converged = true;
            break;
        }
        let j = j_sel.expect("checked above");

        // Analytic pair update with box clipping.
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let kij = kernel(i, j);
        let mut quad = qd[i] + qd[j] - 2.0 * kij;
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let delta_i = alpha[i] - old_ai;
        let delta_j = alpha[j] - old_aj;
        {
            let ki = cache.row(i);
            for t in 0..n {
                grad[t] += y[t] * y[i] * ki[t] * delta_i;
            }
        }
        {
            let kj = cache.row(j);
            for t in 0..n {
                grad[t] += y[t] * y[j] * kj[t] * delta_j;
            }
        }

        iterations += 1;
        if track_objective {
            let sum_a: f64 = alpha.iter().sum();
            let dot: f64 = alpha.iter().zip(&grad).map(|(a, g)| a * g).sum();
            objective.push(0.5 * (sum_a - dot));
        }
    }

    // Bias from the free support vectors, or the violation-bound midpoint.
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0u32);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    Solved {
        alpha,
        bias: -rho,
        iterations,
        converged,
        final_violation,
        objective,
    }
}

/// Checks the trained model's optimality conditions on its own training
/// data. Returns a description of the first violation found.
///
/// - dual feasibility: `0 <= alpha <= C` and `|sum alpha_i y_i| <= tol`;
/// - KKT: `alpha = 0` implies `y f(x) >= 1 - tol`, free alphas imply
///   `|y f(x) - 1| <= tol`, `alpha = C` implies `y f(x) <= 1 + tol`;
/// - the tracked dual objective never decreases.
pub fn verify_kkt(
    outcome: &TrainOutcome,
    leaf: &[Point3],
    stem: &[Point3],
    params: &SvmParams,
) -> std::result::Result<(), String> {
    let diag = &outcome.diag;
    let c = params.c;
    let slack = params.tol * 1.001 + 1e-9;

    let mut sum_ay = 0.0;
    for (t, (&a, &y)) in diag.alphas.iter().zip(&diag.labels).enumerate() {
        if !(-1e-12..=c + 1e-12).contains(&a) {
            return Err(format!("alpha[{t}] = {a} outside [0, {c}]"));
        }
        sum_ay += a * y;
    }
    if sum_ay.abs() > slack {
        return Err(format!("sum alpha*y = {sum_ay} exceeds tolerance"));
    }

    let points: Vec<Point3> = leaf.iter().chain(stem.iter()).copied().collect();
    for (t, &p) in points.iter().enumerate() {
        let margin = diag.labels[t] * outcome.model.decision(p);
        let a = diag.alphas[t];
        if a <= 0.0 && margin < 1.0 - slack {
            return Err(format!("alpha[{t}] = 0 but y*f = {margin} < 1 - tol"));
        }
        if a > 0.0 && a < c && (margin - 1.0).abs() > slack {
            return Err(format!("free alpha[{t}] = {a} but y*f = {margin} != 1"));
        }
        if a >= c && margin > 1.0 + slack {
            return Err(format!(
                "bounded alpha[{t}] = C but y*f = {margin} > 1 + tol"
            ));
        }
    }

    for w in diag.objective.windows(2) {
        let floor = -1e-9 * w[0].abs().max(1.0);
        if w[1] - w[0] < floor {
            return Err(format!("dual objective decreased: {} -> {}", w[0], w[1]));
        }
    }
    Ok(())
}
