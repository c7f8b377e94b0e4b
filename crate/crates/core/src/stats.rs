//! Rollout-budget bootstrap curves, a logistic-regression correctness probe,
//! and rank correlation.
//!
//! The probe is fit from scratch with damped Newton steps and a gradient
//! fallback; `logistic_loss` / `logistic_gradient` are exposed separately so
//! the analytic gradient can be checked against finite differences.

use num::{BigRational, FromPrimitive, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("rollout pool is empty")]
    EmptyPool,
    #[error("scale upper bound must exceed lower bound")]
    BadScale,
    #[error("unit score {value} outside scale [{low}, {high}]")]
    UnitOutOfScale { value: f64, low: f64, high: f64 },
    #[error("subsample size {n} exceeds pool size {pool} without replacement")]
    SubsampleTooLarge { n: usize, pool: usize },
    #[error("at least one resample required")]
    NoResamples,
    #[error("subsample sizes must be at least 1")]
    ZeroSubsample,
    #[error("feature matrix contains a non-finite value")]
    NonFiniteFeature,
    #[error("feature rows have inconsistent lengths")]
    RaggedFeatures,
    #[error("feature rows and labels have different lengths")]
    LengthMismatch,
    #[error("need at least one sample of each class")]
    MissingClass,
    #[error("feature dimension mismatch: model has {model}, input has {input}")]
    DimensionMismatch { model: usize, input: usize },
    #[error("optimizer did not converge in {iterations} iterations (gradient norm {grad_norm:.3e})")]
    DidNotConverge { iterations: usize, grad_norm: f64 },
    #[error("inputs must have equal length of at least 2")]
    TooShort,
    #[error("zero rank variance in {which} input")]
    ZeroRankVariance { which: &'static str },
    #[error("fold count must be between 2 and the sample count")]
    BadFoldCount,
}

/// The full-budget collection of per-rollout unit scores for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutPool {
    /// Per-rollout 0/1 verdicts or per-call judge scores.
    pub unit_scores: Vec<f64>,
    /// Inclusive score bounds used for range normalization.
    pub scale: (f64, f64),
}

impl RolloutPool {
    pub fn new(unit_scores: Vec<f64>, scale: (f64, f64)) -> Result<Self, StatsError> {
        if unit_scores.is_empty() {
            return Err(StatsError::EmptyPool);
        }
        let (low, high) = scale;
        if high <= low {
            return Err(StatsError::BadScale);
        }
        if let Some(&value) = unit_scores.iter().find(|v| !(low..=high).contains(v)) {
            return Err(StatsError::UnitOutOfScale { value, low, high });
        }
        Ok(RolloutPool { unit_scores, scale })
    }
}

/// How subsamples are drawn from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Classic bootstrap draws.
    #[default]
    WithReplacement,
    /// Subsampling semantics; a full-size subsample reproduces the pool.
    WithoutReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurvePoint {
    pub n: usize,
    pub mean_normalized_error: f64,
    pub resamples: usize,
}

/// Mean range-normalized absolute error of n-rollout estimates against the
/// full-pool reference, per subsample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub mode: ResampleMode,
    pub seed: u64,
    pub points: Vec<ErrorCurvePoint>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// For each subsample size `n`, draw `resamples` subsamples and average the
/// range-normalized absolute deviation of the subsample mean from the
/// full-pool mean.
pub fn bootstrap_error(
    pool: &RolloutPool,
    n_values: &[usize],
    resamples: usize,
    mode: ResampleMode,
    seed: u64,
) -> Result<ErrorCurve, StatsError> {
    if resamples == 0 {
        return Err(StatsError::NoResamples);
    }
    let size = pool.unit_scores.len();
    let mut sizes: Vec<usize> = n_values.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    for &n in &sizes {
        if n == 0 {
            return Err(StatsError::ZeroSubsample);
        }
        if mode == ResampleMode::WithoutReplacement && n > size {
            return Err(StatsError::SubsampleTooLarge { n, pool: size });
        }
    }

    let full_mean = mean(&pool.unit_scores);
    let range = pool.scale.1 - pool.scale.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(sizes.len());

    for &n in &sizes {
        let mut total = 0.0;
        for _ in 0..resamples {
            let sub_mean = match mode {
                ResampleMode::WithReplacement => {
                    let sum: f64 = (0..n)
                        .map(|_| pool.unit_scores[rng.gen_range(0..size)])
                        .sum();
                    sum / n as f64
                }
                ResampleMode::WithoutReplacement => {
                    let picked = rand::seq::index::sample(&mut rng, size, n);
                    let sum: f64 = picked.iter().map(|i| pool.unit_scores[i]).sum();
                    sum / n as f64
                }
            };
            total += (sub_mean - full_mean).abs() / range;
        }
        points.push(ErrorCurvePoint {
            n,
            mean_normalized_error: total / resamples as f64,
            resamples,
        });
    }

    Ok(ErrorCurve { mode, seed, points })
}

/// Regularized logistic-regression classifier over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub feature_names: Vec<String>,
    /// Weights in standardized feature space.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub regularization: f64,
    /// Standardization transform captured at fit time.
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// Loss after each accepted optimizer step, starting at the zero model.
    pub loss_trajectory: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean negative log-likelihood plus an L2 penalty on the weights (the bias
/// is not penalized).
pub fn logistic_loss(
    features: &[Vec<f64>],
    labels: &[u8],
    weights: &[f64],
    bias: f64,
    regularization: f64,
) -> f64 {
    let m = features.len() as f64;
    let mut nll = 0.0;
    for (row, &y) in features.iter().zip(labels) {
        let z = bias + row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>();
        nll += softplus(z) - f64::from(y) * z;
    }
    let penalty = 0.5 * regularization * weights.iter().map(|w| w * w).sum::<f64>();
    nll / m + penalty
}

/// Analytic gradient of [`logistic_loss`] with respect to (weights, bias).
pub fn logistic_gradient(
    features: &[Vec<f64>],
    labels: &[u8],
    weights: &[f64],
    bias: f64,
    regularization: f64,
) -> (Vec<f64>, f64) {
    let m = features.len() as f64;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &y) in features.iter().zip(labels) {
        let z = bias + row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>();
        let residual = sigmoid(z) - f64::from(y);
        for (g, x) in grad_w.iter_mut().zip(row) {
            *g += residual * x;
        }
        grad_b += residual;
    }
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / m + regularization * w;
    }
    (grad_w, grad_b / m)
}

/// Solve a symmetric linear system by Gaussian elimination with partial
/// pivoting. Returns None when the matrix is effectively singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col].clone();
        for row in col + 1..n {
            let factor = a[row][col] / pivot[col];
            for (target, &source) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *target -= factor * source;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for col in row + 1..n {
            acc -= a[row][col] * x[col];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

const GRAD_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 500;

struct Standardized {
    rows: Vec<Vec<f64>>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

fn standardize(features: &[Vec<f64>]) -> Standardized {
    let m = features.len() as f64;
    let d = features[0].len();
    let mut means = vec![0.0; d];
    for row in features {
        for (mean, x) in means.iter_mut().zip(row) {
            *mean += x;
        }
    }
    for mean in &mut means {
        *mean /= m;
    }
    let mut stds = vec![0.0; d];
    for row in features {
        for ((std, x), mean) in stds.iter_mut().zip(row).zip(&means) {
            *std += (x - mean) * (x - mean);
        }
    }
    for std in &mut stds {
        *std = (*std / m).sqrt();
        // Constant features carry no signal; map them to zero instead of
        // dividing by zero.
        if *std == 0.0 {
            *std = 1.0;
        }
    }
    let rows = features
        .iter()
        .map(|row| {
            row.iter()
                .zip(&means)
                .zip(&stds)
                .map(|((x, mean), std)| (x - mean) / std)
                .collect()
        })
        .collect();
    Standardized { rows, means, stds }
}

fn validate_training_input(features: &[Vec<f64>], labels: &[u8]) -> Result<(), StatsError> {
    if features.len() != labels.len() {
        return Err(StatsError::LengthMismatch);
    }
    if features.is_empty() {
        return Err(StatsError::MissingClass);
    }
    let d = features[0].len();
    for row in features {
        if row.len() != d {
            return Err(StatsError::RaggedFeatures);
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFiniteFeature);
        }
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(StatsError::MissingClass);
    }
    Ok(())
}

/// Fit the correctness probe by minimizing the regularized negative
/// log-likelihood to gradient-norm tolerance 1e-8.
///
/// Newton steps are damped by backtracking; when the Newton direction fails
/// to produce a decrease, a backtracking gradient step is taken instead, so
/// the recorded loss trajectory is strictly non-increasing.
pub fn fit_probe(
    features: &[Vec<f64>],
    labels: &[u8],
    regularization: f64,
) -> Result<ProbeModel, StatsError> {
    validate_training_input(features, labels)?;
    let standardized = standardize(features);
    let rows = &standardized.rows;
    let d = rows[0].len();
    let m = rows.len() as f64;

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut loss = logistic_loss(rows, labels, &weights, bias, regularization);
    let mut trajectory = vec![loss];
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let (grad_w, grad_b) = logistic_gradient(rows, labels, &weights, bias, regularization);
        grad_norm = (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if grad_norm <= GRAD_TOLERANCE {
            break;
        }
        iterations += 1;

        // Hessian over (weights, bias), bias as the trailing coordinate.
        let mut hessian = vec![vec![0.0; d + 1]; d + 1];
        for row in rows.iter() {
            let z = bias + row.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>();
            let p = sigmoid(z);
            let s = (p * (1.0 - p)).max(1e-12);
            let augmented: Vec<f64> = row.iter().copied().chain(std::iter::once(1.0)).collect();
            for (hessian_row, &xi) in hessian.iter_mut().zip(&augmented) {
                for (entry, &xj) in hessian_row.iter_mut().zip(&augmented) {
                    *entry += s * xi * xj;
                }
            }
        }
        for (i, hessian_row) in hessian.iter_mut().enumerate() {
            for entry in hessian_row.iter_mut() {
                *entry /= m;
            }
            if i < d {
                hessian_row[i] += regularization;
            }
        }

        let mut gradient = grad_w.clone();
        gradient.push(grad_b);
        let newton_step = solve_dense(hessian, gradient.clone());

        let mut accepted = false;
        let mut directions: Vec<Vec<f64>> = Vec::new();
        if let Some(step) = newton_step {
            directions.push(step);
        }
        directions.push(gradient.clone());

        'directions: for direction in directions {
            let mut scale = 1.0;
            for _ in 0..60 {
                let trial_w: Vec<f64> = weights
                    .iter()
                    .zip(&direction)
                    .map(|(w, s)| w - scale * s)
                    .collect();
                let trial_b = bias - scale * direction[d];
                let trial_loss = logistic_loss(rows, labels, &trial_w, trial_b, regularization);
                if trial_loss < loss {
                    weights = trial_w;
                    bias = trial_b;
                    loss = trial_loss;
                    trajectory.push(loss);
                    accepted = true;
                    break 'directions;
                }
                scale *= 0.5;
            }
        }
        if !accepted {
            // No direction produced a decrease: we are at numerical floor.
            break;
        }
    }

    if grad_norm > GRAD_TOLERANCE {
        let (grad_w, grad_b) = logistic_gradient(rows, labels, &weights, bias, regularization);
        grad_norm = (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if grad_norm > GRAD_TOLERANCE {
            return Err(StatsError::DidNotConverge {
                iterations,
                grad_norm,
            });
        }
    }

    Ok(ProbeModel {
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        weights,
        bias,
        regularization,
        feature_means: standardized.means,
        feature_stds: standardized.stds,
        iterations,
        final_grad_norm: grad_norm,
        loss_trajectory: trajectory,
    })
}

impl ProbeModel {
    /// Probability of the positive class for one raw (unstandardized) row.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, StatsError> {
        if row.len() != self.weights.len() {
            return Err(StatsError::DimensionMismatch {
                model: self.weights.len(),
                input: row.len(),
            });
        }
        let z = self.bias
            + row
                .iter()
                .zip(&self.feature_means)
                .zip(&self.feature_stds)
                .zip(&self.weights)
                .map(|(((x, mean), std), w)| (x - mean) / std * w)
                .sum::<f64>();
        Ok(sigmoid(z))
    }

    pub fn predict(&self, row: &[f64]) -> Result<u8, StatsError> {
        Ok(if self.predict_proba(row)? >= 0.5 { 1 } else { 0 })
    }
}

/// Evaluation protocol for [`probe_accuracy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeProtocol {
    /// Score the provided model on the provided data.
    InSample,
    /// Refit per fold with the model's regularization and score held-out
    /// folds; deterministic given the seed.
    KFold { k: usize, seed: u64 },
}

/// Classification accuracy at threshold 0.5 under the given protocol.
pub fn probe_accuracy(
    model: &ProbeModel,
    features: &[Vec<f64>],
    labels: &[u8],
    protocol: ProbeProtocol,
) -> Result<f64, StatsError> {
    if features.len() != labels.len() {
        return Err(StatsError::LengthMismatch);
    }
    if let Some(row) = features.first() {
        if row.len() != model.weights.len() {
            return Err(StatsError::DimensionMismatch {
                model: model.weights.len(),
                input: row.len(),
            });
        }
    }
    match protocol {
        ProbeProtocol::InSample => {
            let mut correct = 0usize;
            for (row, &y) in features.iter().zip(labels) {
                if model.predict(row)? == y {
                    correct += 1;
                }
            }
            Ok(correct as f64 / labels.len() as f64)
        }
        ProbeProtocol::KFold { k, seed } => {
            if k < 2 || k > features.len() {
                return Err(StatsError::BadFoldCount);
            }
            let mut order: Vec<usize> = (0..features.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);

            let mut correct = 0usize;
            for fold in 0..k {
                let held: Vec<usize> = order
                    .iter()
                    .copied()
                    .enumerate()
                    .filter(|(pos, _)| pos % k == fold)
                    .map(|(_, idx)| idx)
                    .collect();
                let train: Vec<usize> = order
                    .iter()
                    .copied()
                    .enumerate()
                    .filter(|(pos, _)| pos % k != fold)
                    .map(|(_, idx)| idx)
                    .collect();
                let train_x: Vec<Vec<f64>> = train.iter().map(|&i| features[i].clone()).collect();
                let train_y: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
                let fold_model = fit_probe(&train_x, &train_y, model.regularization)?;
                for &i in &held {
                    if fold_model.predict(&features[i])? == labels[i] {
                        correct += 1;
                    }
                }
            }
            Ok(correct as f64 / labels.len() as f64)
        }
    }
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // Positions start..=end (0-based) share the mean 1-based rank.
        let shared = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            ranks[idx] = shared;
        }
        start = end + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
///
/// Perfectly concordant or discordant rankings return exactly 1.0 or -1.0;
/// the general case is accurate to floating precision.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(StatsError::TooShort);
    }
    let ranks_a = average_ranks(a);
    let ranks_b = average_ranks(b);

    // Ranks are exact multiples of 1/2, so the moments are exact rationals.
    let exact = |v: f64| BigRational::from_f64(v).unwrap();
    let n = BigRational::from_usize(a.len()).unwrap();
    let mean_a: BigRational = ranks_a.iter().map(|&r| exact(r)).sum::<BigRational>() / n.clone();
    let mean_b: BigRational = ranks_b.iter().map(|&r| exact(r)).sum::<BigRational>() / n;

    let mut cov = BigRational::zero();
    let mut var_a = BigRational::zero();
    let mut var_b = BigRational::zero();
    for (&ra, &rb) in ranks_a.iter().zip(&ranks_b) {
        let da = exact(ra) - mean_a.clone();
        let db = exact(rb) - mean_b.clone();
        cov += da.clone() * db.clone();
        var_a += da.clone() * da;
        var_b += db.clone() * db;
    }
    if var_a.is_zero() {
        return Err(StatsError::ZeroRankVariance { which: "first" });
    }
    if var_b.is_zero() {
        return Err(StatsError::ZeroRankVariance { which: "second" });
    }

    let cov_squared = cov.clone() * cov.clone();
    let denom_squared = var_a.clone() * var_b.clone();
    if cov_squared == denom_squared {
        return Ok(if cov > BigRational::zero() { 1.0 } else { -1.0 });
    }
    let denom = (var_a.to_f64().unwrap() * var_b.to_f64().unwrap()).sqrt();
    Ok(cov.to_f64().unwrap() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn bernoulli_pool(successes: usize, total: usize) -> RolloutPool {
        let mut units = vec![1.0; successes];
        units.extend(vec![0.0; total - successes]);
        RolloutPool::new(units, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn constant_pool_has_zero_error_everywhere() {
        let pool = RolloutPool::new(vec![1.0; 64], (0.0, 1.0)).unwrap();
        let curve =
            bootstrap_error(&pool, &[4, 8, 16, 32, 64], 50, ResampleMode::WithReplacement, 7)
                .unwrap();
        for point in curve.points {
            assert_eq!(point.mean_normalized_error, 0.0);
        }
    }

    #[test]
    fn full_subsample_without_replacement_is_exact() {
        let pool = bernoulli_pool(19, 64);
        let curve =
            bootstrap_error(&pool, &[64], 100, ResampleMode::WithoutReplacement, 3).unwrap();
        assert_eq!(curve.points[0].mean_normalized_error, 0.0);
    }

    #[test]
    fn single_draw_error_is_half_on_balanced_pool() {
        // With pool mean 1/2, every single draw is 0 or 1 and off by exactly
        // one half, so the mean over any number of resamples is exactly 0.5.
        let pool = bernoulli_pool(32, 64);
        let curve = bootstrap_error(&pool, &[1], 200, ResampleMode::WithReplacement, 11).unwrap();
        assert_eq!(curve.points[0].mean_normalized_error, 0.5);
    }

    #[test]
    fn oversized_subsample_is_rejected_without_replacement() {
        let pool = bernoulli_pool(10, 32);
        let err = bootstrap_error(&pool, &[64], 10, ResampleMode::WithoutReplacement, 1)
            .unwrap_err();
        assert!(matches!(err, StatsError::SubsampleTooLarge { n: 64, pool: 32 }));
    }

    #[test]
    fn error_decreases_with_n_on_average() {
        let mut totals = [0.0f64; 4];
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 900);
            let units: Vec<f64> = (0..64)
                .map(|_| if rng.gen::<f64>() < 0.3 { 1.0 } else { 0.0 })
                .collect();
            let pool = RolloutPool::new(units, (0.0, 1.0)).unwrap();
            let curve =
                bootstrap_error(&pool, &[4, 8, 16, 32], 100, ResampleMode::WithReplacement, seed)
                    .unwrap();
            for (total, point) in totals.iter_mut().zip(&curve.points) {
                *total += point.mean_normalized_error;
            }
        }
        for pair in totals.windows(2) {
            assert!(pair[0] >= pair[1], "error increased with n: {totals:?}");
        }
    }

    #[test]
    fn bootstrap_is_deterministic_per_seed() {
        let pool = bernoulli_pool(19, 64);
        let a = bootstrap_error(&pool, &[4, 8], 200, ResampleMode::WithReplacement, 42).unwrap();
        let b = bootstrap_error(&pool, &[4, 8], 200, ResampleMode::WithReplacement, 42).unwrap();
        assert_eq!(a, b);
    }

    fn separable_1d() -> (Vec<Vec<f64>>, Vec<u8>) {
        let features: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i < 10 { i as f64 } else { i as f64 + 5.0 }])
            .collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        (features, labels)
    }

    #[test]
    fn separable_data_reaches_full_training_accuracy() {
        let (features, labels) = separable_1d();
        let model = fit_probe(&features, &labels, 1e-4).unwrap();
        let acc = probe_accuracy(&model, &features, &labels, ProbeProtocol::InSample).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn zero_model_loss_is_ln2_on_balanced_data() {
        let (features, labels) = separable_1d();
        let loss = logistic_loss(&features, &labels, &[0.0], 0.0, 0.0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        // fit_probe records the zero-model loss as the trajectory start.
        let model = fit_probe(&features, &labels, 1e-4).unwrap();
        assert!((model.loss_trajectory[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_trajectory_is_monotone() {
        let (features, labels) = separable_1d();
        let model = fit_probe(&features, &labels, 1e-4).unwrap();
        for pair in model.loss_trajectory.windows(2) {
            assert!(pair[1] < pair[0]);
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let features: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let labels: Vec<u8> = (0..30).map(|_| u8::from(rng.gen::<f64>() < 0.5)).collect();
        let reg = 1e-3;
        for _ in 0..20 {
            let weights: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let bias = rng.gen::<f64>() - 0.5;
            let (grad_w, grad_b) = logistic_gradient(&features, &labels, &weights, bias, reg);
            let h = 1e-6;
            for i in 0..3 {
                let mut plus = weights.clone();
                plus[i] += h;
                let mut minus = weights.clone();
                minus[i] -= h;
                let fd = (logistic_loss(&features, &labels, &plus, bias, reg)
                    - logistic_loss(&features, &labels, &minus, bias, reg))
                    / (2.0 * h);
                let rel = (grad_w[i] - fd).abs() / grad_w[i].abs().max(1e-8);
                assert!(rel < 1e-4, "weight {i}: analytic {} vs fd {fd}", grad_w[i]);
            }
            let fd_b = (logistic_loss(&features, &labels, &weights, bias + h, reg)
                - logistic_loss(&features, &labels, &weights, bias - h, reg))
                / (2.0 * h);
            let rel = (grad_b - fd_b).abs() / grad_b.abs().max(1e-8);
            assert!(rel < 1e-4);
        }
    }

    #[test]
    fn probe_decisions_survive_affine_feature_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let features: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0])
            .collect();
        let labels: Vec<u8> = features
            .iter()
            .map(|row| u8::from(row[0] + 0.3 * row[1] + 0.2 * (rng.gen::<f64>() - 0.5) > 1.0))
            .collect();
        let rescaled: Vec<Vec<f64>> = features
            .iter()
            .map(|row| vec![row[0] * 1000.0 - 7.0, row[1] * 0.001 + 3.0])
            .collect();
        let model_a = fit_probe(&features, &labels, 1e-4).unwrap();
        let model_b = fit_probe(&rescaled, &labels, 1e-4).unwrap();
        for (row_a, row_b) in features.iter().zip(&rescaled) {
            assert_eq!(
                model_a.predict(row_a).unwrap(),
                model_b.predict(row_b).unwrap()
            );
        }
    }

    #[test]
    fn single_class_training_is_rejected() {
        let features = vec![vec![0.0], vec![1.0]];
        let err = fit_probe(&features, &[1, 1], 1e-4).unwrap_err();
        assert!(matches!(err, StatsError::MissingClass));
        let err = fit_probe(&[vec![f64::NAN]], &[1], 1e-4).unwrap_err();
        assert!(matches!(
            err,
            StatsError::NonFiniteFeature | StatsError::MissingClass
        ));
    }

    #[test]
    fn spearman_perfect_and_reversed_are_exact() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b = vec![2.0, 4.0, 6.0, 8.0, 10.0];
        assert_eq!(spearman(&a, &b).unwrap(), 1.0);
        let reversed: Vec<f64> = b.iter().rev().copied().collect();
        assert_eq!(spearman(&a, &reversed).unwrap(), -1.0);
    }

    #[test]
    fn spearman_tie_case_matches_average_rank_oracle() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        let b = vec![1.0, 3.0, 2.0, 4.0];
        // Average ranks: a -> [1, 2.5, 2.5, 4], b -> [1, 3, 2, 4];
        // Pearson on those ranks is 4.5 / sqrt(4.5 * 5) = 3 / sqrt(10).
        let expected = 3.0 / 10.0_f64.sqrt();
        assert!((spearman(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn spearman_rejects_degenerate_inputs() {
        assert!(matches!(
            spearman(&[1.0], &[2.0]).unwrap_err(),
            StatsError::TooShort
        ));
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            StatsError::ZeroRankVariance { which: "first" }
        ));
    }

    proptest! {
        #[test]
        fn bootstrap_error_is_nonnegative(
            successes in 0usize..=32,
            seed in 0u64..500,
        ) {
            let pool = bernoulli_pool(successes, 32);
            let curve = bootstrap_error(&pool, &[2, 4, 8], 20, ResampleMode::WithReplacement, seed).unwrap();
            for point in curve.points {
                prop_assert!(point.mean_normalized_error >= 0.0);
            }
        }

        #[test]
        fn spearman_invariant_under_increasing_transform(
            values in proptest::collection::vec(0i32..20, 3..12),
            other in proptest::collection::vec(0i32..20, 3..12),
        ) {
            let len = values.len().min(other.len());
            let a: Vec<f64> = values[..len].iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = other[..len].iter().map(|&v| v as f64).collect();
            let transformed: Vec<f64> = a.iter().map(|&v| (v * 0.5 + 1.0).exp()).collect();
            match (spearman(&a, &b), spearman(&transformed, &b)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                (x, y) => prop_assert!(false, "divergent outcomes: {x:?} vs {y:?}"),
            }
        }
    }
}
