//! Multi-univariate density detector.
//!
//! Every column gets its own Gaussian kernel density estimate, with the
//! column's population standard deviation as bandwidth. A row's normality
//! score is a mean (arithmetic, geometric or harmonic) of the entropy-weighted
//! per-column likelihoods. Training scores are computed leave-one-out, and a
//! second univariate density over those scores turns a new row's score into
//! the final likelihood.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, ArtifactError};
use crate::flatten::{FlatDataset, Label};

pub const ARTIFACT_KIND: &str = "adifa";
pub const ARTIFACT_VERSION: u32 = 1;

/// Relative bandwidth floor: `sigma >= SIGMA_FLOOR * max(1, |mean|)`.
pub const SIGMA_FLOOR: f64 = 1e-9;
/// Per-term floor inside the log-space geometric mean.
pub const GEOMETRIC_TERM_FLOOR: f64 = 1e-300;
/// Columns with at most this many distinct values use them as entropy bins.
pub const DISTINCT_BIN_LIMIT: usize = 32;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AdifaError {
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("dataset has no columns")]
    NoColumns,
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteData { row: usize, column: usize },
    #[error("expected a vector of {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregation {
    ArithmeticMean,
    GeometricMean,
    HarmonicMean,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [
        Aggregation::ArithmeticMean,
        Aggregation::GeometricMean,
        Aggregation::HarmonicMean,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Aggregation::ArithmeticMean => "am",
            Aggregation::GeometricMean => "gm",
            Aggregation::HarmonicMean => "hm",
        }
    }

    /// Mean of non-negative terms. Geometric and harmonic means are 0 as soon
    /// as one term is 0.
    pub fn apply(self, terms: &[f64]) -> f64 {
        if terms.is_empty() {
            return 0.0;
        }
        let n = terms.len() as f64;
        match self {
            Aggregation::ArithmeticMean => terms.iter().sum::<f64>() / n,
            Aggregation::GeometricMean => {
                if terms.iter().any(|&t| t <= 0.0) {
                    return 0.0;
                }
                let log_sum: f64 = terms
                    .iter()
                    .map(|&t| t.max(GEOMETRIC_TERM_FLOOR).ln())
                    .sum();
                (log_sum / n).exp()
            }
            Aggregation::HarmonicMean => {
                if terms.iter().any(|&t| t <= 0.0) {
                    return 0.0;
                }
                n / terms.iter().map(|&t| 1.0 / t).sum::<f64>()
            }
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "am" | "arithmetic" => Ok(Aggregation::ArithmeticMean),
            "gm" | "geometric" => Ok(Aggregation::GeometricMean),
            "hm" | "harmonic" => Ok(Aggregation::HarmonicMean),
            other => Err(format!(
                "unknown aggregation `{other}` (expected am, gm or hm)"
            )),
        }
    }
}

/// Shannon entropy, in bits, of a column's binned empirical distribution.
pub fn attribute_entropy(column: &[f64]) -> f64 {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    entropy_of_sorted(&sorted)
}

fn entropy_of_sorted(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m == 0 {
        return 0.0;
    }
    let mut runs: Vec<usize> = Vec::new();
    let mut prev = sorted[0];
    let mut count = 0usize;
    for &v in sorted {
        if v == prev {
            count += 1;
        } else {
            runs.push(count);
            prev = v;
            count = 1;
        }
    }
    runs.push(count);

    let counts = if runs.len() <= DISTINCT_BIN_LIMIT {
        runs
    } else {
        let bins = (1.0 + (m as f64).log2()).ceil() as usize;
        let lo = sorted[0];
        let width = (sorted[m - 1] - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in sorted {
            let b = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
    };
    let total = m as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Entropy weights `1 - H_j / sum(H)`; all ones when the entropies sum to zero
/// or there is a single attribute.
pub fn compute_weights(entropies: &[f64]) -> Vec<f64> {
    let total: f64 = entropies.iter().sum();
    if entropies.len() == 1 || total <= 0.0 {
        return vec![1.0; entropies.len()];
    }
    entropies
        .iter()
        .map(|&h| (1.0 - h / total).clamp(0.0, 1.0))
        .collect()
}

fn floored_sigma(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    var.sqrt().max(SIGMA_FLOOR * mean.abs().max(1.0))
}

/// Gaussian kernel density estimate of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeModel {
    /// Training values, sorted ascending.
    pub values: Vec<f64>,
    pub sigma: f64,
    /// Decay coefficient `1 / (2 sigma^2)`.
    pub tau: f64,
    /// Kernel normalizer `(2 pi sigma^2)^(-1/2)`.
    pub norm: f64,
    pub weight: f64,
    /// Entropy in bits.
    pub entropy: f64,
}

impl AttributeModel {
    pub fn fit(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self::from_sorted(values)
    }

    fn from_sorted(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        let sigma = floored_sigma(&values);
        let entropy = entropy_of_sorted(&values);
        AttributeModel {
            tau: 1.0 / (2.0 * sigma * sigma),
            norm: (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.5),
            values,
            sigma,
            weight: 1.0,
            entropy,
        }
    }

    pub fn likelihood(&self, x: f64) -> f64 {
        let sum: f64 = self
            .values
            .iter()
            .map(|&a| {
                let d = a - x;
                (-self.tau * d * d).exp()
            })
            .sum();
        self.norm * sum / self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdifaConfig {
    pub psi: Aggregation,
    pub threshold: f64,
}

impl Default for AdifaConfig {
    fn default() -> Self {
        AdifaConfig {
            psi: Aggregation::GeometricMean,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAttribute {
    pub column: String,
    pub likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    /// Aggregated normality score of the row.
    pub score: f64,
    /// Density of `score` among the training scores.
    pub meta_density: f64,
    /// `meta_density` calibrated to [0, 1].
    pub likelihood: f64,
    pub label: Label,
    /// Unweighted per-column likelihoods, ascending; ties keep column order.
    pub per_attribute: Vec<RankedAttribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdifaModel {
    pub column_names: Vec<String>,
    pub psi: Aggregation,
    pub threshold: f64,
    pub attributes: Vec<AttributeModel>,
    /// Leave-one-out normality scores of the training rows, in row order.
    pub training_scores: Vec<f64>,
    /// Density model over `training_scores`.
    pub meta: AttributeModel,
    pub calibration_max: f64,
}

fn check_threshold(c: f64) -> Result<(), AdifaError> {
    if c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(AdifaError::InvalidThreshold(c))
    }
}

/// Removes one entry from a sorted slice.
fn without(sorted: &[f64], pos: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(sorted.len() - 1);
    v.extend_from_slice(&sorted[..pos]);
    v.extend_from_slice(&sorted[pos + 1..]);
    v
}

/// For each value in `column` (row order): the model refit without that row,
/// evaluated at the held-out value. Returns `(entropy, likelihood)` per row.
fn leave_one_out(column: &[f64]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| column[i]).collect();
    let mut rank = vec![0usize; column.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    (0..column.len())
        .map(|i| {
            let fold = AttributeModel::from_sorted(without(&sorted, rank[i]));
            (fold.entropy, fold.likelihood(column[i]))
        })
        .collect()
}

pub fn train(dataset: &FlatDataset, config: AdifaConfig) -> Result<AdifaModel, AdifaError> {
    check_threshold(config.threshold)?;
    let m = dataset.len();
    if m < 2 {
        return Err(AdifaError::TooFewRows(m));
    }
    let n = dataset.width();
    if n == 0 {
        return Err(AdifaError::NoColumns);
    }
    for (row, values) in dataset.rows.iter().enumerate() {
        if values.len() != n {
            return Err(AdifaError::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if let Some(column) = values.iter().position(|v| !v.is_finite()) {
            return Err(AdifaError::NonFiniteData { row, column });
        }
    }

    let columns: Vec<Vec<f64>> = (0..n)
        .map(|j| dataset.rows.iter().map(|r| r[j]).collect())
        .collect();

    let mut attributes: Vec<AttributeModel> = columns
        .par_iter()
        .map(|c| AttributeModel::fit(c.clone()))
        .collect();
    let weights = compute_weights(&attributes.iter().map(|a| a.entropy).collect::<Vec<_>>());
    for (a, w) in attributes.iter_mut().zip(weights) {
        a.weight = w;
    }

    // Every training row is scored against a model fit on the other m - 1 rows,
    // including bandwidths, entropies and weights.
    let folds: Vec<Vec<(f64, f64)>> = columns.par_iter().map(|c| leave_one_out(c)).collect();
    let training_scores: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let entropies: Vec<f64> = folds.iter().map(|f| f[i].0).collect();
            let w = compute_weights(&entropies);
            let terms: Vec<f64> = folds.iter().zip(&w).map(|(f, w)| w * f[i].1).collect();
            config.psi.apply(&terms)
        })
        .collect();

    let meta = AttributeModel::fit(training_scores.clone());
    let loo_max = leave_one_out(&training_scores)
        .into_iter()
        .map(|(_, d)| d)
        .fold(0.0, f64::max);
    let calibration_max = if loo_max > 0.0 && loo_max.is_finite() {
        loo_max
    } else {
        training_scores
            .iter()
            .map(|&s| meta.likelihood(s))
            .fold(0.0, f64::max)
    };

    Ok(AdifaModel {
        column_names: dataset.column_names.clone(),
        psi: config.psi,
        threshold: config.threshold,
        attributes,
        training_scores,
        meta,
        calibration_max,
    })
}

impl AdifaModel {
    pub fn width(&self) -> usize {
        self.attributes.len()
    }

    pub fn meta_sigma(&self) -> f64 {
        self.meta.sigma
    }

    pub fn meta_tau(&self) -> f64 {
        self.meta.tau
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), AdifaError> {
        if x.len() == self.width() {
            Ok(())
        } else {
            Err(AdifaError::DimensionMismatch {
                expected: self.width(),
                found: x.len(),
            })
        }
    }

    /// Unweighted per-column likelihoods of `x`.
    pub fn attribute_likelihoods(&self, x: &[f64]) -> Result<Vec<f64>, AdifaError> {
        self.check_dim(x)?;
        Ok(self
            .attributes
            .iter()
            .zip(x)
            .map(|(a, &v)| a.likelihood(v))
            .collect())
    }

    fn score_from(&self, likelihoods: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .attributes
            .iter()
            .zip(likelihoods)
            .map(|(a, d)| a.weight * d)
            .collect();
        self.psi.apply(&terms)
    }

    pub fn instance_score(&self, x: &[f64]) -> Result<f64, AdifaError> {
        Ok(self.score_from(&self.attribute_likelihoods(x)?))
    }

    pub fn meta_density(&self, score: f64) -> f64 {
        self.meta.likelihood(score)
    }

    pub fn calibrate(&self, meta_density: f64) -> f64 {
        (meta_density / self.calibration_max).min(1.0)
    }

    pub fn classify(&self, x: &[f64]) -> Result<DetectionResult, AdifaError> {
        let d = self.attribute_likelihoods(x)?;
        let score = self.score_from(&d);
        let meta_density = self.meta_density(score);
        let likelihood = self.calibrate(meta_density);
        let label = if likelihood < self.threshold {
            Label::Anomalous
        } else {
            Label::Normal
        };
        let mut per_attribute: Vec<RankedAttribute> = self
            .column_names
            .iter()
            .zip(d)
            .map(|(c, l)| RankedAttribute {
                column: c.clone(),
                likelihood: l,
            })
            .collect();
        per_attribute.sort_by(|a, b| a.likelihood.total_cmp(&b.likelihood));
        Ok(DetectionResult {
            score,
            meta_density,
            likelihood,
            label,
            per_attribute,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, AdifaError> {
        check_threshold(threshold)?;
        self.threshold = threshold;
        Ok(self)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        artifact::save(path, ARTIFACT_KIND, ARTIFACT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        artifact::load(path, ARTIFACT_KIND, ARTIFACT_VERSION)
    }

    pub fn to_artifact(&self) -> Result<String, ArtifactError> {
        artifact::encode(ARTIFACT_KIND, ARTIFACT_VERSION, self)
    }
}

/// The `top_k` least likely columns of a detection (clamped to the column count).
pub fn localize(result: &DetectionResult, top_k: usize) -> Vec<RankedAttribute> {
    result.per_attribute.iter().take(top_k).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(rows: Vec<Vec<f64>>) -> FlatDataset {
        let n = rows[0].len();
        FlatDataset::from_rows((0..n).map(|j| format!("/c{j}#min")).collect(), rows).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(attribute_entropy(&[3.0, 3.0, 3.0, 3.0]), 0.0);
        assert_eq!(attribute_entropy(&[0.0, 0.0, 1.0, 1.0]), 1.0);
        assert_eq!(attribute_entropy(&[0.0, 0.0, 1.0, 2.0]), 1.5);
    }

    #[test]
    fn entropy_switches_to_sturges_bins() {
        // 64 distinct values spread evenly: ceil(1 + log2 64) = 7 bins
        let col: Vec<f64> = (0..64).map(f64::from).collect();
        let mut counts = [0usize; 7];
        for v in &col {
            counts[((v / (63.0 / 7.0)).floor() as usize).min(6)] += 1;
        }
        let expected: f64 = counts
            .iter()
            .map(|&c| {
                let p = c as f64 / 64.0;
                -p * p.log2()
            })
            .sum();
        assert!((attribute_entropy(&col) - expected).abs() < 1e-12);
        assert!(attribute_entropy(&col) <= 7f64.log2());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(compute_weights(&[1.0, 1.0]), [0.5, 0.5]);
        assert_eq!(compute_weights(&[0.0, 2.0]), [1.0, 0.0]);
        assert_eq!(compute_weights(&[0.0, 0.0, 0.0]), [1.0, 1.0, 1.0]);
        assert_eq!(compute_weights(&[3.0]), [1.0]);
    }

    #[test]
    fn aggregation_examples() {
        assert!((Aggregation::ArithmeticMean.apply(&[0.2, 0.4]) - 0.3).abs() < 1e-15);
        assert!((Aggregation::GeometricMean.apply(&[0.25, 1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(Aggregation::GeometricMean.apply(&[0.0, 1.0]), 0.0);
        assert_eq!(Aggregation::HarmonicMean.apply(&[0.5, 0.0]), 0.0);
        assert!((Aggregation::HarmonicMean.apply(&[1.0, 0.5]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn likelihood_example() {
        let model = AttributeModel::fit(vec![0.0, 2.0]);
        assert_eq!(model.sigma, 1.0);
        let expected = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((model.likelihood(1.0) - expected).abs() < 1e-15);
        assert!((model.likelihood(1.0) - 0.241_970_724_519_143_37).abs() < 1e-12);
        for t in [0.1, 0.7, 3.0, 11.0] {
            assert!((model.likelihood(1.0 + t) - model.likelihood(1.0 - t)).abs() < 1e-15);
        }
        assert_eq!(model.likelihood(1e6), 0.0);
        assert_eq!(model.likelihood(-1e6), 0.0);
    }

    #[test]
    fn constant_column_gets_floor_bandwidth() {
        let model = AttributeModel::fit(vec![5.0; 4]);
        assert_eq!(model.sigma, 5e-9);
        assert!(model.likelihood(5.0) > 1e7);
        assert_eq!(model.likelihood(5.001), 0.0);
    }

    #[test]
    fn training_scores_have_one_entry_per_row() {
        let ds = dataset(vec![
            vec![1.0, 2.0],
            vec![2.0, 2.5],
            vec![1.5, 3.0],
            vec![1.2, 2.2],
        ]);
        let model = train(&ds, AdifaConfig::default()).unwrap();
        assert_eq!(model.training_scores.len(), 4);
        assert!(model.training_scores.iter().all(|&s| s >= 0.0));
        assert_eq!(model.meta.tau, 1.0 / (2.0 * model.meta.sigma.powi(2)));
    }

    #[test]
    fn identical_rows_give_identical_scores() {
        let ds = dataset(vec![vec![1.0, -4.0, 7.5]; 6]);
        let model = train(&ds, AdifaConfig::default()).unwrap();
        let s0 = model.training_scores[0];
        assert!(model.training_scores.iter().all(|&s| s == s0));
        let r = model.classify(&[1.0, -4.0, 7.5]).unwrap();
        assert_eq!(r.label, Label::Normal);
    }

    #[test]
    fn errors() {
        let one = dataset(vec![vec![1.0]]);
        assert!(matches!(
            train(&one, AdifaConfig::default()),
            Err(AdifaError::TooFewRows(1))
        ));
        let bad = dataset(vec![vec![1.0], vec![f64::NAN]]);
        assert!(matches!(
            train(&bad, AdifaConfig::default()),
            Err(AdifaError::NonFiniteData { row: 1, column: 0 })
        ));
        let ok = dataset(vec![vec![1.0], vec![2.0], vec![1.5]]);
        assert!(matches!(
            train(
                &ok,
                AdifaConfig {
                    psi: Aggregation::GeometricMean,
                    threshold: 0.0
                }
            ),
            Err(AdifaError::InvalidThreshold(_))
        ));
        let model = train(&ok, AdifaConfig::default()).unwrap();
        assert!(matches!(
            model.classify(&[1.0, 2.0]),
            Err(AdifaError::DimensionMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn far_outlier_is_anomalous() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![f64::from(i % 7), f64::from(i % 5) * 0.5])
            .collect();
        let model = train(&dataset(rows), AdifaConfig::default()).unwrap();
        let r = model.classify(&[1e7, -1e7]).unwrap();
        assert_eq!(r.label, Label::Anomalous);
        assert!(r.likelihood < 1e-6, "{}", r.likelihood);
    }

    #[test]
    fn localization_ranks_the_disturbed_column_first() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                vec![
                    f64::from(i % 4),
                    10.0 + f64::from(i % 3),
                    f64::from(i % 6) * 0.1,
                ]
            })
            .collect();
        let model = train(&dataset(rows), AdifaConfig::default()).unwrap();
        let r = model.classify(&[1.0, 500.0, 0.2]).unwrap();
        let top = localize(&r, 1);
        assert_eq!(top[0].column, "/c1#min");
        assert_eq!(localize(&r, 10).len(), 3);
        // defined for normal rows as well
        let normal = model.classify(&[1.0, 11.0, 0.2]).unwrap();
        assert_eq!(localize(&normal, 1).len(), 1);
    }

    #[test]
    fn duplicated_row_majority_is_normal() {
        let mut rows = vec![vec![3.0, 1.0, 8.0]; 90];
        for i in 0..10 {
            rows.push(vec![
                f64::from(i),
                f64::from(i * i) * 0.3,
                8.0 - f64::from(i),
            ]);
        }
        let model = train(&dataset(rows), AdifaConfig::default()).unwrap();
        let r = model.classify(&[3.0, 1.0, 8.0]).unwrap();
        assert_eq!(r.label, Label::Normal);
        assert!(r.likelihood > 0.9, "{}", r.likelihood);
    }

    #[test]
    fn artifact_round_trip_is_bit_exact() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![f64::from(i).sin(), f64::from(i).sqrt() / 3.0])
            .collect();
        let model = train(&dataset(rows), AdifaConfig::default()).unwrap();
        let text = model.to_artifact().unwrap();
        let back: AdifaModel = artifact::decode(ARTIFACT_KIND, ARTIFACT_VERSION, &text).unwrap();
        assert_eq!(back, model);
        for x in [[0.3, 0.7], [-2.0, 9.0], [0.0, 0.0]] {
            assert_eq!(back.classify(&x).unwrap(), model.classify(&x).unwrap());
        }
    }

    proptest! {
        #[test]
        fn weights_sum_to_n_minus_one(h in prop::collection::vec(0.0f64..8.0, 2..20)) {
            let total: f64 = h.iter().sum();
            prop_assume!(total > 0.0);
            let w = compute_weights(&h);
            let s: f64 = w.iter().sum();
            prop_assert!((s - (h.len() as f64 - 1.0)).abs() <= 1e-12 * h.len() as f64);
            prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn mean_inequality(terms in prop::collection::vec(1e-6f64..10.0, 1..12)) {
            let am = Aggregation::ArithmeticMean.apply(&terms);
            let gm = Aggregation::GeometricMean.apply(&terms);
            let hm = Aggregation::HarmonicMean.apply(&terms);
            prop_assert!(hm <= gm * (1.0 + 1e-12));
            prop_assert!(gm <= am * (1.0 + 1e-12));
        }

        #[test]
        fn likelihood_decreases_beyond_the_data(values in prop::collection::vec(-50.0f64..50.0, 2..30), step in 0.01f64..5.0) {
            let model = AttributeModel::fit(values);
            let top = *model.values.last().unwrap();
            let mut prev = model.likelihood(top);
            for k in 1..20 {
                let cur = model.likelihood(top + step * f64::from(k));
                prop_assert!(cur < prev || (cur == 0.0 && prev == 0.0));
                prev = cur;
            }
        }

        #[test]
        fn column_permutation_invariance(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..12),
            x in prop::collection::vec(-6.0f64..6.0, 3),
        ) {
            let model = train(&dataset(rows.clone()), AdifaConfig::default()).unwrap();
            let perm = [2usize, 0, 1];
            let permuted: Vec<Vec<f64>> = rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
            let pmodel = train(&dataset(permuted), AdifaConfig::default()).unwrap();
            let px: Vec<f64> = perm.iter().map(|&j| x[j]).collect();
            let a = model.classify(&x).unwrap();
            let b = pmodel.classify(&px).unwrap();
            let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1e-300);
            prop_assert!(close(a.score, b.score));
            prop_assert!(close(a.likelihood, b.likelihood));
            prop_assert_eq!(a.label, b.label);
        }
    }
}
