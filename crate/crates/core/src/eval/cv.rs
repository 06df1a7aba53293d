//! 5x2 cross-validation and learning curves under the one-class protocol:
//! models only ever see normal rows, test sets carry both labels.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::auc;
use super::EvalError;
use crate::detector::{AlgorithmConfig, Detector, TrainedModel};
use crate::flatten::{FlatDataset, Label};

pub const REPETITIONS: usize = 5;
pub const LEARNING_CURVE_GROUPS: usize = 10;

fn job_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn labels_of(dataset: &FlatDataset) -> Result<&[Label], EvalError> {
    let labels = dataset.labels.as_deref().ok_or(EvalError::Unlabeled)?;
    let anomalous = labels.iter().filter(|&&l| l == Label::Anomalous).count();
    if anomalous == 0 || anomalous == labels.len() {
        return Err(EvalError::SingleClass);
    }
    Ok(labels)
}

/// Shuffles each class separately and deals it alternately into two halves.
pub fn stratified_halves(labels: &[Label], rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for class in [Label::Normal, Label::Anomalous] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        for (k, i) in idx.into_iter().enumerate() {
            if k % 2 == 0 {
                a.push(i);
            } else {
                b.push(i);
            }
        }
    }
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repetition: usize,
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// Raw detector scores of the test rows, in `test_rows` order.
    pub scores: Vec<f64>,
    /// Anomaly-oriented scores (larger is more anomalous).
    pub anomaly_scores: Vec<f64>,
    pub predicted: Vec<Label>,
    pub auc: f64,
    #[serde(skip)]
    pub classify_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub algorithm: String,
    pub seed: u64,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
    pub folds: Vec<FoldResult>,
}

fn normal_rows(rows: &[usize], labels: &[Label]) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&i| labels[i] == Label::Normal)
        .collect()
}

/// Raw scores, anomaly-oriented scores and predicted labels of the test rows, plus classification seconds.
pub type FoldScores = (Vec<f64>, Vec<f64>, Vec<Label>, f64);

/// Trains on `train` (which must be all normal) and scores `test`.
pub fn train_and_score(
    dataset: &FlatDataset,
    config: &AlgorithmConfig,
    train: &[usize],
    test: &[usize],
) -> Result<FoldScores, EvalError> {
    let labels = dataset.labels.as_deref().ok_or(EvalError::Unlabeled)?;
    assert!(
        train.iter().all(|&i| labels[i] == Label::Normal),
        "anomalous row in a training set"
    );
    let model = TrainedModel::train(&dataset.select(train), config)?;
    let started = Instant::now();
    let predictions = test
        .iter()
        .map(|&i| model.predict(&dataset.rows[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let seconds = started.elapsed().as_secs_f64();
    let polarity = model.polarity();
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let oriented = scores
        .iter()
        .map(|&s| polarity.anomaly_oriented(s))
        .collect();
    Ok((
        scores,
        oriented,
        predictions.iter().map(|p| p.label).collect(),
        seconds,
    ))
}

pub fn cv_5x2(
    dataset: &FlatDataset,
    config: &AlgorithmConfig,
    seed: u64,
) -> Result<CvResult, EvalError> {
    let labels = labels_of(dataset)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..REPETITIONS)
        .map(|r| stratified_halves(labels, &mut job_rng(seed, r as u64)))
        .collect();
    for (a, b) in &splits {
        for half in [a, b] {
            let normals = normal_rows(half, labels).len();
            if normals < 2 {
                return Err(EvalError::TooFewRows {
                    needed: 2,
                    found: normals,
                });
            }
            if !half.iter().any(|&i| labels[i] == Label::Anomalous) || normals == half.len() {
                return Err(EvalError::SingleClass);
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..REPETITIONS).flat_map(|r| [(r, 0), (r, 1)]).collect();
    let folds = jobs
        .par_iter()
        .map(|&(r, fold)| {
            let (a, b) = &splits[r];
            let (train_half, test) = if fold == 0 { (a, b) } else { (b, a) };
            let train = normal_rows(train_half, labels);
            let (scores, anomaly_scores, predicted, classify_seconds) =
                train_and_score(dataset, config, &train, test)?;
            let test_labels: Vec<Label> = test.iter().map(|&i| labels[i]).collect();
            let auc = auc(&anomaly_scores, &test_labels)?;
            Ok(FoldResult {
                repetition: r,
                fold,
                train_rows: train,
                test_rows: test.clone(),
                scores,
                anomaly_scores,
                predicted,
                auc,
                classify_seconds,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let fold_aucs: Vec<f64> = folds.iter().map(|f| f.auc).collect();
    let mean_auc = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
    Ok(CvResult {
        algorithm: config.algorithm.tag().to_string(),
        seed,
        fold_aucs,
        mean_auc,
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    /// Normal rows in the nested subset.
    pub subset_normals: usize,
    pub train_size: usize,
    pub auc: f64,
}

/// Nested subsets `D_1 ⊂ ... ⊂ D_10` of the normal rows (plus all anomalies);
/// each trains on a random half of its normals and tests on the rest.
pub fn learning_curve(
    dataset: &FlatDataset,
    config: &AlgorithmConfig,
    seed: u64,
) -> Result<Vec<LearningPoint>, EvalError> {
    let labels = labels_of(dataset)?;
    let mut normals: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == Label::Normal)
        .collect();
    let anomalies: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == Label::Anomalous)
        .collect();
    if normals.len() < 2 * LEARNING_CURVE_GROUPS {
        return Err(EvalError::TooFewRows {
            needed: 2 * LEARNING_CURVE_GROUPS,
            found: normals.len(),
        });
    }
    normals.shuffle(&mut job_rng(seed, u64::MAX));
    let n = normals.len();
    // group g holds normals[bounds[g]..bounds[g + 1]]
    let bounds: Vec<usize> = (0..=LEARNING_CURVE_GROUPS)
        .map(|g| g * n / LEARNING_CURVE_GROUPS)
        .collect();

    (1..=LEARNING_CURVE_GROUPS)
        .into_par_iter()
        .map(|i| {
            let mut subset = normals[..bounds[i]].to_vec();
            subset.shuffle(&mut job_rng(seed, i as u64));
            let half = subset.len() / 2;
            let mut train = subset[..half].to_vec();
            train.sort_unstable();
            let mut test = subset[half..].to_vec();
            test.extend_from_slice(&anomalies);
            test.sort_unstable();
            let (_, oriented, _, _) = train_and_score(dataset, config, &train, &test)?;
            let test_labels: Vec<Label> = test.iter().map(|&t| labels[t]).collect();
            Ok(LearningPoint {
                subset_normals: subset.len(),
                train_size: train.len(),
                auc: auc(&oriented, &test_labels)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Algorithm;

    fn separated(m: usize) -> FlatDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..m {
            let anomalous = i % 5 == 0;
            let base = if anomalous { 1e6 } else { 0.0 };
            rows.push(vec![base + (i % 7) as f64, base - (i % 3) as f64]);
            labels.push(if anomalous {
                Label::Anomalous
            } else {
                Label::Normal
            });
        }
        FlatDataset::from_rows(vec!["/a#min".into(), "/b#min".into()], rows)
            .unwrap()
            .with_labels(labels)
            .unwrap()
    }

    #[test]
    fn stratified_split_balances_classes() {
        let labels: Vec<Label> = (0..21)
            .map(|i| {
                if i % 3 == 0 {
                    Label::Anomalous
                } else {
                    Label::Normal
                }
            })
            .collect();
        let (a, b) = stratified_halves(&labels, &mut job_rng(1, 0));
        assert_eq!(a.len() + b.len(), 21);
        let count = |h: &[usize]| h.iter().filter(|&&i| labels[i] == Label::Anomalous).count();
        assert!(count(&a).abs_diff(count(&b)) <= 1);
        assert!(a.iter().all(|i| !b.contains(i)));
    }

    #[test]
    fn ten_folds_deterministic_and_normal_only() {
        let ds = separated(100);
        let config = AlgorithmConfig::new(Algorithm::AdifaGm);
        let r1 = cv_5x2(&ds, &config, 7).unwrap();
        let r2 = cv_5x2(&ds, &config, 7).unwrap();
        assert_eq!(r1.fold_aucs.len(), 10);
        assert_eq!(r1.fold_aucs, r2.fold_aucs);
        assert!(r1.mean_auc > 0.99);
        let labels = ds.labels.as_ref().unwrap();
        for f in &r1.folds {
            assert!(f.train_rows.iter().all(|&i| labels[i] == Label::Normal));
            assert!(f.train_rows.iter().all(|i| !f.test_rows.contains(i)));
        }
    }

    #[test]
    fn learning_curve_shape() {
        let ds = separated(150);
        let pts = learning_curve(&ds, &AlgorithmConfig::new(Algorithm::AdifaGm), 3).unwrap();
        assert_eq!(pts.len(), 10);
        assert!(pts.windows(2).all(|w| w[0].train_size < w[1].train_size));
        assert_eq!(pts[9].subset_normals, 120);
    }

    #[test]
    fn unlabeled_or_single_class_rejected() {
        let mut ds = separated(30);
        let config = AlgorithmConfig::new(Algorithm::Pga);
        ds.labels = Some(vec![Label::Normal; 30]);
        assert!(matches!(
            cv_5x2(&ds, &config, 1),
            Err(EvalError::SingleClass)
        ));
        ds.labels = None;
        assert!(matches!(cv_5x2(&ds, &config, 1), Err(EvalError::Unlabeled)));
    }
}
