//! Evaluation harness: ROC/AUC, 5x2 cross-validation, significance tests,
//! learning curves and synthetic corpora.

pub mod cv;
pub mod metrics;
pub mod stats;
pub mod synth;

use thiserror::Error;

use crate::detector::DetectorError;
use crate::flatten::{Aggregate, ColumnMeta};
use crate::inject::{AttackClass, Injection};

pub use cv::{cv_5x2, learning_curve, CvResult, FoldResult, LearningPoint};
pub use metrics::{auc, roc_curve, RocCurve, RocPoint};
pub use stats::{friedman_bonferroni, paired_t_test, Outcome, SignificanceReport};
pub use synth::{generate_normal_corpus, insurance_template, CorpusTemplate};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both normal and anomalous rows are required")]
    SingleClass,
    #[error("dataset has no labels")]
    Unlabeled,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} rows, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("score is NaN")]
    NonFiniteScore,
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// Dataset columns that carry a given injection: the element's own columns,
/// or the row-level parse-failure column for CDATA sections.
pub fn injection_columns(injection: &Injection, columns: &[ColumnMeta]) -> Vec<usize> {
    columns
        .iter()
        .enumerate()
        .filter(|(_, c)| match injection.class {
            AttackClass::CdataInjection => c.aggregate == Aggregate::ParseFailures,
            _ => c.path == injection.path,
        })
        .map(|(i, _)| i)
        .collect()
}
