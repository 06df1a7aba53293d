//! Multivariate one-class baselines: peer group analysis (k-th nearest
//! neighbour distance), global density estimation (r-ball neighbour counts)
//! and the local outlier factor.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, ArtifactError};
use crate::flatten::{FlatDataset, Label};

pub const ARTIFACT_VERSION: u32 = 1;
pub const DENSITY_FLOOR: f64 = 1e-9;
pub const DEFAULT_PGA_ALPHA: f64 = 0.1;
pub const DEFAULT_PGA_K: usize = 1;
pub const DEFAULT_MIN_PTS: usize = 10;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("need at least {needed} training rows, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("dataset has no columns")]
    NoColumns,
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteData { row: usize, column: usize },
    #[error("expected a vector of {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-column z-scoring fit on the training rows. Zero spreads become 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.first().map_or(0, Vec::len);
        let m = rows.len() as f64;
        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for j in 0..n {
            let mu = rows.iter().map(|r| r[j]).sum::<f64>() / m;
            let var = rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / m;
            mean[j] = mu;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Validated, optionally standardized training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Vec<f64>>,
    pub scaler: Option<Standardizer>,
}

impl PointSet {
    fn build(
        dataset: &FlatDataset,
        standardize: bool,
        min_rows: usize,
    ) -> Result<Self, BaselineError> {
        let m = dataset.len();
        if m < min_rows {
            return Err(BaselineError::TooFewRows {
                needed: min_rows,
                found: m,
            });
        }
        let n = dataset.width();
        if n == 0 {
            return Err(BaselineError::NoColumns);
        }
        for (row, r) in dataset.rows.iter().enumerate() {
            if r.len() != n {
                return Err(BaselineError::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            if let Some(column) = r.iter().position(|v| !v.is_finite()) {
                return Err(BaselineError::NonFiniteData { row, column });
            }
        }
        let scaler = standardize.then(|| Standardizer::fit(&dataset.rows));
        let points = match &scaler {
            Some(s) => dataset.rows.iter().map(|r| s.apply(r)).collect(),
            None => dataset.rows.clone(),
        };
        Ok(PointSet { points, scaler })
    }

    pub fn width(&self) -> usize {
        self.points[0].len()
    }

    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>, BaselineError> {
        if x.len() != self.width() {
            return Err(BaselineError::DimensionMismatch {
                expected: self.width(),
                found: x.len(),
            });
        }
        Ok(match &self.scaler {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        })
    }

    /// Distances from `x` to every training point, optionally skipping one index.
    fn distances(&self, x: &[f64], skip: Option<usize>) -> Vec<(f64, usize)> {
        self.points
            .iter()
            .enumerate()
            .filter(|&(i, _)| Some(i) != skip)
            .map(|(i, p)| (euclidean(x, p), i))
            .collect()
    }
}

fn sort_neighbours(d: &mut [(f64, usize)]) {
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
}

fn kth_distance(x: &[f64], set: &PointSet, k: usize, skip: Option<usize>) -> f64 {
    let mut d: Vec<f64> = set.distances(x, skip).into_iter().map(|(d, _)| d).collect();
    let k = k.min(d.len());
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d[k - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    pub label: Label,
}

/// One-class peer group analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgaModel {
    pub training: PointSet,
    pub k: usize,
    pub alpha: f64,
    /// Leave-one-out k-th neighbour distance of each training point.
    pub nn_distances: Vec<f64>,
    pub cutoff: f64,
}

/// Nearest-rank `(1 - alpha)` quantile index into `m` sorted values.
pub fn pga_cutoff_index(m: usize, alpha: f64) -> usize {
    let rank = ((1.0 - alpha) * m as f64 - 1e-9).ceil() as i64 - 1;
    rank.clamp(0, m as i64 - 1) as usize
}

pub fn pga_train(
    dataset: &FlatDataset,
    alpha: f64,
    k: usize,
    standardize: bool,
) -> Result<PgaModel, BaselineError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(BaselineError::InvalidParameter(format!(
            "pga alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if k == 0 {
        return Err(BaselineError::InvalidParameter(
            "pga k must be at least 1".into(),
        ));
    }
    let training = PointSet::build(dataset, standardize, k + 1)?;
    let nn_distances: Vec<f64> = (0..training.points.len())
        .into_par_iter()
        .map(|i| kth_distance(&training.points[i], &training, k, Some(i)))
        .collect();
    let mut sorted = nn_distances.clone();
    sorted.sort_by(f64::total_cmp);
    let cutoff = sorted[pga_cutoff_index(sorted.len(), alpha)];
    Ok(PgaModel {
        training,
        k,
        alpha,
        nn_distances,
        cutoff,
    })
}

impl PgaModel {
    /// Score is the k-th neighbour distance; larger is more anomalous.
    pub fn classify(&self, x: &[f64]) -> Result<Verdict, BaselineError> {
        let x = self.training.prepare(x)?;
        let score = kth_distance(&x, &self.training, self.k, None);
        let label = if score >= self.cutoff {
            Label::Anomalous
        } else {
            Label::Normal
        };
        Ok(Verdict { score, label })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GdeSign {
    /// Few neighbours means a low score.
    Corrected,
    /// Exponent sign as originally published; isolated points score high.
    Literal,
}

/// One-class global density estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdeModel {
    pub training: PointSet,
    pub radius: f64,
    pub mean_neighbors: f64,
    pub std_neighbors: f64,
    pub sign: GdeSign,
}

fn count_within(x: &[f64], set: &PointSet, radius: f64, skip: Option<usize>) -> usize {
    set.points
        .iter()
        .enumerate()
        .filter(|&(i, p)| Some(i) != skip && euclidean(x, p) <= radius)
        .count()
}

pub fn gde_train(
    dataset: &FlatDataset,
    sign: GdeSign,
    standardize: bool,
) -> Result<GdeModel, BaselineError> {
    let training = PointSet::build(dataset, standardize, 2)?;
    let m = training.points.len();
    let nn: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| kth_distance(&training.points[i], &training, 1, Some(i)))
        .collect();
    let radius = (2.0 * nn.iter().sum::<f64>() / m as f64).max(DENSITY_FLOOR);
    let counts: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| count_within(&training.points[i], &training, radius, Some(i)) as f64)
        .collect();
    let mean_neighbors = counts.iter().sum::<f64>() / m as f64;
    let var = counts
        .iter()
        .map(|c| (c - mean_neighbors).powi(2))
        .sum::<f64>()
        / m as f64;
    Ok(GdeModel {
        training,
        radius,
        mean_neighbors,
        std_neighbors: var.sqrt().max(DENSITY_FLOOR),
        sign,
    })
}

impl GdeModel {
    pub fn neighbours(&self, x: &[f64]) -> Result<usize, BaselineError> {
        let x = self.training.prepare(x)?;
        Ok(count_within(&x, &self.training, self.radius, None))
    }

    /// Score; larger is more normal. Normal iff the score exceeds 1/2.
    pub fn classify(&self, x: &[f64]) -> Result<Verdict, BaselineError> {
        let n_r = self.neighbours(x)? as f64;
        let z = (n_r - self.mean_neighbors) / self.std_neighbors;
        let score = match self.sign {
            GdeSign::Corrected => z.exp(),
            GdeSign::Literal => (-z).exp(),
        };
        let label = if score > 0.5 {
            Label::Normal
        } else {
            Label::Anomalous
        };
        Ok(Verdict { score, label })
    }
}

/// Local outlier factor with one-class thresholding at the largest
/// leave-one-out training factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofModel {
    pub training: PointSet,
    pub min_pts: usize,
    /// k-distance of each training point among the other training points.
    pub k_distance: Vec<f64>,
    /// Local reachability density of each training point.
    pub lrd: Vec<f64>,
    pub training_lof: Vec<f64>,
    pub lof_max: f64,
}

/// Relative slack so that exact ties with `lof_max` count as normal.
const LOF_TIE_SLACK: f64 = 1e-9;

/// Truncated neighbour lists: enough entries to answer k-distance and
/// neighbourhood queries after removing any single point.
struct Neighbourhoods {
    lists: Vec<Vec<(f64, usize)>>,
    k: usize,
}

impl Neighbourhoods {
    fn build(set: &PointSet, k: usize) -> Self {
        let lists = (0..set.points.len())
            .into_par_iter()
            .map(|i| {
                let mut d = set.distances(&set.points[i], Some(i));
                sort_neighbours(&mut d);
                let keep = (k + 1).min(d.len());
                let edge = d[keep - 1].0;
                let end = d.iter().position(|e| e.0 > edge).unwrap_or(d.len());
                d.truncate(end);
                d
            })
            .collect();
        Neighbourhoods { lists, k }
    }

    fn k_distance(&self, i: usize, removed: Option<usize>) -> f64 {
        let mut live = self.lists[i].iter().filter(|e| Some(e.1) != removed);
        let available = self.lists[i].len()
            - usize::from(removed.is_some_and(|r| self.lists[i].iter().any(|e| e.1 == r)));
        match self.k.min(available) {
            0 => 0.0,
            k => live.nth(k - 1).map_or(0.0, |e| e.0),
        }
    }

    fn lrd(&self, i: usize, removed: Option<usize>) -> f64 {
        let kd = self.k_distance(i, removed);
        let reach: Vec<f64> = self.lists[i]
            .iter()
            .filter(|e| Some(e.1) != removed && e.0 <= kd)
            .map(|&(d, o)| d.max(self.k_distance(o, removed)))
            .collect();
        1.0 / (reach.iter().sum::<f64>() / reach.len() as f64).max(DENSITY_FLOOR)
    }

    /// Factor of training point `p` against the training set without `p`.
    fn held_out_lof(&self, p: usize) -> f64 {
        let kd = self.k_distance(p, Some(p));
        let own = self.lrd(p, Some(p));
        let neighbours: Vec<usize> = self.lists[p]
            .iter()
            .filter(|e| e.0 <= kd)
            .map(|e| e.1)
            .collect();
        let ratio: f64 = neighbours
            .iter()
            .map(|&o| self.lrd(o, Some(p)))
            .sum::<f64>()
            / neighbours.len() as f64;
        ratio / own
    }
}

pub fn lof_train(
    dataset: &FlatDataset,
    min_pts: usize,
    standardize: bool,
) -> Result<LofModel, BaselineError> {
    if min_pts == 0 {
        return Err(BaselineError::InvalidParameter(
            "lof min_pts must be at least 1".into(),
        ));
    }
    let training = PointSet::build(dataset, standardize, min_pts + 1)?;
    let m = training.points.len();
    let hoods = Neighbourhoods::build(&training, min_pts);
    let k_distance: Vec<f64> = (0..m).map(|i| hoods.k_distance(i, None)).collect();
    let lrd: Vec<f64> = (0..m).into_par_iter().map(|i| hoods.lrd(i, None)).collect();
    let training_lof: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|p| hoods.held_out_lof(p))
        .collect();
    let lof_max = training_lof.iter().copied().fold(0.0, f64::max);
    Ok(LofModel {
        training,
        min_pts,
        k_distance,
        lrd,
        training_lof,
        lof_max,
    })
}

impl LofModel {
    pub fn lof(&self, x: &[f64]) -> Result<f64, BaselineError> {
        let x = self.training.prepare(x)?;
        let mut d = self.training.distances(&x, None);
        sort_neighbours(&mut d);
        let k = self.min_pts.min(d.len());
        let kd = d[k - 1].0;
        let hood: Vec<(f64, usize)> = d.into_iter().take_while(|e| e.0 <= kd).collect();
        let mean_reach = hood
            .iter()
            .map(|&(dist, o)| dist.max(self.k_distance[o]))
            .sum::<f64>()
            / hood.len() as f64;
        let own = 1.0 / mean_reach.max(DENSITY_FLOOR);
        let ratio = hood.iter().map(|&(_, o)| self.lrd[o]).sum::<f64>() / hood.len() as f64;
        Ok(ratio / own)
    }

    /// Score is the local outlier factor; larger is more anomalous.
    pub fn classify(&self, x: &[f64]) -> Result<Verdict, BaselineError> {
        let score = self.lof(x)?;
        let label = if score > self.lof_max * (1.0 + LOF_TIE_SLACK) {
            Label::Anomalous
        } else {
            Label::Normal
        };
        Ok(Verdict { score, label })
    }
}

macro_rules! persist {
    ($model:ty, $kind:literal) => {
        impl $model {
            pub const ARTIFACT_KIND: &'static str = $kind;

            pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
                artifact::save(path, $kind, ARTIFACT_VERSION, self)
            }

            pub fn load(path: &Path) -> Result<Self, ArtifactError> {
                artifact::load(path, $kind, ARTIFACT_VERSION)
            }
        }
    };
}

persist!(PgaModel, "pga");
persist!(GdeModel, "gde");
persist!(LofModel, "lof");
