//! Uniform train/predict interface over the density detector and baselines.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adifa::{self, AdifaConfig, AdifaError, AdifaModel, Aggregation};
use crate::artifact::{self, ArtifactError};
use crate::baselines::{self, BaselineError, GdeModel, GdeSign, LofModel, PgaModel};
use crate::flatten::{FlatDataset, Label};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Adifa(#[from] AdifaError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    AdifaAm,
    AdifaGm,
    AdifaHm,
    Pga,
    Gde,
    GdeLiteral,
    Lof,
}

/// Which direction of a raw score means "more normal".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    HigherIsNormal,
    HigherIsAnomalous,
}

impl Polarity {
    /// Maps a raw score onto a scale where larger is more anomalous.
    pub fn anomaly_oriented(self, score: f64) -> f64 {
        match self {
            Polarity::HigherIsNormal => -score,
            Polarity::HigherIsAnomalous => score,
        }
    }
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::AdifaAm,
        Algorithm::AdifaGm,
        Algorithm::AdifaHm,
        Algorithm::Pga,
        Algorithm::Gde,
        Algorithm::GdeLiteral,
        Algorithm::Lof,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::AdifaAm => "adifa-am",
            Algorithm::AdifaGm => "adifa-gm",
            Algorithm::AdifaHm => "adifa-hm",
            Algorithm::Pga => "pga",
            Algorithm::Gde => "gde",
            Algorithm::GdeLiteral => "gde-literal",
            Algorithm::Lof => "lof",
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            Algorithm::Pga | Algorithm::Lof => Polarity::HigherIsAnomalous,
            _ => Polarity::HigherIsNormal,
        }
    }

    pub fn adifa(psi: Aggregation) -> Algorithm {
        match psi {
            Aggregation::ArithmeticMean => Algorithm::AdifaAm,
            Aggregation::GeometricMean => Algorithm::AdifaGm,
            Aggregation::HarmonicMean => Algorithm::AdifaHm,
        }
    }

    pub fn aggregation(self) -> Option<Aggregation> {
        match self {
            Algorithm::AdifaAm => Some(Aggregation::ArithmeticMean),
            Algorithm::AdifaGm => Some(Aggregation::GeometricMean),
            Algorithm::AdifaHm => Some(Aggregation::HarmonicMean),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == lower)
            .ok_or_else(|| {
                let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.tag()).collect();
                format!(
                    "unknown algorithm `{s}` (expected one of {})",
                    known.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub algorithm: Algorithm,
    pub threshold: f64,
    pub pga_alpha: f64,
    pub pga_k: usize,
    pub lof_min_pts: usize,
    /// z-score features before distance computations (baselines only).
    pub standardize: bool,
}

impl AlgorithmConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        AlgorithmConfig {
            algorithm,
            threshold: adifa::DEFAULT_THRESHOLD,
            pga_alpha: baselines::DEFAULT_PGA_ALPHA,
            pga_k: baselines::DEFAULT_PGA_K,
            lof_min_pts: baselines::DEFAULT_MIN_PTS,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub label: Label,
}

pub trait Detector: Send + Sync {
    fn polarity(&self) -> Polarity;
    fn predict(&self, x: &[f64]) -> Result<Prediction, DetectorError>;

    fn anomaly_score(&self, x: &[f64]) -> Result<f64, DetectorError> {
        Ok(self.polarity().anomaly_oriented(self.predict(x)?.score))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Adifa(AdifaModel),
    Pga(PgaModel),
    Gde(GdeModel),
    Lof(LofModel),
}

impl TrainedModel {
    pub fn train(dataset: &FlatDataset, config: &AlgorithmConfig) -> Result<Self, DetectorError> {
        Ok(match config.algorithm {
            Algorithm::AdifaAm | Algorithm::AdifaGm | Algorithm::AdifaHm => {
                let psi = config.algorithm.aggregation().expect("adifa variant");
                TrainedModel::Adifa(adifa::train(
                    dataset,
                    AdifaConfig {
                        psi,
                        threshold: config.threshold,
                    },
                )?)
            }
            Algorithm::Pga => TrainedModel::Pga(baselines::pga_train(
                dataset,
                config.pga_alpha,
                config.pga_k,
                config.standardize,
            )?),
            Algorithm::Gde => TrainedModel::Gde(baselines::gde_train(
                dataset,
                GdeSign::Corrected,
                config.standardize,
            )?),
            Algorithm::GdeLiteral => TrainedModel::Gde(baselines::gde_train(
                dataset,
                GdeSign::Literal,
                config.standardize,
            )?),
            Algorithm::Lof => TrainedModel::Lof(baselines::lof_train(
                dataset,
                config.lof_min_pts,
                config.standardize,
            )?),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            TrainedModel::Adifa(m) => match m.psi {
                Aggregation::ArithmeticMean => Algorithm::AdifaAm,
                Aggregation::GeometricMean => Algorithm::AdifaGm,
                Aggregation::HarmonicMean => Algorithm::AdifaHm,
            },
            TrainedModel::Pga(_) => Algorithm::Pga,
            TrainedModel::Gde(m) => match m.sign {
                GdeSign::Corrected => Algorithm::Gde,
                GdeSign::Literal => Algorithm::GdeLiteral,
            },
            TrainedModel::Lof(_) => Algorithm::Lof,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            TrainedModel::Adifa(m) => m.width(),
            TrainedModel::Pga(m) => m.training.width(),
            TrainedModel::Gde(m) => m.training.width(),
            TrainedModel::Lof(m) => m.training.width(),
        }
    }

    pub fn to_artifact(&self) -> Result<String, ArtifactError> {
        match self {
            TrainedModel::Adifa(m) => m.to_artifact(),
            TrainedModel::Pga(m) => {
                artifact::encode(PgaModel::ARTIFACT_KIND, baselines::ARTIFACT_VERSION, m)
            }
            TrainedModel::Gde(m) => {
                artifact::encode(GdeModel::ARTIFACT_KIND, baselines::ARTIFACT_VERSION, m)
            }
            TrainedModel::Lof(m) => {
                artifact::encode(LofModel::ARTIFACT_KIND, baselines::ARTIFACT_VERSION, m)
            }
        }
    }

    pub fn from_artifact(text: &str) -> Result<Self, ArtifactError> {
        let (kind, _) = artifact::peek_header(text)?;
        let v = baselines::ARTIFACT_VERSION;
        Ok(match kind.as_str() {
            adifa::ARTIFACT_KIND => TrainedModel::Adifa(artifact::decode(
                adifa::ARTIFACT_KIND,
                adifa::ARTIFACT_VERSION,
                text,
            )?),
            PgaModel::ARTIFACT_KIND => TrainedModel::Pga(artifact::decode(&kind, v, text)?),
            GdeModel::ARTIFACT_KIND => TrainedModel::Gde(artifact::decode(&kind, v, text)?),
            LofModel::ARTIFACT_KIND => TrainedModel::Lof(artifact::decode(&kind, v, text)?),
            _ => {
                return Err(ArtifactError::WrongKind {
                    expected: "adifa|pga|gde|lof".into(),
                    found: format!("xmlad-{kind}"),
                })
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        let text = self.to_artifact()?;
        std::fs::write(path, text).map_err(|source| ArtifactError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        Self::from_artifact(&artifact::read_text(path)?)
    }
}

impl Detector for TrainedModel {
    fn polarity(&self) -> Polarity {
        self.algorithm().polarity()
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction, DetectorError> {
        Ok(match self {
            TrainedModel::Adifa(m) => {
                let r = m.classify(x)?;
                Prediction {
                    score: r.likelihood,
                    label: r.label,
                }
            }
            TrainedModel::Pga(m) => verdict(m.classify(x)?),
            TrainedModel::Gde(m) => verdict(m.classify(x)?),
            TrainedModel::Lof(m) => verdict(m.classify(x)?),
        })
    }
}

fn verdict(v: baselines::Verdict) -> Prediction {
    Prediction {
        score: v.score,
        label: v.label,
    }
}
