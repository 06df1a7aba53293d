//! Anomaly detection and localization for XML transactions governed by an XSD schema.
//!
//! The pipeline runs in stages, each with its own module:
//!
//! 1. [`schema`] turns an XSD document into an ordered vector of element descriptors.
//! 2. [`extract`] measures every element occurrence of a transaction corpus into a
//!    feature matrix of complex (multi-occurrence) features.
//! 3. [`flatten`] aggregates the complex features into a rectangular numeric dataset,
//!    adding global TF-IDF text features.
//! 4. [`adifa`] learns one kernel density model per column, combines the per-column
//!    likelihoods with entropy weights and thresholds a density over the training scores.
//!
//! [`baselines`] provides the multivariate one-class detectors used for comparison,
//! [`inject`] embeds attack payloads into clean transactions, and [`eval`] holds the
//! evaluation harness (ROC/AUC, 5x2 cross-validation, significance tests, learning
//! curves and a synthetic corpus generator).

pub mod adifa;
pub mod artifact;
pub mod baselines;
pub mod detector;
pub mod eval;
pub mod extract;
pub mod flatten;
pub mod inject;
pub mod schema;

pub use adifa::{AdifaConfig, AdifaModel, Aggregation, AttributeModel, DetectionResult};
pub use detector::{Algorithm, AlgorithmConfig, Detector, Polarity, TrainedModel};
pub use extract::{FeatureMatrix, SourceDocument};
pub use flatten::{FlatDataset, Label, TfIdfDictionary};
pub use schema::{AbstractType, ElementDescriptor, SchemaVector};
