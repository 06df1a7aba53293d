//! Feature extraction: XML transactions to the complex feature matrix.
//!
//! Each transaction becomes one row holding, per schema descriptor, the list of
//! measurements taken from every occurrence of that element (document order).

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
use rayon::prelude::*;
use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, ArtifactError};
use crate::schema::{AbstractType, ElementDescriptor, SchemaVector};

pub const ARTIFACT_KIND: &str = "fm";
pub const ARTIFACT_VERSION: u32 = 1;

/// One transaction document, identified by file name or sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub id: String,
    pub xml: String,
}

/// Scalar measurements of one element occurrence.
///
/// `Failed` keeps the raw text of a value that did not parse for its declared
/// type; it is anomaly evidence and is counted during flattening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measurement {
    Numerical {
        value: f64,
    },
    Date {
        epoch_seconds: f64,
    },
    Enumeration {
        index: usize,
    },
    Text {
        word_count: u32,
        char_length: u32,
        text: String,
    },
    Failed {
        raw: String,
    },
}

impl Measurement {
    /// The scalar measurement list; `None` for a failed parse.
    pub fn scalars(&self) -> Option<Vec<f64>> {
        match self {
            Measurement::Numerical { value } => Some(vec![*value]),
            Measurement::Date { epoch_seconds } => Some(vec![*epoch_seconds]),
            Measurement::Enumeration { index } => Some(vec![*index as f64]),
            Measurement::Text {
                word_count,
                char_length,
                ..
            } => Some(vec![f64::from(*word_count), f64::from(*char_length)]),
            Measurement::Failed { .. } => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Measurement::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexFeature {
    pub descriptor_index: usize,
    pub occurrences: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub features: Vec<ComplexFeature>,
    /// Simple-content elements whose path is not declared by the schema.
    pub unknown_elements: u32,
    /// Non-whitespace text found directly inside structural (container) elements.
    pub stray_text: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub schema_hash: String,
    pub rows: Vec<Row>,
}

impl FeatureMatrix {
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

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct MatrixBuild {
    pub matrix: FeatureMatrix,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("no usable documents in corpus ({} rejected)", diagnostics.len())]
    EmptyCorpus { diagnostics: Vec<Diagnostic> },
    #[error("cannot read corpus at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
#[error("cannot read `{raw}` as {expected:?}")]
pub struct ValueParseError {
    pub raw: String,
    pub expected: AbstractType,
}

/// Measures one occurrence according to its descriptor's abstract type.
pub fn measure_occurrence(
    text_value: &str,
    descriptor: &ElementDescriptor,
) -> Result<Measurement, ValueParseError> {
    let fail = || ValueParseError {
        raw: text_value.to_string(),
        expected: descriptor.abstract_type,
    };
    match descriptor.abstract_type {
        AbstractType::Numerical => {
            let v: f64 = text_value.trim().parse().map_err(|_| fail())?;
            if v.is_finite() {
                Ok(Measurement::Numerical { value: v })
            } else {
                Err(fail())
            }
        }
        AbstractType::Date => parse_epoch_seconds(text_value.trim())
            .map(|s| Measurement::Date { epoch_seconds: s })
            .ok_or_else(fail),
        AbstractType::Enumeration => {
            let literal = text_value.trim();
            let literal = match (literal, descriptor.enum_values.as_slice()) {
                ("1", [f, t]) if f == "false" && t == "true" => "true",
                ("0", [f, t]) if f == "false" && t == "true" => "false",
                (l, _) => l,
            };
            descriptor
                .enum_values
                .iter()
                .position(|v| v == literal)
                .map(|index| Measurement::Enumeration { index })
                .ok_or_else(fail)
        }
        AbstractType::String => Ok(Measurement::Text {
            word_count: text_value.split_whitespace().count() as u32,
            char_length: text_value.chars().count() as u32,
            text: text_value.to_string(),
        }),
    }
}

/// ISO-8601 date, date-time, time, year-month or year, as seconds since the Unix epoch (UTC).
/// Times of day are seconds since midnight.
fn parse_epoch_seconds(s: &str) -> Option<f64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) / 1e9);
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f") {
        let utc = dt.and_utc();
        return Some(utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) / 1e9);
    }
    let date_part = s.strip_suffix('Z').unwrap_or(s);
    if let Ok(d) = NaiveDate::parse_from_str(date_part, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp() as f64);
    }
    if let Ok(d) = NaiveDate::parse_from_str(&format!("{date_part}-01"), "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp() as f64);
    }
    if date_part.len() == 4 && date_part.bytes().all(|b| b.is_ascii_digit()) {
        let d = NaiveDate::from_ymd_opt(date_part.parse().ok()?, 1, 1)?;
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp() as f64);
    }
    if let Ok(t) = NaiveTime::parse_from_str(date_part, "%H:%M:%S%.f") {
        let since = t - NaiveTime::MIN;
        return Some(since.num_nanoseconds()? as f64 / 1e9);
    }
    None
}

/// Precomputed path lookups for one schema.
#[derive(Debug, Clone)]
pub struct Extractor<'s> {
    schema: &'s SchemaVector,
    index: HashMap<String, usize>,
    containers: HashSet<String>,
}

impl<'s> Extractor<'s> {
    pub fn new(schema: &'s SchemaVector) -> Self {
        let index = schema
            .descriptors
            .iter()
            .enumerate()
            .map(|(i, d)| (d.path.clone(), i))
            .collect();
        Extractor {
            schema,
            index,
            containers: schema.container_paths(),
        }
    }

    pub fn row(&self, id: &str, xml_text: &str) -> Result<Row, ExtractError> {
        let doc =
            Document::parse(xml_text).map_err(|e| ExtractError::MalformedXml(e.to_string()))?;
        let mut row = Row {
            id: id.to_string(),
            features: (0..self.schema.len())
                .map(|i| ComplexFeature {
                    descriptor_index: i,
                    occurrences: Vec::new(),
                })
                .collect(),
            unknown_elements: 0,
            stray_text: 0,
        };
        let mut path = String::new();
        self.visit(doc.root_element(), &mut path, &mut row);
        Ok(row)
    }

    fn record(&self, row: &mut Row, idx: usize, text: &str) {
        let d = &self.schema.descriptors[idx];
        let m = measure_occurrence(text, d).unwrap_or_else(|e| Measurement::Failed { raw: e.raw });
        row.features[idx].occurrences.push(m);
    }

    fn visit(&self, node: Node, path: &mut String, row: &mut Row) {
        let base_len = path.len();
        path.push('/');
        path.push_str(node.tag_name().name());

        let own = self.index.get(path.as_str()).copied();
        let has_children = node.children().any(|c| c.is_element());
        if let Some(idx) = own {
            let text: String = node
                .children()
                .filter(|c| c.is_text())
                .filter_map(|c| c.text())
                .collect();
            self.record(row, idx, &text);
        } else if self.containers.contains(path.as_str()) {
            row.stray_text += node
                .children()
                .filter(|c| c.is_text())
                .filter(|c| c.text().is_some_and(|t| !t.trim().is_empty()))
                .count() as u32;
        } else if !has_children {
            row.unknown_elements += 1;
        }

        for attr in node.attributes() {
            let attr_path = format!("{path}/@{}", attr.name());
            if let Some(&idx) = self.index.get(&attr_path) {
                self.record(row, idx, attr.value());
            }
        }
        for child in node.children().filter(|c| c.is_element()) {
            self.visit(child, path, row);
        }
        path.truncate(base_len);
    }
}

pub fn extract_row(xml_text: &str, schema: &SchemaVector) -> Result<Row, ExtractError> {
    Extractor::new(schema).row("", xml_text)
}

/// Extracts every document; malformed ones are skipped and reported.
pub fn build_feature_matrix(
    corpus: &[SourceDocument],
    schema: &SchemaVector,
) -> Result<MatrixBuild, ExtractError> {
    let extractor = Extractor::new(schema);
    let results: Vec<Result<Row, ExtractError>> = corpus
        .par_iter()
        .map(|doc| extractor.row(&doc.id, &doc.xml))
        .collect();

    let mut rows = Vec::with_capacity(corpus.len());
    let mut diagnostics = Vec::new();
    for (doc, result) in corpus.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => diagnostics.push(Diagnostic {
                id: doc.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        return Err(ExtractError::EmptyCorpus { diagnostics });
    }
    Ok(MatrixBuild {
        matrix: FeatureMatrix {
            schema_hash: schema.source_hash.clone(),
            rows,
        },
        diagnostics,
    })
}

/// Reads a corpus from a directory of `.xml` files (sorted by name) or from a
/// manifest file listing one document path per line.
pub fn read_corpus(path: &Path) -> Result<Vec<SourceDocument>, ExtractError> {
    let io_err = |p: &Path| {
        let p = p.display().to_string();
        move |source| ExtractError::Io { path: p, source }
    };
    let files: Vec<std::path::PathBuf> = if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "xml"))
            .collect();
        files.sort();
        files
    } else {
        let manifest = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect()
    };
    files
        .iter()
        .map(|f| {
            let xml = fs::read_to_string(f).map_err(io_err(f))?;
            let id = f.file_name().map_or_else(
                || f.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            );
            Ok(SourceDocument { id, xml })
        })
        .collect()
}
