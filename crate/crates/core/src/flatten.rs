//! Lossy flattening of the complex feature matrix into a fixed-width numeric dataset.
//!
//! Column layout, in schema order:
//!
//! | descriptor type      | columns                                                   |
//! |----------------------|-----------------------------------------------------------|
//! | Numerical, Date      | `min`, `max`, `count`                                     |
//! | Enumeration          | one occurrence count per literal (`=value`)               |
//! | String               | `min_words`, `max_words`, `min_chars`, `max_chars`, `count` |
//!
//! followed by one `#parse_failures` column and one `#tfidf=term` column per
//! dictionary term. Absent elements produce zeros; the `count` column tells
//! absence apart from a zero value.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, ArtifactError};
use crate::extract::{FeatureMatrix, Measurement, Row};
use crate::schema::{AbstractType, SchemaVector};

pub const DICT_KIND: &str = "dict";
pub const DICT_VERSION: u32 = 1;
pub const DEFAULT_TFIDF_K: usize = 10;

#[derive(Debug, Error)]
pub enum FlattenError {
    #[error("row `{row}` has {found} complex features, schema declares {expected}")]
    SchemaMismatch {
        row: String,
        expected: usize,
        found: usize,
    },
    #[error("feature matrix was built from schema {found}, expected {expected}")]
    SchemaHashMismatch { expected: String, found: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad dataset: {0}")]
    BadDataset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomalous,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "normal" | "0" => Ok(Label::Normal),
            "anomalous" | "1" => Ok(Label::Anomalous),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// Lowercased, whitespace-split tokens with surrounding punctuation removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn row_text(row: &Row) -> String {
    let mut out = String::new();
    for f in &row.features {
        for m in &f.occurrences {
            if let Measurement::Text { text, .. } = m {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(text);
            }
        }
    }
    out
}

fn term_counts(text: &str) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    for t in tokenize(text) {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfDictionary {
    pub terms: Vec<String>,
    pub doc_frequency: Vec<u32>,
    pub corpus_size: u32,
    pub k: usize,
}

impl TfIdfDictionary {
    pub fn empty(k: usize) -> Self {
        TfIdfDictionary {
            terms: Vec::new(),
            doc_frequency: Vec::new(),
            corpus_size: 0,
            k,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        artifact::save(path, DICT_KIND, DICT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        artifact::load(path, DICT_KIND, DICT_VERSION)
    }

    pub fn to_artifact(&self) -> Result<String, ArtifactError> {
        artifact::encode(DICT_KIND, DICT_VERSION, self)
    }
}

/// Smoothed inverse document frequency: `ln((1 + m) / (1 + df)) + 1`.
pub fn idf(corpus_size: u32, doc_frequency: u32) -> f64 {
    ((1.0 + f64::from(corpus_size)) / (1.0 + f64::from(doc_frequency))).ln() + 1.0
}

/// Raw term count in the row times the term's smoothed idf; 0 for terms outside the dictionary.
pub fn tfidf(term: &str, row_tokens: &HashMap<String, u32>, dict: &TfIdfDictionary) -> f64 {
    let Some(pos) = dict.terms.iter().position(|t| t == term) else {
        return 0.0;
    };
    let tf = row_tokens.get(term).copied().unwrap_or(0);
    f64::from(tf) * idf(dict.corpus_size, dict.doc_frequency[pos])
}

/// Selects the `k` most prominent terms of the training text.
///
/// A term's prominence is its TF-IDF summed over all training rows, ties
/// broken lexicographically.
pub fn build_dictionary(matrix: &FeatureMatrix, k: usize) -> TfIdfDictionary {
    let m = matrix.rows.len() as u32;
    let per_row: Vec<HashMap<String, u32>> = matrix
        .rows
        .par_iter()
        .map(|r| term_counts(&row_text(r)))
        .collect();

    // BTreeMap keeps the reduction order-free and the iteration deterministic.
    let mut stats: BTreeMap<&str, (u32, u64)> = BTreeMap::new();
    for counts in &per_row {
        for (term, &tf) in counts {
            let e = stats.entry(term.as_str()).or_insert((0, 0));
            e.0 += 1;
            e.1 += u64::from(tf);
        }
    }

    let mut scored: Vec<(&str, u32, f64)> = stats
        .into_iter()
        .map(|(term, (df, total))| (term, df, idf(m, df) * total as f64))
        .collect();
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(b.0)));
    scored.truncate(k);

    TfIdfDictionary {
        terms: scored.iter().map(|s| s.0.to_string()).collect(),
        doc_frequency: scored.iter().map(|s| s.1).collect(),
        corpus_size: m,
        k,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregate {
    Min,
    Max,
    Count,
    EnumCount(String),
    MinWords,
    MaxWords,
    MinChars,
    MaxChars,
    ParseFailures,
    TfIdf(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    /// Descriptor path; empty for row-level columns.
    pub path: String,
    pub aggregate: Aggregate,
}

impl ColumnMeta {
    pub fn name(&self) -> String {
        let suffix = match &self.aggregate {
            Aggregate::Min => "min".to_string(),
            Aggregate::Max => "max".to_string(),
            Aggregate::Count => "count".to_string(),
            Aggregate::EnumCount(v) => format!("={v}"),
            Aggregate::MinWords => "min_words".to_string(),
            Aggregate::MaxWords => "max_words".to_string(),
            Aggregate::MinChars => "min_chars".to_string(),
            Aggregate::MaxChars => "max_chars".to_string(),
            Aggregate::ParseFailures => "parse_failures".to_string(),
            Aggregate::TfIdf(t) => format!("tfidf={t}"),
        };
        format!("{}#{suffix}", self.path)
    }

    /// Inverse of [`ColumnMeta::name`]. Element paths never contain `#`.
    pub fn parse(name: &str) -> Option<ColumnMeta> {
        let (path, suffix) = name.split_once('#')?;
        let aggregate = match suffix {
            "min" => Aggregate::Min,
            "max" => Aggregate::Max,
            "count" => Aggregate::Count,
            "min_words" => Aggregate::MinWords,
            "max_words" => Aggregate::MaxWords,
            "min_chars" => Aggregate::MinChars,
            "max_chars" => Aggregate::MaxChars,
            "parse_failures" => Aggregate::ParseFailures,
            s => {
                if let Some(t) = s.strip_prefix("tfidf=") {
                    Aggregate::TfIdf(t.to_string())
                } else {
                    Aggregate::EnumCount(s.strip_prefix('=')?.to_string())
                }
            }
        };
        Some(ColumnMeta {
            path: path.to_string(),
            aggregate,
        })
    }
}

/// Column layout as a pure function of schema and dictionary.
pub fn column_layout(schema: &SchemaVector, dict: &TfIdfDictionary) -> Vec<ColumnMeta> {
    let mut cols = Vec::new();
    let mut push = |path: &str, aggregate| {
        cols.push(ColumnMeta {
            path: path.to_string(),
            aggregate,
        })
    };
    for d in &schema.descriptors {
        match d.abstract_type {
            AbstractType::Numerical | AbstractType::Date => {
                push(&d.path, Aggregate::Min);
                push(&d.path, Aggregate::Max);
                push(&d.path, Aggregate::Count);
            }
            AbstractType::Enumeration => {
                for v in &d.enum_values {
                    push(&d.path, Aggregate::EnumCount(v.clone()));
                }
            }
            AbstractType::String => {
                for a in [
                    Aggregate::MinWords,
                    Aggregate::MaxWords,
                    Aggregate::MinChars,
                    Aggregate::MaxChars,
                    Aggregate::Count,
                ] {
                    push(&d.path, a);
                }
            }
        }
    }
    push("", Aggregate::ParseFailures);
    for t in &dict.terms {
        push("", Aggregate::TfIdf(t.clone()));
    }
    cols
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .fold(None, |acc: Option<(f64, f64)>, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .unwrap_or((0.0, 0.0))
}

pub fn flatten_row(
    row: &Row,
    schema: &SchemaVector,
    dict: &TfIdfDictionary,
) -> Result<Vec<f64>, FlattenError> {
    if row.features.len() != schema.len() {
        return Err(FlattenError::SchemaMismatch {
            row: row.id.clone(),
            expected: schema.len(),
            found: row.features.len(),
        });
    }
    let mut out = Vec::new();
    let mut failures = row.stray_text;
    for (d, feature) in schema.descriptors.iter().zip(&row.features) {
        let occ = &feature.occurrences;
        failures += occ.iter().filter(|m| m.is_failure()).count() as u32;
        match d.abstract_type {
            AbstractType::Numerical | AbstractType::Date => {
                let (lo, hi) = min_max(occ.iter().filter_map(|m| match m {
                    Measurement::Numerical { value } => Some(*value),
                    Measurement::Date { epoch_seconds } => Some(*epoch_seconds),
                    _ => None,
                }));
                out.extend([lo, hi, occ.len() as f64]);
            }
            AbstractType::Enumeration => {
                let base = out.len();
                out.resize(base + d.enum_values.len(), 0.0);
                for m in occ {
                    if let Measurement::Enumeration { index } = m {
                        if *index < d.enum_values.len() {
                            out[base + index] += 1.0;
                        }
                    }
                }
            }
            AbstractType::String => {
                let texts = || {
                    occ.iter().filter_map(|m| match m {
                        Measurement::Text {
                            word_count,
                            char_length,
                            ..
                        } => Some((*word_count, *char_length)),
                        _ => None,
                    })
                };
                let (wlo, whi) = min_max(texts().map(|t| f64::from(t.0)));
                let (clo, chi) = min_max(texts().map(|t| f64::from(t.1)));
                out.extend([wlo, whi, clo, chi, occ.len() as f64]);
            }
        }
    }
    out.push(f64::from(failures));
    if !dict.is_empty() {
        let counts = term_counts(&row_text(row));
        for (term, &df) in dict.terms.iter().zip(&dict.doc_frequency) {
            let tf = counts.get(term).copied().unwrap_or(0);
            out.push(f64::from(tf) * idf(dict.corpus_size, df));
        }
    }
    Ok(out)
}

pub fn flatten_matrix(
    matrix: &FeatureMatrix,
    schema: &SchemaVector,
    dict: &TfIdfDictionary,
) -> Result<FlatDataset, FlattenError> {
    if matrix.schema_hash != schema.source_hash {
        return Err(FlattenError::SchemaHashMismatch {
            expected: schema.source_hash.clone(),
            found: matrix.schema_hash.clone(),
        });
    }
    let rows = matrix
        .rows
        .par_iter()
        .map(|r| flatten_row(r, schema, dict))
        .collect::<Result<Vec<_>, _>>()?;
    let column_meta = column_layout(schema, dict);
    Ok(FlatDataset {
        column_names: column_meta.iter().map(ColumnMeta::name).collect(),
        column_meta,
        rows,
        labels: None,
    })
}

/// Rectangular numeric dataset, the input of every detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatDataset {
    pub column_names: Vec<String>,
    pub column_meta: Vec<ColumnMeta>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<Label>>,
}

impl FlatDataset {
    /// Builds a dataset from raw columns; names that do not follow the
    /// `path#aggregate` scheme get an empty-path `Count` meta.
    pub fn from_rows(column_names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, FlattenError> {
        let width = column_names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(FlattenError::BadDataset(format!(
                "row {bad} has {} cells, expected {width}",
                rows[bad].len()
            )));
        }
        let column_meta = column_names
            .iter()
            .map(|n| {
                ColumnMeta::parse(n).unwrap_or(ColumnMeta {
                    path: n.clone(),
                    aggregate: Aggregate::Count,
                })
            })
            .collect();
        Ok(FlatDataset {
            column_names,
            column_meta,
            rows,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self, FlattenError> {
        if labels.len() != self.rows.len() {
            return Err(FlattenError::BadDataset(format!(
                "{} labels for {} rows",
                labels.len(),
                self.rows.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn label(&self, i: usize) -> Option<Label> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Subset of rows (labels follow).
    pub fn select(&self, indices: &[usize]) -> FlatDataset {
        FlatDataset {
            column_names: self.column_names.clone(),
            column_meta: self.column_meta.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FlattenError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.column_names.clone();
        if self.labels.is_some() {
            header.push("label".to_string());
        }
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            if let Some(l) = self.label(i) {
                rec.push(l.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FlattenError> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let label_col = header.iter().position(|h| h == "label");
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_col)
            .map(|(_, h)| h.clone())
            .collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(names.len());
            for (i, cell) in rec.iter().enumerate() {
                if Some(i) == label_col {
                    labels.push(cell.parse::<Label>().map_err(FlattenError::BadDataset)?);
                } else {
                    let v: f64 = cell.trim().parse().map_err(|_| {
                        FlattenError::BadDataset(format!("row {line}: bad number `{cell}`"))
                    })?;
                    if !v.is_finite() {
                        return Err(FlattenError::BadDataset(format!(
                            "row {line}: non-finite cell"
                        )));
                    }
                    row.push(v);
                }
            }
            rows.push(row);
        }
        let ds = FlatDataset::from_rows(names, rows)?;
        if label_col.is_some() {
            ds.with_labels(labels)
        } else {
            Ok(ds)
        }
    }

    pub fn to_csv_string(&self) -> Result<String, FlattenError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), FlattenError> {
        let f = std::fs::File::create(path).map_err(csv::Error::from)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Self, FlattenError> {
        let f = std::fs::File::open(path).map_err(csv::Error::from)?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Content digest used to tie harness outputs to their input.
    pub fn digest(&self) -> String {
        artifact::sha256_hex(self.to_csv_string().unwrap_or_default().as_bytes())
    }
}
