//! Seeded generator of schema-valid normal transactions, plus a built-in
//! insurance-claim template with 30 leaf elements of mixed types.

use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::SourceDocument;
use crate::schema::{parse_xsd, AbstractType, SchemaError, SchemaVector};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("no generative parameters for `{0}`")]
    MissingParams(String),
    #[error("bad parameters for `{path}`: {message}")]
    BadParams { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    /// Gaussian value, clamped below at `min`, printed with `decimals` places.
    Numeric {
        mean: f64,
        std: f64,
        decimals: usize,
        min: Option<f64>,
    },
    /// One weight per enumeration value, in schema order.
    Categorical { weights: Vec<f64> },
    /// Between `min_words` and `max_words` words drawn from `vocabulary`.
    Words {
        vocabulary: Vec<String>,
        min_words: usize,
        max_words: usize,
    },
    /// `prefix` + zero-padded random digits + `suffix`.
    Code {
        prefix: String,
        digits: u32,
        suffix: String,
    },
    /// Uniform calendar day in `[start, end]`, ISO formatted.
    Dates { start: NaiveDate, end: NaiveDate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementParams {
    pub path: String,
    pub min_occurs: u32,
    pub max_occurs: u32,
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTemplate {
    pub xsd: String,
    pub schema: SchemaVector,
    params: Vec<ElementParams>,
    tree: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq)]
struct TreeNode {
    name: String,
    children: Vec<usize>,
    /// Index into `params` for leaves.
    leaf: Option<usize>,
}

impl CorpusTemplate {
    pub fn new(xsd: &str, params: Vec<ElementParams>) -> Result<Self, SynthError> {
        let schema = parse_xsd(xsd)?.schema;
        let by_path: HashMap<&str, usize> = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.path.as_str(), i))
            .collect();
        let mut tree = vec![TreeNode {
            name: String::new(),
            children: Vec::new(),
            leaf: None,
        }];
        for d in &schema.descriptors {
            if d.is_attribute() {
                return Err(SynthError::BadParams {
                    path: d.path.clone(),
                    message: "attributes are not generated".into(),
                });
            }
            let &pi = by_path
                .get(d.path.as_str())
                .ok_or_else(|| SynthError::MissingParams(d.path.clone()))?;
            check_params(&params[pi], d.abstract_type, d.enum_values.len())?;
            let mut node = 0;
            for seg in d.path.trim_start_matches('/').split('/') {
                node = match tree[node]
                    .children
                    .iter()
                    .copied()
                    .find(|&c| tree[c].name == seg)
                {
                    Some(c) => c,
                    None => {
                        tree.push(TreeNode {
                            name: seg.to_string(),
                            children: Vec::new(),
                            leaf: None,
                        });
                        let c = tree.len() - 1;
                        tree[node].children.push(c);
                        c
                    }
                };
            }
            tree[node].leaf = Some(pi);
        }
        Ok(CorpusTemplate {
            xsd: xsd.to_string(),
            schema,
            params,
            tree,
        })
    }

    pub fn params(&self) -> &[ElementParams] {
        &self.params
    }

    fn render(&self, node: usize, rng: &mut ChaCha8Rng, out: &mut String) {
        let n = &self.tree[node];
        if let Some(pi) = n.leaf {
            let p = &self.params[pi];
            let d = &self.schema.descriptors[self.schema.position(&p.path).expect("template path")];
            let count = rng.random_range(p.min_occurs..=p.max_occurs);
            for _ in 0..count {
                let value = sample(&p.generator, &d.enum_values, rng);
                out.push_str(&format!("<{0}>{1}</{0}>", n.name, escape(&value)));
            }
        } else {
            out.push_str(&format!("<{}>", n.name));
            for &c in &n.children {
                self.render(c, rng, out);
            }
            out.push_str(&format!("</{}>", n.name));
        }
    }

    pub fn document(&self, rng: &mut ChaCha8Rng) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        for &root in &self.tree[0].children {
            self.render(root, rng, &mut out);
        }
        out.push('\n');
        out
    }
}

fn check_params(p: &ElementParams, kind: AbstractType, enum_len: usize) -> Result<(), SynthError> {
    let bad = |message: &str| {
        Err(SynthError::BadParams {
            path: p.path.clone(),
            message: message.to_string(),
        })
    };
    if p.min_occurs > p.max_occurs {
        return bad("min_occurs exceeds max_occurs");
    }
    match (&p.generator, kind) {
        (Generator::Numeric { std, .. }, AbstractType::Numerical) if *std >= 0.0 => Ok(()),
        (Generator::Categorical { weights }, AbstractType::Enumeration)
            if weights.len() == enum_len =>
        {
            Ok(())
        }
        (
            Generator::Words {
                vocabulary,
                min_words,
                max_words,
            },
            AbstractType::String,
        ) if !vocabulary.is_empty() && min_words <= max_words => Ok(()),
        (Generator::Code { .. }, AbstractType::String) => Ok(()),
        (Generator::Dates { start, end }, AbstractType::Date) if start <= end => Ok(()),
        _ => bad("generator does not fit the element type"),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn sample(g: &Generator, enum_values: &[String], rng: &mut ChaCha8Rng) -> String {
    match g {
        Generator::Numeric {
            mean,
            std,
            decimals,
            min,
        } => {
            let v = Normal::new(*mean, *std)
                .expect("finite parameters")
                .sample(rng);
            let v = min.map_or(v, |lo| v.max(lo));
            format!("{v:.decimals$}")
        }
        Generator::Categorical { weights } => {
            let idx = WeightedIndex::new(weights)
                .expect("positive weights")
                .sample(rng);
            enum_values[idx].clone()
        }
        Generator::Words {
            vocabulary,
            min_words,
            max_words,
        } => {
            let n = rng.random_range(*min_words..=*max_words);
            (0..n)
                .map(|_| vocabulary[rng.random_range(0..vocabulary.len())].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        }
        Generator::Code {
            prefix,
            digits,
            suffix,
        } => {
            let v = rng.random_range(0..10u64.pow(*digits));
            format!("{prefix}{v:0width$}{suffix}", width = *digits as usize)
        }
        Generator::Dates { start, end } => {
            let span = (*end - *start).num_days();
            let d = *start + Duration::days(rng.random_range(0..=span));
            d.format("%Y-%m-%d").to_string()
        }
    }
}

/// `m` documents; document `i` depends only on `(seed, i)`.
pub fn generate_normal_corpus(
    template: &CorpusTemplate,
    m: usize,
    seed: u64,
) -> Vec<SourceDocument> {
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            SourceDocument {
                id: format!("doc-{i:06}"),
                xml: template.document(&mut rng),
            }
        })
        .collect()
}

pub const INSURANCE_XSD: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<xs:schema xmlns:xs="http://www.w3.org/2001/XMLSchema">
  <xs:simpleType name="StatusType"><xs:restriction base="xs:string">
    <xs:enumeration value="open"/><xs:enumeration value="review"/><xs:enumeration value="approved"/>
    <xs:enumeration value="rejected"/><xs:enumeration value="closed"/>
  </xs:restriction></xs:simpleType>
  <xs:simpleType name="ChannelType"><xs:restriction base="xs:string">
    <xs:enumeration value="web"/><xs:enumeration value="phone"/><xs:enumeration value="agent"/><xs:enumeration value="mobile"/>
  </xs:restriction></xs:simpleType>
  <xs:simpleType name="ProductType"><xs:restriction base="xs:string">
    <xs:enumeration value="auto"/><xs:enumeration value="home"/><xs:enumeration value="travel"/>
    <xs:enumeration value="health"/><xs:enumeration value="life"/>
  </xs:restriction></xs:simpleType>
  <xs:simpleType name="GenderType"><xs:restriction base="xs:string">
    <xs:enumeration value="female"/><xs:enumeration value="male"/><xs:enumeration value="other"/>
  </xs:restriction></xs:simpleType>
  <xs:simpleType name="CountryType"><xs:restriction base="xs:string">
    <xs:enumeration value="US"/><xs:enumeration value="CA"/><xs:enumeration value="GB"/>
    <xs:enumeration value="DE"/><xs:enumeration value="FR"/>
  </xs:restriction></xs:simpleType>
  <xs:simpleType name="IncidentKind"><xs:restriction base="xs:string">
    <xs:enumeration value="collision"/><xs:enumeration value="theft"/><xs:enumeration value="fire"/>
    <xs:enumeration value="water"/><xs:enumeration value="weather"/><xs:enumeration value="injury"/>
  </xs:restriction></xs:simpleType>
  <xs:simpleType name="CurrencyType"><xs:restriction base="xs:string">
    <xs:enumeration value="USD"/><xs:enumeration value="EUR"/><xs:enumeration value="GBP"/><xs:enumeration value="CAD"/>
  </xs:restriction></xs:simpleType>

  <xs:element name="Claim">
    <xs:complexType><xs:sequence>
      <xs:element name="ClaimNumber" type="xs:string"/>
      <xs:element name="SubmittedOn" type="xs:date"/>
      <xs:element name="Status" type="StatusType"/>
      <xs:element name="Channel" type="ChannelType"/>
      <xs:element name="Policy">
        <xs:complexType><xs:sequence>
          <xs:element name="PolicyNumber" type="xs:string"/>
          <xs:element name="ProductLine" type="ProductType"/>
          <xs:element name="EffectiveDate" type="xs:date"/>
          <xs:element name="ExpiryDate" type="xs:date"/>
          <xs:element name="Premium" type="xs:decimal"/>
          <xs:element name="Deductible" type="xs:decimal"/>
          <xs:element name="RenewalCount" type="xs:nonNegativeInteger"/>
        </xs:sequence></xs:complexType>
      </xs:element>
      <xs:element name="Claimant">
        <xs:complexType><xs:sequence>
          <xs:element name="FirstName" type="xs:string"/>
          <xs:element name="LastName" type="xs:string"/>
          <xs:element name="BirthDate" type="xs:date"/>
          <xs:element name="Gender" type="GenderType"/>
          <xs:element name="Email" type="xs:string" minOccurs="0"/>
          <xs:element name="Address">
            <xs:complexType><xs:sequence>
              <xs:element name="Street" type="xs:string"/>
              <xs:element name="City" type="xs:string"/>
              <xs:element name="PostalCode" type="xs:string"/>
              <xs:element name="Country" type="CountryType"/>
            </xs:sequence></xs:complexType>
          </xs:element>
        </xs:sequence></xs:complexType>
      </xs:element>
      <xs:element name="Incident">
        <xs:complexType><xs:sequence>
          <xs:element name="IncidentType" type="IncidentKind"/>
          <xs:element name="Description" type="xs:string"/>
          <xs:element name="EstimatedLoss" type="xs:decimal"/>
        </xs:sequence></xs:complexType>
      </xs:element>
      <xs:element name="Payment">
        <xs:complexType><xs:sequence>
          <xs:element name="Currency" type="CurrencyType"/>
          <xs:element name="PaymentAmount" type="xs:decimal"/>
          <xs:element name="LineAmount" type="xs:decimal" maxOccurs="4"/>
          <xs:element name="TaxRate" type="xs:decimal"/>
        </xs:sequence></xs:complexType>
      </xs:element>
      <xs:element name="Assessment">
        <xs:complexType><xs:sequence>
          <xs:element name="AssessorName" type="xs:string"/>
          <xs:element name="AssessorScore" type="xs:decimal"/>
          <xs:element name="Approved" type="xs:boolean"/>
        </xs:sequence></xs:complexType>
      </xs:element>
    </xs:sequence></xs:complexType>
  </xs:element>
</xs:schema>
"#;

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// Insurance claims: 10 string, 4 date, 8 enumeration and 8 numeric leaves.
pub fn insurance_template() -> CorpusTemplate {
    let first = words(&[
        "Alice", "Bruno", "Chen", "Dana", "Elif", "Farid", "Grace", "Hugo", "Ines", "Jonas",
        "Kira", "Liam", "Maya", "Nils", "Olga", "Priya",
    ]);
    let last = words(&[
        "Smith", "Garcia", "Müller", "Okafor", "Tanaka", "Rossi", "Novak", "Dubois", "Kowalski",
        "Silva", "Jensen", "Hughes", "Larsen", "Moreau", "Ivanova", "Patel",
    ]);
    let streets = words(&[
        "Maple", "Oak", "Cedar", "Elm", "Pine", "Willow", "Birch", "Aspen", "Harbor", "Mill",
        "Station", "Church",
    ]);
    let cities = words(&[
        "Springfield",
        "Riverton",
        "Lakeside",
        "Fairview",
        "Greenville",
        "Ashford",
        "Brookfield",
        "Milton",
        "Oakridge",
        "Clayton",
        "Dover",
        "Kingsport",
    ]);
    let description = words(&[
        "vehicle",
        "rear",
        "bumper",
        "damaged",
        "parking",
        "lot",
        "window",
        "broken",
        "kitchen",
        "pipe",
        "leak",
        "water",
        "ceiling",
        "stolen",
        "bicycle",
        "garage",
        "storm",
        "roof",
        "tiles",
        "hail",
        "fence",
        "minor",
        "fire",
        "stove",
        "smoke",
        "luggage",
        "lost",
        "airport",
        "delayed",
        "flight",
        "slipped",
        "stairs",
        "wrist",
        "injury",
        "hospital",
        "visit",
        "tree",
        "fell",
        "driveway",
        "scratched",
    ]);
    let num = |mean: f64, std: f64, decimals: usize, min: f64| Generator::Numeric {
        mean,
        std,
        decimals,
        min: Some(min),
    };
    let cat = |w: &[f64]| Generator::Categorical {
        weights: w.to_vec(),
    };
    let one = |path: &str, generator: Generator| ElementParams {
        path: path.to_string(),
        min_occurs: 1,
        max_occurs: 1,
        generator,
    };
    let params = vec![
        one(
            "/Claim/ClaimNumber",
            Generator::Code {
                prefix: "CLM-".into(),
                digits: 6,
                suffix: String::new(),
            },
        ),
        one(
            "/Claim/SubmittedOn",
            Generator::Dates {
                start: date(2023, 1, 1),
                end: date(2024, 12, 31),
            },
        ),
        one("/Claim/Status", cat(&[0.25, 0.2, 0.25, 0.1, 0.2])),
        one("/Claim/Channel", cat(&[0.4, 0.2, 0.25, 0.15])),
        one(
            "/Claim/Policy/PolicyNumber",
            Generator::Code {
                prefix: "POL-".into(),
                digits: 8,
                suffix: String::new(),
            },
        ),
        one(
            "/Claim/Policy/ProductLine",
            cat(&[0.35, 0.25, 0.1, 0.2, 0.1]),
        ),
        one(
            "/Claim/Policy/EffectiveDate",
            Generator::Dates {
                start: date(2019, 1, 1),
                end: date(2022, 12, 31),
            },
        ),
        one(
            "/Claim/Policy/ExpiryDate",
            Generator::Dates {
                start: date(2025, 1, 1),
                end: date(2027, 12, 31),
            },
        ),
        one("/Claim/Policy/Premium", num(1200.0, 250.0, 2, 50.0)),
        one("/Claim/Policy/Deductible", num(500.0, 120.0, 2, 0.0)),
        one("/Claim/Policy/RenewalCount", num(4.0, 1.5, 0, 0.0)),
        one(
            "/Claim/Claimant/FirstName",
            Generator::Words {
                vocabulary: first,
                min_words: 1,
                max_words: 1,
            },
        ),
        one(
            "/Claim/Claimant/LastName",
            Generator::Words {
                vocabulary: last.clone(),
                min_words: 1,
                max_words: 1,
            },
        ),
        one(
            "/Claim/Claimant/BirthDate",
            Generator::Dates {
                start: date(1950, 1, 1),
                end: date(2000, 12, 31),
            },
        ),
        one("/Claim/Claimant/Gender", cat(&[0.48, 0.48, 0.04])),
        ElementParams {
            path: "/Claim/Claimant/Email".into(),
            min_occurs: 0,
            max_occurs: 1,
            generator: Generator::Code {
                prefix: "user".into(),
                digits: 6,
                suffix: "@mail.example".into(),
            },
        },
        one(
            "/Claim/Claimant/Address/Street",
            Generator::Words {
                vocabulary: streets,
                min_words: 2,
                max_words: 2,
            },
        ),
        one(
            "/Claim/Claimant/Address/City",
            Generator::Words {
                vocabulary: cities,
                min_words: 1,
                max_words: 1,
            },
        ),
        one(
            "/Claim/Claimant/Address/PostalCode",
            Generator::Code {
                prefix: String::new(),
                digits: 5,
                suffix: String::new(),
            },
        ),
        one(
            "/Claim/Claimant/Address/Country",
            cat(&[0.5, 0.15, 0.15, 0.1, 0.1]),
        ),
        one(
            "/Claim/Incident/IncidentType",
            cat(&[0.3, 0.15, 0.1, 0.2, 0.15, 0.1]),
        ),
        one(
            "/Claim/Incident/Description",
            Generator::Words {
                vocabulary: description,
                min_words: 4,
                max_words: 9,
            },
        ),
        one(
            "/Claim/Incident/EstimatedLoss",
            num(8000.0, 2500.0, 2, 100.0),
        ),
        one("/Claim/Payment/Currency", cat(&[0.5, 0.2, 0.15, 0.15])),
        one("/Claim/Payment/PaymentAmount", num(6000.0, 2000.0, 2, 0.0)),
        ElementParams {
            path: "/Claim/Payment/LineAmount".into(),
            min_occurs: 1,
            max_occurs: 4,
            generator: num(1500.0, 500.0, 2, 10.0),
        },
        one("/Claim/Payment/TaxRate", num(0.2, 0.02, 3, 0.0)),
        one(
            "/Claim/Assessment/AssessorName",
            Generator::Words {
                vocabulary: last,
                min_words: 2,
                max_words: 2,
            },
        ),
        one("/Claim/Assessment/AssessorScore", num(75.0, 10.0, 1, 0.0)),
        one("/Claim/Assessment/Approved", cat(&[0.3, 0.7])),
    ];
    CorpusTemplate::new(INSURANCE_XSD, params).expect("built-in template is consistent")
}
