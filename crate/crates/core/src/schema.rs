//! XSD parsing into the ordered vector of abstract element descriptors.
//!
//! Only the information needed for feature extraction is kept: the absolute
//! element path, an abstract value type, the enumeration literals and the
//! occurrence bounds. Container elements contribute path context only.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, ArtifactError};

const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema";

pub const ARTIFACT_KIND: &str = "schema";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbstractType {
    Numerical,
    Enumeration,
    String,
    Date,
}

/// `max = None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccursBounds {
    pub min: u32,
    pub max: Option<u32>,
}

impl OccursBounds {
    pub const ONE: OccursBounds = OccursBounds {
        min: 1,
        max: Some(1),
    };

    fn times(self, outer: OccursBounds) -> OccursBounds {
        OccursBounds {
            min: self.min.saturating_mul(outer.min),
            max: match (self.max, outer.max) {
                (Some(a), Some(b)) => Some(a.saturating_mul(b)),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDescriptor {
    pub path: String,
    pub name: String,
    pub abstract_type: AbstractType,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub enum_values: Vec<String>,
    pub occurs: OccursBounds,
}

impl ElementDescriptor {
    pub fn is_attribute(&self) -> bool {
        self.name.starts_with('@')
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaVector {
    pub descriptors: Vec<ElementDescriptor>,
    pub source_hash: String,
}

impl SchemaVector {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn position(&self, path: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.path == path)
    }

    /// Every proper ancestor path of a descriptor, i.e. the structural elements.
    pub fn container_paths(&self) -> HashSet<String> {
        let mut out = HashSet::new();
        for d in &self.descriptors {
            let mut p = d.path.as_str();
            while let Some(idx) = p.rfind('/') {
                p = &p[..idx];
                if p.is_empty() {
                    break;
                }
                out.insert(p.to_string());
            }
        }
        // An element that carries a descriptor is not a pure container.
        for d in &self.descriptors {
            out.remove(&d.path);
        }
        out
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

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed schema: {0}")]
    MalformedSchema(String),
}

/// A construct the parser skipped, with the path where it was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsupportedConstruct {
    pub path: String,
    pub construct: String,
}

#[derive(Debug, Clone)]
pub struct ParsedSchema {
    pub schema: SchemaVector,
    pub unsupported: Vec<UnsupportedConstruct>,
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Treat XML attributes as `@name` children of their element.
    pub include_attributes: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            include_attributes: true,
        }
    }
}

/// Maps an XSD built-in type name (with or without prefix) to its abstract type.
///
/// `boolean` is treated as a two-valued enumeration; unknown names fall back to `String`.
pub fn map_xsd_type(xsd_type_name: &str) -> AbstractType {
    let local = xsd_type_name
        .rsplit_once(':')
        .map_or(xsd_type_name, |(_, l)| l);
    match local {
        "double" | "float" | "decimal" | "int" | "integer" | "long" | "short" | "byte"
        | "nonNegativeInteger" | "positiveInteger" | "nonPositiveInteger" | "negativeInteger" => {
            AbstractType::Numerical
        }
        l if l.starts_with("unsigned") => AbstractType::Numerical,
        "date" | "dateTime" | "time" => AbstractType::Date,
        l if l.starts_with("gYear") => AbstractType::Date,
        "boolean" => AbstractType::Enumeration,
        _ => AbstractType::String,
    }
}

fn builtin_enum_values(local: &str) -> Vec<String> {
    if local == "boolean" {
        vec!["false".to_string(), "true".to_string()]
    } else {
        Vec::new()
    }
}

pub fn parse_xsd(xsd_text: &str) -> Result<ParsedSchema, SchemaError> {
    parse_xsd_with(xsd_text, ParseOptions::default())
}

pub fn parse_xsd_with(xsd_text: &str, options: ParseOptions) -> Result<ParsedSchema, SchemaError> {
    let doc = Document::parse(xsd_text).map_err(|e| SchemaError::MalformedSchema(e.to_string()))?;
    let root = doc.root_element();
    if !is_xsd(&root, "schema") {
        return Err(SchemaError::MalformedSchema(format!(
            "root element is `{}`, expected xs:schema",
            root.tag_name().name()
        )));
    }

    let mut parser = Parser::new(root, options);
    for child in root.children().filter(|n| is_xsd(n, "element")) {
        parser.declare_element(child, "", OccursBounds::ONE);
    }

    Ok(ParsedSchema {
        schema: SchemaVector {
            descriptors: parser.descriptors,
            source_hash: artifact::sha256_hex(xsd_text.as_bytes()),
        },
        unsupported: parser.unsupported,
    })
}

fn is_xsd(node: &Node, local: &str) -> bool {
    node.is_element()
        && node.tag_name().name() == local
        && node.tag_name().namespace() == Some(XSD_NS)
}

fn xsd_children<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children()
        .filter(|n| n.is_element() && n.tag_name().namespace() == Some(XSD_NS))
}

fn parse_occurs(node: &Node) -> OccursBounds {
    let min = node
        .attribute("minOccurs")
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(1);
    let max = match node.attribute("maxOccurs").map(str::trim) {
        Some("unbounded") => None,
        Some(v) => Some(v.parse().unwrap_or(1)),
        None => Some(1),
    };
    OccursBounds { min, max }
}

enum TypeRef<'a, 'i> {
    Builtin(&'a str),
    Simple(Node<'a, 'i>),
    Complex(Node<'a, 'i>),
    Missing(&'a str),
}

struct Parser<'a, 'i> {
    options: ParseOptions,
    elements: HashMap<&'a str, Node<'a, 'i>>,
    simple_types: HashMap<&'a str, Node<'a, 'i>>,
    complex_types: HashMap<&'a str, Node<'a, 'i>>,
    groups: HashMap<&'a str, Node<'a, 'i>>,
    attribute_groups: HashMap<&'a str, Node<'a, 'i>>,
    descriptors: Vec<ElementDescriptor>,
    seen: HashSet<String>,
    unsupported: Vec<UnsupportedConstruct>,
    expanding: Vec<Node<'a, 'i>>,
}

impl<'a, 'i> Parser<'a, 'i> {
    fn new(root: Node<'a, 'i>, options: ParseOptions) -> Self {
        let mut p = Parser {
            options,
            elements: HashMap::new(),
            simple_types: HashMap::new(),
            complex_types: HashMap::new(),
            groups: HashMap::new(),
            attribute_groups: HashMap::new(),
            descriptors: Vec::new(),
            seen: HashSet::new(),
            unsupported: Vec::new(),
            expanding: Vec::new(),
        };
        for child in xsd_children(root) {
            let Some(name) = child.attribute("name") else {
                continue;
            };
            let table = match child.tag_name().name() {
                "element" => &mut p.elements,
                "simpleType" => &mut p.simple_types,
                "complexType" => &mut p.complex_types,
                "group" => &mut p.groups,
                "attributeGroup" => &mut p.attribute_groups,
                _ => continue,
            };
            table.insert(name, child);
        }
        p
    }

    fn report(&mut self, path: &str, construct: impl Into<String>) {
        self.unsupported.push(UnsupportedConstruct {
            path: path.to_string(),
            construct: construct.into(),
        });
    }

    fn push(&mut self, descriptor: ElementDescriptor) {
        if self.seen.insert(descriptor.path.clone()) {
            self.descriptors.push(descriptor);
        } else {
            let path = descriptor.path.clone();
            self.report(&path, "duplicate declaration");
        }
    }

    fn resolve_type(&self, context: Node<'a, 'i>, qname: &'a str) -> TypeRef<'a, 'i> {
        let (prefix, local) = match qname.split_once(':') {
            Some((p, l)) => (Some(p), l),
            None => (None, qname),
        };
        if context.lookup_namespace_uri(prefix) == Some(XSD_NS) {
            return TypeRef::Builtin(local);
        }
        if let Some(n) = self.simple_types.get(local) {
            TypeRef::Simple(*n)
        } else if let Some(n) = self.complex_types.get(local) {
            TypeRef::Complex(*n)
        } else {
            TypeRef::Missing(qname)
        }
    }

    fn declare_element(&mut self, node: Node<'a, 'i>, parent: &str, outer: OccursBounds) {
        let occurs = parse_occurs(&node).times(outer);
        if let Some(target) = node.attribute("ref") {
            let local = target.rsplit_once(':').map_or(target, |(_, l)| l);
            match self.elements.get(local).copied() {
                Some(global) => {
                    if self.expanding.contains(&global) {
                        self.report(&format!("{parent}/{local}"), "recursive element reference");
                        return;
                    }
                    self.expanding.push(global);
                    self.declare_named(global, parent, occurs);
                    self.expanding.pop();
                }
                None => self.report(
                    &format!("{parent}/{local}"),
                    format!("unresolved element ref `{target}`"),
                ),
            }
            return;
        }
        self.declare_named(node, parent, occurs);
    }

    fn declare_named(&mut self, node: Node<'a, 'i>, parent: &str, occurs: OccursBounds) {
        let Some(name) = node.attribute("name") else {
            self.report(parent, "element without name");
            return;
        };
        let path = format!("{parent}/{name}");
        if node.attribute("substitutionGroup").is_some() {
            self.report(&path, "substitution group");
            return;
        }

        if let Some(type_name) = node.attribute("type") {
            match self.resolve_type(node, type_name) {
                TypeRef::Builtin(local) => self.push_leaf(
                    &path,
                    name,
                    occurs,
                    map_xsd_type(local),
                    builtin_enum_values(local),
                ),
                TypeRef::Simple(st) => {
                    let (ty, values) = self.simple_type_info(st, &path);
                    self.push_leaf(&path, name, occurs, ty, values);
                }
                TypeRef::Complex(ct) => self.expand_complex(ct, &path, name, occurs),
                TypeRef::Missing(q) => {
                    self.report(&path, format!("unresolved type `{q}`"));
                    self.push_leaf(&path, name, occurs, AbstractType::String, Vec::new());
                }
            }
            return;
        }

        if let Some(st) = xsd_children(node).find(|n| n.tag_name().name() == "simpleType") {
            let (ty, values) = self.simple_type_info(st, &path);
            self.push_leaf(&path, name, occurs, ty, values);
        } else if let Some(ct) = xsd_children(node).find(|n| n.tag_name().name() == "complexType") {
            self.expand_complex(ct, &path, name, occurs);
        } else {
            // xs:anyType
            self.push_leaf(&path, name, occurs, AbstractType::String, Vec::new());
        }
    }

    fn push_leaf(
        &mut self,
        path: &str,
        name: &str,
        occurs: OccursBounds,
        ty: AbstractType,
        values: Vec<String>,
    ) {
        // An enumeration needs at least one literal to be usable.
        let (ty, values) = if ty == AbstractType::Enumeration && values.is_empty() {
            (AbstractType::String, values)
        } else {
            (ty, values)
        };
        self.push(ElementDescriptor {
            path: path.to_string(),
            name: name.to_string(),
            abstract_type: ty,
            enum_values: values,
            occurs,
        });
    }

    fn simple_type_info(&mut self, st: Node<'a, 'i>, path: &str) -> (AbstractType, Vec<String>) {
        if self.expanding.contains(&st) {
            self.report(path, "recursive simple type");
            return (AbstractType::String, Vec::new());
        }
        self.expanding.push(st);
        let out = self.simple_type_inner(st, path);
        self.expanding.pop();
        out
    }

    fn simple_type_inner(&mut self, st: Node<'a, 'i>, path: &str) -> (AbstractType, Vec<String>) {
        let Some(body) = xsd_children(st).find(|n| n.tag_name().name() != "annotation") else {
            return (AbstractType::String, Vec::new());
        };
        match body.tag_name().name() {
            "restriction" => {
                let mut values: Vec<String> = Vec::new();
                for facet in xsd_children(body).filter(|n| n.tag_name().name() == "enumeration") {
                    if let Some(v) = facet.attribute("value") {
                        if !values.iter().any(|x| x == v) {
                            values.push(v.to_string());
                        }
                    }
                }
                if !values.is_empty() {
                    return (AbstractType::Enumeration, values);
                }
                if let Some(base) = body.attribute("base") {
                    return match self.resolve_type(body, base) {
                        TypeRef::Builtin(local) => {
                            (map_xsd_type(local), builtin_enum_values(local))
                        }
                        TypeRef::Simple(inner) => self.simple_type_info(inner, path),
                        _ => (AbstractType::String, Vec::new()),
                    };
                }
                if let Some(inner) =
                    xsd_children(body).find(|n| n.tag_name().name() == "simpleType")
                {
                    return self.simple_type_info(inner, path);
                }
                (AbstractType::String, Vec::new())
            }
            // list and union values are free text as far as features go
            _ => (AbstractType::String, Vec::new()),
        }
    }

    /// Resolves the value type of simple content (`xs:simpleContent` base or similar).
    fn base_info(
        &mut self,
        node: Node<'a, 'i>,
        base: &'a str,
        path: &str,
    ) -> (AbstractType, Vec<String>) {
        match self.resolve_type(node, base) {
            TypeRef::Builtin(local) => (map_xsd_type(local), builtin_enum_values(local)),
            TypeRef::Simple(st) => self.simple_type_info(st, path),
            TypeRef::Complex(ct) => {
                // complex type with simple content: follow its own base
                let inner = xsd_children(ct)
                    .find(|n| n.tag_name().name() == "simpleContent")
                    .and_then(|sc| xsd_children(sc).find(|n| n.attribute("base").is_some()));
                match inner {
                    Some(ext) if !self.expanding.contains(&ct) => {
                        self.expanding.push(ct);
                        let out =
                            self.base_info(ext, ext.attribute("base").unwrap_or("string"), path);
                        self.expanding.pop();
                        out
                    }
                    _ => (AbstractType::String, Vec::new()),
                }
            }
            TypeRef::Missing(_) => (AbstractType::String, Vec::new()),
        }
    }

    fn expand_complex(&mut self, ct: Node<'a, 'i>, path: &str, name: &str, occurs: OccursBounds) {
        if self.expanding.contains(&ct) {
            self.report(path, "recursive complex type");
            return;
        }
        self.expanding.push(ct);
        if ct.attribute("mixed") == Some("true") {
            self.push_leaf(path, name, occurs, AbstractType::String, Vec::new());
        }
        self.expand_content(ct, path, name, occurs);
        self.expanding.pop();
    }

    fn expand_content(&mut self, ct: Node<'a, 'i>, path: &str, name: &str, occurs: OccursBounds) {
        for child in xsd_children(ct) {
            match child.tag_name().name() {
                "sequence" | "choice" | "all" | "group" => {
                    self.expand_particle(child, path, OccursBounds::ONE)
                }
                "attribute" | "attributeGroup" | "anyAttribute" => {
                    self.expand_attribute(child, path)
                }
                "simpleContent" => {
                    let Some(deriv) = xsd_children(child)
                        .find(|n| matches!(n.tag_name().name(), "extension" | "restriction"))
                    else {
                        continue;
                    };
                    let (ty, values) = match deriv.attribute("base") {
                        Some(base) => self.base_info(deriv, base, path),
                        None => (AbstractType::String, Vec::new()),
                    };
                    let (ty, values) = if deriv.tag_name().name() == "restriction" {
                        let facets: Vec<String> = xsd_children(deriv)
                            .filter(|n| n.tag_name().name() == "enumeration")
                            .filter_map(|n| n.attribute("value").map(str::to_string))
                            .collect();
                        if facets.is_empty() {
                            (ty, values)
                        } else {
                            (AbstractType::Enumeration, facets)
                        }
                    } else {
                        (ty, values)
                    };
                    self.push_leaf(path, name, occurs, ty, values);
                    for attr in xsd_children(deriv) {
                        if matches!(
                            attr.tag_name().name(),
                            "attribute" | "attributeGroup" | "anyAttribute"
                        ) {
                            self.expand_attribute(attr, path);
                        }
                    }
                }
                "complexContent" => {
                    let Some(deriv) = xsd_children(child)
                        .find(|n| matches!(n.tag_name().name(), "extension" | "restriction"))
                    else {
                        continue;
                    };
                    if deriv.tag_name().name() == "extension" {
                        if let Some(base) = deriv.attribute("base") {
                            match self.resolve_type(deriv, base) {
                                TypeRef::Complex(base_ct) if !self.expanding.contains(&base_ct) => {
                                    self.expanding.push(base_ct);
                                    self.expand_content(base_ct, path, name, occurs);
                                    self.expanding.pop();
                                }
                                TypeRef::Builtin("anyType") => {}
                                _ => self.report(
                                    path,
                                    format!("unsupported complexContent base `{base}`"),
                                ),
                            }
                        }
                    }
                    self.expand_content(deriv, path, name, occurs);
                }
                "annotation" | "extension" | "restriction" => {}
                other => self.report(path, format!("xs:{other}")),
            }
        }
    }

    fn expand_particle(&mut self, node: Node<'a, 'i>, path: &str, outer: OccursBounds) {
        let kind = node.tag_name().name();
        if kind == "group" {
            let Some(target) = node.attribute("ref") else {
                self.expand_group_body(node, path, outer);
                return;
            };
            let local = target.rsplit_once(':').map_or(target, |(_, l)| l);
            match self.groups.get(local).copied() {
                Some(g) if !self.expanding.contains(&g) => {
                    self.expanding.push(g);
                    self.expand_group_body(g, path, parse_occurs(&node).times(outer));
                    self.expanding.pop();
                }
                Some(_) => self.report(path, "recursive group"),
                None => self.report(path, format!("unresolved group ref `{target}`")),
            }
            return;
        }
        let mut occurs = parse_occurs(&node).times(outer);
        let alternatives = xsd_children(node)
            .filter(|n| n.tag_name().name() != "annotation")
            .count();
        if kind == "choice" && alternatives > 1 {
            occurs.min = 0;
        }
        for child in xsd_children(node) {
            match child.tag_name().name() {
                "element" => self.declare_element(child, path, occurs),
                "sequence" | "choice" | "all" | "group" => {
                    self.expand_particle(child, path, occurs)
                }
                "any" => self.report(path, "xs:any"),
                "annotation" => {}
                other => self.report(path, format!("xs:{other}")),
            }
        }
    }

    fn expand_group_body(&mut self, group: Node<'a, 'i>, path: &str, outer: OccursBounds) {
        for child in xsd_children(group) {
            if matches!(child.tag_name().name(), "sequence" | "choice" | "all") {
                self.expand_particle(child, path, outer);
            }
        }
    }

    fn expand_attribute(&mut self, node: Node<'a, 'i>, path: &str) {
        if !self.options.include_attributes {
            return;
        }
        match node.tag_name().name() {
            "anyAttribute" => self.report(path, "xs:anyAttribute"),
            "attributeGroup" => {
                let Some(target) = node.attribute("ref") else {
                    return;
                };
                let local = target.rsplit_once(':').map_or(target, |(_, l)| l);
                match self.attribute_groups.get(local).copied() {
                    Some(g) if !self.expanding.contains(&g) => {
                        self.expanding.push(g);
                        for child in xsd_children(g) {
                            self.expand_attribute(child, path);
                        }
                        self.expanding.pop();
                    }
                    _ => self.report(path, format!("unresolved attributeGroup `{target}`")),
                }
            }
            "attribute" => {
                if node.attribute("use") == Some("prohibited") {
                    return;
                }
                let Some(name) = node.attribute("name").or_else(|| node.attribute("ref")) else {
                    return;
                };
                let name = name.rsplit_once(':').map_or(name, |(_, l)| l);
                let attr_path = format!("{path}/@{name}");
                let min = u32::from(node.attribute("use") == Some("required"));
                let occurs = OccursBounds { min, max: Some(1) };
                let (ty, values) = if let Some(t) = node.attribute("type") {
                    match self.resolve_type(node, t) {
                        TypeRef::Builtin(local) => {
                            (map_xsd_type(local), builtin_enum_values(local))
                        }
                        TypeRef::Simple(st) => self.simple_type_info(st, &attr_path),
                        _ => (AbstractType::String, Vec::new()),
                    }
                } else if let Some(st) =
                    xsd_children(node).find(|n| n.tag_name().name() == "simpleType")
                {
                    self.simple_type_info(st, &attr_path)
                } else {
                    (AbstractType::String, Vec::new())
                };
                self.push_leaf(&attr_path, &format!("@{name}"), occurs, ty, values);
            }
            _ => {}
        }
    }
}
