//! Screenshot documents, their `<add><doc><field name=…>` XML batch form and
//! per-subject timeline linking.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Compact capture-time form embedded in document ids.
pub const ID_TIME_FORMAT: &str = "%Y%m%dT%H%M%S";

/// Field names in serialization order.
pub const FIELDS: [&str; 6] = ["id", "timestamp", "category", "text", "previous_image", "next_image"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocError {
    #[error("invalid subject {0:?}: must be non-empty and contain no underscore")]
    InvalidSubject(String),
    #[error("document id {0:?} is not of the form <subject>_<YYYYMMDDTHHMMSS>")]
    InvalidId(String),
    #[error("schema error at element {0:?}")]
    Schema(String),
    #[error("unparseable timestamp {0:?}")]
    Timestamp(String),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("malformed XML: {0}")]
    Xml(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenshotDocument {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub category: Option<String>,
    pub text: String,
    pub previous_image: Option<String>,
    pub next_image: Option<String>,
    /// Where the source image lives. Kept out of the XML.
    pub image_path: Option<PathBuf>,
}

impl ScreenshotDocument {
    /// Build a document from a subject and capture time, deriving the id.
    pub fn new(subject: &str, timestamp: DateTime<Utc>, text: impl Into<String>) -> Result<Self, DocError> {
        Ok(Self {
            id: make_id(subject, timestamp)?,
            timestamp,
            category: None,
            text: text.into(),
            previous_image: None,
            next_image: None,
            image_path: None,
        })
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        let c = category.into();
        self.category = (!c.is_empty()).then_some(c);
        self
    }

    pub fn with_image_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.image_path = Some(path.into());
        self
    }

    pub fn subject(&self) -> Result<&str, DocError> {
        parse_id(&self.id).map(|(s, _)| s)
    }

    /// What neighbours store in their previous/next links.
    pub fn link_target(&self) -> String {
        match &self.image_path {
            Some(p) => p.to_string_lossy().into_owned(),
            None => self.id.clone(),
        }
    }
}

/// `<subject>_<YYYYMMDDTHHMMSS>`.
pub fn make_id(subject: &str, captured_at: DateTime<Utc>) -> Result<String, DocError> {
    if subject.is_empty() || subject.contains('_') {
        return Err(DocError::InvalidSubject(subject.to_owned()));
    }
    Ok(format!("{subject}_{}", captured_at.format(ID_TIME_FORMAT)))
}

/// Split an id back into subject and capture time.
pub fn parse_id(id: &str) -> Result<(&str, DateTime<Utc>), DocError> {
    let (subject, stamp) = id.rsplit_once('_').ok_or_else(|| DocError::InvalidId(id.to_owned()))?;
    if subject.is_empty() || subject.contains('_') {
        return Err(DocError::InvalidId(id.to_owned()));
    }
    let time = parse_compact_time(stamp).ok_or_else(|| DocError::InvalidId(id.to_owned()))?;
    Ok((subject, time))
}

fn parse_compact_time(s: &str) -> Option<DateTime<Utc>> {
    if s.len() != 15 {
        return None;
    }
    NaiveDateTime::parse_from_str(s, ID_TIME_FORMAT).ok().map(|n| n.and_utc())
}

/// Accepts RFC 3339 / ISO-8601 with offset, or the compact id form.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, DocError> {
    let s = raw.trim();
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .ok()
        .or_else(|| parse_compact_time(s))
        .ok_or_else(|| DocError::Timestamp(raw.to_owned()))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..)
}

// Escapes markup characters and carriage returns (which parsers would
// otherwise fold into newlines). Characters XML 1.0 cannot carry at all are
// replaced by U+FFFD.
fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\r' => out.push_str("&#13;"),
            c if is_xml_char(c) => out.push(c),
            _ => out.push('\u{FFFD}'),
        }
    }
}

fn write_doc(doc: &ScreenshotDocument, out: &mut String) {
    let timestamp = format_timestamp(&doc.timestamp);
    let values: [&str; 6] = [
        &doc.id,
        &timestamp,
        doc.category.as_deref().unwrap_or(""),
        &doc.text,
        doc.previous_image.as_deref().unwrap_or(""),
        doc.next_image.as_deref().unwrap_or(""),
    ];
    out.push_str("  <doc>\n");
    for (name, value) in FIELDS.iter().zip(values) {
        out.push_str("    <field name=\"");
        out.push_str(name);
        out.push_str("\">");
        escape_text(value, out);
        out.push_str("</field>\n");
    }
    out.push_str("  </doc>\n");
}

/// One document as a single-element `<add>` batch.
pub fn to_xml(doc: &ScreenshotDocument) -> String {
    to_xml_batch(std::slice::from_ref(doc))
}

/// UTF-8 `<add>` batch holding every document in order.
pub fn to_xml_batch(docs: &[ScreenshotDocument]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<add>\n");
    for d in docs {
        write_doc(d, &mut out);
    }
    out.push_str("</add>\n");
    out
}

fn xml_err(e: impl std::fmt::Display) -> DocError {
    DocError::Xml(e.to_string())
}

fn element_name(e: &BytesStart<'_>) -> String {
    e.name().as_ref().to_owned()
}

fn field_name(e: &BytesStart<'_>) -> Result<String, DocError> {
    let attr = e
        .try_get_attribute("name")
        .map_err(xml_err)?
        .ok_or_else(|| DocError::Schema("field".into()))?;
    let name = attr.normalized_value(XmlVersion::Implicit1_0).map_err(xml_err)?.into_owned();
    if !FIELDS.contains(&name.as_str()) {
        return Err(DocError::Schema(name));
    }
    Ok(name)
}

fn build_doc(mut fields: BTreeMap<String, String>) -> Result<ScreenshotDocument, DocError> {
    let id = fields.remove("id").filter(|s| !s.is_empty()).ok_or_else(|| DocError::Schema("id".into()))?;
    let timestamp = match fields.remove("timestamp").filter(|s| !s.trim().is_empty()) {
        Some(raw) => parse_timestamp(&raw)?,
        None => parse_id(&id).map(|(_, t)| t).map_err(|_| DocError::Schema("timestamp".into()))?,
    };
    let mut opt = |k: &str| fields.remove(k).filter(|s| !s.is_empty());
    Ok(ScreenshotDocument {
        category: opt("category"),
        previous_image: opt("previous_image"),
        next_image: opt("next_image"),
        text: opt("text").unwrap_or_default(),
        id,
        timestamp,
        image_path: None,
    })
}

#[derive(PartialEq)]
enum Level {
    Top,
    Add,
    Doc,
    Field,
}

/// Parse an `<add>` batch. Whitespace between elements is ignored; field
/// content is taken verbatim after entity resolution.
pub fn from_xml(xml: &str) -> Result<Vec<ScreenshotDocument>, DocError> {
    let mut reader = Reader::from_str(xml);
    let mut docs = Vec::new();
    let mut level = Level::Top;
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<(String, String)> = None;
    let mut seen_add = false;

    loop {
        let event = reader.read_event().map_err(xml_err)?;
        match event {
            Event::Start(e) => {
                let tag = element_name(&e);
                level = match (&level, tag.as_str()) {
                    (Level::Top, "add") if !seen_add => {
                        seen_add = true;
                        Level::Add
                    }
                    (Level::Add, "doc") => {
                        fields.clear();
                        Level::Doc
                    }
                    (Level::Doc, "field") => {
                        let name = field_name(&e)?;
                        if fields.contains_key(&name) {
                            return Err(DocError::Schema(name));
                        }
                        current = Some((name, String::new()));
                        Level::Field
                    }
                    _ => return Err(DocError::Schema(tag)),
                };
            }
            Event::Empty(e) => {
                let tag = element_name(&e);
                match (&level, tag.as_str()) {
                    (Level::Top, "add") if !seen_add => seen_add = true,
                    (Level::Add, "doc") => return Err(DocError::Schema("id".into())),
                    (Level::Doc, "field") => {
                        let name = field_name(&e)?;
                        if fields.insert(name.clone(), String::new()).is_some() {
                            return Err(DocError::Schema(name));
                        }
                    }
                    _ => return Err(DocError::Schema(tag)),
                }
            }
            Event::End(_) => {
                level = match level {
                    Level::Field => {
                        let (name, value) = current.take().expect("inside a field");
                        fields.insert(name, value);
                        Level::Doc
                    }
                    Level::Doc => {
                        docs.push(build_doc(std::mem::take(&mut fields))?);
                        Level::Add
                    }
                    Level::Add | Level::Top => Level::Top,
                };
            }
            Event::Text(t) => {
                let content = t.xml10_content();
                match &mut current {
                    Some((_, buf)) => buf.push_str(&content),
                    None if content.trim().is_empty() => {}
                    None => return Err(DocError::Schema("text outside field".into())),
                }
            }
            Event::CData(t) => match &mut current {
                Some((_, buf)) => buf.push_str(&t.xml10_content()),
                None => return Err(DocError::Schema("CDATA outside field".into())),
            },
            Event::GeneralRef(r) => {
                let Some((_, buf)) = &mut current else {
                    return Err(DocError::Schema("entity outside field".into()));
                };
                match r.resolve_char_ref().map_err(xml_err)? {
                    Some(c) => buf.push(c),
                    None => {
                        let name = r.xml10_content();
                        let resolved = quick_xml::escape::resolve_predefined_entity(&name)
                            .ok_or_else(|| DocError::Xml(format!("unknown entity &{name};")))?;
                        buf.push_str(resolved);
                    }
                }
            }
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }
    if level != Level::Top {
        return Err(DocError::Xml("unexpected end of input".into()));
    }
    if !seen_add {
        return Err(DocError::Schema("add".into()));
    }
    Ok(docs)
}

/// Chain each subject's documents by capture time (ties broken by id) and
/// set previous/next links to the neighbours' link targets. Output keeps the
/// input order. Links never cross subjects.
pub fn link_timeline(mut docs: Vec<ScreenshotDocument>) -> Result<Vec<ScreenshotDocument>, DocError> {
    let mut ids = HashSet::new();
    let mut by_subject: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        if !ids.insert(d.id.as_str()) {
            return Err(DocError::DuplicateId(d.id.clone()));
        }
        by_subject.entry(d.subject()?.to_owned()).or_default().push(i);
    }
    for chain in by_subject.values_mut() {
        chain.sort_by(|&a, &b| (docs[a].timestamp, &docs[a].id).cmp(&(docs[b].timestamp, &docs[b].id)));
        let targets: Vec<String> = chain.iter().map(|&i| docs[i].link_target()).collect();
        for (pos, &i) in chain.iter().enumerate() {
            docs[i].previous_image = pos.checked_sub(1).map(|p| targets[p].clone());
            docs[i].next_image = targets.get(pos + 1).cloned();
        }
    }
    Ok(docs)
}
