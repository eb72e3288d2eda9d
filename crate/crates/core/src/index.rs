//! In-memory inverted index with Okapi BM25 ranking and category boosting.
//!
//! Two fields are indexed: the OCR text and the manual category label. The
//! final score of a document is
//!
//! ```text
//! score = bm25_text(D, Q) + boost * bm25_category(D, Q)
//! ```
//!
//! where the text field uses the classic idf `ln((N - n + 0.5) / (n + 0.5))`
//! (negative for terms in more than half the corpus) and the category field
//! uses the non-negative variant `ln(1 + (N - n + 0.5) / (n + 0.5))`, so a
//! label match can only ever raise a document.
//!
//! # On-disk format
//!
//! ```text
//! magic    8 bytes   "SLNSIDX\0"
//! version  u32 LE    FORMAT_VERSION
//! length   u64 LE    payload length in bytes
//! payload  bincode   IndexData
//! checksum 32 bytes  SHA-256 of payload
//! ```
//!
//! Term dictionaries are ordered maps, so saving the same index twice yields
//! identical bytes.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::docmodel::ScreenshotDocument;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SLNSIDX\0";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercased alphanumeric runs. No stemming, no stopwords.
pub fn analyze(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    /// Weight of the category field score.
    pub category_boost: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75, category_boost: 3.0 }
    }
}

/// `ln((N - n + 0.5) / (n + 0.5))`, unclamped.
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    ((doc_count as f64 - doc_freq as f64 + 0.5) / (doc_freq as f64 + 0.5)).ln()
}

/// `ln(1 + (N - n + 0.5) / (n + 0.5))`, always positive.
pub fn category_idf(doc_count: usize, doc_freq: usize) -> f64 {
    (1.0 + (doc_count as f64 - doc_freq as f64 + 0.5) / (doc_freq as f64 + 0.5)).ln()
}

/// Saturated, length-normalised term frequency factor of one term.
pub fn tf_factor(tf: u32, doc_len: u32, avdl: f64, params: &Bm25Params) -> f64 {
    if tf == 0 || avdl == 0.0 {
        return 0.0;
    }
    let f = tf as f64;
    f * (params.k1 + 1.0) / (f + params.k1 * (1.0 - params.b + params.b * doc_len as f64 / avdl))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct FieldIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    lengths: Vec<u32>,
    total_length: u64,
}

impl FieldIndex {
    fn add(&mut self, ordinal: u32, terms: &[String]) {
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for t in terms {
            *counts.entry(t).or_default() += 1;
        }
        for (term, tf) in counts {
            // ordinals only grow, so pushing keeps each list sorted
            self.postings.entry(term.to_owned()).or_default().push(Posting { ordinal, tf });
        }
        self.lengths.push(terms.len() as u32);
        self.total_length += terms.len() as u64;
    }

    fn avdl(&self) -> f64 {
        if self.lengths.is_empty() {
            0.0
        } else {
            self.total_length as f64 / self.lengths.len() as f64
        }
    }

    fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    fn tf(&self, term: &str, ordinal: u32) -> u32 {
        self.postings
            .get(term)
            .and_then(|list| list.binary_search_by_key(&ordinal, |p| p.ordinal).ok().map(|i| list[i].tf))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Text,
    Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub ordinal: u32,
    pub id: String,
    pub score: f64,
    pub rank: usize,
    pub matched_fields: Vec<Field>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub documents: usize,
    pub distinct_terms: usize,
    pub avdl: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct IndexData {
    params: Bm25Params,
    text: FieldIndex,
    category: FieldIndex,
    docs: Vec<ScreenshotDocument>,
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    data: IndexData,
    ids: HashMap<String, u32>,
}

impl InvertedIndex {
    pub fn new(params: Bm25Params) -> Self {
        Self { data: IndexData { params, ..Default::default() }, ids: HashMap::new() }
    }

    pub fn params(&self) -> &Bm25Params {
        &self.data.params
    }

    /// Change ranking parameters; the postings are unaffected.
    pub fn set_params(&mut self, params: Bm25Params) {
        self.data.params = params;
    }

    pub fn len(&self) -> usize {
        self.data.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.docs.is_empty()
    }

    pub fn avdl(&self) -> f64 {
        self.data.text.avdl()
    }

    pub fn doc_len(&self, ordinal: u32) -> u32 {
        self.data.text.lengths[ordinal as usize]
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.data.text.doc_freq(term)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.data.text.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.data.text.postings.keys().map(String::as_str)
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats { documents: self.len(), distinct_terms: self.data.text.postings.len(), avdl: self.avdl() }
    }

    pub fn document(&self, ordinal: u32) -> Option<&ScreenshotDocument> {
        self.data.docs.get(ordinal as usize)
    }

    pub fn documents(&self) -> &[ScreenshotDocument] {
        &self.data.docs
    }

    pub fn ordinal_of(&self, id: &str) -> Option<u32> {
        self.ids.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&ScreenshotDocument> {
        self.ordinal_of(id).and_then(|o| self.document(o))
    }

    /// Index the text and category of `doc` and store the whole document.
    pub fn add_document(&mut self, doc: ScreenshotDocument) -> Result<u32, IndexError> {
        if self.ids.contains_key(&doc.id) {
            return Err(IndexError::DuplicateId(doc.id));
        }
        let ordinal = self.data.docs.len() as u32;
        self.data.text.add(ordinal, &analyze(&doc.text));
        self.data.category.add(ordinal, &analyze(doc.category.as_deref().unwrap_or("")));
        self.ids.insert(doc.id.clone(), ordinal);
        self.data.docs.push(doc);
        Ok(ordinal)
    }

    pub fn from_documents(
        docs: impl IntoIterator<Item = ScreenshotDocument>,
        params: Bm25Params,
    ) -> Result<Self, IndexError> {
        let mut idx = Self::new(params);
        for d in docs {
            idx.add_document(d)?;
        }
        Ok(idx)
    }

    /// Text-field idf of `term`.
    pub fn idf(&self, term: &str) -> f64 {
        idf(self.len(), self.doc_freq(term))
    }

    /// Text-field BM25 of one document. Repeated query terms count each time.
    pub fn bm25(&self, ordinal: u32, query_terms: &[String]) -> f64 {
        self.field_score(&self.data.text, ordinal, query_terms, idf)
    }

    /// Category-field BM25 of one document (before boosting).
    pub fn category_bm25(&self, ordinal: u32, query_terms: &[String]) -> f64 {
        self.field_score(&self.data.category, ordinal, query_terms, category_idf)
    }

    pub fn score(&self, ordinal: u32, query_terms: &[String]) -> f64 {
        self.bm25(ordinal, query_terms) + self.data.params.category_boost * self.category_bm25(ordinal, query_terms)
    }

    fn field_score(&self, field: &FieldIndex, ordinal: u32, terms: &[String], idf_fn: fn(usize, usize) -> f64) -> f64 {
        let avdl = field.avdl();
        let len = field.lengths[ordinal as usize];
        terms
            .iter()
            .map(|t| {
                let tf = field.tf(t, ordinal);
                if tf == 0 {
                    0.0
                } else {
                    idf_fn(self.len(), field.doc_freq(t)) * tf_factor(tf, len, avdl, &self.data.params)
                }
            })
            .sum()
    }

    fn category_matches(&self, ordinal: u32, filter_terms: &[String]) -> bool {
        let cat = self.data.docs[ordinal as usize].category.as_deref().unwrap_or("");
        analyze(cat) == filter_terms
    }

    /// Every match, ranked by score descending then id ascending.
    ///
    /// Candidates are the documents with a posting for some query term in
    /// either field. A `category` filter keeps only documents whose label
    /// analyzes to the same terms; with a filter and an empty query every
    /// such document is returned, ranked by its category score alone.
    pub fn search_all(&self, query: &str, category: Option<&str>) -> Vec<SearchHit> {
        let filter_terms = category.map(analyze).filter(|t| !t.is_empty());
        let mut terms = analyze(query);
        let mut candidates: BTreeMap<u32, Vec<Field>> = BTreeMap::new();

        let label_only = terms.is_empty();
        if label_only {
            let Some(filter) = &filter_terms else { return Vec::new() };
            terms = filter.clone();
            for ord in 0..self.len() as u32 {
                if self.category_matches(ord, filter) {
                    candidates.insert(ord, vec![Field::Category]);
                }
            }
            let scored = candidates
                .into_iter()
                .map(|(ord, fields)| (ord, self.data.params.category_boost * self.category_bm25(ord, &terms), fields))
                .collect();
            return self.rank(scored);
        }
        for (field, name) in [(&self.data.text, Field::Text), (&self.data.category, Field::Category)] {
            for t in &terms {
                for p in field.postings.get(t).map_or(&[][..], Vec::as_slice) {
                    if filter_terms.as_ref().is_some_and(|f| !self.category_matches(p.ordinal, f)) {
                        continue;
                    }
                    let fields = candidates.entry(p.ordinal).or_default();
                    if !fields.contains(&name) {
                        fields.push(name);
                    }
                }
            }
        }

        let scored: Vec<(u32, f64, Vec<Field>)> = candidates
            .into_iter()
            .map(|(ord, fields)| (ord, self.score(ord, &terms), fields))
            .collect();
        self.rank(scored)
    }

    /// Top `k` of [`search_all`](Self::search_all).
    pub fn search(&self, query: &str, category: Option<&str>, k: usize) -> Vec<SearchHit> {
        let mut hits = self.search_all(query, category);
        hits.truncate(k);
        hits
    }

    fn rank(&self, mut scored: Vec<(u32, f64, Vec<Field>)>) -> Vec<SearchHit> {
        let docs = &self.data.docs;
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1).then_with(|| docs[a.0 as usize].id.cmp(&docs[b.0 as usize].id))
        });
        scored
            .into_iter()
            .enumerate()
            .map(|(i, (ordinal, score, matched_fields))| SearchHit {
                ordinal,
                id: docs[ordinal as usize].id.clone(),
                score,
                rank: i + 1,
                matched_fields,
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = bincode::serialize(&self.data).expect("index data is always serializable");
        let mut out = Vec::with_capacity(payload.len() + 52);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let corrupt = |m: String| IndexError::CorruptIndex(m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing index header".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("format version {version}, expected {FORMAT_VERSION}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = &bytes[20..];
        if (body.len() as u64) != len.saturating_add(32) {
            return Err(corrupt(format!("payload length {len} does not match file size {}", bytes.len())));
        }
        let (payload, checksum) = body.split_at(len as usize);
        if Sha256::digest(payload).as_slice() != checksum {
            return Err(corrupt("checksum mismatch".into()));
        }
        let data: IndexData = bincode::deserialize(payload).map_err(|e| corrupt(e.to_string()))?;
        let n = data.docs.len();
        if data.text.lengths.len() != n || data.category.lengths.len() != n {
            return Err(corrupt("field lengths disagree with document count".into()));
        }
        let mut ids = HashMap::with_capacity(n);
        for (i, d) in data.docs.iter().enumerate() {
            if ids.insert(d.id.clone(), i as u32).is_some() {
                return Err(corrupt(format!("duplicate id {:?}", d.id)));
            }
        }
        Ok(Self { data, ids })
    }

    /// Write atomically: a temporary sibling file is renamed into place.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        std::io::Write::write_all(&mut tmp, &self.to_bytes())?;
        tmp.persist(path).map_err(|e| IndexError::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Shared, swappable index snapshot. Readers clone the current `Arc`; a
/// rebuild replaces it in one step, so nobody sees a half-built index.
#[derive(Debug, Clone, Default)]
pub struct IndexHandle(Arc<RwLock<Arc<InvertedIndex>>>);

impl IndexHandle {
    pub fn new(index: InvertedIndex) -> Self {
        Self(Arc::new(RwLock::new(Arc::new(index))))
    }

    pub fn snapshot(&self) -> Arc<InvertedIndex> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace(&self, index: InvertedIndex) -> Arc<InvertedIndex> {
        let mut guard = self.0.write().unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *guard, Arc::new(index))
    }
}
