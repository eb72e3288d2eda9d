use std::fmt::Write as _;
use std::path::Path;

use screenlens_core::docmodel::from_xml;
use screenlens_core::index::{IndexStats, SearchHit};
use screenlens_core::{Bm25Params, InvertedIndex};

use crate::PipelineError;

/// Build an index from an XML batch and persist it. The same batch always
/// yields the same bytes.
pub fn cmd_index(xml_path: &Path, index_path: &Path, params: Bm25Params) -> Result<IndexStats, PipelineError> {
    let xml = std::fs::read_to_string(xml_path).map_err(|e| PipelineError::io(xml_path, e))?;
    let docs = from_xml(&xml)
        .map_err(|source| PipelineError::Doc { context: xml_path.display().to_string(), source })?;
    let index = InvertedIndex::from_documents(docs, params)?;
    if let Some(dir) = index_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    index.save(index_path)?;
    Ok(index.stats())
}

/// Top `k` hits for `query`, with optional parameter overrides.
pub fn cmd_query(
    index_path: &Path,
    query: &str,
    category: Option<&str>,
    k: usize,
    params: Option<Bm25Params>,
) -> Result<(InvertedIndex, Vec<SearchHit>), PipelineError> {
    let mut index = InvertedIndex::load(index_path)?;
    if let Some(p) = params {
        index.set_params(p);
    }
    let hits = index.search(query, category, k);
    Ok((index, hits))
}

pub fn render_hits(index: &InvertedIndex, hits: &[SearchHit]) -> String {
    let mut out = format!("{} hits\n", hits.len());
    for h in hits {
        let Some(doc) = index.document(h.ordinal) else { continue };
        let preview: String = doc.text.split_whitespace().collect::<Vec<_>>().join(" ").chars().take(60).collect();
        let _ = writeln!(
            out,
            "{:>3}. {}  score={:.4}  category={}  {}",
            h.rank,
            h.id,
            h.score,
            doc.category.as_deref().unwrap_or("-"),
            preview
        );
    }
    out
}
