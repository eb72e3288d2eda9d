use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use screenlens_core::metrics::{evaluate_corpus, CorpusReport, DocumentEval, DocumentOutcome, Normalization};

use crate::PipelineError;

/// One row in the shape of the published result tables: error rate and
/// accuracy at character level, then word level, then position-independent
/// word level. Cells hold hundredths of a percent so that every accuracy is
/// exactly `100% - ER` as printed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub char_er: Option<i64>,
    pub char_accuracy: Option<i64>,
    pub word_er: Option<i64>,
    pub word_accuracy: Option<i64>,
    pub per: Option<i64>,
    pub per_accuracy: Option<i64>,
}

fn cents(rate: Option<f64>) -> (Option<i64>, Option<i64>) {
    match rate {
        Some(r) => {
            let er = (r * 10_000.0).round() as i64;
            (Some(er), Some(10_000 - er))
        }
        None => (None, None),
    }
}

impl TableRow {
    pub fn new(label: impl Into<String>, cer: Option<f64>, wer: Option<f64>, per: Option<f64>) -> Self {
        let (char_er, char_accuracy) = cents(cer);
        let (word_er, word_accuracy) = cents(wer);
        let (per, per_accuracy) = cents(per);
        Self { label: label.into(), char_er, char_accuracy, word_er, word_accuracy, per, per_accuracy }
    }

    pub fn cells(&self) -> [Option<i64>; 6] {
        [self.char_er, self.char_accuracy, self.word_er, self.word_accuracy, self.per, self.per_accuracy]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<TableRow>,
}

pub const TABLE_HEADER: [&str; 6] = ["Char ER", "Char Accuracy", "Word ER", "Word Accuracy", "PER", "PER Accuracy"];

fn pct(cell: Option<i64>) -> String {
    match cell {
        Some(c) => {
            let sign = if c < 0 { "-" } else { "" };
            format!("{sign}{}.{:02}%", c.abs() / 100, c.abs() % 100)
        }
        None => "n/a".into(),
    }
}

impl fmt::Display for ResultTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.label.len()).chain([8]).max().unwrap_or(8);
        write!(f, "{:<width$}", "Approach")?;
        for h in TABLE_HEADER {
            write!(f, " | {h:>13}")?;
        }
        writeln!(f)?;
        writeln!(f, "{}", "-".repeat(width + 16 * TABLE_HEADER.len()))?;
        for row in &self.rows {
            write!(f, "{:<width$}", row.label)?;
            for cell in row.cells() {
                write!(f, " | {:>13}", pct(cell))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationRun {
    pub report: CorpusReport,
    pub table: ResultTable,
    /// Hypothesis stems with no reference, and the reverse.
    pub unmatched_hypotheses: Vec<String>,
    pub unmatched_references: Vec<String>,
}

impl EvaluationRun {
    pub fn exit_code(&self) -> u8 {
        if self.report.failures().next().is_some() {
            crate::exit::PARTIAL
        } else {
            crate::exit::SUCCESS
        }
    }
}

/// Drop one trailing line break: text files end with a newline that is not
/// part of the recognized or transcribed text.
fn strip_final_newline(mut s: String) -> String {
    if s.ends_with('\n') {
        s.pop();
        if s.ends_with('\r') {
            s.pop();
        }
    }
    s
}

fn text_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, PipelineError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))? {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_owned(), path);
            }
        }
    }
    Ok(out)
}

/// Score every `<stem>.txt` in `hyp_dir` against the same stem in `ref_dir`.
pub fn cmd_evaluate(
    hyp_dir: &Path,
    ref_dir: &Path,
    norm: &Normalization,
    label: &str,
) -> Result<EvaluationRun, PipelineError> {
    let hyps = text_files(hyp_dir)?;
    let refs = text_files(ref_dir)?;
    let unmatched_hypotheses: Vec<String> = hyps.keys().filter(|k| !refs.contains_key(*k)).cloned().collect();
    let unmatched_references: Vec<String> = refs.keys().filter(|k| !hyps.contains_key(*k)).cloned().collect();
    for stem in &unmatched_hypotheses {
        log::warn!("{stem}: no reference transcription");
    }
    for stem in &unmatched_references {
        log::warn!("{stem}: no hypothesis text");
    }

    let mut triples = Vec::new();
    let mut unreadable = Vec::new();
    for (stem, hyp_path) in &hyps {
        let Some(ref_path) = refs.get(stem) else { continue };
        match (std::fs::read_to_string(ref_path), std::fs::read_to_string(hyp_path)) {
            (Ok(r), Ok(h)) => triples.push((stem.clone(), strip_final_newline(r), strip_final_newline(h))),
            (Err(e), _) | (_, Err(e)) => unreadable.push(DocumentEval {
                id: stem.clone(),
                outcome: DocumentOutcome::Error(format!("unreadable text: {e}")),
            }),
        }
    }
    let mut documents = evaluate_corpus(&triples, norm).documents;
    documents.extend(unreadable);
    documents.sort_by(|a, b| a.id.cmp(&b.id));
    let report = CorpusReport::from_documents(documents);
    for doc in report.failures() {
        if let DocumentOutcome::Error(e) = &doc.outcome {
            log::warn!("{}: {e}", doc.id);
        }
    }
    let table = ResultTable { rows: vec![TableRow::new(label, report.cer, report.wer, report.per)] };
    Ok(EvaluationRun { report, table, unmatched_hypotheses, unmatched_references })
}
