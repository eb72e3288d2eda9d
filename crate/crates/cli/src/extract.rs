use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use screenlens_core::docmodel::{link_timeline, parse_timestamp, to_xml_batch};
use screenlens_core::ocr::{extract_text, program_exists, CommandEngine, FailurePolicy, Recognizer};
use screenlens_core::{RasterImage, ScreenshotDocument};

use crate::{exit, write_atomic, PipelineConfig, PipelineError, XML_FILE_NAME};

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemFailure {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractSummary {
    pub images: usize,
    pub documents: usize,
    pub segments: usize,
    pub segment_failures: usize,
    pub banners_removed: usize,
    pub failures: Vec<ItemFailure>,
}

impl ExtractSummary {
    pub fn exit_code(&self) -> u8 {
        if self.failures.is_empty() && self.segment_failures == 0 {
            exit::SUCCESS
        } else {
            exit::PARTIAL
        }
    }
}

struct Processed {
    doc: ScreenshotDocument,
    segments: usize,
    segment_failures: usize,
    banner_removed: bool,
}

/// Run the batch with the configured external engine.
pub fn cmd_extract(config: &PipelineConfig) -> Result<ExtractSummary, PipelineError> {
    let program = config.engine.program().map_err(|e| PipelineError::Config(e.to_string()))?;
    if !program_exists(&program) {
        return Err(PipelineError::Config(format!("OCR engine {program:?} not found")));
    }
    let engine = CommandEngine::new(config.engine.clone(), config.parallelism)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    extract_with(config, &engine)
}

/// Run the batch with any recognizer. Images are processed in parallel; all
/// writes happen afterwards in file-name order, and the XML batch is
/// replaced in one step at the end.
pub fn extract_with(config: &PipelineConfig, engine: &dyn Recognizer) -> Result<ExtractSummary, PipelineError> {
    let images = list_images(&config.input)?;
    std::fs::create_dir_all(&config.output).map_err(|e| PipelineError::io(&config.output, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let results: Vec<Result<Processed, String>> =
        pool.install(|| images.par_iter().map(|p| process_image(config, engine, p)).collect());

    let mut summary = ExtractSummary { images: images.len(), ..Default::default() };
    let mut docs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (path, result) in images.iter().zip(results) {
        let file = file_name(path);
        match result {
            Ok(p) if !seen.insert(p.doc.id.clone()) => {
                summary.failures.push(ItemFailure { file, error: format!("duplicate document id {}", p.doc.id) });
            }
            Ok(p) => {
                let txt = config.output.join(format!("{}.txt", stem(path)));
                let mut body = p.doc.text.clone();
                body.push('\n');
                std::fs::write(&txt, body).map_err(|e| PipelineError::io(&txt, e))?;
                summary.segments += p.segments;
                summary.segment_failures += p.segment_failures;
                summary.banners_removed += usize::from(p.banner_removed);
                docs.push(p.doc);
            }
            Err(error) => {
                log::warn!("{file}: {error}");
                summary.failures.push(ItemFailure { file, error });
            }
        }
    }
    summary.documents = docs.len();
    let docs = link_timeline(docs).map_err(|source| PipelineError::Doc { context: "linking timeline".into(), source })?;
    write_atomic(&config.output.join(XML_FILE_NAME), to_xml_batch(&docs).as_bytes())?;
    Ok(summary)
}

fn process_image(config: &PipelineConfig, engine: &dyn Recognizer, path: &Path) -> Result<Processed, String> {
    let name = file_name(path);
    let caps = config
        .filename_pattern
        .captures(&name)
        .ok_or_else(|| "file name does not match filename-pattern".to_owned())?;
    let subject = &caps["subject"];
    let timestamp = parse_timestamp(&caps["timestamp"]).map_err(|e| e.to_string())?;
    let img = RasterImage::open(path).map_err(|e| e.to_string())?;
    let mut extracted =
        extract_text(&img, &config.segmentation, engine, FailurePolicy::Skip).map_err(|e| e.to_string())?;
    if config.strip_banner {
        extracted = extracted.strip_banner(&config.banner_rules);
    }
    let doc = ScreenshotDocument::new(subject, timestamp, extracted.text)
        .map_err(|e| e.to_string())?
        .with_image_path(name);
    Ok(Processed {
        doc,
        segments: extracted.segment_count,
        segment_failures: extracted.failures.len(),
        banner_removed: extracted.banner_removed,
    })
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))? {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
