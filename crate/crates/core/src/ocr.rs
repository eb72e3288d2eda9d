//! Driving an external OCR engine over segmented screenshots.
//!
//! The engine is any command line tool that reads an image file and writes
//! text. Each crop is handed over through a private temporary directory; the
//! recognized text is read back from `<output>.txt`, `<output>` or, failing
//! both, the process's standard output.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::imaging::{self, BoundingBox, GrayImage, ImagingError, RasterImage, Segment, SegmentationParams};

pub const INPUT_PLACEHOLDER: &str = "{input}";
pub const OUTPUT_PLACEHOLDER: &str = "{output}";
pub const ENGINE_ENV: &str = "SCREENLENS_OCR_CMD";

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("OCR engine {command:?} not found (segment {bbox})")]
    EngineNotFound { command: String, bbox: BoundingBox },
    #[error("OCR engine timed out after {timeout:?} (segment {bbox})")]
    EngineTimeout { timeout: Duration, bbox: BoundingBox },
    #[error("OCR engine failed with {status} (segment {bbox}): {stderr}")]
    EngineFailure { status: String, stderr: String, bbox: BoundingBox },
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error("OCR I/O error (segment {bbox}): {source}")]
    Io { bbox: BoundingBox, source: std::io::Error },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

impl OcrError {
    pub fn bbox(&self) -> Option<BoundingBox> {
        match self {
            OcrError::EngineNotFound { bbox, .. }
            | OcrError::EngineTimeout { bbox, .. }
            | OcrError::EngineFailure { bbox, .. }
            | OcrError::Io { bbox, .. } => Some(*bbox),
            OcrError::Config(_) | OcrError::Imaging(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrEngineConfig {
    pub command_template: String,
    pub timeout: Duration,
    /// Free-form engine name recorded alongside outputs.
    pub label: String,
}

impl OcrEngineConfig {
    pub fn new(command_template: impl Into<String>, timeout: Duration, label: impl Into<String>) -> Result<Self, OcrError> {
        let cfg = Self { command_template: command_template.into(), timeout, label: label.into() };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Tesseract writing `<output>.txt`.
    pub fn tesseract() -> Self {
        Self {
            command_template: "tesseract {input} {output}".into(),
            timeout: Duration::from_secs(30),
            label: "tesseract".into(),
        }
    }

    /// Replace the template with `$SCREENLENS_OCR_CMD` when it is set.
    pub fn with_env_override(mut self) -> Result<Self, OcrError> {
        if let Ok(cmd) = std::env::var(ENGINE_ENV) {
            if !cmd.trim().is_empty() {
                self.command_template = cmd;
                self.validate()?;
            }
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), OcrError> {
        for ph in [INPUT_PLACEHOLDER, OUTPUT_PLACEHOLDER] {
            let n = self.command_template.matches(ph).count();
            if n != 1 {
                return Err(OcrError::Config(format!("template must contain {ph} exactly once, found {n}")));
            }
        }
        if self.timeout.is_zero() {
            return Err(OcrError::Config("timeout must be positive".into()));
        }
        let argv = self.argv(Path::new("in"), Path::new("out"))?;
        if argv.is_empty() {
            return Err(OcrError::Config("empty command".into()));
        }
        Ok(())
    }

    pub fn program(&self) -> Result<String, OcrError> {
        self.argv(Path::new("in"), Path::new("out"))?
            .into_iter()
            .next()
            .ok_or_else(|| OcrError::Config("empty command".into()))
    }

    fn argv(&self, input: &Path, output: &Path) -> Result<Vec<String>, OcrError> {
        let words = shell_words::split(&self.command_template).map_err(|e| OcrError::Config(e.to_string()))?;
        Ok(words
            .into_iter()
            .map(|w| {
                w.replace(INPUT_PLACEHOLDER, &input.to_string_lossy())
                    .replace(OUTPUT_PLACEHOLDER, &output.to_string_lossy())
            })
            .collect())
    }
}

/// Whether `program` resolves to an executable file, either as a path or
/// through `$PATH`.
pub fn program_exists(program: &str) -> bool {
    let p = Path::new(program);
    if p.components().count() > 1 {
        return p.is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|dir| dir.join(program).is_file()))
        .unwrap_or(false)
}

/// Counting semaphore bounding simultaneous engine processes.
#[derive(Debug)]
pub struct ProcessLimiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl ProcessLimiter {
    pub fn new(slots: usize) -> Self {
        Self { free: Mutex::new(slots.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> ProcessPermit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        ProcessPermit(self)
    }
}

struct ProcessPermit<'a>(&'a ProcessLimiter);

impl Drop for ProcessPermit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Anything that turns a segment into text.
pub trait Recognizer: Send + Sync {
    fn recognize(&self, segment: &Segment) -> Result<String, OcrError>;

    fn label(&self) -> &str {
        "custom"
    }
}

/// Command-line OCR engine behind a process cap.
#[derive(Debug)]
pub struct CommandEngine {
    config: OcrEngineConfig,
    limiter: ProcessLimiter,
}

impl CommandEngine {
    pub fn new(config: OcrEngineConfig, max_processes: usize) -> Result<Self, OcrError> {
        config.validate()?;
        Ok(Self { config, limiter: ProcessLimiter::new(max_processes) })
    }

    pub fn config(&self) -> &OcrEngineConfig {
        &self.config
    }

    /// Run the engine on one crop.
    pub fn recognize_segment(&self, crop: &GrayImage, bbox: BoundingBox) -> Result<String, OcrError> {
        let io = |source| OcrError::Io { bbox, source };
        let dir = tempfile::tempdir().map_err(io)?;
        let input = dir.path().join("segment.png");
        let output_base = dir.path().join("segment");
        let png = crop
            .to_png()
            .map_err(|e| io(std::io::Error::other(e.to_string())))?;
        std::fs::write(&input, png).map_err(io)?;

        let argv = self.config.argv(&input, &output_base)?;
        let _permit = self.limiter.acquire();
        let mut child = match Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
        {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(OcrError::EngineNotFound { command: argv[0].clone(), bbox });
            }
            Err(e) => return Err(io(e)),
        };

        // Drain pipes on helper threads so a chatty engine cannot block on a
        // full pipe while we wait for it.
        let mut stdout = child.stdout.take().expect("piped");
        let mut stderr = child.stderr.take().expect("piped");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let status = match child.wait_timeout(self.config.timeout).map_err(io)? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(OcrError::EngineTimeout { timeout: self.config.timeout, bbox });
            }
        };
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(OcrError::EngineFailure {
                status: status.to_string(),
                stderr: String::from_utf8_lossy(&stderr).trim().to_owned(),
                bbox,
            });
        }

        let text = match read_engine_output(&output_base).map_err(io)? {
            Some(t) => t,
            None => String::from_utf8_lossy(&stdout).into_owned(),
        };
        Ok(text.trim_end().to_owned())
    }
}

fn read_engine_output(base: &Path) -> std::io::Result<Option<String>> {
    let with_ext: PathBuf = base.with_extension("txt");
    for candidate in [with_ext.as_path(), base] {
        match std::fs::read(candidate) {
            Ok(bytes) => return Ok(Some(String::from_utf8_lossy(&bytes).into_owned())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

impl Recognizer for CommandEngine {
    fn recognize(&self, segment: &Segment) -> Result<String, OcrError> {
        self.recognize_segment(&segment.crop, segment.bbox)
    }

    fn label(&self) -> &str {
        &self.config.label
    }
}

/// What to do when one segment cannot be recognized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailurePolicy {
    #[default]
    Skip,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentText {
    pub bbox: BoundingBox,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentFailure {
    pub bbox: BoundingBox,
    pub error: String,
}

/// Text recognized from one screenshot.
///
/// `text` is always the newline join of `segments`, which only holds the
/// non-empty recognitions in scan order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedText {
    pub text: String,
    pub segments: Vec<SegmentText>,
    pub banner_removed: bool,
    pub segment_count: usize,
    pub failures: Vec<SegmentFailure>,
}

impl ExtractedText {
    fn from_segments(segments: Vec<SegmentText>) -> Self {
        let text = join_segments(&segments);
        Self { text, segments, ..Default::default() }
    }

    /// Drop the status-bar line if `rules` say so, keeping the segment list
    /// consistent with `text`.
    pub fn strip_banner(mut self, rules: &BannerRules) -> Self {
        let (_, removed) = rules.strip(&self.text);
        if removed {
            let first = &mut self.segments[0].text;
            *first = match first.split_once('\n') {
                Some((_, rest)) => rest.to_owned(),
                None => String::new(),
            };
            self.segments.retain(|s| !s.text.is_empty());
            self.text = join_segments(&self.segments);
            self.banner_removed = true;
        }
        self
    }
}

fn join_segments(segments: &[SegmentText]) -> String {
    segments.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n")
}

/// Segment `img` and recognize every segment in scan order.
///
/// Under [`FailurePolicy::Skip`] a failing segment is logged, recorded in
/// `failures` and left out of the text.
pub fn extract_text(
    img: &RasterImage,
    params: &SegmentationParams,
    engine: &dyn Recognizer,
    policy: FailurePolicy,
) -> Result<ExtractedText, OcrError> {
    let segments = imaging::segment(img, params)?;
    recognize_segments(&segments, engine, policy)
}

/// Recognize already-segmented regions, joining the non-empty results.
pub fn recognize_segments(
    segments: &[Segment],
    engine: &dyn Recognizer,
    policy: FailurePolicy,
) -> Result<ExtractedText, OcrError> {
    let mut texts = Vec::new();
    let mut failures = Vec::new();
    for seg in segments {
        match engine.recognize(seg) {
            Ok(t) => {
                let t = t.trim_end();
                if !t.is_empty() {
                    texts.push(SegmentText { bbox: seg.bbox, text: t.to_owned() });
                }
            }
            Err(e) if policy == FailurePolicy::Skip => {
                log::warn!("skipping segment {}: {e}", seg.bbox);
                failures.push(SegmentFailure { bbox: seg.bbox, error: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    let mut out = ExtractedText::from_segments(texts);
    out.segment_count = segments.len();
    out.failures = failures;
    Ok(out)
}

/// Token sets that make up a phone status bar: a clock, battery
/// percentages, network labels and icon debris.
#[derive(Debug, Clone)]
pub struct BannerRules {
    clock: Regex,
    percent: Regex,
    network_tokens: Vec<String>,
}

pub const DEFAULT_NETWORK_TOKENS: &[&str] =
    &["2G", "3G", "4G", "4G+", "5G", "LTE", "LTE+", "H+", "VoLTE", "WiFi", "Wi-Fi"];

impl Default for BannerRules {
    fn default() -> Self {
        Self::new(DEFAULT_NETWORK_TOKENS.iter().copied())
    }
}

impl BannerRules {
    pub fn new<I, S>(network_tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            clock: Regex::new(r"(?i)^\d{1,2}:\d{2}(?:[ap]m)?$").expect("static regex"),
            percent: Regex::new(r"^\d{1,3}%$").expect("static regex"),
            network_tokens: network_tokens.into_iter().map(|t| t.as_ref().to_lowercase()).collect(),
        }
    }

    /// Parse a comma separated list of extra network labels.
    pub fn from_list(list: &str) -> Self {
        Self::new(list.split(',').map(str::trim).filter(|t| !t.is_empty()))
    }

    pub fn network_tokens(&self) -> &[String] {
        &self.network_tokens
    }

    /// A line is banner-shaped when it holds at least one clock and nothing
    /// but clock, AM/PM, percentage, network or pure-symbol tokens.
    pub fn is_banner_line(&self, line: &str) -> bool {
        let mut has_clock = false;
        for token in line.split_whitespace() {
            if self.clock.is_match(token) {
                has_clock = true;
            } else if !(self.percent.is_match(token)
                || token.eq_ignore_ascii_case("am")
                || token.eq_ignore_ascii_case("pm")
                || self.network_tokens.iter().any(|n| token.to_lowercase() == *n)
                || !token.chars().any(char::is_alphanumeric))
            {
                return false;
            }
        }
        has_clock
    }

    /// Remove a leading status-bar line, but only when some non-empty text
    /// follows it; a screenshot whose only text is the banner stays intact.
    pub fn strip<'a>(&self, text: &'a str) -> (std::borrow::Cow<'a, str>, bool) {
        if let Some((first, rest)) = text.split_once('\n') {
            if self.is_banner_line(first) && rest.lines().any(|l| !l.trim().is_empty()) {
                return (std::borrow::Cow::Borrowed(rest), true);
            }
        }
        (std::borrow::Cow::Borrowed(text), false)
    }
}

/// [`BannerRules::strip`] with the default token sets.
pub fn strip_banner(text: &str) -> (String, bool) {
    let (t, removed) = BannerRules::default().strip(text);
    (t.into_owned(), removed)
}
