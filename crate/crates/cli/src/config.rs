//! Settings from a flat `key = value` file, the environment and flags.
//!
//! Later sources win: file, then `SCREENLENS_OCR_CMD`, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use regex::Regex;
use screenlens_core::ocr::{BannerRules, OcrEngineConfig, ENGINE_ENV};
use screenlens_core::{Bm25Params, SegmentationParams};

use crate::PipelineError;

pub const DEFAULT_FILENAME_PATTERN: &str = r"^(?P<subject>[^_]+)_(?P<timestamp>\d{8}T\d{6})\.(?:png|jpe?g|PNG|JPE?G)$";

/// Every key a config file may set.
pub const KEYS: &[&str] = &[
    "input",
    "output",
    "reference",
    "index",
    "engine-cmd",
    "engine-timeout-ms",
    "no-banner-strip",
    "network-tokens",
    "parallelism",
    "filename-pattern",
    "kernel-width",
    "kernel-height",
    "iterations",
    "min-area",
    "min-width",
    "min-height",
    "k1",
    "b",
    "boost",
    "top-k",
    "addr",
    "images",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(source: &str) -> Result<Self, PipelineError> {
        let mut map = BTreeMap::new();
        for (n, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(PipelineError::Config(format!("line {}: unknown key {key:?}", n + 1)));
            }
            map.insert(key, value.trim().to_owned());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.0.insert(key.to_owned(), value.into());
    }

    /// Set `key` only when `value` is present.
    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v.to_string());
        }
    }

    pub fn apply_env(&mut self) {
        if let Ok(cmd) = std::env::var(ENGINE_ENV) {
            if !cmd.trim().is_empty() {
                self.set("engine-cmd", cmd);
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, PipelineError> {
        self.get(key).map(PathBuf::from).ok_or_else(|| PipelineError::Config(format!("missing required setting {key:?}")))
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, PipelineError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| PipelineError::Config(format!("invalid value for {key}: {v:?}"))),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool, PipelineError> {
        match self.get(key).map(str::to_ascii_lowercase).as_deref() {
            None | Some("false" | "no" | "0" | "off") => Ok(false),
            Some("true" | "yes" | "1" | "on" | "") => Ok(true),
            Some(v) => Err(PipelineError::Config(format!("invalid boolean for {key}: {v:?}"))),
        }
    }

    pub fn bm25(&self, base: Bm25Params) -> Result<Bm25Params, PipelineError> {
        let p = Bm25Params {
            k1: self.parsed("k1", base.k1)?,
            b: self.parsed("b", base.b)?,
            category_boost: self.parsed("boost", base.category_boost)?,
        };
        if !(p.k1 >= 0.0 && (0.0..=1.0).contains(&p.b) && p.category_boost >= 0.0) {
            return Err(PipelineError::Config(format!("BM25 parameters out of range: {p:?}")));
        }
        Ok(p)
    }

    /// Parameters already stored in an index, overridden only by keys set here.
    pub fn has_bm25_override(&self) -> bool {
        ["k1", "b", "boost"].iter().any(|k| self.get(k).is_some())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub segmentation: SegmentationParams,
    pub engine: OcrEngineConfig,
    pub strip_banner: bool,
    pub banner_rules: BannerRules,
    pub parallelism: usize,
    pub filename_pattern: Regex,
}

impl PipelineConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, PipelineError> {
        let d = SegmentationParams::default();
        let segmentation = SegmentationParams {
            kernel_width: s.parsed("kernel-width", d.kernel_width)?,
            kernel_height: s.parsed("kernel-height", d.kernel_height)?,
            iterations: s.parsed("iterations", d.iterations)?,
            min_area: s.parsed("min-area", d.min_area)?,
            min_width: s.parsed("min-width", d.min_width)?,
            min_height: s.parsed("min-height", d.min_height)?,
        };
        segmentation.validate().map_err(|e| PipelineError::Config(e.to_string()))?;

        let mut engine = OcrEngineConfig::tesseract();
        if let Some(cmd) = s.get("engine-cmd") {
            engine = OcrEngineConfig::new(cmd, engine.timeout, "custom").map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        engine.timeout = Duration::from_millis(s.parsed("engine-timeout-ms", engine.timeout.as_millis() as u64)?);

        let default_threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        let parallelism = s.parsed("parallelism", default_threads)?;
        let pattern = s.get("filename-pattern").unwrap_or(DEFAULT_FILENAME_PATTERN);
        let filename_pattern =
            Regex::new(pattern).map_err(|e| PipelineError::Config(format!("filename-pattern: {e}")))?;

        let banner_rules = match s.get("network-tokens") {
            Some(list) => BannerRules::from_list(list),
            None => BannerRules::default(),
        };
        let cfg = Self {
            input: s.path("input")?,
            output: s.path("output")?,
            segmentation,
            engine,
            strip_banner: !s.flag("no-banner-strip")?,
            banner_rules,
            parallelism,
            filename_pattern,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !self.input.is_dir() {
            return Err(PipelineError::Config(format!("input directory {} does not exist", self.input.display())));
        }
        if self.parallelism == 0 {
            return Err(PipelineError::Config("parallelism must be at least 1".into()));
        }
        let names: Vec<_> = self.filename_pattern.capture_names().flatten().collect();
        for required in ["subject", "timestamp"] {
            if !names.contains(&required) {
                return Err(PipelineError::Config(format!("filename-pattern lacks a (?P<{required}>...) group")));
            }
        }
        self.engine.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }
}
