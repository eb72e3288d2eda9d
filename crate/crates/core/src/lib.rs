//! Text extraction and retrieval for screenshot collections.
//!
//! * [`imaging`] turns a screenshot into ordered text-candidate segments.
//! * [`ocr`] runs an external OCR engine over those segments.
//! * [`metrics`] scores OCR output against ground truth (CER, WER, PER).
//! * [`docmodel`] holds the document record and its XML batch format.
//! * [`index`] is the BM25 inverted index behind search.

pub mod docmodel;
pub mod imaging;
pub mod index;
pub mod metrics;
pub mod ocr;

pub use docmodel::{DocError, ScreenshotDocument};
pub use imaging::{BoundingBox, GrayImage, RasterImage, Segment, SegmentationParams};
pub use index::{Bm25Params, IndexHandle, InvertedIndex, SearchHit};
pub use metrics::{CorpusReport, EvalResult};
pub use ocr::{ExtractedText, OcrEngineConfig, Recognizer};
