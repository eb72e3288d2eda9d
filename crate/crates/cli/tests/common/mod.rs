#![allow(dead_code)]

use std::path::{Path, PathBuf};

use screenlens::{PipelineConfig, Settings};
use screenlens_core::imaging::{BoundingBox, GrayImage, Segment};
use screenlens_core::ocr::{OcrError, Recognizer};

/// Recognizer whose output is a pure function of the segment: the box
/// geometry plus a checksum of the crop.
pub struct GeometryOcr;

impl Recognizer for GeometryOcr {
    fn recognize(&self, seg: &Segment) -> Result<String, OcrError> {
        let sum = seg.crop.pixels().iter().fold(0u32, |acc, &p| acc.wrapping_mul(31).wrapping_add(p as u32));
        let b = seg.bbox;
        Ok(format!("x{}y{}w{}h{} c{:08x}", b.x, b.y, b.w, b.h, sum))
    }

    fn label(&self) -> &str {
        "geometry"
    }
}

/// Recognizer that reads back a fixed table keyed by the drawn block each
/// segment encloses.
pub struct TableOcr(pub Vec<(BoundingBox, String)>);

impl Recognizer for TableOcr {
    fn recognize(&self, seg: &Segment) -> Result<String, OcrError> {
        Ok(self.0.iter().find(|(b, _)| seg.bbox.contains(b)).map(|(_, t)| t.clone()).unwrap_or_default())
    }

    fn label(&self) -> &str {
        "table"
    }
}

/// White canvas with black filled rectangles, encoded as PNG.
pub fn blocks_png(w: u32, h: u32, blocks: &[BoundingBox]) -> Vec<u8> {
    let mut px = vec![255u8; (w * h) as usize];
    for b in blocks {
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                px[(y * w + x) as usize] = 0;
            }
        }
    }
    GrayImage::new(w, h, px).unwrap().to_png().unwrap()
}

pub fn settings(input: &Path, output: &Path) -> Settings {
    let mut s = Settings::default();
    s.set("input", input.to_string_lossy());
    s.set("output", output.to_string_lossy());
    s.set("parallelism", "4");
    s
}

pub fn config(input: &Path, output: &Path) -> PipelineConfig {
    PipelineConfig::from_settings(&settings(input, output)).unwrap()
}

/// Write an executable shell script and return its path.
#[cfg(unix)]
pub fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

const FONT: &[(char, [u8; 7])] = &[
    ('A', [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11]),
    ('B', [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E]),
    ('C', [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E]),
    ('D', [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E]),
    ('E', [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F]),
    ('F', [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10]),
    ('G', [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F]),
    ('H', [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11]),
    ('I', [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E]),
    ('J', [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C]),
    ('K', [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11]),
    ('L', [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F]),
    ('M', [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11]),
    ('N', [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11]),
    ('O', [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E]),
    ('P', [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10]),
    ('Q', [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D]),
    ('R', [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11]),
    ('S', [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E]),
    ('T', [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04]),
    ('U', [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E]),
    ('V', [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04]),
    ('W', [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A]),
    ('X', [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11]),
    ('Y', [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04]),
    ('Z', [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F]),
];

/// Render upper-case lines in a 5x7 bitmap font, `scale` pixels per dot,
/// black on white.
pub fn render_text_png(lines: &[&str], scale: u32) -> Vec<u8> {
    let adv = 6 * scale;
    let line_h = 12 * scale;
    let margin = 8 * scale;
    let w = margin * 2 + adv * lines.iter().map(|l| l.chars().count() as u32).max().unwrap_or(0);
    let h = margin * 2 + line_h * lines.len() as u32;
    let mut px = vec![255u8; (w * h) as usize];
    for (row, line) in lines.iter().enumerate() {
        for (col, ch) in line.chars().enumerate() {
            let Some((_, glyph)) = FONT.iter().find(|(c, _)| *c == ch) else { continue };
            let (ox, oy) = (margin + col as u32 * adv, margin + row as u32 * line_h);
            for (gy, bits) in glyph.iter().enumerate() {
                for gx in 0..5u32 {
                    if bits & (0x10 >> gx) != 0 {
                        for dy in 0..scale {
                            for dx in 0..scale {
                                px[((oy + gy as u32 * scale + dy) * w + ox + gx * scale + dx) as usize] = 0;
                            }
                        }
                    }
                }
            }
        }
    }
    GrayImage::new(w, h, px).unwrap().to_png().unwrap()
}
