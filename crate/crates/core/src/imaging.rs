//! Screenshot pre-processing: grayscale conversion, Otsu inverse binarization,
//! dilation and connected-component segmentation into text-candidate boxes.
//!
//! Every function here is pure; callers are free to run one pipeline per
//! image on as many threads as they like.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImagingError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("binary image pixel at offset {offset} is {value}, expected 0 or 255")]
    NotBinary { offset: usize, value: u8 },
    #[error("segmentation kernel must be at least 1x1, got {width}x{height}")]
    InvalidKernel { width: u32, height: u32 },
    #[error("failed to decode image: {0}")]
    Decode(String),
}

fn check_dims(width: u32, height: u32, channels: usize, len: usize) -> Result<(), ImagingError> {
    if width == 0 || height == 0 {
        return Err(ImagingError::EmptyImage { width, height });
    }
    let expected = width as usize * height as usize * channels;
    if expected != len {
        return Err(ImagingError::BufferLength { expected, actual: len });
    }
    Ok(())
}

/// Row-major RGB8 image as handed over by the decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        check_dims(width, height, 3, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    /// Image filled with one colour.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        let n = width as usize * height as usize;
        Self::new(width, height, rgb.iter().copied().cycle().take(n * 3).collect())
    }

    /// Decode PNG or JPEG bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self, ImagingError> {
        let img = image::load_from_memory(bytes).map_err(|e| ImagingError::Decode(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w, h, rgb.into_raw())
    }

    pub fn open(path: &std::path::Path) -> Result<Self, ImagingError> {
        let bytes = std::fs::read(path).map_err(|e| ImagingError::Decode(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Row-major 8-bit intensities, 0 is black and 255 is white.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        check_dims(width, height, 1, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Copy out the region covered by `bbox`. The box must lie inside the image.
    pub fn crop(&self, bbox: &BoundingBox) -> GrayImage {
        debug_assert!(bbox.right() <= self.width && bbox.bottom() <= self.height);
        let mut pixels = Vec::with_capacity(bbox.area() as usize);
        for row in bbox.y..bbox.bottom() {
            let start = row as usize * self.width as usize + bbox.x as usize;
            pixels.extend_from_slice(&self.pixels[start..start + bbox.w as usize]);
        }
        GrayImage { width: bbox.w, height: bbox.h, pixels }
    }

    /// Encode as an 8-bit grayscale PNG.
    pub fn to_png(&self) -> Result<Vec<u8>, image::ImageError> {
        let mut out = std::io::Cursor::new(Vec::new());
        image::GrayImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction")
            .write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    fn is_uniform(&self) -> bool {
        self.pixels.windows(2).all(|w| w[0] == w[1])
    }
}

/// Two-level image; 255 marks foreground (candidate text), 0 background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl BinaryImage {
    pub const FOREGROUND: u8 = 255;
    pub const BACKGROUND: u8 = 0;

    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        check_dims(width, height, 1, pixels.len())?;
        if let Some((offset, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, &v)| v != Self::FOREGROUND && v != Self::BACKGROUND)
        {
            return Err(ImagingError::NotBinary { offset, value });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_mask(width: u32, height: u32, mask: &[bool]) -> Result<Self, ImagingError> {
        Self::new(
            width,
            height,
            mask.iter().map(|&m| if m { Self::FOREGROUND } else { Self::BACKGROUND }).collect(),
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn is_foreground(&self, x: u32, y: u32) -> bool {
        self.pixels[y as usize * self.width as usize + x as usize] == Self::FOREGROUND
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == Self::FOREGROUND).count()
    }
}

/// Axis-aligned rectangle in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// True when `other` lies inside `self`, edges included.
    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x <= other.x
            && self.y <= other.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}+{}+{}", self.w, self.h, self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub kernel_width: u32,
    pub kernel_height: u32,
    pub iterations: u32,
    pub min_area: u64,
    pub min_width: u32,
    pub min_height: u32,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            kernel_width: 3,
            kernel_height: 3,
            iterations: 2,
            min_area: 64,
            min_width: 8,
            min_height: 8,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.kernel_width == 0 || self.kernel_height == 0 {
            return Err(ImagingError::InvalidKernel {
                width: self.kernel_width,
                height: self.kernel_height,
            });
        }
        Ok(())
    }

    /// No size filtering at all; handy when only containment matters.
    pub fn without_size_filter(mut self) -> Self {
        self.min_area = 0;
        self.min_width = 0;
        self.min_height = 0;
        self
    }
}

/// BT.601 luma with round-half-up, done in integer arithmetic so that exact
/// .5 cases round deterministically.
pub fn to_grayscale(img: &RasterImage) -> GrayImage {
    let pixels = img
        .pixels
        .chunks_exact(3)
        .map(|p| {
            let weighted = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
            ((weighted + 500) / 1000).min(255) as u8
        })
        .collect();
    GrayImage { width: img.width, height: img.height, pixels }
}

// 128-bit by 64-bit widening product, returned as (high, low) u128 halves.
fn widening_mul(a: u128, b: u64) -> (u128, u128) {
    let lo_part = (a as u64 as u128) * b as u128;
    let hi_part = (a >> 64) * b as u128;
    let (low, carry) = lo_part.overflowing_add(hi_part << 64);
    ((hi_part >> 64) + carry as u128, low)
}

/// Global Otsu threshold. Class 0 holds pixels `<= t`, class 1 pixels `> t`.
///
/// Between-class variance is compared exactly: for a split with `w0`/`w1`
/// pixels and intensity sums `s0`/`s1` it is proportional to
/// `(w1*s0 - w0*s1)^2 / (w0*w1)`, and two candidates are ordered by
/// cross-multiplying those fractions in wide integer arithmetic. The smallest
/// maximizing threshold wins. A single-intensity image returns that intensity.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let total: u64 = img.pixels.len() as u64;
    let total_sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    // (numerator, denominator, threshold) of the best split so far.
    let mut best: Option<(u128, u64, u8)> = None;
    let (mut w0, mut s0) = (0u64, 0u64);
    for (t, &count) in hist.iter().enumerate() {
        w0 += count;
        s0 += t as u64 * count;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        let diff = (w1 as i128 * s0 as i128 - w0 as i128 * s1 as i128).unsigned_abs();
        let num = diff * diff;
        let den = w0 * w1;
        let better = match best {
            None => true,
            Some((bn, bd, _)) => widening_mul(num, bd) > widening_mul(bn, den),
        };
        if better {
            best = Some((num, den, t as u8));
        }
    }
    match best {
        Some((_, _, t)) => t,
        // only one occupied intensity
        None => img.pixels[0],
    }
}

/// Pixels at or below `threshold` become foreground.
pub fn binarize_inverse(img: &GrayImage, threshold: u8) -> BinaryImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&p| if p <= threshold { BinaryImage::FOREGROUND } else { BinaryImage::BACKGROUND })
        .collect();
    BinaryImage { width: img.width, height: img.height, pixels }
}

// One pass of a 1-D max filter of length `len` with anchor `len / 2`.
fn dilate_line(line: &[bool], len: usize, out: &mut [bool]) {
    let n = line.len();
    let anchor = len / 2;
    // prefix counts of foreground, so each window query is O(1)
    let mut prefix = vec![0u32; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + line[i] as u32;
    }
    for (i, o) in out.iter_mut().enumerate() {
        // output i sees inputs i - anchor ..= i - anchor + len - 1
        let lo = i.saturating_sub(anchor);
        let hi = (i + len - anchor).min(n);
        *o = lo < hi && prefix[hi] - prefix[lo] > 0;
    }
}

/// Binary dilation with a filled `kernel_width x kernel_height` rectangle
/// anchored at its centre, repeated `iterations` times. Out-of-image pixels
/// count as background.
pub fn dilate(img: &BinaryImage, params: &SegmentationParams) -> Result<BinaryImage, ImagingError> {
    params.validate()?;
    let (w, h) = (img.width as usize, img.height as usize);
    let mut mask: Vec<bool> = img.pixels.iter().map(|&p| p == BinaryImage::FOREGROUND).collect();
    let mut scratch = vec![false; w.max(h)];
    let mut column = vec![false; h];
    for _ in 0..params.iterations {
        // rectangular kernels are separable: rows first, then columns
        for row in mask.chunks_exact_mut(w) {
            dilate_line(row, params.kernel_width as usize, &mut scratch[..w]);
            row.copy_from_slice(&scratch[..w]);
        }
        for x in 0..w {
            for y in 0..h {
                column[y] = mask[y * w + x];
            }
            dilate_line(&column, params.kernel_height as usize, &mut scratch[..h]);
            for y in 0..h {
                mask[y * w + x] = scratch[y];
            }
        }
    }
    Ok(BinaryImage::from_mask(img.width, img.height, &mask).expect("dimensions unchanged"))
}

fn find_root(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find_root(parent, a), find_root(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Tight bounding box of every 8-connected foreground component.
///
/// Two-pass raster labelling with union-find. Output order follows the first
/// pixel of each component in raster order, but callers should not rely on it.
pub fn connected_components(img: &BinaryImage) -> Vec<BoundingBox> {
    let (w, h) = (img.width as usize, img.height as usize);
    const NONE: u32 = u32::MAX;
    let mut labels = vec![NONE; w * h];
    let mut parent: Vec<u32> = Vec::new();

    for y in 0..h {
        for x in 0..w {
            if img.pixels[y * w + x] != BinaryImage::FOREGROUND {
                continue;
            }
            // already-visited 8-neighbours: W, NW, N, NE
            let mut neighbours = [NONE; 4];
            if x > 0 {
                neighbours[0] = labels[y * w + x - 1];
            }
            if y > 0 {
                let up = (y - 1) * w;
                if x > 0 {
                    neighbours[1] = labels[up + x - 1];
                }
                neighbours[2] = labels[up + x];
                if x + 1 < w {
                    neighbours[3] = labels[up + x + 1];
                }
            }
            let label = match neighbours.iter().copied().filter(|&l| l != NONE).min() {
                Some(min) => {
                    for &l in neighbours.iter().filter(|&&l| l != NONE) {
                        union(&mut parent, min, l);
                    }
                    min
                }
                None => {
                    let l = parent.len() as u32;
                    parent.push(l);
                    l
                }
            };
            labels[y * w + x] = label;
        }
    }

    // root -> index into boxes, in order of first appearance
    let mut slot = vec![NONE; parent.len()];
    let mut extents: Vec<(u32, u32, u32, u32)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == NONE {
                continue;
            }
            let root = find_root(&mut parent, l) as usize;
            let (x, y) = (x as u32, y as u32);
            if slot[root] == NONE {
                slot[root] = extents.len() as u32;
                extents.push((x, y, x, y));
            } else {
                let e = &mut extents[slot[root] as usize];
                e.0 = e.0.min(x);
                e.1 = e.1.min(y);
                e.2 = e.2.max(x);
                e.3 = e.3.max(y);
            }
        }
    }
    extents
        .into_iter()
        .map(|(x0, y0, x1, y1)| BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
        .collect()
}

/// Drop boxes under the size minima, then drop every box enclosed by another
/// surviving box. Of two identical boxes the earlier one is kept. Partial
/// overlaps survive.
pub fn filter_innermost(boxes: &[BoundingBox], params: &SegmentationParams) -> Vec<BoundingBox> {
    let sized: Vec<BoundingBox> = boxes
        .iter()
        .copied()
        .filter(|b| b.area() >= params.min_area && b.w >= params.min_width && b.h >= params.min_height)
        .collect();
    // Containment is transitive, so a box enclosed by a removed box is also
    // enclosed by whatever removed that one; a single pass suffices.
    sized
        .iter()
        .enumerate()
        .filter(|&(i, b)| {
            !sized.iter().enumerate().any(|(j, other)| {
                j != i && other.contains(b) && (other != b || j < i)
            })
        })
        .map(|(_, b)| *b)
        .collect()
}

/// Top-to-bottom, left-to-right reading order. Stable.
pub fn scan_order(boxes: &[BoundingBox]) -> Vec<BoundingBox> {
    let mut sorted = boxes.to_vec();
    sorted.sort_by_key(|b| (b.y, b.x, b.w, b.h));
    sorted
}

/// A text-candidate region and its grayscale pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub bbox: BoundingBox,
    pub crop: GrayImage,
}

/// Full pre-processing chain for one screenshot.
///
/// A single-intensity image has no foreground/background split to work
/// with and yields no segments.
pub fn segment(img: &RasterImage, params: &SegmentationParams) -> Result<Vec<Segment>, ImagingError> {
    params.validate()?;
    let gray = to_grayscale(img);
    if gray.is_uniform() {
        return Ok(Vec::new());
    }
    let threshold = otsu_threshold(&gray);
    let binary = binarize_inverse(&gray, threshold);
    let dilated = dilate(&binary, params)?;
    let boxes = connected_components(&dilated);
    let kept = filter_innermost(&boxes, params);
    Ok(scan_order(&kept)
        .into_iter()
        .map(|bbox| Segment { crop: gray.crop(&bbox), bbox })
        .collect())
}
