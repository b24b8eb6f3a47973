//! Loading, validating, rescaling and calibrating binary tree masks.

use std::collections::VecDeque;
use std::path::Path;

use image::{DynamicImage, GrayImage, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pixel, NEIGHBOURS_CW};

/// Smallest accepted side length. The 3x3 and 4x4 kernels downstream need
/// room to operate.
pub const MIN_DIMENSION: usize = 16;

/// Tree height assumed by the whole-tree calibration when none is given.
pub const DEFAULT_TREE_HEIGHT_M: f64 = 8.0;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("unreadable mask file: {0}")]
    Unreadable(String),
    #[error("empty foreground")]
    EmptyForeground,
    #[error("mask is {width}x{height}, both sides must be at least {MIN_DIMENSION} px")]
    TooSmall { width: usize, height: usize },
    #[error("scale factor {0} outside (0, 1]")]
    InvalidScale(f64),
    #[error("raster has {got} samples, expected {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("assumed tree height must be positive, got {0} m")]
    InvalidTreeHeight(f64),
    #[error("mm per pixel must be positive, got {0}")]
    InvalidMmPerPx(f64),
    #[error("foreground bounding box has zero height")]
    ZeroBoundingBox,
}

/// A 2-D boolean raster of tree foreground, row-major, origin top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
    source_scale: ScaleBits,
}

/// `f64` stored by bit pattern so the mask stays `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ScaleBits(u64);

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, MaskError> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(MaskError::TooSmall { width, height });
        }
        if data.len() != width * height {
            return Err(MaskError::DataLength {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
            source_scale: ScaleBits(1.0f64.to_bits()),
        })
    }

    /// Builds a mask by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, MaskError> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, data)
    }

    /// Binarizes 8-bit grey samples with `value > threshold`.
    pub fn from_gray(
        width: usize,
        height: usize,
        samples: &[u8],
        threshold: u8,
    ) -> Result<Self, MaskError> {
        Self::new(width, height, samples.iter().map(|&v| v > threshold).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Scale factor that was applied when this mask was loaded.
    pub fn source_scale(&self) -> f64 {
        f64::from_bits(self.source_scale.0)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.row < self.height && p.col < self.width && self.get(p.row, p.col)
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Inclusive `(min, max)` corners of the foreground, or `None` when empty.
    pub fn foreground_bbox(&self) -> Option<(Pixel, Pixel)> {
        let mut bbox: Option<(Pixel, Pixel)> = None;
        for (i, _) in self.data.iter().enumerate().filter(|(_, &v)| v) {
            let p = Pixel::new(i / self.width, i % self.width);
            bbox = Some(match bbox {
                None => (p, p),
                Some((lo, hi)) => (
                    Pixel::new(lo.row.min(p.row), lo.col.min(p.col)),
                    Pixel::new(hi.row.max(p.row), hi.col.max(p.col)),
                ),
            });
        }
        bbox
    }

    /// Nearest-neighbour resample by `scale` in (0, 1].
    pub fn rescale(&self, scale: f64) -> Result<Self, MaskError> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(MaskError::InvalidScale(scale));
        }
        let new_w = ((self.width as f64 * scale).round() as usize).max(1);
        let new_h = ((self.height as f64 * scale).round() as usize).max(1);
        let src = |dst: usize, limit: usize| (((dst as f64 + 0.5) / scale) as usize).min(limit - 1);
        let cols: Vec<usize> = (0..new_w).map(|c| src(c, self.width)).collect();
        let mut data = Vec::with_capacity(new_w * new_h);
        for r in 0..new_h {
            let sr = src(r, self.height);
            data.extend(cols.iter().map(|&sc| self.get(sr, sc)));
        }
        let mut out = Self::new(new_w, new_h, data)?;
        out.source_scale = ScaleBits((self.source_scale() * scale).to_bits());
        Ok(out)
    }

    /// 0/255 greyscale rendering.
    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(y as usize, x as usize) { 255 } else { 0 }])
        })
    }
}

/// How raster samples become foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Grey samples strictly above this value are foreground.
    pub threshold: u8,
    /// Colour inputs: any nonzero channel marks foreground. When false,
    /// colour inputs are converted to luma and thresholded.
    pub rgb_any_nonzero: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            threshold: 127,
            rgb_any_nonzero: true,
        }
    }
}

/// Reads a PNG/PGM mask, binarizes it and resamples it by `scale`.
pub fn load_mask(path: &Path, scale: f64, options: &LoadOptions) -> Result<BinaryMask, MaskError> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(MaskError::InvalidScale(scale));
    }
    let img = image::open(path).map_err(|e| MaskError::Unreadable(format!("{}: {e}", path.display())))?;
    let mask = binarize(&img, options)?.rescale(scale)?;
    if mask.foreground_count() == 0 {
        return Err(MaskError::EmptyForeground);
    }
    Ok(mask)
}

/// Binarizes an already decoded image.
pub fn binarize(img: &DynamicImage, options: &LoadOptions) -> Result<BinaryMask, MaskError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() && options.rgb_any_nonzero {
        let rgb = img.to_rgb8();
        BinaryMask::new(w, h, rgb.pixels().map(|p| p.0.iter().any(|&c| c != 0)).collect())
    } else {
        let gray = img.to_luma8();
        BinaryMask::from_gray(w, h, gray.as_raw(), options.threshold)
    }
}

/// Labels 8-connected foreground components. Returns the per-pixel label
/// raster (0 = background) and, per label, `(size, top-left bbox corner)`.
pub(crate) fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<(usize, Pixel)>) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut stats = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        let label = stats.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        let mut corner = Pixel::new(usize::MAX, usize::MAX);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let p = Pixel::new(i / w, i % w);
            corner = Pixel::new(corner.row.min(p.row), corner.col.min(p.col));
            for &(dr, dc) in &NEIGHBOURS_CW {
                if let Some(q) = p.offset(dr, dc, h, w) {
                    let j = q.row * w + q.col;
                    if mask.data[j] && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        stats.push((size, corner));
    }
    (labels, stats)
}

/// Keeps only the largest 8-connected component. Ties go to the component
/// whose bounding box top-left corner is smallest by (row, col).
pub fn keep_largest_component(mask: &BinaryMask) -> Result<BinaryMask, MaskError> {
    let (labels, stats) = label_components(mask);
    let best = stats
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| b.0.cmp(&a.0).then(a.1.cmp(&b.1)))
        .map(|(i, _)| i as u32 + 1)
        .ok_or(MaskError::EmptyForeground)?;
    let mut out = mask.clone();
    for (v, &l) in out.data.iter_mut().zip(&labels) {
        *v = l == best;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    WholeTreeHeight,
    Explicit,
}

/// Millimetres per pixel, plus how that figure was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCalibration {
    pub mm_per_px: f64,
    pub assumed_tree_height_m: Option<f64>,
    pub method: CalibrationMethod,
}

impl PixelCalibration {
    pub fn explicit(mm_per_px: f64) -> Result<Self, MaskError> {
        if !(mm_per_px > 0.0 && mm_per_px.is_finite()) {
            return Err(MaskError::InvalidMmPerPx(mm_per_px));
        }
        Ok(Self {
            mm_per_px,
            assumed_tree_height_m: None,
            method: CalibrationMethod::Explicit,
        })
    }

    pub fn mm_to_px(&self, mm: f64) -> f64 {
        mm / self.mm_per_px
    }

    pub fn px_to_mm(&self, px: f64) -> f64 {
        px * self.mm_per_px
    }
}

/// Whole-tree calibration: the foreground bounding box is assumed to span
/// `assumed_tree_height_m`.
pub fn compute_calibration(
    mask: &BinaryMask,
    assumed_tree_height_m: f64,
) -> Result<PixelCalibration, MaskError> {
    if !(assumed_tree_height_m > 0.0 && assumed_tree_height_m.is_finite()) {
        return Err(MaskError::InvalidTreeHeight(assumed_tree_height_m));
    }
    let (lo, hi) = mask.foreground_bbox().ok_or(MaskError::EmptyForeground)?;
    let bbox_height = hi.row - lo.row + 1;
    if bbox_height == 0 {
        return Err(MaskError::ZeroBoundingBox);
    }
    Ok(PixelCalibration {
        mm_per_px: assumed_tree_height_m * 1000.0 / bbox_height as f64,
        assumed_tree_height_m: Some(assumed_tree_height_m),
        method: CalibrationMethod::WholeTreeHeight,
    })
}
