//! Sliding-window profiling of branches: slope, curvature, width and
//! monotonicity per window, and the viability filter over those profiles.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branch::Branch;
use crate::drone::DroneSpec;
use crate::geom::{moving_average, Pixel};
use crate::mask::PixelCalibration;

/// Calibration at which [`DEFAULT_MAX_CURVATURE`] and
/// [`DEFAULT_SMOOTHING_PX`] apply.
pub const REFERENCE_MM_PER_PX: f64 = 10.0;
/// Curvature limit in 1/px at [`REFERENCE_MM_PER_PX`]. A single one-pixel
/// jog in a rasterized straight line smooths to about 0.086 over 5 pixels,
/// so the limit has to sit above that.
pub const DEFAULT_MAX_CURVATURE: f64 = 0.1;
pub const DEFAULT_MAX_THETA_DEG: f64 = 30.0;
/// Smoothing window in pixels at [`REFERENCE_MM_PER_PX`].
pub const DEFAULT_SMOOTHING_PX: usize = 5;
pub const MIN_WINDOW_PX: usize = 5;

const MONOTONIC_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("window endpoints coincide")]
    CoincidentEndpoints,
    #[error("curvature needs at least 5 points (got {0})")]
    TooShort(usize),
    #[error("no widths in window")]
    EmptyWidths,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(&'static str),
}

/// Limits a window must meet to be a perch candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViabilityThresholds {
    pub max_theta_deg: f64,
    pub max_abs_curvature_per_px: f64,
    pub spec_min_px: f64,
    pub spec_max_px: f64,
    pub smoothing_window_px: usize,
}

impl ViabilityThresholds {
    /// Defaults for a drone at a given calibration. The curvature limit and
    /// the smoothing length are fixed in physical terms: a bend of radius
    /// `1 / DEFAULT_MAX_CURVATURE` pixels at the reference scale covers fewer
    /// pixels when each pixel spans more millimetres, and the smoothing
    /// window keeps its length in millimetres so pixel-level jogs are damped
    /// as much as the limit tightens.
    pub fn new(spec: &DroneSpec, cal: &PixelCalibration) -> Self {
        let (spec_min_px, spec_max_px) = spec.width_range_px(cal);
        Self {
            max_theta_deg: DEFAULT_MAX_THETA_DEG,
            max_abs_curvature_per_px: DEFAULT_MAX_CURVATURE * cal.mm_per_px / REFERENCE_MM_PER_PX,
            spec_min_px,
            spec_max_px,
            smoothing_window_px: smoothing_for(cal),
        }
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if !(self.max_theta_deg > 0.0) {
            return Err(WindowError::InvalidThresholds("max_theta_deg must be positive"));
        }
        if !(self.max_abs_curvature_per_px > 0.0) {
            return Err(WindowError::InvalidThresholds("curvature limit must be positive"));
        }
        if !(self.spec_min_px > 0.0 && self.spec_min_px < self.spec_max_px) {
            return Err(WindowError::InvalidThresholds("width range must satisfy 0 < min < max"));
        }
        if self.smoothing_window_px < 3 || self.smoothing_window_px.is_multiple_of(2) {
            return Err(WindowError::InvalidThresholds("smoothing window must be odd and at least 3"));
        }
        Ok(())
    }
}

/// Odd smoothing window, at least 3, spanning the same length in millimetres
/// as [`DEFAULT_SMOOTHING_PX`] does at the reference calibration.
pub fn smoothing_for(cal: &PixelCalibration) -> usize {
    let px = (DEFAULT_SMOOTHING_PX as f64 * REFERENCE_MM_PER_PX / cal.mm_per_px).round() as usize;
    (px | 1).max(3)
}

/// Window geometry in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_px: usize,
    pub stride_px: usize,
    /// Length of the central stretch whose mean width is scored.
    pub central_px: usize,
}

impl WindowConfig {
    /// The window spans the drone, the central stretch the claw; the stride
    /// is a quarter window.
    pub fn new(spec: &DroneSpec, cal: &PixelCalibration) -> Self {
        let window_px = (spec.drone_width_px(cal).round() as usize).max(MIN_WINDOW_PX);
        let claw = spec.claw_width_px(cal).round() as usize;
        Self {
            window_px,
            stride_px: (window_px / 4).max(1),
            central_px: claw.clamp(1, window_px),
        }
    }
}

/// Profile of one window of one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowProfile {
    pub branch_label: u32,
    pub start_index: usize,
    pub end_index: usize,
    pub midpoint: Pixel,
    pub theta_deg: f64,
    #[serde(skip)]
    pub curvature: Vec<f64>,
    pub max_abs_curvature: f64,
    pub width_min_px: f64,
    pub width_max_px: f64,
    pub width_avg_central_px: f64,
    pub monotonic: bool,
}

/// Per-criterion outcome of the viability filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub angle: bool,
    pub curvature: bool,
    pub width: bool,
    pub monotonic: bool,
}

impl Verdict {
    pub fn passes(&self) -> bool {
        self.angle && self.curvature && self.width && self.monotonic
    }
}

/// Index ranges of full windows starting at 0, stride, 2 * stride, ...
pub fn slide_windows(branch: &Branch, window_px: usize, stride_px: usize) -> Vec<Range<usize>> {
    window_ranges(branch.length_px(), window_px, stride_px)
}

pub fn window_ranges(length: usize, window_px: usize, stride_px: usize) -> Vec<Range<usize>> {
    let stride = stride_px.max(1);
    if window_px == 0 || length < window_px {
        return vec![];
    }
    (0..=length - window_px).step_by(stride).map(|s| s..s + window_px).collect()
}

/// Unsigned slope of the chord between the first and last pixel, in degrees
/// from horizontal, folded into [0, 90].
pub fn window_angle(pixels: &[Pixel]) -> Result<f64, WindowError> {
    let (Some(a), Some(b)) = (pixels.first(), pixels.last()) else {
        return Err(WindowError::CoincidentEndpoints);
    };
    if a == b {
        return Err(WindowError::CoincidentEndpoints);
    }
    // |atan2(dy, dx)| folded into [0, 90] is atan2(|dy|, |dx|); the y flip
    // between rows and the maths convention drops out under the absolute value
    let dy = a.row.abs_diff(b.row) as f64;
    let dx = a.col.abs_diff(b.col) as f64;
    Ok(dy.atan2(dx).to_degrees())
}

/// Finite-difference derivative matching the usual gradient convention:
/// central differences inside, one-sided at the two ends.
fn gradient(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| match i {
            0 => v[1] - v[0],
            i if i == n - 1 => v[n - 1] - v[n - 2],
            i => (v[i + 1] - v[i - 1]) / 2.0,
        })
        .collect()
}

/// Smoothed signed curvature of a sampled plane curve `(x, y)` with y up.
pub fn curvature_of_points(points: &[(f64, f64)], smoothing_window_px: usize) -> Result<Vec<f64>, WindowError> {
    if points.len() < 5 {
        return Err(WindowError::TooShort(points.len()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (dx, dy) = (gradient(&xs), gradient(&ys));
    let (ddx, ddy) = (gradient(&dx), gradient(&dy));
    let kappa: Vec<f64> = (0..points.len())
        .map(|i| {
            let speed2 = dx[i] * dx[i] + dy[i] * dy[i];
            if speed2 == 0.0 {
                0.0
            } else {
                (dx[i] * ddy[i] - dy[i] * ddx[i]) / speed2.powf(1.5)
            }
        })
        .collect();
    Ok(moving_average(&kappa, smoothing_window_px))
}

fn pixel_points(pixels: &[Pixel]) -> Vec<(f64, f64)> {
    pixels.iter().map(|p| (p.col as f64, -(p.row as f64))).collect()
}

/// Smoothed curvature along a pixel run and its largest magnitude.
pub fn window_curvature(pixels: &[Pixel], smoothing_window_px: usize) -> Result<(Vec<f64>, f64), WindowError> {
    let k = curvature_of_points(&pixel_points(pixels), smoothing_window_px)?;
    let max = max_abs(&k);
    Ok((k, max))
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `(min, max, mean over the centred stretch of length min(claw, n))`.
pub fn window_width_stats(widths: &[f64], claw_width_px: usize) -> Result<(f64, f64, f64), WindowError> {
    if widths.is_empty() {
        return Err(WindowError::EmptyWidths);
    }
    let n = widths.len();
    let m = claw_width_px.clamp(1, n);
    let start = (n - m) / 2;
    let central = &widths[start..start + m];
    let min = widths.iter().copied().fold(f64::INFINITY, f64::min);
    let max = widths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg = (central.iter().sum::<f64>() / m as f64).clamp(min, max);
    Ok((min, max, avg))
}

/// False when the smoothed vertical steps change sign along the run.
pub fn monotonicity_check(pixels: &[Pixel], smoothing_window_px: usize) -> bool {
    let steps: Vec<f64> = pixels.windows(2).map(|w| w[0].row as f64 - w[1].row as f64).collect();
    let smoothed = moving_average(&steps, smoothing_window_px);
    let rising = smoothed.iter().any(|&d| d > MONOTONIC_EPS);
    let falling = smoothed.iter().any(|&d| d < -MONOTONIC_EPS);
    !(rising && falling)
}

/// Profiles every window of a branch. Curvature is taken along the whole
/// branch and sliced per window so window edges do not see one-sided
/// differences.
pub fn profile_branch(branch: &Branch, config: &WindowConfig, smoothing_window_px: usize) -> Vec<WindowProfile> {
    let ranges = slide_windows(branch, config.window_px, config.stride_px);
    if ranges.is_empty() {
        return vec![];
    }
    let whole = curvature_of_points(&pixel_points(&branch.pixels), smoothing_window_px).ok();
    ranges
        .into_iter()
        .filter_map(|r| {
            let pixels = &branch.pixels[r.clone()];
            let theta_deg = window_angle(pixels).ok()?;
            let curvature = match &whole {
                Some(k) => k[r.clone()].to_vec(),
                None => window_curvature(pixels, smoothing_window_px).ok()?.0,
            };
            let (width_min_px, width_max_px, width_avg_central_px) =
                window_width_stats(&branch.widths_px[r.clone()], config.central_px).ok()?;
            Some(WindowProfile {
                branch_label: branch.label,
                start_index: r.start,
                end_index: r.end - 1,
                midpoint: pixels[pixels.len() / 2],
                theta_deg,
                max_abs_curvature: max_abs(&curvature),
                curvature,
                width_min_px,
                width_max_px,
                width_avg_central_px,
                monotonic: monotonicity_check(pixels, smoothing_window_px),
            })
        })
        .collect()
}

pub fn assess(profile: &WindowProfile, t: &ViabilityThresholds) -> Verdict {
    Verdict {
        angle: profile.theta_deg <= t.max_theta_deg,
        curvature: profile.max_abs_curvature <= t.max_abs_curvature_per_px,
        width: (t.spec_min_px..=t.spec_max_px).contains(&profile.width_avg_central_px),
        monotonic: profile.monotonic,
    }
}

/// Keeps the profiles that pass every criterion.
pub fn viability_filter(profiles: &[WindowProfile], thresholds: &ViabilityThresholds) -> Vec<WindowProfile> {
    profiles.iter().filter(|p| assess(p, thresholds).passes()).cloned().collect()
}
