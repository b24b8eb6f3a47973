//! Drone and claw parameters shared by weighting, profiling and ranking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::PixelCalibration;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("claw radius range must satisfy 0 < min < max (got {min} mm, {max} mm)")]
    ClawRange { min: f64, max: f64 },
    #[error("claw width must be positive (got {0} mm)")]
    ClawWidth(f64),
    #[error("drone width must be positive (got {0} mm)")]
    DroneWidth(f64),
    #[error("drone mass must be non-negative (got {0} kg)")]
    Mass(f64),
    #[error("alpha must lie in [0, 1] (got {0})")]
    Alpha(f64),
    #[error("lambda weights must be non-negative and sum to 1 (got {angle} + {width})")]
    Lambdas { angle: f64, width: f64 },
    #[error("prune threshold must lie in [0, 1] (got {0})")]
    PruneThreshold(f64),
}

/// Physical description of the perching drone.
///
/// The claw range is read as radii: a branch is graspable when its diameter
/// lies in `[2 * claw_min_radius_mm, 2 * claw_max_radius_mm]`. Setting
/// `claw_min_radius_mm = 15` gives the 30 mm minimum-diameter reading instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneSpec {
    pub claw_min_radius_mm: f64,
    pub claw_max_radius_mm: f64,
    /// Span the claw occupies along a branch; sets the stretch over which
    /// the mean width is taken.
    pub claw_width_mm: f64,
    /// Overall width of the drone; sets the window length, i.e. the free
    /// stretch of branch needed to land.
    pub drone_width_mm: f64,
    pub drone_mass_kg: f64,
    /// Length versus width balance of the branch weight.
    pub alpha: f64,
    pub lambda_angle: f64,
    pub lambda_width: f64,
    pub prune_threshold: f64,
}

impl Default for DroneSpec {
    fn default() -> Self {
        Self {
            claw_min_radius_mm: 30.0,
            claw_max_radius_mm: 110.0,
            claw_width_mm: 150.0,
            drone_width_mm: 450.0,
            drone_mass_kg: 1.5,
            alpha: 0.6,
            lambda_angle: 0.8,
            lambda_width: 0.2,
            prune_threshold: 0.1,
        }
    }
}

impl DroneSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let (min, max) = (self.claw_min_radius_mm, self.claw_max_radius_mm);
        if !(min > 0.0 && min < max && max.is_finite()) {
            return Err(SpecError::ClawRange { min, max });
        }
        if !(self.claw_width_mm > 0.0 && self.claw_width_mm.is_finite()) {
            return Err(SpecError::ClawWidth(self.claw_width_mm));
        }
        if !(self.drone_width_mm > 0.0 && self.drone_width_mm.is_finite()) {
            return Err(SpecError::DroneWidth(self.drone_width_mm));
        }
        if !(self.drone_mass_kg >= 0.0 && self.drone_mass_kg.is_finite()) {
            return Err(SpecError::Mass(self.drone_mass_kg));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SpecError::Alpha(self.alpha));
        }
        let (angle, width) = (self.lambda_angle, self.lambda_width);
        if !(angle >= 0.0 && width >= 0.0 && (angle + width - 1.0).abs() <= 1e-9) {
            return Err(SpecError::Lambdas { angle, width });
        }
        if !(0.0..=1.0).contains(&self.prune_threshold) {
            return Err(SpecError::PruneThreshold(self.prune_threshold));
        }
        Ok(())
    }

    /// Sets `lambda_angle` and makes `lambda_width` its complement.
    pub fn with_lambda_angle(mut self, lambda_angle: f64) -> Self {
        self.lambda_angle = lambda_angle;
        self.lambda_width = 1.0 - lambda_angle;
        self
    }

    /// Graspable diameter range in pixels.
    pub fn width_range_px(&self, cal: &PixelCalibration) -> (f64, f64) {
        (
            cal.mm_to_px(2.0 * self.claw_min_radius_mm),
            cal.mm_to_px(2.0 * self.claw_max_radius_mm),
        )
    }

    pub fn claw_width_px(&self, cal: &PixelCalibration) -> f64 {
        cal.mm_to_px(self.claw_width_mm)
    }

    pub fn drone_width_px(&self, cal: &PixelCalibration) -> f64 {
        cal.mm_to_px(self.drone_width_mm)
    }
}
