//! Cantilever bending stress of a branch carrying a perched drone.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRAVITY: f64 = 9.81;
/// Weakest modulus of rupture among common urban species, MPa.
pub const DEFAULT_MOR_MPA: f64 = 27.0;
pub const DEFAULT_SAFETY_FACTOR: f64 = 2.0;
pub const DEFAULT_LEVER_M: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum MechanicsError {
    #[error("branch radius must be positive (got {0} m)")]
    Radius(f64),
    #[error("lever arm must be non-negative (got {0} m)")]
    Lever(f64),
    #[error("mass must be non-negative (got {0} kg)")]
    Mass(f64),
}

/// A point load at the end of a solid circular cantilever.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub force_n: f64,
    pub lever_m: f64,
    pub radius_m: f64,
    pub moment_nm: f64,
    pub second_moment_m4: f64,
    pub sigma_max_pa: f64,
}

impl LoadCase {
    pub fn new(mass_kg: f64, lever_m: f64, radius_m: f64) -> Result<Self, MechanicsError> {
        if !(radius_m > 0.0) {
            return Err(MechanicsError::Radius(radius_m));
        }
        if !(lever_m >= 0.0) {
            return Err(MechanicsError::Lever(lever_m));
        }
        if !(mass_kg >= 0.0) {
            return Err(MechanicsError::Mass(mass_kg));
        }
        let force_n = mass_kg * GRAVITY;
        let moment_nm = force_n * lever_m;
        let second_moment_m4 = PI * radius_m.powi(4) / 4.0;
        Ok(Self {
            force_n,
            lever_m,
            radius_m,
            moment_nm,
            second_moment_m4,
            sigma_max_pa: 4.0 * force_n * lever_m / (PI * radius_m.powi(3)),
        })
    }
}

/// Peak bending stress in MPa: `4 m g L / (pi r^3)`.
pub fn bending_stress(mass_kg: f64, lever_m: f64, radius_m: f64) -> Result<f64, MechanicsError> {
    Ok(LoadCase::new(mass_kg, lever_m, radius_m)?.sigma_max_pa / 1e6)
}

/// True when the stress stays below the modulus of rupture divided by the
/// safety factor.
pub fn stress_check(sigma_mpa: f64, mor_mpa: f64, safety_factor: f64) -> bool {
    sigma_mpa < mor_mpa / safety_factor
}

/// Stress outcome attached to a candidate when the check is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressAssessment {
    pub sigma_mpa: f64,
    pub passes: bool,
}
