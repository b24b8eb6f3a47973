//! Penalty scoring of viable windows and selection of the perch.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drone::DroneSpec;
use crate::geom::{math_y, Pixel};
use crate::mask::PixelCalibration;
use crate::mechanics::StressAssessment;
use crate::window::{ViabilityThresholds, WindowProfile};

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("angle limit must be positive")]
    AngleRange,
    #[error("width range is empty ({min} px to {max} px)")]
    WidthRange { min: f64, max: f64 },
}

/// A viable window with its penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerchCandidate {
    pub profile: WindowProfile,
    pub penalty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stress: Option<StressAssessment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerchStatus {
    Found,
    NoViableBranch,
    DegenerateTree,
}

impl PerchStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            PerchStatus::Found => 0,
            PerchStatus::NoViableBranch => 2,
            PerchStatus::DegenerateTree => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub angle: f64,
    pub width: f64,
}

/// Outcome of ranking. `ranked` is in selection order, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerchResult {
    pub status: PerchStatus,
    pub chosen: Option<PerchCandidate>,
    pub midpoint_px: Option<Pixel>,
    /// `[x, y]` in millimetres, y measured up from the bottom row.
    pub midpoint_mm: Option<[f64; 2]>,
    pub ranked: Vec<PerchCandidate>,
    pub lambdas: Lambdas,
}

impl PerchResult {
    pub fn empty(status: PerchStatus, spec: &DroneSpec) -> Self {
        Self {
            status,
            chosen: None,
            midpoint_px: None,
            midpoint_mm: None,
            ranked: vec![],
            lambdas: Lambdas {
                angle: spec.lambda_angle,
                width: spec.lambda_width,
            },
        }
    }

    /// Fills `midpoint_mm` from the pixel midpoint.
    pub fn locate(&mut self, cal: &PixelCalibration, image_height: usize) {
        self.midpoint_mm = self
            .midpoint_px
            .map(|p| [cal.px_to_mm(p.col as f64), cal.px_to_mm(math_y(p.row, image_height))]);
    }
}

/// `lambda_angle * theta / max_theta + lambda_width * |w - w_min| / (w_max - w_min)`,
/// clamped to [0, 1].
pub fn penalty(
    profile: &WindowProfile,
    thresholds: &ViabilityThresholds,
    spec: &DroneSpec,
) -> Result<f64, RankingError> {
    if !(thresholds.max_theta_deg > 0.0) {
        return Err(RankingError::AngleRange);
    }
    let (min, max) = (thresholds.spec_min_px, thresholds.spec_max_px);
    if !(max > min) {
        return Err(RankingError::WidthRange { min, max });
    }
    let angle = profile.theta_deg / thresholds.max_theta_deg;
    let width = (profile.width_avg_central_px - min).abs() / (max - min);
    Ok((spec.lambda_angle * angle + spec.lambda_width * width).clamp(0.0, 1.0))
}

/// Selection order: penalty, then slope, then distance of the central width
/// from the lower graspable bound, then midpoint position, then branch label
/// and window start so the order is total.
pub fn compare_candidates(a: &PerchCandidate, b: &PerchCandidate, thresholds: &ViabilityThresholds) -> Ordering {
    let width_gap = |c: &PerchCandidate| (c.profile.width_avg_central_px - thresholds.spec_min_px).abs();
    a.penalty
        .total_cmp(&b.penalty)
        .then(a.profile.theta_deg.total_cmp(&b.profile.theta_deg))
        .then(width_gap(a).total_cmp(&width_gap(b)))
        .then(a.profile.midpoint.cmp(&b.profile.midpoint))
        .then(a.profile.branch_label.cmp(&b.profile.branch_label))
        .then(a.profile.start_index.cmp(&b.profile.start_index))
}

/// Scores viable profiles and sorts them best first.
pub fn rank_candidates(
    viable: Vec<WindowProfile>,
    thresholds: &ViabilityThresholds,
    spec: &DroneSpec,
) -> Result<Vec<PerchCandidate>, RankingError> {
    let mut out = viable
        .into_iter()
        .map(|profile| {
            Ok(PerchCandidate {
                penalty: penalty(&profile, thresholds, spec)?,
                profile,
                stress: None,
            })
        })
        .collect::<Result<Vec<_>, RankingError>>()?;
    out.sort_by(|a, b| compare_candidates(a, b, thresholds));
    Ok(out)
}

/// Picks the best candidate; an empty list means no viable branch.
pub fn select_perch(
    mut candidates: Vec<PerchCandidate>,
    thresholds: &ViabilityThresholds,
    spec: &DroneSpec,
) -> PerchResult {
    if candidates.is_empty() {
        return PerchResult::empty(PerchStatus::NoViableBranch, spec);
    }
    candidates.sort_by(|a, b| compare_candidates(a, b, thresholds));
    let chosen = candidates[0].clone();
    PerchResult {
        status: PerchStatus::Found,
        midpoint_px: Some(chosen.profile.midpoint),
        chosen: Some(chosen),
        midpoint_mm: None,
        ranked: candidates,
        lambdas: Lambdas {
            angle: spec.lambda_angle,
            width: spec.lambda_width,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thresholds() -> ViabilityThresholds {
        ViabilityThresholds {
            max_theta_deg: 30.0,
            max_abs_curvature_per_px: 0.05,
            spec_min_px: 6.0,
            spec_max_px: 22.0,
            smoothing_window_px: 5,
        }
    }

    fn profile(theta: f64, width: f64, mid: (usize, usize)) -> WindowProfile {
        WindowProfile {
            branch_label: 1,
            start_index: 0,
            end_index: 14,
            midpoint: mid.into(),
            theta_deg: theta,
            curvature: vec![],
            max_abs_curvature: 0.0,
            width_min_px: width,
            width_max_px: width,
            width_avg_central_px: width,
            monotonic: true,
        }
    }

    fn candidate(p: f64, theta: f64) -> PerchCandidate {
        PerchCandidate {
            profile: profile(theta, 10.0, (0, 0)),
            penalty: p,
            stress: None,
        }
    }

    #[test]
    fn penalty_examples() {
        let t = thresholds();
        let spec = DroneSpec::default();
        assert_eq!(penalty(&profile(0.0, 6.0, (0, 0)), &t, &spec).unwrap(), 0.0);
        let full = penalty(&profile(30.0, 22.0, (0, 0)), &t, &spec).unwrap();
        assert!((full - 1.0).abs() < 1e-15);
        let half = penalty(&profile(15.0, 6.0, (0, 0)), &t, &spec).unwrap();
        assert!((half - 0.4).abs() < 1e-15);
        let flat = ViabilityThresholds {
            spec_max_px: 6.0,
            ..t
        };
        assert!(matches!(penalty(&profile(0.0, 6.0, (0, 0)), &flat, &spec), Err(RankingError::WidthRange { .. })));
    }

    #[test]
    fn selection_examples() {
        let t = thresholds();
        let spec = DroneSpec::default();
        let r = select_perch(vec![], &t, &spec);
        assert_eq!(r.status, PerchStatus::NoViableBranch);
        assert_eq!(r.status.exit_code(), 2);
        assert!(r.chosen.is_none());

        let r = select_perch(vec![candidate(0.4, 1.0), candidate(0.1, 2.0), candidate(0.7, 3.0)], &t, &spec);
        assert_eq!(r.chosen.unwrap().penalty, 0.1);

        let r = select_perch(vec![candidate(0.2, 10.0), candidate(0.2, 5.0)], &t, &spec);
        assert_eq!(r.chosen.as_ref().unwrap().profile.theta_deg, 5.0);
        assert_eq!(r.ranked.len(), 2);
    }

    #[test]
    fn ties_fall_through_to_position() {
        let t = thresholds();
        let spec = DroneSpec::default();
        let a = PerchCandidate {
            profile: profile(5.0, 10.0, (9, 9)),
            penalty: 0.2,
            stress: None,
        };
        let b = PerchCandidate {
            profile: profile(5.0, 10.0, (3, 40)),
            penalty: 0.2,
            stress: None,
        };
        let r = select_perch(vec![a, b], &t, &spec);
        assert_eq!(r.midpoint_px, Some(Pixel::new(3, 40)));
    }

    #[test]
    fn midpoint_in_millimetres() {
        let t = thresholds();
        let spec = DroneSpec::default();
        let mut r = select_perch(
            vec![PerchCandidate {
                profile: profile(0.0, 6.0, (90, 20)),
                penalty: 0.0,
                stress: None,
            }],
            &t,
            &spec,
        );
        r.locate(&PixelCalibration::explicit(10.0).unwrap(), 100);
        assert_eq!(r.midpoint_mm, Some([200.0, 90.0]));
    }
}
