//! Versioned JSON report of a pipeline run.

use serde::Serialize;

use crate::graph::PruneReport;
use crate::mask::{CalibrationMethod, PixelCalibration};
use crate::mechanics::StressAssessment;
use crate::pipeline::{PipelineOutput, StageTimings};
use crate::ranking::{Lambdas, PerchCandidate, PerchStatus};
use crate::window::{Verdict, ViabilityThresholds, WindowConfig, WindowProfile};

pub const SCHEMA: &str = "pli-report/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub mm_per_px: f64,
    pub method: CalibrationMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumed_tree_height_m: Option<f64>,
}

impl From<&PixelCalibration> for CalibrationReport {
    fn from(c: &PixelCalibration) -> Self {
        Self {
            mm_per_px: c.mm_per_px,
            method: c.method,
            assumed_tree_height_m: c.assumed_tree_height_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateReport {
    pub rank: usize,
    pub branch_label: u32,
    pub start_index: usize,
    pub end_index: usize,
    pub midpoint_px: [usize; 2],
    pub theta_deg: f64,
    pub max_abs_curvature: f64,
    pub width_min_px: f64,
    pub width_max_px: f64,
    pub width_avg_central_px: f64,
    pub width_avg_mm: f64,
    pub penalty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stress: Option<StressAssessment>,
}

impl CandidateReport {
    fn new(rank: usize, c: &PerchCandidate, cal: &PixelCalibration) -> Self {
        let p = &c.profile;
        Self {
            rank,
            branch_label: p.branch_label,
            start_index: p.start_index,
            end_index: p.end_index,
            midpoint_px: [p.midpoint.row, p.midpoint.col],
            theta_deg: p.theta_deg,
            max_abs_curvature: p.max_abs_curvature,
            width_min_px: p.width_min_px,
            width_max_px: p.width_max_px,
            width_avg_central_px: p.width_avg_central_px,
            width_avg_mm: cal.px_to_mm(p.width_avg_central_px),
            penalty: c.penalty,
            stress: c.stress,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    #[serde(flatten)]
    pub profile: WindowProfile,
    pub verdict: Verdict,
    pub viable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub status: PerchStatus,
    pub exit_code: i32,
    pub midpoint_px: Option<[usize; 2]>,
    pub midpoint_mm: Option<[f64; 2]>,
    pub penalty: Option<f64>,
    pub theta_deg: Option<f64>,
    pub width_avg_mm: Option<f64>,
    pub lambdas: Lambdas,
    pub calibration: CalibrationReport,
    pub window: WindowConfig,
    pub thresholds: ViabilityThresholds,
    pub skip_prune: bool,
    pub prune: Option<PruneReport>,
    pub candidates: Vec<CandidateReport>,
    /// Every profiled window with its verdict; only in verbose reports.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<WindowReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

impl Report {
    pub fn new(out: &PipelineOutput, skip_prune: bool, verbose: bool) -> Self {
        let r = &out.result;
        let cal = &out.calibration;
        let chosen = r.chosen.as_ref();
        Self {
            schema: SCHEMA,
            status: r.status,
            exit_code: r.status.exit_code(),
            midpoint_px: r.midpoint_px.map(|p| [p.row, p.col]),
            midpoint_mm: r.midpoint_mm,
            penalty: chosen.map(|c| c.penalty),
            theta_deg: chosen.map(|c| c.profile.theta_deg),
            width_avg_mm: chosen.map(|c| cal.px_to_mm(c.profile.width_avg_central_px)),
            lambdas: r.lambdas,
            calibration: cal.into(),
            window: out.window,
            thresholds: out.thresholds,
            skip_prune,
            prune: out.prune,
            candidates: r
                .ranked
                .iter()
                .enumerate()
                .map(|(i, c)| CandidateReport::new(i + 1, c, cal))
                .collect(),
            windows: verbose.then(|| {
                out.windows
                    .iter()
                    .map(|w| WindowReport {
                        profile: w.profile.clone(),
                        verdict: w.verdict,
                        viable: w.verdict.passes(),
                    })
                    .collect()
            }),
            timings: Some(out.timings),
        }
    }

    /// The same report with the timings block removed; identical inputs give
    /// identical output.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
