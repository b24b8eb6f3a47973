//! End-to-end run: mask to perch, with per-stage wall-clock timings.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branch::{build_branches, section_branches, BranchError};
use crate::drone::{DroneSpec, SpecError};
use crate::graph::{assign_weights, build_graph, prune_graph, GraphError, PruneReport, TreeGraph, TreeStats, WeightModel};
use crate::mask::{
    compute_calibration, keep_largest_component, load_mask, BinaryMask, LoadOptions, MaskError, PixelCalibration,
    DEFAULT_TREE_HEIGHT_M,
};
use crate::mechanics::{bending_stress, stress_check, MechanicsError, StressAssessment, DEFAULT_LEVER_M, DEFAULT_MOR_MPA, DEFAULT_SAFETY_FACTOR};
use crate::morphology::{classify_pixels, medial_axis_transform, MorphologyError, Skeleton};
use crate::ranking::{rank_candidates, select_perch, PerchResult, PerchStatus, RankingError};
use crate::window::{assess, profile_branch, Verdict, ViabilityThresholds, WindowConfig, WindowError, WindowProfile};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("load: {0}")]
    Load(#[from] MaskError),
    #[error("medial axis: {0}")]
    Morphology(#[from] MorphologyError),
    #[error("order: {0}")]
    Branch(#[from] BranchError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("config: {0}")]
    Spec(#[from] SpecError),
    #[error("config: {0}")]
    Window(#[from] WindowError),
    #[error("rank: {0}")]
    Ranking(#[from] RankingError),
    #[error("stress check: {0}")]
    Mechanics(#[from] MechanicsError),
}

/// How to turn pixels into millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationChoice {
    /// The foreground bounding box spans this many metres.
    TreeHeightM(f64),
    /// Millimetres per pixel of the full-resolution mask.
    MmPerPx(f64),
}

impl Default for CalibrationChoice {
    fn default() -> Self {
        CalibrationChoice::TreeHeightM(DEFAULT_TREE_HEIGHT_M)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressOptions {
    pub lever_m: f64,
    pub mor_mpa: f64,
    pub safety_factor: f64,
}

impl Default for StressOptions {
    fn default() -> Self {
        Self {
            lever_m: DEFAULT_LEVER_M,
            mor_mpa: DEFAULT_MOR_MPA,
            safety_factor: DEFAULT_SAFETY_FACTOR,
        }
    }
}

/// Optional overrides of the defaults derived from the drone and calibration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Overrides {
    pub max_theta_deg: Option<f64>,
    /// Curvature limit in 1/px at the run's own calibration.
    pub max_abs_curvature_per_px: Option<f64>,
    pub smoothing_window_px: Option<usize>,
    pub window_px: Option<usize>,
    pub stride_px: Option<usize>,
    pub central_px: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub spec: DroneSpec,
    pub calibration: CalibrationChoice,
    pub overrides: Overrides,
    pub skip_prune: bool,
    pub stress: Option<StressOptions>,
}

/// Wall time per stage in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub scale: f64,
    pub load_ms: f64,
    pub mat_ms: f64,
    pub classify_ms: f64,
    pub section_ms: f64,
    pub order_ms: f64,
    pub graph_ms: f64,
    pub weight_ms: f64,
    pub prune_ms: f64,
    pub windows_ms: f64,
    pub rank_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn stages(&self) -> [(&'static str, f64); 10] {
        [
            ("load", self.load_ms),
            ("mat", self.mat_ms),
            ("classify", self.classify_ms),
            ("section", self.section_ms),
            ("order", self.order_ms),
            ("graph", self.graph_ms),
            ("weight", self.weight_ms),
            ("prune", self.prune_ms),
            ("windows", self.windows_ms),
            ("rank", self.rank_ms),
        ]
    }

    pub fn max_stage_ms(&self) -> f64 {
        self.stages().iter().map(|s| s.1).fold(0.0, f64::max)
    }
}

/// A profiled window together with its per-criterion verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessedWindow {
    pub profile: WindowProfile,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub result: PerchResult,
    pub timings: StageTimings,
    pub calibration: PixelCalibration,
    pub thresholds: ViabilityThresholds,
    pub window: WindowConfig,
    pub windows: Vec<AssessedWindow>,
    pub mask: BinaryMask,
    pub skeleton: Option<Skeleton>,
    pub graph: Option<TreeGraph>,
    pub prune: Option<PruneReport>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

impl PipelineConfig {
    /// Calibration for a mask loaded at `mask.source_scale()`.
    pub fn resolve_calibration(&self, mask: &BinaryMask) -> Result<PixelCalibration, MaskError> {
        match self.calibration {
            CalibrationChoice::TreeHeightM(h) => compute_calibration(mask, h),
            CalibrationChoice::MmPerPx(r) => PixelCalibration::explicit(r / mask.source_scale()),
        }
    }

    pub fn resolve_thresholds(&self, cal: &PixelCalibration) -> ViabilityThresholds {
        let mut t = ViabilityThresholds::new(&self.spec, cal);
        let o = &self.overrides;
        t.max_theta_deg = o.max_theta_deg.unwrap_or(t.max_theta_deg);
        t.max_abs_curvature_per_px = o.max_abs_curvature_per_px.unwrap_or(t.max_abs_curvature_per_px);
        t.smoothing_window_px = o.smoothing_window_px.unwrap_or(t.smoothing_window_px);
        t
    }

    pub fn resolve_window(&self, cal: &PixelCalibration) -> WindowConfig {
        let mut w = WindowConfig::new(&self.spec, cal);
        let o = &self.overrides;
        if let Some(px) = o.window_px {
            w.window_px = px;
            w.stride_px = (px / 4).max(1);
        }
        w.stride_px = o.stride_px.unwrap_or(w.stride_px);
        w.central_px = o.central_px.unwrap_or(w.central_px);
        w
    }
}

/// Loads `path` at `scale` and runs the pipeline on it.
pub fn run_file(
    path: &Path,
    scale: f64,
    options: &LoadOptions,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let start = Instant::now();
    let mask = load_mask(path, scale, options)?;
    let mask = keep_largest_component(&mask)?;
    let load_ms = ms(start);
    let mut out = run_prepared(mask, config, start)?;
    out.timings.load_ms = load_ms;
    Ok(out)
}

/// Runs the pipeline on an in-memory mask (largest component only).
pub fn run_mask(mask: &BinaryMask, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let start = Instant::now();
    let mask = keep_largest_component(mask)?;
    let load_ms = ms(start);
    let mut out = run_prepared(mask, config, start)?;
    out.timings.load_ms = load_ms;
    Ok(out)
}

fn run_prepared(mask: BinaryMask, config: &PipelineConfig, start: Instant) -> Result<PipelineOutput, PipelineError> {
    config.spec.validate()?;
    let spec = &config.spec;
    let calibration = config.resolve_calibration(&mask)?;
    let thresholds = config.resolve_thresholds(&calibration);
    thresholds.validate()?;
    let window = config.resolve_window(&calibration);
    let mut timings = StageTimings {
        scale: mask.source_scale(),
        ..Default::default()
    };

    let mut out = PipelineOutput {
        result: PerchResult::empty(PerchStatus::DegenerateTree, spec),
        timings,
        calibration,
        thresholds,
        window,
        windows: vec![],
        mask,
        skeleton: None,
        graph: None,
        prune: None,
    };

    let t = Instant::now();
    let skeleton = medial_axis_transform(&out.mask)?;
    timings.mat_ms = ms(t);

    let t = Instant::now();
    let classes = classify_pixels(&skeleton);
    let intersections = classes.intersections();
    timings.classify_ms = ms(t);

    let t = Instant::now();
    let sections = match section_branches(&skeleton, &intersections) {
        Ok(s) => s,
        Err(BranchError::Degenerate) => {
            timings.section_ms = ms(t);
            timings.total_ms = ms(start);
            out.timings = timings;
            out.skeleton = Some(skeleton);
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    timings.section_ms = ms(t);

    let t = Instant::now();
    let branches = build_branches(&skeleton, &sections)?;
    timings.order_ms = ms(t);

    let t = Instant::now();
    let stats = TreeStats::from_branches(&branches);
    let mut graph = build_graph(branches, &intersections, &skeleton)?;
    timings.graph_ms = ms(t);

    let t = Instant::now();
    let stats = match stats {
        Ok(s) => s,
        Err(_) => {
            timings.weight_ms = ms(t);
            timings.total_ms = ms(start);
            out.timings = timings;
            out.skeleton = Some(skeleton);
            out.graph = Some(graph);
            return Ok(out);
        }
    };
    let model = WeightModel::new(stats, spec, &calibration);
    assign_weights(&mut graph, &model);
    timings.weight_ms = ms(t);

    let t = Instant::now();
    if !config.skip_prune {
        out.prune = Some(prune_graph(&mut graph, &model, spec.prune_threshold));
    }
    timings.prune_ms = ms(t);

    let t = Instant::now();
    let branches: Vec<_> = graph.branches().collect();
    let profiles: Vec<WindowProfile> = branches
        .par_iter()
        .flat_map_iter(|b| profile_branch(b, &window, thresholds.smoothing_window_px))
        .collect();
    out.windows = profiles
        .into_iter()
        .map(|profile| AssessedWindow {
            verdict: assess(&profile, &thresholds),
            profile,
        })
        .collect();
    let viable: Vec<WindowProfile> = out
        .windows
        .iter()
        .filter(|w| w.verdict.passes())
        .map(|w| w.profile.clone())
        .collect();
    timings.windows_ms = ms(t);

    let t = Instant::now();
    let mut ranked = rank_candidates(viable, &thresholds, spec)?;
    if let Some(opts) = &config.stress {
        for c in &mut ranked {
            let radius_m = calibration.px_to_mm(c.profile.width_avg_central_px / 2.0) / 1000.0;
            let sigma_mpa = bending_stress(spec.drone_mass_kg, opts.lever_m, radius_m)?;
            c.stress = Some(StressAssessment {
                sigma_mpa,
                passes: stress_check(sigma_mpa, opts.mor_mpa, opts.safety_factor),
            });
        }
    }
    let mut result = select_perch(ranked, &thresholds, spec);
    result.locate(&calibration, out.mask.height());
    timings.rank_ms = ms(t);
    timings.total_ms = ms(start);

    out.result = result;
    out.timings = timings;
    out.skeleton = Some(skeleton);
    out.graph = Some(graph);
    Ok(out)
}
