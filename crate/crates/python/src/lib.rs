//! Python module `pli`: run the perch search on masks held as nested lists
//! or stored on disk.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pli_core::drone::DroneSpec;
use pli_core::geom::Pixel;
use pli_core::mask::{BinaryMask, LoadOptions, MaskError};
use pli_core::mechanics;
use pli_core::oracle::{generate_tree as oracle_tree, generate_unsuitable_tree, oracle_calibration};
use pli_core::pipeline::{run_file as core_run_file, run_mask as core_run_mask, CalibrationChoice, PipelineConfig, PipelineOutput, StressOptions};
use pli_core::ranking;
use pli_core::report::Report;
use pli_core::window::{ViabilityThresholds, WindowProfile};

create_exception!(pli, PliError, PyValueError, "Raised when the pipeline rejects its input.");

fn err(e: impl std::fmt::Display) -> PyErr {
    PliError::new_err(e.to_string())
}

/// Rows of 0/1 (or bools) to a mask; any nonzero value is foreground.
pub fn mask_from_rows(rows: &[Vec<u8>]) -> Result<BinaryMask, MaskError> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(MaskError::Unreadable(format!(
            "ragged mask: row of length {} in a mask {width} wide",
            bad.len()
        )));
    }
    BinaryMask::new(width, height, rows.iter().flatten().map(|&v| v != 0).collect())
}

pub fn mask_to_rows(mask: &BinaryMask) -> Vec<Vec<u8>> {
    (0..mask.height())
        .map(|r| (0..mask.width()).map(|c| mask.get(r, c) as u8).collect())
        .collect()
}

/// Drone and claw parameters. Claw bounds are radii in millimetres.
#[pyclass(name = "DroneSpec", module = "pli", frozen)]
pub struct PyDroneSpec {
    inner: DroneSpec,
}

#[pymethods]
impl PyDroneSpec {
    #[new]
    #[pyo3(signature = (
        *,
        claw_min_mm = 30.0,
        claw_max_mm = 110.0,
        claw_width_mm = 150.0,
        drone_width_mm = 450.0,
        drone_mass_kg = 1.5,
        alpha = 0.6,
        lambda_angle = 0.8,
        prune_threshold = 0.1,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        claw_min_mm: f64,
        claw_max_mm: f64,
        claw_width_mm: f64,
        drone_width_mm: f64,
        drone_mass_kg: f64,
        alpha: f64,
        lambda_angle: f64,
        prune_threshold: f64,
    ) -> PyResult<Self> {
        let inner = DroneSpec {
            claw_min_radius_mm: claw_min_mm,
            claw_max_radius_mm: claw_max_mm,
            claw_width_mm,
            drone_width_mm,
            drone_mass_kg,
            alpha,
            lambda_angle,
            lambda_width: 1.0 - lambda_angle,
            prune_threshold,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn claw_min_mm(&self) -> f64 {
        self.inner.claw_min_radius_mm
    }

    #[getter]
    fn claw_max_mm(&self) -> f64 {
        self.inner.claw_max_radius_mm
    }

    #[getter]
    fn claw_width_mm(&self) -> f64 {
        self.inner.claw_width_mm
    }

    #[getter]
    fn drone_width_mm(&self) -> f64 {
        self.inner.drone_width_mm
    }

    #[getter]
    fn drone_mass_kg(&self) -> f64 {
        self.inner.drone_mass_kg
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn lambda_angle(&self) -> f64 {
        self.inner.lambda_angle
    }

    #[getter]
    fn lambda_width(&self) -> f64 {
        self.inner.lambda_width
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "DroneSpec(claw_min_mm={}, claw_max_mm={}, claw_width_mm={}, drone_width_mm={}, alpha={}, lambda_angle={})",
            s.claw_min_radius_mm, s.claw_max_radius_mm, s.claw_width_mm, s.drone_width_mm, s.alpha, s.lambda_angle
        )
    }
}

/// Outcome of one run.
#[pyclass(name = "PerchResult", module = "pli", frozen)]
pub struct PyPerchResult {
    report: Report,
}

#[pymethods]
impl PyPerchResult {
    /// `found`, `no_viable_branch` or `degenerate_tree`.
    #[getter]
    fn status(&self) -> String {
        serde_json::to_value(self.report.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }

    #[getter]
    fn exit_code(&self) -> i32 {
        self.report.exit_code
    }

    #[getter]
    fn found(&self) -> bool {
        self.report.exit_code == 0
    }

    /// `(row, col)` in the processed mask.
    #[getter]
    fn midpoint_px(&self) -> Option<(usize, usize)> {
        self.report.midpoint_px.map(|[r, c]| (r, c))
    }

    /// `(x, y)` in millimetres, origin at the bottom-left corner.
    #[getter]
    fn midpoint_mm(&self) -> Option<(f64, f64)> {
        self.report.midpoint_mm.map(|[x, y]| (x, y))
    }

    #[getter]
    fn penalty(&self) -> Option<f64> {
        self.report.penalty
    }

    #[getter]
    fn theta_deg(&self) -> Option<f64> {
        self.report.theta_deg
    }

    #[getter]
    fn width_avg_mm(&self) -> Option<f64> {
        self.report.width_avg_mm
    }

    #[getter]
    fn mm_per_px(&self) -> f64 {
        self.report.calibration.mm_per_px
    }

    #[getter]
    fn window_px(&self) -> usize {
        self.report.window.window_px
    }

    /// Candidate count after ranking.
    #[getter]
    fn n_candidates(&self) -> usize {
        self.report.candidates.len()
    }

    /// Stress in MPa at each ranked candidate, best first; empty unless the
    /// stress check was requested.
    #[getter]
    fn candidate_stress_mpa(&self) -> Vec<f64> {
        self.report
            .candidates
            .iter()
            .filter_map(|c| c.stress.map(|s| s.sigma_mpa))
            .collect()
    }

    #[getter]
    fn total_ms(&self) -> Option<f64> {
        self.report.timings.map(|t| t.total_ms)
    }

    /// The JSON report; `timings=False` makes it reproducible.
    #[pyo3(signature = (timings = true))]
    fn to_json(&self, timings: bool) -> String {
        if timings {
            self.report.to_json()
        } else {
            self.report.without_timings().to_json()
        }
    }

    fn __repr__(&self) -> String {
        match self.midpoint_px() {
            Some((r, c)) => format!("PerchResult(status='{}', midpoint_px=({r}, {c}))", self.status()),
            None => format!("PerchResult(status='{}')", self.status()),
        }
    }
}

fn config(
    spec: Option<PyRef<'_, PyDroneSpec>>,
    mm_per_px: Option<f64>,
    tree_height_m: Option<f64>,
    skip_prune: bool,
    stress_check: bool,
) -> PyResult<PipelineConfig> {
    let calibration = match (mm_per_px, tree_height_m) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give mm_per_px or tree_height_m, not both")),
        (Some(r), None) => CalibrationChoice::MmPerPx(r),
        (None, Some(h)) => CalibrationChoice::TreeHeightM(h),
        (None, None) => CalibrationChoice::default(),
    };
    Ok(PipelineConfig {
        spec: spec.map(|s| s.inner.clone()).unwrap_or_default(),
        calibration,
        skip_prune,
        stress: stress_check.then(StressOptions::default),
        ..Default::default()
    })
}

fn result(out: &PipelineOutput, skip_prune: bool, verbose: bool) -> PyPerchResult {
    PyPerchResult {
        report: Report::new(out, skip_prune, verbose),
    }
}

/// Runs the pipeline on a mask given as rows of 0/1 values.
#[pyfunction]
#[pyo3(signature = (mask, *, spec = None, mm_per_px = None, tree_height_m = None, skip_prune = false, stress_check = false, verbose = false))]
#[allow(clippy::too_many_arguments)]
fn run_mask(
    py: Python<'_>,
    mask: Vec<Vec<u8>>,
    spec: Option<PyRef<'_, PyDroneSpec>>,
    mm_per_px: Option<f64>,
    tree_height_m: Option<f64>,
    skip_prune: bool,
    stress_check: bool,
    verbose: bool,
) -> PyResult<PyPerchResult> {
    let cfg = config(spec, mm_per_px, tree_height_m, skip_prune, stress_check)?;
    let mask = mask_from_rows(&mask).map_err(err)?;
    let out = py.detach(|| core_run_mask(&mask, &cfg)).map_err(err)?;
    Ok(result(&out, skip_prune, verbose))
}

/// Loads a PNG or PGM mask, downscaled by `scale`, and runs the pipeline.
#[pyfunction]
#[pyo3(signature = (path, scale = 1.0, *, spec = None, mm_per_px = None, tree_height_m = None, skip_prune = false, stress_check = false, verbose = false))]
#[allow(clippy::too_many_arguments)]
fn run_file(
    py: Python<'_>,
    path: PathBuf,
    scale: f64,
    spec: Option<PyRef<'_, PyDroneSpec>>,
    mm_per_px: Option<f64>,
    tree_height_m: Option<f64>,
    skip_prune: bool,
    stress_check: bool,
    verbose: bool,
) -> PyResult<PyPerchResult> {
    let cfg = config(spec, mm_per_px, tree_height_m, skip_prune, stress_check)?;
    let out = py
        .detach(|| core_run_file(&path, scale, &LoadOptions::default(), &cfg))
        .map_err(err)?;
    Ok(result(&out, skip_prune, verbose))
}

/// Peak bending stress in MPa of a cantilevered round branch.
#[pyfunction]
fn bending_stress(mass_kg: f64, lever_m: f64, radius_m: f64) -> PyResult<f64> {
    mechanics::bending_stress(mass_kg, lever_m, radius_m).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (sigma_mpa, mor_mpa = mechanics::DEFAULT_MOR_MPA, safety_factor = mechanics::DEFAULT_SAFETY_FACTOR))]
fn stress_check(sigma_mpa: f64, mor_mpa: f64, safety_factor: f64) -> bool {
    mechanics::stress_check(sigma_mpa, mor_mpa, safety_factor)
}

/// Penalty of a window with slope `theta_deg` and central width `width_px`.
#[pyfunction]
#[pyo3(signature = (theta_deg, width_px, width_min_px, width_max_px, *, max_theta_deg = 30.0, lambda_angle = 0.8))]
fn penalty(
    theta_deg: f64,
    width_px: f64,
    width_min_px: f64,
    width_max_px: f64,
    max_theta_deg: f64,
    lambda_angle: f64,
) -> PyResult<f64> {
    let spec = DroneSpec {
        lambda_angle,
        lambda_width: 1.0 - lambda_angle,
        ..Default::default()
    };
    spec.validate().map_err(err)?;
    let thresholds = ViabilityThresholds {
        max_theta_deg,
        max_abs_curvature_per_px: f64::INFINITY,
        spec_min_px: width_min_px,
        spec_max_px: width_max_px,
        smoothing_window_px: 1,
    };
    let profile = WindowProfile {
        branch_label: 0,
        start_index: 0,
        end_index: 0,
        midpoint: Pixel::new(0, 0),
        theta_deg,
        curvature: vec![],
        max_abs_curvature: 0.0,
        width_min_px: width_px,
        width_max_px: width_px,
        width_avg_central_px: width_px,
        monotonic: true,
    };
    ranking::penalty(&profile, &thresholds, &spec).map_err(err)
}

/// Synthetic tree at 10 mm/px: `(mask_rows, truth_json)`. Unsuitable trees
/// have no graspable child.
#[pyfunction]
#[pyo3(signature = (seed, *, suitable = true))]
fn generate_tree(seed: u64, suitable: bool) -> (Vec<Vec<u8>>, String) {
    let spec = DroneSpec::default();
    let cal = oracle_calibration();
    let tree = if suitable {
        oracle_tree(seed, &spec, &cal)
    } else {
        generate_unsuitable_tree(seed, &spec, &cal)
    };
    let truth = serde_json::to_string(&tree.truth).expect("truth serializes");
    (mask_to_rows(&tree.mask), truth)
}

#[pymodule]
fn pli(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PliError", m.py().get_type::<PliError>())?;
    m.add_class::<PyDroneSpec>()?;
    m.add_class::<PyPerchResult>()?;
    m.add_function(wrap_pyfunction!(run_mask, m)?)?;
    m.add_function(wrap_pyfunction!(run_file, m)?)?;
    m.add_function(wrap_pyfunction!(bending_stress, m)?)?;
    m.add_function(wrap_pyfunction!(stress_check, m)?)?;
    m.add_function(wrap_pyfunction!(penalty, m)?)?;
    m.add_function(wrap_pyfunction!(generate_tree, m)?)?;
    Ok(())
}
