//! Procedural tree masks with known geometry, used to score the pipeline.
//!
//! A tree is a vertical trunk that is too thick to grasp plus 3 to 7 straight
//! children attached to it. In a suitable tree exactly one child is the
//! intended perch: shallow and graspable, with a 20% margin inside every
//! default limit. Every other child breaks at least one limit by 20% or
//! more: too steep, too thin or too thick.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drone::DroneSpec;
use crate::geom::Pixel;
use crate::mask::{BinaryMask, LoadOptions, PixelCalibration};
use crate::pipeline::{run_file, run_mask, CalibrationChoice, PipelineConfig, PipelineError};
use crate::ranking::PerchStatus;
use crate::window::{ViabilityThresholds, WindowConfig};

pub const ORACLE_MM_PER_PX: f64 = 10.0;
pub const CANVAS_HEIGHT: usize = 448;
pub const CANVAS_WIDTH: usize = 512;

/// Fraction by which the intended perch sits inside each limit, and by which
/// the other children sit outside at least one.
const MARGIN: f64 = 0.2;
const CLEARANCE_PX: f64 = 8.0;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad truth file {path}: {source}")]
    Truth { path: PathBuf, source: serde_json::Error },
    #[error("could not write mask {path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRole {
    Trunk,
    Ideal,
    Steep,
    Thin,
    Wide,
}

/// A straight stroke with round caps. Points are `[row, col]` in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBranch {
    pub role: BranchRole,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub width_px: f64,
    pub theta_deg: f64,
    pub in_spec: bool,
}

impl TruthBranch {
    /// Distance from `(row, col)` to the centre line segment.
    pub fn distance_to(&self, row: f64, col: f64) -> f64 {
        segment_distance([row, col], self.start, self.end)
    }

    fn covers(&self, row: f64, col: f64) -> bool {
        self.distance_to(row, col) <= self.width_px / 2.0
    }
}

/// Ground truth stored next to each generated mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeTruth {
    pub seed: u64,
    pub mm_per_px: f64,
    pub height: usize,
    pub width: usize,
    pub branches: Vec<TruthBranch>,
    pub ideal_branch_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticTree {
    pub mask: BinaryMask,
    pub truth: TreeTruth,
}

impl SyntheticTree {
    pub fn ideal(&self) -> Option<&TruthBranch> {
        self.truth.ideal_branch_index.map(|i| &self.truth.branches[i])
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn segments_distance(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> f64 {
    let cross = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
    let d1 = cross(a0, a1, b0);
    let d2 = cross(a0, a1, b1);
    let d3 = cross(b0, b1, a0);
    let d4 = cross(b0, b1, a1);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    segment_distance(a0, b0, b1)
        .min(segment_distance(a1, b0, b1))
        .min(segment_distance(b0, a0, a1))
        .min(segment_distance(b1, a0, a1))
}

/// Point where a child's centre line leaves the trunk.
fn outside_start(start: [f64; 2], end: [f64; 2], theta_deg: f64, trunk_width: f64) -> [f64; 2] {
    let length = ((end[0] - start[0]).powi(2) + (end[1] - start[1]).powi(2)).sqrt();
    let edge = (trunk_width / 2.0 + 2.0) / theta_deg.to_radians().cos().max(1e-6);
    let t = (edge / length.max(1.0)).min(1.0);
    [start[0] + t * (end[0] - start[0]), start[1] + t * (end[1] - start[1])]
}

fn render(branches: &[TruthBranch], height: usize, width: usize) -> BinaryMask {
    BinaryMask::from_fn(width, height, |r, c| {
        branches.iter().any(|b| b.covers(r as f64, c as f64))
    })
    .expect("canvas is large enough")
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Variant {
    Suitable,
    Unsuitable,
    TrunkOnly,
}

struct Limits {
    max_theta: f64,
    w_min: f64,
    w_max: f64,
}

fn child_shape(role: BranchRole, lim: &Limits, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    // (theta_deg, width_px, length_px)
    match role {
        BranchRole::Ideal => (
            rng.random_range(0.0..(1.0 - MARGIN) * lim.max_theta * 0.85),
            rng.random_range(lim.w_min * (1.0 + MARGIN) * 1.05..lim.w_max * (1.0 - MARGIN) * 0.95),
            rng.random_range(120.0..190.0),
        ),
        BranchRole::Steep => (
            rng.random_range((1.0 + MARGIN) * lim.max_theta * 1.1..75.0),
            rng.random_range(lim.w_min * (1.0 + MARGIN)..lim.w_max * (1.0 - MARGIN)),
            rng.random_range(90.0..170.0),
        ),
        BranchRole::Thin => (
            rng.random_range(0.0..60.0),
            rng.random_range(2.5..lim.w_min * (1.0 - MARGIN) * 0.75),
            rng.random_range(80.0..160.0),
        ),
        BranchRole::Wide => (
            rng.random_range(0.0..60.0),
            rng.random_range(lim.w_max * (1.0 + MARGIN) * 1.08..lim.w_max * 1.5),
            rng.random_range(90.0..160.0),
        ),
        BranchRole::Trunk => unreachable!("the trunk is placed separately"),
    }
}

fn generate(seed: u64, spec: &DroneSpec, cal: &PixelCalibration, variant: Variant) -> SyntheticTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = ViabilityThresholds::new(spec, cal);
    let lim = Limits {
        max_theta: t.max_theta_deg,
        w_min: t.spec_min_px,
        w_max: t.spec_max_px,
    };
    let (h, w) = (CANVAS_HEIGHT as f64, CANVAS_WIDTH as f64);

    let trunk_width = lim.w_max * rng.random_range(1.3..2.0);
    let axis = w / 2.0 + rng.random_range(-20.0..20.0);
    let top = rng.random_range(40.0..70.0);
    let bottom = h - 6.0;
    let trunk = TruthBranch {
        role: BranchRole::Trunk,
        start: [bottom, axis],
        end: [top, axis],
        width_px: trunk_width,
        theta_deg: 90.0,
        in_spec: false,
    };

    let n_children = match variant {
        Variant::TrunkOnly => 0,
        _ => rng.random_range(3..=7usize),
    };
    let ideal_slot = (variant == Variant::Suitable).then(|| rng.random_range(0..n_children));
    let others = [BranchRole::Steep, BranchRole::Thin, BranchRole::Wide];

    let mut children: Vec<TruthBranch> = vec![];
    let mut ideal_branch_index = None;
    for slot in 0..n_children {
        let role = if Some(slot) == ideal_slot {
            BranchRole::Ideal
        } else {
            others[rng.random_range(0..others.len())]
        };
        let mut placed = None;
        for _ in 0..400 {
            let (theta, width, length) = child_shape(role, &lim, &mut rng);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            // shallow children may droop; steep ones always rise
            let rise = if role == BranchRole::Steep || rng.random_bool(0.7) { 1.0 } else { -1.0 };
            let attach = rng.random_range(top + 40.0..bottom - 70.0);
            let rad = theta.to_radians();
            let start = [attach, axis];
            let end = [attach - rise * rad.sin() * length, axis + side * rad.cos() * length];
            let margin = width / 2.0 + 4.0;
            if end[0] < margin || end[0] > h - margin || end[1] < margin || end[1] > w - margin {
                continue;
            }
            // the parts outside the trunk must keep clear of each other, and
            // attachments must not overlap
            let outside = outside_start(start, end, theta, trunk_width);
            let clear = children.iter().all(|o| {
                let o_out = outside_start(o.start, o.end, o.theta_deg, trunk_width);
                let gap = (width + o.width_px) / 2.0;
                segments_distance(outside, end, o_out, o.end) > gap + CLEARANCE_PX
                    && (attach - o.start[0]).abs() > gap + CLEARANCE_PX / 2.0
            });
            if !clear {
                continue;
            }
            let in_spec = role == BranchRole::Ideal;
            placed = Some(TruthBranch {
                role,
                start,
                end,
                width_px: width,
                theta_deg: theta,
                in_spec,
            });
            break;
        }
        if let Some(b) = placed {
            if role == BranchRole::Ideal {
                ideal_branch_index = Some(children.len() + 1);
            }
            children.push(b);
        }
    }

    let mut branches = vec![trunk];
    branches.extend(children);
    let mask = render(&branches, CANVAS_HEIGHT, CANVAS_WIDTH);
    SyntheticTree {
        mask,
        truth: TreeTruth {
            seed,
            mm_per_px: cal.mm_per_px,
            height: CANVAS_HEIGHT,
            width: CANVAS_WIDTH,
            branches,
            ideal_branch_index,
        },
    }
}

/// A tree with exactly one graspable, shallow child. Deterministic per seed.
pub fn generate_tree(seed: u64, spec: &DroneSpec, cal: &PixelCalibration) -> SyntheticTree {
    // in the rare case the ideal child could not be placed, move to a
    // derived seed so the invariant always holds
    let mut s = seed;
    loop {
        let tree = generate(s, spec, cal, Variant::Suitable);
        if tree.truth.ideal_branch_index.is_some() {
            let mut tree = tree;
            tree.truth.seed = seed;
            return tree;
        }
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    }
}

/// A tree whose children all break some limit.
pub fn generate_unsuitable_tree(seed: u64, spec: &DroneSpec, cal: &PixelCalibration) -> SyntheticTree {
    generate(seed, spec, cal, Variant::Unsuitable)
}

/// A bare trunk.
pub fn generate_trunk_only(seed: u64, spec: &DroneSpec, cal: &PixelCalibration) -> SyntheticTree {
    generate(seed, spec, cal, Variant::TrunkOnly)
}

/// Pipeline settings matching how oracle trees are drawn.
pub fn oracle_config(spec: &DroneSpec) -> PipelineConfig {
    PipelineConfig {
        spec: spec.clone(),
        calibration: CalibrationChoice::MmPerPx(ORACLE_MM_PER_PX),
        ..Default::default()
    }
}

pub fn oracle_calibration() -> PixelCalibration {
    PixelCalibration::explicit(ORACLE_MM_PER_PX).expect("positive constant")
}

/// Result of running the pipeline on one oracle tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeOutcome {
    pub seed: u64,
    pub expected: PerchStatus,
    pub status: PerchStatus,
    pub midpoint_px: Option<Pixel>,
    /// Distance from the chosen midpoint to the intended perch's centre line.
    pub distance_px: Option<f64>,
    pub success: bool,
}

/// A suitable tree succeeds when the perch lies within one window length of
/// the intended branch; an unsuitable one when nothing is found.
pub fn score(truth: &TreeTruth, status: PerchStatus, midpoint: Option<Pixel>, window_px: usize) -> TreeOutcome {
    let ideal = truth.ideal_branch_index.map(|i| &truth.branches[i]);
    let distance_px = match (ideal, midpoint) {
        (Some(b), Some(p)) => Some(b.distance_to(p.row as f64, p.col as f64)),
        _ => None,
    };
    let (expected, success) = match ideal {
        Some(_) => (
            PerchStatus::Found,
            status == PerchStatus::Found && distance_px.is_some_and(|d| d <= window_px as f64),
        ),
        None => (PerchStatus::NoViableBranch, status == PerchStatus::NoViableBranch),
    };
    TreeOutcome {
        seed: truth.seed,
        expected,
        status,
        midpoint_px: midpoint,
        distance_px,
        success,
    }
}

pub fn evaluate_tree(tree: &SyntheticTree, config: &PipelineConfig) -> Result<TreeOutcome, PipelineError> {
    let out = run_mask(&tree.mask, config)?;
    Ok(score(&tree.truth, out.result.status, out.result.midpoint_px, out.window.window_px))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub outcomes: Vec<TreeOutcome>,
    pub success_rate: f64,
}

impl CorpusReport {
    fn from_outcomes(outcomes: Vec<TreeOutcome>) -> Self {
        let n = outcomes.len().max(1) as f64;
        let success_rate = outcomes.iter().filter(|o| o.success).count() as f64 / n;
        Self { outcomes, success_rate }
    }

    /// One row per tree: `seed,expected,status,row,col,distance_px,success`.
    pub fn to_csv(&self) -> String {
        let status = |s: PerchStatus| serde_json::to_value(s).expect("status serializes").as_str().unwrap_or("").to_string();
        let mut out = String::from("seed,expected,status,row,col,distance_px,success\n");
        for o in &self.outcomes {
            let (row, col) = o.midpoint_px.map_or((String::new(), String::new()), |p| (p.row.to_string(), p.col.to_string()));
            let d = o.distance_px.map_or(String::new(), |d| format!("{d:.3}"));
            out.push_str(&format!("{},{},{},{row},{col},{d},{}\n", o.seed, status(o.expected), status(o.status), o.success));
        }
        out
    }
}

/// Generates `n_trees` suitable trees from consecutive seeds and scores the
/// pipeline on them, in parallel.
pub fn evaluate_corpus(n_trees: usize, seed_base: u64, config: &PipelineConfig) -> Result<CorpusReport, PipelineError> {
    let cal = oracle_calibration();
    let outcomes = (0..n_trees as u64)
        .into_par_iter()
        .map(|i| evaluate_tree(&generate_tree(seed_base + i, &config.spec, &cal), config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorpusReport::from_outcomes(outcomes))
}

/// Like [`evaluate_corpus`] on trees with no graspable child; success means
/// a correct rejection.
pub fn evaluate_rejections(n_trees: usize, seed_base: u64, config: &PipelineConfig) -> Result<CorpusReport, PipelineError> {
    let cal = oracle_calibration();
    let outcomes = (0..n_trees as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed_base + i;
            let tree = if i % 2 == 0 {
                generate_unsuitable_tree(seed, &config.spec, &cal)
            } else {
                generate_trunk_only(seed, &config.spec, &cal)
            };
            evaluate_tree(&tree, config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorpusReport::from_outcomes(outcomes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OracleError + '_ {
    move |source| OracleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `tree_<seed>.png` and `tree_<seed>.json` for each seed. Every
/// fourth tree is unsuitable so the corpus also exercises rejection.
pub fn write_corpus(dir: &Path, n_trees: usize, seed_base: u64, spec: &DroneSpec) -> Result<Vec<PathBuf>, OracleError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cal = oracle_calibration();
    (0..n_trees as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed_base + i;
            let tree = if i % 4 == 3 {
                generate_unsuitable_tree(seed, spec, &cal)
            } else {
                generate_tree(seed, spec, &cal)
            };
            let png = dir.join(format!("tree_{seed:06}.png"));
            tree.mask.to_gray_image().save(&png).map_err(|source| OracleError::Image {
                path: png.clone(),
                source,
            })?;
            let json = dir.join(format!("tree_{seed:06}.json"));
            let text = serde_json::to_string_pretty(&tree.truth).expect("truth serializes");
            fs::write(&json, text).map_err(io_err(&json))?;
            Ok(png)
        })
        .collect()
}

/// Scores the pipeline on every `tree_*.json` / `.png` pair in `dir`, in
/// file-name order. The calibration recorded in each truth file is used.
pub fn evaluate_dir(dir: &Path, config: &PipelineConfig) -> Result<CorpusReport, OracleError> {
    let mut truths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    truths.sort();
    let outcomes = truths
        .par_iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let truth: TreeTruth = serde_json::from_str(&text).map_err(|source| OracleError::Truth {
                path: path.clone(),
                source,
            })?;
            let mut cfg = config.clone();
            cfg.calibration = CalibrationChoice::MmPerPx(truth.mm_per_px);
            let out = run_file(&path.with_extension("png"), 1.0, &LoadOptions::default(), &cfg)?;
            Ok(score(&truth, out.result.status, out.result.midpoint_px, out.window.window_px))
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok(CorpusReport::from_outcomes(outcomes))
}

/// Window length used for a run at the oracle calibration.
pub fn oracle_window_px(spec: &DroneSpec) -> usize {
    WindowConfig::new(spec, &oracle_calibration()).window_px
}
