//! `pli`: find a perch on a segmented tree mask.
//!
//! Exit codes: 0 perch found, 2 no viable branch, 3 degenerate tree,
//! 1 any error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pli_core::drone::DroneSpec;
use pli_core::mask::{LoadOptions, DEFAULT_TREE_HEIGHT_M};
use pli_core::mechanics::{DEFAULT_LEVER_M, DEFAULT_MOR_MPA, DEFAULT_SAFETY_FACTOR};
use pli_core::oracle::{evaluate_dir, oracle_config, write_corpus};
use pli_core::overlay::{render_overlay, write_overlay};
use pli_core::pipeline::{run_file, CalibrationChoice, Overrides, PipelineConfig, StressOptions};
use pli_core::profile::{profile_scales, timings_csv};
use pli_core::report::Report;

#[derive(Debug, Parser)]
#[command(name = "pli", version, about = "Perch location identification on binary tree masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline on one mask and report the perch.
    Run(RunArgs),
    /// Time every stage at several input scales.
    Profile(ProfileArgs),
    /// Write a corpus of synthetic trees with ground truth.
    Oracle(OracleArgs),
    /// Score the pipeline against a corpus written by `oracle`.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct DroneArgs {
    /// Length versus width balance of the branch weight.
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    /// Angle share of the penalty; the width share is 1 minus this.
    #[arg(long, default_value_t = 0.8)]
    lambda_angle: f64,
    /// Smallest graspable branch radius.
    #[arg(long, default_value_t = 30.0)]
    claw_min_mm: f64,
    /// Largest graspable branch radius.
    #[arg(long, default_value_t = 110.0)]
    claw_max_mm: f64,
    /// Span of the claw along the branch.
    #[arg(long, default_value_t = 150.0)]
    claw_width_mm: f64,
    /// Overall drone width; sets the window length.
    #[arg(long, default_value_t = 450.0)]
    drone_width_mm: f64,
    #[arg(long, default_value_t = 1.5)]
    drone_mass_kg: f64,
    /// Edges lighter than this are pruned from the ends of the graph.
    #[arg(long, default_value_t = 0.1)]
    prune_threshold: f64,
}

impl DroneArgs {
    fn spec(&self) -> Result<DroneSpec> {
        let spec = DroneSpec {
            claw_min_radius_mm: self.claw_min_mm,
            claw_max_radius_mm: self.claw_max_mm,
            claw_width_mm: self.claw_width_mm,
            drone_width_mm: self.drone_width_mm,
            drone_mass_kg: self.drone_mass_kg,
            alpha: self.alpha,
            lambda_angle: self.lambda_angle,
            lambda_width: 1.0 - self.lambda_angle,
            prune_threshold: self.prune_threshold,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct CalibrationArgs {
    /// Height of the tree's bounding box in metres.
    #[arg(long, conflicts_with = "mm_per_px")]
    tree_height_m: Option<f64>,
    /// Millimetres per pixel of the full-resolution mask.
    #[arg(long)]
    mm_per_px: Option<f64>,
}

impl CalibrationArgs {
    fn choice(&self) -> Result<CalibrationChoice> {
        let choice = match (self.tree_height_m, self.mm_per_px) {
            (_, Some(r)) => CalibrationChoice::MmPerPx(r),
            (Some(h), None) => CalibrationChoice::TreeHeightM(h),
            (None, None) => CalibrationChoice::TreeHeightM(DEFAULT_TREE_HEIGHT_M),
        };
        match choice {
            CalibrationChoice::MmPerPx(v) | CalibrationChoice::TreeHeightM(v) if !(v > 0.0 && v.is_finite()) => {
                bail!("calibration must be positive and finite (got {v})")
            }
            c => Ok(c),
        }
    }
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(long)]
    max_theta_deg: Option<f64>,
    /// Curvature limit in 1/px at the run's calibration.
    #[arg(long)]
    max_curvature: Option<f64>,
    /// Moving-average length for curvature, odd.
    #[arg(long)]
    smoothing_px: Option<usize>,
    #[arg(long)]
    window_px: Option<usize>,
    #[arg(long)]
    stride_px: Option<usize>,
    /// Length of the stretch the mean width is taken over.
    #[arg(long)]
    central_px: Option<usize>,
}

impl ThresholdArgs {
    fn overrides(&self) -> Result<Overrides> {
        if let (Some(c), Some(w)) = (self.central_px, self.window_px) {
            if c > w {
                bail!("--central-px {c} exceeds --window-px {w}");
            }
        }
        for (name, v) in [
            ("--window-px", self.window_px),
            ("--stride-px", self.stride_px),
            ("--central-px", self.central_px),
        ] {
            if v == Some(0) {
                bail!("{name} must be at least 1");
            }
        }
        Ok(Overrides {
            max_theta_deg: self.max_theta_deg,
            max_abs_curvature_per_px: self.max_curvature,
            smoothing_window_px: self.smoothing_px,
            window_px: self.window_px,
            stride_px: self.stride_px,
            central_px: self.central_px,
        })
    }
}

#[derive(Debug, Args)]
struct LoadArgs {
    /// Grey samples above this value are foreground.
    #[arg(long, default_value_t = 127)]
    threshold: u8,
}

impl LoadArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            threshold: self.threshold,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Binary tree mask (PNG or PGM).
    #[arg(long)]
    mask: PathBuf,
    /// Photo drawn under the overlay.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Downscale factor in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[command(flatten)]
    drone: DroneArgs,
    #[command(flatten)]
    calibration: CalibrationArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[command(flatten)]
    load: LoadArgs,
    /// Report path; stdout when absent.
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Skeleton distances as a 16-bit PGM.
    #[arg(long)]
    skeleton_pgm: Option<PathBuf>,
    /// Pruned graph as JSON lines.
    #[arg(long)]
    graph_jsonl: Option<PathBuf>,
    #[arg(long)]
    skip_prune: bool,
    /// Compute the bending stress at every candidate.
    #[arg(long)]
    stress_check: bool,
    #[arg(long, default_value_t = DEFAULT_LEVER_M, requires = "stress_check")]
    lever_m: f64,
    #[arg(long, default_value_t = DEFAULT_MOR_MPA, requires = "stress_check")]
    mor_mpa: f64,
    #[arg(long, default_value_t = DEFAULT_SAFETY_FACTOR, requires = "stress_check")]
    safety_factor: f64,
    /// Include every window and its verdict in the report and overlay.
    #[arg(long)]
    verbose_candidates: bool,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.75,0.5,0.25")]
    scales: Vec<f64>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    skip_prune: bool,
    #[command(flatten)]
    drone: DroneArgs,
    #[command(flatten)]
    calibration: CalibrationArgs,
    #[command(flatten)]
    load: LoadArgs,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Number of trees.
    #[arg(long)]
    seeds: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "PLI_SEED", default_value_t = 0)]
    seed_base: u64,
    #[command(flatten)]
    drone: DroneArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    dir: PathBuf,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    skip_prune: bool,
    #[command(flatten)]
    drone: DroneArgs,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("could not write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<i32> {
    if !(args.scale > 0.0 && args.scale <= 1.0) {
        bail!("--scale must lie in (0, 1] (got {})", args.scale);
    }
    let config = PipelineConfig {
        spec: args.drone.spec()?,
        calibration: args.calibration.choice()?,
        overrides: args.thresholds.overrides()?,
        skip_prune: args.skip_prune,
        stress: args.stress_check.then_some(StressOptions {
            lever_m: args.lever_m,
            mor_mpa: args.mor_mpa,
            safety_factor: args.safety_factor,
        }),
    };
    let photo = match &args.image {
        Some(p) => Some(
            image::open(p)
                .with_context(|| format!("could not read image {}", p.display()))?
                .to_rgb8(),
        ),
        None => None,
    };

    let out = run_file(&args.mask, args.scale, &args.load.options(), &config)?;

    let report = Report::new(&out, args.skip_prune, args.verbose_candidates);
    write_or_print(args.out_json.as_deref(), &(report.to_json() + "\n"))?;
    if let Some(path) = &args.overlay {
        write_overlay(&render_overlay(&out, photo.as_ref(), args.verbose_candidates), path)?;
    }
    if let (Some(path), Some(s)) = (&args.skeleton_pgm, &out.skeleton) {
        s.write_distance_pgm(path)?;
    }
    if let (Some(path), Some(g)) = (&args.graph_jsonl, &out.graph) {
        fs::write(path, g.to_json_lines()).with_context(|| format!("could not write {}", path.display()))?;
    }

    let status = out.result.status;
    match out.result.midpoint_px {
        Some(p) => eprintln!("{status:?}: perch at row {} col {}", p.row, p.col),
        None => eprintln!("{status:?}"),
    }
    Ok(status.exit_code())
}

fn profile(args: ProfileArgs) -> Result<i32> {
    if let Some(s) = args.scales.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
        bail!("scales must lie in (0, 1] (got {s})");
    }
    let config = PipelineConfig {
        spec: args.drone.spec()?,
        calibration: args.calibration.choice()?,
        skip_prune: args.skip_prune,
        ..Default::default()
    };
    let rows = profile_scales(&args.mask, &args.scales, &args.load.options(), &config)?;
    write_or_print(args.out.as_deref(), &timings_csv(&rows))?;
    Ok(0)
}

fn oracle(args: OracleArgs) -> Result<i32> {
    let spec = args.drone.spec()?;
    let written = write_corpus(&args.out, args.seeds, args.seed_base, &spec)?;
    eprintln!(
        "wrote {} trees (seeds {}..{}) to {}",
        written.len(),
        args.seed_base,
        args.seed_base + args.seeds as u64,
        args.out.display()
    );
    Ok(0)
}

fn evaluate(args: EvaluateArgs) -> Result<i32> {
    let mut config = oracle_config(&args.drone.spec()?);
    config.skip_prune = args.skip_prune;
    let report = evaluate_dir(&args.dir, &config)?;
    write_or_print(args.out.as_deref(), &report.to_csv())?;
    let hits = report.outcomes.iter().filter(|o| o.success).count();
    eprintln!(
        "success rate {:.3} ({hits}/{})",
        report.success_rate,
        report.outcomes.len()
    );
    Ok(0)
}

/// Error chain without repeats: library errors already embed their source
/// in their own message.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain().map(|c| c.to_string()) {
        if !msg.contains(&cause) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&cause);
        }
    }
    msg
}

fn main() -> ExitCode {
    // usage errors must not collide with the status codes
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Profile(a) => profile(a),
        Command::Oracle(a) => oracle(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
