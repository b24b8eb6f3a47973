//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pli_core::branch::Branch;
use pli_core::drone::DroneSpec;
use pli_core::geom::Pixel;
use pli_core::graph::{branch_weight, prune_graph, TreeStats, WeightModel};
use pli_core::mask::{BinaryMask, LoadOptions, PixelCalibration};
use pli_core::mechanics::bending_stress;
use pli_core::morphology::{distance_transform, medial_axis_transform};
use pli_core::oracle::{evaluate_corpus, evaluate_rejections, generate_tree, oracle_calibration, oracle_config};
use pli_core::pipeline::run_mask;
use pli_core::profile::{mat_and_section_dominate, profile_scales};
use pli_core::ranking::{penalty, PerchStatus};
use pli_core::window::{curvature_of_points, window_curvature, ViabilityThresholds, WindowProfile};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bending_stress_reference() -> Outcome {
    let sigma = bending_stress(1.5, 2.0, 0.015).map_err(|e| e.to_string())?;
    check((sigma - 11.1).abs() <= 0.05, format!("sigma = {sigma:.4} MPa (target 11.1 +/- 0.05)"))
}

fn profile_with(theta: f64, width: f64) -> WindowProfile {
    WindowProfile {
        branch_label: 1,
        start_index: 0,
        end_index: 44,
        midpoint: Pixel::new(0, 0),
        theta_deg: theta,
        curvature: vec![],
        max_abs_curvature: 0.0,
        width_min_px: width,
        width_max_px: width,
        width_avg_central_px: width,
        monotonic: true,
    }
}

fn penalty_bounds() -> Outcome {
    let spec = DroneSpec::default();
    let t = ViabilityThresholds::new(&spec, &oracle_calibration());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_err: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = rng.random_range(0.0..=1.0);
        let spec = spec.clone().with_lambda_angle(lambda);
        let theta = rng.random_range(0.0..=t.max_theta_deg);
        let width = rng.random_range(t.spec_min_px..=t.spec_max_px);
        let p = penalty(&profile_with(theta, width), &t, &spec).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("P = {p} for theta {theta}, width {width}"));
        }
        // independent restatement of the normalised deviation sum
        let expected = lambda * (theta / 30.0) + (1.0 - lambda) * ((width - 6.0) / 16.0);
        worst_err = worst_err.max((p - expected).abs());
    }
    let ideal = penalty(&profile_with(0.0, t.spec_min_px), &t, &spec).map_err(|e| e.to_string())?;
    check(
        ideal == 0.0 && worst_err < 1e-12,
        format!("1000 candidates in [0, 1], max deviation from hand formula {worst_err:.1e}, ideal P = {ideal}"),
    )
}

fn straight(len: usize, width: f64) -> Branch {
    Branch {
        label: 1,
        pixels: (0..len).map(|c| Pixel::new(0, c)).collect(),
        widths_px: vec![width; len],
    }
}

fn weight_cases() -> Outcome {
    let spec = DroneSpec::default();
    let cal = PixelCalibration::explicit(10.0).map_err(|e| e.to_string())?;
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();

    let full = branch_weight(&straight(10, 10.0), &TreeStats { l_max: 10, w_max: 10.0 }, &spec, &cal);
    let out_of_spec = branch_weight(&straight(7, 40.0), &TreeStats { l_max: 10, w_max: 40.0 }, &spec, &cal);
    let mut half = straight(10, 0.0);
    half.widths_px = vec![4.0, 4.0, 4.0, 4.0, 4.0, 12.0, 12.0, 12.0, 12.0, 12.0];
    let mixed = branch_weight(&half, &TreeStats { l_max: 20, w_max: 20.0 }, &spec, &cal);
    check(
        rel(full, 1.0) && rel(out_of_spec, 0.6 * 0.7) && rel(mixed, 0.38),
        format!("W = {full}, {out_of_spec} (alpha l/Lmax = 0.42), {mixed} (0.38)"),
    )
}

/// Exact Euclidean distance to the nearest background pixel, treating the
/// outside of the frame as background.
fn brute_distance(mask: &BinaryMask, r: usize, c: usize) -> f64 {
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    let mut best = f64::INFINITY;
    for rr in -1..=h {
        for cc in -1..=w {
            let bg = rr < 0 || cc < 0 || rr >= h || cc >= w || !mask.get(rr as usize, cc as usize);
            if bg {
                let d = ((rr - r as isize).pow(2) + (cc - c as isize).pow(2)) as f64;
                best = best.min(d);
            }
        }
    }
    best.sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn width_recovery() -> Outcome {
    let mut notes = vec![];
    let mut ok = true;
    for width in [5usize, 11, 21] {
        // a slanted ribbon: every pixel within width/2 of the centre line
        let slope = 0.3f64;
        let mask = BinaryMask::from_fn(160, 120, |r, c| {
            let d = ((r as f64 - 40.0 - slope * c as f64) / (1.0 + slope * slope).sqrt()).abs();
            d <= width as f64 / 2.0 && (15..145).contains(&c)
        })
        .map_err(|e| e.to_string())?;
        let skel = medial_axis_transform(&mask).map_err(|e| e.to_string())?;
        let widths: Vec<f64> = skel.pixels().iter().map(|&p| 2.0 * skel.distance(p).unwrap_or(0.0)).collect();
        let m = median(widths);
        ok &= (m - width as f64).abs() <= 2.0;
        notes.push(format!("ribbon {width}: median {m:.2}"));
    }
    let disk = BinaryMask::from_fn(80, 80, |r, c| {
        let (dr, dc) = (r as f64 - 40.0, c as f64 - 40.0);
        dr * dr + dc * dc <= 30.0 * 30.0
    })
    .map_err(|e| e.to_string())?;
    let d = distance_transform(&disk);
    let max = d.iter().cloned().fold(0.0, f64::max);
    let oracle_max = (38..=42)
        .flat_map(|r| (38..=42).map(move |c| (r, c)))
        .map(|(r, c)| brute_distance(&disk, r, c))
        .fold(0.0, f64::max);
    let mismatches = (0..80)
        .step_by(3)
        .flat_map(|r| (0..80).step_by(3).map(move |c| (r, c)))
        .filter(|&(r, c)| disk.get(r, c) && (brute_distance(&disk, r, c) - d[r * 80 + c]).abs() > 1e-9)
        .count();
    ok &= (max - 30.0).abs() <= 1.0 && (max - oracle_max).abs() < 1e-9 && mismatches == 0;
    notes.push(format!("disk r30: max distance {max:.2} (brute force {oracle_max:.2}, {mismatches} mismatches)"));
    check(ok, notes.join("; "))
}

fn curvature() -> Outcome {
    let mut notes = vec![];
    let mut ok = true;
    for radius in [20.0f64, 100.0] {
        let n = (radius * std::f64::consts::PI).round() as usize;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = i as f64 / radius;
                (radius * t.cos(), radius * t.sin())
            })
            .collect();
        let k = curvature_of_points(&pts, 5).map_err(|e| e.to_string())?;
        let target = 1.0 / radius;
        let rel = |v: &f64| (v.abs() - target).abs() / target;
        // the first and last few values use one-sided differences and a
        // truncated smoothing window
        let interior = k[5..k.len() - 5].iter().map(rel).fold(0.0, f64::max);
        let max = k.iter().map(|v| v.abs()).fold(0.0, f64::max);
        ok &= interior <= 0.2 && (max - target).abs() <= 0.2 * target;
        notes.push(format!(
            "R={radius}: interior worst {:.1}%, max |k| {max:.4} vs {target:.4}",
            100.0 * interior
        ));

        // the same arc as 8-connected pixels; jogs cancel in the signed mean
        let mut ring: Vec<Pixel> = vec![];
        for i in 0..(8.0 * radius) as usize {
            let t = i as f64 / (8.0 * radius) * std::f64::consts::PI;
            let p = Pixel::new((200.0 - radius * t.sin()).round() as usize, (200.0 + radius * t.cos()).round() as usize);
            if ring.last() != Some(&p) {
                ring.push(p);
            }
        }
        let (kr, _) = window_curvature(&ring, 5).map_err(|e| e.to_string())?;
        let mean = (kr.iter().sum::<f64>() / kr.len() as f64).abs();
        notes.push(format!("rasterized |mean k| {mean:.4}"));
    }
    let diag: Vec<(f64, f64)> = (0..40).map(|i| (i as f64, i as f64)).collect();
    let flat: Vec<(f64, f64)> = (0..40).map(|i| (i as f64, 3.0)).collect();
    let line_max = [diag, flat]
        .iter()
        .map(|p| curvature_of_points(p, 5).map(|k| k.iter().map(|v| v.abs()).fold(0.0, f64::max)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .fold(0.0, f64::max);
    ok &= line_max < 1e-9;
    notes.push(format!("lines: max |k| {line_max:.1e}"));
    check(ok, notes.join("; "))
}

fn pruning_fixpoint() -> Outcome {
    let spec = DroneSpec::default();
    let mut cfg = oracle_config(&spec);
    cfg.skip_prune = true;
    let cal = oracle_calibration();
    let mut removed = 0;
    for seed in 0..200 {
        let tree = generate_tree(seed, &spec, &cal);
        let out = run_mask(&tree.mask, &cfg).map_err(|e| e.to_string())?;
        let mut graph = out.graph.ok_or(format!("seed {seed}: no graph"))?;
        let stats = TreeStats::from_branches(graph.branches()).map_err(|e| e.to_string())?;
        let model = WeightModel::new(stats, &spec, &out.calibration);
        let heaviest = graph.max_weight_label().ok_or(format!("seed {seed}: empty graph"))?;
        let heavy_pixels: BTreeSet<Pixel> = graph.edges[&heaviest].branch.pixels.iter().copied().collect();
        let before = graph.edges.len();
        prune_graph(&mut graph, &model, spec.prune_threshold);
        removed += before - graph.edges.len();
        let once = graph.clone();
        let again = prune_graph(&mut graph, &model, spec.prune_threshold);
        if graph != once || again.edges_removed != 0 || again.merges != 0 {
            return Err(format!("seed {seed}: second prune changed the graph"));
        }
        let survives = graph
            .edges
            .values()
            .any(|e| heavy_pixels.iter().all(|p| e.branch.pixels.contains(p)));
        if !survives {
            return Err(format!("seed {seed}: heaviest edge {heaviest} lost"));
        }
    }
    Ok(format!("200 trees idempotent, heaviest edge kept; {removed} edges pruned in total"))
}

fn oracle_success() -> Outcome {
    let spec = DroneSpec::default();
    let cfg = oracle_config(&spec);
    let r = evaluate_corpus(50, 0, &cfg).map_err(|e| e.to_string())?;
    let hits = r.outcomes.iter().filter(|o| o.success).count();
    let rej = evaluate_rejections(20, 10_000, &cfg).map_err(|e| e.to_string())?;
    let rejected = rej.outcomes.iter().filter(|o| o.status == PerchStatus::NoViableBranch).count();
    check(
        r.success_rate >= 0.90 && rejected == rej.outcomes.len(),
        format!(
            "success {:.2} ({hits}/50, target 0.90); NoViableBranch on {rejected}/{} out-of-spec trees",
            r.success_rate,
            rej.outcomes.len()
        ),
    )
}

fn angle_bias() -> Outcome {
    let spec = DroneSpec::default().with_lambda_angle(1.0);
    let cfg = oracle_config(&spec);
    let cal = oracle_calibration();
    let mut checked = 0;
    for seed in 0..50 {
        let tree = generate_tree(seed, &spec, &cal);
        let out = run_mask(&tree.mask, &cfg).map_err(|e| e.to_string())?;
        let r = &out.result;
        if r.ranked.len() < 2 {
            continue;
        }
        checked += 1;
        let min = r.ranked.iter().map(|c| c.profile.theta_deg).fold(f64::INFINITY, f64::min);
        let chosen = r.chosen.as_ref().map(|c| c.profile.theta_deg).unwrap_or(f64::NAN);
        if chosen != min {
            return Err(format!("seed {seed}: chose theta {chosen}, minimum {min}"));
        }
    }
    check(checked > 0, format!("{checked} trees with >= 2 candidates, all picks at minimal theta"))
}

fn scaling_trend() -> Outcome {
    let spec = DroneSpec::default();
    let tree = generate_tree(5, &spec, &oracle_calibration());
    let k = 2.25;
    let (h, w) = ((tree.mask.height() as f64 * k) as usize, (tree.mask.width() as f64 * k) as usize);
    let big = BinaryMask::from_fn(w, h, |r, c| tree.mask.get((r as f64 / k) as usize, (c as f64 / k) as usize))
        .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("big.png");
    big.to_gray_image().save(&path).map_err(|e| e.to_string())?;
    let cfg = oracle_config(&spec);
    let cfg = pli_core::pipeline::PipelineConfig {
        calibration: pli_core::pipeline::CalibrationChoice::MmPerPx(10.0 / k),
        ..cfg
    };
    let (mut faster, mut dominated) = (0, 0);
    let mut notes = vec![];
    for _ in 0..3 {
        let rows = profile_scales(&path, &[1.0, 0.5], &LoadOptions::default(), &cfg).map_err(|e| e.to_string())?;
        let (full, half) = (&rows[0], &rows[1]);
        faster += (half.total_ms < full.total_ms) as usize;
        dominated += mat_and_section_dominate(full) as usize;
        notes.push(format!(
            "{:.0}/{:.0} ms (mat+section {:.0} ms)",
            full.total_ms,
            half.total_ms,
            full.mat_ms + full.section_ms
        ));
    }
    check(
        faster >= 2 && dominated >= 2,
        format!(
            "{} px mask; total at 1.0/0.5: {}; faster at 0.5 in {faster}/3, mat+section dominate in {dominated}/3",
            w * h,
            notes.join(", ")
        ),
    )
}

fn prune_bypass() -> Outcome {
    let spec = DroneSpec::default();
    let cfg = oracle_config(&spec);
    let bypass = pli_core::pipeline::PipelineConfig {
        skip_prune: true,
        ..cfg.clone()
    };
    let cal = oracle_calibration();
    let (mut found, mut close) = (0, 0);
    for seed in 0..50 {
        let tree = generate_tree(seed, &spec, &cal);
        let a = run_mask(&tree.mask, &cfg).map_err(|e| e.to_string())?;
        let b = run_mask(&tree.mask, &bypass).map_err(|e| e.to_string())?;
        let (Some(p), Some(q)) = (a.result.midpoint_px, b.result.midpoint_px) else {
            continue;
        };
        found += 1;
        let d = ((p.row as f64 - q.row as f64).powi(2) + (p.col as f64 - q.col as f64).powi(2)).sqrt();
        close += (d <= a.window.window_px as f64) as usize;
    }
    let rate = close as f64 / found.max(1) as f64;
    check(found > 0 && rate >= 0.95, format!("{close}/{found} Found cases within one window length ({rate:.2}, target 0.95)"))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("bending stress", bending_stress_reference),
        ("penalty bounds and ideal case", penalty_bounds),
        ("weighting arithmetic", weight_cases),
        ("medial axis width recovery", width_recovery),
        ("curvature", curvature),
        ("pruning fixpoint", pruning_fixpoint),
        ("end-to-end oracle success", oracle_success),
        ("angle-bias monotonicity", angle_bias),
        ("scaling trend", scaling_trend),
        ("prune-bypass equivalence", prune_bypass),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
