use pli_core::drone::DroneSpec;
use pli_core::mask::{LoadOptions, PixelCalibration};
use pli_core::oracle::{
    evaluate_dir, generate_trunk_only, generate_tree, oracle_calibration, oracle_config, write_corpus, BranchRole,
};
use pli_core::overlay::{count_blobs, render_overlay, FAILED_WINDOW, MARKER, SKELETON, VIABLE_WINDOW};
use pli_core::pipeline::{run_file, run_mask, CalibrationChoice, PipelineConfig, StressOptions};
use pli_core::profile::{profile_scales, timings_csv, CSV_HEADER};
use pli_core::ranking::PerchStatus;
use pli_core::report::{Report, SCHEMA};

fn config() -> PipelineConfig {
    oracle_config(&DroneSpec::default())
}

#[test]
fn seed_zero_perches_on_the_ideal_branch() {
    let tree = generate_tree(0, &DroneSpec::default(), &oracle_calibration());
    let out = run_mask(&tree.mask, &config()).unwrap();
    assert_eq!(out.result.status, PerchStatus::Found);
    let p = out.result.midpoint_px.unwrap();
    let ideal = tree.ideal().unwrap();
    let nearest = tree
        .truth
        .branches
        .iter()
        .min_by(|a, b| {
            a.distance_to(p.row as f64, p.col as f64)
                .total_cmp(&b.distance_to(p.row as f64, p.col as f64))
        })
        .unwrap();
    assert_eq!(nearest.role, BranchRole::Ideal);
    assert!(ideal.distance_to(p.row as f64, p.col as f64) <= ideal.width_px / 2.0 + 1.0);

    // the medial axis recovers the ideal branch's width
    let skel = out.skeleton.as_ref().unwrap();
    let mut widths: Vec<f64> = skel
        .pixels()
        .into_iter()
        .filter(|q| {
            let d_start = ((q.row as f64 - ideal.start[0]).powi(2) + (q.col as f64 - ideal.start[1]).powi(2)).sqrt();
            ideal.distance_to(q.row as f64, q.col as f64) <= 1.5 && d_start > 40.0
        })
        .map(|q| 2.0 * skel.distance(q).unwrap())
        .collect();
    widths.sort_by(f64::total_cmp);
    let median = widths[widths.len() / 2];
    assert!((median - ideal.width_px).abs() <= 2.0, "{median} vs {}", ideal.width_px);
}

#[test]
fn bare_trunk_has_no_viable_branch() {
    let tree = generate_trunk_only(4, &DroneSpec::default(), &oracle_calibration());
    let out = run_mask(&tree.mask, &config()).unwrap();
    assert_eq!(out.result.status, PerchStatus::NoViableBranch);
    assert_eq!(out.result.status.exit_code(), 2);
    assert!(out.result.midpoint_mm.is_none());
}

#[test]
fn reports_are_deterministic_apart_from_timings() {
    let tree = generate_tree(3, &DroneSpec::default(), &oracle_calibration());
    let a = Report::new(&run_mask(&tree.mask, &config()).unwrap(), false, true);
    let b = Report::new(&run_mask(&tree.mask, &config()).unwrap(), false, true);
    assert_eq!(a.without_timings().to_json(), b.without_timings().to_json());

    let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(v["schema"], SCHEMA);
    assert_eq!(v["status"], "found");
    assert_eq!(v["exit_code"], 0);
    assert_eq!(v["calibration"]["method"], "explicit");
    assert_eq!(v["calibration"]["mm_per_px"], 10.0);
    let mid = v["midpoint_px"].as_array().unwrap();
    let mm = v["midpoint_mm"].as_array().unwrap();
    assert_eq!(mm[0].as_f64().unwrap(), 10.0 * mid[1].as_f64().unwrap());
    assert_eq!(mm[1].as_f64().unwrap(), 10.0 * (447.0 - mid[0].as_f64().unwrap()));
    assert!(v["timings"]["total_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["candidates"][0]["rank"], 1);
    assert!(!v["windows"].as_array().unwrap().is_empty());
    let quiet: serde_json::Value = serde_json::from_str(&Report::new(&run_mask(&tree.mask, &config()).unwrap(), false, false).to_json()).unwrap();
    assert!(quiet.get("windows").is_none());
}

#[test]
fn overlay_marks_the_perch_once() {
    let tree = generate_tree(1, &DroneSpec::default(), &oracle_calibration());
    let out = run_mask(&tree.mask, &config()).unwrap();
    let img = render_overlay(&out, None, false);
    assert_eq!(count_blobs(&img, MARKER), 1);
    assert!(img.pixels().any(|p| *p == VIABLE_WINDOW));
    assert!(!img.pixels().any(|p| *p == FAILED_WINDOW));
    let verbose = render_overlay(&out, None, true);
    assert!(verbose.pixels().any(|p| *p == FAILED_WINDOW));
    assert_eq!(count_blobs(&verbose, MARKER), 1);

    let photo = image::RgbImage::from_pixel(100, 80, image::Rgb([255, 0, 255]));
    let on_photo = render_overlay(&out, Some(&photo), false);
    assert_eq!(count_blobs(&on_photo, MARKER), 1);
    assert_eq!((on_photo.width(), on_photo.height()), (512, 448));
}

#[test]
fn overlay_without_perch_has_no_marker() {
    let tree = generate_trunk_only(2, &DroneSpec::default(), &oracle_calibration());
    let out = run_mask(&tree.mask, &config()).unwrap();
    let img = render_overlay(&out, None, false);
    assert_eq!(count_blobs(&img, MARKER), 0);
    assert!(img.pixels().any(|p| *p == SKELETON));
}

#[test]
fn stress_is_reported_per_candidate_when_enabled() {
    let tree = generate_tree(2, &DroneSpec::default(), &oracle_calibration());
    let plain = run_mask(&tree.mask, &config()).unwrap();
    assert!(plain.result.ranked.iter().all(|c| c.stress.is_none()));
    let cfg = PipelineConfig {
        stress: Some(StressOptions::default()),
        ..config()
    };
    let out = run_mask(&tree.mask, &cfg).unwrap();
    assert_eq!(out.result.ranked.len(), plain.result.ranked.len());
    for c in &out.result.ranked {
        let s = c.stress.unwrap();
        let r_m = c.profile.width_avg_central_px * 10.0 / 2.0 / 1000.0;
        let expected = 4.0 * 1.5 * 9.81 * 2.0 / (std::f64::consts::PI * r_m.powi(3)) / 1e6;
        assert!((s.sigma_mpa - expected).abs() <= 1e-9 * expected);
        assert_eq!(s.passes, s.sigma_mpa < 13.5);
    }
}

#[test]
fn downscaled_file_keeps_physical_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let tree = generate_tree(6, &DroneSpec::default(), &oracle_calibration());
    let path = dir.path().join("tree.png");
    tree.mask.to_gray_image().save(&path).unwrap();
    let full = run_file(&path, 1.0, &LoadOptions::default(), &config()).unwrap();
    let half = run_file(&path, 0.5, &LoadOptions::default(), &config()).unwrap();
    assert_eq!(full.calibration.mm_per_px, 10.0);
    assert_eq!(half.calibration.mm_per_px, 20.0);
    assert_eq!((half.mask.width(), half.mask.height()), (256, 224));
    assert_eq!(half.thresholds.spec_min_px, 3.0);
    assert_eq!((full.window.window_px, half.window.window_px), (45, 23));
    assert_eq!(half.timings.scale, 0.5);
    assert!(full.timings.total_ms >= full.timings.max_stage_ms());
}

#[test]
fn tree_height_calibration_uses_the_bounding_box() {
    let tree = generate_tree(8, &DroneSpec::default(), &oracle_calibration());
    let cfg = PipelineConfig {
        calibration: CalibrationChoice::TreeHeightM(8.0),
        ..config()
    };
    let out = run_mask(&tree.mask, &cfg).unwrap();
    let (top, bottom) = {
        let rows: Vec<usize> = (0..tree.mask.height())
            .filter(|&r| (0..tree.mask.width()).any(|c| tree.mask.get(r, c)))
            .collect();
        (rows[0], *rows.last().unwrap())
    };
    let expected = PixelCalibration::explicit(8000.0 / (bottom - top + 1) as f64).unwrap();
    assert!((out.calibration.mm_per_px - expected.mm_per_px).abs() < 1e-12);
}

#[test]
fn profile_rows_are_ordered_by_scale() {
    let dir = tempfile::tempdir().unwrap();
    let tree = generate_tree(9, &DroneSpec::default(), &oracle_calibration());
    let path = dir.path().join("tree.png");
    tree.mask.to_gray_image().save(&path).unwrap();
    let rows = profile_scales(&path, &[0.5, 1.0, 0.75], &LoadOptions::default(), &config()).unwrap();
    let scales: Vec<f64> = rows.iter().map(|t| t.scale).collect();
    assert_eq!(scales, vec![1.0, 0.75, 0.5]);
    let csv = timings_csv(&rows);
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), 4);
    assert!(profile_scales(&path, &[], &LoadOptions::default(), &config()).unwrap().is_empty());
}

#[test]
fn corpus_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DroneSpec::default();
    let written = write_corpus(dir.path(), 8, 40, &spec).unwrap();
    assert_eq!(written.len(), 8);
    let report = evaluate_dir(dir.path(), &config()).unwrap();
    assert_eq!(report.outcomes.len(), 8);
    let seeds: Vec<u64> = report.outcomes.iter().map(|o| o.seed).collect();
    assert_eq!(seeds, (40..48).collect::<Vec<_>>());
    // every fourth tree has no graspable child
    assert_eq!(report.outcomes[3].expected, PerchStatus::NoViableBranch);
    assert_eq!(report.outcomes[0].expected, PerchStatus::Found);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.lines().nth(4).unwrap().starts_with("43,no_viable_branch,"));
}

#[test]
fn pruning_barely_moves_the_perch() {
    let spec = DroneSpec::default();
    let cfg = config();
    let bypass = PipelineConfig {
        skip_prune: true,
        ..cfg.clone()
    };
    let (mut found, mut close) = (0, 0);
    for seed in 0..50 {
        let tree = generate_tree(seed, &spec, &oracle_calibration());
        let a = run_mask(&tree.mask, &cfg).unwrap();
        let b = run_mask(&tree.mask, &bypass).unwrap();
        let (Some(p), Some(q)) = (a.result.midpoint_px, b.result.midpoint_px) else {
            continue;
        };
        found += 1;
        let d = ((p.row as f64 - q.row as f64).powi(2) + (p.col as f64 - q.col as f64).powi(2)).sqrt();
        // one claw width
        close += (d <= a.window.central_px as f64) as usize;
    }
    assert!(found >= 45, "{found}");
    assert_eq!(close, found);
}
