//! Stage timings of the pipeline across input scales.

use std::path::Path;

use crate::mask::LoadOptions;
use crate::pipeline::{run_file, PipelineConfig, PipelineError, StageTimings};

pub const CSV_HEADER: &str =
    "scale,load_ms,mat_ms,classify_ms,section_ms,order_ms,graph_ms,weight_ms,prune_ms,windows_ms,rank_ms,total_ms";

/// Runs the pipeline once per scale on one thread, so each stage's time is
/// its own. Rows come back ordered by scale, largest first.
pub fn profile_scales(
    path: &Path,
    scales: &[f64],
    options: &LoadOptions,
    config: &PipelineConfig,
) -> Result<Vec<StageTimings>, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("single-thread pool");
    let mut sorted = scales.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    pool.install(|| {
        sorted
            .iter()
            .map(|&s| run_file(path, s, options, config).map(|o| o.timings))
            .collect()
    })
}

pub fn timings_csv(rows: &[StageTimings]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for t in rows {
        let cells: Vec<String> = std::iter::once(format!("{}", t.scale))
            .chain(t.stages().iter().map(|s| format!("{:.3}", s.1)))
            .chain(std::iter::once(format!("{:.3}", t.total_ms)))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Sum of every stage except pruning.
pub fn non_prune_ms(t: &StageTimings) -> f64 {
    t.stages().iter().filter(|s| s.0 != "prune").map(|s| s.1).sum()
}

/// True when medial axis and sectioning take more than half the non-prune
/// time.
pub fn mat_and_section_dominate(t: &StageTimings) -> bool {
    t.mat_ms + t.section_ms > 0.5 * non_prune_ms(t)
}
