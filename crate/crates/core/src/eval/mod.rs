//! Frame-level ROC/AUC, score expansion, mode comparisons and reports.

mod compare;
mod files;
mod report;
mod roc;

pub use compare::{
    compare_modes, evaluate_model, planted_scenario, score_videos, Comparison, ComparisonRow, PlantedScenario,
    PLANTED_DIM, PLANTED_FRAMES_PER_SEGMENT,
};
pub use files::{
    format_scores, frame_level, parse_scores, parse_truth, read_scores_file, read_truth_file, write_scores_file,
    TruthEntry, VideoScores,
};
pub use report::{emit_report, format_roc_text, format_summary, parse_roc_text, render_svg, NamedCurve, ReportFiles};
pub use roc::{expand_scores, roc_auc, trapezoid, RocCurve};
