//! Held-out PR curves, P@N, macro F1 and attention export.

mod export;
mod metrics;
mod scoring;

pub use export::{
    export_attention, sanitize_file_stem, write_f1_csv, write_pn_csv, write_pr_csv, AttentionExport, PnRow,
};
pub use metrics::{
    macro_f1, p_at_n, pr_curve, rank, ClassScore, F1Report, GoldFacts, PrCurve, PrPoint, PredictionRecord,
};
pub use scoring::{score_test_set, select_instances, PnMode, PnSetting, ScoredBag, ScoredSet, Selection};

/// Mean of several P@N values.
pub fn mean_precision(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
