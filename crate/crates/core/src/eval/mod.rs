//! Edit extraction, F0.5 scoring and error-type analysis.

mod analysis;
mod edit;
mod score;

pub use analysis::{
    analyze, char_edit_distance, classify_change, classify_edit, edit_ratio, segment_oov, AnalysisReport, ChangeSize,
    PortionChoice, SegmentAnalysis, SegmentChoice, Segments,
};
pub use edit::{apply_edits, extract_edits, Edit};
pub use score::{
    f_beta, f_beta_from, gold_edit_sets, score_edit_sets, score_m2, system_edit_sets, Prf, ScoreReport, SentenceScore,
};
