//! Perplexity scoring, budget-driven threshold selection and reports.

pub mod report;
pub mod score;
pub mod threshold;

pub use report::{length_report, position_stats, position_stats_csv, quantile, LengthReport, LengthSummary, PositionBucket};
pub use score::{checkpoint_id, score_corpus, DocScore, ScoreLedger, Scorer};
pub use threshold::{apply_filter, select_threshold, BudgetUnit, FilterOutcome, FilterThreshold};
