//! End-to-end orchestration: clean → LID → toxicity → dedup → merge →
//! tokenizer → LM → translate → score → filter → report → splits.

pub mod config;
pub mod run;
pub mod splits;

pub use config::PipelineConfig;
pub use run::{config_hash, plan_run, read_raw, run_pipeline, Layout, RunOptions, RunPlan, RunReport, SplitSummary, StageCounters, STAGES};
pub use splits::{materialize_splits, plan_splits, SplitPlan, SplitPools, SplitSource};
