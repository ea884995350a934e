//! End-to-end orchestration: configuration, the file-based three-step
//! pipeline (screen → exposure → outcome → test) with a reproducibility
//! manifest, and the Monte Carlo benchmark studies.

mod bench;
mod config;
mod run;

pub use bench::{
    dc_comparison_study, example1_study, example2_study, power_study, write_table_csv,
    BenchParams, DcComparison, Example1Summary, PowerPoint, StudyTable,
};
pub use config::{JyChoice, PipelineConfig, ScreenMode};
pub use run::{read_dataset, run_pipeline, write_dataset, FileRecord, Manifest, StageRecord};
