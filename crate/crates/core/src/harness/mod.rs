//! Operational surface: experiment matrix, entropy-profile analysis, CLI.

mod analyze;
mod cli;
mod experiment;

pub use analyze::{analyze_entropy, write_profile_csv, EntropyAnalysis, ProfileCapture};
pub use cli::{exit_code, main_with_args, EXIT_BACKEND, EXIT_CONFIG, EXIT_INVALID_TRACE, EXIT_OK};
pub use experiment::{
    boundary_scores, run_cell, run_matrix, summarize, summary_table, Arm, ArmConfig, ArmSummary, BridgeSource, Corpus,
    ExperimentRow, ModelSource,
};
