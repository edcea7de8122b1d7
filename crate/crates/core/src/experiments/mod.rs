//! Experiment orchestration: flat key=value configuration, CSV metrics,
//! run directories, the stage learning-rate grid search and the regime
//! comparison suite.

mod config;
mod grid;
mod metrics;
mod run;
mod suite;

pub use config::{DiagnosticsConfig, ExperimentConfig, FinetuneConfig, GridConfig, CONFIG_FILE, OUT_DIR_ENV};
pub use grid::{cell_config, cell_id, grid_cells, lr_grid_search, run_grid_cell, GridCell, GridOutput};
pub use metrics::{
    attn_table, conflict_table, grid_header, num, opt, results_table, train_log_header, train_log_table, vic_table,
    Table, ATTN_FILE, ATTN_HEADER, CONFLICT_FILE, CONFLICT_HEADER, GRID_FILE, RESULTS_FILE, RESULTS_HEADER,
    TRAIN_LOG_FILE, VIC_FILE, VIC_HEADER,
};
pub use run::{
    attn_rows, check_seed, checkpoint_config, conflict_rows, evaluate_checkpoint, phase1_regime, prepare_dir,
    resolve_out_dir, train_run, vic_rows, write_table, PretrainOutput, TrainRecord, CHECKPOINT_FILE, PHASE1_FILE,
};
pub use suite::{reproduce_suite, reproduce_suite_with, ConflictSummary, SuiteReport, TrendFlag, REPORT_FILE};

#[cfg(test)]
mod tests;
