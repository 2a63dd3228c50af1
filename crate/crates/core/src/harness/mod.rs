//! Experiment protocol: training runs, beta grid search, aggregation and
//! report files.

mod plan;
mod report;
mod run;

pub use plan::{
    choose_beta, grid_search_beta, mean_std, run_plan, BetaResult, CellKey, CellReport, ExperimentPlan,
    ExperimentReport, Mark, SkipRecord, Variant, BETA_GRID,
};
pub use report::{emit_report, env_svg, load_report, results_csv, summary_csv, text_table, CSV_HEADER};
pub use run::{eval_window, run_cell, train, CellResult, EpisodeRecord};
