//! End-to-end benchmark: configuration, the two-arm pipeline and report files.

mod config;
mod pipeline;
mod report;
mod run;

pub use config::{Analyses, BenchConfig, DataSource, ForestGrid, LinearGrid, Roster};
pub use pipeline::{
    candidates, enabled, fit_comparable, fit_dynamic, load_data, prepare, select_hyper, ArmData, CohortSummary,
    ComparableData, DynamicData, Family, Fitted, Hyper, Prepared, TuningScore,
};
pub use report::{
    emit_reports, emit_window_grid, ABLATION, BOOTSTRAP, CALIBRATION, IMPORTANCE, MAIN_BENCHMARK, PH_AUDIT, PLOTDATA,
    REPORT, SPLIT_AUDIT, WINDOW_GRID,
};
pub use run::{
    run_benchmark, run_benchmark_with, run_prepared, run_window_sensitivity, window_sensitivity, ArmBootstrap,
    BenchmarkReport, CalibrationRow, ModelAblation, ModelImportance, ModelRow, PhSection, StageFailure, Status,
    WindowRow, TOOLKIT_VERSION,
};
