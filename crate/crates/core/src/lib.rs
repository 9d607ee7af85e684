//! Discrete-time and continuous-time survival models for weekly dropout risk,
//! with IPCW metrics, bootstrap ranking, ablation, permutation importance and
//! proportional-hazards audits.
//!
//! Models, metrics and analyses are generic over [`Scalar`]; the aliases below
//! fix them to `f64`, which is what the benchmark pipeline uses.

pub mod analysis;
pub mod bench;
pub mod comparable;
pub mod dynamic;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod prediction;
pub mod preprocess;
pub mod scalar;
pub mod seed;
pub mod split;

pub use analysis::Arm;
pub use bench::{emit_reports, run_benchmark, run_window_sensitivity, BenchConfig, BenchmarkReport};
pub use error::{Error, Result};
pub use metrics::MetricReport;
pub use preprocess::FeatureBlock;
pub use scalar::Scalar;

pub type DesignMatrixF64 = preprocess::DesignMatrix<f64>;
pub type SurvivalPredictionF64 = prediction::SurvivalPrediction<f64>;
pub type HazardModelF64 = dynamic::DiscreteHazardModel<f64>;
pub type CoxModelF64 = comparable::CoxModel<f64>;
pub type WeibullAftModelF64 = comparable::WeibullAftModel<f64>;
pub type SurvivalForestF64 = comparable::SurvivalForest<f64>;
pub type CensoringEstimateF64 = metrics::CensoringEstimate<f64>;
