//! Post-benchmark analyses on frozen or refitted predictions.

mod ablation;
mod bootstrap;
mod importance;
mod ph;

pub use ablation::{run_ablation, AblationResult, AblationRow};
pub use bootstrap::{bootstrap_ranks, bootstrap_with_indices, BootstrapResult, BootstrapRow, Metric, TIE_BREAK};
pub use importance::{
    grouped_permutation_importance, permutation_degradation, ImportanceEntry, ImportanceMetric, ImportanceResult,
};
pub use ph::{classify_ph, ph_audit, PhAuditResult, PhCovariate, PhLabel};

use serde::{Deserialize, Serialize};

/// Evaluation arm; results from the two arms are never ranked together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Dynamic,
    Comparable,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Dynamic => "dynamic",
            Arm::Comparable => "comparable",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
