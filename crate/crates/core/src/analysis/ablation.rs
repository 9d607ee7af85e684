//! Feature-block ablation: refit without one block, compare with the full model.

use serde::{Deserialize, Serialize};

use super::Arm;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::preprocess::FeatureBlock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub arm: Arm,
    pub removed_block: FeatureBlock,
    /// Ablated minus full; `None` on the dynamic arm, which is judged on concordance only.
    pub delta_ibs: Option<f64>,
    pub delta_td: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub model: String,
    pub arm: Arm,
    pub full: MetricReport,
    pub rows: Vec<AblationRow>,
    /// `delta_ibs(temporal) / delta_ibs(static)` when both blocks were removed.
    pub ibs_ratio: Option<f64>,
}

impl Arm {
    /// Behavioral block that carries the temporal signal on this arm.
    pub fn temporal_block(self) -> FeatureBlock {
        match self {
            Arm::Dynamic => FeatureBlock::DynamicTemporalBehavioral,
            Arm::Comparable => FeatureBlock::EarlyWindowBehavior,
        }
    }
}

/// Runs `fit_eval(None)` for the full model and `fit_eval(Some(block))` per
/// removed block. `fit_eval` must refit preprocessing and the model on the
/// same split each time.
pub fn run_ablation<F>(model: &str, arm: Arm, blocks: &[FeatureBlock], fit_eval: F) -> Result<AblationResult>
where
    F: Fn(Option<FeatureBlock>) -> Result<MetricReport>,
{
    if blocks.is_empty() {
        return Err(Error::Invalid("no blocks to ablate".into()));
    }
    let full = fit_eval(None)?;
    let mut rows = Vec::with_capacity(blocks.len());
    for &block in blocks {
        let ablated = fit_eval(Some(block))?;
        rows.push(AblationRow {
            model: model.to_string(),
            arm,
            removed_block: block,
            delta_ibs: (arm == Arm::Comparable).then_some(ablated.ibs - full.ibs),
            delta_td: ablated.td_concordance - full.td_concordance,
        });
    }
    let delta = |b: FeatureBlock| rows.iter().find(|r| r.removed_block == b).and_then(|r| r.delta_ibs);
    let ibs_ratio = match (delta(arm.temporal_block()), delta(FeatureBlock::StaticStructural)) {
        (Some(t), Some(s)) if s != 0.0 => Some(t / s),
        _ => None,
    };
    Ok(AblationResult {
        model: model.to_string(),
        arm,
        full,
        rows,
        ibs_ratio,
    })
}
