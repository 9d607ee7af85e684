//! Grouped permutation importance over source features and feature blocks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{antolini_concordance, ibs, km_censoring};
use crate::prediction::SurvivalPrediction;
use crate::preprocess::{DesignMatrix, FeatureBlock};
use crate::scalar::Scalar;
use crate::seed::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    Ibs,
    TdConcordance,
}

impl ImportanceMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceMetric::Ibs => "ibs",
            ImportanceMetric::TdConcordance => "td_concordance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    /// Source feature name, or the block name for block rows.
    pub name: String,
    pub block: FeatureBlock,
    pub is_block: bool,
    /// Mean degradation over repeats; positive means the metric got worse.
    pub mean: f64,
    pub std: f64,
    pub repeats: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceResult {
    pub model: String,
    pub metric: ImportanceMetric,
    pub base_value: f64,
    pub entries: Vec<ImportanceEntry>,
    pub dominant_block: Option<FeatureBlock>,
    pub top_driver: Option<String>,
    pub seed: u64,
}

fn score<T: Scalar>(
    pred: &SurvivalPrediction<T>,
    times: &[u32],
    events: &[bool],
    metric: ImportanceMetric,
    tau: u32,
) -> Result<f64> {
    Ok(match metric {
        ImportanceMetric::Ibs => {
            let g = km_censoring::<T>(times, events, pred.grid_end())?;
            ibs(pred, times, events, &g, tau)?.to_f64_lossy()
        }
        ImportanceMetric::TdConcordance => antolini_concordance(pred, times, events)?.to_f64_lossy(),
    })
}

fn degradation(metric: ImportanceMetric, base: f64, permuted: f64) -> f64 {
    match metric {
        ImportanceMetric::Ibs => permuted - base,
        ImportanceMetric::TdConcordance => base - permuted,
    }
}

/// Degradation after reordering the rows of `columns` jointly by `perm`.
pub fn permutation_degradation<T, F>(
    dm: &DesignMatrix<T>,
    columns: &[usize],
    perm: &[usize],
    predict: &F,
    times: &[u32],
    events: &[bool],
    metric: ImportanceMetric,
    tau: u32,
    base: f64,
) -> Result<f64>
where
    T: Scalar,
    F: Fn(&DesignMatrix<T>) -> Result<SurvivalPrediction<T>> + Sync,
{
    let mut permuted = dm.clone();
    for &j in columns {
        let col: Vec<T> = perm.iter().map(|&r| dm.x[[r, j]]).collect();
        for (i, v) in col.into_iter().enumerate() {
            permuted.x[[i, j]] = v;
        }
    }
    let pred = predict(&permuted)?;
    Ok(degradation(metric, base, score(&pred, times, events, metric, tau)?))
}

/// Permutes each source feature (all its encoded columns jointly) and each
/// block, `repeats` times, and records the mean degradation. `predict` maps a
/// design matrix to enrollment-level curves aligned with `times`/`events`.
pub fn grouped_permutation_importance<T, F>(
    model: &str,
    dm: &DesignMatrix<T>,
    predict: F,
    times: &[u32],
    events: &[bool],
    metric: ImportanceMetric,
    repeats: usize,
    tau: u32,
    seed: u64,
) -> Result<ImportanceResult>
where
    T: Scalar,
    F: Fn(&DesignMatrix<T>) -> Result<SurvivalPrediction<T>> + Sync,
{
    if repeats == 0 {
        return Err(Error::Invalid("permutation importance needs at least one repeat".into()));
    }
    let base = score(&predict(dm)?, times, events, metric, tau)?;
    let mut groups: Vec<(String, FeatureBlock, bool, Vec<usize>)> = dm
        .source_groups()
        .into_iter()
        .map(|(name, cols)| {
            let block = dm.columns[cols[0]].block;
            (name, block, false, cols)
        })
        .collect();
    for block in FeatureBlock::ALL {
        let cols = dm.block_columns(block);
        if !cols.is_empty() {
            groups.push((block.as_str().to_string(), block, true, cols));
        }
    }
    let n = dm.n_rows();
    let jobs: Vec<(usize, usize)> = (0..groups.len()).flat_map(|g| (0..repeats).map(move |r| (g, r))).collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, (g * repeats + r) as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            permutation_degradation(dm, &groups[g].3, &perm, &predict, times, events, metric, tau, base)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<ImportanceEntry> = groups
        .into_iter()
        .enumerate()
        .map(|(g, (name, block, is_block, _))| {
            let reps = values[g * repeats..(g + 1) * repeats].to_vec();
            let mean = reps.iter().sum::<f64>() / repeats as f64;
            let var = reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / repeats as f64;
            ImportanceEntry {
                name,
                block,
                is_block,
                mean,
                std: var.sqrt(),
                repeats: reps,
            }
        })
        .collect();
    let argmax = |blocks: bool| {
        entries
            .iter()
            .filter(|e| e.is_block == blocks)
            .fold(None::<&ImportanceEntry>, |best, e| match best {
                Some(b) if b.mean >= e.mean => Some(b),
                _ => Some(e),
            })
    };
    Ok(ImportanceResult {
        model: model.to_string(),
        metric,
        base_value: base,
        dominant_block: argmax(true).map(|e| e.block),
        top_driver: argmax(false).map(|e| e.name.clone()),
        entries,
        seed,
    })
}
