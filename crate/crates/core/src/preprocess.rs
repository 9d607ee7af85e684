//! Train-only preprocessing: median imputation, standardization and one-hot
//! encoding with an explicit missing level, producing block-tagged design
//! matrices.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    CovariateValue, EarlyWindowSummary, EnrollmentRecord, PersonPeriodPanel, STATIC_CATEGORICAL, STATIC_NUMERIC,
};
use crate::scalar::Scalar;

pub const STD_FLOOR: f64 = 1e-8;
pub const MISSING_LEVEL: &str = "__missing__";
/// Name of the week column in dynamic frames.
pub const WEEK_COLUMN: &str = "week";

pub const DYNAMIC_FEATURES: [&str; 7] = [
    "total_clicks_week",
    "n_vle_rows_week",
    "n_distinct_sites_week",
    "active_this_week",
    "cum_clicks_until_t",
    "recency",
    "streak",
];
pub const EARLY_WINDOW_FEATURES: [&str; 3] = ["clicks_first_w", "active_weeks_first_w", "mean_clicks_first_w"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureBlock {
    StaticStructural,
    DynamicTemporalBehavioral,
    DiscreteTimeIndex,
    EarlyWindowBehavior,
}

impl FeatureBlock {
    pub const ALL: [FeatureBlock; 4] = [
        FeatureBlock::StaticStructural,
        FeatureBlock::DynamicTemporalBehavioral,
        FeatureBlock::DiscreteTimeIndex,
        FeatureBlock::EarlyWindowBehavior,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureBlock::StaticStructural => "static_structural",
            FeatureBlock::DynamicTemporalBehavioral => "dynamic_temporal_behavioral",
            FeatureBlock::DiscreteTimeIndex => "discrete_time_index",
            FeatureBlock::EarlyWindowBehavior => "early_window_behavior",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown feature block `{s}`")))
    }
}

impl std::fmt::Display for FeatureBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a raw column is transformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Numeric,
    Categorical,
    /// Copied unchanged; must be present on every row.
    Passthrough,
}

#[derive(Debug, Clone)]
pub enum FrameColumn {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<Arc<str>>>),
}

impl FrameColumn {
    pub fn len(&self) -> usize {
        match self {
            FrameColumn::Numeric(v) => v.len(),
            FrameColumn::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> FrameColumn {
        match self {
            FrameColumn::Numeric(v) => FrameColumn::Numeric(rows.iter().map(|&r| v[r]).collect()),
            FrameColumn::Categorical(v) => FrameColumn::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameFeature {
    pub name: String,
    pub role: FeatureRole,
    pub block: FeatureBlock,
    pub values: FrameColumn,
}

/// Raw (pre-encoding) feature table, column-major.
#[derive(Debug, Clone, Default)]
pub struct FeatureFrame {
    pub row_ids: Vec<String>,
    pub features: Vec<FrameFeature>,
}

impl FeatureFrame {
    pub fn new(row_ids: Vec<String>) -> Self {
        Self {
            row_ids,
            features: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn push_numeric(&mut self, name: &str, block: FeatureBlock, values: Vec<Option<f64>>) {
        self.push(name, FeatureRole::Numeric, block, FrameColumn::Numeric(values));
    }

    pub fn push_categorical(&mut self, name: &str, block: FeatureBlock, values: Vec<Option<Arc<str>>>) {
        self.push(name, FeatureRole::Categorical, block, FrameColumn::Categorical(values));
    }

    pub fn push_passthrough(&mut self, name: &str, block: FeatureBlock, values: Vec<f64>) {
        let values = values.into_iter().map(Some).collect();
        self.push(name, FeatureRole::Passthrough, block, FrameColumn::Numeric(values));
    }

    fn push(&mut self, name: &str, role: FeatureRole, block: FeatureBlock, values: FrameColumn) {
        assert_eq!(values.len(), self.n_rows(), "column `{name}` has the wrong length");
        self.features.push(FrameFeature {
            name: name.to_string(),
            role,
            block,
            values,
        });
    }

    pub fn feature(&self, name: &str) -> Option<&FrameFeature> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Drops every feature of `block`.
    pub fn without_block(&self, block: FeatureBlock) -> FeatureFrame {
        FeatureFrame {
            row_ids: self.row_ids.clone(),
            features: self.features.iter().filter(|f| f.block != block).cloned().collect(),
        }
    }

    pub fn blocks(&self) -> BTreeSet<FeatureBlock> {
        self.features.iter().map(|f| f.block).collect()
    }

    /// Row subset in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureFrame {
        FeatureFrame {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            features: self
                .features
                .iter()
                .map(|f| FrameFeature {
                    values: f.values.select(rows),
                    ..f.clone()
                })
                .collect(),
        }
    }
}

fn static_values(records: &[&EnrollmentRecord], frame: &mut FeatureFrame) {
    let mut interned: HashMap<String, Arc<str>> = HashMap::new();
    for name in STATIC_CATEGORICAL {
        let vals = records
            .iter()
            .map(|r| {
                r.static_covariates.get(name).and_then(|v| match v {
                    CovariateValue::Categorical(s) => Some(s.clone()),
                    CovariateValue::Numeric(x) => Some(x.to_string()),
                    CovariateValue::Missing => None,
                })
            })
            .map(|v| v.map(|s| interned.entry(s.clone()).or_insert_with(|| Arc::from(s.as_str())).clone()))
            .collect();
        frame.push_categorical(name, FeatureBlock::StaticStructural, vals);
    }
    for name in STATIC_NUMERIC {
        let vals = records
            .iter()
            .map(|r| r.static_covariates.get(name).and_then(CovariateValue::as_numeric))
            .collect();
        frame.push_numeric(name, FeatureBlock::StaticStructural, vals);
    }
}

/// Enrollment-level frame for the comparable arm: static fields plus the
/// early-window summaries (matched by enrollment id).
pub fn comparable_frame(records: &[EnrollmentRecord], early: &[EarlyWindowSummary]) -> Result<FeatureFrame> {
    let by_id: HashMap<&str, &EarlyWindowSummary> = early.iter().map(|e| (e.enrollment_id.as_str(), e)).collect();
    let mut frame = FeatureFrame::new(records.iter().map(|r| r.enrollment_id.clone()).collect());
    let refs: Vec<&EnrollmentRecord> = records.iter().collect();
    static_values(&refs, &mut frame);
    let mut summaries = Vec::with_capacity(records.len());
    for (row, r) in records.iter().enumerate() {
        let s = by_id.get(r.enrollment_id.as_str()).ok_or_else(|| Error::Data {
            row,
            message: format!("no early-window summary for `{}`", r.enrollment_id),
        })?;
        summaries.push(*s);
    }
    frame.push_numeric(
        "clicks_first_w",
        FeatureBlock::EarlyWindowBehavior,
        summaries.iter().map(|s| Some(s.clicks_first_w as f64)).collect(),
    );
    frame.push_numeric(
        "active_weeks_first_w",
        FeatureBlock::EarlyWindowBehavior,
        summaries.iter().map(|s| Some(f64::from(s.active_weeks_first_w))).collect(),
    );
    frame.push_numeric(
        "mean_clicks_first_w",
        FeatureBlock::EarlyWindowBehavior,
        summaries.iter().map(|s| Some(s.mean_clicks_first_w)).collect(),
    );
    Ok(frame)
}

/// Person-week frame for the dynamic arm. `records` must be the record list the
/// panel was expanded from.
pub fn dynamic_frame(records: &[EnrollmentRecord], panel: &PersonPeriodPanel) -> FeatureFrame {
    let ids = panel
        .rows
        .iter()
        .map(|p| format!("{}@{}", records[p.enrollment].enrollment_id, p.week))
        .collect();
    let mut frame = FeatureFrame::new(ids);
    let refs: Vec<&EnrollmentRecord> = panel.rows.iter().map(|p| &records[p.enrollment]).collect();
    static_values(&refs, &mut frame);
    let col = |f: &dyn Fn(&crate::ingest::PanelRow) -> f64| panel.rows.iter().map(|p| Some(f(p))).collect();
    let block = FeatureBlock::DynamicTemporalBehavioral;
    frame.push_numeric(DYNAMIC_FEATURES[0], block, col(&|p| p.total_clicks_week as f64));
    frame.push_numeric(DYNAMIC_FEATURES[1], block, col(&|p| p.n_vle_rows_week as f64));
    frame.push_numeric(DYNAMIC_FEATURES[2], block, col(&|p| p.n_distinct_sites_week as f64));
    frame.push_numeric(DYNAMIC_FEATURES[3], block, col(&|p| if p.active_this_week { 1.0 } else { 0.0 }));
    frame.push_numeric(DYNAMIC_FEATURES[4], block, col(&|p| p.cum_clicks_until_t as f64));
    frame.push_numeric(DYNAMIC_FEATURES[5], block, col(&|p| f64::from(p.recency)));
    frame.push_numeric(DYNAMIC_FEATURES[6], block, col(&|p| f64::from(p.streak)));
    frame.push_passthrough(
        WEEK_COLUMN,
        FeatureBlock::DiscreteTimeIndex,
        panel.rows.iter().map(|p| f64::from(p.week)).collect(),
    );
    frame
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum FeatureTransform {
    Numeric(NumericStats),
    /// Sorted observed levels followed by the missing level.
    Categorical { levels: Vec<String> },
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedFeature {
    pub name: String,
    pub block: FeatureBlock,
    pub transform: FeatureTransform,
}

/// One encoded column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputColumn {
    pub name: String,
    pub block: FeatureBlock,
    /// The raw feature this column was derived from.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub features: Vec<PlannedFeature>,
    pub columns: Vec<OutputColumn>,
}

impl PreprocessPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn numeric_stats(name: &str, values: &[Option<f64>]) -> NumericStats {
    let mut present: Vec<f64> = values.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    if present.is_empty() {
        warn!("numeric feature `{name}` is entirely missing in training rows; using median 0");
        return NumericStats {
            median: 0.0,
            mean: 0.0,
            std: 1.0,
        };
    }
    present.sort_by(f64::total_cmp);
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let var = present.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    NumericStats {
        median: median(&present),
        mean,
        std: var.sqrt().max(STD_FLOOR),
    }
}

/// Fits imputation, scaling and encoding statistics on `train`.
pub fn fit_plan(train: &FeatureFrame) -> Result<PreprocessPlan> {
    if train.n_rows() == 0 {
        return Err(Error::Empty("no training rows to fit preprocessing".into()));
    }
    let mut features = Vec::with_capacity(train.features.len());
    let mut columns = Vec::new();
    for f in &train.features {
        let transform = match (&f.role, &f.values) {
            (FeatureRole::Numeric, FrameColumn::Numeric(v)) => {
                columns.push(OutputColumn {
                    name: f.name.clone(),
                    block: f.block,
                    source: f.name.clone(),
                });
                FeatureTransform::Numeric(numeric_stats(&f.name, v))
            }
            (FeatureRole::Passthrough, FrameColumn::Numeric(_)) => {
                columns.push(OutputColumn {
                    name: f.name.clone(),
                    block: f.block,
                    source: f.name.clone(),
                });
                FeatureTransform::Passthrough
            }
            (FeatureRole::Categorical, FrameColumn::Categorical(v)) => {
                let observed: BTreeSet<&str> = v.iter().flatten().map(|s| &**s).collect();
                let mut levels: Vec<String> = observed.into_iter().map(str::to_string).collect();
                levels.push(MISSING_LEVEL.to_string());
                for level in &levels {
                    columns.push(OutputColumn {
                        name: format!("{}={}", f.name, level),
                        block: f.block,
                        source: f.name.clone(),
                    });
                }
                FeatureTransform::Categorical { levels }
            }
            _ => {
                return Err(Error::Schema(format!(
                    "feature `{}` storage does not match its role",
                    f.name
                )))
            }
        };
        features.push(PlannedFeature {
            name: f.name.clone(),
            block: f.block,
            transform,
        });
    }
    Ok(PreprocessPlan { features, columns })
}

/// Encoded, fully numeric design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    pub row_ids: Vec<String>,
    pub x: Array2<T>,
    pub columns: Vec<OutputColumn>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Indices of the columns tagged with `block`.
    pub fn block_columns(&self, block: FeatureBlock) -> Vec<usize> {
        (0..self.columns.len()).filter(|&j| self.columns[j].block == block).collect()
    }

    /// Source features in first-appearance order, each with its column indices.
    pub fn source_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (j, c) in self.columns.iter().enumerate() {
            match groups.iter_mut().find(|(s, _)| *s == c.source) {
                Some((_, cols)) => cols.push(j),
                None => groups.push((c.source.clone(), vec![j])),
            }
        }
        groups
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Row subset in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix<T> {
        DesignMatrix {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            x: self.x.select(ndarray::Axis(0), rows),
            columns: self.columns.clone(),
        }
    }
}

/// Encodes `frame` with a fitted plan. Extra frame features are ignored; a
/// planned feature absent from the frame is a schema error.
pub fn apply_plan<T: Scalar>(plan: &PreprocessPlan, frame: &FeatureFrame) -> Result<DesignMatrix<T>> {
    let n = frame.n_rows();
    let mut x = Array2::<T>::zeros((n, plan.columns.len()));
    let mut col = 0;
    for pf in &plan.features {
        let f = frame
            .feature(&pf.name)
            .ok_or_else(|| Error::missing_column("feature frame", pf.name.clone()))?;
        match (&pf.transform, &f.values) {
            (FeatureTransform::Numeric(s), FrameColumn::Numeric(v)) => {
                for (i, value) in v.iter().enumerate() {
                    let raw = value.filter(|x| x.is_finite()).unwrap_or(s.median);
                    x[[i, col]] = T::lit((raw - s.mean) / s.std);
                }
                col += 1;
            }
            (FeatureTransform::Passthrough, FrameColumn::Numeric(v)) => {
                for (i, value) in v.iter().enumerate() {
                    let raw = value.ok_or_else(|| Error::Data {
                        row: i,
                        message: format!("passthrough feature `{}` is missing", pf.name),
                    })?;
                    x[[i, col]] = T::lit(raw);
                }
                col += 1;
            }
            (FeatureTransform::Categorical { levels }, FrameColumn::Categorical(v)) => {
                let index: HashMap<&str, usize> = levels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
                let missing = levels.len() - 1;
                for (i, value) in v.iter().enumerate() {
                    let k = match value {
                        None => Some(missing),
                        Some(s) => index.get(&**s).copied(),
                    };
                    if let Some(k) = k {
                        x[[i, col + k]] = T::one();
                    }
                }
                col += levels.len();
            }
            _ => {
                return Err(Error::Schema(format!(
                    "feature `{}` changed type between fit and apply",
                    pf.name
                )))
            }
        }
    }
    debug_assert_eq!(col, plan.columns.len());
    Ok(DesignMatrix {
        row_ids: frame.row_ids.clone(),
        x,
        columns: plan.columns.clone(),
    })
}
