use std::collections::BTreeMap;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{Analyses, BenchConfig};
use super::pipeline::{
    enabled, prepare, score_prediction, select_hyper, ArmData, CohortSummary, Family, Fitted, Hyper, Prepared,
    TuningScore,
};
use crate::analysis::{
    bootstrap_ranks, grouped_permutation_importance, ph_audit, run_ablation, AblationResult, Arm, BootstrapResult,
    ImportanceResult, Metric, PhAuditResult,
};
use crate::error::{Error, Result};
use crate::metrics::{calibration, CalibrationReport};
use crate::metrics::{km_censoring, MetricReport};
use crate::prediction::SurvivalPrediction;
use crate::preprocess::FeatureBlock;
use crate::seed::{derive_seed, Stage};
use crate::split::SplitAudit;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub arm: Arm,
    pub model: Family,
    pub status: Status,
    pub hyperparameters: Option<Hyper>,
    pub tuning: Vec<TuningScore>,
    pub metrics: Option<MetricReport>,
    pub stage: String,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub arm: Arm,
    pub model: Family,
    pub report: CalibrationReport,
    pub stage: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmBootstrap {
    pub arm: Arm,
    pub result: BootstrapResult,
    pub stage: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAblation {
    pub arm: Arm,
    pub result: AblationResult,
    pub stage: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelImportance {
    pub arm: Arm,
    pub result: ImportanceResult,
    pub stage: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhSection {
    pub arm: Arm,
    pub model: Family,
    pub result: PhAuditResult,
    pub stage: String,
    pub seed: u64,
}

/// A stage that did not produce its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub arm: Option<Arm>,
    pub model: Option<Family>,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub w: u32,
    pub model: Family,
    pub status: Status,
    pub ibs: Option<f64>,
    pub td_concordance: Option<f64>,
    pub stage: String,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub toolkit_version: String,
    pub config: BenchConfig,
    pub analyses_run: Analyses,
    pub seeds: BTreeMap<String, u64>,
    pub cohort: CohortSummary,
    pub grid_end: u32,
    pub split_audit: SplitAudit,
    pub models: Vec<ModelRow>,
    pub calibration: Vec<CalibrationRow>,
    pub bootstrap: Vec<ArmBootstrap>,
    pub ablation: Vec<ModelAblation>,
    pub importance: Vec<ModelImportance>,
    pub ph_audit: Option<PhSection>,
    pub window_grid: Vec<WindowRow>,
    pub failures: Vec<StageFailure>,
    pub complete: bool,
}

impl BenchmarkReport {
    pub fn model(&self, family: Family) -> Option<&ModelRow> {
        self.models.iter().find(|m| m.model == family)
    }

    pub fn metrics(&self, family: Family) -> Option<&MetricReport> {
        self.model(family).and_then(|m| m.metrics.as_ref())
    }
}

fn forest_seed(master: u64) -> u64 {
    derive_seed(master, Stage::Forest, 0)
}

fn family_seed(config: &BenchConfig, prep: &Prepared, family: Family) -> u64 {
    if family == Family::Rsf {
        forest_seed(config.seed)
    } else {
        prep.split_seed
    }
}

struct FittedModel {
    family: Family,
    hyper: Hyper,
    model: Fitted,
    pred: SurvivalPrediction<f64>,
}

struct Recorder {
    failures: Vec<StageFailure>,
}

impl Recorder {
    fn fail(&mut self, arm: Option<Arm>, model: Option<Family>, stage: &str, err: &Error) {
        let who = model.map(Family::as_str).unwrap_or("-");
        warn!("stage `{stage}` failed for {who}: {err}");
        self.failures.push(StageFailure {
            arm,
            model,
            stage: stage.to_string(),
            error: err.to_string(),
        });
    }
}

/// Runs the full two-arm benchmark with the analyses enabled in the config.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchmarkReport> {
    run_benchmark_with(config, &config.analyses)
}

/// As [`run_benchmark`] with an explicit analysis selection.
pub fn run_benchmark_with(config: &BenchConfig, analyses: &Analyses) -> Result<BenchmarkReport> {
    let prep = prepare(config)?;
    run_prepared(config, analyses, &prep)
}

pub fn run_prepared(config: &BenchConfig, analyses: &Analyses, prep: &Prepared) -> Result<BenchmarkReport> {
    let mut rec = Recorder { failures: Vec::new() };
    let mut seeds = BTreeMap::new();
    seeds.insert("master".to_string(), config.seed);
    seeds.insert("split".to_string(), prep.split_seed);
    if let Some(s) = prep.synth_seed {
        seeds.insert("synth".to_string(), s);
    }
    seeds.insert("forest".to_string(), forest_seed(config.seed));

    let mut models = Vec::new();
    let mut calib = Vec::new();
    let mut boots = Vec::new();
    let mut ablations = Vec::new();
    let mut importances = Vec::new();
    let mut ph = None;

    for (arm_idx, arm) in [Arm::Dynamic, Arm::Comparable].into_iter().enumerate() {
        if !config.has_arm(arm) {
            continue;
        }
        info!("{arm} arm: building features");
        let data = ArmData::build(arm, &prep.train, &prep.test, config.early_window, prep.grid_end)
            .map_err(|e| e.in_stage(format!("{arm}.features")))?;
        let (times, events) = data.test_outcomes();
        let designs = data.designs(None).map_err(|e| e.in_stage(format!("{arm}.preprocess")))?;

        let mut fitted: Vec<FittedModel> = Vec::new();
        for &family in Family::of_arm(arm) {
            if !enabled(config, family) {
                continue;
            }
            let seed = family_seed(config, prep, family);
            info!("{arm} arm: fitting {}", family.as_str());
            let outcome = select_hyper(config, prep, arm, family, forest_seed(config.seed)).and_then(|(hyper, tuning)| {
                let model = data.fit(family, &hyper, &designs.0, forest_seed(config.seed))?;
                let pred = data.predict(&model, &designs.1)?;
                pred.validate()?;
                let metrics = score_prediction(&pred, times, events, config)?;
                Ok((hyper, tuning, model, pred, metrics))
            });
            match outcome {
                Ok((hyper, tuning, model, pred, metrics)) => {
                    models.push(ModelRow {
                        arm,
                        model: family,
                        status: Status::Ok,
                        hyperparameters: Some(hyper.clone()),
                        tuning,
                        metrics: Some(metrics),
                        stage: "fit".into(),
                        seed,
                        error: None,
                    });
                    fitted.push(FittedModel {
                        family,
                        hyper,
                        model,
                        pred,
                    });
                }
                Err(e) => {
                    rec.fail(Some(arm), Some(family), "fit", &e);
                    models.push(ModelRow {
                        arm,
                        model: family,
                        status: Status::Failed,
                        hyperparameters: None,
                        tuning: Vec::new(),
                        metrics: None,
                        stage: "fit".into(),
                        seed,
                        error: Some(e.to_string()),
                    });
                }
            }
        }

        // calibration against the test-set censoring estimate
        match km_censoring::<f64>(times, events, prep.grid_end) {
            Ok(g) => {
                for f in &fitted {
                    for &h in &config.horizons {
                        match calibration(&f.pred, times, events, h, config.calibration_bins, &g) {
                            Ok(report) => calib.push(CalibrationRow {
                                arm,
                                model: f.family,
                                report,
                                stage: "calibration".into(),
                                seed: family_seed(config, prep, f.family),
                            }),
                            Err(e) => rec.fail(Some(arm), Some(f.family), "calibration", &e),
                        }
                    }
                }
            }
            Err(e) => rec.fail(Some(arm), None, "calibration", &e),
        }

        if analyses.bootstrap && config.bootstrap_arms.contains(&arm) && !fitted.is_empty() {
            let seed = derive_seed(config.seed, Stage::Bootstrap, arm_idx as u64);
            seeds.insert(format!("bootstrap.{arm}"), seed);
            let preds: Vec<(String, SurvivalPrediction<f64>)> = fitted
                .iter()
                .map(|f| (f.family.as_str().to_string(), f.pred.clone()))
                .collect();
            let mut metrics = vec![Metric::Ibs, Metric::TdConcordance];
            metrics.extend(config.horizons.iter().map(|&h| Metric::Brier(h)));
            info!("{arm} arm: bootstrap over {} resamples", config.bootstrap_resamples);
            match bootstrap_ranks(&preds, times, events, &metrics, config.tau_max, config.bootstrap_resamples, seed) {
                Ok(result) => boots.push(ArmBootstrap {
                    arm,
                    result,
                    stage: "bootstrap".into(),
                    seed,
                }),
                Err(e) => rec.fail(Some(arm), None, "bootstrap", &e),
            }
        }

        if analyses.ablation {
            let present = data.blocks();
            let blocks: Vec<FeatureBlock> = [FeatureBlock::StaticStructural, arm.temporal_block()]
                .into_iter()
                .filter(|b| present.contains(b))
                .collect();
            for f in &fitted {
                let seed = family_seed(config, prep, f.family);
                info!("{arm} arm: ablating {}", f.family.as_str());
                let result = run_ablation(f.family.as_str(), arm, &blocks, |drop| {
                    let pred = data.fit_predict(f.family, &f.hyper, drop, forest_seed(config.seed))?;
                    score_prediction(&pred, times, events, config)
                });
                match result {
                    Ok(result) => ablations.push(ModelAblation {
                        arm,
                        result,
                        stage: "ablation".into(),
                        seed,
                    }),
                    Err(e) => rec.fail(Some(arm), Some(f.family), "ablation", &e),
                }
            }
        }

        if analyses.importance {
            for f in &fitted {
                let idx = arm_idx as u64 * 16 + f.family as u64;
                let seed = derive_seed(config.seed, Stage::Importance, idx);
                seeds.insert(format!("importance.{}", f.family.as_str()), seed);
                info!("{arm} arm: permutation importance for {}", f.family.as_str());
                let result = grouped_permutation_importance(
                    f.family.as_str(),
                    &designs.1,
                    |dm| data.predict(&f.model, dm),
                    times,
                    events,
                    config.importance_metric,
                    config.importance_repeats,
                    config.tau_max,
                    seed,
                );
                match result {
                    Ok(result) => importances.push(ModelImportance {
                        arm,
                        result,
                        stage: "importance".into(),
                        seed,
                    }),
                    Err(e) => rec.fail(Some(arm), Some(f.family), "importance", &e),
                }
            }
        }

        if analyses.ph_audit && arm == Arm::Comparable {
            if let Some(f) = fitted.iter().find(|f| f.family == Family::Cox) {
                let cox = f.model.as_cox().expect("cox family holds a Cox model");
                let ArmData::Comparable(cd) = &data else { unreachable!() };
                match ph_audit(cox, &designs.0, &cd.train_times, &cd.train_events, config.ph_alpha) {
                    Ok(result) => {
                        ph = Some(PhSection {
                            arm,
                            model: Family::Cox,
                            result,
                            stage: "ph_audit".into(),
                            seed: prep.split_seed,
                        })
                    }
                    Err(e) => rec.fail(Some(arm), Some(Family::Cox), "ph_audit", &e),
                }
            } else if enabled(config, Family::Cox) {
                rec.fail(
                    Some(arm),
                    Some(Family::Cox),
                    "ph_audit",
                    &Error::Invalid("Cox fit unavailable".into()),
                );
            }
        }
    }

    Ok(BenchmarkReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config: config.clone(),
        analyses_run: analyses.clone(),
        seeds,
        cohort: prep.summary.clone(),
        grid_end: prep.grid_end,
        split_audit: prep.audit.clone(),
        models,
        calibration: calib,
        bootstrap: boots,
        ablation: ablations,
        importance: importances,
        ph_audit: ph,
        window_grid: Vec::new(),
        complete: rec.failures.is_empty(),
        failures: rec.failures,
    })
}

/// Reruns the comparable arm for each early-window length in the grid, with
/// the hyperparameters selected at the canonical window.
pub fn run_window_sensitivity(config: &BenchConfig) -> Result<Vec<WindowRow>> {
    let prep = prepare(config)?;
    window_sensitivity(config, &prep)
}

pub fn window_sensitivity(config: &BenchConfig, prep: &Prepared) -> Result<Vec<WindowRow>> {
    if !config.has_arm(Arm::Comparable) {
        return Err(Error::Config("window sensitivity needs the comparable arm".into()));
    }
    let seed_f = forest_seed(config.seed);
    let mut hypers = Vec::new();
    for &family in Family::of_arm(Arm::Comparable) {
        if enabled(config, family) {
            hypers.push((family, select_hyper(config, prep, Arm::Comparable, family, seed_f).map(|h| h.0)));
        }
    }
    let mut rows = Vec::new();
    for &w in &config.window_grid {
        info!("window grid: w = {w}");
        let data = ArmData::build(Arm::Comparable, &prep.train, &prep.test, w, prep.grid_end)
            .map_err(|e| e.in_stage(format!("window_grid.w{w}")))?;
        let (times, events) = data.test_outcomes();
        for (family, hyper) in &hypers {
            let result = hyper.as_ref().map_err(|e| Error::Internal(e.to_string())).and_then(|h| {
                let pred = data.fit_predict(*family, h, None, seed_f)?;
                score_prediction(&pred, times, events, config)
            });
            let seed = family_seed(config, prep, *family);
            rows.push(match result {
                Ok(m) => WindowRow {
                    w,
                    model: *family,
                    status: Status::Ok,
                    ibs: Some(m.ibs),
                    td_concordance: Some(m.td_concordance),
                    stage: "window_grid".into(),
                    seed,
                    error: None,
                },
                Err(e) => {
                    warn!("window grid w={w} {}: {e}", family.as_str());
                    WindowRow {
                        w,
                        model: *family,
                        status: Status::Failed,
                        ibs: None,
                        td_concordance: None,
                        stage: "window_grid".into(),
                        seed,
                        error: Some(e.to_string()),
                    }
                }
            });
        }
    }
    Ok(rows)
}
