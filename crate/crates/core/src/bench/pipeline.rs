use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{BenchConfig, DataSource};
use crate::analysis::Arm;
use crate::comparable::{
    fit_cox, fit_rsf, fit_weibull_aft, CoxModel, ForestParams, SurvivalForest, SurvivalModel, WeibullAftModel,
};
use crate::dynamic::{fit_logistic_hazard, fit_poisson_pem, survival_from_rows, DiscreteHazardModel};
use crate::error::{Error, Result};
use crate::ingest::synth::synth_generate;
use crate::ingest::{
    compute_early_window, expand_for_evaluation, expand_person_period, load_cohort, load_oulad, ColumnMap, Cohort,
};
use crate::metrics::{ibs, km_censoring, MetricReport};
use crate::optim::NewtonOptions;
use crate::prediction::SurvivalPrediction;
use crate::preprocess::{apply_plan, comparable_frame, dynamic_frame, fit_plan, DesignMatrix, FeatureBlock, FeatureFrame};
use crate::seed::{derive_seed, Stage};
use crate::split::{audit_split, stratified_split, Split, SplitAudit, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LogisticHazard,
    PoissonPem,
    Cox,
    WeibullAft,
    Rsf,
}

impl Family {
    pub const DYNAMIC: [Family; 2] = [Family::LogisticHazard, Family::PoissonPem];
    pub const COMPARABLE: [Family; 3] = [Family::Cox, Family::WeibullAft, Family::Rsf];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::LogisticHazard => "logistic_hazard",
            Family::PoissonPem => "poisson_pem",
            Family::Cox => "cox",
            Family::WeibullAft => "weibull_aft",
            Family::Rsf => "rsf",
        }
    }

    pub fn arm(self) -> Arm {
        match self {
            Family::LogisticHazard | Family::PoissonPem => Arm::Dynamic,
            _ => Arm::Comparable,
        }
    }

    pub fn of_arm(arm: Arm) -> &'static [Family] {
        match arm {
            Arm::Dynamic => &Self::DYNAMIC,
            Arm::Comparable => &Self::COMPARABLE,
        }
    }
}

/// One hyperparameter setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hyper {
    Lambda { lambda_reg: f64 },
    Forest(ForestParams),
}

impl Hyper {
    fn lambda(&self) -> f64 {
        match self {
            Hyper::Lambda { lambda_reg } => *lambda_reg,
            Hyper::Forest(_) => 0.0,
        }
    }
}

pub fn enabled(config: &BenchConfig, family: Family) -> bool {
    let m = &config.models;
    match family {
        Family::LogisticHazard => m.logistic_hazard.enabled,
        Family::PoissonPem => m.poisson_pem.enabled,
        Family::Cox => m.cox.enabled,
        Family::WeibullAft => m.weibull_aft.enabled,
        Family::Rsf => m.rsf.enabled,
    }
}

pub fn candidates(config: &BenchConfig, family: Family) -> Vec<Hyper> {
    let m = &config.models;
    let lambdas = |g: &super::config::LinearGrid| {
        g.lambda_reg
            .iter()
            .map(|&l| Hyper::Lambda { lambda_reg: l })
            .collect()
    };
    match family {
        Family::LogisticHazard => lambdas(&m.logistic_hazard),
        Family::PoissonPem => lambdas(&m.poisson_pem),
        Family::Cox => lambdas(&m.cox),
        Family::WeibullAft => lambdas(&m.weibull_aft),
        Family::Rsf => m.rsf.candidates().into_iter().map(Hyper::Forest).collect(),
    }
}

/// Description of where the cohort came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub source: String,
    pub n_enrollments: usize,
    pub n_events: usize,
    pub event_rate: f64,
    pub n_activity_rows: usize,
    pub undated_withdrawals: Option<usize>,
    pub missing_registration: Option<usize>,
}

/// Loaded and partitioned cohort shared by both arms.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub summary: CohortSummary,
    pub cohort: Cohort,
    pub split: Split,
    pub audit: SplitAudit,
    pub train: Cohort,
    pub test: Cohort,
    /// Last week of every prediction grid.
    pub grid_end: u32,
    pub split_seed: u64,
    pub synth_seed: Option<u64>,
}

pub fn load_data(config: &BenchConfig) -> Result<(Cohort, CohortSummary, Option<u64>)> {
    let (cohort, source, undated, missing, synth_seed) = match &config.data {
        DataSource::Synthetic(spec) => {
            let seed = derive_seed(config.seed, Stage::Synth, 0);
            let s = synth_generate(spec, seed)?;
            (s.cohort, "synthetic".to_string(), None, None, Some(seed))
        }
        DataSource::Tables { enrollments, activity } => {
            let c = load_cohort(enrollments, activity, &ColumnMap::default())?;
            (c, "tables".to_string(), None, None, None)
        }
        DataSource::Oulad { dir } => {
            let l = load_oulad(dir)?;
            (
                l.cohort,
                "oulad".to_string(),
                Some(l.undated_withdrawals),
                Some(l.missing_registration),
                None,
            )
        }
    };
    if cohort.records.is_empty() {
        return Err(Error::Empty("cohort has no enrollments".into()));
    }
    let summary = CohortSummary {
        source,
        n_enrollments: cohort.records.len(),
        n_events: cohort.event_count(),
        event_rate: cohort.event_rate(),
        n_activity_rows: cohort.activity.len(),
        undated_withdrawals: undated,
        missing_registration: missing,
    };
    Ok((cohort, summary, synth_seed))
}

pub fn prepare(config: &BenchConfig) -> Result<Prepared> {
    config.validate()?;
    let (cohort, summary, synth_seed) = load_data(config).map_err(|e| e.in_stage("ingest"))?;
    info!(
        "cohort: {} enrollments, {} events ({})",
        summary.n_enrollments, summary.n_events, summary.source
    );
    let split_seed = derive_seed(config.seed, Stage::Split, 0);
    let spec = SplitSpec {
        test_fraction: config.test_fraction,
        seed: split_seed,
        ..SplitSpec::default()
    };
    let split = stratified_split(&cohort.records, &spec).map_err(|e| e.in_stage("split"))?;
    let audit = audit_split(&cohort.records, &split.train, &split.test);
    if audit.identity_leakage {
        return Err(Error::Internal("enrollment ids appear in both partitions".into()).in_stage("split"));
    }
    let train = cohort.subset(&split.train);
    let test = cohort.subset(&split.test);
    let max_t = cohort.records.iter().map(|r| r.observed_time_weeks).max().unwrap_or(0);
    Ok(Prepared {
        summary,
        grid_end: max_t.max(config.tau_max),
        split,
        audit,
        train,
        test,
        cohort,
        split_seed,
        synth_seed,
    })
}

fn outcomes(cohort: &Cohort) -> (Vec<u32>, Vec<bool>) {
    cohort
        .records
        .iter()
        .map(|r| (r.observed_time_weeks, r.event))
        .unzip()
}

/// Enrollment-level frames for the comparable arm.
#[derive(Debug, Clone)]
pub struct ComparableData {
    pub train_frame: FeatureFrame,
    pub test_frame: FeatureFrame,
    pub train_times: Vec<f64>,
    pub train_events: Vec<bool>,
    pub test_times: Vec<u32>,
    pub test_events: Vec<bool>,
    pub grid_end: u32,
}

impl ComparableData {
    pub fn build(train: &Cohort, test: &Cohort, w: u32, grid_end: u32) -> Result<Self> {
        let frame = |c: &Cohort| comparable_frame(&c.records, &compute_early_window(&c.records, &c.activity, w)?);
        let (tr_t, train_events) = outcomes(train);
        let (test_times, test_events) = outcomes(test);
        Ok(Self {
            train_frame: frame(train)?,
            test_frame: frame(test)?,
            train_times: tr_t.into_iter().map(f64::from).collect(),
            train_events,
            test_times,
            test_events,
            grid_end,
        })
    }

    /// Train and test designs with the plan refitted on the (possibly reduced) train frame.
    pub fn designs(&self, drop: Option<FeatureBlock>) -> Result<(DesignMatrix<f64>, DesignMatrix<f64>)> {
        let (tr, te) = match drop {
            Some(b) => (self.train_frame.without_block(b), self.test_frame.without_block(b)),
            None => (self.train_frame.clone(), self.test_frame.clone()),
        };
        if tr.features.is_empty() {
            return Err(Error::Invalid("no features left after block removal".into()));
        }
        let plan = fit_plan(&tr)?;
        Ok((apply_plan(&plan, &tr)?, apply_plan(&plan, &te)?))
    }
}

/// Person-week frames for the dynamic arm; the evaluation panel covers every
/// test enrollment through `grid_end`.
#[derive(Debug, Clone)]
pub struct DynamicData {
    pub train_frame: FeatureFrame,
    pub train_labels: Vec<bool>,
    pub eval_frame: FeatureFrame,
    pub eval_enrollment: Vec<usize>,
    pub eval_week: Vec<u32>,
    pub test_ids: Vec<String>,
    pub test_times: Vec<u32>,
    pub test_events: Vec<bool>,
    pub grid_end: u32,
}

impl DynamicData {
    pub fn build(train: &Cohort, test: &Cohort, grid_end: u32) -> Result<Self> {
        let panel = expand_person_period(&train.records, &train.activity)?;
        let eval = expand_for_evaluation(&test.records, &test.activity, grid_end)?;
        let (test_times, test_events) = outcomes(test);
        Ok(Self {
            train_frame: dynamic_frame(&train.records, &panel),
            train_labels: panel.rows.iter().map(|r| r.label).collect(),
            eval_frame: dynamic_frame(&test.records, &eval),
            eval_enrollment: eval.rows.iter().map(|r| r.enrollment).collect(),
            eval_week: eval.rows.iter().map(|r| r.week).collect(),
            test_ids: test.records.iter().map(|r| r.enrollment_id.clone()).collect(),
            test_times,
            test_events,
            grid_end,
        })
    }

    pub fn designs(&self, drop: Option<FeatureBlock>) -> Result<(DesignMatrix<f64>, DesignMatrix<f64>)> {
        let (tr, ev) = match drop {
            Some(b) => (self.train_frame.without_block(b), self.eval_frame.without_block(b)),
            None => (self.train_frame.clone(), self.eval_frame.clone()),
        };
        if tr.features.is_empty() {
            return Err(Error::Invalid("no features left after block removal".into()));
        }
        let plan = fit_plan(&tr)?;
        Ok((apply_plan(&plan, &tr)?, apply_plan(&plan, &ev)?))
    }

    pub fn curves(&self, model: &DiscreteHazardModel<f64>, eval: &DesignMatrix<f64>) -> Result<SurvivalPrediction<f64>> {
        let hazards = model.predict_weekly_hazard(eval)?;
        survival_from_rows(
            &self.test_ids,
            &self.eval_enrollment,
            &self.eval_week,
            &hazards,
            self.grid_end,
        )
    }
}

/// A fitted model of either arm.
#[derive(Debug, Clone)]
pub enum Fitted {
    Hazard(DiscreteHazardModel<f64>),
    Cox(CoxModel<f64>),
    Weibull(WeibullAftModel<f64>),
    Forest(SurvivalForest<f64>),
}

impl Fitted {
    pub fn as_cox(&self) -> Option<&CoxModel<f64>> {
        match self {
            Fitted::Cox(m) => Some(m),
            _ => None,
        }
    }

    fn enrollment_curves(&self, dm: &DesignMatrix<f64>, grid_end: u32) -> Result<SurvivalPrediction<f64>> {
        match self {
            Fitted::Cox(m) => m.predict_survival_curve(dm, grid_end),
            Fitted::Weibull(m) => m.predict_survival_curve(dm, grid_end),
            Fitted::Forest(m) => m.predict_survival_curve(dm, grid_end),
            Fitted::Hazard(_) => Err(Error::Internal("hazard models predict person-week rows".into())),
        }
    }
}

pub fn newton_options() -> NewtonOptions {
    NewtonOptions::default()
}

pub fn fit_comparable(
    family: Family,
    hyper: &Hyper,
    dm: &DesignMatrix<f64>,
    times: &[f64],
    events: &[bool],
    forest_seed: u64,
) -> Result<Fitted> {
    let opts = newton_options();
    Ok(match (family, hyper) {
        (Family::Cox, h) => Fitted::Cox(fit_cox(dm, times, events, h.lambda(), &opts)?),
        (Family::WeibullAft, h) => Fitted::Weibull(fit_weibull_aft(dm, times, events, h.lambda(), &opts)?),
        (Family::Rsf, Hyper::Forest(p)) => Fitted::Forest(fit_rsf(dm, times, events, p, forest_seed)?),
        _ => return Err(Error::Internal(format!("{} is not a comparable family", family.as_str()))),
    })
}

pub fn fit_dynamic(family: Family, hyper: &Hyper, dm: &DesignMatrix<f64>, labels: &[bool]) -> Result<Fitted> {
    let opts = newton_options();
    Ok(Fitted::Hazard(match family {
        Family::LogisticHazard => fit_logistic_hazard(dm, labels, hyper.lambda(), &opts)?,
        Family::PoissonPem => {
            let exposure = vec![1.0; dm.n_rows()];
            fit_poisson_pem(dm, labels, &exposure, hyper.lambda(), &opts)?
        }
        _ => return Err(Error::Internal(format!("{} is not a dynamic family", family.as_str()))),
    }))
}

/// Arm-specific data behind a uniform fit/predict interface.
pub enum ArmData {
    Comparable(ComparableData),
    Dynamic(DynamicData),
}

impl ArmData {
    pub fn build(arm: Arm, train: &Cohort, test: &Cohort, w: u32, grid_end: u32) -> Result<Self> {
        Ok(match arm {
            Arm::Comparable => ArmData::Comparable(ComparableData::build(train, test, w, grid_end)?),
            Arm::Dynamic => ArmData::Dynamic(DynamicData::build(train, test, grid_end)?),
        })
    }

    pub fn test_outcomes(&self) -> (&[u32], &[bool]) {
        match self {
            ArmData::Comparable(d) => (&d.test_times, &d.test_events),
            ArmData::Dynamic(d) => (&d.test_times, &d.test_events),
        }
    }

    pub fn blocks(&self) -> Vec<FeatureBlock> {
        match self {
            ArmData::Comparable(d) => d.train_frame.blocks().into_iter().collect(),
            ArmData::Dynamic(d) => d.train_frame.blocks().into_iter().collect(),
        }
    }

    pub fn designs(&self, drop: Option<FeatureBlock>) -> Result<(DesignMatrix<f64>, DesignMatrix<f64>)> {
        match self {
            ArmData::Comparable(d) => d.designs(drop),
            ArmData::Dynamic(d) => d.designs(drop),
        }
    }

    pub fn fit(&self, family: Family, hyper: &Hyper, train_dm: &DesignMatrix<f64>, forest_seed: u64) -> Result<Fitted> {
        match self {
            ArmData::Comparable(d) => fit_comparable(family, hyper, train_dm, &d.train_times, &d.train_events, forest_seed),
            ArmData::Dynamic(d) => fit_dynamic(family, hyper, train_dm, &d.train_labels),
        }
    }

    /// Enrollment-level curves for the test set from a test-side design.
    pub fn predict(&self, model: &Fitted, test_dm: &DesignMatrix<f64>) -> Result<SurvivalPrediction<f64>> {
        match (self, model) {
            (ArmData::Dynamic(d), Fitted::Hazard(m)) => d.curves(m, test_dm),
            (ArmData::Comparable(d), m) => m.enrollment_curves(test_dm, d.grid_end),
            _ => Err(Error::Internal("model does not belong to this arm".into())),
        }
    }

    /// Refit on the train design without `drop` and predict the test set.
    pub fn fit_predict(
        &self,
        family: Family,
        hyper: &Hyper,
        drop: Option<FeatureBlock>,
        forest_seed: u64,
    ) -> Result<SurvivalPrediction<f64>> {
        let (tr, te) = self.designs(drop)?;
        let model = self.fit(family, hyper, &tr, forest_seed)?;
        self.predict(&model, &te)
    }
}

/// Validation IBS of one candidate, used for grid selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningScore {
    pub hyper: Hyper,
    /// `None` when the candidate failed on the inner split.
    pub validation_ibs: Option<f64>,
}

/// Picks the candidate with the lowest IBS on an inner validation split of
/// the training cohort. A single candidate is returned without fitting.
pub fn select_hyper(
    config: &BenchConfig,
    prep: &Prepared,
    arm: Arm,
    family: Family,
    forest_seed: u64,
) -> Result<(Hyper, Vec<TuningScore>)> {
    let cands = candidates(config, family);
    if cands.len() == 1 {
        return Ok((cands[0].clone(), Vec::new()));
    }
    let spec = SplitSpec {
        test_fraction: 0.25,
        seed: derive_seed(config.seed, Stage::Split, 1),
        ..SplitSpec::default()
    };
    let inner = stratified_split(&prep.train.records, &spec)?;
    let data = ArmData::build(
        arm,
        &prep.train.subset(&inner.train),
        &prep.train.subset(&inner.test),
        config.early_window,
        prep.grid_end,
    )?;
    let (times, events) = data.test_outcomes();
    let mut scores = Vec::with_capacity(cands.len());
    for h in &cands {
        let score = data.fit_predict(family, h, None, forest_seed).and_then(|p| {
            let g = km_censoring::<f64>(times, events, p.grid_end())?;
            ibs(&p, times, events, &g, config.tau_max)
        });
        if let Err(e) = &score {
            warn!("{}: candidate {h:?} failed on the inner split: {e}", family.as_str());
        }
        scores.push(TuningScore {
            hyper: h.clone(),
            validation_ibs: score.ok(),
        });
    }
    let best = scores
        .iter()
        .filter_map(|s| s.validation_ibs.map(|v| (v, &s.hyper)))
        .fold(None::<(f64, &Hyper)>, |acc, (v, h)| match acc {
            Some((bv, _)) if bv <= v => acc,
            _ => Some((v, h)),
        })
        .map(|(_, h)| h.clone())
        .ok_or_else(|| Error::Internal("every hyperparameter candidate failed".into()))?;
    Ok((best, scores))
}

/// Metrics of a prediction on the arm's test set.
pub fn score_prediction(
    pred: &SurvivalPrediction<f64>,
    times: &[u32],
    events: &[bool],
    config: &BenchConfig,
) -> Result<MetricReport> {
    crate::metrics::evaluate(pred, times, events, &config.horizons, config.tau_max)
}
