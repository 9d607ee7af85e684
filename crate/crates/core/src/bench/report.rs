use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::pipeline::Family;
use super::run::{BenchmarkReport, StageFailure, Status, WindowRow};
use crate::analysis::Arm;
use crate::error::Result;

pub const MAIN_BENCHMARK: &str = "main_benchmark.csv";
pub const CALIBRATION: &str = "calibration.csv";
pub const ABLATION: &str = "ablation.csv";
pub const IMPORTANCE: &str = "importance.csv";
pub const BOOTSTRAP: &str = "bootstrap.csv";
pub const PH_AUDIT: &str = "ph_audit.csv";
pub const SPLIT_AUDIT: &str = "split_audit.json";
pub const REPORT: &str = "report.json";
pub const PLOTDATA: &str = "plotdata.csv";
pub const WINDOW_GRID: &str = "window_grid.csv";

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn arm_cell(a: Option<Arm>) -> String {
    a.map(|a| a.as_str().to_string()).unwrap_or_default()
}

fn model_cell(m: Option<Family>) -> String {
    m.map(|m| m.as_str().to_string()).unwrap_or_default()
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Row for a stage that produced nothing: identity columns filled, metrics blank.
    fn push_failure(&mut self, f: &StageFailure, seed: u64) {
        let mut row = vec![String::new(); self.header.len()];
        for (i, h) in self.header.iter().enumerate() {
            row[i] = match h.as_str() {
                "arm" => arm_cell(f.arm),
                "model" => model_cell(f.model),
                "status" => format!("failed:{}", f.stage),
                "stage" => f.stage.clone(),
                "seed" => seed.to_string(),
                "error" => f.error.clone(),
                _ => String::new(),
            };
        }
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn failures_for<'a>(report: &'a BenchmarkReport, stage: &'a str) -> impl Iterator<Item = &'a StageFailure> {
    report.failures.iter().filter(move |f| f.stage == stage || f.stage == "fit")
}

fn failure_seed(report: &BenchmarkReport, f: &StageFailure) -> u64 {
    f.model
        .and_then(|m| report.model(m))
        .map(|m| m.seed)
        .unwrap_or(report.config.seed)
}

fn main_table(report: &BenchmarkReport) -> Table {
    let mut header: Vec<String> = ["arm", "model", "status", "ibs", "td_concordance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(report.config.horizons.iter().map(|h| format!("brier_{h}")));
    header.extend(
        ["tau_max", "n_eval", "hyperparameters", "stage", "seed", "error"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut t = Table { header, rows: Vec::new() };
    for m in &report.models {
        let mut row = vec![
            m.arm.as_str().to_string(),
            m.model.as_str().to_string(),
            m.status.as_str().to_string(),
        ];
        match &m.metrics {
            Some(r) => {
                row.push(num(r.ibs));
                row.push(num(r.td_concordance));
                for &h in &report.config.horizons {
                    row.push(opt(r.brier.iter().find(|b| b.0 == h).map(|b| b.1)));
                }
                row.push(r.tau_max.to_string());
                row.push(r.n_eval.to_string());
            }
            None => row.extend(std::iter::repeat_n(String::new(), 4 + report.config.horizons.len())),
        }
        row.push(
            m.hyperparameters
                .as_ref()
                .and_then(|h| serde_json::to_string(h).ok())
                .unwrap_or_default(),
        );
        row.push(m.stage.clone());
        row.push(m.seed.to_string());
        row.push(m.error.clone().unwrap_or_default());
        t.push(row);
    }
    t
}

fn calibration_table(report: &BenchmarkReport) -> Table {
    let mut t = Table::new(&[
        "arm",
        "model",
        "status",
        "horizon",
        "n_evaluable",
        "n_bins",
        "gap",
        "slope",
        "intercept",
        "stage",
        "seed",
        "error",
    ]);
    for c in &report.calibration {
        let r = &c.report;
        t.push(vec![
            c.arm.as_str().into(),
            c.model.as_str().into(),
            Status::Ok.as_str().into(),
            r.horizon.to_string(),
            r.n_evaluable.to_string(),
            r.bins.len().to_string(),
            num(r.gap),
            opt(r.slope),
            opt(r.intercept),
            c.stage.clone(),
            c.seed.to_string(),
            String::new(),
        ]);
    }
    for f in failures_for(report, "calibration") {
        t.push_failure(f, failure_seed(report, f));
    }
    t
}

fn bootstrap_table(report: &BenchmarkReport) -> Table {
    let mut t = Table::new(&[
        "arm",
        "model",
        "status",
        "metric",
        "estimate",
        "lower",
        "upper",
        "rank1_share",
        "n_resamples",
        "redraws",
        "stage",
        "seed",
        "error",
    ]);
    for b in &report.bootstrap {
        for r in &b.result.rows {
            t.push(vec![
                b.arm.as_str().into(),
                r.model.clone(),
                Status::Ok.as_str().into(),
                r.metric.clone(),
                num(r.estimate),
                num(r.lower),
                num(r.upper),
                num(r.rank1_share),
                b.result.n_resamples.to_string(),
                b.result.redraws.to_string(),
                b.stage.clone(),
                b.seed.to_string(),
                String::new(),
            ]);
        }
    }
    for f in failures_for(report, "bootstrap") {
        if f.stage == "bootstrap" || f.arm.is_some_and(|a| report.config.bootstrap_arms.contains(&a)) {
            t.push_failure(f, failure_seed(report, f));
        }
    }
    t
}

fn ablation_table(report: &BenchmarkReport) -> Table {
    let mut t = Table::new(&[
        "arm",
        "model",
        "status",
        "removed_block",
        "delta_ibs",
        "delta_td",
        "ibs_ratio",
        "full_ibs",
        "full_td",
        "stage",
        "seed",
        "error",
    ]);
    for a in &report.ablation {
        for r in &a.result.rows {
            t.push(vec![
                a.arm.as_str().into(),
                r.model.clone(),
                Status::Ok.as_str().into(),
                r.removed_block.as_str().into(),
                opt(r.delta_ibs),
                num(r.delta_td),
                opt(a.result.ibs_ratio),
                num(a.result.full.ibs),
                num(a.result.full.td_concordance),
                a.stage.clone(),
                a.seed.to_string(),
                String::new(),
            ]);
        }
    }
    for f in failures_for(report, "ablation") {
        t.push_failure(f, failure_seed(report, f));
    }
    t
}

fn importance_table(report: &BenchmarkReport) -> Table {
    let mut t = Table::new(&[
        "arm",
        "model",
        "status",
        "metric",
        "kind",
        "name",
        "block",
        "mean",
        "std",
        "base_value",
        "dominant_block",
        "stage",
        "seed",
        "error",
    ]);
    for m in &report.importance {
        let r = &m.result;
        for e in &r.entries {
            t.push(vec![
                m.arm.as_str().into(),
                r.model.clone(),
                Status::Ok.as_str().into(),
                r.metric.as_str().into(),
                if e.is_block { "block" } else { "feature" }.into(),
                e.name.clone(),
                e.block.as_str().into(),
                num(e.mean),
                num(e.std),
                num(r.base_value),
                r.dominant_block.map(|b| b.as_str().to_string()).unwrap_or_default(),
                m.stage.clone(),
                m.seed.to_string(),
                String::new(),
            ]);
        }
    }
    for f in failures_for(report, "importance") {
        t.push_failure(f, failure_seed(report, f));
    }
    t
}

fn ph_table(report: &BenchmarkReport) -> Table {
    let mut t = Table::new(&[
        "arm", "model", "status", "column", "rho", "chi2", "p_value", "flagged", "alpha", "label", "stage", "seed",
        "error",
    ]);
    if let Some(p) = &report.ph_audit {
        let r = &p.result;
        for c in &r.covariates {
            t.push(vec![
                p.arm.as_str().into(),
                p.model.as_str().into(),
                Status::Ok.as_str().into(),
                c.column.clone(),
                num(c.rho),
                num(c.chi2),
                num(c.p_value),
                c.flagged.to_string(),
                num(r.alpha),
                r.label.as_str().into(),
                p.stage.clone(),
                p.seed.to_string(),
                String::new(),
            ]);
        }
        for s in &r.skipped {
            let mut row = vec![String::new(); t.header.len()];
            row[0] = p.arm.as_str().into();
            row[1] = p.model.as_str().into();
            row[2] = "skipped".into();
            row[3] = s.clone();
            row[8] = num(r.alpha);
            row[9] = r.label.as_str().into();
            row[10] = p.stage.clone();
            row[11] = p.seed.to_string();
            row[12] = "no risk-set variance".into();
            t.push(row);
        }
    }
    for f in failures_for(report, "ph_audit") {
        if f.stage == "ph_audit" {
            t.push_failure(f, failure_seed(report, f));
        }
    }
    t
}

fn plot_table(report: &BenchmarkReport) -> Table {
    let mut t = Table::new(&["arm", "model", "metric", "horizon", "value", "stage", "seed"]);
    for m in &report.models {
        let Some(r) = &m.metrics else { continue };
        let base = |metric: &str, h: String, v: f64| {
            vec![
                m.arm.as_str().to_string(),
                m.model.as_str().to_string(),
                metric.to_string(),
                h,
                num(v),
                m.stage.clone(),
                m.seed.to_string(),
            ]
        };
        t.push(base("ibs", String::new(), r.ibs));
        t.push(base("td_concordance", String::new(), r.td_concordance));
        for &(h, v) in &r.brier {
            t.push(base("brier", h.to_string(), v));
        }
    }
    for c in &report.calibration {
        t.push(vec![
            c.arm.as_str().into(),
            c.model.as_str().into(),
            "calibration_gap".into(),
            c.report.horizon.to_string(),
            num(c.report.gap),
            c.stage.clone(),
            c.seed.to_string(),
        ]);
    }
    t
}

fn window_table(rows: &[WindowRow]) -> Table {
    let mut t = Table::new(&[
        "arm",
        "w",
        "model",
        "status",
        "ibs",
        "td_concordance",
        "stage",
        "seed",
        "error",
    ]);
    for r in rows {
        t.push(vec![
            Arm::Comparable.as_str().into(),
            r.w.to_string(),
            r.model.as_str().into(),
            r.status.as_str().into(),
            opt(r.ibs),
            opt(r.td_concordance),
            r.stage.clone(),
            r.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    t
}

fn write_json<S: serde::Serialize>(value: &S, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes one CSV per table that ran, the split audit, the consolidated
/// JSON report and the long-format plot table. Returns the written paths.
pub fn emit_reports(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, t: Table| -> Result<()> {
        let p = dir.join(name);
        t.write(&p)?;
        written.push(p);
        Ok(())
    };
    put(MAIN_BENCHMARK, main_table(report))?;
    put(CALIBRATION, calibration_table(report))?;
    let a = &report.analyses_run;
    if a.bootstrap {
        put(BOOTSTRAP, bootstrap_table(report))?;
    }
    if a.ablation {
        put(ABLATION, ablation_table(report))?;
    }
    if a.importance {
        put(IMPORTANCE, importance_table(report))?;
    }
    if a.ph_audit {
        put(PH_AUDIT, ph_table(report))?;
    }
    put(PLOTDATA, plot_table(report))?;
    if !report.window_grid.is_empty() {
        put(WINDOW_GRID, window_table(&report.window_grid))?;
    }
    let split = dir.join(SPLIT_AUDIT);
    write_json(&report.split_audit, &split)?;
    written.push(split);
    let json = dir.join(REPORT);
    write_json(report, &json)?;
    written.push(json);
    Ok(written)
}

/// Writes the early-window sensitivity table alone.
pub fn emit_window_grid(rows: &[WindowRow], dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(WINDOW_GRID);
    window_table(rows).write(&p)?;
    Ok(p)
}
