use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{Arm, ImportanceMetric};
use crate::comparable::ForestParams;
use crate::error::{Error, Result};
use crate::ingest::synth::SyntheticSpec;
use crate::ingest::{CANONICAL_WINDOW, WINDOW_GRID};
use crate::metrics::{DEFAULT_HORIZONS, DEFAULT_TAU_MAX};
use crate::metrics::DEFAULT_BINS;

/// Where the cohort comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Raw OULAD directory.
    Oulad { dir: PathBuf },
    /// Pre-built enrollment and weekly-activity tables.
    Tables { enrollments: PathBuf, activity: PathBuf },
    Synthetic(SyntheticSpec),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

/// Candidate L2 strengths for a likelihood-based family; more than one
/// candidate triggers selection on an inner validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearGrid {
    pub enabled: bool,
    pub lambda_reg: Vec<f64>,
}

impl LinearGrid {
    fn with(lambda: f64) -> Self {
        Self {
            enabled: true,
            lambda_reg: vec![lambda],
        }
    }
}

impl Default for LinearGrid {
    fn default() -> Self {
        Self::with(1e-4)
    }
}

/// Forest grid as the cartesian product of its lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestGrid {
    pub enabled: bool,
    pub n_trees: Vec<usize>,
    pub min_leaf: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub feature_fraction: Vec<f64>,
    pub max_thresholds: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestGrid {
    fn default() -> Self {
        let p = ForestParams::default();
        Self {
            enabled: true,
            n_trees: vec![p.n_trees],
            min_leaf: vec![p.min_leaf],
            max_depth: vec![p.max_depth],
            feature_fraction: vec![p.feature_fraction],
            max_thresholds: p.max_thresholds,
            bootstrap: p.bootstrap,
        }
    }
}

impl ForestGrid {
    pub fn candidates(&self) -> Vec<ForestParams> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &min_leaf in &self.min_leaf {
                for &max_depth in &self.max_depth {
                    for &feature_fraction in &self.feature_fraction {
                        out.push(ForestParams {
                            n_trees,
                            min_leaf,
                            max_depth,
                            feature_fraction,
                            max_thresholds: self.max_thresholds,
                            bootstrap: self.bootstrap,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Roster {
    pub logistic_hazard: LinearGrid,
    pub poisson_pem: LinearGrid,
    pub cox: LinearGrid,
    pub weibull_aft: LinearGrid,
    pub rsf: ForestGrid,
}

impl Default for Roster {
    fn default() -> Self {
        Self {
            logistic_hazard: LinearGrid::default(),
            poisson_pem: LinearGrid::default(),
            cox: LinearGrid::default(),
            weibull_aft: LinearGrid::with(1e-6),
            rsf: ForestGrid::default(),
        }
    }
}

/// Optional analyses; the core benchmark always runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analyses {
    pub bootstrap: bool,
    pub ablation: bool,
    pub importance: bool,
    pub ph_audit: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Self {
            bootstrap: true,
            ablation: true,
            importance: true,
            ph_audit: true,
        }
    }
}

impl Analyses {
    pub fn none() -> Self {
        Self {
            bootstrap: false,
            ablation: false,
            importance: false,
            ph_audit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub data: DataSource,
    pub arms: Vec<Arm>,
    pub models: Roster,
    pub early_window: u32,
    pub window_grid: Vec<u32>,
    pub horizons: Vec<u32>,
    pub tau_max: u32,
    pub calibration_bins: usize,
    pub test_fraction: f64,
    pub bootstrap_resamples: usize,
    /// Arms whose frozen predictions are bootstrapped.
    pub bootstrap_arms: Vec<Arm>,
    pub importance_repeats: usize,
    pub importance_metric: ImportanceMetric,
    pub ph_alpha: f64,
    pub analyses: Analyses,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            arms: vec![Arm::Dynamic, Arm::Comparable],
            models: Roster::default(),
            early_window: CANONICAL_WINDOW,
            window_grid: WINDOW_GRID.to_vec(),
            horizons: DEFAULT_HORIZONS.to_vec(),
            tau_max: DEFAULT_TAU_MAX,
            calibration_bins: DEFAULT_BINS,
            test_fraction: 0.30,
            bootstrap_resamples: 200,
            bootstrap_arms: vec![Arm::Comparable],
            importance_repeats: 10,
            importance_metric: ImportanceMetric::Ibs,
            ph_alpha: 0.05,
            analyses: Analyses::default(),
            seed: 42,
            output_dir: PathBuf::from("survbench-out"),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn has_arm(&self, arm: Arm) -> bool {
        self.arms.contains(&arm)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.arms.is_empty() {
            return bad("no arm selected".into());
        }
        if self.tau_max == 0 {
            return bad("tau_max must be positive".into());
        }
        if self.horizons.is_empty() {
            return bad("at least one horizon is required".into());
        }
        if let Some(&h) = self.horizons.iter().find(|&&h| h > self.tau_max || h == 0) {
            return bad(format!("horizon {h} must lie in 1..=tau_max ({})", self.tau_max));
        }
        if self.early_window == 0 {
            return bad("early_window must be at least 1".into());
        }
        if self.window_grid.contains(&0) {
            return bad("window_grid entries must be at least 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if self.calibration_bins < 2 {
            return bad("calibration_bins must be at least 2".into());
        }
        if self.analyses.bootstrap && self.bootstrap_resamples == 0 {
            return bad("bootstrap_resamples must be positive".into());
        }
        if self.analyses.importance && self.importance_repeats == 0 {
            return bad("importance_repeats must be positive".into());
        }
        if !(self.ph_alpha > 0.0 && self.ph_alpha < 1.0) {
            return bad(format!("ph_alpha {} outside (0, 1)", self.ph_alpha));
        }
        let m = &self.models;
        for (name, grid) in [
            ("logistic_hazard", &m.logistic_hazard),
            ("poisson_pem", &m.poisson_pem),
            ("cox", &m.cox),
            ("weibull_aft", &m.weibull_aft),
        ] {
            if grid.enabled && grid.lambda_reg.is_empty() {
                return bad(format!("{name}: empty lambda_reg grid"));
            }
            if grid.lambda_reg.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
                return bad(format!("{name}: lambda_reg must be finite and non-negative"));
            }
        }
        if m.rsf.enabled && m.rsf.candidates().is_empty() {
            return bad("rsf: empty hyperparameter grid".into());
        }
        let dynamic = m.logistic_hazard.enabled || m.poisson_pem.enabled;
        let comparable = m.cox.enabled || m.weibull_aft.enabled || m.rsf.enabled;
        if (self.has_arm(Arm::Dynamic) && !dynamic) || (self.has_arm(Arm::Comparable) && !comparable) {
            return bad("a selected arm has no enabled model".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = BenchConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(BenchConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn horizon_beyond_tau_is_rejected() {
        let err = BenchConfig::from_toml("horizons = [10, 40]\ntau_max = 30\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(BenchConfig::from_toml("early_window = 0\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(BenchConfig::from_toml("horizon = [10]\n").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = BenchConfig::from_toml(
            "seed = 7\narms = [\"comparable\"]\n[data]\nsource = \"synthetic\"\nn_enrollments = 300\n[models.rsf]\nn_trees = [10, 20]\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.arms, vec![Arm::Comparable]);
        assert_eq!(cfg.models.rsf.candidates().len(), 2);
        match cfg.data {
            DataSource::Synthetic(s) => assert_eq!(s.n_enrollments, 300),
            other => panic!("{other:?}"),
        }
    }
}
