//! No-refit bootstrap over frozen predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{antolini_concordance, brier_ipcw, ibs, km_censoring};
use crate::prediction::SurvivalPrediction;
use crate::scalar::Scalar;
use crate::seed::child_seed;

pub const TIE_BREAK: &str = "lexicographic model name";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ibs,
    TdConcordance,
    Brier(u32),
}

impl Metric {
    pub fn label(self) -> String {
        match self {
            Metric::Ibs => "ibs".into(),
            Metric::TdConcordance => "td_concordance".into(),
            Metric::Brier(h) => format!("brier@{h}"),
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::TdConcordance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub model: String,
    pub metric: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub rank1_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub rows: Vec<BootstrapRow>,
    pub n_resamples: usize,
    /// Resamples discarded for having no events.
    pub redraws: usize,
    pub seed: u64,
    pub tie_break: String,
}

fn metric_values<T: Scalar>(
    preds: &[(String, SurvivalPrediction<T>)],
    times: &[u32],
    events: &[bool],
    metrics: &[Metric],
    tau: u32,
) -> Result<Vec<Vec<f64>>> {
    let grid_end = preds.first().map_or(tau, |p| p.1.grid_end());
    let g = km_censoring::<T>(times, events, grid_end)?;
    preds
        .iter()
        .map(|(_, p)| {
            metrics
                .iter()
                .map(|&m| {
                    let v = match m {
                        Metric::Ibs => ibs(p, times, events, &g, tau)?,
                        Metric::TdConcordance => antolini_concordance(p, times, events)?,
                        Metric::Brier(h) => brier_ipcw(p, times, events, h, &g)?,
                    };
                    Ok(v.to_f64_lossy())
                })
                .collect()
        })
        .collect()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bootstrap over explicit resample index sets.
pub fn bootstrap_with_indices<T: Scalar>(
    preds: &[(String, SurvivalPrediction<T>)],
    times: &[u32],
    events: &[bool],
    metrics: &[Metric],
    tau: u32,
    resamples: &[Vec<usize>],
    seed: u64,
    redraws: usize,
) -> Result<BootstrapResult> {
    if preds.is_empty() {
        return Err(Error::Empty("no models to bootstrap".into()));
    }
    if resamples.is_empty() {
        return Err(Error::Invalid("bootstrap needs at least one resample".into()));
    }
    if preds.iter().any(|(_, p)| p.n_subjects() != times.len()) {
        return Err(Error::Invalid("models were not evaluated on the same subjects".into()));
    }
    let point = metric_values(preds, times, events, metrics, tau)?;
    let draws: Vec<Vec<Vec<f64>>> = resamples
        .par_iter()
        .map(|idx| {
            let t: Vec<u32> = idx.iter().map(|&i| times[i]).collect();
            let e: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
            let sub: Vec<(String, SurvivalPrediction<T>)> =
                preds.iter().map(|(n, p)| (n.clone(), p.select_rows(idx))).collect();
            metric_values(&sub, &t, &e, metrics, tau)
        })
        .collect::<Result<_>>()?;

    // models in tie-break order
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].0.cmp(&preds[b].0));
    let b = resamples.len() as f64;
    let mut rows = Vec::new();
    for (k, &metric) in metrics.iter().enumerate() {
        let mut wins = vec![0usize; preds.len()];
        for d in &draws {
            let mut best = order[0];
            for &m in &order[1..] {
                let better = if metric.higher_is_better() {
                    d[m][k] > d[best][k]
                } else {
                    d[m][k] < d[best][k]
                };
                if better {
                    best = m;
                }
            }
            wins[best] += 1;
        }
        for (m, (name, _)) in preds.iter().enumerate() {
            let mut vals: Vec<f64> = draws.iter().map(|d| d[m][k]).collect();
            vals.sort_by(f64::total_cmp);
            let est = point[m][k];
            rows.push(BootstrapRow {
                model: name.clone(),
                metric: metric.label(),
                estimate: est,
                lower: percentile(&vals, 0.025).min(est),
                upper: percentile(&vals, 0.975).max(est),
                rank1_share: wins[m] as f64 / b,
            });
        }
    }
    Ok(BootstrapResult {
        rows,
        n_resamples: resamples.len(),
        redraws,
        seed,
        tie_break: TIE_BREAK.into(),
    })
}

/// Enrollment-level bootstrap of frozen predictions: the censoring estimate
/// and every metric are recomputed per resample; models are never refitted.
/// Resamples without events are redrawn, up to ten times the resample count.
pub fn bootstrap_ranks<T: Scalar>(
    preds: &[(String, SurvivalPrediction<T>)],
    times: &[u32],
    events: &[bool],
    metrics: &[Metric],
    tau: u32,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let n = times.len();
    if n == 0 {
        return Err(Error::Empty("no subjects to resample".into()));
    }
    let cap = 10 * n_resamples.max(1);
    let mut redraws = 0;
    let mut resamples = Vec::with_capacity(n_resamples);
    for r in 0..n_resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, r as u64));
        loop {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            if idx.iter().any(|&i| events[i]) {
                resamples.push(idx);
                break;
            }
            redraws += 1;
            if redraws + resamples.len() >= cap {
                return Err(Error::NoEvents(format!("bootstrap resamples after {redraws} redraws")));
            }
        }
    }
    bootstrap_with_indices(preds, times, events, metrics, tau, &resamples, seed, redraws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn curves(n: usize, f: impl Fn(usize, usize) -> f64) -> SurvivalPrediction<f64> {
        SurvivalPrediction {
            row_ids: (0..n).map(|i| i.to_string()).collect(),
            survival: Array2::from_shape_fn((n, 11), |(i, t)| f(i, t)),
        }
    }

    fn fixture() -> (Vec<u32>, Vec<bool>) {
        let times: Vec<u32> = (0..40).map(|i| (i * 7 % 10 + 1) as u32).collect();
        let events: Vec<bool> = (0..40).map(|i| i % 3 != 0).collect();
        (times, events)
    }

    const METRICS: [Metric; 3] = [Metric::Ibs, Metric::TdConcordance, Metric::Brier(5)];

    #[test]
    fn single_model_wins_everything() {
        let (t, e) = fixture();
        let p = curves(40, |i, u| (-(0.05 + 0.01 * (i % 5) as f64) * u as f64).exp());
        let r = bootstrap_ranks(&[("m".into(), p)], &t, &e, &METRICS, 10, 30, 1).unwrap();
        for row in &r.rows {
            assert_eq!(row.rank1_share, 1.0);
            assert!(row.lower <= row.estimate && row.estimate <= row.upper);
        }
    }

    #[test]
    fn identical_models_tie_break_by_name() {
        let (t, e) = fixture();
        let p = curves(40, |i, u| (-(0.05 + 0.01 * (i % 5) as f64) * u as f64).exp());
        let r = bootstrap_ranks(&[("zeta".into(), p.clone()), ("alpha".into(), p)], &t, &e, &METRICS, 10, 20, 2)
            .unwrap();
        for row in &r.rows {
            let want = if row.model == "alpha" { 1.0 } else { 0.0 };
            assert_eq!(row.rank1_share, want);
        }
        for m in METRICS {
            let total: f64 = r.rows.iter().filter(|x| x.metric == m.label()).map(|x| x.rank1_share).sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn identity_resample_reproduces_point_estimates() {
        let (t, e) = fixture();
        let p = curves(40, |i, u| (-(0.03 + 0.02 * (i % 4) as f64) * u as f64).exp());
        let identity = vec![(0..40).collect::<Vec<_>>()];
        let r = bootstrap_with_indices(&[("m".into(), p)], &t, &e, &METRICS, 10, &identity, 0, 0).unwrap();
        for row in &r.rows {
            assert_eq!(row.lower, row.estimate);
            assert_eq!(row.upper, row.estimate);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (t, e) = fixture();
        let p = curves(40, |i, u| (-(0.03 + 0.02 * (i % 4) as f64) * u as f64).exp());
        let models = [("m".to_string(), p)];
        let a = bootstrap_ranks(&models, &t, &e, &METRICS, 10, 15, 9).unwrap();
        let b = bootstrap_ranks(&models, &t, &e, &METRICS, 10, 15, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eventless_data_hits_redraw_cap() {
        let p = curves(5, |_, _| 1.0);
        let r = bootstrap_ranks(&[("m".into(), p)], &[3; 5], &[false; 5], &METRICS, 10, 3, 0);
        assert!(matches!(r, Err(Error::NoEvents(_))));
    }
}
