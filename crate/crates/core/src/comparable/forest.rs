//! Random survival forest: bootstrap trees split on the log-rank statistic with
//! Nelson-Aalen leaves; the ensemble averages per-tree `exp(-H)`.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_layout, check_survival_inputs, SurvivalModel};
use crate::error::{Error, Result};
use crate::prediction::SurvivalPrediction;
use crate::preprocess::DesignMatrix;
use crate::scalar::Scalar;
use crate::seed::child_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: usize,
    pub feature_fraction: f64,
    /// Candidate thresholds per feature; `None` scans every distinct value.
    pub max_thresholds: Option<usize>,
    /// Grow each tree on a bootstrap sample (otherwise on the full data).
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_leaf: 50,
            max_depth: 6,
            feature_fraction: 0.7,
            max_thresholds: Some(32),
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode<T> {
    Split {
        feature: usize,
        threshold: T,
        /// Rows with `x[feature] <= threshold` go left.
        left: usize,
        right: usize,
    },
    /// Nelson-Aalen step function: `cumhaz[k]` holds from `times[k]` on.
    Leaf { times: Vec<T>, cumhaz: Vec<T>, size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree<T> {
    /// Root is node 0.
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> SurvivalTree<T> {
    fn leaf_for(&self, row: ndarray::ArrayView1<T>) -> &TreeNode<T> {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[TreeNode<T>], k: usize) -> usize {
            match &nodes[k] {
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    /// `exp(-H(t))` at weeks `0..=grid_end`, written into `out`.
    fn add_survival(&self, row: ndarray::ArrayView1<T>, out: &mut [T]) {
        let TreeNode::Leaf { times, cumhaz, .. } = self.leaf_for(row) else {
            unreachable!("traversal ends at a leaf")
        };
        let mut k = 0;
        let mut h = T::zero();
        for (t, o) in out.iter_mut().enumerate() {
            let tt = T::from_usize_lossy(t);
            while k < times.len() && times[k] <= tt {
                h = cumhaz[k];
                k += 1;
            }
            *o += (-h).exp();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalForest<T> {
    pub trees: Vec<SurvivalTree<T>>,
    pub params: ForestParams,
    pub columns: Vec<String>,
    pub seed: u64,
}

struct Grower<'a, T> {
    x: &'a Array2<T>,
    times: &'a [T],
    events: &'a [bool],
    params: &'a ForestParams,
    n_try: usize,
}

/// Node-local time index: distinct times sorted, each sample mapped to its slot.
struct TimeIndex<T> {
    values: Vec<T>,
    slot: Vec<usize>,
    count: Vec<f64>,
    deaths: Vec<f64>,
}

impl<'a, T: Scalar> Grower<'a, T> {
    fn time_index(&self, idx: &[usize]) -> TimeIndex<T> {
        let mut values: Vec<T> = idx.iter().map(|&i| self.times[i]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        values.dedup();
        let slot: Vec<usize> = idx
            .iter()
            .map(|&i| values.partition_point(|&v| v < self.times[i]))
            .collect();
        let mut count = vec![0.0; values.len()];
        let mut deaths = vec![0.0; values.len()];
        for (&i, &k) in idx.iter().zip(&slot) {
            count[k] += 1.0;
            if self.events[i] {
                deaths[k] += 1.0;
            }
        }
        TimeIndex {
            values,
            slot,
            count,
            deaths,
        }
    }

    fn leaf(&self, idx: &[usize]) -> TreeNode<T> {
        let ti = self.time_index(idx);
        let mut at_risk: f64 = ti.count.iter().sum();
        let mut h = 0.0;
        let mut times = Vec::new();
        let mut cumhaz = Vec::new();
        for k in 0..ti.values.len() {
            if ti.deaths[k] > 0.0 {
                h += ti.deaths[k] / at_risk;
                times.push(ti.values[k]);
                cumhaz.push(T::lit(h));
            }
            at_risk -= ti.count[k];
        }
        TreeNode::Leaf {
            times,
            cumhaz,
            size: idx.len(),
        }
    }

    /// Log-rank chi-square for the left group given per-slot left counts.
    fn logrank(ti: &TimeIndex<T>, left_count: &[f64], left_deaths: &[f64]) -> f64 {
        let mut y = 0.0;
        let mut yl = 0.0;
        let mut num = 0.0;
        let mut var = 0.0;
        for k in (0..ti.values.len()).rev() {
            y += ti.count[k];
            yl += left_count[k];
            let d = ti.deaths[k];
            if d > 0.0 {
                let frac = yl / y;
                num += left_deaths[k] - d * frac;
                if y > 1.0 {
                    var += d * frac * (1.0 - frac) * (y - d) / (y - 1.0);
                }
            }
        }
        if var > 0.0 {
            num * num / var
        } else {
            0.0
        }
    }

    /// Best (statistic, feature, threshold) over the sampled features.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<(f64, usize, T)> {
        let ti = self.time_index(idx);
        if ti.deaths.iter().sum::<f64>() == 0.0 {
            return None;
        }
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(f64, usize, T)> = None;
        let mut order: Vec<usize> = (0..n).collect();
        for &f in features {
            order.sort_by(|&a, &b| {
                self.x[[idx[a], f]]
                    .partial_cmp(&self.x[[idx[b], f]])
                    .expect("finite design")
                    .then(a.cmp(&b))
            });
            let value = |pos: usize| self.x[[idx[order[pos]], f]];
            // change points: split after position p when value(p) < value(p+1)
            let lo = min_leaf - 1;
            let hi = n.saturating_sub(min_leaf);
            if lo >= hi {
                continue;
            }
            let mut candidates: Vec<usize> = (lo..hi).filter(|&p| value(p) < value(p + 1)).collect();
            if let Some(m) = self.params.max_thresholds {
                if candidates.len() > m {
                    let len = candidates.len();
                    let mut picked: Vec<usize> = (1..=m).map(|q| candidates[(q * len) / (m + 1)]).collect();
                    picked.dedup();
                    candidates = picked;
                }
            }
            if candidates.is_empty() {
                continue;
            }
            let mut left_count = vec![0.0; ti.values.len()];
            let mut left_deaths = vec![0.0; ti.values.len()];
            let mut pos = 0;
            for &c in &candidates {
                while pos <= c {
                    let s = order[pos];
                    left_count[ti.slot[s]] += 1.0;
                    if self.events[idx[s]] {
                        left_deaths[ti.slot[s]] += 1.0;
                    }
                    pos += 1;
                }
                let stat = Self::logrank(&ti, &left_count, &left_deaths);
                if stat.is_finite() && best.as_ref().is_none_or(|b| stat > b.0) {
                    let thr = (value(c) + value(c + 1)) * T::lit(0.5);
                    best = Some((stat, f, thr));
                }
            }
        }
        best.filter(|b| b.0 > 0.0)
    }

    fn grow(&self, rng: &mut ChaCha8Rng, idx: Vec<usize>) -> SurvivalTree<T> {
        let mut nodes = Vec::new();
        self.grow_node(rng, idx, 0, &mut nodes);
        SurvivalTree { nodes }
    }

    fn grow_node(&self, rng: &mut ChaCha8Rng, idx: Vec<usize>, depth: usize, nodes: &mut Vec<TreeNode<T>>) -> usize {
        let me = nodes.len();
        nodes.push(TreeNode::Leaf {
            times: vec![],
            cumhaz: vec![],
            size: 0,
        });
        let p = self.x.ncols();
        let can_split = depth < self.params.max_depth && idx.len() >= 2 * self.params.min_leaf.max(1) && p > 0;
        let split = if can_split {
            let mut features = sample(rng, p, self.n_try).into_vec();
            features.sort_unstable();
            self.best_split(&idx, &features)
        } else {
            None
        };
        match split {
            None => nodes[me] = self.leaf(&idx),
            Some((_, feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[[i, feature]] <= threshold);
                let left = self.grow_node(rng, l, depth + 1, nodes);
                let right = self.grow_node(rng, r, depth + 1, nodes);
                nodes[me] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        me
    }
}

/// Grows the forest in parallel; tree `b` uses a seed derived from `(seed, b)`.
pub fn fit_rsf<T: Scalar>(
    dm: &DesignMatrix<T>,
    times: &[T],
    events: &[bool],
    params: &ForestParams,
    seed: u64,
) -> Result<SurvivalForest<T>> {
    check_survival_inputs(dm, times, events)?;
    if params.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    if params.min_leaf > dm.n_rows() {
        return Err(Error::Config(format!(
            "min_leaf {} exceeds sample size {}",
            params.min_leaf,
            dm.n_rows()
        )));
    }
    if !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(Error::Config("feature_fraction must lie in (0, 1]".into()));
    }
    let p = dm.n_cols();
    let grower = Grower {
        x: &dm.x,
        times,
        events,
        params,
        n_try: ((params.feature_fraction * p as f64).ceil() as usize).clamp(p.min(1), p),
    };
    let n = dm.n_rows();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, b as u64));
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grower.grow(&mut rng, idx)
        })
        .collect();
    Ok(SurvivalForest {
        trees,
        params: params.clone(),
        columns: dm.column_names(),
        seed,
    })
}

impl<T: Scalar> SurvivalModel<T> for SurvivalForest<T> {
    fn predict_survival_curve(&self, dm: &DesignMatrix<T>, grid_end: u32) -> Result<SurvivalPrediction<T>> {
        check_layout(dm, &self.columns)?;
        let width = grid_end as usize + 1;
        let m = T::from_usize_lossy(self.trees.len());
        let rows: Vec<Vec<T>> = (0..dm.n_rows())
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![T::zero(); width];
                for tree in &self.trees {
                    tree.add_survival(dm.x.row(i), &mut acc);
                }
                acc.iter_mut().for_each(|v| *v /= m);
                acc
            })
            .collect();
        let survival = Array2::from_shape_fn((dm.n_rows(), width), |(i, t)| rows[i][t]);
        Ok(SurvivalPrediction {
            row_ids: dm.row_ids.clone(),
            survival,
        })
    }
}

impl<T: Scalar> SurvivalForest<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synth::covariate_hazard_cohort;
    use crate::preprocess::{FeatureBlock, OutputColumn};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn dm(x: Array2<f64>) -> DesignMatrix<f64> {
        DesignMatrix {
            row_ids: (0..x.nrows()).map(|i| i.to_string()).collect(),
            columns: (0..x.ncols())
                .map(|j| OutputColumn {
                    name: format!("x{j}"),
                    block: FeatureBlock::StaticStructural,
                    source: format!("x{j}"),
                })
                .collect(),
            x,
        }
    }

    fn stump(bootstrap: bool, n_trees: usize) -> ForestParams {
        ForestParams {
            n_trees,
            min_leaf: 1,
            max_depth: 0,
            bootstrap,
            ..Default::default()
        }
    }

    #[test]
    fn stump_is_nelson_aalen() {
        let x = array![[0.0], [1.0], [2.0]];
        let f = fit_rsf(&dm(x.clone()), &[1.0, 2.0, 3.0], &[true, false, true], &stump(false, 1), 0).unwrap();
        let p = f.predict_survival_curve(&dm(x), 4).unwrap();
        // H: 1/3 at t=1, then + 1/1 at t=3
        let want = [1.0, (-1.0f64 / 3.0).exp(), (-1.0f64 / 3.0).exp(), (-4.0f64 / 3.0).exp(), (-4.0f64 / 3.0).exp()];
        for i in 0..3 {
            for t in 0..5 {
                assert_abs_diff_eq!(p.survival[[i, t]], want[t], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn identical_trees_average_to_one_tree() {
        let c = covariate_hazard_cohort(300, 2, |r| r[0], 0.2, 5);
        let d = dm(c.x.clone());
        let params = ForestParams {
            n_trees: 1,
            min_leaf: 10,
            bootstrap: false,
            feature_fraction: 1.0,
            ..Default::default()
        };
        let one = fit_rsf(&d, &c.times, &c.events, &params, 1).unwrap();
        let mut two = one.clone();
        two.trees.push(one.trees[0].clone());
        let a = one.predict_survival_curve(&d, 5).unwrap();
        let b = two.predict_survival_curve(&d, 5).unwrap();
        for (u, v) in a.survival.iter().zip(b.survival.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-15);
        }
    }

    #[test]
    fn min_leaf_larger_than_sample_is_error() {
        let r = fit_rsf(&dm(array![[0.0], [1.0]]), &[1.0, 2.0], &[true, true], &ForestParams::default(), 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_under_seed() {
        let c = covariate_hazard_cohort(400, 3, |r| r[0] - r[1], 0.3, 8);
        let d = dm(c.x.clone());
        let params = ForestParams {
            n_trees: 8,
            min_leaf: 20,
            ..Default::default()
        };
        let a = fit_rsf(&d, &c.times, &c.events, &params, 3).unwrap();
        let b = fit_rsf(&d, &c.times, &c.events, &params, 3).unwrap();
        assert_eq!(a, b);
        let p = a.predict_survival_curve(&d, 6).unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn root_split_finds_step_at_zero() {
        let mut hits = 0;
        for seed in 0..20 {
            let c = covariate_hazard_cohort(1_000, 1, |r| if r[0] > 0.0 { 1.2 } else { 0.0 }, 0.2, 100 + seed);
            let params = ForestParams {
                n_trees: 1,
                min_leaf: 20,
                max_depth: 1,
                feature_fraction: 1.0,
                max_thresholds: None,
                bootstrap: true,
            };
            let f = fit_rsf(&dm(c.x.clone()), &c.times, &c.events, &params, seed).unwrap();
            if let TreeNode::Split { threshold, .. } = &f.trees[0].nodes[0] {
                if threshold.abs() < 0.25 {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 18, "root split near zero in {hits}/20 seeds");
    }
}
