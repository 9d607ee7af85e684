//! Dynamic-arm families on the person-period panel: the logistic discrete-time
//! hazard and the Poisson piecewise-exponential model, plus hazard chaining.
//!
//! Week-specific intercepts are read from the design column tagged
//! [`FeatureBlock::DiscreteTimeIndex`]; that column never enters `beta`. Without
//! it (e.g. after ablation) a single intercept is fitted.

use ndarray::{s, Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{maximize, Evaluation, NewtonOptions, Objective};
use crate::prediction::SurvivalPrediction;
use crate::preprocess::{DesignMatrix, FeatureBlock};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardLink {
    /// `h = sigmoid(eta)`.
    Logistic,
    /// Log-rate with unit exposure: `h = 1 - exp(-exp(eta))`.
    PoissonLog,
}

impl HazardLink {
    pub fn hazard<T: Scalar>(self, eta: T) -> T {
        match self {
            HazardLink::Logistic => sigmoid(eta),
            HazardLink::PoissonLog => -(-eta.exp()).exp_m1(),
        }
    }
}

/// Splits a design matrix into the week index (if tagged) and the remaining columns.
fn split_week<T: Scalar>(dm: &DesignMatrix<T>) -> Result<(Option<Vec<u32>>, Array2<T>, Vec<String>)> {
    let week_cols = dm.block_columns(FeatureBlock::DiscreteTimeIndex);
    if week_cols.len() > 1 {
        return Err(Error::Schema("more than one discrete-time index column".into()));
    }
    let keep: Vec<usize> = (0..dm.n_cols()).filter(|j| !week_cols.contains(j)).collect();
    let x = dm.x.select(Axis(1), &keep);
    let names = keep.iter().map(|&j| dm.columns[j].name.clone()).collect();
    let weeks = match week_cols.first() {
        None => None,
        Some(&j) => Some(
            dm.x.column(j)
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    let v = w.to_f64_lossy();
                    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                        Ok(v as u32)
                    } else {
                        Err(Error::Data {
                            row: i,
                            message: format!("week index {v} is not a non-negative integer"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok((weeks, x, names))
}

/// Mean penalized log-likelihood of a weekly hazard model over
/// `theta = (alpha_0..alpha_W, beta)`.
#[derive(Debug, Clone)]
pub struct HazardObjective<T> {
    link: HazardLink,
    x: Array2<T>,
    alpha_index: Vec<usize>,
    n_alpha: usize,
    y: Array1<T>,
    log_exposure: Array1<T>,
    lambda: T,
}

impl<T: Scalar> HazardObjective<T> {
    /// `exposure` defaults to one week per row.
    pub fn new(
        link: HazardLink,
        dm: &DesignMatrix<T>,
        labels: &[bool],
        exposure: Option<&[T]>,
        lambda: f64,
    ) -> Result<Self> {
        if labels.len() != dm.n_rows() {
            return Err(Error::Invalid("label count differs from design rows".into()));
        }
        if dm.n_rows() == 0 {
            return Err(Error::Empty("person-period design matrix".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda_reg must be non-negative, got {lambda}")));
        }
        let (weeks, x, _) = split_week(dm)?;
        let (alpha_index, n_alpha) = match weeks {
            Some(w) => {
                let n = w.iter().max().map_or(1, |m| *m as usize + 1);
                (w.into_iter().map(|v| v as usize).collect(), n)
            }
            None => (vec![0; dm.n_rows()], 1),
        };
        let log_exposure = match exposure {
            None => Array1::zeros(dm.n_rows()),
            Some(e) => {
                if e.len() != dm.n_rows() || e.iter().any(|&v| !(v > T::zero())) {
                    return Err(Error::Invalid("exposures must be positive, one per row".into()));
                }
                e.iter().map(|v| v.ln()).collect()
            }
        };
        Ok(Self {
            link,
            x,
            alpha_index,
            n_alpha,
            y: labels.iter().map(|&b| if b { T::one() } else { T::zero() }).collect(),
            log_exposure,
            lambda: T::lit(lambda),
        })
    }

    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    fn eta(&self, theta: &Array1<T>) -> Array1<T> {
        let beta = theta.slice(s![self.n_alpha..]);
        let mut eta = self.x.dot(&beta);
        for (e, (&k, &off)) in eta.iter_mut().zip(self.alpha_index.iter().zip(self.log_exposure.iter())) {
            *e += theta[k] + off;
        }
        eta
    }

    fn loglik_terms(&self, eta: &Array1<T>) -> T {
        let terms: Vec<T> = eta
            .as_slice()
            .expect("contiguous")
            .par_chunks(4096)
            .zip(self.y.as_slice().expect("contiguous").par_chunks(4096))
            .map(|(e, y)| {
                e.iter()
                    .zip(y)
                    .map(|(&e, &y)| match self.link {
                        HazardLink::Logistic => y * e - softplus(e),
                        HazardLink::PoissonLog => y * e - e.exp(),
                    })
                    .fold(T::zero(), |a, b| a + b)
            })
            .collect();
        terms.into_iter().fold(T::zero(), |a, b| a + b)
    }

    fn penalty(&self, theta: &Array1<T>) -> T {
        T::lit(0.5) * self.lambda * theta.iter().map(|&t| t * t).sum::<T>()
    }
}

impl<T: Scalar> Objective<T> for HazardObjective<T> {
    fn dim(&self) -> usize {
        self.n_alpha + self.x.ncols()
    }

    fn value(&self, theta: &Array1<T>) -> T {
        let n = T::from_usize_lossy(self.x.nrows());
        self.loglik_terms(&self.eta(theta)) / n - self.penalty(theta)
    }

    fn evaluate(&self, theta: &Array1<T>) -> Evaluation<T> {
        let n = self.x.nrows();
        let nf = T::from_usize_lossy(n);
        let p = self.x.ncols();
        let a = self.n_alpha;
        let eta = self.eta(theta);
        let value = self.loglik_terms(&eta) / nf - self.penalty(theta);

        // residual r = y - mean, curvature w
        let mut r = Array1::<T>::zeros(n);
        let mut w = Array1::<T>::zeros(n);
        for i in 0..n {
            let (mean, curv) = match self.link {
                HazardLink::Logistic => {
                    let m = sigmoid(eta[i]);
                    (m, m * (T::one() - m))
                }
                HazardLink::PoissonLog => {
                    let m = eta[i].exp();
                    (m, m)
                }
            };
            r[i] = self.y[i] - mean;
            w[i] = curv;
        }

        let dim = a + p;
        let mut gradient = Array1::<T>::zeros(dim);
        let mut hessian = Array2::<T>::zeros((dim, dim));
        let mut alpha_beta = Array2::<T>::zeros((a, p));
        for i in 0..n {
            let k = self.alpha_index[i];
            gradient[k] += r[i];
            hessian[[k, k]] -= w[i];
            let row = self.x.row(i);
            let mut ab = alpha_beta.row_mut(k);
            ab.scaled_add(w[i], &row);
        }
        gradient.slice_mut(s![a..]).assign(&self.x.t().dot(&r));
        let mut xw = self.x.clone();
        for (mut row, &wi) in xw.rows_mut().into_iter().zip(w.iter()) {
            row *= wi.sqrt();
        }
        let bb = xw.t().dot(&xw);
        hessian.slice_mut(s![a.., a..]).assign(&bb.mapv(|v| -v));
        hessian.slice_mut(s![..a, a..]).assign(&alpha_beta.mapv(|v| -v));
        hessian.slice_mut(s![a.., ..a]).assign(&alpha_beta.t().mapv(|v| -v));

        gradient.mapv_inplace(|g| g / nf);
        hessian.mapv_inplace(|h| h / nf);
        for j in 0..dim {
            gradient[j] -= self.lambda * theta[j];
            hessian[[j, j]] -= self.lambda;
        }
        Evaluation {
            value,
            gradient,
            hessian,
        }
    }
}

/// Fitted weekly hazard model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteHazardModel<T> {
    pub link: HazardLink,
    /// `alpha[t]` for weeks `0..=W`; a single entry when fitted without a week column.
    pub week_intercepts: Vec<T>,
    pub coefficients: Vec<T>,
    pub columns: Vec<String>,
    pub has_week_index: bool,
    pub lambda_reg: f64,
    pub iterations: usize,
    /// Penalized mean log-likelihood after each accepted Newton step.
    pub trace: Vec<T>,
}

pub type PoissonPemModel<T> = DiscreteHazardModel<T>;

fn fit<T: Scalar>(
    link: HazardLink,
    dm: &DesignMatrix<T>,
    labels: &[bool],
    exposure: Option<&[T]>,
    lambda: f64,
    opts: &NewtonOptions,
) -> Result<DiscreteHazardModel<T>> {
    if !labels.iter().any(|&b| b) {
        return Err(Error::NoEvents("person-period labels".into()));
    }
    let objective = HazardObjective::new(link, dm, labels, exposure, lambda)?;
    let (weeks, _, names) = split_week(dm)?;
    let rate = labels.iter().filter(|&&b| b).count() as f64 / labels.len() as f64;
    let start_alpha = match link {
        HazardLink::Logistic => (rate / (1.0 - rate).max(1e-12)).ln(),
        HazardLink::PoissonLog => rate.ln(),
    };
    let mut start = Array1::<T>::zeros(objective.dim());
    for k in 0..objective.n_alpha() {
        start[k] = T::lit(start_alpha);
    }
    let result = maximize(&objective, start, opts)?;
    let a = objective.n_alpha();
    Ok(DiscreteHazardModel {
        link,
        week_intercepts: result.theta.slice(s![..a]).to_vec(),
        coefficients: result.theta.slice(s![a..]).to_vec(),
        columns: names,
        has_week_index: weeks.is_some(),
        lambda_reg: lambda,
        iterations: result.iterations,
        trace: result.trace,
    })
}

/// L2-penalized logistic discrete-time hazard fit.
pub fn fit_logistic_hazard<T: Scalar>(
    dm: &DesignMatrix<T>,
    labels: &[bool],
    lambda: f64,
    opts: &NewtonOptions,
) -> Result<DiscreteHazardModel<T>> {
    fit(HazardLink::Logistic, dm, labels, None, lambda, opts)
}

/// L2-penalized Poisson piecewise-exponential fit with log-exposure offset.
pub fn fit_poisson_pem<T: Scalar>(
    dm: &DesignMatrix<T>,
    labels: &[bool],
    exposure: &[T],
    lambda: f64,
    opts: &NewtonOptions,
) -> Result<PoissonPemModel<T>> {
    fit(HazardLink::PoissonLog, dm, labels, Some(exposure), lambda, opts)
}

impl<T: Scalar> DiscreteHazardModel<T> {
    /// Linear predictor per row; weeks past the fitted range use the last intercept.
    pub fn linear_predictor(&self, dm: &DesignMatrix<T>) -> Result<Array1<T>> {
        let (weeks, x, names) = split_week(dm)?;
        if names != self.columns || weeks.is_some() != self.has_week_index {
            return Err(Error::Schema("design columns differ from the fitted layout".into()));
        }
        let beta = Array1::from(self.coefficients.clone());
        let mut eta = x.dot(&beta);
        let last = self.week_intercepts.len() - 1;
        match weeks {
            Some(w) => {
                for (e, wk) in eta.iter_mut().zip(w) {
                    *e += self.week_intercepts[(wk as usize).min(last)];
                }
            }
            None => eta.mapv_inplace(|e| e + self.week_intercepts[0]),
        }
        Ok(eta)
    }

    pub fn predict_weekly_hazard(&self, dm: &DesignMatrix<T>) -> Result<Vec<T>> {
        Ok(self.linear_predictor(dm)?.iter().map(|&e| self.link.hazard(e)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `S(t) = prod_{u <= t} (1 - h(u))` for `t = 0..=through`.
pub fn reconstruct_survival<T: Scalar>(hazards: &[T], through: u32) -> Result<Vec<T>> {
    let len = through as usize + 1;
    if hazards.len() < len {
        return Err(Error::Invalid(format!(
            "{} weekly hazards cannot cover weeks 0..={through}",
            hazards.len()
        )));
    }
    let mut s = T::one();
    let mut out = Vec::with_capacity(len);
    for (t, &h) in hazards[..len].iter().enumerate() {
        if !(h >= T::zero() && h <= T::one()) {
            return Err(Error::InvalidHazard {
                value: h.to_f64_lossy(),
                context: format!(" at week {t}"),
            });
        }
        s *= T::one() - h;
        out.push(s);
    }
    Ok(out)
}

/// Chains row hazards into per-enrollment curves. `enrollment` and `week` give
/// each row's owner (0-based, contiguous per owner) and week; every owner must
/// have rows for weeks `0..=through`.
pub fn survival_from_rows<T: Scalar>(
    ids: &[String],
    enrollment: &[usize],
    week: &[u32],
    hazards: &[T],
    through: u32,
) -> Result<SurvivalPrediction<T>> {
    let width = through as usize + 1;
    let mut grid: Vec<Vec<T>> = vec![Vec::with_capacity(width); ids.len()];
    for ((&e, &w), &h) in enrollment.iter().zip(week).zip(hazards) {
        if w <= through {
            if grid[e].len() != w as usize {
                return Err(Error::Internal("hazard rows are not ordered by week".into()));
            }
            grid[e].push(h);
        }
    }
    let mut survival = Array2::<T>::zeros((ids.len(), width));
    for (i, hs) in grid.iter().enumerate() {
        let s = reconstruct_survival(hs, through)?;
        survival.row_mut(i).assign(&Array1::from(s));
    }
    Ok(SurvivalPrediction {
        row_ids: ids.to_vec(),
        survival,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_spd;
    use crate::optim::finite_difference_gradient;
    use crate::preprocess::OutputColumn;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn dm(x: Array2<f64>, weeks: Option<Vec<f64>>) -> DesignMatrix<f64> {
        let mut columns: Vec<OutputColumn> = (0..x.ncols())
            .map(|j| OutputColumn {
                name: format!("x{j}"),
                block: FeatureBlock::StaticStructural,
                source: format!("x{j}"),
            })
            .collect();
        let x = match weeks {
            None => x,
            Some(w) => {
                columns.push(OutputColumn {
                    name: "week".into(),
                    block: FeatureBlock::DiscreteTimeIndex,
                    source: "week".into(),
                });
                ndarray::concatenate(Axis(1), &[x.view(), Array2::from_shape_vec((w.len(), 1), w).unwrap().view()])
                    .unwrap()
            }
        };
        DesignMatrix {
            row_ids: (0..x.nrows()).map(|i| i.to_string()).collect(),
            x,
            columns,
        }
    }

    /// Unpenalized IRLS on `[1, x]`, written independently of the Newton path.
    fn irls(x: &[f64], y: &[bool]) -> (f64, f64) {
        let mut b = [0.0f64, 0.0];
        for _ in 0..100 {
            let mut xtwx = Array2::<f64>::zeros((2, 2));
            let mut xtwz = Array1::<f64>::zeros(2);
            for (&xi, &yi) in x.iter().zip(y) {
                let eta = b[0] + b[1] * xi;
                let p = 1.0 / (1.0 + (-eta).exp());
                let w = p * (1.0 - p);
                let z = eta + ((yi as u8 as f64) - p) / w;
                let v = [1.0, xi];
                for r in 0..2 {
                    xtwz[r] += v[r] * w * z;
                    for c in 0..2 {
                        xtwx[[r, c]] += v[r] * w * v[c];
                    }
                }
            }
            let next = solve_spd(&xtwx, &xtwz).unwrap();
            b = [next[0], next[1]];
        }
        (b[0], b[1])
    }

    #[test]
    fn logistic_matches_irls_oracle() {
        let xs = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let ys = [false, false, false, true, false, true, true, false];
        let d = dm(Array2::from_shape_vec((8, 1), xs.to_vec()).unwrap(), None);
        let m = fit_logistic_hazard(&d, &ys, 0.0, &NewtonOptions::default()).unwrap();
        let (a, b) = irls(&xs, &ys);
        assert_abs_diff_eq!(m.week_intercepts[0], a, epsilon = 1e-6);
        assert_abs_diff_eq!(m.coefficients[0], b, epsilon = 1e-6);
        assert_abs_diff_eq!(a, (1.0f64 / 3.0).ln(), epsilon = 1e-9);
    }

    #[test]
    fn constant_covariate_shrinks_to_zero() {
        let x = array![[0.0, 1.0], [0.0, -1.0], [0.0, 0.5], [0.0, 0.2], [0.0, -0.3]];
        let d = dm(x, None);
        let m = fit_logistic_hazard(&d, &[true, false, true, false, false], 0.1, &NewtonOptions::default()).unwrap();
        assert_abs_diff_eq!(m.coefficients[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn no_events_is_error() {
        let d = dm(array![[1.0], [2.0]], None);
        assert!(matches!(
            fit_logistic_hazard(&d, &[false, false], 1e-4, &NewtonOptions::default()),
            Err(Error::NoEvents(_))
        ));
        assert!(matches!(
            fit_poisson_pem(&d, &[false, false], &[1.0, 1.0], 1e-4, &NewtonOptions::default()),
            Err(Error::NoEvents(_))
        ));
    }

    #[test]
    fn intercept_only_poisson_is_closed_form() {
        let n = 100;
        let d = dm(Array2::zeros((n, 0)), None);
        let labels: Vec<bool> = (0..n).map(|i| i % 20 == 0).collect();
        let m = fit_poisson_pem(&d, &labels, &vec![1.0; n], 0.0, &NewtonOptions::default()).unwrap();
        assert_abs_diff_eq!(m.week_intercepts[0], 0.05f64.ln(), epsilon = 1e-8);
        let h = m.predict_weekly_hazard(&d).unwrap()[0];
        assert_abs_diff_eq!(h, 1.0 - (-0.05f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn duplicated_data_same_coefficients() {
        let x = array![[0.3], [-1.0], [0.8], [1.5], [-0.2], [0.1]];
        let y = [true, false, true, true, false, false];
        let e = vec![1.0; 6];
        let a = fit_poisson_pem(&dm(x.clone(), None), &y, &e, 1e-3, &NewtonOptions::default()).unwrap();
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2: Vec<bool> = y.iter().chain(y.iter()).copied().collect();
        let b = fit_poisson_pem(&dm(x2, None), &y2, &[e.clone(), e].concat(), 1e-3, &NewtonOptions::default()).unwrap();
        assert_abs_diff_eq!(a.coefficients[0], b.coefficients[0], epsilon = 1e-9);
        assert_abs_diff_eq!(a.week_intercepts[0], b.week_intercepts[0], epsilon = 1e-9);
    }

    #[test]
    fn link_evaluations() {
        assert_eq!(HazardLink::Logistic.hazard(0.0f64), 0.5);
        assert_abs_diff_eq!(HazardLink::PoissonLog.hazard(0.1f64.ln()), 0.09516258196404048, epsilon = 1e-12);
    }

    #[test]
    fn week_beyond_training_uses_last_intercept() {
        let x = Array2::zeros((6, 0));
        let d = dm(x, Some(vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0]));
        let m = fit_logistic_hazard(&d, &[false, true, true, false, false, true], 1e-2, &NewtonOptions::default())
            .unwrap();
        assert_eq!(m.week_intercepts.len(), 3);
        let probe = dm(Array2::zeros((1, 0)), Some(vec![9.0]));
        let h = m.predict_weekly_hazard(&probe).unwrap()[0];
        assert_abs_diff_eq!(h, sigmoid(m.week_intercepts[2]), epsilon = 1e-15);
    }

    #[test]
    fn layout_mismatch_is_schema_error() {
        let d = dm(array![[1.0], [0.0], [1.0]], None);
        let m = fit_logistic_hazard(&d, &[true, false, false], 1e-2, &NewtonOptions::default()).unwrap();
        let other = dm(array![[1.0, 2.0]], None);
        assert!(matches!(m.predict_weekly_hazard(&other), Err(Error::Schema(_))));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let x = array![[0.3, 1.0], [-1.0, 0.0], [0.8, 1.0], [1.5, 0.0], [-0.2, 1.0], [0.1, 0.0]];
        let d = dm(x, Some(vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0]));
        let y = [true, false, true, false, false, true];
        for link in [HazardLink::Logistic, HazardLink::PoissonLog] {
            let obj = HazardObjective::new(link, &d, &y, None, 0.01).unwrap();
            let theta = array![0.2, -0.4, 0.1, 0.7, -0.3];
            let fd = finite_difference_gradient(&obj, &theta, 1e-6);
            let an = obj.evaluate(&theta).gradient;
            for j in 0..theta.len() {
                assert!((fd[j] - an[j]).abs() <= 1e-7 * (1.0 + an[j].abs()), "{link:?} {j}");
            }
        }
    }

    #[test]
    fn reconstruct_examples() {
        let s = reconstruct_survival(&[0.1, 0.2], 1).unwrap();
        assert_abs_diff_eq!(s[0], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.72, epsilon = 1e-15);
        assert_eq!(reconstruct_survival(&[0.0f64; 4], 3).unwrap(), vec![1.0; 4]);
        let s = reconstruct_survival(&[0.1, 1.0, 0.3, 0.0], 3).unwrap();
        assert_eq!(&s[1..], &[0.0, 0.0, 0.0]);
        assert!(matches!(reconstruct_survival(&[0.1, 1.2], 1), Err(Error::InvalidHazard { .. })));
    }

    #[test]
    fn likelihood_trace_is_non_decreasing() {
        let x = array![[0.3], [-1.0], [0.8], [1.5], [-0.2], [0.1], [2.0], [-2.0]];
        let d = dm(x, None);
        let y = [true, false, true, true, false, false, true, false];
        let m = fit_logistic_hazard(&d, &y, 1e-3, &NewtonOptions::default()).unwrap();
        assert!(m.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
}
