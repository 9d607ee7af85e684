//! Weibull accelerated failure time model:
//! `log T = mu + x beta + W / k` with `W` standard minimum extreme value.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{check_layout, check_survival_inputs, SurvivalModel};
use crate::error::Result;
use crate::optim::{maximize, Evaluation, NewtonOptions, Objective};
use crate::prediction::SurvivalPrediction;
use crate::preprocess::DesignMatrix;
use crate::scalar::Scalar;

/// Zero observed times are moved here before fitting.
pub const ZERO_TIME_SHIFT: f64 = 0.5;

/// Mean censored Weibull log-likelihood over `theta = (log k, mu, beta)`,
/// minus `lambda/2 |beta|^2`.
#[derive(Debug, Clone)]
pub struct WeibullObjective<T> {
    x: Array2<T>,
    log_t: Array1<T>,
    delta: Array1<T>,
    lambda: T,
}

impl<T: Scalar> WeibullObjective<T> {
    /// `times` must already be positive.
    pub fn new(x: Array2<T>, times: &[T], events: &[bool], lambda: f64) -> Self {
        Self {
            x,
            log_t: times.iter().map(|t| t.ln()).collect(),
            delta: events.iter().map(|&e| if e { T::one() } else { T::zero() }).collect(),
            lambda: T::lit(lambda),
        }
    }

    fn z(&self, theta: &Array1<T>) -> (T, Array1<T>) {
        let k = theta[0].exp();
        let eta = self.x.dot(&theta.slice(s![2..])) + theta[1];
        (k, (&self.log_t - &eta) * k)
    }

    fn penalty(&self, theta: &Array1<T>) -> T {
        T::lit(0.5) * self.lambda * theta.slice(s![2..]).iter().map(|&b| b * b).sum::<T>()
    }
}

impl<T: Scalar> Objective<T> for WeibullObjective<T> {
    fn dim(&self) -> usize {
        self.x.ncols() + 2
    }

    fn value(&self, theta: &Array1<T>) -> T {
        let n = T::from_usize_lossy(self.x.nrows());
        let (_, z) = self.z(theta);
        let mut ll = T::zero();
        for i in 0..z.len() {
            ll += self.delta[i] * (theta[0] - self.log_t[i] + z[i]) - z[i].exp();
        }
        ll / n - self.penalty(theta)
    }

    fn evaluate(&self, theta: &Array1<T>) -> Evaluation<T> {
        let n = self.x.nrows();
        let nf = T::from_usize_lossy(n);
        let p = self.x.ncols();
        let (k, z) = self.z(theta);
        let mut value = T::zero();
        // per-row derivatives in (eta, s = log k)
        let mut g_eta = Array1::<T>::zeros(n);
        let mut h_ee = Array1::<T>::zeros(n);
        let mut h_es = Array1::<T>::zeros(n);
        let mut g_s = T::zero();
        let mut h_ss = T::zero();
        for i in 0..n {
            let d = self.delta[i];
            let ez = z[i].exp();
            value += d * (theta[0] - self.log_t[i] + z[i]) - ez;
            g_eta[i] = k * (ez - d);
            g_s += d + z[i] * (d - ez);
            h_ee[i] = -k * k * ez;
            h_es[i] = k * (ez - d) + k * ez * z[i];
            h_ss += z[i] * (d - ez) - z[i] * z[i] * ez;
        }
        let dim = p + 2;
        let mut gradient = Array1::<T>::zeros(dim);
        gradient[0] = g_s;
        gradient[1] = g_eta.sum();
        gradient.slice_mut(s![2..]).assign(&self.x.t().dot(&g_eta));

        let mut hessian = Array2::<T>::zeros((dim, dim));
        hessian[[0, 0]] = h_ss;
        let hs_mu = h_es.sum();
        hessian[[0, 1]] = hs_mu;
        hessian[[1, 0]] = hs_mu;
        hessian[[1, 1]] = h_ee.sum();
        let hs_beta = self.x.t().dot(&h_es);
        let hmu_beta = self.x.t().dot(&h_ee);
        for j in 0..p {
            hessian[[0, j + 2]] = hs_beta[j];
            hessian[[j + 2, 0]] = hs_beta[j];
            hessian[[1, j + 2]] = hmu_beta[j];
            hessian[[j + 2, 1]] = hmu_beta[j];
        }
        let mut xw = self.x.clone();
        for (mut row, &w) in xw.rows_mut().into_iter().zip(h_ee.iter()) {
            row *= (-w).sqrt();
        }
        let bb = xw.t().dot(&xw);
        hessian.slice_mut(s![2.., 2..]).assign(&bb.mapv(|v| -v));

        value = value / nf - self.penalty(theta);
        gradient.mapv_inplace(|g| g / nf);
        hessian.mapv_inplace(|h| h / nf);
        for j in 2..dim {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullAftModel<T> {
    pub shape: T,
    pub intercept: T,
    pub coefficients: Vec<T>,
    pub columns: Vec<String>,
    pub lambda_reg: f64,
    pub iterations: usize,
}

/// Maximum-likelihood Weibull AFT; zero times are shifted to
/// [`ZERO_TIME_SHIFT`]. `lambda` is a small ridge on `beta` only.
pub fn fit_weibull_aft<T: Scalar>(
    dm: &DesignMatrix<T>,
    times: &[T],
    events: &[bool],
    lambda: f64,
    opts: &NewtonOptions,
) -> Result<WeibullAftModel<T>> {
    check_survival_inputs(dm, times, events)?;
    let shifted: Vec<T> = times
        .iter()
        .map(|&t| if t > T::zero() { t } else { T::lit(ZERO_TIME_SHIFT) })
        .collect();
    let objective = WeibullObjective::new(dm.x.clone(), &shifted, events, lambda);
    let mut start = Array1::<T>::zeros(dm.n_cols() + 2);
    let n_events = T::from_usize_lossy(events.iter().filter(|&&e| e).count());
    // exponential MLE for the scale as a starting point
    start[1] = (shifted.iter().copied().sum::<T>() / n_events).ln();
    let result = maximize(&objective, start, opts)?;
    Ok(WeibullAftModel {
        shape: result.theta[0].exp(),
        intercept: result.theta[1],
        coefficients: result.theta.slice(s![2..]).to_vec(),
        columns: dm.column_names(),
        lambda_reg: lambda,
        iterations: result.iterations,
    })
}

impl<T: Scalar> WeibullAftModel<T> {
    /// `S(t) = exp(-(t / scale)^k)`.
    pub fn survival_at(&self, t: T, log_scale: T) -> T {
        if t <= T::zero() {
            return T::one();
        }
        (-(self.shape * (t.ln() - log_scale)).exp()).exp()
    }
}

impl<T: Scalar> SurvivalModel<T> for WeibullAftModel<T> {
    fn predict_survival_curve(&self, dm: &DesignMatrix<T>, grid_end: u32) -> Result<SurvivalPrediction<T>> {
        check_layout(dm, &self.columns)?;
        let eta = dm.x.dot(&Array1::from(self.coefficients.clone())) + self.intercept;
        let survival = Array2::from_shape_fn((dm.n_rows(), grid_end as usize + 1), |(i, t)| {
            self.survival_at(T::from_usize_lossy(t), eta[i])
        });
        Ok(SurvivalPrediction {
            row_ids: dm.row_ids.clone(),
            survival,
        })
    }
}
