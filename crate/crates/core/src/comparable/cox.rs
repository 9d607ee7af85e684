//! Cox proportional hazards with Breslow ties, L2 penalty and the Breslow
//! baseline cumulative hazard.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{check_layout, check_survival_inputs, SurvivalModel};
use crate::error::Result;
use crate::optim::{maximize, Evaluation, NewtonOptions, Objective};
use crate::prediction::SurvivalPrediction;
use crate::preprocess::DesignMatrix;
use crate::scalar::Scalar;

/// Risk-set summary at one distinct event time.
#[derive(Debug, Clone)]
pub struct EventMoment<T> {
    pub time: T,
    /// Indices of subjects with an event at `time`.
    pub events: Vec<usize>,
    /// `sum_{j in R} exp(x_j beta)`.
    pub s0: T,
    /// Risk-weighted covariate mean.
    pub mean: Array1<T>,
    /// Risk-weighted covariate covariance (omitted unless requested).
    pub cov: Option<Array2<T>>,
}

/// Per-distinct-event-time risk-set moments at `beta`, in increasing time.
pub fn risk_set_moments<T: Scalar>(
    x: &Array2<T>,
    times: &[T],
    events: &[bool],
    beta: &Array1<T>,
    with_cov: bool,
) -> Vec<EventMoment<T>> {
    let n = x.nrows();
    let p = x.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].partial_cmp(&times[a]).expect("finite times").then(a.cmp(&b)));
    let eta = x.dot(beta);
    // shift for numerical stability; cancels in every ratio
    let shift = eta.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut s0 = T::zero();
    let mut s1 = Array1::<T>::zeros(p);
    let mut s2 = Array2::<T>::zeros((p, p));
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        let t = times[order[k]];
        let mut end = k;
        while end < n && times[order[end]] == t {
            end += 1;
        }
        let mut tied_events = Vec::new();
        for &i in &order[k..end] {
            let w = (eta[i] - shift).exp();
            s0 += w;
            let row = x.row(i);
            s1.scaled_add(w, &row);
            if with_cov {
                for a in 0..p {
                    let wa = w * row[a];
                    if wa != T::zero() {
                        for b in 0..p {
                            s2[[a, b]] += wa * row[b];
                        }
                    }
                }
            }
            if events[i] {
                tied_events.push(i);
            }
        }
        if !tied_events.is_empty() {
            tied_events.sort_unstable();
            let mean = &s1 / s0;
            let cov = with_cov.then(|| {
                let mut c = &s2 / s0;
                for a in 0..p {
                    for b in 0..p {
                        c[[a, b]] -= mean[a] * mean[b];
                    }
                }
                c
            });
            out.push(EventMoment {
                time: t,
                events: tied_events,
                s0: s0 * shift.exp(),
                mean,
                cov,
            });
        }
        k = end;
    }
    out.reverse();
    out
}

/// Mean Breslow partial log-likelihood minus `lambda/2 |beta|^2`.
#[derive(Debug, Clone)]
pub struct CoxObjective<T> {
    x: Array2<T>,
    times: Vec<T>,
    events: Vec<bool>,
    lambda: T,
}

impl<T: Scalar> CoxObjective<T> {
    pub fn new(x: Array2<T>, times: Vec<T>, events: Vec<bool>, lambda: f64) -> Self {
        Self {
            x,
            times,
            events,
            lambda: T::lit(lambda),
        }
    }

    fn penalty(&self, beta: &Array1<T>) -> T {
        T::lit(0.5) * self.lambda * beta.iter().map(|&b| b * b).sum::<T>()
    }
}

fn log_partial<T: Scalar>(x: &Array2<T>, times: &[T], events: &[bool], beta: &Array1<T>) -> T {
    let eta = x.dot(beta);
    let moments = risk_set_moments(x, times, events, beta, false);
    moments
        .iter()
        .map(|m| {
            let d = T::from_usize_lossy(m.events.len());
            m.events.iter().map(|&i| eta[i]).sum::<T>() - d * m.s0.ln()
        })
        .sum()
}

impl<T: Scalar> Objective<T> for CoxObjective<T> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, beta: &Array1<T>) -> T {
        let n = T::from_usize_lossy(self.x.nrows());
        log_partial(&self.x, &self.times, &self.events, beta) / n - self.penalty(beta)
    }

    fn evaluate(&self, beta: &Array1<T>) -> Evaluation<T> {
        let n = T::from_usize_lossy(self.x.nrows());
        let p = self.x.ncols();
        let eta = self.x.dot(beta);
        let moments = risk_set_moments(&self.x, &self.times, &self.events, beta, true);
        let mut value = T::zero();
        let mut gradient = Array1::<T>::zeros(p);
        let mut hessian = Array2::<T>::zeros((p, p));
        for m in &moments {
            let d = T::from_usize_lossy(m.events.len());
            for &i in &m.events {
                value += eta[i];
                gradient += &self.x.row(i);
            }
            value -= d * m.s0.ln();
            gradient.scaled_add(-d, &m.mean);
            hessian.scaled_add(-d, m.cov.as_ref().expect("covariance requested"));
        }
        value = value / n - self.penalty(beta);
        gradient.mapv_inplace(|g| g / n);
        hessian.mapv_inplace(|h| h / n);
        for j in 0..p {
            gradient[j] -= self.lambda * beta[j];
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
pub struct CoxModel<T> {
    pub coefficients: Vec<T>,
    pub columns: Vec<String>,
    /// Distinct event times and the Breslow `Lambda_0` just after each.
    pub baseline_times: Vec<T>,
    pub baseline_cumhaz: Vec<T>,
    pub lambda_reg: f64,
    pub ties: String,
    pub iterations: usize,
}

pub fn fit_cox<T: Scalar>(
    dm: &DesignMatrix<T>,
    times: &[T],
    events: &[bool],
    lambda: f64,
    opts: &NewtonOptions,
) -> Result<CoxModel<T>> {
    check_survival_inputs(dm, times, events)?;
    let objective = CoxObjective::new(dm.x.clone(), times.to_vec(), events.to_vec(), lambda);
    let result = maximize(&objective, Array1::zeros(dm.n_cols()), opts)?;
    let (baseline_times, baseline_cumhaz) = breslow_baseline(&dm.x, times, events, &result.theta);
    Ok(CoxModel {
        coefficients: result.theta.to_vec(),
        columns: dm.column_names(),
        baseline_times,
        baseline_cumhaz,
        lambda_reg: lambda,
        ties: "breslow".into(),
        iterations: result.iterations,
    })
}

fn breslow_baseline<T: Scalar>(x: &Array2<T>, times: &[T], events: &[bool], beta: &Array1<T>) -> (Vec<T>, Vec<T>) {
    let mut cum = T::zero();
    let mut ts = Vec::new();
    let mut hs = Vec::new();
    for m in risk_set_moments(x, times, events, beta, false) {
        cum += T::from_usize_lossy(m.events.len()) / m.s0;
        ts.push(m.time);
        hs.push(cum);
    }
    (ts, hs)
}

impl<T: Scalar> CoxModel<T> {
    /// `Lambda_0(t)`, right-continuous; zero before the first event time.
    pub fn baseline_at(&self, t: T) -> T {
        let k = self.baseline_times.partition_point(|&u| u <= t);
        if k == 0 {
            T::zero()
        } else {
            self.baseline_cumhaz[k - 1]
        }
    }

    pub fn linear_predictor(&self, dm: &DesignMatrix<T>) -> Result<Array1<T>> {
        check_layout(dm, &self.columns)?;
        Ok(dm.x.dot(&Array1::from(self.coefficients.clone())))
    }
}

impl<T: Scalar> SurvivalModel<T> for CoxModel<T> {
    fn predict_survival_curve(&self, dm: &DesignMatrix<T>, grid_end: u32) -> Result<SurvivalPrediction<T>> {
        let eta = self.linear_predictor(dm)?;
        let base: Vec<T> = (0..=grid_end).map(|t| self.baseline_at(T::from_u32(t).expect("week"))).collect();
        let survival = Array2::from_shape_fn((dm.n_rows(), base.len()), |(i, t)| (-base[t] * eta[i].exp()).exp());
        Ok(SurvivalPrediction {
            row_ids: dm.row_ids.clone(),
            survival,
        })
    }
}
