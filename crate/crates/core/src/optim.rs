//! Damped Newton ascent with step halving, shared by the likelihood fits.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, Cholesky};
use crate::scalar::Scalar;

/// Objective value with first and second derivatives.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub value: T,
    pub gradient: Array1<T>,
    pub hessian: Array2<T>,
}

/// A smooth objective to be maximized.
pub trait Objective<T: Scalar> {
    fn dim(&self) -> usize;
    fn value(&self, theta: &Array1<T>) -> T;
    fn evaluate(&self, theta: &Array1<T>) -> Evaluation<T>;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub grad_tol: f64,
    pub max_halvings: usize,
    /// Any parameter exceeding this magnitude is reported as separation.
    pub divergence_bound: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            grad_tol: 1e-6,
            max_halvings: 40,
            divergence_bound: 50.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult<T> {
    pub theta: Array1<T>,
    pub value: T,
    pub iterations: usize,
    pub grad_norm: T,
    /// Objective after every accepted step, starting with the initial point.
    pub trace: Vec<T>,
    /// Negative Hessian at the solution.
    pub information: Array2<T>,
}

pub fn maximize<T: Scalar, O: Objective<T>>(
    objective: &O,
    start: Array1<T>,
    opts: &NewtonOptions,
) -> Result<NewtonResult<T>> {
    let n = objective.dim();
    assert_eq!(start.len(), n, "start vector has wrong dimension");
    let tol = T::lit(opts.grad_tol);
    let bound = T::lit(opts.divergence_bound);
    let slack = T::lit(1e-13);

    let mut theta = start;
    let mut eval = objective.evaluate(&theta);
    if !eval.value.is_finite() {
        return Err(Error::Internal("objective is not finite at the start point".into()));
    }
    let mut trace = vec![eval.value];
    let mut iterations = 0;

    loop {
        let grad_norm = max_abs(&eval.gradient);
        if !grad_norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: f64::NAN,
            });
        }
        if grad_norm <= tol {
            return Ok(NewtonResult {
                theta,
                value: eval.value,
                iterations,
                grad_norm,
                trace,
                information: eval.hessian.mapv(|h| -h),
            });
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: grad_norm.to_f64_lossy(),
            });
        }
        iterations += 1;

        let neg_h = eval.hessian.mapv(|h| -h);
        let step = damped_direction(&neg_h, &eval.gradient);

        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &theta + &(&step * scale);
            let v = objective.value(&candidate);
            if v.is_finite() && v >= eval.value - slack * (T::one() + eval.value.abs()) {
                accepted = Some(candidate);
                break;
            }
            scale = scale * T::lit(0.5);
        }
        let Some(next) = accepted else {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: grad_norm.to_f64_lossy(),
            });
        };

        let magnitude = max_abs(&next);
        if magnitude > bound {
            return Err(Error::Separation {
                magnitude: magnitude.to_f64_lossy(),
            });
        }
        theta = next;
        eval = objective.evaluate(&theta);
        trace.push(eval.value);
    }
}

/// Solves `(-H + mu I) d = g`, inflating `mu` until the system is positive definite.
fn damped_direction<T: Scalar>(neg_h: &Array2<T>, g: &Array1<T>) -> Array1<T> {
    if let Some(c) = Cholesky::factor(neg_h) {
        return c.solve(g);
    }
    let diag_scale = neg_h
        .diag()
        .iter()
        .fold(T::zero(), |m, &x| m.max(x.abs()))
        .max(T::one());
    let mut mu = T::lit(1e-8) * diag_scale;
    loop {
        let mut damped = neg_h.clone();
        for i in 0..damped.nrows() {
            damped[[i, i]] += mu;
        }
        if let Some(c) = Cholesky::factor(&damped) {
            return c.solve(g);
        }
        mu = mu * T::lit(10.0);
        if !mu.is_finite() {
            // fall back to steepest ascent
            return g.clone();
        }
    }
}

/// Central finite-difference gradient, used to check analytic gradients.
pub fn finite_difference_gradient<T: Scalar, O: Objective<T>>(
    objective: &O,
    theta: &Array1<T>,
    step: T,
) -> Array1<T> {
    let mut grad = Array1::zeros(theta.len());
    let two = T::lit(2.0);
    for j in 0..theta.len() {
        let h = step * (T::one() + theta[j].abs());
        let mut up = theta.clone();
        up[j] += h;
        let mut down = theta.clone();
        down[j] -= h;
        grad[j] = (objective.value(&up) - objective.value(&down)) / (two * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    struct Quadratic;

    impl Objective<f64> for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, t: &Array1<f64>) -> f64 {
            -(t[0] - 1.0).powi(2) - 3.0 * (t[1] + 2.0).powi(2) + 0.5 * (t[0] - 1.0) * (t[1] + 2.0)
        }
        fn evaluate(&self, t: &Array1<f64>) -> Evaluation<f64> {
            let a = t[0] - 1.0;
            let b = t[1] + 2.0;
            Evaluation {
                value: self.value(t),
                gradient: array![-2.0 * a + 0.5 * b, -6.0 * b + 0.5 * a],
                hessian: array![[-2.0, 0.5], [0.5, -6.0]],
            }
        }
    }

    #[test]
    fn newton_solves_quadratic_in_one_step() {
        let r = maximize(&Quadratic, array![0.0, 0.0], &NewtonOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.theta[0] - 1.0).abs() < 1e-12);
        assert!((r.theta[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_reports_nonconvergence() {
        let opts = NewtonOptions {
            max_iterations: 0,
            ..Default::default()
        };
        match maximize(&Quadratic, array![0.0, 0.0], &opts) {
            Err(Error::NonConvergence { iterations: 0, grad_norm }) => assert!(grad_norm > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn finite_differences_match_quadratic_gradient() {
        let t = array![0.3, -0.7];
        let fd = finite_difference_gradient(&Quadratic, &t, 1e-5);
        let an = Quadratic.evaluate(&t).gradient;
        assert!(max_abs(&(fd - an)) < 1e-8);
    }
}
