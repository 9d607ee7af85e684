//! Small dense routines for the Newton solvers: the systems here are at most a
//! few hundred columns wide.

use ndarray::{Array1, Array2};

use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: Array2<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Returns `None` when the matrix is not numerically positive definite.
    pub fn factor(a: &Array2<T>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Some(Self { lower: l })
    }

    pub fn solve(&self, b: &Array1<T>) -> Array1<T> {
        let n = self.lower.nrows();
        let l = &self.lower;
        let mut y = Array1::<T>::zeros(n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        let mut x = Array1::<T>::zeros(n);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        x
    }

    pub fn inverse(&self) -> Array2<T> {
        let n = self.lower.nrows();
        let mut inv = Array2::<T>::zeros((n, n));
        let mut e = Array1::<T>::zeros(n);
        for j in 0..n {
            e.fill(T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            inv.column_mut(j).assign(&col);
        }
        inv
    }
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd<T: Scalar>(a: &Array2<T>, b: &Array1<T>) -> Option<Array1<T>> {
    Cholesky::factor(a).map(|c| c.solve(b))
}

pub fn max_abs<T: Scalar>(v: &Array1<T>) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a: Array2<f64> = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let x = solve_spd(&a, &b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(max_abs(&r) < 1e-12);
        let inv = Cholesky::factor(&a).unwrap().inverse();
        let eye = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want: f64 = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0_f64, 2.0], [2.0, 1.0]];
        assert!(Cholesky::factor(&a).is_none());
    }
}
