//! Survival curves on the shared weekly grid.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `survival[[i, t]]` is `S_i(t)` for weeks `t = 0..ncols`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalPrediction<T> {
    pub row_ids: Vec<String>,
    pub survival: Array2<T>,
}

impl<T: Scalar> SurvivalPrediction<T> {
    pub fn n_subjects(&self) -> usize {
        self.survival.nrows()
    }

    /// Last week on the grid.
    pub fn grid_end(&self) -> u32 {
        self.survival.ncols().saturating_sub(1) as u32
    }

    /// `1 - S_i(h)`.
    pub fn risk_at(&self, horizon: u32) -> Vec<T> {
        self.survival
            .column(horizon as usize)
            .iter()
            .map(|&s| T::one() - s)
            .collect()
    }

    /// Checks every curve lies in [0, 1] and is non-increasing.
    pub fn validate(&self) -> Result<()> {
        let slack = T::lit(1e-12);
        for (i, row) in self.survival.rows().into_iter().enumerate() {
            let mut prev = T::one() + slack;
            for &s in row {
                if !(s >= T::zero() && s <= T::one() + slack) || s > prev + slack {
                    return Err(Error::Internal(format!(
                        "survival curve for `{}` is not a valid non-increasing curve",
                        self.row_ids.get(i).map_or("?", String::as_str)
                    )));
                }
                prev = s;
            }
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            survival: self.survival.select(ndarray::Axis(0), rows),
        }
    }
}
