//! Comparable-arm families on enrollment-level early-window designs. Each
//! emits full survival curves on the shared weekly grid.

mod cox;
mod forest;
mod weibull;

pub use cox::{fit_cox, risk_set_moments, CoxModel, CoxObjective, EventMoment};
pub use forest::{fit_rsf, ForestParams, SurvivalForest, SurvivalTree, TreeNode};
pub use weibull::{fit_weibull_aft, WeibullAftModel, WeibullObjective, ZERO_TIME_SHIFT};

use crate::error::{Error, Result};
use crate::prediction::SurvivalPrediction;
use crate::preprocess::DesignMatrix;
use crate::scalar::Scalar;

/// Any fitted model that maps enrollment rows to survival curves.
pub trait SurvivalModel<T: Scalar>: Send + Sync {
    fn predict_survival_curve(&self, dm: &DesignMatrix<T>, grid_end: u32) -> Result<SurvivalPrediction<T>>;
}

pub(crate) fn check_layout<T: Scalar>(dm: &DesignMatrix<T>, columns: &[String]) -> Result<()> {
    if dm.n_cols() != columns.len() || dm.columns.iter().zip(columns).any(|(c, n)| &c.name != n) {
        return Err(Error::Schema("design columns differ from the fitted layout".into()));
    }
    Ok(())
}

pub(crate) fn check_survival_inputs<T: Scalar>(dm: &DesignMatrix<T>, times: &[T], events: &[bool]) -> Result<()> {
    if times.len() != dm.n_rows() || events.len() != dm.n_rows() {
        return Err(Error::Invalid("times/events length differs from design rows".into()));
    }
    if dm.n_rows() == 0 {
        return Err(Error::Empty("survival design matrix".into()));
    }
    if let Some(i) = times.iter().position(|&t| !(t >= T::zero()) || !t.is_finite()) {
        return Err(Error::Data {
            row: i,
            message: "survival time must be finite and non-negative".into(),
        });
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents("survival training data".into()));
    }
    Ok(())
}
