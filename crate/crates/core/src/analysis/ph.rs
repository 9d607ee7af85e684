//! Proportional-hazards audit of a fitted Cox model: per-covariate score test
//! of `beta_j * g(t)` with `g` the KM time transform, plus the correlation of
//! scaled Schoenfeld residuals with `g`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::comparable::{risk_set_moments, CoxModel};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::preprocess::DesignMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhLabel {
    #[serde(rename = "A_clean")]
    Clean,
    #[serde(rename = "B_localized_departure")]
    LocalizedDeparture,
    #[serde(rename = "C_broad_departure")]
    BroadDeparture,
}

impl PhLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhLabel::Clean => "A_clean",
            PhLabel::LocalizedDeparture => "B_localized_departure",
            PhLabel::BroadDeparture => "C_broad_departure",
        }
    }
}

/// Below 5% flagged is clean, below 20% localized, otherwise broad.
pub fn classify_ph(flagged_fraction: f64) -> PhLabel {
    if flagged_fraction < 0.05 {
        PhLabel::Clean
    } else if flagged_fraction < 0.20 {
        PhLabel::LocalizedDeparture
    } else {
        PhLabel::BroadDeparture
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhCovariate {
    pub column: String,
    /// Pearson correlation of the scaled Schoenfeld residual with `g(t)`.
    pub rho: f64,
    pub chi2: f64,
    pub p_value: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhAuditResult {
    pub covariates: Vec<PhCovariate>,
    /// Columns without risk-set variance are not testable and are skipped.
    pub skipped: Vec<String>,
    pub n_tested: usize,
    pub n_flagged: usize,
    pub flagged_fraction: f64,
    pub alpha: f64,
    pub label: PhLabel,
    pub transform: String,
}

/// Upper tail of chi-square with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        libm::erfc((x / 2.0).sqrt())
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa * sbb).sqrt()
    } else {
        0.0
    }
}

pub fn ph_audit<T: Scalar>(
    model: &CoxModel<T>,
    dm: &DesignMatrix<T>,
    times: &[T],
    events: &[bool],
    alpha: f64,
) -> Result<PhAuditResult> {
    if dm.column_names() != model.columns {
        return Err(Error::Schema("design columns differ from the fitted Cox layout".into()));
    }
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events < 3 {
        return Err(Error::NoEvents(format!("PH audit needs at least 3 events, got {n_events}")));
    }
    let x: Array2<f64> = dm.x.mapv(|v| v.to_f64_lossy());
    let t: Vec<f64> = times.iter().map(|v| v.to_f64_lossy()).collect();
    let beta: Array1<f64> = model.coefficients.iter().map(|v| v.to_f64_lossy()).collect();
    let p = x.ncols();
    let moments = risk_set_moments(&x, &t, events, &beta, true);

    // left-continuous KM of the event process at each distinct event time
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let mut km = 1.0;
    let mut at_risk = t.len() as f64;
    let mut g_at = Vec::with_capacity(moments.len());
    let mut pos = 0;
    for m in &moments {
        while pos < order.len() && t[order[pos]] < m.time {
            at_risk -= 1.0;
            pos += 1;
        }
        g_at.push(1.0 - km);
        let d = m.events.len() as f64;
        km *= 1.0 - d / at_risk;
    }
    let total_d: f64 = moments.iter().map(|m| m.events.len() as f64).sum();
    let g_mean = moments
        .iter()
        .zip(&g_at)
        .map(|(m, g)| m.events.len() as f64 * g)
        .sum::<f64>()
        / total_d;
    let g: Vec<f64> = g_at.iter().map(|v| v - g_mean).collect();

    // information blocks, unnormalized, with the fit's ridge
    let ridge = model.lambda_reg * t.len() as f64;
    let mut i_bb = Array2::<f64>::zeros((p, p));
    let mut i_gb = Array2::<f64>::zeros((p, p));
    let mut i_gg = Array1::<f64>::zeros(p);
    let mut u = Array1::<f64>::zeros(p);
    let mut residuals: Vec<(f64, Array1<f64>)> = Vec::with_capacity(n_events);
    for (m, &gk) in moments.iter().zip(&g) {
        let d = m.events.len() as f64;
        let v = m.cov.as_ref().expect("covariance requested");
        i_bb.scaled_add(d, v);
        i_gb.scaled_add(d * gk, v);
        for j in 0..p {
            i_gg[j] += d * gk * gk * v[[j, j]];
        }
        for &i in &m.events {
            let r = &x.row(i) - &m.mean;
            u.scaled_add(gk, &r);
            residuals.push((gk, r));
        }
    }
    for j in 0..p {
        i_bb[[j, j]] += ridge;
    }
    let chol = Cholesky::factor(&i_bb).ok_or_else(|| {
        Error::Internal("Cox information matrix is singular; increase the L2 strength".into())
    })?;
    let inv = chol.inverse();

    let scaled: Vec<Array1<f64>> = residuals.iter().map(|(_, r)| &beta + &(inv.dot(r) * total_d)).collect();
    let g_events: Vec<f64> = residuals.iter().map(|(gk, _)| *gk).collect();

    let mut covariates = Vec::new();
    let mut skipped = Vec::new();
    for j in 0..p {
        let cross = i_gb.row(j).to_owned();
        let var = i_gg[j] - cross.dot(&chol.solve(&cross));
        let scale = i_gg[j].abs().max(1e-300);
        if !(var > 1e-10 * scale) || i_gg[j] <= 1e-12 {
            skipped.push(model.columns[j].clone());
            continue;
        }
        let chi2 = u[j] * u[j] / var;
        let p_value = chi2_1_sf(chi2);
        let col: Vec<f64> = scaled.iter().map(|s| s[j]).collect();
        covariates.push(PhCovariate {
            column: model.columns[j].clone(),
            rho: pearson(&col, &g_events),
            chi2,
            p_value,
            flagged: p_value < alpha,
        });
    }
    let n_tested = covariates.len();
    let n_flagged = covariates.iter().filter(|c| c.flagged).count();
    let flagged_fraction = if n_tested == 0 {
        0.0
    } else {
        n_flagged as f64 / n_tested as f64
    };
    Ok(PhAuditResult {
        covariates,
        skipped,
        n_tested,
        n_flagged,
        flagged_fraction,
        alpha,
        label: classify_ph(flagged_fraction),
        transform: "km".into(),
    })
}
