//! Share of outcome variation explained by the short-term endpoint and the
//! baseline covariates, on the latent logistic scale.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{sample_variance, X_COLUMN};
use crate::glm::{fit_canonical_glm, DesignSpec, Family, Frame, Term};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    pub r2_total: f64,
    pub r2_x: f64,
    pub r2_z: f64,
}

/// Fits `y ~ full_spec` by logistic regression and splits the explained
/// variance of its linear predictor into a part carried by X beyond its
/// prediction `Q̂(Z)` from `z_only_spec`, and a part carried by Z.
///
/// When `full_spec` has no `x` term, everything is attributed to Z.
pub fn compute_r_squared(
    frame: &Frame,
    y: &[f64],
    full_spec: &DesignSpec,
    z_only_spec: &DesignSpec,
) -> Result<RSquared> {
    let first = y.first().copied().unwrap_or(0.0);
    if y.iter().all(|&v| v == first) {
        return Err(Error::ZeroVariance("outcome takes a single value".into()));
    }
    if full_spec
        .terms()
        .iter()
        .any(|t| t.is_interaction() && t.columns().contains(&X_COLUMN))
    {
        return Err(Error::InvalidInput(
            "the variance split needs `x` to enter additively".into(),
        ));
    }
    let fit = fit_canonical_glm(full_spec, frame, y, Family::BinomialLogit)?;
    let lp = fit.linear_predictor(frame)?;
    let denom = sample_variance(&lp) + PI * PI / 4.0;
    let r2_total = sample_variance(&lp) / denom;

    let x_pos = full_spec.terms().iter().position(|t| *t == Term::Main(X_COLUMN.into()));
    let Some(j) = x_pos else {
        return Ok(RSquared {
            r2_total,
            r2_x: 0.0,
            r2_z: r2_total,
        });
    };
    let beta_x = fit.coefficients[j];
    let x = frame
        .column(X_COLUMN)
        .ok_or_else(|| Error::MissingColumn(X_COLUMN.into()))?;
    let q_fit = fit_canonical_glm(z_only_spec, frame, x, Family::BinomialLogit)?;
    let q = q_fit.predict_mean(frame)?;
    let resid: Vec<f64> = x.iter().zip(&q).map(|(x, q)| x - q).collect();
    let lp_z: Vec<f64> = (0..lp.len()).map(|i| lp[i] - beta_x * resid[i]).collect();
    Ok(RSquared {
        r2_total,
        r2_x: beta_x * beta_x * sample_variance(&resid) / denom,
        r2_z: sample_variance(&lp_z) / denom,
    })
}
