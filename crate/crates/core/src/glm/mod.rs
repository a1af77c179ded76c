//! Canonical-link GLM fitting by iteratively reweighted least squares.
//!
//! Two families are supported: binomial with the logit link (responses may
//! be fractional, which turns the fit into a quasi-likelihood fit with the
//! same score equations) and gaussian with the identity link.

pub mod design;
mod linalg;
pub mod normal;

use serde::{Deserialize, Serialize};

pub use design::{DesignSpec, Formula, Frame, Term};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    BinomialLogit,
    GaussianIdentity,
}

/// Numerical controls for [`fit_glm_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative deviance change `|Δdev| / (|dev| + 0.1)` that counts as converged.
    pub deviance_tol: f64,
    /// Maximum absolute score component, per observation, at convergence.
    pub score_tol: f64,
    /// Any `|coefficient|` beyond this bound is reported as complete separation.
    pub divergence_bound: f64,
    /// Relative pivot tolerance of the rank test.
    pub rank_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            deviance_tol: 1e-8,
            score_tol: 1e-10,
            divergence_bound: 30.0,
            rank_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGlm {
    pub design: DesignSpec,
    pub coefficients: Vec<f64>,
    pub family: Family,
    pub converged: bool,
    pub deviance: f64,
    pub n_obs: usize,
    pub iterations: usize,
}

impl FittedGlm {
    /// Linear predictor for every row of `frame`.
    pub fn linear_predictor(&self, frame: &Frame) -> Result<Vec<f64>> {
        let p = self.coefficients.len();
        let x = self.design.model_matrix(frame)?;
        Ok(x.chunks_exact(p.max(1))
            .take(frame.n_rows())
            .map(|row| dot(row, &self.coefficients))
            .collect())
    }

    /// Fitted mean for every row of `frame`.
    pub fn predict_mean(&self, frame: &Frame) -> Result<Vec<f64>> {
        let eta = self.linear_predictor(frame)?;
        Ok(eta.into_iter().map(|e| self.family.inverse_link(e)).collect())
    }

    /// Fitted mean for a single row described by a column lookup.
    pub fn predict_row(&self, lookup: &impl Fn(&str) -> Option<f64>) -> Result<f64> {
        let eta = self.design.linear_predictor(&self.coefficients, lookup)?;
        Ok(self.family.inverse_link(eta))
    }
}

impl Family {
    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::BinomialLogit => logistic(eta),
            Family::GaussianIdentity => eta,
        }
    }

    fn deviance(self, y: &[f64], mu: &[f64]) -> f64 {
        match self {
            Family::BinomialLogit => {
                2.0 * y
                    .iter()
                    .zip(mu)
                    .map(|(&y, &m)| xlogy(y, y / m) + xlogy(1.0 - y, (1.0 - y) / (1.0 - m)))
                    .sum::<f64>()
            }
            Family::GaussianIdentity => y.iter().zip(mu).map(|(y, m)| (y - m) * (y - m)).sum(),
        }
    }
}

/// logit⁻¹(η), evaluated without overflow for large |η|.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits `response ~ design` with default [`FitOptions`].
pub fn fit_canonical_glm(design: &DesignSpec, frame: &Frame, response: &[f64], family: Family) -> Result<FittedGlm> {
    fit_glm_with(design, frame, response, family, &FitOptions::default())
}

/// Convenience wrapper returning the fitted means of `model` on `frame`.
pub fn predict_mean(model: &FittedGlm, frame: &Frame) -> Result<Vec<f64>> {
    model.predict_mean(frame)
}

pub fn fit_glm_with(
    design: &DesignSpec,
    frame: &Frame,
    response: &[f64],
    family: Family,
    opts: &FitOptions,
) -> Result<FittedGlm> {
    let n = frame.n_rows();
    let p = design.len();
    if n == 0 {
        return Err(Error::InvalidInput("no rows to fit".into()));
    }
    if p == 0 {
        return Err(Error::InvalidInput("design has no terms".into()));
    }
    if response.len() != n {
        return Err(Error::InvalidInput(format!(
            "response has {} values for {} rows",
            response.len(),
            n
        )));
    }
    if response.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("non-finite response".into()));
    }
    if family == Family::BinomialLogit && response.iter().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(Error::InvalidInput("binomial responses must lie in [0, 1]".into()));
    }
    let x = design.model_matrix(frame)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite covariate value".into()));
    }

    let term_name = |j: usize| design.terms()[j].to_string();
    let solve = |w: &[f64], z: &[f64]| -> Result<Vec<f64>> {
        let mut xtwx = vec![0.0; p * p];
        let mut xtwz = vec![0.0; p];
        for i in 0..n {
            let row = &x[i * p..(i + 1) * p];
            let wi = w[i];
            for a in 0..p {
                let wa = wi * row[a];
                xtwz[a] += wa * z[i];
                for b in a..p {
                    xtwx[a * p + b] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[a * p + b] = xtwx[b * p + a];
            }
        }
        linalg::pivoted_cholesky_solve(&xtwx, &xtwz, p, opts.rank_tol)
            .map_err(|j| Error::RankDeficient { term: term_name(j) })
    };
    let check_divergence = |beta: &[f64]| -> Result<()> {
        for (j, b) in beta.iter().enumerate() {
            if !b.is_finite() || b.abs() > opts.divergence_bound {
                return Err(Error::CompleteSeparation {
                    term: term_name(j),
                    value: *b,
                });
            }
        }
        Ok(())
    };
    let eta_of = |beta: &[f64]| -> Vec<f64> { x.chunks_exact(p).map(|row| dot(row, beta)).collect() };

    if family == Family::GaussianIdentity {
        let beta = solve(&vec![1.0; n], response)?;
        let mu = eta_of(&beta);
        return Ok(FittedGlm {
            design: design.clone(),
            deviance: family.deviance(response, &mu),
            coefficients: beta,
            family,
            converged: true,
            n_obs: n,
            iterations: 1,
        });
    }

    let mut mu: Vec<f64> = response.iter().map(|y| (y + 0.5) / 2.0).collect();
    let mut eta: Vec<f64> = mu.iter().map(|&m| logit(m)).collect();
    let mut dev_old = family.deviance(response, &mu);
    let mut beta: Vec<f64> = Vec::new();
    let score_bound = opts.score_tol * n as f64;

    for iter in 1..=opts.max_iterations {
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (response[i] - mu[i]) / w[i]).collect();
        let mut candidate = solve(&w, &z)?;
        check_divergence(&candidate)?;
        let mut new_eta = eta_of(&candidate);
        let mut new_mu: Vec<f64> = new_eta.iter().map(|&e| logistic(e)).collect();
        let mut dev = family.deviance(response, &new_mu);

        // Step halving guards against the rare overshoot of a full Newton step.
        if !beta.is_empty() {
            let mut halvings = 0;
            while !(dev.is_finite() && dev <= dev_old * (1.0 + 1e-12) + 1e-12) && halvings < 30 {
                for (c, b) in candidate.iter_mut().zip(&beta) {
                    *c = 0.5 * (*c + b);
                }
                new_eta = eta_of(&candidate);
                new_mu = new_eta.iter().map(|&e| logistic(e)).collect();
                dev = family.deviance(response, &new_mu);
                halvings += 1;
            }
        }

        let rel_change = (dev - dev_old).abs() / (dev.abs() + 0.1);
        beta = candidate;
        eta = new_eta;
        mu = new_mu;
        dev_old = dev;

        if rel_change < opts.deviance_tol {
            let resid: Vec<f64> = response.iter().zip(&mu).map(|(y, m)| y - m).collect();
            let max_score = (0..p)
                .map(|j| (0..n).map(|i| x[i * p + j] * resid[i]).sum::<f64>().abs())
                .fold(0.0, f64::max);
            if max_score <= score_bound {
                return Ok(FittedGlm {
                    design: design.clone(),
                    coefficients: beta,
                    family,
                    converged: true,
                    deviance: dev.max(0.0),
                    n_obs: n,
                    iterations: iter,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
    })
}
