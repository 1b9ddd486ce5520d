//! Maximum-likelihood logistic regression with Wald inference and backward
//! elimination.

mod elimination;
mod irls;
pub mod normal;
mod report;

pub use elimination::{backward_eliminate, EliminationStep, EliminationTrace};
pub use irls::{fit_design, fit_logistic, FitOptions};
pub use report::{coefficient_table, normalized_coefficients, sample_sd, CoefficientRow};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default stay threshold for backward elimination.
pub const DEFAULT_ALPHA_STAY: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("outcome has a single class ({positives} positive of {n})")]
    DegenerateOutcome { n: usize, positives: usize },
    #[error("need more rows than columns (n = {n}, p = {p})")]
    TooFewRows { n: usize, p: usize },
    #[error("complete or quasi-complete separation detected (max |beta| = {max_abs_beta:.3})")]
    SeparationDetected { max_abs_beta: f64 },
    #[error("information matrix is singular; dependent columns: {}", columns.join(", "))]
    SingularInformation { columns: Vec<String> },
    #[error("IRLS did not converge in {iterations} iterations (max |score| = {max_score:e})")]
    NotConverged { iterations: usize, max_score: f64 },
    #[error("row has {got} entries, model has {expected} coefficients")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("standard error of `{column}` is zero")]
    ZeroSe { column: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

/// A fitted logistic model on the log-odds scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub column_names: Vec<String>,
    pub beta: DVector<f64>,
    pub se: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
    /// Largest absolute entry of the score vector at the returned estimate.
    pub max_score: f64,
    /// Ridge added to the information diagonal, when the diagnostic flag was on.
    pub ridge: Option<f64>,
}

/// Standard logistic function, evaluated without overflow.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn linear_predictor(&self, row: &[f64]) -> Result<f64, GlmError> {
        if row.len() != self.beta.len() {
            return Err(GlmError::DimensionMismatch {
                expected: self.beta.len(),
                got: row.len(),
            });
        }
        Ok(row.iter().zip(self.beta.iter()).map(|(x, b)| x * b).sum())
    }

    /// Fitted probability for one feature row (same column order as the model).
    /// The result is kept strictly inside (0, 1) so it never prints as 0 or 1.
    pub fn predict_prob(&self, row: &[f64]) -> Result<f64, GlmError> {
        let p = sigmoid(self.linear_predictor(row)?);
        Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// Two-sided Wald test of coefficient `j`: (z, p).
    pub fn wald(&self, j: usize) -> Result<(f64, f64), GlmError> {
        let se = self.se[j];
        if !(se > 0.0) {
            return Err(GlmError::ZeroSe {
                column: self.column_names[j].clone(),
            });
        }
        let z = self.beta[j] / se;
        Ok((z, normal::two_sided_p(z)))
    }

    /// Linear predictors for the rows of `x`, whose columns are named `columns`.
    /// Model columns are looked up by name, so `x` may hold extra columns.
    pub fn linear_predictors_named(
        &self,
        x: &DMatrix<f64>,
        columns: &[String],
    ) -> Result<DVector<f64>, GlmError> {
        let idx = self
            .column_names
            .iter()
            .map(|name| {
                columns
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| GlmError::UnknownColumn(name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(x.select_columns(&idx) * &self.beta)
    }
}
