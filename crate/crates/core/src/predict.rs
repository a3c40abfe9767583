//! Intercept recovery and point prediction on the original response scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouped_model::CenteringStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionModel {
    pub beta: Vec<f64>,
    pub stats: CenteringStats,
    /// `ȳ − βᵀx̄`.
    pub kappa_hat: f64,
}

pub fn make_model(beta: &[f64], stats: &CenteringStats) -> Result<PredictionModel> {
    if beta.len() != stats.x_bar.len() {
        return Err(Error::LengthMismatch {
            expected: stats.x_bar.len(),
            actual: beta.len(),
        });
    }
    let dot: f64 = beta.iter().zip(&stats.x_bar).map(|(b, x)| b * x).sum();
    Ok(PredictionModel {
        beta: beta.to_vec(),
        stats: stats.clone(),
        kappa_hat: stats.y_bar - dot,
    })
}

/// `ȳ + (x* − x̄)ᵀβ`.
pub fn predict_point(model: &PredictionModel, x_star: &[f64]) -> Result<f64> {
    if x_star.len() != model.beta.len() {
        return Err(Error::LengthMismatch {
            expected: model.beta.len(),
            actual: x_star.len(),
        });
    }
    let shift: f64 = x_star
        .iter()
        .zip(&model.stats.x_bar)
        .zip(&model.beta)
        .map(|((x, m), b)| (x - m) * b)
        .sum();
    Ok(model.stats.y_bar + shift)
}

/// Predictions for every row of an uncentered design.
pub fn predict_rows(model: &PredictionModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.beta.len() {
        return Err(Error::LengthMismatch {
            expected: model.beta.len(),
            actual: x.ncols(),
        });
    }
    let beta = DVector::from_column_slice(&model.beta);
    let x_bar = DVector::from_column_slice(&model.stats.x_bar);
    let offset = model.stats.y_bar - x_bar.dot(&beta);
    Ok((x * beta).add_scalar(offset))
}
