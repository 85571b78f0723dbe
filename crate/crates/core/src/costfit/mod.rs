//! Token-cost accounting and cost-performance regression: a saturating
//! exponential fitted by Gauss-Newton for monotone entity types, and a
//! tri-cube-weighted local linear smoother for non-monotone ones.

mod expfit;
mod loess;

pub use expfit::{fit_exponential, half_rise, ExpFitParams};
pub use loess::{loess_fit, tricube, LoessCurve};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostFitError {
    #[error("negative input: {0}")]
    NegativeInput(f64),
    #[error("too few points: {points} points with {distinct_costs} distinct costs")]
    TooFewPoints { points: usize, distinct_costs: usize },
    #[error("degenerate data: all F1 values equal, rate is unidentifiable")]
    DegenerateData,
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("F1 value {0} outside [0, 1]")]
    InvalidF1(f64),
    #[error("span must lie in (0, 1], got {0}")]
    BadSpan(f64),
}

/// One (cost, F1) observation from a k-shot configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub k_shots: u32,
    pub avg_input_tokens: f64,
    pub cost_cents: f64,
    pub f1: f64,
}

/// Per-query input cost in cents at a dollars-per-million-tokens rate.
pub fn cost_per_query(
    avg_input_tokens: f64,
    price_dollars_per_million: f64,
) -> Result<f64, CostFitError> {
    if avg_input_tokens < 0.0 {
        return Err(CostFitError::NegativeInput(avg_input_tokens));
    }
    if price_dollars_per_million < 0.0 {
        return Err(CostFitError::NegativeInput(price_dollars_per_million));
    }
    Ok(avg_input_tokens * price_dollars_per_million / 1e6 * 100.0)
}

/// Regression family chosen for a cost-performance series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Exponential,
    Loess,
}

/// F1 drop between consecutive costs tolerated before the series counts as
/// non-monotone.
pub const MONOTONE_SLACK: f64 = 0.02;

/// Picks the regression family: exponential when F1 is non-decreasing in cost
/// within [`MONOTONE_SLACK`] after sorting by cost, LOESS otherwise.
pub fn model_select(points: &[CostPoint]) -> Result<ModelChoice, CostFitError> {
    if points.len() < 4 {
        return Err(CostFitError::TooFewPoints {
            points: points.len(),
            distinct_costs: distinct_costs(points),
        });
    }
    let mut sorted: Vec<&CostPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.cost_cents.total_cmp(&b.cost_cents));
    let monotone = sorted
        .windows(2)
        .all(|w| w[1].f1 >= w[0].f1 - MONOTONE_SLACK);
    Ok(if monotone {
        ModelChoice::Exponential
    } else {
        ModelChoice::Loess
    })
}

pub(crate) fn distinct_costs(points: &[CostPoint]) -> usize {
    let mut costs: Vec<f64> = points.iter().map(|p| p.cost_cents).collect();
    costs.sort_by(f64::total_cmp);
    costs.dedup();
    costs.len()
}
