//! Cost-performance fit reports over consolidated sweep results.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{ExperimentError, SweepRow};
use crate::corpus::EntityType;
use crate::costfit::{
    fit_exponential, loess_fit, model_select, CostPoint, LoessCurve, ModelChoice,
};

/// One row of the fit report: the selected model with its parameters, or the
/// LOESS summary when the series is non-monotone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReportRow {
    pub entity_type: EntityType,
    pub model: ModelChoice,
    pub f_inf: Option<f64>,
    pub r0: Option<f64>,
    pub lambda: Option<f64>,
    pub half_rise_cents: Option<f64>,
    pub cost_at_95_percent: Option<f64>,
    pub sse: Option<f64>,
    pub converged: Option<bool>,
}

/// Builds cost points from the rows of one selection method.
pub fn cost_points(rows: &[SweepRow], method: &str) -> Vec<CostPoint> {
    rows.iter()
        .filter(|r| r.method == method)
        .map(|r| CostPoint {
            k_shots: r.k as u32,
            avg_input_tokens: r.avg_input_tokens,
            cost_cents: r.cost_cents,
            f1: r.f1,
        })
        .collect()
}

/// Selects the regression family and fits it.
pub fn fit_cost_curve(
    entity_type: EntityType,
    points: &[CostPoint],
) -> Result<(FitReportRow, Option<LoessCurve>), ExperimentError> {
    match model_select(points)? {
        ModelChoice::Exponential => {
            let fit = fit_exponential(points)?;
            Ok((
                FitReportRow {
                    entity_type,
                    model: ModelChoice::Exponential,
                    f_inf: Some(fit.f_inf),
                    r0: Some(fit.r0),
                    lambda: Some(fit.lambda),
                    half_rise_cents: Some(fit.half_rise_cents),
                    cost_at_95_percent: Some(fit.cost_at_95_percent()),
                    sse: Some(fit.residual_sse),
                    converged: Some(fit.converged),
                },
                None,
            ))
        }
        ModelChoice::Loess => {
            let curve = loess_fit(points, 0.75)?;
            Ok((
                FitReportRow {
                    entity_type,
                    model: ModelChoice::Loess,
                    f_inf: None,
                    r0: None,
                    lambda: None,
                    half_rise_cents: None,
                    cost_at_95_percent: None,
                    sse: None,
                    converged: None,
                },
                Some(curve),
            ))
        }
    }
}

pub fn write_fit_report(rows: &[FitReportRow], path: &Path) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| ExperimentError::Io(std::io::Error::other(e)))?;
    writer
        .write_record([
            "entity_type",
            "model",
            "f_inf",
            "r0",
            "lambda",
            "half_rise_cents",
            "cost_at_95_percent",
            "sse",
            "converged",
        ])
        .map_err(|e| ExperimentError::Io(std::io::Error::other(e)))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for row in rows {
        writer
            .write_record([
                row.entity_type.as_str().to_string(),
                match row.model {
                    ModelChoice::Exponential => "exponential".to_string(),
                    ModelChoice::Loess => "loess".to_string(),
                },
                fmt(row.f_inf),
                fmt(row.r0),
                fmt(row.lambda),
                fmt(row.half_rise_cents),
                fmt(row.cost_at_95_percent),
                fmt(row.sse),
                row.converged.map(|c| c.to_string()).unwrap_or_default(),
            ])
            .map_err(|e| ExperimentError::Io(std::io::Error::other(e)))?;
    }
    writer.flush()?;
    Ok(())
}
