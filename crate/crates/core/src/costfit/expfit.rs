//! Gauss-Newton fit of the saturating curve `F(x) = F∞ − R₀·exp(−λx)`.
//!
//! Initialization: `F∞⁰ = max(F) + 0.01`, `R₀⁰ = F∞⁰ − F(min cost)`, and `λ⁰`
//! from a log-linear fit of `ln(F∞⁰ − F_j)` against cost. Steps use the normal
//! equations with halving on residual increase; `F∞` is projected into (0, 1]
//! and `λ` kept positive after every step.

use serde::{Deserialize, Serialize};

use super::{distinct_costs, CostFitError, CostPoint};

const MAX_ITERS: usize = 200;
const MAX_HALVINGS: usize = 30;
const REL_TOL: f64 = 1e-10;

/// Fitted parameters of the asymptotic exponential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFitParams {
    pub f_inf: f64,
    pub r0: f64,
    pub lambda: f64,
    pub half_rise_cents: f64,
    pub residual_sse: f64,
    pub converged: bool,
}

impl ExpFitParams {
    /// Fitted curve value at cost `x`.
    pub fn value_at(&self, x: f64) -> f64 {
        self.f_inf - self.r0 * (-self.lambda * x).exp()
    }

    /// Cost at which the curve has closed all but 5% of the rise `R₀`,
    /// i.e. the solution of `F(x) = F∞ − 0.05·R₀`.
    pub fn cost_at_95_percent(&self) -> f64 {
        (20.0f64).ln() / self.lambda
    }
}

/// Spend at which half of the attainable improvement is realized: `ln 2 / λ`.
pub fn half_rise(lambda: f64) -> Result<f64, CostFitError> {
    if lambda <= 0.0 {
        return Err(CostFitError::NonPositiveLambda(lambda));
    }
    Ok(std::f64::consts::LN_2 / lambda)
}

fn model(x: f64, p: &[f64; 3]) -> f64 {
    p[0] - p[1] * (-p[2] * x).exp()
}

fn sse(points: &[CostPoint], p: &[f64; 3]) -> f64 {
    points
        .iter()
        .map(|pt| {
            let r = pt.f1 - model(pt.cost_cents, p);
            r * r
        })
        .sum()
}

fn clamp(p: &mut [f64; 3]) {
    p[0] = p[0].clamp(1e-9, 1.0);
    p[2] = p[2].max(1e-12);
}

/// Solves a 3x3 linear system by Gaussian elimination with partial pivoting.
/// Returns `None` when the system is numerically singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let factor = a[row][col] / a[col][col];
            let (above, below) = a.split_at_mut(row);
            for (slot, &coeff) in below[0][col..3].iter_mut().zip(above[col][col..3].iter()) {
                *slot -= factor * coeff;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut sum = b[row];
        for k in (row + 1)..3 {
            sum -= a[row][k] * x[k];
        }
        x[row] = sum / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Ordinary least-squares slope and intercept of y over x.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, mean_y - slope * mean_x)
}

fn initial_params(points: &[CostPoint]) -> [f64; 3] {
    let f_inf0 = points.iter().map(|p| p.f1).fold(f64::MIN, f64::max) + 0.01;
    let min_cost_point = points
        .iter()
        .min_by(|a, b| a.cost_cents.total_cmp(&b.cost_cents))
        .expect("non-empty");
    let r0_0 = f_inf0 - min_cost_point.f1;

    let xs: Vec<f64> = points.iter().map(|p| p.cost_cents).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| (f_inf0 - p.f1).max(1e-12).ln())
        .collect();
    let (slope, _) = linear_fit(&xs, &ys);
    let lambda0 = (-slope).max(1e-3);

    let mut p = [f_inf0, r0_0, lambda0];
    clamp(&mut p);
    p
}

/// One Gauss-Newton descent from the given start. Returns the final
/// parameters, SSE, and whether the relative-change criterion was met.
fn descend(points: &[CostPoint], start: [f64; 3]) -> ([f64; 3], f64, bool) {
    let mut p = start;
    let mut current_sse = sse(points, &p);
    let mut converged = false;

    for _ in 0..MAX_ITERS {
        // Normal equations J'J d = J'r with r = y - f(p).
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for pt in points {
            let e = (-p[2] * pt.cost_cents).exp();
            let j = [1.0, -e, p[1] * pt.cost_cents * e];
            let r = pt.f1 - model(pt.cost_cents, &p);
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let Some(mut delta) = solve3(jtj, jtr) else {
            break;
        };

        // Step halving until the residual does not increase.
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut candidate = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]];
            clamp(&mut candidate);
            let candidate_sse = sse(points, &candidate);
            if candidate_sse <= current_sse {
                accepted = Some((candidate, candidate_sse));
                break;
            }
            for d in delta.iter_mut() {
                *d *= 0.5;
            }
        }
        let Some((next, next_sse)) = accepted else {
            // No step length improved the residual: stationary point.
            converged = true;
            break;
        };

        let rel_change = (0..3)
            .map(|i| (next[i] - p[i]).abs() / p[i].abs().max(1e-12))
            .fold(0.0, f64::max);
        p = next;
        current_sse = next_sse;
        if rel_change < REL_TOL {
            converged = true;
            break;
        }
    }
    (p, current_sse, converged)
}

/// Fits the asymptotic exponential by Gauss-Newton least squares.
pub fn fit_exponential(points: &[CostPoint]) -> Result<ExpFitParams, CostFitError> {
    let distinct = distinct_costs(points);
    if points.len() < 4 || distinct < 3 {
        return Err(CostFitError::TooFewPoints {
            points: points.len(),
            distinct_costs: distinct,
        });
    }
    for p in points {
        if !(0.0..=1.0).contains(&p.f1) {
            return Err(CostFitError::InvalidF1(p.f1));
        }
    }
    let f_min = points.iter().map(|p| p.f1).fold(f64::MAX, f64::min);
    let f_max = points.iter().map(|p| p.f1).fold(f64::MIN, f64::max);
    if f_max - f_min <= 1e-9 {
        return Err(CostFitError::DegenerateData);
    }

    let (p, final_sse, converged) = descend(points, initial_params(points));

    Ok(ExpFitParams {
        f_inf: p[0],
        r0: p[1],
        lambda: p[2],
        half_rise_cents: half_rise(p[2])?,
        residual_sse: final_sse,
        converged,
    })
}
