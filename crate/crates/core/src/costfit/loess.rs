//! Locally weighted degree-1 regression with the tri-cube kernel.
//!
//! At each evaluation point the `⌈span·n⌉` nearest observations form the
//! neighborhood, weights follow `(1 − |d/d_max|³)³`, and a weighted linear
//! least-squares problem is solved in centered coordinates; the fitted value
//! is the local intercept.

use serde::{Deserialize, Serialize};

use super::{CostFitError, CostPoint};

/// Number of uniform evaluation points over the data range (data abscissae
/// are appended on top).
const GRID_POINTS: usize = 100;

/// Tri-cube weight for a distance `d` within a neighborhood of radius
/// `d_max`: 1 at 0, 0 at `d_max`, strictly decreasing in between.
pub fn tricube(d: f64, d_max: f64) -> f64 {
    if d_max <= 0.0 {
        return 0.0;
    }
    let u = (d / d_max).abs();
    if u >= 1.0 {
        0.0
    } else {
        let c = 1.0 - u * u * u;
        c * c * c
    }
}

/// A fitted LOESS curve over an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoessCurve {
    pub span: f64,
    pub grid: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Local (β₀, β₁) at each grid point; the fitted value equals β₀.
    pub coefficients: Vec<(f64, f64)>,
    /// Grid points where the local system was singular and the weighted mean
    /// was used instead.
    pub fallback: Vec<bool>,
}

impl LoessCurve {
    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

/// Local fit at `x0`: returns (β₀, β₁, used_fallback).
fn local_fit(xs: &[f64], ys: &[f64], q: usize, x0: f64) -> (f64, f64, bool) {
    // Nearest q points; ties resolved by value so the result is independent
    // of input ordering.
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| {
        (xs[i] - x0)
            .abs()
            .total_cmp(&(xs[j] - x0).abs())
            .then(xs[i].total_cmp(&xs[j]))
            .then(ys[i].total_cmp(&ys[j]))
    });
    let neighborhood = &order[..q];
    let d_max = neighborhood
        .iter()
        .map(|&i| (xs[i] - x0).abs())
        .fold(0.0, f64::max);

    if d_max <= 0.0 {
        // Every neighbor sits exactly at x0; tri-cube weights are undefined,
        // fall back to the plain mean.
        let mean = neighborhood.iter().map(|&i| ys[i]).sum::<f64>() / q as f64;
        return (mean, 0.0, true);
    }

    let mut sw = 0.0;
    let mut swu = 0.0;
    let mut swuu = 0.0;
    let mut swy = 0.0;
    let mut swuy = 0.0;
    for &i in neighborhood {
        let u = xs[i] - x0;
        let w = tricube(u.abs(), d_max);
        sw += w;
        swu += w * u;
        swuu += w * u * u;
        swy += w * ys[i];
        swuy += w * u * ys[i];
    }

    let denom = sw * swuu - swu * swu;
    let scale = sw * swuu;
    if denom.abs() <= 1e-12 * scale.abs().max(1e-300) {
        // All usable abscissae coincide; weighted mean, flagged.
        let mean = swy / sw;
        return (mean, 0.0, true);
    }
    let beta1 = (sw * swuy - swu * swy) / denom;
    let beta0 = (swy - beta1 * swu) / sw;
    (beta0, beta1, false)
}

/// Fits the curve over 100 uniform grid points plus the data abscissae.
pub fn loess_fit(points: &[CostPoint], span: f64) -> Result<LoessCurve, CostFitError> {
    if points.len() < 3 {
        return Err(CostFitError::TooFewPoints {
            points: points.len(),
            distinct_costs: super::distinct_costs(points),
        });
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(CostFitError::BadSpan(span));
    }
    for p in points {
        if !(0.0..=1.0).contains(&p.f1) {
            return Err(CostFitError::InvalidF1(p.f1));
        }
    }

    let xs: Vec<f64> = points.iter().map(|p| p.cost_cents).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.f1).collect();
    let n = xs.len();
    let q = ((span * n as f64).ceil() as usize).clamp(2, n);

    let lo = xs.iter().copied().fold(f64::MAX, f64::min);
    let hi = xs.iter().copied().fold(f64::MIN, f64::max);
    let mut grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    grid.extend_from_slice(&xs);
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut fitted = Vec::with_capacity(grid.len());
    let mut coefficients = Vec::with_capacity(grid.len());
    let mut fallback = Vec::with_capacity(grid.len());
    for &x0 in &grid {
        let (beta0, beta1, fell_back) = local_fit(&xs, &ys, q, x0);
        fitted.push(beta0);
        coefficients.push((beta0, beta1));
        fallback.push(fell_back);
    }

    Ok(LoessCurve {
        span,
        grid,
        fitted,
        coefficients,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_from(xs: &[f64], ys: &[f64]) -> Vec<CostPoint> {
        xs.iter()
            .zip(ys.iter())
            .map(|(&x, &y)| CostPoint {
                k_shots: 0,
                avg_input_tokens: 0.0,
                cost_cents: x,
                f1: y,
            })
            .collect()
    }

    #[test]
    fn tricube_endpoints_and_monotonicity() {
        assert_eq!(tricube(0.0, 1.0), 1.0);
        assert_eq!(tricube(1.0, 1.0), 0.0);
        let mut prev = tricube(0.0, 2.0);
        for i in 1..=20 {
            let w = tricube(2.0 * i as f64 / 20.0, 2.0);
            assert!(w < prev, "tri-cube must strictly decrease");
            prev = w;
        }
    }

    #[test]
    fn constant_data_reproduced() {
        let xs: Vec<f64> = (0..9).map(|i| 0.2 + 0.11 * i as f64).collect();
        let ys = vec![0.23; 9];
        let curve = loess_fit(&points_from(&xs, &ys), 0.75).unwrap();
        for &v in &curve.fitted {
            assert!((v - 0.23).abs() <= 1e-9);
        }
    }

    #[test]
    fn linear_data_reproduced_exactly() {
        let xs: Vec<f64> = (0..9).map(|i| 0.2 + 0.11 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.1 + 0.05 * x).collect();
        let curve = loess_fit(&points_from(&xs, &ys), 0.75).unwrap();
        for (&x, &v) in curve.grid.iter().zip(curve.fitted.iter()) {
            let want = 0.1 + 0.05 * x;
            assert!((v - want).abs() <= 1e-9, "at x = {x}: {v} vs {want}");
        }
        assert_eq!(curve.fallback_count(), 0);
    }

    /// Independent weighted-least-squares oracle: Kahan-compensated sums and
    /// Cramer's rule, re-deriving the neighborhood from scratch.
    fn oracle_at(xs: &[f64], ys: &[f64], span: f64, x0: f64) -> f64 {
        struct Kahan {
            sum: f64,
            c: f64,
        }
        impl Kahan {
            fn new() -> Kahan {
                Kahan { sum: 0.0, c: 0.0 }
            }
            fn add(&mut self, v: f64) {
                let y = v - self.c;
                let t = self.sum + y;
                self.c = (t - self.sum) - y;
                self.sum = t;
            }
        }

        let n = xs.len();
        let q = ((span * n as f64).ceil() as usize).min(n);
        let mut by_dist: Vec<usize> = (0..n).collect();
        by_dist.sort_by(|&i, &j| {
            (xs[i] - x0)
                .abs()
                .total_cmp(&(xs[j] - x0).abs())
                .then(xs[i].total_cmp(&xs[j]))
                .then(ys[i].total_cmp(&ys[j]))
        });
        let hood = &by_dist[..q];
        let d_max = hood.iter().map(|&i| (xs[i] - x0).abs()).fold(0.0, f64::max);

        let (mut sw, mut swu, mut swuu, mut swy, mut swuy) =
            (Kahan::new(), Kahan::new(), Kahan::new(), Kahan::new(), Kahan::new());
        for &i in hood {
            let u = xs[i] - x0;
            let t = 1.0 - (u.abs() / d_max).powi(3);
            let w = t * t * t;
            sw.add(w);
            swu.add(w * u);
            swuu.add(w * u * u);
            swy.add(w * ys[i]);
            swuy.add(w * u * ys[i]);
        }
        // Cramer's rule on [sw swu; swu swuu] [b0 b1]' = [swy swuy]'.
        let det = sw.sum * swuu.sum - swu.sum * swu.sum;
        (swy.sum * swuu.sum - swu.sum * swuy.sum) / det
    }

    #[test]
    fn nine_point_non_monotone_matches_oracle() {
        let xs: Vec<f64> = (0..9).map(|i| 0.19 + 0.1125 * (i as f64 + 1.0)).collect();
        let ys = vec![0.21, 0.25, 0.20, 0.24, 0.22, 0.26, 0.19, 0.23, 0.25];
        let points = points_from(&xs, &ys);
        let curve = loess_fit(&points, 0.75).unwrap();
        for (&x, &v) in curve.grid.iter().zip(curve.fitted.iter()) {
            let want = oracle_at(&xs, &ys, 0.75, x);
            assert!(
                (v - want).abs() <= 1e-9,
                "at x = {x}: fitted {v} vs oracle {want}"
            );
        }
    }

    #[test]
    fn permutation_invariant() {
        let xs: Vec<f64> = (0..9).map(|i| 0.2 + 0.1 * i as f64).collect();
        let ys = vec![0.3, 0.5, 0.4, 0.6, 0.45, 0.55, 0.42, 0.58, 0.5];
        let forward = loess_fit(&points_from(&xs, &ys), 0.75).unwrap();

        let mut shuffled: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        shuffled.reverse();
        shuffled.swap(0, 3);
        let (sx, sy): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
        let permuted = loess_fit(&points_from(&sx, &sy), 0.75).unwrap();

        assert_eq!(forward.grid, permuted.grid);
        for (a, b) in forward.fitted.iter().zip(permuted.fitted.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_abscissae_fall_back_to_weighted_mean() {
        let points = points_from(&[0.5, 0.5, 0.5], &[0.2, 0.4, 0.6]);
        let curve = loess_fit(&points, 1.0).unwrap();
        assert!(curve.fallback_count() > 0);
        for &v in &curve.fitted {
            assert!((v - 0.4).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let points = points_from(&[0.1, 0.2], &[0.5, 0.6]);
        assert!(matches!(
            loess_fit(&points, 0.75),
            Err(CostFitError::TooFewPoints { .. })
        ));
        let points = points_from(&[0.1, 0.2, 0.3], &[0.5, 0.6, 0.7]);
        assert!(matches!(
            loess_fit(&points, 0.0),
            Err(CostFitError::BadSpan(_))
        ));
        assert!(matches!(
            loess_fit(&points, 1.5),
            Err(CostFitError::BadSpan(_))
        ));
    }
}
