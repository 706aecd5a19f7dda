//! Run metrics and their aggregation across repetitions.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Best-so-far distance to the optimum: `s_n = min_{t <= n} |y_t - y*|`.
pub fn simple_regret(observations: &[f64], y_star: f64) -> Vec<f64> {
    let mut best = f64::INFINITY;
    observations
        .iter()
        .map(|y| {
            best = best.min((y - y_star).abs());
            best
        })
        .collect()
}

/// Running mean of the observations.
pub fn average_return(observations: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    observations
        .iter()
        .enumerate()
        .map(|(i, y)| {
            sum += y;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Percentile of `sorted` (ascending) with linear interpolation between
/// order statistics at position `p * (n - 1)`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Median and quartiles of one metric at every iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
}

impl QuantileCurve {
    pub fn len(&self) -> usize {
        self.median.len()
    }

    pub fn is_empty(&self) -> bool {
        self.median.is_empty()
    }

    pub fn iqr(&self, i: usize) -> f64 {
        self.q75[i] - self.q25[i]
    }
}

/// Per-iteration median and quartiles across equally long curves.
pub fn aggregate_curves(curves: &[&[f64]]) -> Result<QuantileCurve> {
    contract!(!curves.is_empty(), "nothing to aggregate");
    let len = curves[0].len();
    contract!(
        curves.iter().all(|c| c.len() == len),
        "curves have different lengths: {:?}",
        curves.iter().map(|c| c.len()).collect::<Vec<_>>()
    );
    let mut out = QuantileCurve::default();
    let mut column = Vec::with_capacity(curves.len());
    for i in 0..len {
        column.clear();
        column.extend(curves.iter().map(|c| c[i]));
        column.sort_by(f64::total_cmp);
        out.median.push(percentile_sorted(&column, 0.5));
        out.q25.push(percentile_sorted(&column, 0.25));
        out.q75.push(percentile_sorted(&column, 0.75));
    }
    Ok(out)
}
