//! Search-space boxes and observation datasets.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, contract, Result};

/// Axis-aligned enclosing box of the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        contract!(!lower.is_empty(), "box must have at least one dimension");
        check_dim(lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            contract!(
                lo.is_finite() && hi.is_finite() && lo < hi,
                "invalid box bounds in dimension {i}: [{lo}, {hi}]"
            );
        }
        Ok(Self { lower, upper })
    }

    /// The symmetric cube `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dim()
            && q.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Per-coordinate projection into the box.
    pub fn clip(&self, q: &mut [f64]) {
        for (x, (lo, hi)) in q.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*lo, *hi);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Parameter interval `[t_min, t_max]` of the line `origin + t * direction`
    /// inside the box. `None` if the line misses the box.
    pub fn line_segment(&self, origin: &[f64], direction: &[f64]) -> Option<(f64, f64)> {
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        for i in 0..self.dim() {
            let (x, d) = (origin[i], direction[i]);
            if d.abs() < 1e-300 {
                if x < self.lower[i] || x > self.upper[i] {
                    return None;
                }
                continue;
            }
            let a = (self.lower[i] - x) / d;
            let b = (self.upper[i] - x) / d;
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            t_min = t_min.max(a);
            t_max = t_max.min(b);
        }
        (t_min <= t_max).then_some((t_min, t_max))
    }
}

/// Evaluated parameter vectors and their noisy observations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_parts(dim: usize, points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        check_dim(points.len(), values.len())?;
        let mut data = Self::new(dim);
        for (p, y) in points.into_iter().zip(values) {
            data.push(p, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, point: Vec<f64>, value: f64) -> Result<()> {
        check_dim(self.dim, point.len())?;
        contract!(
            value.is_finite() && point.iter().all(|x| x.is_finite()),
            "non-finite observation"
        );
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same points, different observations.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        check_dim(self.len(), values.len())?;
        Ok(Self {
            dim: self.dim,
            points: self.points.clone(),
            values,
        })
    }

    /// Index of the point closest to `q`; ties go to the lowest index.
    pub fn nearest(&self, q: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d = sq_dist(p, q);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
