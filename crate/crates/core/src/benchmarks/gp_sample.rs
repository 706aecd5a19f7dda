//! Test functions drawn from a zero-mean GP prior and conditioned on a
//! single high value at the domain center.
//!
//! A realization is a random-Fourier-feature draw from the prior kernel,
//! conditioned on the center observation by a pathwise (Matheron) update:
//! `f(x) = g(x) + k(x, c) / k(c, c) * (y_c - g(c))`. The function is fixed
//! once the seed is chosen, so queries at arbitrary points are consistent
//! and cheap, and gradients are analytic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::BoxBounds;
use crate::error::{check_dim, contract, CrboError, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::objective::Objective;
use crate::optim::BoundedBfgs;
use crate::par::{map_indices, map_slice, Execution};
use crate::sampler::{chain_rng, random_direction, uniform_box_samples};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSampleConfig {
    pub kernel: KernelSpec,
    /// Value the realization is conditioned to at the domain center.
    pub center_value: f64,
    pub noise_std: f64,
    pub half_width: f64,
    pub features: usize,
    /// Uniform starts of the optimum search (the center is always added).
    pub optimum_starts: usize,
}

impl Default for GpSampleConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec {
                family: KernelFamily::Matern52,
                signal_variance: 1.0,
                lengthscale: 0.3,
            },
            center_value: 3.0,
            noise_std: 1e-3,
            half_width: 1.0,
            features: 1024,
            optimum_starts: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpSampleObjective {
    config: GpSampleConfig,
    seed: u64,
    bounds: BoxBounds,
    center: Vec<f64>,
    /// Row-major `features x dim`.
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    weights: Vec<f64>,
    amplitude: f64,
    correction: f64,
    noise: ChaCha8Rng,
    optimum: Option<(Vec<f64>, f64)>,
}

impl GpSampleObjective {
    /// Draw the realization for `seed`. The optimum is not searched yet.
    pub fn new(dim: usize, seed: u64, config: GpSampleConfig) -> Result<Self> {
        contract!(dim > 0, "dimension must be positive");
        contract!(config.features > 0, "need at least one feature");
        contract!(config.noise_std >= 0.0, "noise must be nonnegative");
        config.kernel.validate()?;
        let bounds = BoxBounds::cube(dim, config.half_width)?;
        let center = bounds.center();
        let mut rng = chain_rng(seed, 0);
        let m = config.features;
        let l = config.kernel.lengthscale;
        let chi = ChiSquared::new(5.0).expect("valid dof");
        let mut frequencies = Vec::with_capacity(m * dim);
        for _ in 0..m {
            let scale = match config.kernel.family {
                KernelFamily::SquaredExponential => 1.0 / l,
                // multivariate Student-t with 2 * nu = 5 degrees of freedom
                KernelFamily::Matern52 => (5.0f64 / chi.sample(&mut rng)).sqrt() / l,
            };
            for _ in 0..dim {
                frequencies.push(scale * rng.sample::<f64, _>(StandardNormal));
            }
        }
        let phases = (0..m).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let weights = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut obj = Self {
            config,
            seed,
            bounds,
            center,
            frequencies,
            phases,
            weights,
            amplitude: (2.0 * config.kernel.signal_variance / m as f64).sqrt(),
            correction: 0.0,
            noise: chain_rng(seed, 1),
            optimum: None,
        };
        let prior_at_center = obj.prior_value(&obj.center.clone());
        obj.correction = (config.center_value - prior_at_center) / config.kernel.signal_variance;
        Ok(obj)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &GpSampleConfig {
        &self.config
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Restart the observation-noise stream.
    pub fn reset_noise(&mut self) {
        self.noise = chain_rng(self.seed, 1);
    }

    fn prior_value(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut s = 0.0;
        for (i, (b, w)) in self.phases.iter().zip(&self.weights).enumerate() {
            let row = &self.frequencies[i * d..(i + 1) * d];
            let arg: f64 = row.iter().zip(x).map(|(o, v)| o * v).sum::<f64>() + b;
            s += w * arg.cos();
        }
        self.amplitude * s
    }

    /// Noise-free realization value.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let k = self.config.kernel.eval(x, &self.center)?;
        Ok(self.prior_value(x) + k * self.correction)
    }

    /// Noise-free value and gradient.
    pub fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.dim();
        check_dim(d, x.len())?;
        let mut grad = vec![0.0; d];
        let mut s = 0.0;
        for (i, (b, w)) in self.phases.iter().zip(&self.weights).enumerate() {
            let row = &self.frequencies[i * d..(i + 1) * d];
            let arg: f64 = row.iter().zip(x).map(|(o, v)| o * v).sum::<f64>() + b;
            let (sin, cos) = arg.sin_cos();
            s += w * cos;
            for j in 0..d {
                grad[j] -= self.amplitude * w * sin * row[j];
            }
        }
        let k = self.config.kernel.eval(x, &self.center)?;
        let kg = self.config.kernel.grad_first(x, &self.center)?;
        for j in 0..d {
            grad[j] += self.correction * kg[j];
        }
        Ok((self.amplitude * s + k * self.correction, grad))
    }

    /// Cached `(theta*, y*)`, if searched.
    pub fn known_optimum(&self) -> Option<(&[f64], f64)> {
        self.optimum.as_ref().map(|(t, y)| (t.as_slice(), *y))
    }

    pub fn set_optimum(&mut self, theta: Vec<f64>, value: f64) {
        self.optimum = Some((theta, value));
    }

    /// Multi-start quasi-Newton ascent of the noise-free realization from
    /// uniform starts plus the center; caches and returns the best point.
    ///
    /// Every start gets a short ascent; the best few are then polished to a
    /// projected-gradient norm of 1e-8.
    pub fn search_optimum(&mut self, exec: Execution) -> Result<(Vec<f64>, f64)> {
        const POLISHED: usize = 8;
        let mut starts = uniform_box_samples(&self.bounds, self.config.optimum_starts, self.seed ^ 0x5eed);
        starts.push(self.center.clone());
        let ascent = |max_iters: usize, grad_tol: f64| BoundedBfgs {
            max_iters,
            grad_tol,
            lower: self.bounds.lower().to_vec(),
            upper: self.bounds.upper().to_vec(),
            max_step: 0.5 * self.config.kernel.lengthscale,
        };
        let this = &*self;
        let negated = |x: &[f64]| {
            this.value_and_grad(x)
                .ok()
                .map(|(v, g)| (-v, g.into_iter().map(|gi| -gi).collect::<Vec<_>>()))
        };
        let coarse = ascent(40, 1e-6);
        let mut screened: Vec<(Vec<f64>, f64)> = map_slice(exec, &starts, |s| coarse.minimize(negated, s))
            .into_iter()
            .flatten()
            .map(|m| (m.x, -m.value))
            .collect();
        contract!(!screened.is_empty(), "optimum search failed");
        screened.sort_by(|a, b| b.1.total_cmp(&a.1));
        screened.truncate(POLISHED);
        let fine = ascent(1000, 1e-8);
        let polished = map_slice(exec, &screened, |(x, _)| fine.minimize(negated, x));
        let mut best: Option<(Vec<f64>, f64)> = None;
        for m in polished.into_iter().flatten() {
            let v = -m.value;
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((m.x, v));
            }
        }
        let best = best.ok_or_else(|| CrboError::Contract("optimum search failed".into()))?;
        self.optimum = Some(best.clone());
        Ok(best)
    }
}

impl Objective for GpSampleObjective {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<f64> {
        let v = self.value(theta)?;
        let eps: f64 = self.noise.sample(StandardNormal);
        Ok(v + self.config.noise_std * eps)
    }

    fn optimum(&self) -> Option<f64> {
        self.optimum.as_ref().map(|o| o.1)
    }

    fn noiseless(&self, theta: &[f64]) -> Option<f64> {
        self.value(theta).ok()
    }
}

/// Random point at exactly `distance` from the known optimum, redrawn until
/// it lies inside the domain.
pub fn sample_initial_point(obj: &GpSampleObjective, distance: f64, seed: u64) -> Result<Vec<f64>> {
    let (theta_star, _) = obj
        .known_optimum()
        .ok_or_else(|| CrboError::Contract("optimum must be known".into()))?;
    contract!(distance >= 0.0 && distance.is_finite(), "distance must be nonnegative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100_000 {
        let dir = random_direction(&mut rng, theta_star.len());
        let p: Vec<f64> = theta_star.iter().zip(&dir).map(|(c, u)| c + distance * u).collect();
        if obj.bounds().contains(&p) {
            return Ok(p);
        }
    }
    Err(CrboError::Contract(format!(
        "no point at distance {distance} from the optimum lies inside the domain"
    )))
}

/// One realization of a suite with its cached optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub seed: u64,
    pub theta_star: Vec<f64>,
    pub y_star: f64,
}

/// Reproducibility record of a GP-sample suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub dimension: usize,
    pub config: GpSampleConfig,
    pub entries: Vec<SuiteEntry>,
}

impl SuiteManifest {
    pub fn from_suite(suite: &[GpSampleObjective]) -> Result<Self> {
        contract!(!suite.is_empty(), "empty suite");
        let entries = suite
            .iter()
            .map(|o| {
                let (t, y) = o
                    .known_optimum()
                    .ok_or_else(|| CrboError::Contract("suite member without optimum".into()))?;
                Ok(SuiteEntry {
                    seed: o.seed(),
                    theta_star: t.to_vec(),
                    y_star: y,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dimension: suite[0].dim(),
            config: *suite[0].config(),
            entries,
        })
    }

    /// Rebuild the objectives without repeating the optimum search.
    pub fn objectives(&self) -> Result<Vec<GpSampleObjective>> {
        self.entries
            .iter()
            .map(|e| {
                let mut o = GpSampleObjective::new(self.dimension, e.seed, self.config)?;
                o.set_optimum(e.theta_star.clone(), e.y_star);
                Ok(o)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// `count` independent realizations with seeds `seed, seed + 1, ...`, each
/// with its optimum already searched.
pub fn make_gp_sample_suite(
    dim: usize,
    count: usize,
    seed: u64,
    config: GpSampleConfig,
    exec: Execution,
) -> Result<Vec<GpSampleObjective>> {
    contract!(count > 0, "suite needs at least one realization");
    map_indices(exec, count, |i| {
        let mut o = GpSampleObjective::new(dim, seed.wrapping_add(i as u64), config)?;
        // realizations already run in parallel; search each one sequentially
        o.search_optimum(if exec.is_parallel() && count > 1 {
            Execution::Sequential
        } else {
            exec
        })?;
        Ok(o)
    })
    .into_iter()
    .collect()
}
