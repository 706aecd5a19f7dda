//! Hit-and-Run sampling of the confidence region, and the sphere-surface
//! initial design.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{norm, BoxBounds};
use crate::error::{check_dim, contract, Result};
use crate::par::{map_indices, Execution};
use crate::region::ConfidenceRegion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total number of samples pooled over all chains.
    pub total_samples: usize,
    /// Candidate points tried on one line before the step counts as stuck.
    pub line_rejection_cap: usize,
    /// Steps discarded at the start of each chain.
    pub burn_in: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            total_samples: 1000,
            line_rejection_cap: 100,
            burn_in: 0,
        }
    }
}

/// Independent random stream for chain `chain` under a run-level `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub current: Vec<f64>,
    pub rng: ChaCha8Rng,
    pub steps_taken: usize,
    pub stuck_steps: usize,
}

impl ChainState {
    pub fn new(start: Vec<f64>, rng: ChaCha8Rng) -> Self {
        Self {
            current: start,
            rng,
            steps_taken: 0,
            stuck_steps: 0,
        }
    }
}

/// Uniformly random unit vector.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// One Hit-and-Run move: random direction, clip the line to the box, then
/// sample uniformly along it until a point falls inside the region. After
/// `line_rejection_cap` misses the chain stays put and the step is counted
/// as stuck.
pub fn hit_and_run_step(region: &ConfidenceRegion<'_>, state: &mut ChainState, line_rejection_cap: usize) {
    let bounds = region.bounds();
    let dim = bounds.dim();
    state.steps_taken += 1;
    let dir = random_direction(&mut state.rng, dim);
    let Some((t_lo, t_hi)) = bounds.line_segment(&state.current, &dir) else {
        state.stuck_steps += 1;
        return;
    };
    if !(t_hi > t_lo) {
        state.stuck_steps += 1;
        return;
    }
    let mut candidate = vec![0.0; dim];
    for _ in 0..line_rejection_cap {
        let t = state.rng.random_range(t_lo..t_hi);
        for i in 0..dim {
            candidate[i] = state.current[i] + t * dir[i];
        }
        bounds.clip(&mut candidate);
        if region.contains(&candidate) {
            state.current.copy_from_slice(&candidate);
            return;
        }
    }
    state.stuck_steps += 1;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionSamples {
    pub samples: Vec<Vec<f64>>,
    /// Number of chains that were started (data points inside the region).
    pub chains: usize,
    pub stuck_steps: usize,
}

/// Pool of `cfg.total_samples` points from chains started at every data
/// point that lies inside the region. Chain `c` contributes
/// `floor(K / n)` samples, plus one for the first `K mod n` chains; the
/// pool is ordered by chain index, then step index.
///
/// Returns an empty pool when no data point is inside the region.
pub fn sample_region(
    region: &ConfidenceRegion<'_>,
    cfg: &SamplerConfig,
    seed: u64,
    exec: Execution,
) -> Result<RegionSamples> {
    let data = region.model().data();
    contract!(cfg.total_samples > 0, "sampler needs a positive sample count");
    contract!(cfg.line_rejection_cap > 0, "line rejection cap must be positive");
    let starts: Vec<usize> = (0..data.len())
        .filter(|&i| region.contains(&data.points()[i]))
        .collect();
    if starts.is_empty() {
        return Ok(RegionSamples::default());
    }
    contract!(
        cfg.total_samples >= starts.len(),
        "sample count {} smaller than number of chains {}",
        cfg.total_samples,
        starts.len()
    );
    let n = starts.len();
    let per = cfg.total_samples / n;
    let extra = cfg.total_samples % n;

    let chains = map_indices(exec, n, |c| {
        let count = per + usize::from(c < extra);
        let mut state = ChainState::new(data.points()[starts[c]].clone(), chain_rng(seed, starts[c] as u64));
        for _ in 0..cfg.burn_in {
            hit_and_run_step(region, &mut state, cfg.line_rejection_cap);
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            hit_and_run_step(region, &mut state, cfg.line_rejection_cap);
            out.push(state.current.clone());
        }
        (out, state.stuck_steps)
    });
    let mut pooled = RegionSamples {
        samples: Vec::with_capacity(cfg.total_samples),
        chains: n,
        stuck_steps: 0,
    };
    for (s, stuck) in chains {
        pooled.samples.extend(s);
        pooled.stuck_steps += stuck;
    }
    Ok(pooled)
}

/// `K` points uniformly distributed over the box.
pub fn uniform_box_samples(bounds: &BoxBounds, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = chain_rng(seed, u64::MAX);
    (0..count)
        .map(|_| {
            bounds
                .lower()
                .iter()
                .zip(bounds.upper())
                .map(|(lo, hi)| rng.random_range(*lo..*hi))
                .collect()
        })
        .collect()
}

/// Default initial-design size: the ceiling of the square root of the dimension.
pub fn default_n_init(dim: usize) -> usize {
    (dim as f64).sqrt().ceil() as usize
}

/// Points on the sphere of radius `radius` around `theta0`, before clipping.
pub fn sphere_points<R: Rng + ?Sized>(rng: &mut R, theta0: &[f64], radius: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            random_direction(rng, theta0.len())
                .into_iter()
                .zip(theta0)
                .map(|(u, c)| c + radius * u)
                .collect()
        })
        .collect()
}

/// `count` points uniform on the sphere of radius `radius` around `theta0`,
/// each projected into the box. `theta0` itself is not included; it is
/// always evaluated first by the optimizer.
pub fn initial_design<R: Rng + ?Sized>(
    rng: &mut R,
    theta0: &[f64],
    radius: f64,
    count: usize,
    bounds: &BoxBounds,
) -> Result<Vec<Vec<f64>>> {
    check_dim(bounds.dim(), theta0.len())?;
    contract!(bounds.contains(theta0), "initial point outside the box");
    contract!(
        radius.is_finite() && radius >= 0.0,
        "design radius must be finite, got {radius}"
    );
    let mut pts = sphere_points(rng, theta0, radius, count);
    for p in &mut pts {
        bounds.clip(p);
    }
    Ok(pts)
}
