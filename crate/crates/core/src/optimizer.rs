//! The optimization loop: evaluate the initial point and a sphere design
//! around it, then repeatedly center the data, refit the hyperparameters,
//! sample the confidence region, maximize UCB inside it and evaluate.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{propose, AcquisitionConfig, Proposal};
use crate::data::{BoxBounds, Dataset};
use crate::error::{check_dim, contract, Result};
use crate::gp::{GpHyperparams, GpModel};
use crate::hyper::{fit_map_with, FitStart, HyperPriors, MapSettings};
use crate::kernel::KernelFamily;
use crate::metrics::{average_return, simple_regret};
use crate::objective::Objective;
use crate::par::Execution;
use crate::record::{IterationRecord, Method, RunRecord};
use crate::region::{compute_r0, estimate_lipschitz, worst_case_bound, ConfidenceRegion, WorstCaseBound};
use crate::sampler::{chain_rng, default_n_init, initial_design, sample_region, uniform_box_samples, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrboConfig {
    pub gamma: f64,
    /// Total number of evaluations, including the initial point and design.
    pub budget: usize,
    /// Size of the sphere design; `None` means `ceil(sqrt(dim))`.
    pub n_init: Option<usize>,
    pub kernel: KernelFamily,
    pub sampler: SamplerConfig,
    pub acquisition: AcquisitionConfig,
    pub priors: HyperPriors,
    pub map: MapSettings,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for CrboConfig {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            budget: 50,
            n_init: None,
            kernel: KernelFamily::Matern52,
            sampler: SamplerConfig::default(),
            acquisition: AcquisitionConfig::default(),
            priors: HyperPriors::default(),
            map: MapSettings::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl CrboConfig {
    pub fn n_init_for(&self, dim: usize) -> usize {
        self.n_init.unwrap_or_else(|| default_n_init(dim))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        contract!(
            self.gamma > 0.0 && self.gamma <= 1.0,
            "gamma must lie in (0, 1], got {}",
            self.gamma
        );
        contract!(
            self.n_init_for(dim) < self.budget,
            "budget {} cannot hold the initial point plus {} design points",
            self.budget,
            self.n_init_for(dim)
        );
        contract!(self.sampler.total_samples > 0, "sampler needs samples");
        self.acquisition.validate()?;
        self.priors.validate()
    }
}

const SNAP_BITS: f64 = 32.0;

/// Shift observations so that the largest is zero. Returns the shifted
/// dataset and the shift (the maximum).
pub fn center_values(data: &Dataset) -> Result<(Dataset, f64)> {
    contract!(!data.is_empty(), "cannot center an empty dataset");
    let max = data.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = data.values().iter().map(|y| y - max).collect();
    // Snap to a power-of-two grid far below any noise level, so that data
    // differing by a constant centers to the same bits.
    let spread = -shifted.iter().copied().fold(0.0, f64::min);
    let centered = if spread > 0.0 {
        let q = (spread.log2().floor() - SNAP_BITS).exp2();
        shifted.iter().map(|d| (d / q).round() * q).collect()
    } else {
        shifted
    };
    Ok((data.with_values(centered)?, max))
}

const DESIGN_STREAM: u64 = 0;

/// Seed for a per-iteration random stream.
fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (iteration as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Confidence-region BO from `theta0`.
pub fn run_crbo<O: Objective + ?Sized>(obj: &mut O, theta0: &[f64], cfg: &CrboConfig) -> Result<RunRecord> {
    run(obj, theta0, cfg, Method::Crbo)
}

/// The same pipeline with the confidence constraint switched off: the
/// acquisition search is seeded by uniform samples over the box instead
/// of Hit-and-Run samples of the region.
pub fn run_standard_bo<O: Objective + ?Sized>(obj: &mut O, theta0: &[f64], cfg: &CrboConfig) -> Result<RunRecord> {
    run(obj, theta0, cfg, Method::StandardBo)
}

pub fn run_method<O: Objective + ?Sized>(
    obj: &mut O,
    theta0: &[f64],
    cfg: &CrboConfig,
    method: Method,
) -> Result<RunRecord> {
    run(obj, theta0, cfg, method)
}

/// Initial sphere radius from the prior-mode lengthscale. The design of a
/// gamma = 1 configuration is drawn uniformly from the box instead.
fn design_radius(cfg: &CrboConfig) -> Result<Option<f64>> {
    if cfg.gamma >= 1.0 {
        return Ok(None);
    }
    let prior = cfg.priors.modes(cfg.kernel);
    compute_r0(&prior.kernel, cfg.gamma, 0.0).map(Some)
}

fn run<O: Objective + ?Sized>(obj: &mut O, theta0: &[f64], cfg: &CrboConfig, method: Method) -> Result<RunRecord> {
    let bounds: BoxBounds = obj.bounds().clone();
    let dim = bounds.dim();
    check_dim(dim, theta0.len())?;
    contract!(bounds.contains(theta0), "initial point outside the box");
    cfg.validate(dim)?;

    let n_init = cfg.n_init_for(dim);
    let radius = design_radius(cfg)?;
    let mut design_rng = chain_rng(cfg.seed, DESIGN_STREAM);
    let design = match radius {
        Some(r) => initial_design(&mut design_rng, theta0, r, n_init, &bounds)?,
        None => uniform_box_samples(&bounds, n_init, iteration_seed(cfg.seed, usize::MAX)),
    };

    let mut record = RunRecord {
        method,
        gamma: cfg.gamma,
        seed: cfg.seed,
        budget: cfg.budget,
        bounds: bounds.clone(),
        design_radius: radius,
        design_count: 1 + n_init,
        proposals: Vec::with_capacity(cfg.budget),
        observations: Vec::with_capacity(cfg.budget),
        iterations: Vec::new(),
        y_star: obj.optimum(),
        simple_regret: None,
        average_return: Vec::new(),
        complete: false,
        error: None,
    };
    let mut data = Dataset::new(dim);

    let evaluate = |obj: &mut O, record: &mut RunRecord, data: &mut Dataset, q: Vec<f64>| -> bool {
        match obj.evaluate(&q) {
            Ok(y) if y.is_finite() => {
                data.push(q.clone(), y).expect("dimension checked");
                record.proposals.push(q);
                record.observations.push(y);
                true
            }
            Ok(y) => {
                record.error = Some(format!("objective returned non-finite value {y}"));
                false
            }
            Err(e) => {
                record.error = Some(e.to_string());
                false
            }
        }
    };

    let initial = std::iter::once(theta0.to_vec()).chain(design);
    for q in initial {
        if !evaluate(obj, &mut record, &mut data, q) {
            return Ok(finish(record));
        }
    }

    let mut warm: GpHyperparams = cfg.priors.modes(cfg.kernel);
    let gamma = method_gamma(cfg, method);
    let mut iteration = 0;
    while data.len() < cfg.budget {
        let started = Instant::now();
        let (centered, _) = center_values(&data)?;
        let fit = fit_map_with(&centered, &cfg.priors, &warm, &cfg.map)?;
        if fit.start != FitStart::Fallback {
            warm = fit.hyperparams;
        }
        let step = propose_next(&data, fit.hyperparams, &bounds, cfg, method, iteration)?;
        record.iterations.push(IterationRecord {
            proposal_index: data.len(),
            hyperparams: fit.hyperparams,
            fit_start: fit.start,
            fit_converged: fit.converged,
            value_offset: step.value_offset,
            gamma,
            sigma: step.sigma,
            sigma_f: step.sigma_f,
            ucb: step.proposal.ucb,
            refined: step.proposal.refined,
            samples: step.samples,
            chains: step.chains,
            stuck_steps: step.stuck_steps,
            region_empty: step.region_empty,
            lipschitz: step.lipschitz,
            bound: step.bound,
            wall_time_s: 0.0,
        });
        let ok = evaluate(obj, &mut record, &mut data, step.proposal.point);
        record.iterations.last_mut().expect("pushed").wall_time_s = started.elapsed().as_secs_f64();
        if !ok {
            record.iterations.pop();
            return Ok(finish(record));
        }
        iteration += 1;
    }
    record.complete = true;
    Ok(finish(record))
}

fn method_gamma(cfg: &CrboConfig, method: Method) -> f64 {
    match method {
        Method::Crbo => cfg.gamma,
        Method::StandardBo => 1.0,
    }
}

/// Outcome of one iteration once the hyperparameters are fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub proposal: Proposal,
    /// Shift removed from the observations before fitting.
    pub value_offset: f64,
    /// Posterior standard deviation at the proposal.
    pub sigma: f64,
    pub sigma_f: f64,
    pub samples: usize,
    pub chains: usize,
    pub stuck_steps: usize,
    pub region_empty: bool,
    pub lipschitz: f64,
    pub bound: Option<WorstCaseBound>,
}

/// Choose the next query for `data` under fixed hyperparameters: center the
/// values, build the region, sample it and maximize UCB inside.
/// `iteration` selects the random stream, so replaying a recorded iteration
/// with its data prefix and hyperparameters reproduces its proposal.
pub fn propose_next(
    data: &Dataset,
    hyperparams: GpHyperparams,
    bounds: &BoxBounds,
    cfg: &CrboConfig,
    method: Method,
    iteration: usize,
) -> Result<Step> {
    check_dim(bounds.dim(), data.dim())?;
    let (centered, offset) = center_values(data)?;
    let model = GpModel::fit_with_offset(&centered, hyperparams, offset)?;
    let region = ConfidenceRegion::new(method_gamma(cfg, method), &model, bounds)?;
    let seed = iteration_seed(cfg.seed, iteration);

    let (samples, chains, stuck_steps) = match method {
        Method::Crbo => {
            let s = sample_region(&region, &cfg.sampler, seed, cfg.execution)?;
            (s.samples, s.chains, s.stuck_steps)
        }
        Method::StandardBo => (uniform_box_samples(bounds, cfg.sampler.total_samples, seed), 0, 0),
    };

    let region_empty = samples.is_empty();
    let proposal = if region_empty {
        least_uncertain_point(&model, &cfg.acquisition)?
    } else {
        propose(&region, &samples, &cfg.acquisition, cfg.execution)?
    };
    let lipschitz = if region_empty {
        0.0
    } else {
        estimate_lipschitz(&model, &samples)?
    };
    let bound = if region.is_constrained() {
        Some(worst_case_bound(&region, data, &proposal.point, lipschitz)?)
    } else {
        None
    };
    Ok(Step {
        sigma: model.std_dev(&proposal.point)?,
        sigma_f: model.signal_std(),
        proposal,
        value_offset: offset,
        samples: samples.len(),
        chains,
        stuck_steps,
        region_empty,
        lipschitz,
        bound,
    })
}

/// Fallback when no data point lies in the region: re-evaluate the data
/// point with the smallest posterior standard deviation.
fn least_uncertain_point(model: &GpModel, cfg: &AcquisitionConfig) -> Result<Proposal> {
    let mut best = (0, f64::INFINITY);
    for (i, p) in model.data().points().iter().enumerate() {
        let s = model.std_dev(p)?;
        if s < best.1 {
            best = (i, s);
        }
    }
    let point = model.data().points()[best.0].clone();
    let ucb = crate::acquisition::ucb(model, &point, cfg)?;
    Ok(Proposal {
        point,
        ucb,
        seed_index: best.0,
        seed_ucb: ucb,
        refined: false,
        refine_iterations: 0,
    })
}

fn finish(mut record: RunRecord) -> RunRecord {
    if !record.observations.is_empty() {
        record.average_return = average_return(&record.observations);
        record.simple_regret = record.y_star.map(|y| simple_regret(&record.observations, y));
    }
    record
}
