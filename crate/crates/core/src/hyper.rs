//! Gamma hyperpriors, the log posterior of the GP hyperparameters and its
//! MAP estimate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{sq_dist, Dataset};
use crate::error::{contract, Result};
use crate::gp::{factorize, solve_lower_in_place, solve_upper_transposed_in_place, GpHyperparams};
use crate::kernel::KernelSpec;
use crate::optim::BoundedBfgs;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gamma distribution with shape `alpha` and rate `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        contract!(
            alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
            "gamma prior needs alpha > 0 and beta > 0, got ({alpha}, {beta})"
        );
        Ok(Self { alpha, beta })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.alpha * self.beta.ln() - ln_gamma(self.alpha) + (self.alpha - 1.0) * x.ln() - self.beta * x
    }

    /// d ln p(x) / d ln x.
    fn d_ln_pdf_d_ln_x(&self, x: f64) -> f64 {
        (self.alpha - 1.0) - self.beta * x
    }

    /// Mode `(alpha - 1) / beta`; zero when `alpha <= 1`.
    pub fn mode(&self) -> f64 {
        ((self.alpha - 1.0) / self.beta).max(0.0)
    }
}

/// Priors over signal variance, noise variance and lengthscale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperPriors {
    pub signal_variance: GammaPrior,
    pub noise_variance: GammaPrior,
    pub lengthscale: GammaPrior,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            signal_variance: GammaPrior { alpha: 2.0, beta: 0.15 },
            noise_variance: GammaPrior { alpha: 1.1, beta: 0.05 },
            lengthscale: GammaPrior { alpha: 3.0, beta: 6.0 },
        }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> Result<()> {
        for p in [self.signal_variance, self.noise_variance, self.lengthscale] {
            GammaPrior::new(p.alpha, p.beta)?;
        }
        Ok(())
    }

    /// Hyperparameters at the prior modes, for the given kernel family.
    pub fn modes(&self, family: crate::kernel::KernelFamily) -> GpHyperparams {
        GpHyperparams {
            kernel: KernelSpec {
                family,
                signal_variance: self.signal_variance.mode().max(1e-6),
                lengthscale: self.lengthscale.mode().max(1e-6),
            },
            noise_variance: self.noise_variance.mode(),
        }
    }

    fn ln_pdf(&self, hp: &GpHyperparams) -> f64 {
        self.signal_variance.ln_pdf(hp.kernel.signal_variance)
            + self.noise_variance.ln_pdf(hp.noise_variance)
            + self.lengthscale.ln_pdf(hp.kernel.lengthscale)
    }
}

/// Log marginal likelihood of `data` under `hp` together with its gradient
/// with respect to (ln signal variance, ln lengthscale, ln noise variance).
/// `None` when the covariance cannot be factorized.
pub fn log_marginal_likelihood_with_grad(data: &Dataset, hp: &GpHyperparams) -> Option<(f64, [f64; 3])> {
    let n = data.len();
    if n == 0 {
        return Some((0.0, [0.0; 3]));
    }
    let kernel = &hp.kernel;
    let (l, _jitter) = factorize(kernel, data.points(), hp.noise_variance).ok()?;
    let mut alpha = data.values().to_vec();
    solve_lower_in_place(&l, &mut alpha);
    let quad: f64 = alpha.iter().map(|x| x * x).sum();
    solve_upper_transposed_in_place(&l, &mut alpha);
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

    // W = alpha alpha^T - K^{-1}
    let mut kinv = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        let mut col: Vec<f64> = kinv.column(j).iter().copied().collect();
        solve_lower_in_place(&l, &mut col);
        solve_upper_transposed_in_place(&l, &mut col);
        kinv.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    let mut g = [0.0; 3];
    let pts = data.points();
    for j in 0..n {
        for i in 0..n {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let r2 = sq_dist(&pts[i], &pts[j]);
            g[0] += w * kernel.eval_sq_dist(r2);
            g[1] += w * kernel.d_log_lengthscale(r2);
            if i == j {
                g[2] += w * hp.noise_variance;
            }
        }
    }
    for v in &mut g {
        *v *= 0.5;
    }
    Some((lml, g))
}

/// Log marginal likelihood only. `None` when the covariance cannot be factorized.
pub fn log_marginal_likelihood(data: &Dataset, hp: &GpHyperparams) -> Option<f64> {
    let n = data.len();
    if n == 0 {
        return Some(0.0);
    }
    let (l, _) = factorize(&hp.kernel, data.points(), hp.noise_variance).ok()?;
    let mut v = data.values().to_vec();
    solve_lower_in_place(&l, &mut v);
    let quad: f64 = v.iter().map(|x| x * x).sum();
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    Some(-0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * LN_2PI)
}

/// Log evidence plus the log prior densities. Returns negative infinity for
/// invalid hyperparameters or a non positive-definite covariance.
pub fn log_posterior(data: &Dataset, hp: &GpHyperparams, priors: &HyperPriors) -> f64 {
    if hp.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    match log_marginal_likelihood(data, hp) {
        Some(lml) => lml + priors.ln_pdf(hp),
        None => f64::NEG_INFINITY,
    }
}

fn log_posterior_with_grad(data: &Dataset, hp: &GpHyperparams, priors: &HyperPriors) -> Option<(f64, [f64; 3])> {
    let (lml, mut g) = log_marginal_likelihood_with_grad(data, hp)?;
    g[0] += priors.signal_variance.d_ln_pdf_d_ln_x(hp.kernel.signal_variance);
    g[1] += priors.lengthscale.d_ln_pdf_d_ln_x(hp.kernel.lengthscale);
    g[2] += priors.noise_variance.d_ln_pdf_d_ln_x(hp.noise_variance);
    Some((lml + priors.ln_pdf(hp), g))
}

/// Which start produced the MAP estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStart {
    WarmStart,
    PriorMode,
    /// Every start failed; the initial hyperparameters were returned unchanged.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapFit {
    pub hyperparams: GpHyperparams,
    pub log_posterior: f64,
    pub start: FitStart,
    pub converged: bool,
}

impl MapFit {
    pub fn failed(&self) -> bool {
        self.start == FitStart::Fallback
    }
}

/// Settings of the MAP search in log-parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Bounds on (signal variance, lengthscale, noise variance).
    pub signal_variance_range: (f64, f64),
    pub lengthscale_range: (f64, f64),
    pub noise_variance_range: (f64, f64),
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-6,
            signal_variance_range: (1e-4, 1e4),
            lengthscale_range: (1e-3, 1e2),
            noise_variance_range: (1e-8, 1e4),
        }
    }
}

fn to_log(hp: &GpHyperparams) -> [f64; 3] {
    [
        hp.kernel.signal_variance.ln(),
        hp.kernel.lengthscale.ln(),
        hp.noise_variance.max(1e-300).ln(),
    ]
}

fn from_log(family: crate::kernel::KernelFamily, u: &[f64]) -> GpHyperparams {
    GpHyperparams {
        kernel: KernelSpec {
            family,
            signal_variance: u[0].exp(),
            lengthscale: u[1].exp(),
        },
        noise_variance: u[2].exp(),
    }
}

/// MAP hyperparameters, starting from `init` (warm start) and from the
/// prior modes; the better local optimum wins.
pub fn fit_map(data: &Dataset, priors: &HyperPriors, init: &GpHyperparams) -> Result<MapFit> {
    fit_map_with(data, priors, init, &MapSettings::default())
}

const SAME_MODE_MARGIN: f64 = 1e-9;

pub fn fit_map_with(
    data: &Dataset,
    priors: &HyperPriors,
    init: &GpHyperparams,
    settings: &MapSettings,
) -> Result<MapFit> {
    contract!(!data.is_empty(), "MAP fit needs at least one observation");
    init.validate()?;
    priors.validate()?;
    let family = init.kernel.family;
    let ranges = [
        settings.signal_variance_range,
        settings.lengthscale_range,
        settings.noise_variance_range,
    ];
    let bfgs = BoundedBfgs {
        max_iters: settings.max_iters,
        grad_tol: settings.grad_tol,
        lower: ranges.iter().map(|r| r.0.ln()).collect(),
        upper: ranges.iter().map(|r| r.1.ln()).collect(),
        max_step: 2.0,
    };
    let objective = |u: &[f64]| {
        let hp = from_log(family, u);
        log_posterior_with_grad(data, &hp, priors).map(|(lp, g)| (-lp, g.iter().map(|v| -v).collect::<Vec<_>>()))
    };

    let starts = [
        (FitStart::WarmStart, to_log(init)),
        (FitStart::PriorMode, to_log(&priors.modes(family))),
    ];
    let mut best: Option<MapFit> = None;
    for (start, u0) in starts {
        let Some(min) = bfgs.minimize(objective, &u0) else {
            continue;
        };
        let lp = -min.value;
        if !lp.is_finite() {
            continue;
        }
        // Both starts usually land on the same mode; keep the earlier one
        // unless the later is clearly better so round-off cannot flip it.
        if best.is_none_or(|b| lp > b.log_posterior + SAME_MODE_MARGIN * (1.0 + b.log_posterior.abs())) {
            best = Some(MapFit {
                hyperparams: from_log(family, &min.x),
                log_posterior: lp,
                start,
                converged: min.converged,
            });
        }
    }
    Ok(best.unwrap_or_else(|| {
        log::warn!("all MAP starts failed; keeping initial hyperparameters");
        MapFit {
            hyperparams: *init,
            log_posterior: log_posterior(data, init, priors),
            start: FitStart::Fallback,
            converged: false,
        }
    }))
}
