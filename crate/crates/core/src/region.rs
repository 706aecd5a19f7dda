//! The confidence region `{q in box : sigma_n(q) <= gamma * sigma_f}`, its
//! ball-union radius, and the Lipschitz worst-case bound.

use serde::{Deserialize, Serialize};

use crate::data::{norm, BoxBounds, Dataset};
use crate::error::{check_dim, contract, Result};
use crate::gp::GpModel;
use crate::kernel::{KernelFamily, KernelSpec};

/// Slack on the membership test, relative to sigma_f.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Noise variance (relative to the signal variance) below which the
/// squared-exponential closed form for r0 is used.
const NEGLIGIBLE_NOISE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ConfidenceRegion<'a> {
    gamma: f64,
    model: &'a GpModel,
    bounds: &'a BoxBounds,
}

impl<'a> ConfidenceRegion<'a> {
    pub fn new(gamma: f64, model: &'a GpModel, bounds: &'a BoxBounds) -> Result<Self> {
        contract!(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1], got {gamma}");
        check_dim(bounds.dim(), model.dim())?;
        Ok(Self { gamma, model, bounds })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn model(&self) -> &'a GpModel {
        self.model
    }

    pub fn bounds(&self) -> &'a BoxBounds {
        self.bounds
    }

    /// `false` for gamma = 1, where the region is the whole box.
    pub fn is_constrained(&self) -> bool {
        self.gamma < 1.0
    }

    /// gamma * sigma_f.
    pub fn threshold(&self) -> f64 {
        self.gamma * self.model.signal_std()
    }

    /// `sigma_n(q) - gamma * sigma_f`; nonpositive inside the region.
    pub fn constraint_value(&self, q: &[f64]) -> Result<f64> {
        Ok(self.model.std_dev(q)? - self.threshold())
    }

    /// Membership with the default tolerance.
    pub fn contains(&self, q: &[f64]) -> bool {
        self.contains_with_tol(q, MEMBERSHIP_TOL * self.model.signal_std())
    }

    pub fn contains_with_tol(&self, q: &[f64], tol: f64) -> bool {
        if !self.bounds.contains(q) {
            return false;
        }
        if !self.is_constrained() {
            return true;
        }
        match self.model.std_dev(q) {
            Ok(s) => s <= self.threshold() + tol,
            Err(_) => false,
        }
    }

    /// Ball radius for the current kernel and noise.
    pub fn r0(&self) -> Result<f64> {
        compute_r0(self.model.kernel(), self.gamma, self.model.effective_noise())
    }
}

/// Squared-exponential closed form `r0^2 = -2 l^2 ln sqrt(1 - gamma^2)`.
pub fn r0_closed_form(lengthscale: f64, gamma: f64) -> f64 {
    (-2.0 * lengthscale * lengthscale * (1.0 - gamma * gamma).sqrt().ln()).sqrt()
}

/// Posterior standard deviation at distance `r` from a single observation.
pub fn single_point_std(kernel: &KernelSpec, noise_variance: f64, r: f64) -> f64 {
    let sf2 = kernel.signal_variance;
    let k = kernel.eval_distance(r);
    (sf2 - k * k / (sf2 + noise_variance)).max(0.0).sqrt()
}

/// Solve `sigma_0(r) = gamma * sigma_f` by bisection on `(0, 20 l]`.
/// Returns 0 when even the observed point is outside the region.
pub fn r0_bisection(kernel: &KernelSpec, gamma: f64, noise_variance: f64) -> f64 {
    let target = gamma * kernel.signal_std();
    let f = |r: f64| single_point_std(kernel, noise_variance, r) - target;
    if f(0.0) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 20.0 * kernel.lengthscale);
    if f(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Radius of the ball around a single observation on which the posterior
/// standard deviation reaches `gamma * sigma_f`. Infinite for gamma = 1.
pub fn compute_r0(kernel: &KernelSpec, gamma: f64, noise_variance: f64) -> Result<f64> {
    contract!(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1], got {gamma}");
    if gamma >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let negligible = noise_variance <= NEGLIGIBLE_NOISE * kernel.signal_variance;
    Ok(match kernel.family {
        KernelFamily::SquaredExponential if negligible => r0_closed_form(kernel.lengthscale, gamma),
        _ => r0_bisection(kernel, gamma, noise_variance),
    })
}

/// `y_k - r0 * L`.
pub fn lipschitz_bound(nearest_value: f64, r0: f64, lipschitz: f64) -> f64 {
    if lipschitz == 0.0 {
        return nearest_value;
    }
    nearest_value - r0 * lipschitz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseBound {
    /// Index of the data point closest to the proposal.
    pub nearest: usize,
    pub nearest_value: f64,
    pub r0: f64,
    pub lipschitz: f64,
    pub bound: f64,
}

/// Lower bound on the objective at `proposal`, using the observed value of
/// the nearest evaluated point in place of its true value.
pub fn worst_case_bound(
    region: &ConfidenceRegion<'_>,
    data: &Dataset,
    proposal: &[f64],
    lipschitz: f64,
) -> Result<WorstCaseBound> {
    contract!(!data.is_empty(), "worst-case bound needs at least one observation");
    contract!(lipschitz >= 0.0, "Lipschitz constant must be nonnegative");
    check_dim(data.dim(), proposal.len())?;
    let nearest = data.nearest(proposal).expect("nonempty");
    let r0 = region.r0()?;
    let y = data.values()[nearest];
    Ok(WorstCaseBound {
        nearest,
        nearest_value: y,
        r0,
        lipschitz,
        bound: lipschitz_bound(y, r0, lipschitz),
    })
}

/// Largest posterior-mean gradient norm over `samples`.
pub fn estimate_lipschitz(model: &GpModel, samples: &[Vec<f64>]) -> Result<f64> {
    contract!(!samples.is_empty(), "Lipschitz estimate needs samples");
    let mut best: f64 = 0.0;
    for s in samples {
        let (_, g) = model.predict_gradients(s)?;
        best = best.max(norm(&g.mean));
    }
    Ok(best)
}
