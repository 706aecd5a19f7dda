//! Upper-confidence-bound acquisition and its maximization over the
//! confidence region: score a sample pool, then refine the best sample with
//! a sequential-quadratic-programming local search.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{norm, BoxBounds};
use crate::error::{check_dim, contract, Result};
use crate::gp::GpModel;
use crate::par::{map_slice, Execution};
use crate::qp::{box_qp, box_qp_with_linear};
use crate::region::ConfidenceRegion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Exploration weight on the posterior standard deviation.
    pub beta: f64,
    pub refine_max_iters: usize,
    /// Constraint slack, relative to sigma_f.
    pub constraint_tol: f64,
    /// Refinement stops once a step is shorter than this.
    pub step_tol: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            refine_max_iters: 50,
            constraint_tol: 1e-6,
            step_tol: 1e-8,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        contract!(self.beta >= 0.0 && self.beta.is_finite(), "beta must be nonnegative");
        contract!(self.refine_max_iters > 0, "refine_max_iters must be positive");
        contract!(self.constraint_tol > 0.0, "constraint_tol must be positive");
        Ok(())
    }
}

/// `mu_n(q) + beta * sigma_n(q)`.
pub fn ucb(model: &GpModel, q: &[f64], cfg: &AcquisitionConfig) -> Result<f64> {
    let p = model.predict(q)?;
    Ok(p.mean + cfg.beta * p.std_dev())
}

/// UCB without the model's value offset. The search runs on this scale so
/// that a constant offset cannot reorder candidates through rounding.
fn centered_ucb(model: &GpModel, q: &[f64], cfg: &AcquisitionConfig) -> Result<f64> {
    let p = model.predict_centered(q)?;
    Ok(p.mean + cfg.beta * p.std_dev())
}

fn ucb_with_grad(model: &GpModel, q: &[f64], beta: f64) -> Result<(f64, Vec<f64>, f64, Vec<f64>)> {
    let (p, g) = model.predict_gradients_centered(q)?;
    let std = p.std_dev();
    let grad = g.mean.iter().zip(&g.std_dev).map(|(m, s)| m + beta * s).collect();
    Ok((p.mean + beta * std, grad, std, g.std_dev))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub ucb: f64,
    /// Index of the best-scoring sample that seeded the refinement.
    pub seed_index: usize,
    pub seed_ucb: f64,
    /// `false` if the refinement was discarded in favour of the raw sample.
    pub refined: bool,
    pub refine_iterations: usize,
}

/// Maximize UCB over the confidence region, seeded by `samples` (which must
/// all lie in the region). The returned point satisfies membership at
/// `constraint_tol * sigma_f` and never scores below the best sample.
pub fn propose(
    region: &ConfidenceRegion<'_>,
    samples: &[Vec<f64>],
    cfg: &AcquisitionConfig,
    exec: Execution,
) -> Result<Proposal> {
    let threshold = region.is_constrained().then(|| region.threshold());
    maximize(region.model(), region.bounds(), threshold, samples, cfg, exec)
}

/// Box-only UCB maximization from the same kind of sample pool: the
/// search used when the confidence constraint is switched off.
pub fn maximize_ucb_in_box(
    model: &GpModel,
    bounds: &BoxBounds,
    samples: &[Vec<f64>],
    cfg: &AcquisitionConfig,
    exec: Execution,
) -> Result<Proposal> {
    maximize(model, bounds, None, samples, cfg, exec)
}

fn maximize(
    model: &GpModel,
    bounds: &BoxBounds,
    threshold: Option<f64>,
    samples: &[Vec<f64>],
    cfg: &AcquisitionConfig,
    exec: Execution,
) -> Result<Proposal> {
    contract!(
        !samples.is_empty(),
        "acquisition maximization needs at least one sample"
    );
    cfg.validate()?;
    for s in samples {
        check_dim(bounds.dim(), s.len())?;
    }
    let scores = map_slice(exec, samples, |s| centered_ucb(model, s, cfg));
    let mut seed_index = 0;
    let mut seed_ucb = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if s > seed_ucb {
            seed_ucb = s;
            seed_index = i;
        }
    }
    let start = &samples[seed_index];
    let off = model.value_offset();
    let tol = cfg.constraint_tol * model.signal_std();
    let refined = Refiner {
        model,
        bounds,
        threshold,
        beta: cfg.beta,
        // half the slack, so the accepted point keeps a margin
        tol: 0.5 * tol,
        max_iters: cfg.refine_max_iters,
        step_tol: cfg.step_tol,
    }
    .run(start)?;

    let feasible = |q: &[f64]| -> Result<bool> {
        if !bounds.contains(q) {
            return Ok(false);
        }
        Ok(match threshold {
            Some(t) => model.std_dev(q)? <= t + tol,
            None => true,
        })
    };
    if let Some((point, value, iters)) = refined {
        if value >= seed_ucb && feasible(&point)? {
            return Ok(Proposal {
                point,
                ucb: value + off,
                seed_index,
                seed_ucb: seed_ucb + off,
                refined: true,
                refine_iterations: iters,
            });
        }
    }
    Ok(Proposal {
        point: start.clone(),
        ucb: seed_ucb + off,
        seed_index,
        seed_ucb: seed_ucb + off,
        refined: false,
        refine_iterations: 0,
    })
}

const ROUNDOFF: f64 = 1e-13;

/// SQP on `min -ucb(x)` s.t. `sigma(x) <= threshold`, `x` in the box, with a
/// damped BFGS Hessian of the Lagrangian, an infinity-norm trust radius
/// and an L1 merit function.
struct Refiner<'a> {
    model: &'a GpModel,
    bounds: &'a BoxBounds,
    threshold: Option<f64>,
    beta: f64,
    tol: f64,
    max_iters: usize,
    step_tol: f64,
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
    c: f64,
    cgrad: Vec<f64>,
}

impl Refiner<'_> {
    fn eval(&self, x: &[f64]) -> Result<Eval> {
        let (u, g, std, gs) = ucb_with_grad(self.model, x, self.beta)?;
        let c = self.threshold.map_or(f64::NEG_INFINITY, |t| std - t);
        Ok(Eval {
            f: -u,
            grad: g.into_iter().map(|v| -v).collect(),
            c,
            cgrad: gs,
        })
    }

    fn merit(&self, e: &Eval, rho: f64) -> f64 {
        e.f + rho * e.c.max(0.0)
    }

    fn is_feasible(&self, e: &Eval) -> bool {
        e.c <= self.tol
    }

    /// Largest feasible point on the segment from `from` (feasible) to `to`.
    fn pull_back(&self, from: &[f64], to: &[f64]) -> Result<Vec<f64>> {
        let (mut lo, mut hi) = (0.0, 1.0);
        let at = |t: f64| -> Vec<f64> { from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect() };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let e = self.eval(&at(mid))?;
            if self.is_feasible(&e) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(at(lo))
    }

    /// Returns `(point, ucb, iterations)` of the final iterate, or of the
    /// best feasible one if the run ends outside the region.
    fn run(&self, start: &[f64]) -> Result<Option<(Vec<f64>, f64, usize)>> {
        let d = start.len();
        let lengthscale = self.model.kernel().lengthscale;
        let mut x = start.to_vec();
        let mut e = self.eval(&x)?;
        if !self.is_feasible(&e) {
            return Ok(None);
        }
        let mut best = (x.clone(), -e.f);
        let mut last_feasible = x.clone();
        let mut hess = DMatrix::<f64>::identity(d, d) * (self.model.signal_std() / (lengthscale * lengthscale));
        let mut radius = 0.5 * lengthscale;
        let mut rho: f64 = 1.0;
        let mut iters = 0;

        while iters < self.max_iters {
            iters += 1;
            let lo: Vec<f64> = (0..d).map(|i| (self.bounds.lower()[i] - x[i]).max(-radius)).collect();
            let hi: Vec<f64> = (0..d).map(|i| (self.bounds.upper()[i] - x[i]).min(radius)).collect();
            let (p, lambda) = if self.threshold.is_some() {
                box_qp_with_linear(&hess, &e.grad, &lo, &hi, &e.cgrad, e.c)
            } else {
                (box_qp(&hess, &e.grad, &lo, &hi), 0.0)
            };
            let pn = norm(&p);
            if pn < self.step_tol {
                break;
            }
            rho = rho.max(2.0 * lambda);

            let m0 = self.merit(&e, rho);
            let lin = e.grad.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() - rho * e.c.max(0.0);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let mut xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
                self.bounds.clip(&mut xn);
                let en = self.eval(&xn)?;
                let mn = self.merit(&en, rho);
                // Close to the solution the merit change is below round-off;
                // full short steps are then taken on the strength of the
                // gradients alone.
                let flat = t == 1.0 && pn <= 1e-4 * lengthscale && mn <= m0 + 10.0 * ROUNDOFF * (1.0 + m0.abs());
                if mn <= m0 + 1e-4 * t * lin.min(0.0) || flat {
                    accepted = Some((xn, en));
                    break;
                }
                if t == 1.0 && en.c > 0.0 {
                    // second-order correction: project the trial point back
                    // onto the linearized constraint
                    let gg: f64 = en.cgrad.iter().map(|v| v * v).sum();
                    if gg > 0.0 {
                        let mut xc: Vec<f64> = xn.iter().zip(&en.cgrad).map(|(a, g)| a - en.c * g / gg).collect();
                        self.bounds.clip(&mut xc);
                        let ec = self.eval(&xc)?;
                        if self.merit(&ec, rho) <= m0 + 1e-4 * lin.min(0.0) {
                            accepted = Some((xc, ec));
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            let Some((xn, en)) = accepted else {
                radius *= 0.25;
                if radius < self.step_tol {
                    break;
                }
                continue;
            };
            if t == 1.0 {
                radius = (radius * 2.0).min(10.0 * lengthscale);
            } else {
                radius = (radius * 0.5).max(self.step_tol);
            }

            // damped BFGS on the Lagrangian gradient
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = (0..d)
                .map(|i| (en.grad[i] + lambda * en.cgrad[i]) - (e.grad[i] + lambda * e.cgrad[i]))
                .collect();
            let bs: Vec<f64> = (0..d).map(|i| (0..d).map(|j| hess[(i, j)] * s[j]).sum()).collect();
            let sbs: f64 = s.iter().zip(&bs).map(|(a, b)| a * b).sum();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            if sbs > 1e-300 {
                let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
                let r: Vec<f64> = (0..d).map(|i| theta * y[i] + (1.0 - theta) * bs[i]).collect();
                let sr: f64 = s.iter().zip(&r).map(|(a, b)| a * b).sum();
                if sr > 1e-300 {
                    for i in 0..d {
                        for j in 0..d {
                            hess[(i, j)] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
                        }
                    }
                }
            }

            x = xn;
            e = en;
            if self.is_feasible(&e) {
                last_feasible.clone_from(&x);
                if -e.f > best.1 {
                    best = (x.clone(), -e.f);
                }
            }
        }
        // prefer the converged last iterate; earlier ones are a fallback
        if self.is_feasible(&e) {
            return Ok(Some((x, -e.f, iters)));
        }
        let pulled = self.pull_back(&last_feasible, &x)?;
        let ep = self.eval(&pulled)?;
        if self.is_feasible(&ep) {
            return Ok(Some((pulled, -ep.f, iters)));
        }
        Ok(Some((best.0, best.1, iters)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::gp::GpHyperparams;
    use crate::kernel::KernelSpec;

    fn model_1d(points: Vec<f64>, values: Vec<f64>) -> GpModel {
        let kernel = KernelSpec::squared_exponential(1.0, 0.3).unwrap();
        let data = Dataset::from_parts(1, points.into_iter().map(|p| vec![p]).collect(), values).unwrap();
        GpModel::fit(&data, GpHyperparams::new(kernel, 1e-6).unwrap()).unwrap()
    }

    #[test]
    fn ucb_arithmetic_and_prior() {
        let kernel = KernelSpec::matern52(4.0, 0.3).unwrap();
        let model = GpModel::fit_with_offset(&Dataset::new(2), GpHyperparams::new(kernel, 0.0).unwrap(), 1.5).unwrap();
        let cfg = AcquisitionConfig::default();
        assert_eq!(ucb(&model, &[0.3, 0.1], &cfg).unwrap(), 1.5 + 2.0 * 2.0);
        let greedy = AcquisitionConfig { beta: 0.0, ..cfg };
        assert_eq!(ucb(&model, &[0.3, 0.1], &greedy).unwrap(), 1.5);
    }

    #[test]
    fn empty_pool_rejected() {
        let model = model_1d(vec![0.0], vec![0.0]);
        let b = BoxBounds::cube(1, 1.0).unwrap();
        let region = ConfidenceRegion::new(0.5, &model, &b).unwrap();
        assert!(propose(&region, &[], &AcquisitionConfig::default(), Execution::Sequential).is_err());
    }

    #[test]
    fn never_worse_than_best_sample() {
        let model = model_1d(vec![-0.2, 0.1, 0.3], vec![-0.5, 0.0, -0.2]);
        let b = BoxBounds::cube(1, 1.0).unwrap();
        let region = ConfidenceRegion::new(0.6, &model, &b).unwrap();
        let samples: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![-0.3 + 0.012 * i as f64])
            .filter(|s| region.contains(s))
            .collect();
        let cfg = AcquisitionConfig::default();
        let p = propose(&region, &samples, &cfg, Execution::Sequential).unwrap();
        let best = samples
            .iter()
            .map(|s| ucb(&model, s, &cfg).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(p.ucb >= best - 1e-12);
        assert!(model.std_dev(&p.point).unwrap() <= 0.6 + 1e-6);
    }
}
