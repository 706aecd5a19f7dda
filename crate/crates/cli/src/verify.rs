//! The `verify` subcommand: quick property checks on small instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crbo::acquisition::{maximize_ucb_in_box, propose, AcquisitionConfig};
use crbo::benchmarks::{sample_initial_point, GpSampleConfig, GpSampleObjective};
use crbo::hyper::log_marginal_likelihood;
use crbo::par::Execution;
use crbo::region::{r0_bisection, r0_closed_form, ConfidenceRegion};
use crbo::sampler::{sample_region, uniform_box_samples, SamplerConfig};
use crbo::{run_crbo, BoxBounds, CrboConfig, Dataset, GpHyperparams, GpModel, KernelFamily, KernelSpec, Objective};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn random_model(rng: &mut ChaCha8Rng, noise_exp: std::ops::Range<f64>) -> GpModel {
    let dim = rng.random_range(1..=3);
    let n = rng.random_range(1..=8);
    let pts = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ys = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let data = Dataset::from_parts(dim, pts, ys).unwrap();
    let family = if rng.random_bool(0.5) {
        KernelFamily::Matern52
    } else {
        KernelFamily::SquaredExponential
    };
    let kernel = KernelSpec::new(family, rng.random_range(0.5..2.0), rng.random_range(0.2..1.0)).unwrap();
    let noise = kernel.signal_variance * 10f64.powf(rng.random_range(noise_exp));
    GpModel::fit(&data, GpHyperparams::new(kernel, noise).unwrap()).unwrap()
}

fn posterior(rng: &mut ChaCha8Rng) -> crbo::Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = random_model(rng, -6.0..-1.0);
        let data = m.data();
        let pts = data.points();
        let n = pts.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            m.kernel().eval(&pts[i], &pts[j]).unwrap() + if i == j { m.effective_noise() } else { 0.0 }
        });
        let kinv = k.clone().try_inverse().expect("positive definite");
        let y = DVector::from_column_slice(data.values());
        let q: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kq = DVector::from_iterator(n, pts.iter().map(|p| m.kernel().eval(&q, p).unwrap()));
        let mean = (kq.transpose() * &kinv * &y)[(0, 0)];
        let var = m.kernel().signal_variance - (kq.transpose() * &kinv * &kq)[(0, 0)];
        let lml = -0.5 * (y.transpose() * &kinv * &y)[(0, 0)]
            - 0.5 * k.determinant().ln()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let p = m.predict(&q)?;
        let got_lml = log_marginal_likelihood(data, m.hyperparams()).unwrap_or(f64::NAN);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        worst = worst
            .max(rel(p.mean, mean))
            .max(rel(p.variance, var.max(0.0)))
            .max(rel(got_lml, lml));
    }
    Ok(check(
        "posterior vs dense inverse",
        worst <= 1e-8,
        format!("max relative deviation {worst:.2e}"),
    ))
}

fn gradients(rng: &mut ChaCha8Rng) -> crbo::Result<Check> {
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..20 {
        let m = random_model(rng, -3.0..-1.0);
        let base = &m.data().points()[0];
        let q: Vec<f64> = base
            .iter()
            .map(|x| x + rng.random_range(-0.5..0.5) * m.kernel().lengthscale)
            .collect();
        let (_, g) = m.predict_gradients(&q)?;
        let mut fd_mean = Vec::new();
        let mut fd_std = Vec::new();
        for i in 0..q.len() {
            let mut a = q.clone();
            let mut b = q.clone();
            a[i] += h;
            b[i] -= h;
            let (pa, pb) = (m.predict(&a)?, m.predict(&b)?);
            fd_mean.push((pa.mean - pb.mean) / (2.0 * h));
            fd_std.push((pa.std_dev() - pb.std_dev()) / (2.0 * h));
        }
        let rel = |x: &[f64], y: &[f64]| {
            let diff: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scale: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt();
            diff / scale.max(1e-6)
        };
        worst = worst.max(rel(&g.mean, &fd_mean)).max(rel(&g.std_dev, &fd_std));
    }
    Ok(check(
        "gradients vs finite differences",
        worst <= 1e-5,
        format!("max relative error {worst:.2e}"),
    ))
}

fn radius(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let ell = rng.random_range(0.05..2.0);
        let gamma = rng.random_range(0.05..0.95);
        let kernel = KernelSpec::squared_exponential(1.0, ell).unwrap();
        let closed = r0_closed_form(ell, gamma);
        worst = worst.max((closed - r0_bisection(&kernel, gamma, 1e-10)).abs() / closed);
    }
    check(
        "r0 closed form vs bisection",
        worst <= 1e-6,
        format!("max relative difference {worst:.2e}"),
    )
}

fn sampler(rng: &mut ChaCha8Rng) -> crbo::Result<Check> {
    let m = random_model(rng, -4.0..-2.0);
    let bounds = BoxBounds::cube(m.dim(), 1.0)?;
    let region = ConfidenceRegion::new(0.5, &m, &bounds)?;
    let cfg = SamplerConfig {
        total_samples: 500,
        ..Default::default()
    };
    let a = sample_region(&region, &cfg, 3, Execution::Sequential)?;
    let b = sample_region(&region, &cfg, 3, Execution::Parallel)?;
    let tol = 1e-6 * m.signal_std();
    let outside = a.samples.iter().filter(|s| !region.contains_with_tol(s, tol)).count();
    Ok(check(
        "sampler membership and determinism",
        outside == 0 && a == b && !a.samples.is_empty(),
        format!("{} samples, {outside} outside, repeatable: {}", a.samples.len(), a == b),
    ))
}

fn gamma_one(rng: &mut ChaCha8Rng) -> crbo::Result<Check> {
    let cfg = AcquisitionConfig::default();
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let m = random_model(rng, -4.0..-2.0);
        let bounds = BoxBounds::cube(m.dim(), 1.0)?;
        let pool = uniform_box_samples(&bounds, 200, i);
        let region = ConfidenceRegion::new(1.0, &m, &bounds)?;
        let a = propose(&region, &pool, &cfg, Execution::Sequential)?;
        let b = maximize_ucb_in_box(&m, &bounds, &pool, &cfg, Execution::Sequential)?;
        worst = a
            .point
            .iter()
            .zip(&b.point)
            .map(|(x, y)| (x - y).abs())
            .fold(worst, f64::max);
    }
    Ok(check(
        "gamma = 1 matches box search",
        worst <= 1e-8,
        format!("max disagreement {worst:.2e}"),
    ))
}

struct Shifted(GpSampleObjective);

impl Objective for Shifted {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn bounds(&self) -> &BoxBounds {
        self.0.bounds()
    }

    fn evaluate(&mut self, theta: &[f64]) -> crbo::Result<f64> {
        Ok(self.0.evaluate(theta)? + 10.0)
    }
}

fn short_run(seed: u64) -> crbo::Result<Vec<Check>> {
    let mut obj = GpSampleObjective::new(
        2,
        seed,
        GpSampleConfig {
            optimum_starts: 100,
            ..Default::default()
        },
    )?;
    obj.search_optimum(Execution::Sequential)?;
    let theta0 = sample_initial_point(&obj, 0.3, seed)?;
    let cfg = CrboConfig {
        budget: 15,
        seed,
        ..Default::default()
    };
    let base = run_crbo(&mut obj.clone(), &theta0, &cfg)?;
    let moved = run_crbo(&mut Shifted(obj), &theta0, &cfg)?;
    let shift = base
        .proposals
        .iter()
        .zip(&moved.proposals)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let report = base.verify_constraint(1e-6)?;
    Ok(vec![
        check(
            "centering invariance",
            shift <= 1e-8,
            format!("max proposal shift {shift:.2e} under y + 10"),
        ),
        check(
            "constraint compliance",
            report.violations == 0 && base.complete,
            format!("{} proposals, {} violations", report.checked, report.violations),
        ),
    ])
}

/// Run every check with randomness drawn from `seed`.
pub fn run_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: crbo::Result<Vec<Check>>| match r {
        Ok(c) => out.extend(c),
        Err(e) => out.push(check(name, false, format!("error: {e}"))),
    };
    push("posterior vs dense inverse", posterior(&mut rng).map(|c| vec![c]));
    push("gradients vs finite differences", gradients(&mut rng).map(|c| vec![c]));
    push("r0 closed form vs bisection", Ok(vec![radius(&mut rng)]));
    push("sampler membership and determinism", sampler(&mut rng).map(|c| vec![c]));
    push("gamma = 1 matches box search", gamma_one(&mut rng).map(|c| vec![c]));
    push("short run", short_run(seed));
    out
}
