//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line per
//! criterion; exits non-zero if any criterion fails.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crbo::acquisition::{maximize_ucb_in_box, propose, AcquisitionConfig};
use crbo::benchmarks::{make_gp_sample_suite, sample_initial_point, GpSampleConfig, GpSampleObjective};
use crbo::hyper::log_marginal_likelihood;
use crbo::objective::Objective;
use crbo::optimizer::propose_next;
use crbo::par::Execution;
use crbo::region::{r0_bisection, r0_closed_form, ConfidenceRegion};
use crbo::sampler::{sample_region, uniform_box_samples, SamplerConfig};
use crbo::{
    run_crbo, run_standard_bo, BoxBounds, CrboConfig, Dataset, GpHyperparams, GpModel, KernelFamily, KernelSpec,
    RunRecord,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- helpers

fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile, written independently of the crate.
fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn regret_at(record: &RunRecord, n: usize) -> f64 {
    let y_star = record.y_star.expect("suite optimum known");
    record.observations[..n]
        .iter()
        .map(|y| (y - y_star).abs())
        .fold(f64::INFINITY, f64::min)
}

fn persist_and_reload(records: &[RunRecord], tag: &str) -> Vec<RunRecord> {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(tag);
    std::fs::create_dir_all(&dir).unwrap();
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let path = dir.join(format!("run_{i:03}.json"));
            std::fs::write(&path, r.to_json()).unwrap();
            RunRecord::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap()
        })
        .collect()
}

fn run_pair(suite: &[GpSampleObjective], budget: usize) -> (Vec<RunRecord>, Vec<RunRecord>) {
    let mut crbo = Vec::new();
    let mut standard = Vec::new();
    for (i, obj) in suite.iter().enumerate() {
        let theta0 = sample_initial_point(obj, 0.3, 1000 + i as u64).unwrap();
        let cfg = CrboConfig {
            budget,
            seed: i as u64,
            ..Default::default()
        };
        crbo.push(run_crbo(&mut obj.clone(), &theta0, &cfg).unwrap());
        standard.push(run_standard_bo(&mut obj.clone(), &theta0, &cfg).unwrap());
    }
    (crbo, standard)
}

fn random_dataset(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> Dataset {
    let points = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let values = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Dataset::from_parts(dim, points, values).unwrap()
}

/// Random model with noise variance `sigma_f^2 * 10^u`, `u` uniform in `log_noise`.
fn random_model(rng: &mut ChaCha8Rng, log_noise: std::ops::Range<f64>) -> GpModel {
    let dim = rng.random_range(1..=5);
    let n = rng.random_range(1..=10);
    let family = if rng.random_bool(0.5) {
        KernelFamily::Matern52
    } else {
        KernelFamily::SquaredExponential
    };
    let kernel = KernelSpec::new(family, rng.random_range(0.5..3.0), rng.random_range(0.2..1.5)).unwrap();
    let noise = kernel.signal_variance * 10f64.powf(rng.random_range(log_noise));
    let data = random_dataset(rng, dim, n);
    GpModel::fit_with_offset(
        &data,
        GpHyperparams::new(kernel, noise).unwrap(),
        rng.random_range(-1.0..1.0),
    )
    .unwrap()
}

/// Asymptotic Kolmogorov survival function with the Stephens small-sample
/// correction.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- criteria

struct Benchmarks {
    d5: (Vec<RunRecord>, Vec<RunRecord>),
    d2: (Vec<RunRecord>, Vec<RunRecord>),
}

fn run_benchmarks() -> Benchmarks {
    let d5_suite = make_gp_sample_suite(5, 20, 500, GpSampleConfig::default(), Execution::Parallel).unwrap();
    let d5 = run_pair(&d5_suite, 100);
    let d2_suite = make_gp_sample_suite(2, 20, 200, GpSampleConfig::default(), Execution::Parallel).unwrap();
    let d2 = run_pair(&d2_suite, 50);
    Benchmarks {
        d5: (
            persist_and_reload(&d5.0, "d5_crbo"),
            persist_and_reload(&d5.1, "d5_standard"),
        ),
        d2: (
            persist_and_reload(&d2.0, "d2_crbo"),
            persist_and_reload(&d2.1, "d2_standard"),
        ),
    }
}

fn five_dim_comparison(b: &Benchmarks) -> Outcome {
    let (crbo, standard) = &b.d5;
    let complete = crbo
        .iter()
        .chain(standard)
        .all(|r| r.complete && r.observations.len() == 100);
    let c100 = median(&crbo.iter().map(|r| regret_at(r, 100)).collect::<Vec<_>>());
    let s100 = median(&standard.iter().map(|r| regret_at(r, 100)).collect::<Vec<_>>());
    let s50 = median(&standard.iter().map(|r| regret_at(r, 50)).collect::<Vec<_>>());
    outcome(
        complete && c100 < s100 && c100 < s50,
        format!("median regret: crbo@100 {c100:.4e}, standard@100 {s100:.4e}, standard@50 {s50:.4e}"),
    )
}

fn two_dim_parity(b: &Benchmarks) -> Outcome {
    let (crbo, standard) = &b.d2;
    let c: Vec<f64> = crbo.iter().map(|r| regret_at(r, 50)).collect();
    let s: Vec<f64> = standard.iter().map(|r| regret_at(r, 50)).collect();
    let initial: Vec<f64> = crbo.iter().map(|r| regret_at(r, 1)).collect();
    let (mc, ms, m0) = (median(&c), median(&s), median(&initial));
    let iqr = |v: &[f64]| quantile(v, 0.75) - quantile(v, 0.25);
    let (iqr_c, iqr_s) = (iqr(&c), iqr(&s));
    let within = (mc - ms).abs() <= iqr_c.max(iqr_s);
    let dropped = mc < 0.1 * m0 && ms < 0.1 * m0;
    outcome(
        within && dropped,
        format!("median@50 crbo {mc:.3e} (IQR {iqr_c:.3e}), standard {ms:.3e} (IQR {iqr_s:.3e}), initial {m0:.3e}"),
    )
}

fn constraint_compliance(b: &Benchmarks, extra: &[RunRecord]) -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    let mut max_excess: f64 = 0.0;
    let all = b.d5.0.iter().chain(&b.d5.1).chain(&b.d2.0).chain(&b.d2.1).chain(extra);
    for r in all {
        let rep = r.verify_constraint(1e-6).unwrap();
        checked += rep.checked;
        violations += rep.violations;
        max_excess = max_excess.max(rep.max_excess);
    }
    outcome(
        violations == 0 && checked > 0,
        format!("{checked} proposals checked, {violations} violations, max excess {max_excess:.2e} sigma_f"),
    )
}

fn r0_closed_form_matches() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let l = rng.random_range(0.05..2.0);
        let gamma = rng.random_range(0.05..0.95);
        let kernel = KernelSpec::squared_exponential(rng.random_range(0.5..4.0), l).unwrap();
        let noise = 1e-10 * kernel.signal_variance;
        let closed = r0_closed_form(l, gamma);
        let bisected = r0_bisection(&kernel, gamma, noise);
        worst = worst.max((closed - bisected).abs() / closed);
    }
    outcome(worst <= 1e-6, format!("20 pairs, max relative difference {worst:.2e}"))
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // moderate noise and near-data queries keep step-1e-6 differences
        // above round-off
        let model = random_model(&mut rng, -3.0..-1.0);
        let l = model.kernel().lengthscale;
        let anchor = &model.data().points()[rng.random_range(0..model.data().len())];
        let q: Vec<f64> = anchor.iter().map(|a| a + rng.random_range(-0.5..0.5) * l).collect();
        let (_, g) = model.predict_gradients(&q).unwrap();
        let mut fd_mean = vec![0.0; q.len()];
        let mut fd_std = vec![0.0; q.len()];
        for i in 0..q.len() {
            let mut a = q.clone();
            let mut b = q.clone();
            a[i] += h;
            b[i] -= h;
            let (pa, pb) = (model.predict(&a).unwrap(), model.predict(&b).unwrap());
            fd_mean[i] = (pa.mean - pb.mean) / (2.0 * h);
            fd_std[i] = (pa.std_dev() - pb.std_dev()) / (2.0 * h);
        }
        for (analytic, fd) in [(&g.mean, &fd_mean), (&g.std_dev, &fd_std)] {
            let diff: f64 = analytic
                .iter()
                .zip(fd)
                .map(|(a, f)| (a - f).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt().max(1e-6);
            worst = worst.max(diff / scale);
        }
    }
    outcome(worst <= 1e-5, format!("100 models, max relative error {worst:.2e}"))
}

fn sampler_uniformity() -> Outcome {
    // single ball: one observation at the center of a large box
    let kernel = KernelSpec::squared_exponential(1.0, 0.3).unwrap();
    let data = Dataset::from_parts(2, vec![vec![0.0, 0.0]], vec![0.0]).unwrap();
    let model = GpModel::fit(&data, GpHyperparams::new(kernel, 0.0).unwrap()).unwrap();
    let bounds = BoxBounds::cube(2, 1.0).unwrap();
    let gamma = 0.6;
    let region = ConfidenceRegion::new(gamma, &model, &bounds).unwrap();
    let threshold = (gamma + 1e-9) * model.signal_std();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model.std_dev(&[mid, 0.0]).unwrap() <= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let radius = 0.5 * (lo + hi);
    let cfg = SamplerConfig {
        total_samples: 5000,
        ..Default::default()
    };
    let pool = sample_region(&region, &cfg, 6, Execution::Sequential).unwrap();
    let u: Vec<f64> = pool
        .samples
        .iter()
        .map(|s| (s[0] * s[0] + s[1] * s[1]) / (radius * radius))
        .collect();
    let d = ks_uniform(&u);
    let p = ks_p_value(d, u.len());

    let bounds = BoxBounds::unit(3).unwrap();
    let data = Dataset::from_parts(3, vec![vec![0.5, 0.5, 0.5]], vec![0.0]).unwrap();
    let model = GpModel::fit(&data, GpHyperparams::new(kernel, 1e-4).unwrap()).unwrap();
    let region = ConfidenceRegion::new(1.0, &model, &bounds).unwrap();
    let cfg = SamplerConfig {
        total_samples: 10_000,
        ..Default::default()
    };
    let pool = sample_region(&region, &cfg, 7, Execution::Sequential).unwrap();
    let mut worst_mean: f64 = 0.0;
    for j in 0..3 {
        let m = pool.samples.iter().map(|s| s[j]).sum::<f64>() / pool.samples.len() as f64;
        worst_mean = worst_mean.max((m - 0.5).abs());
    }
    outcome(
        p > 0.01 && worst_mean <= 0.02 && pool.samples.len() == 10_000,
        format!("radial KS D={d:.4} p={p:.3}; box mean max deviation {worst_mean:.4}"),
    )
}

fn posterior_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut worst_mono: f64 = 0.0;
    for _ in 0..50 {
        let model = random_model(&mut rng, -6.0..-1.0);
        let data = model.data();
        let hp = *model.hyperparams();
        let n = data.len();
        let s2 = model.effective_noise();
        let kern = model.kernel();
        let k = DMatrix::from_fn(n, n, |i, j| {
            kern.eval(&data.points()[i], &data.points()[j]).unwrap() + if i == j { s2 } else { 0.0 }
        });
        let kinv = k.clone().try_inverse().unwrap();
        let y = DVector::from_column_slice(data.values());
        let offset = model.value_offset();
        let scale = |x: f64| x.abs().max(1.0);
        for _ in 0..5 {
            let q: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.2..1.2)).collect();
            let kq = DVector::from_fn(n, |i, _| kern.eval(&q, &data.points()[i]).unwrap());
            let mean = kq.dot(&(&kinv * &y)) + offset;
            let var = (kern.signal_variance - kq.dot(&(&kinv * &kq))).max(0.0);
            let p = model.predict(&q).unwrap();
            worst = worst.max((p.mean - mean).abs() / scale(mean));
            worst = worst.max((p.variance - var).abs() / scale(var));
        }
        let lml = -0.5 * y.dot(&(&kinv * &y))
            - 0.5 * k.determinant().ln()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        // both paths factorize the same covariance, jitter included
        let got = log_marginal_likelihood(data, &hp).unwrap();
        worst = worst.max((got - lml).abs() / scale(lml));

        // adding a point never raises the variance
        let mut grown = data.clone();
        let extra: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        grown.push(extra, rng.random_range(-1.0..1.0)).unwrap();
        let bigger = GpModel::fit(&grown, hp).unwrap();
        for _ in 0..5 {
            let q: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let before = model.predict(&q).unwrap().variance;
            let after = bigger.predict(&q).unwrap().variance;
            worst_mono = worst_mono.max(after - before);
        }
    }
    outcome(
        worst <= 1e-8 && worst_mono <= 1e-8,
        format!("50 models, max deviation from dense inverse {worst:.2e}; max variance increase {worst_mono:.2e}"),
    )
}

fn gamma_one_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let acq = AcquisitionConfig::default();
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let dim = rng.random_range(1..=4);
        let n = rng.random_range(2..=8);
        let data = random_dataset(&mut rng, dim, n);
        let kernel = KernelSpec::matern52(rng.random_range(0.5..2.0), rng.random_range(0.2..0.8)).unwrap();
        let model = GpModel::fit(&data, GpHyperparams::new(kernel, 1e-3).unwrap()).unwrap();
        let bounds = BoxBounds::cube(dim, 1.0).unwrap();
        let region = ConfidenceRegion::new(1.0, &model, &bounds).unwrap();
        let pool = uniform_box_samples(&bounds, 300, t);
        let a = propose(&region, &pool, &acq, Execution::Sequential).unwrap();
        let b = maximize_ucb_in_box(&model, &bounds, &pool, &acq, Execution::Sequential).unwrap();
        let d = a
            .point
            .iter()
            .zip(&b.point)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(d).max((a.ucb - b.ucb).abs());
    }
    outcome(worst <= 1e-8, format!("20 pools, max disagreement {worst:.2e}"))
}

/// Wraps an objective and adds a constant to every observation.
struct Shifted<O> {
    inner: O,
    shift: f64,
}

impl<O: Objective> Objective for Shifted<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn bounds(&self) -> &BoxBounds {
        self.inner.bounds()
    }
    fn evaluate(&mut self, theta: &[f64]) -> crbo::Result<f64> {
        Ok(self.inner.evaluate(theta)? + self.shift)
    }
}

/// Replays every recorded iteration from its data prefix and hyperparameters
/// with the observations as recorded and shifted by +10.
fn centering_invariance(records: &[&RunRecord], suite: &[GpSampleObjective]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut replay_mismatch: f64 = 0.0;
    let mut checked = 0;
    for rec in records {
        let cfg = CrboConfig {
            gamma: rec.gamma,
            budget: rec.budget,
            seed: rec.seed,
            ..Default::default()
        };
        for (k, it) in rec.iterations.iter().enumerate() {
            let n = it.proposal_index;
            let points = rec.proposals[..n].to_vec();
            let values = rec.observations[..n].to_vec();
            let shifted: Vec<f64> = values.iter().map(|y| y + 10.0).collect();
            let base = Dataset::from_parts(rec.dim(), points.clone(), values).unwrap();
            let moved = Dataset::from_parts(rec.dim(), points, shifted).unwrap();
            let a = propose_next(&base, it.hyperparams, &rec.bounds, &cfg, rec.method, k).unwrap();
            let b = propose_next(&moved, it.hyperparams, &rec.bounds, &cfg, rec.method, k).unwrap();
            worst = worst.max(max_abs_diff(&a.proposal.point, &b.proposal.point));
            replay_mismatch = replay_mismatch.max(max_abs_diff(&a.proposal.point, &rec.proposals[n]));
            checked += 1;
        }
    }

    // full trajectories, hyperparameter refits included
    let mut drift: f64 = 0.0;
    for (i, obj) in suite.iter().enumerate() {
        let theta0 = sample_initial_point(obj, 0.3, i as u64).unwrap();
        let cfg = CrboConfig {
            budget: 25,
            seed: 40 + i as u64,
            ..Default::default()
        };
        let base = run_crbo(&mut obj.clone(), &theta0, &cfg).unwrap();
        let mut shifted = Shifted {
            inner: obj.clone(),
            shift: 10.0,
        };
        let moved = run_crbo(&mut shifted, &theta0, &cfg).unwrap();
        for (p, q) in base.proposals.iter().zip(&moved.proposals) {
            drift = drift.max(max_abs_diff(p, q));
        }
    }
    outcome(
        worst <= 1e-8 && drift <= 1e-8 && replay_mismatch == 0.0 && checked > 0,
        format!(
            "{checked} replayed proposals, max shift {worst:.2e} (replay reproduces record: {}); \
             end-to-end drift over {} runs {drift:.2e}",
            replay_mismatch == 0.0,
            suite.len()
        ),
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn bound_accounting() -> (Outcome, Vec<RunRecord>) {
    let cfg = GpSampleConfig {
        noise_std: 0.0,
        ..Default::default()
    };
    let suite = make_gp_sample_suite(2, 10, 900, cfg, Execution::Parallel).unwrap();
    let mut total = 0;
    let mut held = 0;
    let mut records = Vec::new();
    for (i, obj) in suite.iter().enumerate() {
        let theta0 = sample_initial_point(obj, 0.3, 77 + i as u64).unwrap();
        let run_cfg = CrboConfig {
            budget: 30,
            seed: 300 + i as u64,
            ..Default::default()
        };
        let rec = run_crbo(&mut obj.clone(), &theta0, &run_cfg).unwrap();
        for it in &rec.iterations {
            if let Some(b) = it.bound {
                total += 1;
                if rec.observations[it.proposal_index] >= b.bound {
                    held += 1;
                }
            }
        }
        records.push(rec);
    }
    let fraction = held as f64 / total.max(1) as f64;
    (
        outcome(
            total > 0 && fraction >= 0.9,
            format!("bound held in {held}/{total} iterations ({:.1}%)", 100.0 * fraction),
        ),
        persist_and_reload(&records, "bound"),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; only a
    // filter argument that names nothing here would skip the suite.
    if std::env::args().skip(1).any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    let benches = run_benchmarks();
    let (bound, bound_records) = bound_accounting();
    let centering_suite = make_gp_sample_suite(2, 5, 60, GpSampleConfig::default(), Execution::Parallel).unwrap();

    results.push(("1 five-dimensional comparison", five_dim_comparison(&benches)));
    results.push(("2 two-dimensional parity", two_dim_parity(&benches)));
    results.push((
        "3 constraint compliance",
        constraint_compliance(&benches, &bound_records),
    ));
    results.push(("4 r0 closed form", r0_closed_form_matches()));
    results.push(("5 gradient suite", gradient_suite()));
    results.push(("6 sampler uniformity", sampler_uniformity()));
    results.push(("7 posterior correctness", posterior_oracle()));
    results.push(("8 gamma = 1 reduction", gamma_one_reduction()));
    let replayed: Vec<&RunRecord> = benches
        .d2
        .0
        .iter()
        .chain(&benches.d2.1)
        .chain(&benches.d5.0[..5])
        .collect();
    results.push((
        "9 centering invariance",
        centering_invariance(&replayed, &centering_suite),
    ));
    results.push(("10 worst-case bound accounting", bound));

    let mut report = String::new();
    for (name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        writeln!(report, "[{tag}] {name}: {}", o.detail).unwrap();
    }
    print!("{report}");
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
