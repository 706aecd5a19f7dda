use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crbo::benchmarks::{
    make_gp_sample_suite, sample_initial_point, GpSampleConfig, GpSampleObjective, PendulumConfig, SuiteManifest,
    ToyPendulumObjective,
};
use crbo::par::Execution;
use crbo::Objective;

fn config() -> GpSampleConfig {
    GpSampleConfig {
        optimum_starts: 200,
        ..Default::default()
    }
}

#[test]
fn optimum_dominates_center_and_dense_grid() {
    let suite = make_gp_sample_suite(2, 5, 40, config(), Execution::Parallel).unwrap();
    for obj in &suite {
        let (theta, y_star) = obj.known_optimum().unwrap();
        assert!(y_star >= 3.0 - 1e-3, "seed {}: y* {y_star}", obj.seed());
        assert!((obj.value(theta).unwrap() - y_star).abs() < 1e-12);
        let mut grid_max = f64::NEG_INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let q = [-1.0 + 0.01 * i as f64, -1.0 + 0.01 * j as f64];
                grid_max = grid_max.max(obj.value(&q).unwrap());
            }
        }
        assert!(
            grid_max <= y_star + 1e-9,
            "seed {}: grid {grid_max} above y* {y_star}",
            obj.seed()
        );
    }
}

#[test]
fn observation_noise_has_configured_variance() {
    let mut obj = GpSampleObjective::new(2, 3, config()).unwrap();
    let q = [0.2, -0.4];
    let truth = obj.value(&q).unwrap();
    let ys: Vec<f64> = (0..1000).map(|_| obj.evaluate(&q).unwrap()).collect();
    let mean = ys.iter().sum::<f64>() / 1000.0;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / 999.0;
    assert!((1e-6 / 1.3..=1e-6 * 1.3).contains(&var), "variance {var}");
    assert!((mean - truth).abs() < 1e-4);

    let mut again = GpSampleObjective::new(2, 3, config()).unwrap();
    assert_eq!(again.evaluate(&q).unwrap(), ys[0]);
    obj.reset_noise();
    assert_eq!(obj.evaluate(&q).unwrap(), ys[0]);
}

#[test]
fn realizations_are_consistent_and_smooth() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dim in [2, 5] {
        let obj = GpSampleObjective::new(dim, 11, config()).unwrap();
        let mut slopes = Vec::new();
        for _ in 0..2000 {
            let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.99..0.99)).collect();
            let b: Vec<f64> = a.iter().map(|x| x + rng.random_range(-1e-3..1e-3)).collect();
            let ya = obj.value(&a).unwrap();
            assert!((obj.value(&a).unwrap() - ya).abs() <= 1e-12);
            let d = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            slopes.push((obj.value(&b).unwrap() - ya).abs() / d);
        }
        slopes.sort_by(f64::total_cmp);
        let p99 = slopes[(0.99 * (slopes.len() - 1) as f64) as usize];
        assert!(p99 < 50.0, "d={dim}: 99th percentile slope {p99}");
    }
}

#[test]
fn initial_point_at_requested_distance() {
    let suite = make_gp_sample_suite(5, 2, 70, config(), Execution::Sequential).unwrap();
    for obj in &suite {
        let (theta, _) = obj.known_optimum().unwrap();
        for seed in 0..20 {
            let p = sample_initial_point(obj, 0.3, seed).unwrap();
            let d = p.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!((d - 0.3).abs() < 1e-10);
            assert!(obj.bounds().contains(&p));
        }
        assert_eq!(sample_initial_point(obj, 0.0, 1).unwrap(), theta);
    }
}

#[test]
fn manifest_restores_the_suite() {
    let suite = make_gp_sample_suite(2, 3, 9, config(), Execution::Parallel).unwrap();
    let manifest = SuiteManifest::from_suite(&suite).unwrap();
    let restored = SuiteManifest::from_json(&manifest.to_json())
        .unwrap()
        .objectives()
        .unwrap();
    for (a, b) in suite.iter().zip(&restored) {
        assert_eq!(a.known_optimum(), b.known_optimum());
        assert_eq!(a.value(&[0.3, 0.1]).unwrap(), b.value(&[0.3, 0.1]).unwrap());
    }
}

/// Pendulum rollout written out separately from the library.
fn reference_return(cfg: &PendulumConfig, k: [f64; 2], angle0: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let (mut angle, mut vel, mut total) = (angle0, 0.0f64, 0.0);
    for _ in 0..cfg.horizon {
        let u = (-(k[0] * angle + k[1] * vel)).clamp(-cfg.max_torque, cfg.max_torque);
        total += angle.cos() - cfg.action_penalty * u * u;
        let acc = cfg.gravity / cfg.length * angle.sin() + u / (cfg.mass * cfg.length * cfg.length);
        vel += cfg.dt * acc;
        angle += cfg.dt * vel;
        angle = (angle + pi).rem_euclid(2.0 * pi) - pi;
        if angle == -pi {
            angle = pi;
        }
    }
    total
}

#[test]
fn pendulum_matches_reference_rollout() {
    let cfg = PendulumConfig::default();
    let p = ToyPendulumObjective::new(cfg, 4).unwrap();
    for k in [[0.0, 0.0], [12.0, 3.0], [25.0, 8.0]] {
        let got = p.noiseless(&k).unwrap();
        let want = reference_return(&cfg, k, cfg.initial_angle);
        assert!((got - want).abs() < 1e-9, "{k:?}: {got} vs {want}");
    }
}

#[test]
fn pendulum_without_jitter_ignores_noise_seed() {
    let cfg = PendulumConfig {
        angle_jitter: 0.0,
        with_bias: true,
        ..Default::default()
    };
    let mut a = ToyPendulumObjective::new(cfg, 1).unwrap();
    let mut b = ToyPendulumObjective::new(cfg, 12345).unwrap();
    for theta in [[5.0, 1.0, 0.0], [18.0, 4.0, -1.5]] {
        assert_eq!(a.evaluate(&theta).unwrap(), b.evaluate(&theta).unwrap());
    }
}
