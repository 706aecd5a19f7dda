//! Compare the two methods on a handful of GP-sample objectives.
//!
//! cargo run --release --example quick_run -- <dim> <count> <budget>

use std::time::Instant;

use crbo::benchmarks::{make_gp_sample_suite, sample_initial_point, GpSampleConfig};
use crbo::metrics::aggregate_curves;
use crbo::optimizer::{run_crbo, run_standard_bo, CrboConfig};
use crbo::par::Execution;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (dim, count, budget) = (args[0], args[1], args[2]);
    let t = Instant::now();
    let suite = make_gp_sample_suite(dim, count, 100, GpSampleConfig::default(), Execution::Parallel).unwrap();
    println!("suite in {:.1}s", t.elapsed().as_secs_f64());
    let cfg = CrboConfig {
        budget,
        ..Default::default()
    };
    let mut crbo = Vec::new();
    let mut sbo = Vec::new();
    for (i, o) in suite.iter().enumerate() {
        let theta0 = sample_initial_point(o, 0.3, i as u64).unwrap();
        let cfg = CrboConfig {
            seed: i as u64,
            ..cfg.clone()
        };
        let t = Instant::now();
        let a = run_crbo(&mut o.clone(), &theta0, &cfg).unwrap();
        let ta = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let b = run_standard_bo(&mut o.clone(), &theta0, &cfg).unwrap();
        let tb = t.elapsed().as_secs_f64();
        let ra = a.simple_regret.clone().unwrap();
        let rb = b.simple_regret.clone().unwrap();
        println!(
            "{i}: crbo {:.2e} -> {:.2e} ({ta:.1}s)  std {:.2e} -> {:.2e} ({tb:.1}s)  viol {:?}",
            ra[0],
            ra[budget - 1],
            rb[0],
            rb[budget - 1],
            a.verify_constraint(1e-6).unwrap().violations
        );
        crbo.push(ra);
        sbo.push(rb);
    }
    let ca = aggregate_curves(&crbo.iter().map(|v| v.as_slice()).collect::<Vec<_>>()).unwrap();
    let cb = aggregate_curves(&sbo.iter().map(|v| v.as_slice()).collect::<Vec<_>>()).unwrap();
    for n in [0, budget / 4, budget / 2, budget - 1] {
        println!(
            "n={}: crbo {:.3e} [{:.3e},{:.3e}]  std {:.3e} [{:.3e},{:.3e}]",
            n + 1,
            ca.median[n],
            ca.q25[n],
            ca.q75[n],
            cb.median[n],
            cb.q25[n],
            cb.q75[n]
        );
    }
}
