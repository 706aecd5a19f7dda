//! The `run` subcommand: every (gamma, realization, repetition) combination
//! on a bounded worker pool, one record file per run, then the tables.

use std::path::Path;

use rayon::prelude::*;

use crbo::benchmarks::{
    make_gp_sample_suite, sample_initial_point, GpSampleObjective, SuiteManifest, ToyPendulumObjective,
};
use crbo::optimizer::run_method;
use crbo::{CrboConfig, Objective, RunRecord};

use crate::config::{ExperimentConfig, Suite};
use crate::error::CliError;
use crate::report::{group_stem, render, summarize, write_tables, RUNS_DIR};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "suite.json";

enum Objectives {
    GpSample(Vec<GpSampleObjective>),
    Pendulum(Vec<ToyPendulumObjective>),
}

#[derive(Debug, Clone, Copy)]
struct Job {
    gamma: f64,
    realization: usize,
    repetition: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub written: usize,
    /// Runs that failed or stopped early, with the reason.
    pub failures: Vec<String>,
    pub summary: String,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        u8::from(!self.failures.is_empty())
    }
}

fn build_objectives(cfg: &ExperimentConfig, out: &Path) -> Result<Objectives, CliError> {
    let b = &cfg.benchmark;
    Ok(match b.suite {
        Suite::GpSample(dim) => {
            let suite = make_gp_sample_suite(dim, b.realizations, b.seed, b.gp_sample, cfg.crbo.execution)?;
            std::fs::write(out.join(MANIFEST_FILE), SuiteManifest::from_suite(&suite)?.to_json())?;
            Objectives::GpSample(suite)
        }
        Suite::Pendulum => Objectives::Pendulum(
            (0..b.realizations)
                .map(|i| ToyPendulumObjective::new(b.pendulum, b.seed.wrapping_add(i as u64)))
                .collect::<crbo::Result<_>>()?,
        ),
    })
}

fn run_seed(cfg: &ExperimentConfig, job: &Job) -> u64 {
    cfg.crbo
        .seed
        .wrapping_add((job.realization * cfg.repetitions + job.repetition) as u64)
}

fn execute(cfg: &ExperimentConfig, objectives: &Objectives, job: &Job) -> crbo::Result<RunRecord> {
    let seed = run_seed(cfg, job);
    let run_cfg = CrboConfig {
        gamma: job.gamma,
        seed,
        ..cfg.crbo.clone()
    };
    match objectives {
        Objectives::GpSample(suite) => {
            let mut obj = suite[job.realization].clone();
            let theta0 = sample_initial_point(&obj, cfg.benchmark.initial_distance, seed ^ 0x7468_6574_6130)?;
            run_method(&mut obj, &theta0, &run_cfg, cfg.method)
        }
        Objectives::Pendulum(list) => {
            let mut obj = list[job.realization].clone();
            let theta0 = cfg
                .benchmark
                .pendulum_start
                .clone()
                .unwrap_or_else(|| obj.bounds().center());
            run_method(&mut obj, &theta0, &run_cfg, cfg.method)
        }
    }
}

pub fn record_file_name(cfg: &ExperimentConfig, gamma: f64, realization: usize, repetition: usize) -> String {
    format!(
        "{}_r{realization:03}_rep{repetition:02}.json",
        group_stem(cfg.method, gamma)
    )
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let out = cfg.output.as_path();
    let runs_dir = out.join(RUNS_DIR);
    std::fs::create_dir_all(&runs_dir)?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_toml())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("workers: {e}")))?;

    let jobs: Vec<Job> = cfg
        .gamma_list()
        .into_iter()
        .flat_map(|gamma| {
            (0..cfg.benchmark.realizations).flat_map(move |realization| {
                (0..cfg.repetitions).map(move |repetition| Job {
                    gamma,
                    realization,
                    repetition,
                })
            })
        })
        .collect();

    let results: Vec<crbo::Result<RunRecord>> = pool.install(|| {
        let objectives = build_objectives(cfg, out)?;
        Ok::<_, CliError>(jobs.par_iter().map(|j| execute(cfg, &objectives, j)).collect())
    })?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let name = record_file_name(cfg, job.gamma, job.realization, job.repetition);
        match result {
            Ok(record) => {
                std::fs::write(runs_dir.join(&name), record.to_json())?;
                if !record.complete {
                    failures.push(format!(
                        "{name}: stopped after {} evaluations: {}",
                        record.observations.len(),
                        record.error.as_deref().unwrap_or("unknown error")
                    ));
                }
                records.push(record);
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }

    let summary = if records.iter().any(|r| r.complete) {
        let (groups, incomplete) = summarize(&records)?;
        write_tables(out, &groups)?;
        render(&groups, incomplete)
    } else {
        String::new()
    };
    Ok(RunOutcome {
        written: records.len(),
        failures,
        summary,
    })
}
