//! Benchmark objectives: GP-sample test functions and a toy pendulum
//! policy-search task.

mod gp_sample;
mod pendulum;

pub use gp_sample::{
    make_gp_sample_suite, sample_initial_point, GpSampleConfig, GpSampleObjective, SuiteEntry, SuiteManifest,
};
pub use pendulum::{PendulumConfig, ToyPendulumObjective};
