//! Confidence-region Bayesian optimization.
//!
//! A GP surrogate is fitted to the evaluations so far, and the next point is
//! the UCB maximizer over the set where the posterior standard deviation is
//! at most `gamma * sigma_f`. Small `gamma` keeps the search close to the
//! data; `gamma = 1` is standard box-constrained BO.
//!
//! ```no_run
//! use crbo::benchmarks::{GpSampleConfig, GpSampleObjective, sample_initial_point};
//! use crbo::optimizer::{run_crbo, CrboConfig};
//! use crbo::par::Execution;
//!
//! let mut obj = GpSampleObjective::new(2, 7, GpSampleConfig::default()).unwrap();
//! obj.search_optimum(Execution::Parallel).unwrap();
//! let theta0 = sample_initial_point(&obj, 0.3, 7).unwrap();
//! let record = run_crbo(&mut obj, &theta0, &CrboConfig { budget: 30, ..Default::default() }).unwrap();
//! println!("final regret {:?}", record.simple_regret.unwrap().last());
//! ```

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod benchmarks;
pub mod data;
pub mod error;
pub mod gp;
pub mod hyper;
pub mod kernel;
pub mod metrics;
pub mod objective;
mod optim;
pub mod optimizer;
pub mod par;
mod qp;
pub mod record;
pub mod region;
pub mod sampler;

pub use data::{BoxBounds, Dataset};
pub use error::{CrboError, Result};
pub use gp::{GpHyperparams, GpModel};
pub use kernel::{KernelFamily, KernelSpec};
pub use objective::Objective;
pub use optimizer::{run_crbo, run_standard_bo, CrboConfig};
pub use record::{Method, RunRecord};
