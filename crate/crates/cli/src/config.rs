//! Experiment configuration: a TOML file, every field optional.
//!
//! ```toml
//! method = "crbo"
//! gammas = [0.2, 0.6]
//! repetitions = 1
//! workers = 0
//! output = "results"
//!
//! [benchmark]
//! suite = "gp5d"
//! realizations = 20
//!
//! [crbo]
//! budget = 100
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crbo::benchmarks::{GpSampleConfig, PendulumConfig};
use crbo::{CrboConfig, Method};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Suite {
    /// GP-sample test functions in the given dimension (`gp2d`, `gp5d`, ...).
    GpSample(usize),
    Pendulum,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "pendulum" {
            return Ok(Suite::Pendulum);
        }
        s.strip_prefix("gp")
            .and_then(|r| r.strip_suffix('d'))
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&d| d > 0)
            .map(Suite::GpSample)
            .ok_or_else(|| format!("unknown suite `{s}` (expected gp<dim>d, e.g. gp2d, or pendulum)"))
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Suite::GpSample(d) => write!(f, "gp{d}d"),
            Suite::Pendulum => f.write_str("pendulum"),
        }
    }
}

impl TryFrom<String> for Suite {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Suite> for String {
    fn from(s: Suite) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub suite: Suite,
    pub realizations: usize,
    /// Seed of the first realization; the others follow consecutively.
    pub seed: u64,
    /// Distance of the start point from the optimum (GP-sample suites).
    pub initial_distance: f64,
    pub gp_sample: GpSampleConfig,
    pub pendulum: PendulumConfig,
    /// Start point of pendulum runs; the box center when absent.
    pub pendulum_start: Option<Vec<f64>>,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            suite: Suite::GpSample(2),
            realizations: 20,
            seed: 0,
            initial_distance: 0.3,
            gp_sample: GpSampleConfig::default(),
            pendulum: PendulumConfig::default(),
            pendulum_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Confidence parameters to sweep. Empty means `[crbo.gamma]`.
    pub gammas: Vec<f64>,
    pub repetitions: usize,
    /// Size of the run worker pool; 0 uses every logical core.
    pub workers: usize,
    pub output: PathBuf,
    pub benchmark: BenchmarkSpec,
    pub crbo: CrboConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Crbo,
            gammas: Vec::new(),
            repetitions: 1,
            workers: 0,
            output: PathBuf::from("results"),
            benchmark: BenchmarkSpec::default(),
            crbo: CrboConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub gammas: Option<Vec<f64>>,
    pub suite: Option<Suite>,
    pub budget: Option<usize>,
    pub repetitions: Option<usize>,
    pub realizations: Option<usize>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(g) = &o.gammas {
            self.gammas = g.clone();
        }
        if let Some(s) = o.suite {
            self.benchmark.suite = s;
        }
        if let Some(b) = o.budget {
            self.crbo.budget = b;
        }
        if let Some(r) = o.repetitions {
            self.repetitions = r;
        }
        if let Some(r) = o.realizations {
            self.benchmark.realizations = r;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(s) = o.seed {
            self.crbo.seed = s;
        }
        if let Some(p) = &o.output {
            self.output = p.clone();
        }
    }

    pub fn gamma_list(&self) -> Vec<f64> {
        if self.gammas.is_empty() {
            vec![self.crbo.gamma]
        } else {
            self.gammas.clone()
        }
    }

    pub fn dim(&self) -> usize {
        match self.benchmark.suite {
            Suite::GpSample(d) => d,
            Suite::Pendulum => 2 + usize::from(self.benchmark.pendulum.with_bias),
        }
    }

    /// Semantic checks; messages name the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        for (i, g) in self.gamma_list().iter().enumerate() {
            if !(*g > 0.0 && *g <= 1.0) {
                let field = if self.gammas.is_empty() {
                    "crbo.gamma".to_string()
                } else {
                    format!("gammas[{i}]")
                };
                return bad(&field, format!("{g} is outside (0, 1]"));
            }
        }
        if self.repetitions == 0 {
            return bad("repetitions", "must be positive".into());
        }
        if self.benchmark.realizations == 0 {
            return bad("benchmark.realizations", "must be positive".into());
        }
        if !(self.benchmark.initial_distance >= 0.0 && self.benchmark.initial_distance.is_finite()) {
            return bad("benchmark.initial_distance", "must be a nonnegative number".into());
        }
        if let (Suite::Pendulum, Some(p)) = (self.benchmark.suite, &self.benchmark.pendulum_start) {
            if p.len() != self.dim() {
                return bad(
                    "benchmark.pendulum_start",
                    format!("has {} entries, the policy has {}", p.len(), self.dim()),
                );
            }
        }
        self.crbo.validate(self.dim()).or_else(|e| bad("crbo", e.to_string()))
    }
}
