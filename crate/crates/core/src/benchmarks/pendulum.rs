//! Inverted pendulum with a linear state-feedback policy. The episode
//! return is the sum of per-step rewards; the initial angle is jittered to
//! make the return noisy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::BoxBounds;
use crate::error::{check_dim, contract, Result};
use crate::objective::Objective;
use crate::sampler::chain_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumConfig {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub horizon: usize,
    pub max_torque: f64,
    /// Nominal initial angle from upright (radians).
    pub initial_angle: f64,
    /// Standard deviation of the initial-angle jitter.
    pub angle_jitter: f64,
    pub action_penalty: f64,
    /// Adds a constant torque term as third policy parameter.
    pub with_bias: bool,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            dt: 0.05,
            horizon: 100,
            max_torque: 20.0,
            initial_angle: 0.3,
            angle_jitter: 0.05,
            action_penalty: 1e-3,
            with_bias: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyPendulumObjective {
    config: PendulumConfig,
    bounds: BoxBounds,
    seed: u64,
    noise: ChaCha8Rng,
}

impl ToyPendulumObjective {
    /// Gains live in `[0, 30] x [0, 10]` (plus `[-5, 5]` for the bias).
    pub fn new(config: PendulumConfig, seed: u64) -> Result<Self> {
        contract!(config.dt > 0.0 && config.horizon > 0, "invalid time discretization");
        contract!(config.mass > 0.0 && config.length > 0.0, "invalid pendulum constants");
        let (mut lo, mut hi) = (vec![0.0, 0.0], vec![30.0, 10.0]);
        if config.with_bias {
            lo.push(-5.0);
            hi.push(5.0);
        }
        Ok(Self {
            config,
            bounds: BoxBounds::new(lo, hi)?,
            seed,
            noise: chain_rng(seed, 2),
        })
    }

    pub fn config(&self) -> &PendulumConfig {
        &self.config
    }

    /// Reward of one step: uprightness minus a quadratic torque penalty.
    pub fn reward(&self, angle: f64, torque: f64) -> f64 {
        angle.cos() - self.config.action_penalty * torque * torque
    }

    /// Return of one episode from the given initial angle.
    pub fn episode_return(&self, theta: &[f64], initial_angle: f64) -> Result<f64> {
        check_dim(self.bounds.dim(), theta.len())?;
        let c = &self.config;
        let inertia = c.mass * c.length * c.length;
        let bias = if c.with_bias { theta[2] } else { 0.0 };
        let (mut angle, mut velocity) = (initial_angle, 0.0);
        let mut total = 0.0;
        for _ in 0..c.horizon {
            let torque = (-(theta[0] * angle + theta[1] * velocity) + bias).clamp(-c.max_torque, c.max_torque);
            total += self.reward(angle, torque);
            velocity += c.dt * (c.gravity / c.length * angle.sin() + torque / inertia);
            angle += c.dt * velocity;
            angle = wrap_angle(angle);
        }
        Ok(total)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

impl Objective for ToyPendulumObjective {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<f64> {
        let jitter: f64 = self.noise.sample(StandardNormal);
        let angle = self.config.initial_angle + self.config.angle_jitter * jitter;
        self.episode_return(theta, angle)
    }

    fn noiseless(&self, theta: &[f64]) -> Option<f64> {
        self.episode_return(theta, self.config.initial_angle).ok()
    }
}

impl ToyPendulumObjective {
    pub fn seed(&self) -> u64 {
        self.seed
    }
}
