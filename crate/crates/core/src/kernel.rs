//! Stationary isotropic covariance functions.

use serde::{Deserialize, Serialize};

use crate::data::sq_dist;
use crate::error::{check_dim, contract, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern52,
    SquaredExponential,
}

/// Kernel family plus its signal variance and shared lengthscale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub signal_variance: f64,
    pub lengthscale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, signal_variance: f64, lengthscale: f64) -> Result<Self> {
        let spec = Self {
            family,
            signal_variance,
            lengthscale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn matern52(signal_variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern52, signal_variance, lengthscale)
    }

    pub fn squared_exponential(signal_variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, signal_variance, lengthscale)
    }

    pub fn validate(&self) -> Result<()> {
        contract!(
            self.signal_variance.is_finite() && self.signal_variance > 0.0,
            "signal variance must be positive, got {}",
            self.signal_variance
        );
        contract!(
            self.lengthscale.is_finite() && self.lengthscale > 0.0,
            "lengthscale must be positive, got {}",
            self.lengthscale
        );
        Ok(())
    }

    pub fn signal_std(&self) -> f64 {
        self.signal_variance.sqrt()
    }

    /// k(a, b).
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(a.len(), b.len())?;
        Ok(self.eval_sq_dist(sq_dist(a, b)))
    }

    /// Covariance as a function of the distance `r = |a - b|`.
    pub fn eval_distance(&self, r: f64) -> f64 {
        self.eval_sq_dist(r * r)
    }

    pub(crate) fn eval_sq_dist(&self, r2: f64) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => self.signal_variance * (-0.5 * r2 / (l * l)).exp(),
            KernelFamily::Matern52 => {
                let s = SQRT5 * r2.sqrt() / l;
                self.signal_variance * (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// Scalar `g(r)` such that `dk(a, b)/da = g(r) * (a - b)`. Finite at `r = 0`.
    pub(crate) fn radial_grad_factor(&self, r2: f64) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => -self.eval_sq_dist(r2) / (l * l),
            KernelFamily::Matern52 => {
                let s = SQRT5 * r2.sqrt() / l;
                -self.signal_variance * 5.0 / (3.0 * l * l) * (1.0 + s) * (-s).exp()
            }
        }
    }

    /// Gradient of k(a, b) with respect to `a`.
    pub fn grad_first(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        check_dim(a.len(), b.len())?;
        let g = self.radial_grad_factor(sq_dist(a, b));
        Ok(a.iter().zip(b).map(|(x, y)| g * (x - y)).collect())
    }

    /// dk/d(log lengthscale) at squared distance `r2`.
    pub(crate) fn d_log_lengthscale(&self, r2: f64) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => self.eval_sq_dist(r2) * r2 / (l * l),
            KernelFamily::Matern52 => {
                let s = SQRT5 * r2.sqrt() / l;
                self.signal_variance * s * s * (1.0 + s) / 3.0 * (-s).exp()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_lag_is_signal_variance() {
        let se = KernelSpec::squared_exponential(1.0, 0.3).unwrap();
        assert_eq!(se.eval(&[0.2, -0.1], &[0.2, -0.1]).unwrap(), 1.0);
        let m = KernelSpec::matern52(2.0, 0.7).unwrap();
        assert_eq!(m.eval(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 2.0);
    }

    #[test]
    fn se_at_one_lengthscale() {
        let se = KernelSpec::squared_exponential(1.0, 0.3).unwrap();
        // |a - b| = 0.3 along a diagonal direction
        let d = 0.3 / 2f64.sqrt();
        let k = se.eval(&[0.0, 0.0], &[d, d]).unwrap();
        assert_relative_eq!(k, (-0.5f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(k, 0.606_530_659_712_633, max_relative = 1e-12);
    }

    #[test]
    fn matern_matches_textbook_form() {
        let m = KernelSpec::matern52(1.5, 0.4).unwrap();
        let r: f64 = 0.55;
        let z = 5f64.sqrt() * r / 0.4;
        let expected = 1.5 * (1.0 + z + 5.0 * r * r / (3.0 * 0.16)) * (-z).exp();
        assert_relative_eq!(m.eval_distance(r), expected, max_relative = 1e-13);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = KernelSpec::matern52(1.0, 1.0).unwrap();
        assert!(m.eval(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(KernelSpec::matern52(0.0, 1.0).is_err());
        assert!(KernelSpec::matern52(1.0, -1.0).is_err());
    }

    #[test]
    fn lengthscale_derivative_matches_finite_difference() {
        for family in [KernelFamily::Matern52, KernelFamily::SquaredExponential] {
            for &r2 in &[0.0, 0.01, 0.2, 1.3] {
                let k = KernelSpec::new(family, 1.7, 0.45).unwrap();
                let h: f64 = 1e-6;
                let mut up = k;
                up.lengthscale = 0.45 * h.exp();
                let mut dn = k;
                dn.lengthscale = 0.45 * (-h).exp();
                let fd = (up.eval_sq_dist(r2) - dn.eval_sq_dist(r2)) / (2.0 * h);
                assert!((fd - k.d_log_lengthscale(r2)).abs() < 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric(a in prop::collection::vec(-2.0..2.0f64, 3),
                     b in prop::collection::vec(-2.0..2.0f64, 3),
                     l in 0.05..3.0f64, matern in any::<bool>()) {
            let family = if matern { KernelFamily::Matern52 } else { KernelFamily::SquaredExponential };
            let k = KernelSpec::new(family, 1.3, l).unwrap();
            prop_assert_eq!(k.eval(&a, &b).unwrap(), k.eval(&b, &a).unwrap());
        }
    }
}
