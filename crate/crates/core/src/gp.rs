//! Exact Gaussian-process regression with a constant (offset) prior mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, Dataset};
use crate::error::{check_dim, contract, CrboError, Result};
use crate::kernel::KernelSpec;

/// Initial jitter relative to the signal variance.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up on the factorization.
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
}

impl GpHyperparams {
    pub fn new(kernel: KernelSpec, noise_variance: f64) -> Result<Self> {
        let hp = Self { kernel, noise_variance };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        contract!(
            self.noise_variance.is_finite() && self.noise_variance >= 0.0,
            "noise variance must be nonnegative, got {}",
            self.noise_variance
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Gradients of the posterior mean and standard deviation at a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGradients {
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
}

/// A fitted posterior. Immutable after [`GpModel::fit`].
#[derive(Debug, Clone)]
pub struct GpModel {
    hyperparams: GpHyperparams,
    data: Dataset,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    value_offset: f64,
    jitter: f64,
}

/// Covariance matrix of the training inputs with `diag` added to the diagonal.
pub(crate) fn gram(kernel: &KernelSpec, points: &[Vec<f64>], diag: f64) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kernel.eval_sq_dist(sq_dist(&points[i], &points[j]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(j, j)] += diag;
    }
    k
}

/// Cholesky factorization with escalating jitter. Returns the lower factor
/// and the jitter that was needed.
pub(crate) fn factorize(kernel: &KernelSpec, points: &[Vec<f64>], noise_variance: f64) -> Result<(DMatrix<f64>, f64)> {
    let sf2 = kernel.signal_variance;
    let mut jitter = JITTER_START * sf2;
    loop {
        let k = gram(kernel, points, noise_variance + jitter);
        if let Some(chol) = k.cholesky() {
            return Ok((chol.unpack(), jitter));
        }
        if jitter >= JITTER_MAX * sf2 * (1.0 - 1e-12) {
            return Err(CrboError::Factorization {
                jitter,
                reason: format!("covariance of {} points not positive definite", points.len()),
            });
        }
        jitter *= 10.0;
    }
}

/// In-place forward substitution `L x = b` for column-major lower-triangular `L`.
pub(crate) fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for j in 0..n {
        let col = l.column(j);
        let xj = b[j] / col[j];
        b[j] = xj;
        for i in j + 1..n {
            b[i] -= col[i] * xj;
        }
    }
}

/// In-place back substitution `L^T x = b`.
pub(crate) fn solve_upper_transposed_in_place(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for j in (0..n).rev() {
        let col = l.column(j);
        let mut s = b[j];
        for i in j + 1..n {
            s -= col[i] * b[i];
        }
        b[j] = s / col[j];
    }
}

impl GpModel {
    /// Condition the GP on `data`. An empty dataset yields the prior.
    pub fn fit(data: &Dataset, hyperparams: GpHyperparams) -> Result<Self> {
        Self::fit_with_offset(data, hyperparams, 0.0)
    }

    /// Like [`GpModel::fit`], with `value_offset` added to every predicted mean.
    /// The observations in `data` are used as-is.
    pub fn fit_with_offset(data: &Dataset, hyperparams: GpHyperparams, value_offset: f64) -> Result<Self> {
        hyperparams.validate()?;
        let (chol, jitter) = factorize(&hyperparams.kernel, data.points(), hyperparams.noise_variance)?;
        let mut alpha = data.values().to_vec();
        solve_lower_in_place(&chol, &mut alpha);
        solve_upper_transposed_in_place(&chol, &mut alpha);
        Ok(Self {
            hyperparams,
            data: data.clone(),
            chol,
            alpha: DVector::from_vec(alpha),
            value_offset,
            jitter,
        })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.hyperparams.kernel
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn value_offset(&self) -> f64 {
        self.value_offset
    }

    /// Jitter added on top of the noise variance to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Noise variance actually on the diagonal of K (noise plus jitter).
    pub fn effective_noise(&self) -> f64 {
        self.hyperparams.noise_variance + self.jitter
    }

    pub fn signal_std(&self) -> f64 {
        self.hyperparams.kernel.signal_std()
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    fn cross_cov(&self, q: &[f64]) -> Vec<f64> {
        let kernel = &self.hyperparams.kernel;
        self.data
            .points()
            .iter()
            .map(|p| kernel.eval_sq_dist(sq_dist(q, p)))
            .collect()
    }

    fn clamp_variance(&self, var: f64) -> f64 {
        var.clamp(0.0, self.hyperparams.kernel.signal_variance)
    }

    /// Posterior mean and variance at `q`.
    pub fn predict(&self, q: &[f64]) -> Result<Prediction> {
        let mut p = self.predict_centered(q)?;
        p.mean += self.value_offset;
        Ok(p)
    }

    /// As [`predict`](Self::predict), without the value offset.
    pub(crate) fn predict_centered(&self, q: &[f64]) -> Result<Prediction> {
        check_dim(self.dim(), q.len())?;
        let mut v = self.cross_cov(q);
        let mean = v.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum::<f64>();
        solve_lower_in_place(&self.chol, &mut v);
        let var = self.hyperparams.kernel.signal_variance - v.iter().map(|x| x * x).sum::<f64>();
        Ok(Prediction {
            mean,
            variance: self.clamp_variance(var),
        })
    }

    /// Posterior standard deviation only (skips the mean).
    pub fn std_dev(&self, q: &[f64]) -> Result<f64> {
        check_dim(self.dim(), q.len())?;
        let mut v = self.cross_cov(q);
        solve_lower_in_place(&self.chol, &mut v);
        let var = self.hyperparams.kernel.signal_variance - v.iter().map(|x| x * x).sum::<f64>();
        Ok(self.clamp_variance(var).sqrt())
    }

    /// Analytic gradients of the posterior mean and standard deviation.
    ///
    /// Where the clamped standard deviation is exactly zero the gradient of
    /// the standard deviation is reported as the zero vector.
    pub fn predict_gradients(&self, q: &[f64]) -> Result<(Prediction, PredictionGradients)> {
        let (mut p, g) = self.predict_gradients_centered(q)?;
        p.mean += self.value_offset;
        Ok((p, g))
    }

    pub(crate) fn predict_gradients_centered(&self, q: &[f64]) -> Result<(Prediction, PredictionGradients)> {
        check_dim(self.dim(), q.len())?;
        let d = self.dim();
        let kernel = &self.hyperparams.kernel;
        let k = self.cross_cov(q);
        // w = K^{-1} k
        let mut w = k.clone();
        solve_lower_in_place(&self.chol, &mut w);
        let var_raw = kernel.signal_variance - w.iter().map(|x| x * x).sum::<f64>();
        solve_upper_transposed_in_place(&self.chol, &mut w);

        let mean = k.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum::<f64>();
        let mut dmean = vec![0.0; d];
        let mut dvar = vec![0.0; d];
        for ((p, a), wi) in self.data.points().iter().zip(self.alpha.iter()).zip(&w) {
            let g = kernel.radial_grad_factor(sq_dist(q, p));
            let cm = g * a;
            let cv = -2.0 * g * wi;
            for j in 0..d {
                let diff = q[j] - p[j];
                dmean[j] += cm * diff;
                dvar[j] += cv * diff;
            }
        }
        let variance = self.clamp_variance(var_raw);
        let std = variance.sqrt();
        let dstd = if std > 0.0 {
            dvar.iter().map(|g| g / (2.0 * std)).collect()
        } else {
            vec![0.0; d]
        };
        Ok((
            Prediction { mean, variance },
            PredictionGradients {
                mean: dmean,
                std_dev: dstd,
            },
        ))
    }
}
