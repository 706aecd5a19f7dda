//! Small dense quasi-Newton minimizer with box bounds, used for
//! hyperparameter fitting and for the benchmark optimum search.

#[derive(Debug, Clone)]
pub(crate) struct BoundedBfgs {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Largest step (Euclidean) a single line search may take.
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

/// Relative size of a value change treated as indistinguishable from zero.
const ROUNDOFF: f64 = 1e-13;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BoundedBfgs {
    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (xi, gi))| {
                if (*xi <= self.lower[i] && *gi > 0.0) || (*xi >= self.upper[i] && *gi < 0.0) {
                    0.0
                } else {
                    *gi
                }
            })
            .collect()
    }

    /// Minimize `f`, which returns value and gradient or `None` where the
    /// objective is undefined. Returns `None` if `f` fails at the start.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Option<Minimum>
    where
        F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    {
        let n = x0.len();
        let mut x = x0.to_vec();
        self.clamp(&mut x);
        let (mut fx, mut g) = f(&x)?;
        if !fx.is_finite() {
            return None;
        }
        let identity = || {
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                h[i * n + i] = 1.0;
            }
            h
        };
        let mut h = identity();
        let mut fresh = true;

        for _ in 0..self.max_iters {
            let pg = self.projected_gradient(&x, &g);
            if dot(&pg, &pg).sqrt() < self.grad_tol {
                return Some(Minimum {
                    x,
                    value: fx,
                    converged: true,
                });
            }
            let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();
            let mut p = vec![0.0; n];
            for i in 0..n {
                if !free[i] {
                    continue;
                }
                for j in 0..n {
                    if free[j] {
                        p[i] -= h[i * n + j] * g[j];
                    }
                }
            }
            if dot(&p, &pg) >= 0.0 {
                h = identity();
                fresh = true;
                p = pg.iter().map(|v| -v).collect();
            }
            let pn = dot(&p, &p).sqrt();
            if pn > self.max_step {
                p.iter_mut().for_each(|v| *v *= self.max_step / pn);
            }

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let mut xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
                self.clamp(&mut xn);
                let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &step);
                if let Some((fy, gy)) = f(&xn) {
                    let armijo = fy <= fx + 1e-4 * decrease.min(0.0) && fy <= fx;
                    // near the optimum the value change drowns in round-off;
                    // fall back to requiring a smaller projected gradient
                    let flat = (fy - fx).abs() <= ROUNDOFF * (1.0 + fx.abs()) && {
                        let pgn = self.projected_gradient(&xn, &gy);
                        dot(&pgn, &pgn) < dot(&pg, &pg)
                    };
                    if fy.is_finite() && (armijo || flat) {
                        accepted = Some((xn, fy, gy, step));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((xn, fy, gy, s)) = accepted else {
                if fresh {
                    return Some(Minimum {
                        x,
                        value: fx,
                        converged: false,
                    });
                }
                h = identity();
                fresh = true;
                continue;
            };
            let y: Vec<f64> = gy.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
                let rho = 1.0 / sy;
                let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
                let yhy = dot(&y, &hy);
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
                fresh = false;
            }
            let stalled = (fx - fy).abs() <= 1e-15 * fx.abs().max(1.0) && dot(&s, &s).sqrt() < 1e-14;
            x = xn;
            fx = fy;
            g = gy;
            if stalled {
                let pg = self.projected_gradient(&x, &g);
                return Some(Minimum {
                    converged: dot(&pg, &pg).sqrt() < self.grad_tol,
                    x,
                    value: fx,
                });
            }
        }
        let pg = self.projected_gradient(&x, &g);
        Some(Minimum {
            converged: dot(&pg, &pg).sqrt() < self.grad_tol,
            x,
            value: fx,
        })
    }
}
