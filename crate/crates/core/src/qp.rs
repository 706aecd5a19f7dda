//! Dense QP subproblems for the constrained acquisition refinement:
//! box-constrained convex QPs and their extension by a single linear
//! inequality through a one-dimensional dual search.

use nalgebra::{DMatrix, DVector};

/// Minimize `q^T p + 1/2 p^T B p` subject to `lo <= p <= hi` with a primal
/// active-set method. `B` must be symmetric positive definite and
/// `lo <= 0 <= hi` so that `p = 0` is a feasible start.
pub(crate) fn box_qp(b: &DMatrix<f64>, q: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = q.len();
    let mut p: Vec<f64> = (0..n).map(|i| 0f64.clamp(lo[i], hi[i])).collect();
    // 0 = free, -1 = at lower, +1 = at upper
    let mut state = vec![0i8; n];
    for i in 0..n {
        if hi[i] - lo[i] <= 0.0 {
            state[i] = -1;
            p[i] = lo[i];
        }
    }
    for _ in 0..(4 * n + 20) {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        // Newton target on the free variables with the active ones fixed
        let mut target = p.clone();
        if !free.is_empty() {
            let m = free.len();
            let mut bff = DMatrix::zeros(m, m);
            let mut rhs = DVector::zeros(m);
            for (a, &i) in free.iter().enumerate() {
                let mut r = -q[i];
                for j in 0..n {
                    if state[j] != 0 {
                        r -= b[(i, j)] * p[j];
                    }
                }
                rhs[a] = r;
                for (c, &j) in free.iter().enumerate() {
                    bff[(a, c)] = b[(i, j)];
                }
            }
            let sol = match bff.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => return p,
            };
            for (a, &i) in free.iter().enumerate() {
                target[i] = sol[a];
            }
        }
        // largest feasible fraction of the move towards the target
        let mut frac = 1.0;
        let mut blocking = None;
        for &i in &free {
            let d = target[i] - p[i];
            if d > 0.0 && target[i] > hi[i] {
                let f = (hi[i] - p[i]) / d;
                if f < frac {
                    frac = f;
                    blocking = Some((i, 1i8));
                }
            } else if d < 0.0 && target[i] < lo[i] {
                let f = (lo[i] - p[i]) / d;
                if f < frac {
                    frac = f;
                    blocking = Some((i, -1i8));
                }
            }
        }
        for &i in &free {
            p[i] += frac * (target[i] - p[i]);
        }
        if let Some((i, side)) = blocking {
            state[i] = side;
            p[i] = if side > 0 { hi[i] } else { lo[i] };
            continue;
        }
        // optimal on the current face: check multipliers of active bounds
        let grad: Vec<f64> = (0..n)
            .map(|i| q[i] + (0..n).map(|j| b[(i, j)] * p[j]).sum::<f64>())
            .collect();
        let mut worst = None;
        let mut worst_val = 1e-14;
        for i in 0..n {
            let wrong = match state[i] {
                -1 if hi[i] > lo[i] => -grad[i],
                1 => grad[i],
                _ => 0.0,
            };
            if wrong > worst_val {
                worst_val = wrong;
                worst = Some(i);
            }
        }
        match worst {
            Some(i) => state[i] = 0,
            None => return p,
        }
    }
    p
}

/// Minimize `g^T p + 1/2 p^T B p` subject to `lo <= p <= hi` and
/// `c + a^T p <= 0`. Returns the step and the multiplier of the linear
/// constraint. When the linearization cannot be satisfied inside the box
/// the step with the largest multiplier tried is returned.
pub(crate) fn box_qp_with_linear(
    b: &DMatrix<f64>,
    g: &[f64],
    lo: &[f64],
    hi: &[f64],
    a: &[f64],
    c: f64,
) -> (Vec<f64>, f64) {
    let shifted = |lambda: f64| -> Vec<f64> { g.iter().zip(a).map(|(gi, ai)| gi + lambda * ai).collect() };
    let residual = |p: &[f64]| c + a.iter().zip(p).map(|(x, y)| x * y).sum::<f64>();

    let p0 = box_qp(b, g, lo, hi);
    if residual(&p0) <= 0.0 {
        return (p0, 0.0);
    }
    let mut lam_lo = 0.0;
    let mut lam_hi = 1.0;
    let mut p_hi = box_qp(b, &shifted(lam_hi), lo, hi);
    while residual(&p_hi) > 0.0 {
        lam_lo = lam_hi;
        lam_hi *= 4.0;
        p_hi = box_qp(b, &shifted(lam_hi), lo, hi);
        if lam_hi > 1e12 {
            return (p_hi, lam_hi);
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lam_lo + lam_hi);
        let p = box_qp(b, &shifted(mid), lo, hi);
        if residual(&p) > 0.0 {
            lam_lo = mid;
        } else {
            lam_hi = mid;
            p_hi = p;
        }
        if lam_hi - lam_lo <= 1e-14 * lam_hi {
            break;
        }
    }
    (p_hi, lam_hi)
}
