//! Conjugate gradients for symmetric positive definite operators given as closures.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final ‖b − Ax‖_∞.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::stats::pairwise_sum_by(a.len(), |i| a[i] * b[i])
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solve Ax = b starting from `x`, stopping when ‖b − Ax‖_∞ ≤ tol.
pub fn cg(
    what: &'static str,
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut res = sup(&r);
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgOutcome {
                iterations: it,
                residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Singular(format!("{what}: operator not positive definite")));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // Recompute the true residual now and then to stop drift.
        if it % 50 == 49 {
            apply(x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        let rr_new = dot(&r, &r);
        res = sup(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if res <= tol {
        return Ok(CgOutcome {
            iterations: max_iter,
            residual: res,
        });
    }
    Err(Error::NoConvergence {
        what,
        iterations: max_iter,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal() {
        let n = 200;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.5 * x[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let out = cg("test", apply, &b, &mut x, 1e-12, 1000).unwrap();
        assert!(out.residual <= 1e-12);
        let mut y = vec![0.0; n];
        apply(&x, &mut y);
        for i in 0..n {
            assert!((y[i] - b[i]).abs() < 1e-11);
        }
    }
}
