//! Principal and second eigenpairs of the killed kernel P_A, the spectral
//! survival surrogate, and eigenvalue deficits caused by obstacles.
//!
//! P_A is bipartite, so its spectrum is symmetric about 0 and plain power
//! iteration oscillates. All iterations run on the lazy kernel (I + P_A)/2,
//! which has the same eigenvectors and a nonnegative spectrum.

use crate::lattice::{Chain, Domain, Point, NONE};
use crate::potential::{capacity, GreenTable, SolverConfig};
use crate::stats::{compensated_sum, pairwise_sum_by};
use crate::walker::Trace;
use crate::{Error, Result};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 1_000_000;
/// Largest domain handled by dense eigendecomposition.
const DENSE_LIMIT: usize = 2000;
const LANCZOS_MAX: usize = 3000;
/// Residual checks are this many iterations apart.
const CHECK: usize = 16;

/// (λ_A, Φ_A) with Φ_A ≥ 0 and Σ Φ_A = 1.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub domain: Arc<Domain>,
    pub lambda: f64,
    /// One value per domain point, in index order.
    pub phi: Vec<f64>,
    /// max |P_A Φ − λ Φ|.
    pub residual: f64,
    pub lambda2: Option<f64>,
    pub iterations: usize,
}

impl EigenPair {
    pub fn phi_at(&self, x: &Point) -> f64 {
        self.domain.index_of(x).map_or(0.0, |i| self.phi[i as usize])
    }

    /// Σ Φ², compensated.
    pub fn phi_sq_sum(&self) -> f64 {
        compensated_sum(self.phi.iter().map(|v| v * v))
    }

    pub fn sup(&self) -> f64 {
        self.phi.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn to_csv(&self) -> String {
        let d = self.domain.dim();
        let mut s = (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        s.push_str(",phi\n");
        for (p, v) in self.domain.points().iter().zip(&self.phi) {
            for c in p.coords() {
                s.push_str(&format!("{c},"));
            }
            s.push_str(&format!("{v:e}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub base_lambda: f64,
    pub obstructed_lambda: f64,
    pub gap: f64,
    pub obstacle_capacity: f64,
}

fn sup_diff(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - scale * y).abs()))
}

/// Principal eigenpair of P_A by lazy power iteration with ℓ1 normalization,
/// on orbit classes when the domain is symmetric. Stops when
/// max |P_A Φ − λΦ| ≤ tol for the ℓ1-normalized Φ.
pub fn principal_eigenpair(domain: Arc<Domain>, tol: f64) -> Result<EigenPair> {
    if domain.is_empty() {
        return Err(Error::EmptyDomain("eigenpair of an empty domain".into()));
    }
    let chain = Chain::auto(&domain);
    let n = chain.len();
    let mult = chain.mult().to_vec();
    // Weighted ℓ1 norm: Σ over points, not states.
    let l1 = |v: &[f64]| pairwise_sum_by(v.len(), |s| v[s] * mult[s]);
    let mut v: Vec<f64> = vec![1.0 / domain.len() as f64; n];
    let mut pv = vec![0.0; n];
    let mut iterations = 0;
    loop {
        chain.apply(&v, &mut pv);
        if iterations % CHECK == 0 {
            let lambda = l1(&pv) / l1(&v);
            let residual = sup_diff(&pv, &v, lambda);
            if residual <= tol || lambda == 0.0 {
                return Ok(EigenPair {
                    lambda,
                    phi: chain.expand(&v),
                    residual,
                    lambda2: None,
                    iterations,
                    domain,
                });
            }
        }
        if iterations >= MAX_ITER {
            let lambda = l1(&pv) / l1(&v);
            return Err(Error::NoConvergence {
                what: "principal eigenpair",
                iterations,
                residual: sup_diff(&pv, &v, lambda),
            });
        }
        for (a, b) in v.iter_mut().zip(&pv) {
            *a = 0.5 * (*a + b);
        }
        let norm = l1(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        iterations += 1;
    }
}

/// Deterministic start vector with no particular symmetry.
fn scrambled(n: usize) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Dense symmetric P_A, for small domains.
fn dense_kernel(domain: &Domain) -> Mat<f64> {
    let n = domain.len();
    let inv = 1.0 / (2 * domain.dim()) as f64;
    let mut a = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for &j in domain.neighbor_row(i as u32) {
            if j != NONE {
                a[(i, j as usize)] = inv;
            }
        }
    }
    a
}

/// All eigenvalues of P_A in increasing order, by dense decomposition.
pub fn dense_spectrum(domain: &Domain) -> Result<Vec<f64>> {
    if domain.len() > DENSE_LIMIT {
        return Err(Error::budget(format!("dense spectrum of {} points", domain.len())));
    }
    crate::potential::equilibrium::sequential_faer();
    dense_kernel(domain)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::numeric(format!("dense eigenvalues: {e:?}")))
}

/// Largest eigenvalue and last eigenvector component of a Lanczos tridiagonal.
fn ritz_top(alpha: &[f64], beta: &[f64]) -> Result<(f64, f64)> {
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let eig = t
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::numeric(format!("tridiagonal eigenproblem: {e:?}")))?;
    let theta = eig.S().column_vector()[k - 1];
    Ok((theta, eig.U()[(k - 1, k - 1)]))
}

/// λ_{A,2}: the top of the spectrum of P_A on the orthogonal complement of Φ
/// (P_A is symmetric). Small domains use a dense decomposition; larger ones
/// use Lanczos on the projected operator, stopping when the Ritz residual
/// ‖P_A y − θ y‖_2 of the unit Ritz vector is at most tol.
pub fn second_eigenvalue(principal: &EigenPair, tol: f64) -> Result<f64> {
    let domain = &principal.domain;
    let n = domain.len();
    if n == 1 {
        return Err(Error::param("a one-point domain has no second eigenvalue"));
    }
    if n <= DENSE_LIMIT / 4 {
        let spec = dense_spectrum(domain)?;
        return Ok(spec[n - 2]);
    }
    crate::potential::equilibrium::sequential_faer();
    let chain = Chain::full(domain);
    let phi = &principal.phi;
    let phi2 = pairwise_sum_by(n, |i| phi[i] * phi[i]);
    let project = |v: &mut [f64]| {
        let c = pairwise_sum_by(n, |i| v[i] * phi[i]) / phi2;
        v.iter_mut().zip(phi).for_each(|(a, p)| *a -= c * p);
    };
    let norm = |v: &[f64]| pairwise_sum_by(n, |i| v[i] * v[i]).sqrt();
    let mut v = scrambled(n);
    project(&mut v);
    let s = norm(&v);
    v.iter_mut().for_each(|a| *a /= s);
    let mut prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let cap = LANCZOS_MAX.min(n - 1);
    let mut last = (f64::NAN, f64::INFINITY);
    for k in 1..=cap {
        chain.apply(&v, &mut w);
        project(&mut w);
        let a = pairwise_sum_by(n, |i| w[i] * v[i]);
        let b_prev = beta.last().copied().unwrap_or(0.0);
        for i in 0..n {
            w[i] -= a * v[i] + b_prev * prev[i];
        }
        alpha.push(a);
        let b = norm(&w);
        let check = k == cap || b < 1e-14 || (k >= 8 && (k % 25 == 0 || k < 25 && k % 4 == 0));
        if check {
            let (theta, s_last) = ritz_top(&alpha, &beta)?;
            let r = b * s_last.abs();
            last = (theta, r);
            if r <= tol || b < 1e-14 {
                return Ok(theta);
            }
        }
        beta.push(b);
        std::mem::swap(&mut prev, &mut v);
        for i in 0..n {
            v[i] = w[i] / b;
        }
    }
    Err(Error::NoConvergence {
        what: "second eigenvalue",
        iterations: cap,
        residual: last.1,
    })
}

/// Principal pair with λ_{A,2} filled in.
pub fn eigenpairs(domain: Arc<Domain>, tol: f64, tol2: f64) -> Result<EigenPair> {
    let mut pair = principal_eigenpair(domain, tol)?;
    if pair.domain.len() > 1 {
        pair.lambda2 = Some(second_eigenvalue(&pair, tol2)?);
    }
    Ok(pair)
}

/// λ^T Φ(x) / Σ Φ², the large-T surrogate for P_x(R_T ⊆ A).
pub fn survival_spectral(pair: &EigenPair, x: &Point, t: u64) -> f64 {
    let phi = pair.phi_at(x);
    if phi == 0.0 {
        return 0.0;
    }
    if t == 0 {
        return phi / pair.phi_sq_sum();
    }
    (t as f64 * pair.lambda.ln() + phi.ln() - pair.phi_sq_sum().ln()).exp()
}

/// Connected component of A ∖ obstacle containing `root`.
pub fn component_around(domain: &Domain, obstacle: &Trace, root: &Point) -> Result<Domain> {
    let r = domain
        .index_of(root)
        .ok_or_else(|| Error::param(format!("root {root} outside the domain")))?;
    let mut blocked = vec![false; domain.len()];
    for p in &obstacle.visited {
        if let Some(i) = domain.index_of(p) {
            blocked[i as usize] = true;
        }
    }
    if blocked[r as usize] {
        return Err(Error::param(format!("root {root} lies on the obstacle")));
    }
    let comp = domain.component(r, &blocked);
    Ok(Domain::from_points(
        domain.dim(),
        comp.into_iter().map(|i| domain.point(i)).collect(),
    ))
}

/// λ(A) − λ(K) for K the component of A ∖ obstacle around `root`, with cap(obstacle).
pub fn obstacle_gap(
    base: &EigenPair,
    obstacle: &Trace,
    root: &Point,
    tol: f64,
    table: &GreenTable,
    solver: &SolverConfig,
) -> Result<SpectralGap> {
    let k = component_around(&base.domain, obstacle, root)?;
    let obstacle_capacity = capacity(Arc::new(obstacle.to_domain()), table, solver)?;
    if k.len() == base.domain.len() {
        return Ok(SpectralGap {
            base_lambda: base.lambda,
            obstructed_lambda: base.lambda,
            gap: 0.0,
            obstacle_capacity,
        });
    }
    let pair = principal_eigenpair(Arc::new(k), tol)?;
    Ok(SpectralGap {
        base_lambda: base.lambda,
        obstructed_lambda: pair.lambda,
        gap: (base.lambda - pair.lambda).max(0.0),
        obstacle_capacity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ball;

    fn b(d: usize, n: u32) -> Arc<Domain> {
        Arc::new(ball(d, n).unwrap())
    }

    #[test]
    fn singleton_and_star() {
        let one = principal_eigenpair(Arc::new(Domain::from_points(3, vec![Point::origin(3)])), DEFAULT_TOL).unwrap();
        assert_eq!(one.lambda, 0.0);
        assert_eq!(one.phi, vec![1.0]);
        // Center a, leaves b: λa = b and λb = a/6, so λ = 1/√6 and a = √6·b.
        let star = eigenpairs(b(3, 1), DEFAULT_TOL, 1e-10).unwrap();
        assert!((star.lambda - 1.0 / 6f64.sqrt()).abs() < 1e-11);
        let a = star.phi_at(&Point::origin(3));
        let leaf = star.phi_at(&Point::unit(3, 0));
        assert!((a / leaf - 6f64.sqrt()).abs() < 1e-9);
        assert!((star.phi.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(star.lambda2.unwrap().abs() < 1e-9);
    }

    #[test]
    fn residual_and_ordering() {
        for d in [3, 4] {
            let p = eigenpairs(b(d, 4), DEFAULT_TOL, 1e-10).unwrap();
            assert!(p.residual <= DEFAULT_TOL);
            assert!(p.phi.iter().all(|&v| v > 0.0));
            assert!(p.lambda2.unwrap() < p.lambda);
        }
    }

    #[test]
    fn lanczos_matches_dense() {
        let dom = b(3, 7);
        let p = principal_eigenpair(dom.clone(), DEFAULT_TOL).unwrap();
        let spec = dense_spectrum(&dom).unwrap();
        assert!((spec[dom.len() - 1] - p.lambda).abs() < 1e-9);
        let l2 = second_eigenvalue(&p, 1e-9).unwrap();
        assert!((l2 - spec[dom.len() - 2]).abs() < 1e-9, "{l2} vs {}", spec[dom.len() - 2]);
    }

    #[test]
    fn components() {
        let dom = b(3, 6);
        let o = Point::origin(3);
        let none = Trace {
            window: None,
            visited: vec![],
            steps_used: 0,
            start: o,
        };
        assert_eq!(component_around(&dom, &none, &o).unwrap().len(), dom.len());
        let shell: Vec<Point> = dom
            .points()
            .iter()
            .filter(|p| p.norm2() > 4 && p.norm2() <= 9)
            .copied()
            .collect();
        let wall = Trace {
            visited: shell,
            ..none.clone()
        };
        let inner = component_around(&dom, &wall, &o).unwrap();
        assert_eq!(inner.len(), ball(3, 2).unwrap().len());
        let far = Trace {
            visited: vec![Point::new(&[6, 0, 0])],
            ..none
        };
        assert_eq!(component_around(&dom, &far, &o).unwrap().len(), dom.len() - 1);
    }
}
