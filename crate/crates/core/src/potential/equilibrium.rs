//! Equilibrium measure and capacity of a finite set by solving
//! Σ_y g(x − y) e(y) = 1 for x ∈ ∂K. The identity then holds on all of K by
//! the maximum principle, and e vanishes off the inner boundary.

use super::GreenTable;
use crate::lattice::{canonical, Domain, Point};
use crate::rng::Rng;
use crate::{linalg, Error, Result};
use faer::prelude::Solve;
use faer::Mat;
use rand::distributions::Distribution;
use rand_distr::WeightedAliasIndex;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Once};

/// Equilibrium weights this far outside [0, 1] are clamped rather than rejected.
const WEIGHT_SLACK: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Largest boundary solved by dense Cholesky.
    pub dense_limit: usize,
    /// Largest boundary solved at all (conjugate gradients with on-the-fly g).
    pub iterative_limit: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Reduce by signed coordinate permutations when the set allows it.
    pub symmetry: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dense_limit: 6000,
            iterative_limit: 30000,
            tol: 1e-8,
            max_iter: 5000,
            symmetry: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Dense,
    Symmetric,
    Iterative,
}

impl SolveMethod {
    pub fn label(&self) -> &'static str {
        match self {
            SolveMethod::Dense => "exact_dense",
            SolveMethod::Symmetric => "exact_symmetric",
            SolveMethod::Iterative => "exact_cg",
        }
    }
}

/// e_K, cap(K) and ē_K for a finite set.
#[derive(Clone)]
pub struct EquilibriumProfile {
    support: Arc<Domain>,
    e: Vec<f64>,
    e_boundary: Vec<f64>,
    cap: f64,
    residual: f64,
    method: SolveMethod,
    alias: WeightedAliasIndex<f64>,
}

impl std::fmt::Debug for EquilibriumProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EquilibriumProfile")
            .field("len", &self.support.len())
            .field("cap", &self.cap)
            .field("residual", &self.residual)
            .field("method", &self.method)
            .finish()
    }
}

pub(crate) fn sequential_faer() {
    static ONCE: Once = Once::new();
    // Thread count must not change the floating-point result.
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Dense Green matrix g(p_i − p_j).
pub fn green_matrix(points: &[Point], table: &GreenTable) -> Mat<f64> {
    let m = points.len();
    let mut a = Mat::<f64>::zeros(m, m);
    for j in 0..m {
        for i in j..m {
            let v = table.between(&points[i], &points[j]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Cholesky factor of the Green matrix on `points`.
pub fn green_cholesky(points: &[Point], table: &GreenTable) -> Result<faer::linalg::solvers::Llt<f64>> {
    sequential_faer();
    green_matrix(points, table)
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Singular("Green matrix is not positive definite (duplicate points?)".into()))
}

pub fn equilibrium_measure(
    k: Arc<Domain>,
    table: &GreenTable,
    cfg: &SolverConfig,
) -> Result<EquilibriumProfile> {
    if k.is_empty() {
        return Err(Error::param("equilibrium measure of the empty set"));
    }
    if k.dim() != table.dim() {
        return Err(Error::param("Green table dimension differs from the set"));
    }
    let bidx = k.boundary_indices();
    let bpts: Vec<Point> = bidx.iter().map(|&i| k.point(i)).collect();
    let m = bpts.len();
    let (eb, method) = if cfg.symmetry && k.is_symmetric() && m > 48 {
        (solve_symmetric(&bpts, table)?, SolveMethod::Symmetric)
    } else if m <= cfg.dense_limit {
        sequential_faer();
        let a = green_matrix(&bpts, table);
        let llt = a
            .llt(faer::Side::Lower)
            .map_err(|_| Error::Singular("Green matrix is not positive definite".into()))?;
        let x = llt.solve(Mat::<f64>::from_fn(m, 1, |_, _| 1.0));
        ((0..m).map(|i| x[(i, 0)]).collect(), SolveMethod::Dense)
    } else if m <= cfg.iterative_limit {
        (solve_cg(&bpts, table, cfg)?, SolveMethod::Iterative)
    } else {
        return Err(Error::budget(format!(
            "equilibrium solve with {m} boundary points exceeds the limit {}",
            cfg.iterative_limit
        )));
    };
    EquilibriumProfile::assemble(k, eb, method, table, cfg)
}

fn solve_symmetric(bpts: &[Point], table: &GreenTable) -> Result<Vec<f64>> {
    let mut class_of_rep: FxHashMap<Point, usize> = FxHashMap::default();
    let mut reps = Vec::new();
    let class: Vec<usize> = bpts
        .iter()
        .map(|p| {
            let c = canonical(p);
            *class_of_rep.entry(c).or_insert_with(|| {
                reps.push(c);
                reps.len() - 1
            })
        })
        .collect();
    let r = reps.len();
    let mut a = Mat::<f64>::zeros(r, r);
    for (i, rep) in reps.iter().enumerate() {
        for (y, &c) in bpts.iter().zip(&class) {
            a[(i, c)] += table.between(rep, y);
        }
    }
    sequential_faer();
    let lu = a.partial_piv_lu();
    let x = lu.solve(Mat::<f64>::from_fn(r, 1, |_, _| 1.0));
    let eps: Vec<f64> = (0..r).map(|i| x[(i, 0)]).collect();
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("reduced equilibrium system".into()));
    }
    Ok(class.iter().map(|&c| eps[c]).collect())
}

fn solve_cg(bpts: &[Point], table: &GreenTable, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let m = bpts.len();
    let apply = |x: &[f64], y: &mut [f64]| {
        for (i, out) in y.iter_mut().enumerate() {
            let p = bpts[i];
            *out = crate::stats::pairwise_sum_by(m, |j| table.between(&p, &bpts[j]) * x[j]);
        }
    };
    let b = vec![1.0; m];
    let mut x = vec![1.0 / (table.g0() * m as f64).max(1.0); m];
    linalg::cg("equilibrium CG", apply, &b, &mut x, cfg.tol * 0.1, cfg.max_iter)?;
    Ok(x)
}

impl EquilibriumProfile {
    fn assemble(
        support: Arc<Domain>,
        mut eb: Vec<f64>,
        method: SolveMethod,
        table: &GreenTable,
        cfg: &SolverConfig,
    ) -> Result<EquilibriumProfile> {
        for v in eb.iter_mut() {
            // Nearly enclosed boundary points have escape probabilities close
            // to 0, where the solve error can flip the sign.
            if *v < -WEIGHT_SLACK || *v > 1.0 + WEIGHT_SLACK || !v.is_finite() {
                return Err(Error::numeric(format!(
                    "equilibrium weight {v:e} outside [0,1]; Green table or solve is inaccurate"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        let bpts: Vec<Point> = support.boundary_indices().iter().map(|&i| support.point(i)).collect();
        let residual = boundary_residual(&bpts, &eb, table, method);
        if residual > cfg.tol {
            return Err(Error::NoConvergence {
                what: "equilibrium measure",
                iterations: 0,
                residual,
            });
        }
        let cap = crate::stats::pairwise_sum(&eb);
        let mut e = vec![0.0; support.len()];
        for (&i, &v) in support.boundary_indices().iter().zip(&eb) {
            e[i as usize] = v;
        }
        let alias = WeightedAliasIndex::new(eb.clone())
            .map_err(|err| Error::numeric(format!("harmonic measure alias table: {err}")))?;
        Ok(EquilibriumProfile {
            support,
            e,
            e_boundary: eb,
            cap,
            residual,
            method,
            alias,
        })
    }

    pub fn support(&self) -> &Arc<Domain> {
        &self.support
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// e(x) for every point of the support, in index order.
    pub fn e(&self) -> &[f64] {
        &self.e
    }

    /// ē(x) = e(x)/cap.
    pub fn ebar(&self) -> Vec<f64> {
        self.e.iter().map(|v| v / self.cap).collect()
    }

    /// e restricted to the inner boundary, aligned with `boundary_indices()`.
    pub fn e_boundary(&self) -> &[f64] {
        &self.e_boundary
    }

    /// max over ∂K of |Σ_y g(x − y) e(y) − 1|.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn method(&self) -> SolveMethod {
        self.method
    }

    /// max over all of K of |Σ_y g(x − y) e(y) − 1|; costs |K|·|∂K| lookups.
    pub fn full_residual(&self, table: &GreenTable) -> f64 {
        let bidx = self.support.boundary_indices();
        self.support
            .points()
            .iter()
            .map(|x| {
                let s = crate::stats::pairwise_sum_by(bidx.len(), |j| {
                    table.between(x, &self.support.point(bidx[j])) * self.e_boundary[j]
                });
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Draw x with probability ē(x); returns the index in the support.
    pub fn sample_index(&self, rng: &mut Rng) -> u32 {
        self.support.boundary_indices()[self.alias.sample(rng)]
    }

    pub fn sample(&self, rng: &mut Rng) -> Point {
        self.support.point(self.sample_index(rng))
    }

    /// P_z(H_K < ∞) = Σ_y g(z − y) e(y) for z outside K.
    pub fn hitting_probability(&self, z: &Point, table: &GreenTable) -> Result<f64> {
        if self.support.contains(z) {
            return Err(Error::param(format!("{z} lies in the set")));
        }
        let bidx = self.support.boundary_indices();
        let v = crate::stats::pairwise_sum_by(bidx.len(), |j| {
            table.between(z, &self.support.point(bidx[j])) * self.e_boundary[j]
        });
        if v > 1.0 + 1e-6 {
            return Err(Error::numeric(format!(
                "hitting probability {v} > 1 at {z}: Green table error"
            )));
        }
        Ok(v.min(1.0))
    }

    /// CSV with one row per point: coordinates, e, ē.
    pub fn to_csv(&self) -> String {
        let d = self.support.dim();
        let mut s = String::new();
        for i in 0..d {
            s.push_str(&format!("x{},", i + 1));
        }
        s.push_str("e,ebar\n");
        for (p, &v) in self.support.points().iter().zip(&self.e) {
            for c in p.coords() {
                s.push_str(&format!("{c},"));
            }
            s.push_str(&format!("{v},{}\n", v / self.cap));
        }
        s
    }
}

fn boundary_residual(bpts: &[Point], eb: &[f64], table: &GreenTable, method: SolveMethod) -> f64 {
    let m = bpts.len();
    let rows: Vec<usize> = match method {
        // One row per orbit suffices: the residual is constant on orbits.
        SolveMethod::Symmetric => {
            let mut seen = FxHashMap::default();
            (0..m).filter(|&i| seen.insert(canonical(&bpts[i]), ()).is_none()).collect()
        }
        _ => (0..m).collect(),
    };
    rows.iter()
        .map(|&i| {
            let s = crate::stats::pairwise_sum_by(m, |j| table.between(&bpts[i], &bpts[j]) * eb[j]);
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// cap(K) with cap(∅) = 0.
pub fn capacity(k: Arc<Domain>, table: &GreenTable, cfg: &SolverConfig) -> Result<f64> {
    if k.is_empty() {
        return Ok(0.0);
    }
    Ok(equilibrium_measure(k, table, cfg)?.cap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Point;

    fn table(d: usize) -> Arc<GreenTable> {
        GreenTable::shared(d).unwrap()
    }

    fn set(d: usize, pts: &[&[i32]]) -> Arc<Domain> {
        Arc::new(Domain::from_points(d, pts.iter().map(|c| Point::new(c)).collect()))
    }

    #[test]
    fn singleton_capacity_is_inverse_g0() {
        let t = table(3);
        let p = equilibrium_measure(set(3, &[&[0, 0, 0]]), &t, &SolverConfig::default()).unwrap();
        assert!((p.cap() - 1.0 / t.g0()).abs() < 1e-14);
        assert!((p.cap() - 0.65946).abs() < 1e-5);
    }

    #[test]
    fn far_pair_decouples() {
        let t = table(3);
        let p = equilibrium_measure(
            set(3, &[&[0, 0, 0], &[10_000, 0, 0]]),
            &t,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((p.cap() / (2.0 / t.g0()) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ball_paths_agree() {
        let t = table(3);
        let k = Arc::new(crate::lattice::Domain::blow_up(&crate::lattice::ShapeSpec::ball(3), 5).unwrap());
        let sym = equilibrium_measure(k.clone(), &t, &SolverConfig::default()).unwrap();
        assert_eq!(sym.method(), SolveMethod::Symmetric);
        let dense_cfg = SolverConfig {
            symmetry: false,
            ..Default::default()
        };
        let dense = equilibrium_measure(k.clone(), &t, &dense_cfg).unwrap();
        assert_eq!(dense.method(), SolveMethod::Dense);
        let cg_cfg = SolverConfig {
            symmetry: false,
            dense_limit: 10,
            ..Default::default()
        };
        let cg = equilibrium_measure(k.clone(), &t, &cg_cfg).unwrap();
        assert_eq!(cg.method(), SolveMethod::Iterative);
        assert!((sym.cap() - dense.cap()).abs() < 1e-10);
        assert!((cg.cap() - dense.cap()).abs() < 1e-7);
        assert!(dense.full_residual(&t) < 1e-8);
        assert!(sym.full_residual(&t) < 1e-8);
        let center = k.index_of(&Point::origin(3)).unwrap();
        assert_eq!(sym.e()[center as usize], 0.0);
        assert!((sym.ebar().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hitting_singleton() {
        let t = table(3);
        let p = equilibrium_measure(set(3, &[&[0, 0, 0]]), &t, &SolverConfig::default()).unwrap();
        let z = Point::new(&[5, 0, 0]);
        let h = p.hitting_probability(&z, &t).unwrap();
        assert!((h - t.value(&z) / t.g0()).abs() < 1e-14);
        let mut last = 1.0;
        for n in 10..=100 {
            let v = p.hitting_probability(&Point::new(&[n, 0, 0]), &t).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(p.hitting_probability(&Point::origin(3), &t).is_err());
    }

    #[test]
    fn empty_set() {
        let t = table(3);
        assert!(equilibrium_measure(Arc::new(Domain::from_points(3, vec![])), &t, &SolverConfig::default()).is_err());
        assert_eq!(capacity(Arc::new(Domain::from_points(3, vec![])), &t, &SolverConfig::default()).unwrap(), 0.0);
    }
}
