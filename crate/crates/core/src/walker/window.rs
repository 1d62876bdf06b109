//! R_∞ ∩ W for a walk started anywhere, without simulating far excursions.
//!
//! For z ∉ W the first-entrance decomposition g(z − x) = Σ_y H_W(z, y) g(y − x),
//! x ∈ ∂W, determines the entrance law: H_W(z, ·) = G_∂∂^{-1} g(z − ·). So
//! each time the walk steps out of W to z it re-enters with probability
//! Σ_y H_W(z, y), at a point drawn from H_W(z, ·), and otherwise never returns.

use super::{Trace, STEP_CAP};
use crate::lattice::{canonical, Domain, Point, SignedPerm, NONE};
use crate::potential::equilibrium::{equilibrium_measure, green_cholesky};
use crate::potential::{EquilibriumProfile, GreenTable, SolverConfig};
use crate::rng::Rng;
use crate::{Error, Result};
use faer::linalg::solvers::Llt;
use faer::prelude::Solve;
use faer::Mat;
use rand::distributions::Distribution;
use rand::Rng as _;
use rand_distr::WeightedAliasIndex;
use rustc_hash::FxHashMap;
use std::sync::Arc;

/// Right-hand sides per triangular solve batch.
const BATCH: usize = 256;

struct Entry {
    p_return: f64,
    alias: Option<WeightedAliasIndex<f64>>,
}

/// Entrance law of a window from every point of its outer boundary, plus
/// its equilibrium profile.
pub struct WindowKernel {
    window: Arc<Domain>,
    profile: EquilibriumProfile,
    table: Arc<GreenTable>,
    boundary: Vec<Point>,
    llt: Llt<f64>,
    symmetric: bool,
    /// Keyed by the canonical outer point when symmetric, else by the point.
    entries: FxHashMap<Point, Entry>,
}

impl WindowKernel {
    pub fn new(window: Arc<Domain>, table: Arc<GreenTable>, cfg: &SolverConfig) -> Result<WindowKernel> {
        let profile = equilibrium_measure(window.clone(), &table, cfg)?;
        WindowKernel::with_profile(profile, table)
    }

    pub fn with_profile(profile: EquilibriumProfile, table: Arc<GreenTable>) -> Result<WindowKernel> {
        let window = profile.support().clone();
        if window.dim() != table.dim() {
            return Err(Error::param("Green table dimension differs from the window"));
        }
        let boundary: Vec<Point> = window.boundary_indices().iter().map(|&i| window.point(i)).collect();
        if boundary.len() > 12_000 {
            return Err(Error::budget(format!(
                "window boundary of {} points exceeds the entrance-law budget",
                boundary.len()
            )));
        }
        let llt = green_cholesky(&boundary, &table)?;
        let symmetric = window.is_symmetric();
        let mut keys: Vec<Point> = Vec::new();
        {
            let mut seen = FxHashMap::default();
            for (k, &i) in window.boundary_indices().iter().enumerate() {
                for dir in 0..2 * window.dim() {
                    if window.neighbor(i, dir) == NONE {
                        let z = boundary[k].step(dir);
                        let key = if symmetric { canonical(&z) } else { z };
                        if seen.insert(key, ()).is_none() {
                            keys.push(key);
                        }
                    }
                }
            }
        }
        keys.sort_unstable();
        let mut kernel = WindowKernel {
            window,
            profile,
            table,
            boundary,
            llt,
            symmetric,
            entries: FxHashMap::default(),
        };
        for chunk in keys.chunks(BATCH) {
            let solved = kernel.solve(chunk)?;
            for (z, e) in chunk.iter().zip(solved) {
                kernel.entries.insert(*z, e);
            }
        }
        Ok(kernel)
    }

    fn solve(&self, zs: &[Point]) -> Result<Vec<Entry>> {
        let m = self.boundary.len();
        let rhs = Mat::<f64>::from_fn(m, zs.len(), |i, j| self.table.between(&zs[j], &self.boundary[i]));
        let h = self.llt.solve(rhs);
        (0..zs.len())
            .map(|j| {
                let w: Vec<f64> = (0..m).map(|i| h[(i, j)].max(0.0)).collect();
                let p: f64 = crate::stats::pairwise_sum(&w);
                if p > 1.0 + 1e-6 || !p.is_finite() {
                    return Err(Error::numeric(format!(
                        "return probability {p} > 1 from {}: Green table error",
                        zs[j]
                    )));
                }
                let alias = if p > 0.0 {
                    Some(WeightedAliasIndex::new(w).map_err(|e| Error::numeric(e.to_string()))?)
                } else {
                    None
                };
                Ok(Entry {
                    p_return: p.min(1.0),
                    alias,
                })
            })
            .collect()
    }

    pub fn window(&self) -> &Arc<Domain> {
        &self.window
    }

    pub fn profile(&self) -> &EquilibriumProfile {
        &self.profile
    }

    pub fn table(&self) -> &Arc<GreenTable> {
        &self.table
    }

    /// P_z(H_W < ∞) for z outside the window.
    pub fn return_probability(&self, z: &Point) -> Result<f64> {
        if self.window.contains(z) {
            return Err(Error::param(format!("{z} lies in the window")));
        }
        let key = if self.symmetric { canonical(z) } else { *z };
        if let Some(e) = self.entries.get(&key) {
            return Ok(e.p_return);
        }
        Ok(self.solve(&[*z])?[0].p_return)
    }

    fn draw(&self, e: &Entry, sigma: Option<SignedPerm>, rng: &mut Rng) -> Option<u32> {
        if e.p_return <= 0.0 || rng.gen::<f64>() >= e.p_return {
            return None;
        }
        let y = self.boundary[e.alias.as_ref().expect("positive mass has a table").sample(rng)];
        let y = sigma.map_or(y, |s| s.apply(&y));
        Some(self.window.index_of(&y).expect("symmetric window holds the image"))
    }

    /// Index of the first point of W hit by a walk from z ∉ W, or None if it
    /// never hits W.
    pub fn enter_from(&self, z: &Point, rng: &mut Rng) -> Result<Option<u32>> {
        if let Some(i) = self.window.index_of(z) {
            return Ok(Some(i));
        }
        let (key, sigma) = if self.symmetric {
            (canonical(z), Some(SignedPerm::onto(z)))
        } else {
            (*z, None)
        };
        if let Some(e) = self.entries.get(&key) {
            return Ok(self.draw(e, sigma, rng));
        }
        let e = self.solve(&[key])?.pop().expect("one entry");
        Ok(self.draw(&e, sigma, rng))
    }
}

/// Exact sample of R_∞ ∩ W for a walk from `start` (inside or outside W).
pub fn range_in_window(start: &Point, kernel: &WindowKernel, rng: &mut Rng) -> Result<Trace> {
    let w = kernel.window();
    let d = w.dim();
    let mut seen = vec![false; w.len()];
    let mut order: Vec<u32> = Vec::new();
    let mut steps = 0u64;
    let mut cur = kernel.enter_from(start, rng)?;
    if let Some(i) = cur {
        seen[i as usize] = true;
        order.push(i);
    }
    while let Some(i) = cur {
        let dir = rng.gen_range(0..2 * d);
        steps += 1;
        let j = w.neighbor(i, dir);
        cur = if j != NONE {
            Some(j)
        } else {
            kernel.enter_from(&w.point(i).step(dir), rng)?
        };
        if let Some(j) = cur {
            if !seen[j as usize] {
                seen[j as usize] = true;
                order.push(j);
            }
        }
        if steps >= STEP_CAP {
            return Err(Error::budget(format!("window walk exceeded {STEP_CAP} steps")));
        }
    }
    order.sort_unstable();
    Ok(Trace {
        window: Some(w.clone()),
        visited: order.into_iter().map(|i| w.point(i)).collect(),
        steps_used: steps,
        start: *start,
    })
}
