//! Exact exit law of the cube [−r, r]^d for a walk started at its center.
//!
//! G_C(0, ·) is symmetric under signed coordinate permutations, so it is solved
//! on canonical points only. A walk leaves through face point z with
//! probability G_C(0, z − e)/(2d), where z − e is the unique inside neighbor.

use crate::lattice::{canonical, Point};
use crate::rng::Rng;
use crate::{linalg, Error, Result};
use rand::distributions::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::WeightedAliasIndex;
use rustc_hash::FxHashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Radii with an exit table in dimension `dim`, increasing. The largest is
/// limited by build time, which grows like r^d.
pub fn jump_radii(dim: usize) -> Vec<i32> {
    let max = match dim {
        3 => 64,
        4 => 32,
        5 | 6 => 16,
        _ => 8,
    };
    let mut out = vec![];
    let mut r = 4;
    while r <= max {
        out.push(r);
        r *= 2;
    }
    out
}

pub struct CubeExit {
    dim: usize,
    radius: i32,
    faces: Vec<Point>,
    alias: WeightedAliasIndex<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Number of points with the given canonical form.
fn orbit_size(c: &[i32]) -> f64 {
    let mut count = factorial(c.len());
    let mut i = 0;
    while i < c.len() {
        let mut j = i;
        while j < c.len() && c[j] == c[i] {
            j += 1;
        }
        count /= factorial(j - i);
        i = j;
    }
    count * 2f64.powi(c.iter().filter(|&&v| v != 0).count() as i32)
}

fn nonincreasing(dim: usize, cap: i32) -> Vec<Point> {
    fn rec(p: &mut Point, axis: usize, cap: i32, out: &mut Vec<Point>) {
        if axis == p.dim() {
            out.push(*p);
            return;
        }
        for v in 0..=cap {
            p.coords_mut()[axis] = v;
            rec(p, axis + 1, v, out);
        }
        p.coords_mut()[axis] = 0;
    }
    let mut out = Vec::new();
    rec(&mut Point::origin(dim), 0, cap, &mut out);
    out
}

impl CubeExit {
    pub fn build(dim: usize, radius: i32) -> Result<CubeExit> {
        if dim < 2 || radius < 1 {
            return Err(Error::param("cube exit table needs d ≥ 2, r ≥ 1"));
        }
        let states = nonincreasing(dim, radius);
        let index: FxHashMap<Point, u32> = states.iter().enumerate().map(|(i, p)| (*p, i as u32)).collect();
        let mult: Vec<f64> = states.iter().map(|p| orbit_size(p.coords())).collect();
        let deg = 2 * dim;
        let mut offsets = vec![0u32];
        let mut targets = Vec::with_capacity(states.len() * deg);
        for p in &states {
            for k in 0..deg {
                let q = p.step(k);
                if q.linf() <= radius {
                    targets.push(index[&canonical(&q)]);
                }
            }
            offsets.push(targets.len() as u32);
        }
        // M (I − P) is symmetric for the orbit-size weights M.
        let inv = 1.0 / deg as f64;
        let apply = |x: &[f64], y: &mut [f64]| {
            for s in 0..x.len() {
                let row = &targets[offsets[s] as usize..offsets[s + 1] as usize];
                let acc: f64 = row.iter().map(|&t| x[t as usize]).sum();
                y[s] = mult[s] * (x[s] - inv * acc);
            }
        };
        let origin = index[&Point::origin(dim)] as usize;
        let mut b = vec![0.0; states.len()];
        b[origin] = 1.0;
        let mut g = vec![1.0; states.len()];
        linalg::cg("cube Green function", apply, &b, &mut g, 1e-13, 100_000)?;

        let faces = nonincreasing(dim - 1, radius);
        let weights: Vec<f64> = faces
            .iter()
            .map(|w| {
                let mut full = Point::origin(dim);
                full.coords_mut()[0] = radius;
                full.coords_mut()[1..].copy_from_slice(w.coords());
                orbit_size(w.coords()) * g[index[&full] as usize].max(0.0)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::numeric(format!(
                "cube exit law d={dim} r={radius} has mass {total}"
            )));
        }
        let alias = WeightedAliasIndex::new(weights).map_err(|e| Error::numeric(e.to_string()))?;
        Ok(CubeExit {
            dim,
            radius,
            faces,
            alias,
        })
    }

    /// Process-wide table for (dim, radius).
    pub fn shared(dim: usize, radius: i32) -> Result<Arc<CubeExit>> {
        static TABLES: OnceLock<Mutex<FxHashMap<(usize, i32), Arc<CubeExit>>>> = OnceLock::new();
        let lock = TABLES.get_or_init(Default::default);
        if let Some(t) = lock.lock().expect("cube cache poisoned").get(&(dim, radius)) {
            return Ok(t.clone());
        }
        let t = Arc::new(CubeExit::build(dim, radius)?);
        lock.lock()
            .expect("cube cache poisoned")
            .insert((dim, radius), t.clone());
        Ok(t)
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    /// Exit displacement from the center; its sup norm is radius + 1.
    #[inline]
    pub fn sample(&self, rng: &mut Rng) -> Point {
        let w = &self.faces[self.alias.sample(rng)];
        let mut rest = [0i32; 8];
        let m = self.dim - 1;
        rest[..m].copy_from_slice(w.coords());
        rest[..m].shuffle(rng);
        let face: usize = rng.gen_range(0..2 * self.dim);
        let axis = face >> 1;
        let mut z = Point::origin(self.dim);
        let zc = z.coords_mut();
        let mut k = 0;
        for (i, slot) in zc.iter_mut().enumerate() {
            if i == axis {
                *slot = if face & 1 == 0 { self.radius + 1 } else { -self.radius - 1 };
            } else {
                let v = rest[k];
                k += 1;
                *slot = if rng.gen::<bool>() { v } else { -v };
            }
        }
        z
    }
}
