//! Walks killed on leaving a finite domain: Green function G_A, exit law and
//! absorbed hitting probabilities, all by conjugate gradients on I − P_A.

use crate::lattice::{Domain, Point, NONE};
use crate::{linalg, Error, Result};
use rustc_hash::FxHashMap;
use std::sync::Arc;

const TOL: f64 = 1e-12;

/// G_A(source, ·) on a domain.
#[derive(Clone, Debug)]
pub struct KilledGreenField {
    pub domain: Arc<Domain>,
    pub source: Point,
    pub values: Vec<f64>,
}

impl KilledGreenField {
    pub fn at(&self, y: &Point) -> f64 {
        self.domain.index_of(y).map_or(0.0, |i| self.values[i as usize])
    }
}

/// y = (I − P_A) x restricted to the points with `active[i]`; inactive points hold 0.
fn laplacian(dom: &Domain, local: &[u32], free: &[u32], x: &[f64], y: &mut [f64]) {
    let inv = 1.0 / (2 * dom.dim()) as f64;
    for (k, &i) in free.iter().enumerate() {
        let mut s = 0.0;
        for &j in dom.neighbor_row(i) {
            if j != NONE {
                let l = local[j as usize];
                if l != NONE {
                    s += x[l as usize];
                }
            }
        }
        y[k] = x[k] - inv * s;
    }
}

fn max_iter(n: usize) -> usize {
    (20 * n).clamp(1000, 200_000)
}

pub fn killed_green(domain: Arc<Domain>, source: &Point) -> Result<KilledGreenField> {
    let s = domain
        .index_of(source)
        .ok_or_else(|| Error::param(format!("source {source} outside the domain")))?;
    let n = domain.len();
    let local: Vec<u32> = (0..n as u32).collect();
    let mut b = vec![0.0; n];
    b[s as usize] = 1.0;
    let mut x = b.clone();
    linalg::cg(
        "killed Green function",
        |x, y| laplacian(&domain, &local, &local, x, y),
        &b,
        &mut x,
        TOL,
        max_iter(n),
    )?;
    Ok(KilledGreenField {
        domain,
        source: *source,
        values: x,
    })
}

/// Law of the first point outside the domain for a walk from `start`,
/// sorted by point. P(S_τ = z) = Σ_{w ∈ A, w ~ z} G_A(start, w)/(2d).
pub fn exit_distribution(domain: Arc<Domain>, start: &Point) -> Result<Vec<(Point, f64)>> {
    let g = killed_green(domain.clone(), start)?;
    let inv = 1.0 / (2 * domain.dim()) as f64;
    let mut acc: FxHashMap<Point, f64> = FxHashMap::default();
    for &i in domain.boundary_indices() {
        for dir in 0..2 * domain.dim() {
            if domain.neighbor(i, dir) == NONE {
                *acc.entry(domain.point(i).step(dir)).or_default() += g.values[i as usize] * inv;
            }
        }
    }
    let mut out: Vec<(Point, f64)> = acc.into_iter().collect();
    out.sort_by_key(|a| a.0);
    Ok(out)
}

/// f(x) = P_x(H_target < H_∂A) on the whole domain, with f = 1 on target
/// points off the inner boundary and f = 0 on the inner boundary.
pub fn hit_before_boundary(domain: &Domain, target: &[bool]) -> Result<Vec<f64>> {
    let n = domain.len();
    let mut f = vec![0.0; n];
    let mut local = vec![NONE; n];
    let mut free = Vec::new();
    for i in 0..n as u32 {
        if domain.is_boundary(i) {
            continue;
        }
        if target[i as usize] {
            f[i as usize] = 1.0;
        } else {
            local[i as usize] = free.len() as u32;
            free.push(i);
        }
    }
    if free.is_empty() {
        return Ok(f);
    }
    let inv = 1.0 / (2 * domain.dim()) as f64;
    let b: Vec<f64> = free
        .iter()
        .map(|&i| {
            domain
                .neighbor_row(i)
                .iter()
                .filter(|&&j| j != NONE && f[j as usize] == 1.0)
                .count() as f64
                * inv
        })
        .collect();
    let mut x = b.clone();
    linalg::cg(
        "absorbed hitting probability",
        |x, y| laplacian(domain, &local, &free, x, y),
        &b,
        &mut x,
        TOL,
        max_iter(free.len()),
    )?;
    for (k, &i) in free.iter().enumerate() {
        f[i as usize] = x[k].clamp(0.0, 1.0);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Domain, ShapeSpec};
    use crate::potential::GreenTable;

    fn ball(n: u32) -> Arc<Domain> {
        Arc::new(Domain::blow_up(&ShapeSpec::ball(3), n).unwrap())
    }

    #[test]
    fn singleton_green_is_one() {
        let dom = Arc::new(Domain::from_points(3, vec![Point::origin(3)]));
        let g = killed_green(dom, &Point::origin(3)).unwrap();
        assert_eq!(g.values, vec![1.0]);
    }

    #[test]
    fn symmetric_and_monotone() {
        let dom = ball(6);
        let x = Point::new(&[2, -1, 0]);
        let y = Point::new(&[-3, 0, 4]);
        let gx = killed_green(dom.clone(), &x).unwrap();
        let gy = killed_green(dom.clone(), &y).unwrap();
        assert!((gx.at(&y) - gy.at(&x)).abs() < 1e-10);
        let o = Point::origin(3);
        let g5 = killed_green(ball(5), &o).unwrap().at(&o);
        let g10 = killed_green(ball(10), &o).unwrap().at(&o);
        let g0 = GreenTable::shared(3).unwrap().g0();
        assert!(g5 < g10 && g10 < g0);
        let free = GreenTable::shared(3).unwrap();
        for (p, &v) in dom.points().iter().zip(&gx.values) {
            assert!(v >= 0.0 && v <= free.value(&(*p - x)) + 1e-12);
        }
    }

    #[test]
    fn exit_law_of_unit_ball_is_uniform() {
        let law = exit_distribution(ball(1), &Point::origin(3)).unwrap();
        let total: f64 = law.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // From 0 the walk exits from some ±e_i to one of its 5 outside neighbors.
        assert_eq!(law.len(), 6 + 12);
        let far: Vec<f64> = law.iter().filter(|(z, _)| z.linf() == 2).map(|(_, p)| *p).collect();
        let diag: Vec<f64> = law.iter().filter(|(z, _)| z.linf() == 1).map(|(_, p)| *p).collect();
        assert!(far.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-14));
        assert!(diag.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-14));
    }

    #[test]
    fn hit_problem_edge_cases() {
        let dom = ball(4);
        let none = vec![false; dom.len()];
        assert!(hit_before_boundary(&dom, &none).unwrap().iter().all(|&v| v == 0.0));
        let o = dom.index_of(&Point::origin(3)).unwrap();
        let mut nbrs = vec![false; dom.len()];
        for &j in dom.neighbor_row(o) {
            nbrs[j as usize] = true;
        }
        let f = hit_before_boundary(&dom, &nbrs).unwrap();
        assert!((f[o as usize] - 1.0).abs() < 1e-12);
    }
}
