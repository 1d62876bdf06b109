use super::{check_dim, Point, Rational, ShapeKind, ShapeSpec, MAX_DIM};
use crate::{Error, Result};
use rustc_hash::FxHashMap;
use std::collections::VecDeque;

/// Sentinel for "no such index" in neighbor tables.
pub const NONE: u32 = u32::MAX;

/// Largest domain we are willing to materialize.
pub const MAX_POINTS: usize = 30_000_000;

#[derive(Clone)]
enum Lookup {
    Dense {
        lo: [i64; MAX_DIM],
        ext: [i64; MAX_DIM],
        stride: [usize; MAX_DIM],
        table: Vec<u32>,
    },
    Hash(FxHashMap<Point, u32>),
}

/// A finite subset of Z^d with an index bijection, O(1) membership,
/// a neighbor table and its inner boundary.
#[derive(Clone)]
pub struct Domain {
    dim: usize,
    points: Vec<Point>,
    lookup: Lookup,
    nbr: Vec<u32>,
    boundary: Vec<u32>,
    on_boundary: Vec<bool>,
    scale: u32,
    shape: Option<ShapeSpec>,
    symmetric: bool,
}

impl std::fmt::Debug for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Domain")
            .field("dim", &self.dim)
            .field("len", &self.points.len())
            .field("boundary", &self.boundary.len())
            .field("scale", &self.scale)
            .field("shape", &self.shape)
            .finish()
    }
}

impl PartialEq for Domain {
    fn eq(&self, o: &Domain) -> bool {
        self.dim == o.dim && self.points == o.points
    }
}

impl Domain {
    /// Arbitrary finite set; duplicates are merged and points sorted.
    pub fn from_points(dim: usize, mut points: Vec<Point>) -> Domain {
        assert!(points.iter().all(|p| p.dim() == dim), "mixed dimensions");
        if !points.is_sorted() {
            points.sort_unstable();
        }
        points.dedup();
        Domain::build(dim, points, 0, None)
    }

    /// {x ∈ Z^d : x/N ∈ shape}.
    pub fn blow_up(shape: &ShapeSpec, n: u32) -> Result<Domain> {
        shape.validate()?;
        if n == 0 {
            return Err(Error::param("blow-up scale must be ≥ 1"));
        }
        let d = shape.dim;
        let bounds = shape.bounds(n as i64);
        let estimate = match shape.radius2_bound(n as i64) {
            Some(r2) => {
                let r = (r2 as f64).sqrt() + 0.5 * (d as f64).sqrt();
                let vol = std::f64::consts::PI.powf(d as f64 / 2.0)
                    / statrs::function::gamma::gamma(d as f64 / 2.0 + 1.0);
                vol * r.powi(d as i32)
            }
            None => bounds
                .iter()
                .map(|(lo, hi)| (hi - lo + 1).max(0) as f64)
                .product(),
        };
        if estimate > MAX_POINTS as f64 {
            return Err(Error::budget(format!(
                "blow-up of {} at N={n} has about {estimate:.3e} points",
                shape.label()
            )));
        }
        let mut points = Vec::new();
        let mut p = Point::origin(d);
        enumerate(shape, n as i64, &bounds, shape.radius2_bound(n as i64), 0, 0, &mut p, &mut points);
        if points.is_empty() {
            return Err(Error::EmptyDomain(format!("{} at N={n}", shape.label())));
        }
        Ok(Domain::build(d, points, n, Some(shape.clone())))
    }

    /// B(0, rN) for a domain built from a ball, keeping its scale.
    pub fn shrink(&self, r: Rational) -> Result<Domain> {
        if !r.is_positive() || !r.lt(&Rational::one()) {
            return Err(Error::param(format!("shrink factor {r} outside (0,1)")));
        }
        let radius = match &self.shape {
            Some(ShapeSpec {
                kind: ShapeKind::Ball { radius },
                ..
            }) => *radius,
            _ => return Err(Error::param("shrink needs a domain built from a ball")),
        };
        let shape = ShapeSpec {
            dim: self.dim,
            kind: ShapeKind::Ball {
                radius: radius.mul(&r),
            },
        };
        Domain::blow_up(&shape, self.scale)
    }

    fn build(dim: usize, points: Vec<Point>, scale: u32, shape: Option<ShapeSpec>) -> Domain {
        let n = points.len();
        assert!(n < NONE as usize, "domain too large for u32 indices");
        let lookup = make_lookup(dim, &points);
        let mut dom = Domain {
            dim,
            points,
            lookup,
            nbr: Vec::new(),
            boundary: Vec::new(),
            on_boundary: vec![false; n],
            scale,
            shape,
            symmetric: false,
        };
        let deg = 2 * dim;
        let mut nbr = vec![NONE; n * deg];
        for (i, p) in dom.points.iter().enumerate() {
            let row = &mut nbr[i * deg..(i + 1) * deg];
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = dom.index_of(&p.step(k)).unwrap_or(NONE);
            }
            if row.contains(&NONE) {
                dom.on_boundary[i] = true;
                dom.boundary.push(i as u32);
            }
        }
        dom.nbr = nbr;
        dom.symmetric = dom.check_symmetric();
        dom
    }

    fn check_symmetric(&self) -> bool {
        if self.points.is_empty() {
            return false;
        }
        let d = self.dim;
        self.points.iter().all(|p| {
            let mut flip = *p;
            flip.coords_mut()[0] *= -1;
            let mut swap = *p;
            swap.coords_mut().swap(0, 1);
            let mut cycle = *p;
            cycle.coords_mut().rotate_left(1);
            debug_assert!(d >= 2);
            self.contains(&flip) && self.contains(&swap) && self.contains(&cycle)
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: u32) -> Point {
        self.points[i as usize]
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn shape(&self) -> Option<&ShapeSpec> {
        self.shape.as_ref()
    }

    /// Invariant under all signed coordinate permutations about the origin.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn index_of(&self, p: &Point) -> Option<u32> {
        match &self.lookup {
            Lookup::Dense {
                lo,
                ext,
                stride,
                table,
            } => {
                let mut idx = 0usize;
                for (i, &c) in p.coords().iter().enumerate() {
                    let off = c as i64 - lo[i];
                    if off < 0 || off >= ext[i] {
                        return None;
                    }
                    idx += off as usize * stride[i];
                }
                let v = table[idx];
                (v != NONE).then_some(v)
            }
            Lookup::Hash(map) => map.get(p).copied(),
        }
    }

    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        self.index_of(p).is_some()
    }

    /// Index of the neighbor of point `i` in direction `dir`, or `NONE`.
    #[inline]
    pub fn neighbor(&self, i: u32, dir: usize) -> u32 {
        self.nbr[i as usize * 2 * self.dim + dir]
    }

    #[inline]
    pub fn neighbor_row(&self, i: u32) -> &[u32] {
        let deg = 2 * self.dim;
        &self.nbr[i as usize * deg..(i as usize + 1) * deg]
    }

    /// Indices of points with at least one neighbor outside, in index order.
    pub fn boundary_indices(&self) -> &[u32] {
        &self.boundary
    }

    pub fn inner_boundary(&self) -> Vec<Point> {
        self.boundary.iter().map(|&i| self.points[i as usize]).collect()
    }

    #[inline]
    pub fn is_boundary(&self, i: u32) -> bool {
        self.on_boundary[i as usize]
    }

    /// Componentwise bounding box.
    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            for i in 0..self.dim {
                lo.coords_mut()[i] = lo.coords()[i].min(p.coords()[i]);
                hi.coords_mut()[i] = hi.coords()[i].max(p.coords()[i]);
            }
        }
        (lo, hi)
    }

    /// Center of the bounding box.
    pub fn center(&self) -> Vec<f64> {
        let (lo, hi) = self.bbox();
        (0..self.dim)
            .map(|i| 0.5 * (lo.coords()[i] as f64 + hi.coords()[i] as f64))
            .collect()
    }

    /// Largest Euclidean distance from `center()`.
    pub fn radius(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let c = self.center();
        self.points
            .iter()
            .map(|p| dist2(p, &c))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Upper bound 2·radius on the Euclidean diameter, at least 1.
    pub fn diameter(&self) -> f64 {
        (2.0 * self.radius()).max(1.0)
    }

    /// Subset of points passing `keep`, as a fresh domain.
    pub fn subset(&self, keep: impl Fn(u32) -> bool) -> Domain {
        let pts = (0..self.len() as u32)
            .filter(|&i| keep(i))
            .map(|i| self.points[i as usize])
            .collect();
        Domain::from_points(self.dim, pts)
    }

    /// Breadth-first component of the unblocked points containing `root`.
    pub fn component(&self, root: u32, blocked: &[bool]) -> Vec<u32> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        if blocked[root as usize] {
            return out;
        }
        let mut queue = VecDeque::from([root]);
        seen[root as usize] = true;
        while let Some(i) = queue.pop_front() {
            out.push(i);
            for &j in self.neighbor_row(i) {
                if j != NONE && !seen[j as usize] && !blocked[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Whether every point is reachable from `root` by nearest-neighbor steps.
    pub fn is_connected_from(&self, root: u32) -> bool {
        self.component(root, &vec![false; self.len()]).len() == self.len()
    }
}

pub fn dist2(p: &Point, c: &[f64]) -> f64 {
    p.coords()
        .iter()
        .zip(c)
        .map(|(&a, &b)| (a as f64 - b).powi(2))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    shape: &ShapeSpec,
    n: i64,
    bounds: &[(i64, i64)],
    r2: Option<i128>,
    axis: usize,
    acc: i128,
    p: &mut Point,
    out: &mut Vec<Point>,
) {
    let (lo, hi) = bounds[axis];
    for v in lo..=hi {
        let part = acc + (v as i128) * (v as i128);
        if matches!(r2, Some(r) if part > r) {
            continue;
        }
        p.coords_mut()[axis] = v as i32;
        if axis + 1 == shape.dim {
            if shape.contains(p, n) {
                out.push(*p);
            }
        } else {
            enumerate(shape, n, bounds, r2, axis + 1, part, p, out);
        }
    }
    p.coords_mut()[axis] = 0;
}

fn make_lookup(dim: usize, points: &[Point]) -> Lookup {
    if !points.is_empty() {
        let mut lo = [i64::MAX; MAX_DIM];
        let mut hi = [i64::MIN; MAX_DIM];
        for p in points {
            for (i, &c) in p.coords().iter().enumerate() {
                lo[i] = lo[i].min(c as i64);
                hi[i] = hi[i].max(c as i64);
            }
        }
        let mut ext = [1i64; MAX_DIM];
        let mut vol: f64 = 1.0;
        for i in 0..dim {
            ext[i] = hi[i] - lo[i] + 1;
            vol *= ext[i] as f64;
        }
        if vol <= (8.0 * points.len() as f64).max(4096.0) && vol <= (1u64 << 25) as f64 {
            let mut stride = [0usize; MAX_DIM];
            let mut s = 1usize;
            for i in (0..dim).rev() {
                stride[i] = s;
                s *= ext[i] as usize;
            }
            let mut table = vec![NONE; s];
            for (k, p) in points.iter().enumerate() {
                let idx: usize = p
                    .coords()
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (c as i64 - lo[i]) as usize * stride[i])
                    .sum();
                table[idx] = k as u32;
            }
            return Lookup::Dense {
                lo,
                ext,
                stride,
                table,
            };
        }
    }
    let mut map = FxHashMap::default();
    map.reserve(points.len());
    for (k, p) in points.iter().enumerate() {
        map.insert(*p, k as u32);
    }
    Lookup::Hash(map)
}

/// Ball of radius N in dimension d.
pub fn ball(dim: usize, n: u32) -> Result<Domain> {
    check_dim(dim)?;
    Domain::blow_up(&ShapeSpec::ball(dim), n)
}
