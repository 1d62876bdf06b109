//! Lattice geometry: points, shapes, blow-ups, boundaries and adjacency.

mod domain;
mod shape;
mod symmetry;

pub use domain::{ball, dist2, Domain, NONE};
pub use shape::{BoxSpec, Rational, ShapeKind, ShapeSpec};
pub use symmetry::{canonical, Chain, SignedPerm};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Sub};

pub const MAX_DIM: usize = 8;
pub const MIN_DIM: usize = 3;

/// A point of Z^d, 1 ≤ d ≤ 8, stored inline so it is `Copy`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<i32>", try_from = "Vec<i32>")]
pub struct Point {
    dim: u8,
    c: [i32; MAX_DIM],
}

impl Point {
    pub fn origin(dim: usize) -> Point {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Point {
            dim: dim as u8,
            c: [0; MAX_DIM],
        }
    }

    pub fn new(coords: &[i32]) -> Point {
        let mut p = Point::origin(coords.len());
        p.c[..coords.len()].copy_from_slice(coords);
        p
    }

    pub fn unit(dim: usize, axis: usize) -> Point {
        let mut p = Point::origin(dim);
        p.c[axis] = 1;
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn coords_mut(&mut self) -> &mut [i32] {
        &mut self.c[..self.dim as usize]
    }

    #[inline]
    pub fn norm2(&self) -> i64 {
        self.coords().iter().map(|&v| v as i64 * v as i64).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn linf(&self) -> i32 {
        self.coords().iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Neighbor in direction `dir` ∈ 0..2d: axis `dir / 2`, positive when `dir` is even.
    #[inline]
    pub fn step(&self, dir: usize) -> Point {
        let mut p = *self;
        p.c[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
        p
    }

    pub fn scale(&self, k: i32) -> Point {
        let mut p = *self;
        p.coords_mut().iter_mut().for_each(|v| *v *= k);
        p
    }

    pub fn neighbors(&self) -> impl Iterator<Item = Point> + '_ {
        (0..2 * self.dim()).map(move |k| self.step(k))
    }
}

/// The 2d nearest neighbors x ± e_i, ordered +e_1, −e_1, +e_2, −e_2, ...
pub fn neighbors(x: &Point) -> Vec<Point> {
    x.neighbors().collect()
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(mut self, o: Point) -> Point {
        debug_assert_eq!(self.dim, o.dim);
        for i in 0..self.dim() {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(mut self, o: Point) -> Point {
        debug_assert_eq!(self.dim, o.dim);
        for i in 0..self.dim() {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<Point> for Vec<i32> {
    fn from(p: Point) -> Vec<i32> {
        p.coords().to_vec()
    }
}

impl TryFrom<Vec<i32>> for Point {
    type Error = String;
    fn try_from(v: Vec<i32>) -> Result<Point, String> {
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(format!("point needs 1..={MAX_DIM} coordinates, got {}", v.len()));
        }
        Ok(Point::new(&v))
    }
}

pub fn check_dim(dim: usize) -> crate::Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(crate::Error::param(format!(
            "dimension {dim} unsupported (need {MIN_DIM} ≤ d ≤ {MAX_DIM})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbors_of_origin_d3() {
        let n = neighbors(&Point::origin(3));
        assert_eq!(n.len(), 6);
        for axis in 0..3 {
            assert!(n.contains(&Point::unit(3, axis)));
            assert!(n.contains(&Point::unit(3, axis).scale(-1)));
        }
    }

    #[test]
    fn neighbors_of_e1() {
        let e1 = Point::unit(3, 0);
        let n = neighbors(&e1);
        let expect = [
            Point::new(&[2, 0, 0]),
            Point::new(&[0, 0, 0]),
            Point::new(&[1, 1, 0]),
            Point::new(&[1, -1, 0]),
            Point::new(&[1, 0, 1]),
            Point::new(&[1, 0, -1]),
        ];
        assert_eq!(n, expect);
    }

    #[test]
    fn neighbors_d5() {
        assert_eq!(neighbors(&Point::origin(5)).len(), 10);
    }

    #[test]
    fn serde_roundtrip() {
        let p = Point::new(&[3, -1, 2]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[3,-1,2]");
        let q: Point = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
