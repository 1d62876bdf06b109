//! Exact acceleration of a simple random walk away from a finite set.
//!
//! When the cube of radius r around the walker misses the set, the walk's
//! path until it leaves that cube cannot visit the set, so the whole
//! excursion is replaced by one draw from the cube exit law.

use super::cube::{jump_radii, CubeExit};
use crate::lattice::Point;
use crate::rng::Rng;
use crate::Result;
use rand::Rng as _;
use rustc_hash::FxHashSet;
use std::sync::{Arc, OnceLock};

const BLOCK: i32 = 8;

pub struct Jumper {
    dim: usize,
    lo: Point,
    hi: Point,
    blocks: FxHashSet<Point>,
    radii: Vec<i32>,
    tables: Vec<OnceLock<Arc<CubeExit>>>,
}

fn block_of(p: &Point) -> Point {
    let mut b = *p;
    b.coords_mut().iter_mut().for_each(|v| *v = v.div_euclid(BLOCK));
    b
}

impl Jumper {
    /// Jumper avoiding `points`, which must be nonempty.
    pub fn new(dim: usize, points: &[Point]) -> Jumper {
        let mut lo = points[0];
        let mut hi = points[0];
        let mut occupied = FxHashSet::default();
        for p in points {
            for i in 0..dim {
                lo.coords_mut()[i] = lo.coords()[i].min(p.coords()[i]);
                hi.coords_mut()[i] = hi.coords()[i].max(p.coords()[i]);
            }
            occupied.insert(block_of(p));
        }
        // Dilate by one block in sup norm: a walker in a block outside the
        // dilation is at sup distance > BLOCK from every point.
        let mut blocks = FxHashSet::default();
        let offsets = 3usize.pow(dim as u32);
        for b in &occupied {
            for code in 0..offsets {
                let mut q = *b;
                let mut c = code;
                for v in q.coords_mut() {
                    *v += (c % 3) as i32 - 1;
                    c /= 3;
                }
                blocks.insert(q);
            }
        }
        let radii = jump_radii(dim);
        let tables = radii.iter().map(|_| OnceLock::new()).collect();
        Jumper {
            dim,
            lo,
            hi,
            blocks,
            radii,
            tables,
        }
    }

    fn table(&self, k: usize) -> Result<&Arc<CubeExit>> {
        if let Some(t) = self.tables[k].get() {
            return Ok(t);
        }
        let t = CubeExit::shared(self.dim, self.radii[k])?;
        Ok(self.tables[k].get_or_init(|| t))
    }

    /// Sup distance from `w` to the bounding box of the set.
    fn box_gap(&self, w: &Point) -> i32 {
        let mut gap = 0;
        for i in 0..self.dim {
            let v = w.coords()[i];
            gap = gap.max(self.lo.coords()[i] - v).max(v - self.hi.coords()[i]);
        }
        gap
    }

    /// Radius of a cube around `w` guaranteed to miss the set, or 0.
    fn safe_radius(&self, w: &Point) -> i32 {
        let gap = self.box_gap(w);
        if gap > 0 {
            return gap - 1;
        }
        if self.blocks.contains(&block_of(w)) {
            0
        } else {
            BLOCK
        }
    }

    /// Advance `w` by one step, or by a whole cube excursion when that
    /// cannot skip a point of the set. Returns the number of walk steps the
    /// move stands for when it is a single step, and 0 for a jump.
    #[inline]
    pub fn advance(&self, w: &mut Point, rng: &mut Rng) -> Result<u32> {
        let safe = self.safe_radius(w);
        if safe >= self.radii[0] {
            let k = self.radii.iter().rposition(|&r| r <= safe).expect("smallest radius fits");
            let z = self.table(k)?.sample(rng);
            *w = *w + z;
            return Ok(0);
        }
        let dir = rng.gen_range(0..2 * self.dim);
        *w = w.step(dir);
        Ok(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Tag};

    #[test]
    fn jumps_never_cross_the_set() {
        let set = vec![Point::new(&[0, 0, 0]), Point::new(&[30, 5, -2])];
        let j = Jumper::new(3, &set);
        let mut rng = stream(3, Tag::Test, 0, 0);
        let mut w = Point::new(&[200, -90, 17]);
        for _ in 0..20_000 {
            let before = w;
            j.advance(&mut w, &mut rng).unwrap();
            let r = (w - before).linf();
            if r > 1 {
                // The cube of radius r − 1 around the old position avoided the set.
                for p in &set {
                    assert!((*p - before).linf() >= r);
                }
            }
        }
    }
}
