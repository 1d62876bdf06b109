//! Walk engines: free ranges, ranges of infinite walks inside a window,
//! walks conditioned to stay in a domain, and annulus excursions.

mod confined;
mod excursion;
mod window;

pub use confined::{ConfinedPath, ConfinedSampler};
pub use excursion::{excursion_stats, hit_trace_before_exit, AnnulusObstacleSampler, ExcursionStats};
pub use window::{range_in_window, WindowKernel};

use crate::lattice::{Domain, Point};
use crate::rng::Rng;
use rand::Rng as _;
use rustc_hash::FxHashSet;
use std::sync::Arc;

/// Hard cap on the steps of any single walk.
pub const STEP_CAP: u64 = 100_000_000;

/// Points visited by a walk, restricted to a window when there is one.
#[derive(Clone, Debug)]
pub struct Trace {
    pub window: Option<Arc<Domain>>,
    /// Sorted and without repetition.
    pub visited: Vec<Point>,
    pub steps_used: u64,
    pub start: Point,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.visited.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visited.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.visited.binary_search(p).is_ok()
    }

    pub fn to_domain(&self) -> Domain {
        Domain::from_points(self.dim(), self.visited.clone())
    }

    /// Union of traces in the same window.
    pub fn union(dim: usize, window: Option<Arc<Domain>>, start: Point, parts: &[Trace]) -> Trace {
        let mut visited: Vec<Point> = parts.iter().flat_map(|t| t.visited.iter().copied()).collect();
        visited.sort_unstable();
        visited.dedup();
        debug_assert!(visited.iter().all(|p| p.dim() == dim));
        Trace {
            window,
            visited,
            steps_used: parts.iter().map(|t| t.steps_used).sum(),
            start,
        }
    }

    /// Sorted coordinate CSV.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut s = (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for p in &self.visited {
            let row: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// The range {S_0, …, S_n} of an n-step walk from `start`, intersected with
/// `window` when given.
pub fn srw_range(start: &Point, n: u64, window: Option<&Arc<Domain>>, rng: &mut Rng) -> Trace {
    let d = start.dim();
    let mut seen: FxHashSet<Point> = FxHashSet::default();
    let keep = |p: &Point| window.is_none_or(|w| w.contains(p));
    let mut w = *start;
    if keep(&w) {
        seen.insert(w);
    }
    for _ in 0..n {
        w = w.step(rng.gen_range(0..2 * d));
        if keep(&w) {
            seen.insert(w);
        }
    }
    let mut visited: Vec<Point> = seen.into_iter().collect();
    visited.sort_unstable();
    Trace {
        window: window.cloned(),
        visited,
        steps_used: n,
        start: *start,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Tag};

    #[test]
    fn zero_steps_is_the_start() {
        let mut rng = stream(1, Tag::Test, 0, 0);
        let t = srw_range(&Point::new(&[1, 2, 3]), 0, None, &mut rng);
        assert_eq!(t.visited, vec![Point::new(&[1, 2, 3])]);
    }

    #[test]
    fn range_fraction_in_d3() {
        let n = 10_000;
        let mut inside = 0;
        for r in 0..100 {
            let mut rng = stream(2, Tag::Test, 0, r);
            let t = srw_range(&Point::origin(3), n, None, &mut rng);
            let f = t.len() as f64 / n as f64;
            if f > 0.5 && f < 0.8 {
                inside += 1;
            }
        }
        assert!(inside >= 99);
    }

    #[test]
    fn window_restricts_the_trace() {
        let win = Arc::new(crate::lattice::ball(3, 4).unwrap());
        let mut rng = stream(3, Tag::Test, 0, 0);
        let t = srw_range(&Point::origin(3), 5000, Some(&win), &mut rng);
        assert!(t.visited.iter().all(|p| win.contains(p)));
        assert!(t.contains(&Point::origin(3)));
    }
}
