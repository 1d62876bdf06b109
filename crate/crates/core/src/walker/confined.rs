//! Walks conditioned on R_t ⊆ A, sampled exactly by the Doob transform with
//! the survival vectors q_s(x) = P_x(R_s ⊆ A), q_s = P_A q_{s−1}.
//!
//! A step taken with r = t − s − 1 steps still to go moves to a neighbor y
//! with probability proportional to q_r(y). Only ratios matter, so vectors
//! are kept up to a scale. Checkpoints every `stride` levels are replayed
//! forward in blocks while the walkers move backward through the levels.
//! The killed chain is bipartite, so q_s settles into a two-periodic shape:
//! once q_{s+2} ∝ q_s to machine precision the two last shapes stand in for
//! every higher level.

use super::Trace;
use crate::lattice::{Chain, Domain, Point, NONE};
use crate::rng::Rng;
use crate::{Error, Result};
use rand::Rng as _;
use rayon::prelude::*;
use std::sync::Arc;

const RENORM: u64 = 64;
const SATURATION_TOL: f64 = 1e-14;
/// Walkers replayed together in one block pass.
const LOCKSTEP: usize = 64;

#[derive(Clone, Debug)]
struct Level {
    v: Vec<f64>,
    /// q = v·exp(log_scale).
    log_scale: f64,
}

impl Level {
    fn ones(n: usize) -> Level {
        Level {
            v: vec![1.0; n],
            log_scale: 0.0,
        }
    }

    fn step(&self, chain: &Chain, out: &mut Level) {
        chain.apply(&self.v, &mut out.v);
        out.log_scale = self.log_scale;
    }

    fn renormalize(&mut self) {
        let m = self.v.iter().fold(0.0f64, |a, &b| a.max(b));
        if m > 0.0 {
            self.v.iter_mut().for_each(|x| *x /= m);
            self.log_scale += m.ln();
        }
    }

    fn log_at(&self, s: usize) -> f64 {
        self.v[s].ln() + self.log_scale
    }
}

/// Survival vectors for horizon t on a domain.
pub struct ConfinedSampler {
    domain: Arc<Domain>,
    chain: Chain,
    t: u64,
    stride: u64,
    /// q at levels 0, stride, 2·stride, … below `explicit`.
    checkpoints: Vec<Level>,
    /// Levels below this are replayed from checkpoints.
    explicit: u64,
    /// Shapes of q at levels `explicit` and `explicit + 1` when saturated.
    tail: Option<[Level; 2]>,
    /// ln of q_{s+2}/q_s per two steps once saturated.
    log_lambda2: f64,
    /// q_t itself.
    top: Level,
}

/// One conditioned walk.
#[derive(Clone, Debug)]
pub struct ConfinedPath {
    /// S_0, …, S_t when recorded.
    pub path: Option<Vec<Point>>,
    pub trace: Trace,
}

impl ConfinedSampler {
    /// Build with checkpoint stride ⌈√t⌉ by default and a memory budget for
    /// checkpoints and one replay block.
    pub fn build(domain: Arc<Domain>, t: u64, stride: Option<u64>, mem_budget_bytes: u64) -> Result<ConfinedSampler> {
        if t == 0 {
            return Err(Error::param("confined horizon must be at least 1"));
        }
        if domain.is_empty() {
            return Err(Error::EmptyDomain("confined sampler on an empty domain".into()));
        }
        let stride = stride.unwrap_or_else(|| (t as f64).sqrt().ceil() as u64).max(1);
        let chain = Chain::auto(&domain);
        let n = chain.len();
        let vectors = t.div_ceil(stride) + stride + 4;
        let need = vectors.saturating_mul(n as u64 * 8);
        if need > mem_budget_bytes {
            return Err(Error::budget(format!(
                "confined sampler needs {need} bytes for {vectors} vectors of {n} states"
            )));
        }
        let mut checkpoints = vec![Level::ones(n)];
        let mut cur = Level::ones(n);
        let mut next = Level::ones(n);
        // Shape RENORM levels back; RENORM is even, so parities agree.
        let mut back: Option<Vec<f64>> = None;
        let mut s = 0u64;
        let mut tail = None;
        let mut log_lambda2 = 0.0;
        while s < t {
            cur.step(&chain, &mut next);
            std::mem::swap(&mut cur, &mut next);
            s += 1;
            if s.is_multiple_of(RENORM) || s == t {
                cur.renormalize();
            }
            if s.is_multiple_of(stride) && s < t {
                checkpoints.push(cur.clone());
            }
            if cur.v.iter().all(|&x| x == 0.0) {
                break;
            }
            if s.is_multiple_of(RENORM) {
                if let Some(prev) = &back {
                    let diff = prev.iter().zip(&cur.v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    if diff <= SATURATION_TOL && s + 2 < t {
                        let mut b = Level::ones(n);
                        cur.step(&chain, &mut b);
                        let mut c = Level::ones(n);
                        b.step(&chain, &mut c);
                        log_lambda2 = (chain.total(&c.v) / chain.total(&cur.v)).ln();
                        tail = Some([cur.clone(), b]);
                        break;
                    }
                }
                back = Some(cur.v.clone());
            }
        }
        let explicit = if tail.is_some() { s } else { t };
        checkpoints.truncate(explicit.div_ceil(stride) as usize);
        let top = match &tail {
            None => cur,
            Some(shapes) => {
                let k = (t - s) / 2;
                let mut q = shapes[((t - s) % 2) as usize].clone();
                q.log_scale += k as f64 * log_lambda2;
                q
            }
        };
        Ok(ConfinedSampler {
            domain,
            chain,
            t,
            stride,
            checkpoints,
            explicit,
            tail,
            log_lambda2,
            top,
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn horizon(&self) -> u64 {
        self.t
    }

    pub fn stride(&self) -> u64 {
        self.stride
    }

    /// Level from which q is extrapolated, if it saturated before t.
    pub fn saturation_level(&self) -> Option<u64> {
        self.tail.as_ref().map(|_| self.explicit)
    }

    /// ln P_x(R_t ⊆ A), −∞ when zero.
    pub fn log_survival(&self, x: &Point) -> Result<f64> {
        let i = self
            .domain
            .index_of(x)
            .ok_or_else(|| Error::param(format!("{x} outside the domain")))?;
        Ok(self.top.log_at(self.chain.state_of(i) as usize))
    }

    /// P_x(R_t ⊆ A).
    pub fn survival(&self, x: &Point) -> Result<f64> {
        Ok(self.log_survival(x)?.exp())
    }

    /// q_s(x) for every s ≤ t with s below the saturation level, or by
    /// extrapolation above it. Returns ln q.
    pub fn log_survival_at(&self, x: &Point, s: u64) -> Result<f64> {
        let i = self
            .domain
            .index_of(x)
            .ok_or_else(|| Error::param(format!("{x} outside the domain")))?;
        let st = self.chain.state_of(i) as usize;
        if s > self.t {
            return Err(Error::param("level above the horizon"));
        }
        if s == self.t {
            return Ok(self.top.log_at(st));
        }
        if s >= self.explicit {
            let shapes = self.tail.as_ref().expect("saturated");
            let k = (s - self.explicit) / 2;
            let q = &shapes[((s - self.explicit) % 2) as usize];
            return Ok(q.log_at(st) + k as f64 * self.log_lambda2);
        }
        let base = (s / self.stride) as usize;
        let mut cur = self.checkpoints[base].clone();
        let mut next = cur.clone();
        for _ in base as u64 * self.stride..s {
            cur.step(&self.chain, &mut next);
            std::mem::swap(&mut cur, &mut next);
            cur.renormalize();
        }
        Ok(cur.log_at(st))
    }

    /// Shapes of q_r for r in [lo, hi), indexed by r − lo.
    fn replay(&self, lo: u64, hi: u64) -> Vec<Vec<f64>> {
        let base = (lo / self.stride) as usize;
        let mut cur = self.checkpoints[base].clone();
        let mut next = cur.clone();
        let mut r = base as u64 * self.stride;
        let mut out = Vec::with_capacity((hi - lo) as usize);
        while r < hi {
            if r >= lo {
                out.push(cur.v.clone());
            }
            cur.step(&self.chain, &mut next);
            std::mem::swap(&mut cur, &mut next);
            cur.renormalize();
            r += 1;
        }
        out
    }

    /// Conditioned walks from `start`, one per rng, run in lockstep groups.
    pub fn walks(&self, start: &Point, rngs: Vec<Rng>, keep_paths: bool) -> Result<Vec<ConfinedPath>> {
        let s0 = self
            .domain
            .index_of(start)
            .ok_or_else(|| Error::param(format!("{start} outside the domain")))?;
        if self.log_survival(start)? == f64::NEG_INFINITY {
            return Err(Error::numeric(format!(
                "P(R_t ⊆ A) underflows or vanishes from {start}"
            )));
        }
        let groups: Vec<Vec<Rng>> = {
            let mut v = Vec::new();
            let mut it = rngs.into_iter().peekable();
            while it.peek().is_some() {
                v.push(it.by_ref().take(LOCKSTEP).collect());
            }
            v
        };
        let out: Vec<Vec<ConfinedPath>> = groups
            .into_par_iter()
            .map(|g| self.walk_group(s0, g, keep_paths))
            .collect();
        Ok(out.into_iter().flatten().collect())
    }

    /// One conditioned walk from `start`.
    pub fn walk(&self, start: &Point, rng: Rng, keep_path: bool) -> Result<ConfinedPath> {
        Ok(self.walks(start, vec![rng], keep_path)?.pop().expect("one walk"))
    }

    fn walk_group(&self, s0: u32, mut rngs: Vec<Rng>, keep_paths: bool) -> Vec<ConfinedPath> {
        let n = self.domain.len();
        let k = rngs.len();
        let mut pos = vec![s0; k];
        let mut seen: Vec<Vec<u64>> = vec![vec![0u64; n.div_ceil(64)]; k];
        let mut order: Vec<Vec<u32>> = vec![vec![s0]; k];
        let mut paths: Vec<Vec<u32>> = if keep_paths { vec![vec![s0]; k] } else { vec![] };
        for s in &mut seen {
            s[s0 as usize / 64] |= 1 << (s0 % 64);
        }
        let mut weights = [0.0f64; 16];
        let mut move_all = |shape: &[f64], rngs: &mut [Rng]| {
            for w in 0..k {
                let row = self.domain.neighbor_row(pos[w]);
                let mut total = 0.0;
                for (slot, &j) in weights.iter_mut().zip(row) {
                    *slot = if j == NONE { 0.0 } else { shape[self.chain.state_of(j) as usize] };
                    total += *slot;
                }
                debug_assert!(total > 0.0, "conditioned walk stuck");
                let mut u = rngs[w].gen::<f64>() * total;
                let mut pick = row.len();
                for (dir, &wt) in weights.iter().enumerate().take(row.len()) {
                    if wt > 0.0 {
                        pick = dir;
                        if u < wt {
                            break;
                        }
                        u -= wt;
                    }
                }
                let j = row[pick];
                pos[w] = j;
                let (word, bit) = (j as usize / 64, j % 64);
                if seen[w][word] >> bit & 1 == 0 {
                    seen[w][word] |= 1 << bit;
                    order[w].push(j);
                }
                if keep_paths {
                    paths[w].push(j);
                }
            }
        };
        // Levels r = t − 1 down to 0; the step at level r uses q_r.
        let mut r = self.t;
        if let Some(shapes) = &self.tail {
            while r > self.explicit {
                r -= 1;
                move_all(&shapes[((r - self.explicit) % 2) as usize].v, &mut rngs);
            }
        }
        while r > 0 {
            let lo = ((r - 1) / self.stride) * self.stride;
            let block = self.replay(lo, r);
            for shape in block.iter().rev() {
                r -= 1;
                move_all(shape, &mut rngs);
            }
        }
        (0..k)
            .map(|w| {
                let mut idx = std::mem::take(&mut order[w]);
                idx.sort_unstable();
                let start = self.domain.point(s0);
                ConfinedPath {
                    path: keep_paths.then(|| paths[w].iter().map(|&i| self.domain.point(i)).collect()),
                    trace: Trace {
                        window: Some(self.domain.clone()),
                        visited: idx.into_iter().map(|i| self.domain.point(i)).collect(),
                        steps_used: self.t,
                        start,
                    },
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ball;
    use crate::rng::{stream, Tag};
    use rustc_hash::FxHashMap;

    const BUDGET: u64 = 1 << 30;

    fn sampler(dom: Domain, t: u64) -> ConfinedSampler {
        ConfinedSampler::build(Arc::new(dom), t, None, BUDGET).unwrap()
    }

    #[test]
    fn tiny_domains() {
        let single = sampler(Domain::from_points(3, vec![Point::origin(3)]), 1);
        assert_eq!(single.survival(&Point::origin(3)).unwrap(), 0.0);
        let b1 = sampler(ball(3, 1).unwrap(), 1);
        assert!((b1.survival(&Point::origin(3)).unwrap() - 1.0).abs() < 1e-15);
        assert!((b1.survival(&Point::unit(3, 0)).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    /// Number of paths of length s from each point that stay in the set.
    fn path_counts(dom: &Domain, s: u32) -> Vec<u64> {
        fn count(dom: &Domain, i: u32, left: u32) -> u64 {
            if left == 0 {
                return 1;
            }
            dom.neighbor_row(i)
                .iter()
                .filter(|&&j| j != NONE)
                .map(|&j| count(dom, j, left - 1))
                .sum()
        }
        (0..dom.len() as u32).map(|i| count(dom, i, s)).collect()
    }

    #[test]
    fn survival_equals_path_counts() {
        let shapes = [
            ball(3, 1).unwrap(),
            Domain::from_points(
                3,
                vec![
                    Point::new(&[0, 0, 0]),
                    Point::new(&[1, 0, 0]),
                    Point::new(&[1, 1, 0]),
                    Point::new(&[2, 1, 0]),
                    Point::new(&[2, 1, 1]),
                    Point::new(&[0, 0, 1]),
                ],
            ),
        ];
        for dom in shapes {
            for s in 1..=8u32 {
                let q = sampler(dom.clone(), s as u64);
                let counts = path_counts(&dom, s);
                for (p, &c) in dom.points().iter().zip(&counts) {
                    let v = q.survival(p).unwrap() * 6f64.powi(s as i32);
                    assert!((v - c as f64).abs() <= 1e-9 * (c as f64).max(1.0), "{p} s={s}: {v} vs {c}");
                }
            }
        }
    }

    #[test]
    fn paths_match_enumeration() {
        let dom = Arc::new(ball(3, 1).unwrap());
        let t = 4;
        let q = ConfinedSampler::build(dom.clone(), t, Some(2), BUDGET).unwrap();
        let o = Point::origin(3);
        // Every surviving path is equally likely under the conditioning.
        fn enumerate(dom: &Domain, path: &mut Vec<u32>, left: u64, out: &mut Vec<Vec<u32>>) {
            if left == 0 {
                out.push(path.clone());
                return;
            }
            let i = *path.last().unwrap();
            for &j in dom.neighbor_row(i) {
                if j != NONE {
                    path.push(j);
                    enumerate(dom, path, left - 1, out);
                    path.pop();
                }
            }
        }
        let mut all = Vec::new();
        enumerate(&dom, &mut vec![dom.index_of(&o).unwrap()], t, &mut all);
        let index: FxHashMap<Vec<Point>, usize> = all
            .iter()
            .enumerate()
            .map(|(k, p)| (p.iter().map(|&i| dom.point(i)).collect(), k))
            .collect();
        let n = 40_000u32;
        let rngs = (0..n).map(|r| stream(9, Tag::Test, 0, r)).collect();
        let mut counts = vec![0.0; all.len()];
        for w in q.walks(&o, rngs, true).unwrap() {
            counts[index[w.path.as_ref().unwrap()]] += 1.0;
        }
        let p: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();
        let u = vec![1.0 / all.len() as f64; all.len()];
        assert!(crate::stats::total_variation(&p, &u) < 0.02);
    }

    #[test]
    fn saturation_matches_explicit_levels() {
        let dom = Arc::new(ball(3, 5).unwrap());
        let t = 20_000;
        let q = ConfinedSampler::build(dom.clone(), t, None, BUDGET).unwrap();
        let sat = q.saturation_level().expect("saturates");
        assert!(sat < t);
        let o = Point::origin(3);
        for extra in [100, 101, 5000] {
            let chain = Chain::full(&dom);
            let mut cur = Level::ones(dom.len());
            let mut next = cur.clone();
            for _ in 0..sat + extra {
                cur.step(&chain, &mut next);
                std::mem::swap(&mut cur, &mut next);
                cur.renormalize();
            }
            let a = cur.log_at(dom.index_of(&o).unwrap() as usize);
            let b = q.log_survival_at(&o, sat + extra).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}
