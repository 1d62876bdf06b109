//! Random interlacements seen through a finite window, and the i.i.d.
//! Bernoulli field used for comparison.
//!
//! The trajectories of I(u) that meet a window W form a Poisson(u·cap W)
//! family. Parametrize each by its first visit to W: the entry point has law
//! ē_W, the forward part is a walk from there, and the backward part is a walk
//! conditioned never to hit W, so it leaves no trace in W at all.

use crate::lattice::{Domain, Point, NONE};
use crate::rng::{stream, Rng, Tag};
use crate::stats::MeanErr;
use crate::walker::{range_in_window, Trace, WindowKernel, STEP_CAP};
use crate::{Error, Result};
use rand::distributions::Distribution;
use rand::Rng as _;
use rayon::prelude::*;
use std::sync::Arc;

/// Means at or below this are drawn by inversion.
const INVERSION_MAX: f64 = 30.0;

/// Poisson(mean) draw, deterministic for a given stream.
pub fn poisson(mean: f64, rng: &mut Rng) -> Result<u64> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(Error::param(format!("Poisson mean {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean <= INVERSION_MAX {
        let u: f64 = rng.gen();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        return Ok(k);
    }
    let d = rand_distr::Poisson::new(mean).map_err(|e| Error::numeric(e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

#[derive(Clone, Debug)]
pub struct InterlacementSample {
    pub u: f64,
    pub window: Arc<Domain>,
    pub trace: Trace,
    pub trajectory_count: u64,
}

impl InterlacementSample {
    /// Coordinate CSV with a commented header.
    pub fn to_csv(&self, seed: u64, window_spec: &str) -> String {
        format!(
            "# u={} seed={} window={} trajectory_count={}\n{}",
            self.u,
            seed,
            window_spec,
            self.trajectory_count,
            self.trace.to_csv()
        )
    }

    pub fn density(&self) -> f64 {
        self.trace.len() as f64 / self.window.len() as f64
    }
}

fn trajectory(kernel: &WindowKernel, rng: &mut Rng) -> Result<Trace> {
    let x = kernel.profile().sample(rng);
    range_in_window(&x, kernel, rng)
}

fn empty_trace(window: &Arc<Domain>) -> Trace {
    Trace {
        window: Some(window.clone()),
        visited: Vec::new(),
        steps_used: 0,
        start: Point::origin(window.dim()),
    }
}

/// I(u) ∩ W for the window of `kernel`.
pub fn sample_interlacement(u: f64, kernel: &WindowKernel, rng: &mut Rng) -> Result<InterlacementSample> {
    if !(u.is_finite() && u >= 0.0) {
        return Err(Error::param(format!("intensity u = {u}")));
    }
    let window = kernel.window().clone();
    let count = poisson(u * kernel.profile().cap(), rng)?;
    let parts = (0..count).map(|_| trajectory(kernel, rng)).collect::<Result<Vec<_>>>()?;
    let trace = if parts.is_empty() {
        empty_trace(&window)
    } else {
        Trace::union(window.dim(), Some(window.clone()), Point::origin(window.dim()), &parts)
    };
    Ok(InterlacementSample {
        u,
        window,
        trace,
        trajectory_count: count,
    })
}

/// I(u) ∩ W for every u in `us` from one Poisson process: trajectories are
/// drawn at the largest intensity with uniform labels in [0, u_max], and the
/// sample at u keeps those labelled ≤ u. Traces are nested along increasing u.
pub fn sample_interlacement_coupled(us: &[f64], kernel: &WindowKernel, rng: &mut Rng) -> Result<Vec<InterlacementSample>> {
    if us.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
        return Err(Error::param("intensities must be finite and nonnegative"));
    }
    let window = kernel.window().clone();
    let u_max = us.iter().copied().fold(0.0, f64::max);
    let count = poisson(u_max * kernel.profile().cap(), rng)?;
    let mut labelled = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let label = rng.gen::<f64>() * u_max;
        labelled.push((label, trajectory(kernel, rng)?));
    }
    Ok(us
        .iter()
        .map(|&u| {
            let parts: Vec<Trace> = labelled.iter().filter(|(l, _)| *l <= u).map(|(_, t)| t.clone()).collect();
            let trace = if parts.is_empty() {
                empty_trace(&window)
            } else {
                Trace::union(window.dim(), Some(window.clone()), Point::origin(window.dim()), &parts)
            };
            InterlacementSample {
                u,
                window: window.clone(),
                trace,
                trajectory_count: parts.len() as u64,
            }
        })
        .collect())
}

/// Whether the trajectory entering the window at `start` ever visits the
/// marked points.
fn trajectory_hits(kernel: &WindowKernel, marked: &[bool], start: u32, rng: &mut Rng) -> Result<bool> {
    let w = kernel.window();
    let d = w.dim();
    let mut cur = Some(start);
    let mut steps = 0u64;
    while let Some(i) = cur {
        if marked[i as usize] {
            return Ok(true);
        }
        let dir = rng.gen_range(0..2 * d);
        let j = w.neighbor(i, dir);
        cur = if j != NONE {
            Some(j)
        } else {
            kernel.enter_from(&w.point(i).step(dir), rng)?
        };
        steps += 1;
        if steps >= STEP_CAP {
            return Err(Error::budget(format!("window walk exceeded {STEP_CAP} steps")));
        }
    }
    Ok(false)
}

/// Monte Carlo P(I(u) ∩ K = ∅) from interlacements sampled in the window of
/// `kernel`. Replica r uses stream (seed, Vacancy, grid, r).
pub fn vacancy_probability_mc(
    u: f64,
    k: &Domain,
    kernel: &WindowKernel,
    replicas: usize,
    seed: u64,
    grid: u32,
) -> Result<MeanErr> {
    if !(u.is_finite() && u >= 0.0) {
        return Err(Error::param(format!("intensity u = {u}")));
    }
    if replicas == 0 {
        return Err(Error::param("replicas must be positive"));
    }
    let w = kernel.window();
    let mut marked = vec![false; w.len()];
    for p in k.points() {
        let i = w
            .index_of(p)
            .ok_or_else(|| Error::param(format!("{p} of K lies outside the window")))?;
        marked[i as usize] = true;
    }
    if k.is_empty() || u == 0.0 {
        return Ok(MeanErr {
            mean: 1.0,
            stderr: 0.0,
            n: replicas,
        });
    }
    let mean_count = u * kernel.profile().cap();
    let values = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Tag::Vacancy, grid, r as u32);
            let count = poisson(mean_count, &mut rng)?;
            for _ in 0..count {
                let x = kernel.profile().sample_index(&mut rng);
                if trajectory_hits(kernel, &marked, x, &mut rng)? {
                    return Ok(0.0);
                }
            }
            Ok(1.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MeanErr::of(&values))
}

#[derive(Clone, Debug)]
pub struct BernoulliField {
    pub p: f64,
    pub window: Arc<Domain>,
    /// Sorted.
    pub occupied: Vec<Point>,
}

impl BernoulliField {
    pub fn to_domain(&self) -> Domain {
        Domain::from_points(self.window.dim(), self.occupied.clone())
    }
}

/// Each window point occupied independently with probability p.
pub fn sample_bernoulli_field(p: f64, window: Arc<Domain>, rng: &mut Rng) -> Result<BernoulliField> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("Bernoulli parameter {p} outside [0,1]")));
    }
    let occupied = window.points().iter().filter(|_| rng.gen::<f64>() < p).copied().collect();
    Ok(BernoulliField { p, window, occupied })
}

/// p = 1 − e^{−u}.
pub fn bernoulli_parameter(u: f64) -> f64 {
    -(-u).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ball;
    use crate::potential::{GreenTable, SolverConfig};

    fn kernel(d: usize, n: u32) -> WindowKernel {
        WindowKernel::new(Arc::new(ball(d, n).unwrap()), GreenTable::shared(d).unwrap(), &SolverConfig::default()).unwrap()
    }

    #[test]
    fn poisson_moments() {
        for mean in [0.7, 12.0, 80.0] {
            let n = 40_000;
            let v: Vec<f64> = (0..n)
                .map(|r| poisson(mean, &mut stream(1, Tag::Test, 0, r)).unwrap() as f64)
                .collect();
            let me = MeanErr::of(&v);
            assert!((me.mean - mean).abs() < 4.0 * (mean / n as f64).sqrt(), "{mean}: {me:?}");
            let var = me.stderr.powi(2) * n as f64;
            assert!((var / mean - 1.0).abs() < 0.05, "{mean}: var {var}");
        }
        assert_eq!(poisson(0.0, &mut stream(1, Tag::Test, 0, 0)).unwrap(), 0);
        assert!(poisson(-1.0, &mut stream(1, Tag::Test, 0, 0)).is_err());
    }

    #[test]
    fn zero_intensity_is_empty() {
        let k = kernel(3, 3);
        for r in 0..20 {
            let s = sample_interlacement(0.0, &k, &mut stream(2, Tag::Test, 0, r)).unwrap();
            assert_eq!(s.trajectory_count, 0);
            assert!(s.trace.is_empty());
        }
    }

    #[test]
    fn coupled_traces_are_nested() {
        let k = kernel(3, 4);
        let us = [0.1, 0.5, 1.0, 3.0];
        for r in 0..20 {
            let s = sample_interlacement_coupled(&us, &k, &mut stream(3, Tag::Test, 0, r)).unwrap();
            for w in s.windows(2) {
                assert!(w[0].trace.visited.iter().all(|p| w[1].trace.contains(p)));
                assert!(w[0].trajectory_count <= w[1].trajectory_count);
            }
        }
    }

    #[test]
    fn singleton_vacancy() {
        let k = kernel(3, 6);
        let g0 = k.table().g0();
        let single = Domain::from_points(3, vec![Point::origin(3)]);
        let me = vacancy_probability_mc(1.0, &single, &k, 40_000, 4, 0).unwrap();
        let exact = (-1.0 / g0).exp();
        assert!((exact - 0.5171).abs() < 1e-4);
        assert!((me.mean - exact).abs() < 3.0 * me.stderr, "{me:?} vs {exact}");
    }

    #[test]
    fn bernoulli_field() {
        let w = Arc::new(ball(3, 10).unwrap());
        let mut rng = stream(5, Tag::Test, 0, 0);
        assert!(sample_bernoulli_field(0.0, w.clone(), &mut rng).unwrap().occupied.is_empty());
        assert_eq!(sample_bernoulli_field(1.0, w.clone(), &mut rng).unwrap().occupied.len(), w.len());
        let f = sample_bernoulli_field(0.3, w.clone(), &mut rng).unwrap();
        let n = w.len() as f64;
        let sd = (n * 0.3 * 0.7).sqrt();
        assert!((f.occupied.len() as f64 - 0.3 * n).abs() < 4.0 * sd);
        assert!(sample_bernoulli_field(1.5, w, &mut rng).is_err());
        assert!((bernoulli_parameter(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }
}
