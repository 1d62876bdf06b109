//! Excursions of a confined path between shells of a ball, and the obstacle
//! traced by a second walk crossing the annulus B^{1−ε} ∖ B^{1−3ε}.

use super::{Trace, WindowKernel, STEP_CAP};
use crate::lattice::{Domain, Point, Rational};
use crate::potential::{hit_before_boundary, EquilibriumProfile};
use crate::rng::Rng;
use crate::{Error, Result};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// |x| ≤ r·N, decided in exact arithmetic.
fn within(x: &Point, r: &Rational, n: u32) -> bool {
    let lhs = x.norm2() as i128 * (r.den() as i128).pow(2);
    let rhs = (r.num() as i128 * n as i128).pow(2);
    lhs <= rhs
}

fn one_minus(k: i64, r: &Rational) -> Result<Rational> {
    Rational::new(r.den() - k * r.num(), r.den())
}

/// Successive entrance times into B^{1−3ε} and exit times from B^{1−2δ}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionStats {
    /// Completed excursions N(t) = max{i : τ^out_i ≤ t}.
    pub count: usize,
    pub in_times: Vec<u64>,
    /// τ^out_1, τ^out_2, …; τ^out_0 = 0 is implicit.
    pub out_times: Vec<u64>,
    pub inner_radius: f64,
    pub exit_radius: f64,
    pub outer_radius: f64,
}

/// τ^in_{i+1} = inf{s > τ^out_i : X_s ∈ B^{1−3ε}} and
/// τ^out_{i+1} = inf{s > τ^in_{i+1} : X_s ∉ B^{1−2δ}}, for a path in B_N.
pub fn excursion_stats(path: &[Point], n: u32, eps: Rational, delta: Rational) -> Result<ExcursionStats> {
    let quarter = Rational::new(1, 4)?;
    if !delta.is_positive() || !delta.lt(&eps) || !eps.lt(&quarter) {
        return Err(Error::param(format!("need 0 < δ < ε < 1/4, got δ={delta}, ε={eps}")));
    }
    let inner = one_minus(3, &eps)?;
    let exit = one_minus(2, &delta)?;
    if inner.floor_times(n as i64) < 1 {
        return Err(Error::EmptyDomain(format!(
            "inner shell B^(1-3ε) is trivial at N={n}"
        )));
    }
    let mut in_times = Vec::new();
    let mut out_times = Vec::new();
    let mut seeking_in = true;
    for (s, x) in path.iter().enumerate().skip(1) {
        if seeking_in {
            if within(x, &inner, n) {
                in_times.push(s as u64);
                seeking_in = false;
            }
        } else if !within(x, &exit, n) {
            out_times.push(s as u64);
            seeking_in = true;
        }
    }
    Ok(ExcursionStats {
        count: out_times.len(),
        in_times,
        out_times,
        inner_radius: inner.to_f64() * n as f64,
        exit_radius: exit.to_f64() * n as f64,
        outer_radius: n as f64,
    })
}

/// P_start(H_target < H_∂A) for the walk killed on the inner boundary of A.
pub fn hit_trace_before_exit(outer: &Domain, target: &Trace, start: &Point) -> Result<f64> {
    let s = outer
        .index_of(start)
        .ok_or_else(|| Error::param(format!("{start} outside the domain")))?;
    let mut mask = vec![false; outer.len()];
    for p in &target.visited {
        let i = outer
            .index_of(p)
            .ok_or_else(|| Error::param(format!("target point {p} outside the domain")))?;
        mask[i as usize] = true;
    }
    Ok(hit_before_boundary(outer, &mask)?[s as usize])
}

/// Draws R^{2,ε}_∞: a walk from z ~ ē_{B_N} is followed from its first visit
/// to B^{1−2ε} until it enters B^{1−3ε} or reaches ∂B^{1−ε}.
pub struct AnnulusObstacleSampler {
    ball: EquilibriumProfile,
    entry: WindowKernel,
    mid: Domain,
    core: Domain,
}

impl AnnulusObstacleSampler {
    /// `ball` is the profile of B_N; `entry` the entrance kernel of B^{1−2ε}.
    pub fn new(ball: EquilibriumProfile, entry: WindowKernel, eps: Rational) -> Result<AnnulusObstacleSampler> {
        let quarter = Rational::new(1, 4)?;
        if !eps.is_positive() || !eps.lt(&quarter) {
            return Err(Error::param(format!("ε = {eps} outside (0, 1/4)")));
        }
        let b = ball.support().clone();
        let mid = b.shrink(one_minus(1, &eps)?)?;
        let core = b.shrink(one_minus(3, &eps)?)?;
        let expected = b.shrink(one_minus(2, &eps)?)?;
        if expected.points() != entry.window().points() {
            return Err(Error::param("entrance kernel is not built on B^(1-2ε)"));
        }
        Ok(AnnulusObstacleSampler { ball, entry, mid, core })
    }

    pub fn ball(&self) -> &Arc<Domain> {
        self.ball.support()
    }

    pub fn core(&self) -> &Domain {
        &self.core
    }

    /// None when the walk never reaches B^{1−2ε}.
    pub fn sample(&self, rng: &mut Rng) -> Result<Option<Trace>> {
        let z = self.ball.sample(rng);
        let inner = self.entry.window();
        let Some(y) = self.entry.enter_from(&z, rng)? else {
            return Ok(None);
        };
        let mut x = inner.point(y);
        let mut visited = vec![x];
        let d = x.dim();
        let mut steps = 0u64;
        loop {
            if self.core.contains(&x) {
                // The endpoint lies in the core and is left out of the obstacle.
                visited.pop();
                break;
            }
            let i = self.mid.index_of(&x).expect("walk stays in B^(1-ε) until it stops");
            if self.mid.is_boundary(i) {
                break;
            }
            x = x.step(rng.gen_range(0..2 * d));
            visited.push(x);
            steps += 1;
            if steps >= STEP_CAP {
                return Err(Error::budget("annulus crossing exceeded the step cap"));
            }
        }
        visited.sort_unstable();
        visited.dedup();
        Ok(Some(Trace {
            window: Some(self.ball.support().clone()),
            visited,
            steps_used: steps,
            start: z,
        }))
    }
}
