//! Monte Carlo capacity: cap(K) = Σ_{x ∈ ∂K} P_x(H̃_K = ∞).
//!
//! Walks start at uniform points of ∂K and run until they return to K or
//! reach distance R from its center. An escape at z still returns later with
//! probability Σ_y g(z − y) e(y); e is itself estimated by the sample, which
//! gives a small linear system for the corrected per-walk values.

use super::jump::Jumper;
use super::GreenTable;
use crate::lattice::{Domain, Point};
use crate::rng::{stream, Rng, Tag};
use crate::stats::MeanErr;
use crate::{Error, Result};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    /// R as a multiple of diam(K).
    pub radius_factor: f64,
    pub replicas: usize,
    /// Hard cap on moves per walk.
    pub step_cap: u64,
    /// Escaped walks used to estimate e inside the correction.
    pub correction_sample: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            radius_factor: 5.0,
            replicas: 20_000,
            step_cap: 100_000_000,
            correction_sample: 2048,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCapacity {
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub escapes: usize,
    pub radius: f64,
}

struct Walk {
    start: u32,
    exit: Option<Point>,
}

fn escape_walk(
    k: &Domain,
    jumper: &Jumper,
    center: &[f64],
    r2: f64,
    step_cap: u64,
    rng: &mut Rng,
) -> Result<Walk> {
    let b = k.boundary_indices();
    let start = b[rng.gen_range(0..b.len())];
    let mut w = k.point(start);
    let mut moves = 0u64;
    loop {
        jumper.advance(&mut w, rng)?;
        moves += 1;
        if k.contains(&w) {
            return Ok(Walk { start, exit: None });
        }
        if crate::lattice::dist2(&w, center) >= r2 {
            return Ok(Walk { start, exit: Some(w) });
        }
        if moves >= step_cap {
            return Err(Error::budget(format!("escape walk exceeded {step_cap} moves")));
        }
    }
}

/// Monte Carlo estimate of cap(K) with escape radius `radius` (None for the
/// configured multiple of the diameter). Walk `i` uses stream (seed, grid, i).
pub fn capacity_mc(
    k: &Domain,
    table: &GreenTable,
    radius: Option<f64>,
    cfg: &McConfig,
    seed: u64,
    grid: u32,
) -> Result<McCapacity> {
    if k.is_empty() {
        return Ok(McCapacity {
            estimate: 0.0,
            stderr: 0.0,
            replicas: cfg.replicas,
            escapes: 0,
            radius: 0.0,
        });
    }
    if cfg.replicas == 0 {
        return Err(Error::param("capacity_mc needs at least one replica"));
    }
    let diam = k.diameter();
    let r = radius.unwrap_or(cfg.radius_factor * diam);
    if r < 2.0 * diam {
        return Err(Error::param(format!(
            "escape radius {r} is below twice the diameter {diam}"
        )));
    }
    let center = k.center();
    let jumper = Jumper::new(k.dim(), k.points());
    let walks: Vec<Walk> = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Tag::Capacity, grid, i as u32);
            escape_walk(k, &jumper, &center, r * r, cfg.step_cap, &mut rng)
        })
        .collect::<Result<_>>()?;

    let m = k.boundary_indices().len() as f64;
    let n = walks.len() as f64;
    let esc: Vec<(Point, Point)> = walks
        .iter()
        .filter_map(|w| w.exit.map(|z| (k.point(w.start), z)))
        .collect();
    let corrected = correct(&esc, table, m / n, cfg.correction_sample);
    let mut values = vec![0.0; walks.len()];
    let mut it = corrected.into_iter();
    for (v, w) in values.iter_mut().zip(&walks) {
        if w.exit.is_some() {
            *v = m * it.next().expect("one value per escape");
        }
    }
    let me = MeanErr::of(&values);
    Ok(McCapacity {
        estimate: me.mean,
        stderr: me.stderr,
        replicas: walks.len(),
        escapes: esc.len(),
        radius: r,
    })
}

/// Solve c_k = 1 − w Σ_l g(z_k − x_l) c_l over escaped walks (start x, exit z),
/// using an evenly spaced subsample of at most `cap` walks inside the sum.
fn correct(esc: &[(Point, Point)], table: &GreenTable, w: f64, cap: usize) -> Vec<f64> {
    if esc.is_empty() {
        return vec![];
    }
    let s = esc.len().min(cap.max(1));
    let sub: Vec<usize> = (0..s).map(|i| i * esc.len() / s).collect();
    let scale = w * esc.len() as f64 / s as f64;
    let kernel: Vec<Vec<f64>> = sub
        .par_iter()
        .map(|&a| sub.iter().map(|&b| scale * table.between(&esc[a].1, &esc[b].0)).collect())
        .collect();
    let mut c = vec![1.0; s];
    for _ in 0..1000 {
        let next: Vec<f64> = kernel
            .iter()
            .map(|row| 1.0 - row.iter().zip(&c).map(|(g, v)| g * v).sum::<f64>())
            .collect();
        let diff = next.iter().zip(&c).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        c = next;
        if diff <= 1e-10 {
            break;
        }
    }
    esc.par_iter()
        .map(|(_, z)| {
            let h: f64 = sub.iter().zip(&c).map(|(&b, v)| scale * table.between(z, &esc[b].0) * v).sum();
            (1.0 - h).clamp(0.0, 1.0)
        })
        .collect()
}
