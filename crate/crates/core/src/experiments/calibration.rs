//! Pilot runs that freeze the constants the asymptotic statements leave
//! unspecified: the eigenvalue-gap constant and the desk-scale endpoint
//! thresholds of the interlacement sweep.

use super::{sweep_phase_transition, ExperimentConfig, Kind};
use crate::lattice::{Domain, Point, Rational, ShapeSpec};
use crate::potential::{equilibrium_measure, GreenTable};
use crate::rng::{stream, Tag};
use crate::spectral::{obstacle_gap, principal_eigenpair, DEFAULT_TOL};
use crate::stats::MeanErr;
use crate::walker::{AnnulusObstacleSampler, WindowKernel};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Draws of the annulus obstacle allowed per sample before giving up.
const OBSTACLE_ATTEMPTS: usize = 10_000;
/// Largest relative stderr of the mean fitted ratio.
const MAX_REL_STDERR: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub replica: u32,
    pub obstacle_points: usize,
    pub obstacle_capacity: f64,
    pub gap: f64,
    /// min(N^{−d}·cap, N^{−2}).
    pub scale: f64,
    /// gap / scale.
    pub ratio: f64,
}

/// Eigenvalue deficits λ_N − λ(K_N^ε) for annulus obstacles in B_N. Sample r
/// uses stream (seed, Obstacle, 0, r) for r in `replicas`; draws that never
/// reach B^{1−2ε} are redrawn from the same stream.
pub fn obstacle_gaps(
    d: usize,
    n: u32,
    eps: Rational,
    replicas: std::ops::Range<u32>,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<Vec<GapSample>> {
    let table = GreenTable::shared(d)?;
    let ball = Arc::new(Domain::blow_up(&ShapeSpec::ball(d), n)?);
    let profile = equilibrium_measure(ball.clone(), &table, &cfg.solver)?;
    let mid = Rational::new(eps.den() - 2 * eps.num(), eps.den())?;
    let entry = WindowKernel::new(Arc::new(ball.shrink(mid)?), table.clone(), &cfg.solver)?;
    let sampler = AnnulusObstacleSampler::new(profile, entry, eps)?;
    let base = principal_eigenpair(ball.clone(), DEFAULT_TOL)?;
    let origin = Point::origin(d);
    let nf = n as f64;
    replicas
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Tag::Obstacle, 0, r);
            let mut trace = None;
            for _ in 0..OBSTACLE_ATTEMPTS {
                if let Some(t) = sampler.sample(&mut rng)? {
                    trace = Some(t);
                    break;
                }
            }
            let trace = trace.ok_or_else(|| Error::budget("annulus obstacle never reached B^(1-2ε)"))?;
            let g = obstacle_gap(&base, &trace, &origin, DEFAULT_TOL, &table, &cfg.solver)?;
            let scale = (g.obstacle_capacity * nf.powi(-(d as i32))).min(nf.powi(-2));
            Ok(GapSample {
                replica: r,
                obstacle_points: trace.len(),
                obstacle_capacity: g.obstacle_capacity,
                gap: g.gap,
                scale,
                ratio: if scale > 0.0 { g.gap / scale } else { f64::NAN },
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    /// safety · min ratio over the fit sample.
    pub constant: f64,
    pub mean_ratio: f64,
    pub rel_stderr: f64,
    pub safety: f64,
    pub traces: usize,
}

/// Fits c in gap ≥ c·min(N^{−d} cap, N^{−2}). Fails when the ratios are too
/// dispersed for a stable fit.
pub fn fit_gap_constant(samples: &[GapSample], safety: f64) -> Result<GapFit> {
    if samples.len() < 2 {
        return Err(Error::param("gap fit needs at least two traces"));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::param(format!("safety factor {safety} outside (0,1]")));
    }
    let ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(Error::numeric("nonpositive gap ratio in the fit sample"));
    }
    let me = MeanErr::of(&ratios);
    let rel_stderr = me.stderr / me.mean;
    if rel_stderr > MAX_REL_STDERR {
        return Err(Error::numeric(format!(
            "gap constant unstable: relative stderr {rel_stderr:.3} over {} traces",
            samples.len()
        )));
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GapFit {
        constant: safety * min,
        mean_ratio: me.mean,
        rel_stderr,
        safety,
        traces: samples.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    pub seed: u64,
    pub ri_n_grid: Vec<u32>,
    pub ri_low_regime: f64,
    pub ri_high_regime: f64,
    pub ri_replicas: usize,
    /// Added outside the pilot's 3-stderr band on each side.
    pub ri_margin: f64,
    pub gap_n: u32,
    pub gap_eps: Rational,
    pub gap_fit_traces: u32,
    pub gap_safety: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            seed: 20_240_601,
            ri_n_grid: vec![12, 16, 24],
            ri_low_regime: 0.01,
            ri_high_regime: 100.0,
            ri_replicas: 400,
            ri_margin: 0.02,
            gap_n: 16,
            gap_eps: Rational::new(3, 20).expect("valid"),
            gap_fit_traces: 5,
            gap_safety: 0.5,
        }
    }
}

/// Frozen pilot output read by the acceptance suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub pilot: PilotConfig,
    /// Interlacement sweep: every N must have mean ≤ ri_low at the low end.
    pub ri_low: f64,
    /// … and mean ≥ ri_high at the high end.
    pub ri_high: f64,
    pub gap: GapFit,
}

impl Calibration {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Calibration> {
        toml::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Calibration> {
        Calibration::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Runs both pilots. The interlacement thresholds come from the single-
/// trajectory estimator at the two regime endpoints; the gap constant from
/// the first `gap_fit_traces` obstacles (replica indices 0..k).
pub fn pilot(pc: &PilotConfig, cfg: &ExperimentConfig) -> Result<Calibration> {
    if pc.ri_n_grid.is_empty() || pc.ri_replicas < 10 {
        return Err(Error::param("pilot needs a nonempty N grid and at least 10 replicas"));
    }
    if !(pc.ri_low_regime > 0.0 && pc.ri_low_regime < pc.ri_high_regime) {
        return Err(Error::param("pilot regimes need 0 < low < high"));
    }
    let sweep = sweep_phase_transition(
        Kind::RiReduced,
        3,
        &ShapeSpec::ball(3),
        &pc.ri_n_grid,
        &[pc.ri_low_regime, pc.ri_high_regime],
        pc.ri_replicas,
        pc.seed,
        cfg,
    )?;
    let mut low = f64::NEG_INFINITY;
    let mut high = f64::INFINITY;
    for pair in sweep.estimates.chunks(2) {
        low = low.max(pair[0].mean + 3.0 * pair[0].stderr + pc.ri_margin);
        high = high.min(pair[1].mean - 3.0 * pair[1].stderr - pc.ri_margin);
    }
    if !(0.0 < low && low < high && high < 1.0) {
        return Err(Error::numeric(format!(
            "pilot thresholds low={low:.4}, high={high:.4} are not ordered inside (0,1)"
        )));
    }
    let samples = obstacle_gaps(3, pc.gap_n, pc.gap_eps, 0..pc.gap_fit_traces, pc.seed, cfg)?;
    let gap = fit_gap_constant(&samples, pc.gap_safety)?;
    Ok(Calibration {
        pilot: pc.clone(),
        ri_low: low,
        ri_high: high,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(ratio: f64) -> GapSample {
        GapSample {
            replica: 0,
            obstacle_points: 1,
            obstacle_capacity: 1.0,
            gap: ratio,
            scale: 1.0,
            ratio,
        }
    }

    #[test]
    fn fit_uses_the_minimum() {
        let s: Vec<GapSample> = [2.0, 2.2, 1.8, 2.1].into_iter().map(sample).collect();
        let f = fit_gap_constant(&s, 0.5).unwrap();
        assert!((f.constant - 0.9).abs() < 1e-12);
        assert!(fit_gap_constant(&s[..1], 0.5).is_err());
        let wild: Vec<GapSample> = [0.01, 10.0, 0.02].into_iter().map(sample).collect();
        assert!(fit_gap_constant(&wild, 0.5).is_err());
    }

    #[test]
    fn calibration_round_trip() {
        let c = Calibration {
            pilot: PilotConfig::default(),
            ri_low: 0.1,
            ri_high: 0.9,
            gap: fit_gap_constant(&[sample(1.0), sample(1.1)], 0.5).unwrap(),
        };
        assert_eq!(Calibration::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert!(toml::from_str::<PilotConfig>("").is_err());
    }
}
