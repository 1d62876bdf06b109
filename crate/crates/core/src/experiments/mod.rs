//! Capacity-ratio estimators, phase-transition sweeps, the capacity law of
//! large numbers for walk ranges, and pilot calibration.

mod calibration;
mod lln;
mod ratio;
mod sweep;

pub use calibration::{fit_gap_constant, obstacle_gaps, pilot, Calibration, GapFit, GapSample, PilotConfig};
pub use lln::{lln_capacity, CapacityLLNEstimate};
pub use ratio::{
    ratio_bernoulli, ratio_bernoulli_coupled, ratio_ri_direct, ratio_ri_direct_coupled, ratio_ri_reduced,
    ratio_rw, BallSetting, WindowSetting,
};
pub use sweep::{sweep_phase_transition, SweepRecord};

use crate::lattice::{Domain, Point};
use crate::potential::{capacity_mc, equilibrium_measure, GreenTable, McConfig, SolverConfig};
use crate::rng::{child_seed, Tag};
use crate::stats::MeanErr;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Θ_N: N in d = 3, N²/ln N in d = 4, N² in d ≥ 5.
pub fn theta(d: usize, n: u32) -> Result<f64> {
    crate::lattice::check_dim(d)?;
    if n < 2 {
        return Err(Error::param(format!("Θ_N needs N ≥ 2, got {n}")));
    }
    let n = n as f64;
    Ok(match d {
        3 => n,
        4 => n * n / n.ln(),
        _ => n * n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "RI")]
    Ri,
    #[serde(rename = "RI_reduced")]
    RiReduced,
    #[serde(rename = "RW")]
    Rw,
    Bernoulli,
    Volume,
}

impl Kind {
    pub fn label(&self) -> &'static str {
        match self {
            Kind::Ri => "RI",
            Kind::RiReduced => "RI_reduced",
            Kind::Rw => "RW",
            Kind::Bernoulli => "Bernoulli",
            Kind::Volume => "Volume",
        }
    }

    /// Walk-driven kinds take a horizon t, the others an intensity u.
    pub fn is_walk(&self) -> bool {
        matches!(self, Kind::Rw | Kind::Volume)
    }

    /// u·Θ_N, or t·Θ_N/N^d for walk kinds.
    pub fn regime(&self, d: usize, n: u32, driver: f64) -> Result<f64> {
        let th = theta(d, n)?;
        Ok(if self.is_walk() {
            driver * th / (n as f64).powi(d as i32)
        } else {
            driver * th
        })
    }

    /// Inverse of `regime`.
    pub fn driver(&self, d: usize, n: u32, regime: f64) -> Result<f64> {
        let th = theta(d, n)?;
        Ok(if self.is_walk() {
            regime * (n as f64).powi(d as i32) / th
        } else {
            regime / th
        })
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Kind> {
        Ok(match s {
            "RI" | "ri" => Kind::Ri,
            "RI_reduced" | "ri_reduced" => Kind::RiReduced,
            "RW" | "rw" => Kind::Rw,
            "Bernoulli" | "bernoulli" => Kind::Bernoulli,
            "Volume" | "volume" => Kind::Volume,
            _ => return Err(Error::param(format!("unknown ratio kind {s:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub solver: SolverConfig,
    pub mc: McConfig,
    /// Traces with more points get a Monte Carlo capacity.
    pub exact_size_limit: usize,
    pub confined_mem_bytes: u64,
    /// Fill the wall_time_ms column. Off by default so outputs are
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            solver: SolverConfig::default(),
            mc: McConfig::default(),
            exact_size_limit: 4000,
            confined_mem_bytes: 2 << 30,
            timing: false,
        }
    }
}

/// One replica of a ratio estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replica {
    pub replica: u32,
    pub value: f64,
    pub cap_method: String,
    pub wall_time_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub kind: Kind,
    pub d: usize,
    pub shape: String,
    #[serde(rename = "N")]
    pub n: u32,
    pub driver: f64,
    pub theta: f64,
    pub regime_parameter: f64,
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub seed: u64,
    #[serde(skip)]
    pub rows: Vec<Replica>,
}

pub const CSV_HEADER: &str = "kind,d,shape,N,driver,regime_parameter,replica,value,cap_method,seed,wall_time_ms\n";

impl RatioEstimate {
    #[allow(clippy::too_many_arguments)]
    fn from_rows(kind: Kind, d: usize, shape: &str, n: u32, driver: f64, seed: u64, rows: Vec<Replica>) -> Result<RatioEstimate> {
        let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
        let me = MeanErr::of(&values);
        Ok(RatioEstimate {
            kind,
            d,
            shape: shape.to_string(),
            n,
            driver,
            theta: theta(d, n)?,
            regime_parameter: kind.regime(d, n, driver)?,
            mean: me.mean,
            stderr: me.stderr,
            replicas: rows.len(),
            seed,
            rows,
        })
    }

    pub fn mean_err(&self) -> MeanErr {
        MeanErr {
            mean: self.mean,
            stderr: self.stderr,
            n: self.replicas,
        }
    }

    /// Replica rows in the CSV schema, without the header.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let wall = r.wall_time_ms.map_or(String::new(), |w| format!("{w:.3}"));
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                self.kind, self.d, self.shape, self.n, self.driver, self.regime_parameter, r.replica, r.value, r.cap_method, self.seed, wall
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}{}", self.csv_rows())
    }
}

/// cap of a sampled point set: exact below the size limit, Monte Carlo above.
/// Returns the value and the method label recorded in the CSV.
pub fn trace_capacity(
    dim: usize,
    points: Vec<Point>,
    table: &GreenTable,
    cfg: &ExperimentConfig,
    seed: u64,
    grid: u32,
    replica: u32,
) -> Result<(f64, String)> {
    if points.is_empty() {
        return Ok((0.0, "empty".into()));
    }
    let k = Domain::from_points(dim, points);
    if k.len() <= cfg.exact_size_limit {
        let p = equilibrium_measure(Arc::new(k), table, &cfg.solver)?;
        return Ok((p.cap(), p.method().label().into()));
    }
    let mc = capacity_mc(&k, table, None, &cfg.mc, child_seed(seed, Tag::Capacity, grid, replica), 0)?;
    Ok((mc.estimate, "mc".into()))
}

fn clock(cfg: &ExperimentConfig) -> Option<std::time::Instant> {
    cfg.timing.then(std::time::Instant::now)
}

fn elapsed_ms(start: Option<std::time::Instant>) -> Option<f64> {
    start.map(|s| s.elapsed().as_secs_f64() * 1e3)
}
