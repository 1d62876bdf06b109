use super::{clock, elapsed_ms, trace_capacity, ExperimentConfig, Kind, RatioEstimate, Replica};
use crate::interlace::{bernoulli_parameter, sample_bernoulli_field, sample_interlacement, sample_interlacement_coupled};
use crate::lattice::{Domain, Point, ShapeSpec};
use crate::potential::{equilibrium_measure, GreenTable};
use crate::rng::{stream, Tag};
use crate::walker::{range_in_window, ConfinedSampler, WindowKernel};
use crate::{Error, Result};
use rand::Rng as _;
use rayon::prelude::*;
use std::sync::Arc;

/// D_N with its entrance kernel and equilibrium profile, shared by all
/// interlacement and Bernoulli estimators at one scale.
pub struct WindowSetting {
    pub shape: ShapeSpec,
    pub n: u32,
    pub kernel: WindowKernel,
}

impl WindowSetting {
    pub fn new(shape: &ShapeSpec, n: u32, table: Arc<GreenTable>, cfg: &ExperimentConfig) -> Result<WindowSetting> {
        let window = Arc::new(Domain::blow_up(shape, n)?);
        let kernel = WindowKernel::new(window, table, &cfg.solver)?;
        Ok(WindowSetting {
            shape: shape.clone(),
            n,
            kernel,
        })
    }

    pub fn d(&self) -> usize {
        self.shape.dim
    }

    pub fn cap(&self) -> f64 {
        self.kernel.profile().cap()
    }

    fn table(&self) -> &GreenTable {
        self.kernel.table()
    }
}

/// Capacity ratio of one sampled set, clamped into [0, 1] (only Monte Carlo
/// capacities can leave it).
fn ratio_row(
    setting: &WindowSetting,
    points: Vec<Point>,
    cfg: &ExperimentConfig,
    seed: u64,
    grid: u32,
    replica: u32,
) -> Result<(f64, String)> {
    let (c, method) = trace_capacity(setting.d(), points, setting.table(), cfg, seed, grid, replica)?;
    Ok(((c / setting.cap()).clamp(0.0, 1.0), method))
}

fn check_u(us: &[f64]) -> Result<()> {
    if us.is_empty() || us.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
        return Err(Error::param("intensities must be finite, nonnegative and nonempty"));
    }
    Ok(())
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas == 0 || replicas > u32::MAX as usize {
        return Err(Error::param(format!("replica count {replicas}")));
    }
    Ok(())
}

/// ς^RI = cap(I(u) ∩ D_N)/cap(D_N), averaged over independent samples.
pub fn ratio_ri_direct(
    setting: &WindowSetting,
    u: f64,
    replicas: usize,
    seed: u64,
    grid: u32,
    cfg: &ExperimentConfig,
) -> Result<RatioEstimate> {
    check_u(&[u])?;
    check_replicas(replicas)?;
    let rows = (0..replicas as u32)
        .into_par_iter()
        .map(|r| {
            let t0 = clock(cfg);
            let mut rng = stream(seed, Tag::Interlace, grid, r);
            let s = sample_interlacement(u, &setting.kernel, &mut rng)?;
            let (value, cap_method) = ratio_row(setting, s.trace.visited, cfg, seed, grid, r)?;
            Ok(Replica {
                replica: r,
                value,
                cap_method,
                wall_time_ms: elapsed_ms(t0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RatioEstimate::from_rows(Kind::Ri, setting.d(), &setting.shape.label(), setting.n, u, seed, rows)
}

/// ς^RI at every u from one coupled interlacement per replica, so each
/// replica's ratio is nondecreasing in u.
pub fn ratio_ri_direct_coupled(
    setting: &WindowSetting,
    us: &[f64],
    replicas: usize,
    seed: u64,
    grid: u32,
    cfg: &ExperimentConfig,
) -> Result<Vec<RatioEstimate>> {
    check_u(us)?;
    check_replicas(replicas)?;
    let per_replica = (0..replicas as u32)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Tag::Interlace, grid, r);
            let t0 = clock(cfg);
            let samples = sample_interlacement_coupled(us, &setting.kernel, &mut rng)?;
            samples
                .into_iter()
                .map(|s| {
                    let (value, m) = ratio_row(setting, s.trace.visited, cfg, seed, grid, r)?;
                    Ok(Replica {
                        replica: r,
                        value,
                        cap_method: m,
                        wall_time_ms: elapsed_ms(t0),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    transpose(Kind::Ri, setting, us, seed, per_replica)
}

fn transpose(
    kind: Kind,
    setting: &WindowSetting,
    us: &[f64],
    seed: u64,
    per_replica: Vec<Vec<Replica>>,
) -> Result<Vec<RatioEstimate>> {
    let mut cols: Vec<Vec<Replica>> = vec![Vec::with_capacity(per_replica.len()); us.len()];
    for row in per_replica {
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    us.iter()
        .zip(cols)
        .map(|(&u, rows)| RatioEstimate::from_rows(kind, setting.d(), &setting.shape.label(), setting.n, u, seed, rows))
        .collect()
}

/// 1 − ς^RI through the single-trajectory identity
/// E[1 − ς] = Σ_x ē(x) E_x[exp(−u·cap(R_∞ ∩ D_N))]. Each replica draws one
/// trace and reports 1 − exp(−u·cap) for every u, so the means estimate ς
/// directly and share their randomness across u.
pub fn ratio_ri_reduced(
    setting: &WindowSetting,
    us: &[f64],
    replicas: usize,
    seed: u64,
    grid: u32,
    cfg: &ExperimentConfig,
) -> Result<Vec<RatioEstimate>> {
    check_u(us)?;
    check_replicas(replicas)?;
    let per_replica = (0..replicas as u32)
        .into_par_iter()
        .map(|r| {
            let t0 = clock(cfg);
            let mut rng = stream(seed, Tag::Harmonic, grid, r);
            let x = setting.kernel.profile().sample(&mut rng);
            let trace = range_in_window(&x, &setting.kernel, &mut rng)?;
            let (c, m) = trace_capacity(setting.d(), trace.visited, setting.table(), cfg, seed, grid, r)?;
            let wall = elapsed_ms(t0);
            Ok(us
                .iter()
                .map(|&u| Replica {
                    replica: r,
                    value: -(-u * c).exp_m1(),
                    cap_method: m.clone(),
                    wall_time_ms: wall,
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    transpose(Kind::RiReduced, setting, us, seed, per_replica)
}

/// κ = cap(B(p) ∩ D_N)/cap(D_N) with p = 1 − e^{−u}.
pub fn ratio_bernoulli(
    setting: &WindowSetting,
    u: f64,
    replicas: usize,
    seed: u64,
    grid: u32,
    cfg: &ExperimentConfig,
) -> Result<RatioEstimate> {
    check_u(&[u])?;
    check_replicas(replicas)?;
    let p = bernoulli_parameter(u);
    let window = setting.kernel.window().clone();
    let rows = (0..replicas as u32)
        .into_par_iter()
        .map(|r| {
            let t0 = clock(cfg);
            let mut rng = stream(seed, Tag::Bernoulli, grid, r);
            let f = sample_bernoulli_field(p, window.clone(), &mut rng)?;
            let (value, cap_method) = ratio_row(setting, f.occupied, cfg, seed, grid, r)?;
            Ok(Replica {
                replica: r,
                value,
                cap_method,
                wall_time_ms: elapsed_ms(t0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RatioEstimate::from_rows(Kind::Bernoulli, setting.d(), &setting.shape.label(), setting.n, u, seed, rows)
}

/// κ at every u from one uniform per site and replica: site x is occupied at
/// u when U_x < 1 − e^{−u}. A single u reproduces `ratio_bernoulli` exactly.
pub fn ratio_bernoulli_coupled(
    setting: &WindowSetting,
    us: &[f64],
    replicas: usize,
    seed: u64,
    grid: u32,
    cfg: &ExperimentConfig,
) -> Result<Vec<RatioEstimate>> {
    check_u(us)?;
    check_replicas(replicas)?;
    let window = setting.kernel.window().clone();
    let per_replica = (0..replicas as u32)
        .into_par_iter()
        .map(|r| {
            let t0 = clock(cfg);
            let mut rng = stream(seed, Tag::Bernoulli, grid, r);
            let unif: Vec<f64> = (0..window.len()).map(|_| rng.gen::<f64>()).collect();
            us.iter()
                .map(|&u| {
                    let p = bernoulli_parameter(u);
                    let occupied: Vec<Point> = window
                        .points()
                        .iter()
                        .zip(&unif)
                        .filter(|(_, &v)| v < p)
                        .map(|(x, _)| *x)
                        .collect();
                    let (value, m) = ratio_row(setting, occupied, cfg, seed, grid, r)?;
                    Ok(Replica {
                        replica: r,
                        value,
                        cap_method: m,
                        wall_time_ms: elapsed_ms(t0),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    transpose(Kind::Bernoulli, setting, us, seed, per_replica)
}

/// B_N with cap(B_N), for the confined-walk ratios.
pub struct BallSetting {
    pub d: usize,
    pub n: u32,
    pub ball: Arc<Domain>,
    pub cap: f64,
    table: Arc<GreenTable>,
}

impl BallSetting {
    pub fn new(d: usize, n: u32, table: Arc<GreenTable>, cfg: &ExperimentConfig) -> Result<BallSetting> {
        let ball = Arc::new(Domain::blow_up(&ShapeSpec::ball(d), n)?);
        let cap = equilibrium_measure(ball.clone(), &table, &cfg.solver)?.cap();
        Ok(BallSetting { d, n, ball, cap, table })
    }
}

/// ς^RW = cap(R_t)/cap(B_N) (kind RW) or |R_t|/|B_N| (kind Volume) for the
/// walk from 0 conditioned on R_t ⊆ B_N. The walk runs round(t) steps.
pub fn ratio_rw(
    setting: &BallSetting,
    kind: Kind,
    t: f64,
    replicas: usize,
    seed: u64,
    grid: u32,
    cfg: &ExperimentConfig,
) -> Result<RatioEstimate> {
    if !kind.is_walk() {
        return Err(Error::param(format!("{kind} is not a walk ratio")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::param(format!("horizon t = {t}")));
    }
    check_replicas(replicas)?;
    let horizon = t.round() as u64;
    let t0 = clock(cfg);
    let origin = Point::origin(setting.d);
    let traces: Vec<Vec<Point>> = if horizon == 0 {
        vec![vec![origin]; replicas]
    } else {
        let sampler = ConfinedSampler::build(setting.ball.clone(), horizon, None, cfg.confined_mem_bytes)?;
        let rngs = (0..replicas as u32).map(|r| stream(seed, Tag::Confined, grid, r)).collect();
        sampler.walks(&origin, rngs, false)?.into_iter().map(|p| p.trace.visited).collect()
    };
    let build_ms = elapsed_ms(t0);
    let rows = traces
        .into_par_iter()
        .enumerate()
        .map(|(r, visited)| {
            let t1 = clock(cfg);
            let (value, cap_method) = if kind == Kind::Volume {
                (visited.len() as f64 / setting.ball.len() as f64, "count".to_string())
            } else {
                let (c, m) = trace_capacity(setting.d, visited, &setting.table, cfg, seed, grid, r as u32)?;
                ((c / setting.cap).clamp(0.0, 1.0), m)
            };
            Ok(Replica {
                replica: r as u32,
                value,
                cap_method,
                wall_time_ms: elapsed_ms(t1).zip(build_ms).map(|(a, b)| a + b / replicas as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RatioEstimate::from_rows(kind, setting.d, "ball", setting.n, t, seed, rows)
}
