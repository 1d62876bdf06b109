use crate::config::{Command, RunConfig};
use caplab::experiments::{lln_capacity, pilot, sweep_phase_transition, trace_capacity};
use caplab::interlace::sample_interlacement;
use caplab::io::write_atomic;
use caplab::lattice::{Domain, Point};
use caplab::potential::{capacity_mc, equilibrium_measure, GreenTable};
use caplab::rng::{stream, Tag};
use caplab::spectral::{principal_eigenpair, second_eigenvalue, survival_spectral};
use caplab::walker::{ConfinedSampler, WindowKernel};
use caplab::{Error, Result};
use rayon::prelude::*;
use serde_json::json;
use std::path::PathBuf;
use std::sync::Arc;

/// Runs one command and returns the files it wrote.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match cfg.command.expect("validated") {
        Command::Capacity => capacity(cfg),
        Command::Eigen => eigen(cfg),
        Command::Interlace => interlace(cfg),
        Command::Confine => confine(cfg),
        Command::Sweep => sweep(cfg),
        Command::Lln => lln(cfg),
        Command::Pilot => run_pilot(cfg),
        Command::Selftest => crate::selftest::run().map(|_| Vec::new()),
    }
}

struct Emitter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Emitter {
    fn new(cfg: &RunConfig) -> Emitter {
        Emitter {
            dir: cfg.out.clone(),
            written: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.dir.join(name);
        write_atomic(&p, body.as_bytes())?;
        self.written.push(p);
        Ok(())
    }

    fn done(self) -> Vec<PathBuf> {
        self.written
    }
}

fn json_text(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

fn domain(cfg: &RunConfig) -> Result<Arc<Domain>> {
    Ok(Arc::new(Domain::blow_up(&cfg.domain.spec(), cfg.domain.n)?))
}

fn label(cfg: &RunConfig) -> String {
    cfg.domain.spec().label()
}

fn capacity(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let d = cfg.domain.d;
    let dom = domain(cfg)?;
    let table = GreenTable::shared(d)?;
    let p = equilibrium_measure(dom.clone(), &table, &cfg.experiment.solver)?;
    let (mc_est, mc_se) = if cfg.params.monte_carlo {
        let mc = capacity_mc(&dom, &table, None, &cfg.experiment.mc, cfg.seed(), 0)?;
        (mc.estimate.to_string(), mc.stderr.to_string())
    } else {
        (String::new(), String::new())
    };
    let mut out = Emitter::new(cfg);
    out.put(
        "capacity.csv",
        &format!(
            "d,shape,N,points,boundary,cap,residual,method,mc_estimate,mc_stderr,seed\n{d},{},{},{},{},{},{},{},{mc_est},{mc_se},{}\n",
            label(cfg),
            cfg.domain.n,
            dom.len(),
            dom.boundary_indices().len(),
            p.cap(),
            p.residual(),
            p.method().label(),
            cfg.seed()
        ),
    )?;
    out.put("equilibrium.csv", &p.to_csv())?;
    Ok(out.done())
}

fn eigen(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let d = cfg.domain.d;
    let dom = domain(cfg)?;
    let n = cfg.domain.n as f64;
    let pair = principal_eigenpair(dom.clone(), cfg.params.tol)?;
    let l2 = if cfg.params.second && dom.len() > 1 {
        Some(second_eigenvalue(&pair, cfg.params.tol.max(1e-10))?)
    } else {
        None
    };
    let mut out = Emitter::new(cfg);
    out.put(
        "eigen.csv",
        &format!(
            "d,shape,N,points,lambda,lambda2,residual,iterations,scaled_deficit\n{d},{},{},{},{},{},{},{},{}\n",
            label(cfg),
            cfg.domain.n,
            dom.len(),
            pair.lambda,
            l2.map_or(String::new(), |v| v.to_string()),
            pair.residual,
            pair.iterations,
            2.0 * d as f64 * n * n * (1.0 - pair.lambda)
        ),
    )?;
    out.put("phi.csv", &pair.to_csv())?;
    Ok(out.done())
}

fn interlace(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dom = domain(cfg)?;
    let kernel = WindowKernel::new(dom.clone(), GreenTable::shared(cfg.domain.d)?, &cfg.experiment.solver)?;
    let seed = cfg.seed();
    let u = cfg.params.u;
    let samples = (0..cfg.replicas as u32)
        .into_par_iter()
        .map(|r| sample_interlacement(u, &kernel, &mut stream(seed, Tag::Interlace, 0, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("replica,u,trajectory_count,trace_size,density,seed\n");
    for (r, s) in samples.iter().enumerate() {
        csv.push_str(&format!(
            "{r},{u},{},{},{},{seed}\n",
            s.trajectory_count,
            s.trace.len(),
            s.density()
        ));
    }
    let mut out = Emitter::new(cfg);
    out.put("interlace.csv", &csv)?;
    let spec = format!("{}:d={}:N={}", label(cfg), cfg.domain.d, cfg.domain.n);
    out.put("trace_0.csv", &samples[0].to_csv(seed, &spec))?;
    Ok(out.done())
}

fn confine(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let d = cfg.domain.d;
    let dom = domain(cfg)?;
    let seed = cfg.seed();
    let t = cfg.params.t;
    let origin = Point::origin(d);
    if !dom.contains(&origin) {
        return Err(Error::param("confined walks start at the origin, which lies outside the domain"));
    }
    let sampler = ConfinedSampler::build(dom.clone(), t, None, cfg.experiment.confined_mem_bytes)?;
    let rngs = (0..cfg.replicas as u32).map(|r| stream(seed, Tag::Confined, 0, r)).collect();
    let paths = sampler.walks(&origin, rngs, false)?;
    let table = GreenTable::shared(d)?;
    let rows = paths
        .into_par_iter()
        .enumerate()
        .map(|(r, p)| {
            let size = p.trace.len();
            let (c, m) = trace_capacity(d, p.trace.visited, &table, &cfg.experiment, seed, 0, r as u32)?;
            Ok(format!("{r},{t},{size},{c},{m},{seed}\n"))
        })
        .collect::<Result<Vec<String>>>()?;
    let pair = principal_eigenpair(dom.clone(), cfg.params.tol)?;
    let mut out = Emitter::new(cfg);
    out.put("confine.csv", &format!("replica,t,trace_size,cap,cap_method,seed\n{}", rows.concat()))?;
    out.put(
        "confine.json",
        &json_text(&json!({
            "d": d,
            "shape": label(cfg),
            "N": cfg.domain.n,
            "t": t,
            "log_survival_origin": sampler.log_survival(&origin)?,
            "spectral_survival_origin": survival_spectral(&pair, &origin, t),
            "saturation_level": sampler.saturation_level(),
            "seed": seed,
        })),
    )?;
    Ok(out.done())
}

fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let p = &cfg.params;
    let rec = sweep_phase_transition(
        p.kind,
        cfg.domain.d,
        &cfg.domain.spec(),
        &p.n_grid,
        &p.regime_grid,
        cfg.replicas,
        cfg.seed(),
        &cfg.experiment,
    )?;
    let mut out = Emitter::new(cfg);
    out.put("sweep.csv", &rec.to_csv())?;
    out.put("sweep.json", &rec.summary_json())?;
    out.put("sweep.svg", &rec.to_svg())?;
    Ok(out.done())
}

fn lln(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let est = lln_capacity(cfg.domain.d, &cfg.params.lengths, cfg.replicas, cfg.seed(), &cfg.experiment)?;
    let mut out = Emitter::new(cfg);
    out.put("lln.csv", &est.to_csv(cfg.seed()))?;
    out.put(
        "lln.json",
        &json_text(&json!({
            "d": est.d,
            "n_grid": est.n_grid,
            "summary": est.summary,
            "alpha_estimate": est.alpha_estimate,
            "seed": cfg.seed(),
        })),
    )?;
    Ok(out.done())
}

fn run_pilot(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let pc = cfg
        .pilot
        .as_ref()
        .ok_or_else(|| Error::param("pilot needs a [pilot] section in the config"))?;
    let cal = pilot(pc, &cfg.experiment)?;
    let mut out = Emitter::new(cfg);
    out.put("calibration.toml", &cal.to_toml()?)?;
    Ok(out.done())
}
