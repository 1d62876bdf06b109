//! Run configuration: a TOML file overridden by command-line flags.

use caplab::experiments::{ExperimentConfig, Kind, PilotConfig};
use caplab::lattice::{ShapeKind, ShapeSpec};
use caplab::{Error, Result};
use clap::{Args, Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Capacity,
    Eigen,
    Interlace,
    Confine,
    Sweep,
    Lln,
    Selftest,
    Pilot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub mem_mb: u64,
    pub step_cap: u64,
    /// Largest equilibrium system solved exactly.
    pub solver_size_cap: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            mem_mb: 2048,
            step_cap: 100_000_000,
            solver_size_cap: 30_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub d: usize,
    pub n: u32,
    pub shape: ShapeKind,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            d: 3,
            n: 8,
            shape: ShapeSpec::ball(3).kind,
        }
    }
}

impl DomainConfig {
    pub fn spec(&self) -> ShapeSpec {
        ShapeSpec {
            dim: self.d,
            kind: self.shape.clone(),
        }
    }
}

/// Per-command parameters; each command reads the ones it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Interlacement intensity.
    pub u: f64,
    /// Confined walk horizon.
    pub t: u64,
    pub kind: Kind,
    pub n_grid: Vec<u32>,
    pub regime_grid: Vec<f64>,
    /// Free walk lengths for the capacity LLN.
    pub lengths: Vec<u64>,
    pub tol: f64,
    /// Also compute λ_{A,2}.
    pub second: bool,
    /// Add a Monte Carlo capacity next to the exact one.
    pub monte_carlo: bool,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            u: 1.0,
            t: 100,
            kind: Kind::RiReduced,
            n_grid: vec![12, 16, 24],
            regime_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            lengths: vec![10_000, 100_000],
            tol: caplab::spectral::DEFAULT_TOL,
            second: true,
            monte_carlo: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub out: PathBuf,
    pub replicas: usize,
    pub budget: Budget,
    pub domain: DomainConfig,
    pub params: Params,
    pub experiment: ExperimentConfig,
    pub pilot: Option<PilotConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            seed: None,
            workers: 1,
            out: PathBuf::from("out"),
            replicas: 100,
            budget: Budget::default(),
            domain: DomainConfig::default(),
            params: Params::default(),
            experiment: ExperimentConfig::default(),
            pilot: None,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "caplab", version, about = "Capacities, interlacements and confined walks on Z^d")]
pub struct Cli {
    /// Command to run; may also be set by `command` in the config file.
    #[arg(value_enum)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Args, Debug, Default)]
pub struct Flags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "budget-mem-mb")]
    pub budget_mem_mb: Option<u64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Lattice dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Scale N.
    #[arg(long)]
    pub n: Option<u32>,
    /// ball or box (unit radius); other shapes need the config file.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub t: Option<u64>,
    /// RI, RI_reduced, RW, Bernoulli or Volume.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long = "n-grid", value_delimiter = ',')]
    pub n_grid: Option<Vec<u32>>,
    #[arg(long = "regime-grid", value_delimiter = ',')]
    pub regime_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<u64>>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Record per-replica wall time (outputs are then not byte-reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Add a Monte Carlo capacity to the capacity command.
    #[arg(long = "monte-carlo")]
    pub monte_carlo: bool,
}

fn parse_shape(s: &str, d: usize) -> Result<ShapeKind> {
    Ok(match s {
        "ball" => ShapeSpec::ball(d).kind,
        "box" | "cube" => ShapeSpec::cube(d).kind,
        _ => return Err(Error::param(format!("shape {s:?}: use ball, box, or a [domain.shape] table"))),
    })
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Format(format!("{}: {e}", origin.display())))
    }

    /// File first, then flags on top.
    pub fn resolve(cli: &Cli) -> Result<RunConfig> {
        let mut cfg = match &cli.flags.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
                RunConfig::from_toml(&text, p)?
            }
            None => RunConfig::default(),
        };
        let f = &cli.flags;
        if cli.command.is_some() {
            cfg.command = cli.command;
        }
        if f.seed.is_some() {
            cfg.seed = f.seed;
        }
        if let Some(w) = f.workers {
            cfg.workers = w;
        }
        if let Some(o) = &f.out {
            cfg.out = o.clone();
        }
        if let Some(m) = f.budget_mem_mb {
            cfg.budget.mem_mb = m;
        }
        if let Some(r) = f.replicas {
            cfg.replicas = r;
        }
        if let Some(d) = f.d {
            cfg.domain.d = d;
        }
        if let Some(n) = f.n {
            cfg.domain.n = n;
        }
        if let Some(s) = &f.shape {
            cfg.domain.shape = parse_shape(s, cfg.domain.d)?;
        }
        if let Some(u) = f.u {
            cfg.params.u = u;
        }
        if let Some(t) = f.t {
            cfg.params.t = t;
        }
        if let Some(k) = &f.kind {
            cfg.params.kind = k.parse()?;
        }
        if let Some(g) = &f.n_grid {
            cfg.params.n_grid = g.clone();
        }
        if let Some(g) = &f.regime_grid {
            cfg.params.regime_grid = g.clone();
        }
        if let Some(l) = &f.lengths {
            cfg.params.lengths = l.clone();
        }
        if let Some(t) = f.tol {
            cfg.params.tol = t;
        }
        cfg.experiment.timing |= f.timing;
        cfg.params.monte_carlo |= f.monte_carlo;
        cfg.apply_budget();
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_budget(&mut self) {
        self.experiment.confined_mem_bytes = self.budget.mem_mb.saturating_mul(1 << 20);
        self.experiment.mc.step_cap = self.budget.step_cap;
        self.experiment.solver.iterative_limit = self.budget.solver_size_cap;
        self.experiment.solver.dense_limit = self.experiment.solver.dense_limit.min(self.budget.solver_size_cap);
    }

    pub fn validate(&self) -> Result<()> {
        let command = self.command.ok_or_else(|| Error::param("no command given"))?;
        if command != Command::Selftest && self.seed.is_none() {
            return Err(Error::param("a master seed is required (--seed or `seed` in the config)"));
        }
        if self.workers == 0 || self.replicas == 0 {
            return Err(Error::param("workers and replicas must be positive"));
        }
        let b = &self.budget;
        if b.mem_mb == 0 || b.step_cap == 0 || b.solver_size_cap == 0 {
            return Err(Error::param("budgets must be positive"));
        }
        self.domain.spec().validate()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::parse_from(std::iter::once("caplab").chain(args.iter().copied()))
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "command = \"capacity\"\nseed = 5\n[domain]\nd = 4\nn = 3\nshape = { kind = \"box\" }\n[budget]\nmem_mb = 64\n",
        )
        .unwrap();
        let c = RunConfig::resolve(&cli(&["--config", p.to_str().unwrap(), "--seed", "9", "--n", "6"])).unwrap();
        assert_eq!(c.command, Some(Command::Capacity));
        assert_eq!((c.seed, c.domain.d, c.domain.n), (Some(9), 4, 6));
        assert_eq!(c.domain.shape, ShapeSpec::cube(4).kind);
        assert_eq!(c.experiment.confined_mem_bytes, 64 << 20);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let e = RunConfig::from_toml("seed = 1\n[domain]\nradius = 3\n", Path::new("x.toml")).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("radius") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn seed_is_required() {
        assert!(RunConfig::resolve(&cli(&["capacity"])).is_err());
        assert!(RunConfig::resolve(&cli(&["selftest"])).is_ok());
        assert!(RunConfig::resolve(&cli(&["capacity", "--seed", "1", "--workers", "0"])).is_err());
    }
}
