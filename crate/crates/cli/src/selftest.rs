//! Fast closed-form checks across all modules.

use caplab::experiments::{theta, ratio_ri_reduced, ratio_rw, BallSetting, ExperimentConfig, Kind, WindowSetting};
use caplab::interlace::{poisson, sample_bernoulli_field, sample_interlacement, vacancy_probability_mc};
use caplab::lattice::{ball, Domain, Point, ShapeSpec};
use caplab::potential::{capacity, GreenTable, SolverConfig};
use caplab::rng::{stream, Tag};
use caplab::spectral::{component_around, principal_eigenpair, survival_spectral};
use caplab::walker::{srw_range, ConfinedSampler, Trace, WindowKernel};
use caplab::{Error, Result};
use std::sync::Arc;

type Check = (&'static str, fn() -> Result<bool>);

fn checks() -> Vec<Check> {
    vec![
        ("theta(3,7) = 7 and theta(5,10) = 100", || {
            Ok(theta(3, 7)? == 7.0 && theta(5, 10)? == 100.0)
        }),
        ("cap of the empty set is 0", || {
            let t = GreenTable::shared(3)?;
            Ok(capacity(Arc::new(Domain::from_points(3, vec![])), &t, &SolverConfig::default())? == 0.0)
        }),
        ("cap({0}) = 1/g0", || {
            let t = GreenTable::shared(3)?;
            let c = capacity(Arc::new(Domain::from_points(3, vec![Point::origin(3)])), &t, &SolverConfig::default())?;
            Ok((c - 1.0 / t.g0()).abs() < 1e-14)
        }),
        ("zero-step walk visits only its start", || {
            let tr = srw_range(&Point::origin(3), 0, None, &mut stream(0, Tag::Test, 0, 0));
            Ok(tr.visited == vec![Point::origin(3)])
        }),
        ("eigenvalue of {0} is 0", || {
            Ok(principal_eigenpair(Arc::new(Domain::from_points(3, vec![Point::origin(3)])), 1e-12)?.lambda == 0.0)
        }),
        ("eigenvalue of the 7-point ball is 1/sqrt(6)", || {
            let p = principal_eigenpair(Arc::new(ball(3, 1)?), 1e-12)?;
            Ok((p.lambda - 1.0 / 6f64.sqrt()).abs() < 1e-10)
        }),
        ("spectral survival at T = 0 is phi/sum phi^2", || {
            let p = principal_eigenpair(Arc::new(ball(3, 3)?), 1e-12)?;
            let o = Point::origin(3);
            Ok((survival_spectral(&p, &o, 0) - p.phi_at(&o) / p.phi_sq_sum()).abs() < 1e-12)
        }),
        ("empty obstacle leaves the domain whole", || {
            let b = ball(3, 4)?;
            let empty = Trace {
                window: None,
                visited: vec![],
                steps_used: 0,
                start: Point::origin(3),
            };
            Ok(component_around(&b, &empty, &Point::origin(3))?.len() == b.len())
        }),
        ("one-step survival from the single point is 0", || {
            let s = ConfinedSampler::build(Arc::new(Domain::from_points(3, vec![Point::origin(3)])), 1, None, 1 << 20)?;
            Ok(s.survival(&Point::origin(3))? == 0.0)
        }),
        ("Poisson(0) is 0", || Ok(poisson(0.0, &mut stream(0, Tag::Test, 0, 0))? == 0)),
        ("u = 0 interlacement is empty", || {
            let k = WindowKernel::new(Arc::new(ball(3, 3)?), GreenTable::shared(3)?, &SolverConfig::default())?;
            let s = sample_interlacement(0.0, &k, &mut stream(0, Tag::Test, 0, 0))?;
            let v = vacancy_probability_mc(0.0, &Domain::from_points(3, vec![Point::origin(3)]), &k, 10, 0, 0)?;
            Ok(s.trajectory_count == 0 && s.trace.is_empty() && v.mean == 1.0)
        }),
        ("Bernoulli p = 0 is empty and p = 1 is full", || {
            let w = Arc::new(ball(3, 4)?);
            let mut rng = stream(0, Tag::Test, 0, 0);
            let empty = sample_bernoulli_field(0.0, w.clone(), &mut rng)?.occupied.is_empty();
            let full = sample_bernoulli_field(1.0, w.clone(), &mut rng)?.occupied.len() == w.len();
            Ok(empty && full)
        }),
        ("RI ratio at u = 0 is 0", || {
            let cfg = ExperimentConfig::default();
            let s = WindowSetting::new(&ShapeSpec::ball(3), 4, GreenTable::shared(3)?, &cfg)?;
            Ok(ratio_ri_reduced(&s, &[0.0], 5, 0, 0, &cfg)?[0].mean == 0.0)
        }),
        ("RW ratio at t = 0 is cap({0})/cap(B_N)", || {
            let cfg = ExperimentConfig::default();
            let t = GreenTable::shared(3)?;
            let b = BallSetting::new(3, 4, t.clone(), &cfg)?;
            let e = ratio_rw(&b, Kind::Rw, 0.0, 3, 0, 0, &cfg)?;
            Ok((e.mean - 1.0 / t.g0() / b.cap).abs() < 1e-12)
        }),
    ]
}

/// Prints one line per check; fails with a numeric error if any check fails.
pub fn run() -> Result<()> {
    let mut failed = 0;
    for (name, f) in checks() {
        let ok = match f() {
            Ok(ok) => ok,
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed += 1;
                continue;
            }
        };
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        return Err(SelftestFailed(failed).into());
    }
    Ok(())
}

#[derive(Debug)]
pub struct SelftestFailed(pub usize);

impl From<SelftestFailed> for Error {
    fn from(f: SelftestFailed) -> Error {
        Error::Numeric(format!("{SELFTEST_MARK}{} self-test checks failed", f.0))
    }
}

/// Prefix that lets `main` map a self-test failure to its own exit code.
pub const SELFTEST_MARK: &str = "selftest: ";
