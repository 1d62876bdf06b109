use caplab::experiments::{
    ratio_bernoulli, ratio_ri_direct, ratio_ri_reduced, ratio_rw, sweep_phase_transition, theta, BallSetting,
    ExperimentConfig, Kind, WindowSetting,
};
use caplab::lattice::ShapeSpec;
use caplab::potential::GreenTable;
use proptest::prelude::*;

fn window(d: usize, n: u32) -> WindowSetting {
    WindowSetting::new(&ShapeSpec::ball(d), n, GreenTable::shared(d).unwrap(), &ExperimentConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn ratios_lie_in_the_unit_interval(seed in any::<u64>(), regime in 0.0f64..50.0) {
        let cfg = ExperimentConfig::default();
        let s = window(3, 5);
        let u = Kind::RiReduced.driver(3, 5, regime).unwrap();
        for e in ratio_ri_reduced(&s, &[u], 6, seed, 0, &cfg).unwrap()
            .into_iter()
            .chain([ratio_ri_direct(&s, u, 3, seed, 0, &cfg).unwrap(), ratio_bernoulli(&s, u, 3, seed, 0, &cfg).unwrap()])
        {
            prop_assert!((0.0..=1.0).contains(&e.mean), "{} {}", e.kind, e.mean);
            prop_assert!(e.stderr >= 0.0);
        }
    }

    #[test]
    fn regime_parameter_round_trips(d in 3usize..=6, n in 2u32..200, regime in 1e-3f64..1e3) {
        for kind in [Kind::Ri, Kind::RiReduced, Kind::Bernoulli, Kind::Rw, Kind::Volume] {
            let back = kind.regime(d, n, kind.driver(d, n, regime).unwrap()).unwrap();
            prop_assert!((back - regime).abs() <= 1e-12 * regime);
        }
    }
}

#[test]
fn identical_seeds_give_identical_csv_across_thread_counts() {
    let cfg = ExperimentConfig::default();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            sweep_phase_transition(Kind::Ri, 3, &ShapeSpec::ball(3), &[5, 6], &[0.1, 5.0], 6, 17, &cfg)
                .unwrap()
                .to_csv()
        })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_ne!(one, {
        sweep_phase_transition(Kind::Ri, 3, &ShapeSpec::ball(3), &[5, 6], &[0.1, 5.0], 6, 18, &cfg)
            .unwrap()
            .to_csv()
    });
}

#[test]
fn standard_error_halves_when_replicas_quadruple() {
    let cfg = ExperimentConfig::default();
    let s = window(3, 8);
    let u = Kind::RiReduced.driver(3, 8, 1.0).unwrap();
    let a = ratio_ri_reduced(&s, &[u], 200, 2, 0, &cfg).unwrap()[0].stderr;
    let b = ratio_ri_reduced(&s, &[u], 800, 2, 0, &cfg).unwrap()[0].stderr;
    assert!((0.35..=0.7).contains(&(b / a)), "{a} -> {b}");
}

#[test]
fn bernoulli_ratio_crosses_over() {
    let cfg = ExperimentConfig::default();
    let s = window(3, 16);
    let th = theta(3, 16).unwrap();
    let low = ratio_bernoulli(&s, 0.01 / th, 5, 3, 0, &cfg).unwrap();
    let high = ratio_bernoulli(&s, 100.0 / th, 5, 3, 1, &cfg).unwrap();
    assert!(low.mean <= 0.2, "{}", low.mean);
    assert!(high.mean >= 0.8, "{}", high.mean);
}

// Thinning the interlacement to independent sites can only raise the
// capacity fraction in the sparse regime.
#[test]
fn bernoulli_dominates_interlacement_when_sparse() {
    let cfg = ExperimentConfig::default();
    let s = window(3, 16);
    let u = 0.1 / theta(3, 16).unwrap();
    let kappa = ratio_bernoulli(&s, u, 10, 4, 0, &cfg).unwrap();
    let sigma = &ratio_ri_reduced(&s, &[u], 200, 4, 0, &cfg).unwrap()[0];
    assert!(kappa.mean >= sigma.mean - 2.0 * sigma.stderr, "{} vs {}", kappa.mean, sigma.mean);
}

#[test]
fn dense_interlacement_fills_the_window() {
    let cfg = ExperimentConfig::default();
    let s = window(3, 16);
    let e = ratio_ri_direct(&s, 1000.0 / theta(3, 16).unwrap(), 3, 5, 0, &cfg).unwrap();
    assert!(e.mean >= 0.9, "{}", e.mean);
}

#[test]
fn walk_ratios_separate_across_regimes() {
    let cfg = ExperimentConfig::default();
    let t = GreenTable::shared(5).unwrap();
    let b = BallSetting::new(5, 10, t, &cfg).unwrap();
    let t = |regime: f64| Kind::Rw.driver(5, 10, regime).unwrap();
    let lo = ratio_rw(&b, Kind::Rw, t(0.05), 10, 6, 0, &cfg).unwrap();
    let hi = ratio_rw(&b, Kind::Rw, t(50.0), 10, 6, 1, &cfg).unwrap();
    assert!(hi.mean - lo.mean >= 0.3, "{} {}", lo.mean, hi.mean);

    let t3 = GreenTable::shared(3).unwrap();
    let b3 = BallSetting::new(3, 10, t3, &cfg).unwrap();
    // The conditioned walk rarely reaches the boundary layer, so at
    // t = 20·N³ it has covered about two thirds of B_10; 0.8 needs t ≈ 100·N³.
    let v: Vec<f64> = [100.0, 20_000.0, 100_000.0]
        .iter()
        .enumerate()
        .map(|(i, &t)| ratio_rw(&b3, Kind::Volume, t, 10, 7, i as u32, &cfg).unwrap().mean)
        .collect();
    assert!(v[0] < 0.5 && v[1] > 0.5 && v[2] > 0.8, "{v:?}");
}
