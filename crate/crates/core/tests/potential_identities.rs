use caplab::lattice::{Domain, Point, SignedPerm};
use caplab::potential::{capacity, equilibrium_measure, GreenTable, SolverConfig};
use proptest::prelude::*;
use std::sync::Arc;

fn table(d: usize) -> Arc<GreenTable> {
    GreenTable::shared(d).unwrap()
}

fn cube_points(d: usize, h: i32) -> Vec<Point> {
    let side = (2 * h + 1) as usize;
    (0..side.pow(d as u32))
        .map(|mut k| {
            let mut c = vec![0i32; d];
            for v in c.iter_mut() {
                *v = (k % side) as i32 - h;
                k /= side;
            }
            Point::new(&c)
        })
        .collect()
}

/// Random subset of [−3, 3]^3 (343 points) given by a keep mask.
fn subset(mask: &[bool]) -> Vec<Point> {
    cube_points(3, 3)
        .into_iter()
        .zip(mask)
        .filter(|(_, &k)| k)
        .map(|(p, _)| p)
        .collect()
}

fn dom(pts: Vec<Point>) -> Arc<Domain> {
    Arc::new(Domain::from_points(3, pts))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    // cap(B) − cap(A) = Σ_{x∈B} e_B(x) P_x(H_A = ∞), with the escape
    // probability of A taken from the last-exit formula. Both sides use
    // separate solves on A and on B.
    #[test]
    fn capacity_difference_identity(
        mask_b in proptest::collection::vec(prop::bool::weighted(0.7), 343),
        mask_a in proptest::collection::vec(prop::bool::weighted(0.5), 343),
    ) {
        let b_pts = subset(&mask_b);
        let a_pts: Vec<Point> = subset(&mask_a).into_iter().filter(|p| b_pts.binary_search(p).is_ok()).collect();
        prop_assume!(!a_pts.is_empty() && b_pts.len() <= 300);
        let t = table(3);
        let cfg = SolverConfig::default();
        let pa = equilibrium_measure(dom(a_pts), &t, &cfg).unwrap();
        let pb = equilibrium_measure(dom(b_pts), &t, &cfg).unwrap();
        let mut rhs = 0.0;
        for (x, &e) in pb.support().points().iter().zip(pb.e()) {
            if e == 0.0 || pa.support().contains(x) {
                continue;
            }
            rhs += e * (1.0 - pa.hitting_probability(x, &t).unwrap());
        }
        let lhs = pb.cap() - pa.cap();
        prop_assert!((lhs - rhs).abs() < 1e-6, "lhs {} rhs {}", lhs, rhs);
    }

    #[test]
    fn capacity_monotone_and_subadditive(
        m1 in proptest::collection::vec(prop::bool::weighted(0.3), 343),
        m2 in proptest::collection::vec(prop::bool::weighted(0.3), 343),
    ) {
        let a = subset(&m1);
        let c = subset(&m2);
        let mut u: Vec<Point> = a.iter().chain(&c).copied().collect();
        u.sort_unstable();
        u.dedup();
        let t = table(3);
        let cfg = SolverConfig::default();
        let ca = capacity(dom(a), &t, &cfg).unwrap();
        let cc = capacity(dom(c), &t, &cfg).unwrap();
        let cu = capacity(dom(u), &t, &cfg).unwrap();
        prop_assert!(ca <= cu + 1e-9 && cc <= cu + 1e-9);
        prop_assert!(cu <= ca + cc + 1e-9);
    }

    #[test]
    fn green_symmetric_under_the_hyperoctahedral_group(
        coords in proptest::collection::vec(-40i32..=40, 3..=6),
    ) {
        let d = coords.len();
        let x = Point::new(&coords);
        let t = table(d);
        let g = t.value(&x);
        let neg = Point::new(&coords.iter().map(|c| -c).collect::<Vec<_>>());
        prop_assert!((t.value(&neg) - g).abs() <= 1e-10 * g);
        let image = SignedPerm::onto(&x).apply(&x);
        prop_assert!((t.value(&image) - g).abs() <= 1e-10 * g);
        let mut rev = coords.clone();
        rev.reverse();
        prop_assert!((t.value(&Point::new(&rev)) - g).abs() <= 1e-10 * g);
    }
}

#[test]
fn green_decreases_along_axes_and_diagonals() {
    for d in 3..=6 {
        let t = table(d);
        for k in 0..60 {
            let a = t.value(&Point::unit(d, 0).scale(k));
            let b = t.value(&Point::unit(d, 0).scale(k + 1));
            assert!(b < a, "d={d} k={k}");
            let diag = |k: i32| Point::new(&vec![k; d]);
            assert!(t.value(&diag(k + 1)) < t.value(&diag(k)));
        }
    }
}

// g is harmonic off the origin and g(0) = 1 + mean over neighbors.
#[test]
fn green_satisfies_the_discrete_poisson_equation() {
    for d in 3..=5 {
        let t = table(d);
        for x in cube_points(d, 3).into_iter().chain((20..40).map(|k| Point::unit(d, 1).scale(k))) {
            let avg: f64 = x.neighbors().map(|y| t.value(&y)).sum::<f64>() / (2 * d) as f64;
            let delta = if x == Point::origin(d) { 1.0 } else { 0.0 };
            // The stencil is exact inside the quadrature region and loses a few
            // digits where it straddles the switch to the far-field expansion.
            let tol = if (x.norm() - t.r0() as f64).abs() <= 2.0 { 5e-9 } else { 1e-10 };
            assert!((t.value(&x) - avg - delta).abs() < tol, "d={d} x={x}");
        }
    }
}
