//! Order-independent aggregation and the few classical tests we need.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pairwise (cascade) summation of f(0..n).
pub fn pairwise_sum_by(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &dyn Fn(usize) -> f64) -> f64 {
        if hi - lo <= 32 {
            (lo..hi).map(f).sum()
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    pairwise_sum_by(v.len(), |i| v[i])
}

/// Neumaier-compensated sum.
pub fn compensated_sum(v: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in v {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanErr {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanErr {
    pub fn of(v: &[f64]) -> MeanErr {
        let n = v.len();
        if n == 0 {
            return MeanErr {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = pairwise_sum(v) / n as f64;
        let stderr = if n > 1 {
            let ss = pairwise_sum_by(n, |i| (v[i] - mean).powi(2));
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        MeanErr { mean, stderr, n }
    }

    /// |a − b| in units of the combined standard error.
    pub fn z_against(&self, other: &MeanErr) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        if s == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / s
        }
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// Q_KS(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Upper-tail p-value of Pearson's chi-square test; bins with expected count
/// below 5 are pooled into one.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut po, mut pe) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < 5.0 {
            po += o;
            pe += e;
        } else {
            stat += (o - e).powi(2) / e;
            bins += 1;
        }
    }
    if pe > 0.0 {
        stat += (po - pe).powi(2) / pe;
        bins += 1;
    }
    if bins < 2 {
        return (stat, 1.0);
    }
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive dof");
    (stat, 1.0 - dist.cdf(stat))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mx = pairwise_sum(x) / n as f64;
    let my = pairwise_sum(y) / n as f64;
    let sxy = pairwise_sum_by(n, |i| (x[i] - mx) * (y[i] - my));
    let sxx = pairwise_sum_by(n, |i| (x[i] - mx).powi(2));
    let syy = pairwise_sum_by(n, |i| (y[i] - my).powi(2));
    sxy / (sxx * syy).sqrt()
}

/// Total variation distance between two weight vectors normalized to 1.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let sp = pairwise_sum(p);
    let sq = pairwise_sum(q);
    0.5 * pairwise_sum_by(p.len(), |i| (p[i] / sp - q[i] / sq).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let m = MeanErr::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }

    #[test]
    fn compensated_beats_naive() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        assert!(ks_two_sample(&a, &a).1 > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 250.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.5).abs() < 1e-12);
        assert!(p < 1e-20);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let e = [100.0, 200.0, 300.0];
        let (s, p) = chi_square(&e, &e);
        assert_eq!(s, 0.0);
        assert!(p > 0.999);
    }
}
