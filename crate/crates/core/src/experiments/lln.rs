use super::{trace_capacity, ExperimentConfig};
use crate::lattice::Point;
use crate::potential::GreenTable;
use crate::rng::{stream, Tag};
use crate::stats::MeanErr;
use crate::walker::srw_range;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest walk length accepted.
const MAX_N: u64 = 4_000_000;

/// Normalized capacities of free walk ranges: cap(R_n)/√n in d = 3,
/// cap(R_n)·ln n/n in d = 4 and cap(R_n)/n in d ≥ 5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityLLNEstimate {
    pub d: usize,
    pub n_grid: Vec<u64>,
    /// One vector of replica values per grid entry.
    pub normalized_values: Vec<Vec<f64>>,
    pub cap_methods: Vec<Vec<String>>,
    pub summary: Vec<MeanErr>,
    /// Mean at the largest n, d ≥ 5 only.
    pub alpha_estimate: Option<f64>,
}

pub fn normalization(d: usize, n: u64) -> f64 {
    let n = n as f64;
    match d {
        3 => 1.0 / n.sqrt(),
        4 => n.ln() / n,
        _ => 1.0 / n,
    }
}

impl CapacityLLNEstimate {
    pub fn to_csv(&self, seed: u64) -> String {
        let mut s = String::from("d,n,replica,normalized_value,cap_method,seed\n");
        for (i, &n) in self.n_grid.iter().enumerate() {
            for (r, (v, m)) in self.normalized_values[i].iter().zip(&self.cap_methods[i]).enumerate() {
                s.push_str(&format!("{},{n},{r},{v},{m},{seed}\n", self.d));
            }
        }
        s
    }
}

/// Replica r at grid entry i walks with stream (seed, Lln, i, r).
pub fn lln_capacity(d: usize, n_grid: &[u64], replicas: usize, seed: u64, cfg: &ExperimentConfig) -> Result<CapacityLLNEstimate> {
    crate::lattice::check_dim(d)?;
    if n_grid.is_empty() || replicas == 0 {
        return Err(Error::param("walk-length grid and replica count must be nonempty"));
    }
    if let Some(&n) = n_grid.iter().find(|&&n| !(2..=MAX_N).contains(&n)) {
        return Err(Error::budget(format!("walk length {n} outside [2, {MAX_N}]")));
    }
    let table = GreenTable::shared(d)?;
    let mut normalized_values = Vec::new();
    let mut cap_methods = Vec::new();
    let mut summary = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let out = (0..replicas as u32)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, Tag::Lln, i as u32, r);
                let trace = srw_range(&Point::origin(d), n, None, &mut rng);
                let (c, m) = trace_capacity(d, trace.visited, &table, cfg, seed, i as u32, r)?;
                Ok((c * normalization(d, n), m))
            })
            .collect::<Result<Vec<_>>>()?;
        let (vals, methods): (Vec<f64>, Vec<String>) = out.into_iter().unzip();
        summary.push(MeanErr::of(&vals));
        normalized_values.push(vals);
        cap_methods.push(methods);
    }
    let alpha_estimate = (d >= 5).then(|| summary.last().expect("nonempty grid").mean);
    Ok(CapacityLLNEstimate {
        d,
        n_grid: n_grid.to_vec(),
        normalized_values,
        cap_methods,
        summary,
        alpha_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_walks_use_the_exact_solver() {
        let e = lln_capacity(5, &[200, 400], 4, 1, &ExperimentConfig::default()).unwrap();
        assert!(e.cap_methods.iter().flatten().all(|m| m.starts_with("exact")));
        // cap(R_n) ≤ |R_n| ≤ n + 1.
        assert!(e.normalized_values.iter().flatten().all(|&v| v > 0.0 && v <= 1.01));
        assert!(e.alpha_estimate.is_some());
        assert!(lln_capacity(4, &[], 4, 1, &ExperimentConfig::default()).is_err());
    }
}
