use super::{ratio, ExperimentConfig, Kind, RatioEstimate, CSV_HEADER};
use crate::lattice::ShapeSpec;
use crate::potential::GreenTable;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub kind: Kind,
    pub d: usize,
    pub shape: String,
    pub seed: u64,
    pub replicas: usize,
    /// Grid in N-major order: every regime value for the first N, then the next.
    pub estimates: Vec<RatioEstimate>,
}

/// Ratio estimates on the grid N × regime, with the driver of each point set
/// so that its regime parameter equals the requested value.
///
/// Interlacement and Bernoulli kinds share one coupled sample per replica
/// across the regime axis at each N (stream grid index = position of N), so
/// each replica's curve is monotone. Walk kinds build one conditioned sampler
/// per grid point (stream grid index = N-major position).
#[allow(clippy::too_many_arguments)]
pub fn sweep_phase_transition(
    kind: Kind,
    d: usize,
    shape: &ShapeSpec,
    n_grid: &[u32],
    regime_grid: &[f64],
    replicas: usize,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<SweepRecord> {
    if n_grid.is_empty() || regime_grid.is_empty() {
        return Err(Error::param("sweep grids must be nonempty"));
    }
    if shape.dim != d {
        return Err(Error::param("shape dimension differs from d"));
    }
    if kind.is_walk() && !shape.is_ball() {
        return Err(Error::param("walk ratios are defined on balls"));
    }
    let table = GreenTable::shared(d)?;
    let mut estimates = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let drivers = regime_grid
            .iter()
            .map(|&r| kind.driver(d, n, r))
            .collect::<Result<Vec<f64>>>()?;
        if kind.is_walk() {
            let setting = ratio::BallSetting::new(d, n, table.clone(), cfg)?;
            for (j, &t) in drivers.iter().enumerate() {
                let grid = (i * regime_grid.len() + j) as u32;
                estimates.push(ratio::ratio_rw(&setting, kind, t, replicas, seed, grid, cfg)?);
            }
        } else {
            let setting = ratio::WindowSetting::new(shape, n, table.clone(), cfg)?;
            let g = i as u32;
            estimates.extend(match kind {
                Kind::Ri => ratio::ratio_ri_direct_coupled(&setting, &drivers, replicas, seed, g, cfg)?,
                Kind::RiReduced => ratio::ratio_ri_reduced(&setting, &drivers, replicas, seed, g, cfg)?,
                _ => ratio::ratio_bernoulli_coupled(&setting, &drivers, replicas, seed, g, cfg)?,
            });
        }
    }
    Ok(SweepRecord {
        kind,
        d,
        shape: shape.label(),
        seed,
        replicas,
        estimates,
    })
}

impl SweepRecord {
    pub fn to_csv(&self) -> String {
        let mut s = CSV_HEADER.to_string();
        for e in &self.estimates {
            s.push_str(&e.csv_rows());
        }
        s
    }

    /// Per-point mean and stderr.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep summary serializes") + "\n"
    }

    /// Estimates at one N, in regime order.
    pub fn at_scale(&self, n: u32) -> Vec<&RatioEstimate> {
        self.estimates.iter().filter(|e| e.n == n).collect()
    }

    /// Mean against regime parameter on a log axis, one curve per N, with
    /// ±1 stderr bars.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 420.0;
        const M: f64 = 56.0;
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
        let xs: Vec<f64> = self.estimates.iter().map(|e| e.regime_parameter.max(1e-300).log10()).collect();
        let (mut lo, mut hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let px = |x: f64| M + (x - lo) / (hi - lo) * (W - 2.0 * M);
        let py = |y: f64| H - M - y.clamp(0.0, 1.0) * (H - 2.0 * M);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<path d="M{M} {} V{} H{}" fill="none" stroke="black"/>"#,
            M,
            H - M,
            W - M
        );
        for k in 0..=4 {
            let y = k as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y}</text>"#, M - 6.0, py(y) + 4.0);
        }
        for e in lo.ceil() as i32..=hi.floor() as i32 {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">1e{e}</text>"#,
                px(e as f64),
                H - M + 18.0
            );
        }
        let xlabel = if self.kind.is_walk() { "t·Θ_N/N^d" } else { "u·Θ_N" };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text><text x="{}" y="{}" text-anchor="middle">{} ratio, d={}, {}</text>"#,
            W / 2.0,
            H - 12.0,
            W / 2.0,
            24.0,
            self.kind,
            self.d,
            self.shape
        );
        let mut ns: Vec<u32> = self.estimates.iter().map(|e| e.n).collect();
        ns.dedup();
        for (c, n) in ns.iter().enumerate() {
            let color = COLORS[c % COLORS.len()];
            let pts: Vec<(f64, &RatioEstimate)> = self
                .estimates
                .iter()
                .zip(&xs)
                .filter(|(e, _)| e.n == *n)
                .map(|(e, &x)| (px(x), e))
                .collect();
            let line: Vec<String> = pts.iter().map(|(x, e)| format!("{x:.1},{:.1}", py(e.mean))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
            for (x, e) in &pts {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.1}" x2="{x:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}"/><circle cx="{x:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                    py(e.mean - e.stderr),
                    py(e.mean + e.stderr),
                    py(e.mean)
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">N={n}</text>"#,
                W - M - 50.0,
                M + 16.0 * c as f64
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
