//! The free Green function g(x) = Σ_n P_0(S_n = x) of simple random walk.
//!
//! Near the origin we use the heat-kernel representation
//! g(x) = ∫_0^∞ Π_i e^{-t/d} I_{x_i}(t/d) dt, with exponentially scaled Bessel
//! functions, integrated by Gauss–Legendre on dyadic panels plus a mapped tail.
//! Far away g(x) = a_d |x|^{2-d} (1 + (c1 + c2 Σx_i⁴/|x|⁴)/|x|² + ...), where
//! c1, c2 are fitted on the band r0/2 ≤ |x| ≤ r0.

use crate::lattice::{canonical, check_dim, Point, MAX_DIM};
use crate::{Error, Result};
use gauss_quad::GaussLegendre;
use rustc_hash::FxHashMap;
use std::io::Read;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

const MAGIC: &[u8; 8] = b"CAPGREEN";
const VERSION: u32 = 1;
const DENSE_LIMIT: usize = 5_000_000;
pub const DEFAULT_ORDER: usize = 32;

/// Crossover radius used when none is given.
pub fn default_r0(dim: usize) -> u32 {
    match dim {
        3 => 30,
        4 => 24,
        5 => 20,
        6 | 7 => 24,
        _ => 28,
    }
}

/// e^{-z} I_n(z) for n = 0..out.len().
pub fn scaled_bessel(z: f64, out: &mut [f64]) {
    let nmax = out.len() - 1;
    if z == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    if z >= (2.0 * (nmax * nmax) as f64).max(60.0) {
        for (n, o) in out.iter_mut().enumerate() {
            *o = hankel(n, z);
        }
        return;
    }
    // Miller's backward recurrence I_{k-1} = (2k/z) I_k + I_{k+1},
    // normalized by e^{-z}(I_0 + 2 Σ_{k≥1} I_k) = 1.
    let start = nmax + 20 + (9.0 * z.sqrt()) as usize;
    let (mut hi, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    out.fill(0.0);
    for k in (1..=start).rev() {
        let lo = (2.0 * k as f64 / z) * cur + hi;
        hi = cur;
        cur = lo;
        if k <= nmax + 1 {
            out[k - 1] = cur;
        }
        norm += 2.0 * hi;
        if cur > 1e250 {
            let s = 1e-250;
            cur *= s;
            hi *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm += cur;
    out.iter_mut().for_each(|v| *v /= norm);
}

/// Hankel expansion of e^{-z} I_n(z) for z ≫ n².
fn hankel(n: usize, z: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let (mut term, mut sum) = (1.0f64, 1.0f64);
    for k in 1..200 {
        let next = -term * (mu - ((2 * k - 1) * (2 * k - 1)) as f64) / (8.0 * k as f64 * z);
        if next.abs() >= term.abs() && k > n + 1 {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * z).sqrt()
}

/// a_d = d Γ(d/2 − 1) / (2 π^{d/2}), so that g(x) ~ a_d |x|^{2−d}.
pub fn far_constant(dim: usize) -> f64 {
    let d = dim as f64;
    d * statrs::function::gamma::gamma(d / 2.0 - 1.0) / (2.0 * std::f64::consts::PI.powf(d / 2.0))
}

fn key(c: &Point) -> u64 {
    c.coords()
        .iter()
        .fold(0u64, |acc, &v| (acc << 8) | v as u64)
}

#[derive(Clone)]
enum Store {
    Dense { side: usize, vals: Vec<f64> },
    Canon(FxHashMap<u64, f64>),
}

/// Lookup table for g near the origin plus the corrected far-field form.
#[derive(Clone)]
pub struct GreenTable {
    dim: usize,
    r0: u32,
    order: usize,
    a_d: f64,
    c1: f64,
    c2: f64,
    corrected: bool,
    g0: f64,
    band_error: f64,
    reps: Vec<(u64, f64)>,
    store: Store,
}

impl std::fmt::Debug for GreenTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreenTable")
            .field("dim", &self.dim)
            .field("r0", &self.r0)
            .field("order", &self.order)
            .field("g0", &self.g0)
            .field("a_d", &self.a_d)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("band_error", &self.band_error)
            .finish()
    }
}

/// Nonnegative nonincreasing integer vectors of norm ≤ r0.
fn canonical_reps(dim: usize, r0: u32) -> Vec<Point> {
    fn rec(p: &mut Point, axis: usize, cap: i32, left: i64, out: &mut Vec<Point>) {
        if axis == p.dim() {
            out.push(*p);
            return;
        }
        for v in 0..=cap {
            let v2 = v as i64 * v as i64;
            if v2 > left {
                break;
            }
            p.coords_mut()[axis] = v;
            rec(p, axis + 1, v, left - v2, out);
        }
        p.coords_mut()[axis] = 0;
    }
    let mut out = Vec::new();
    let mut p = Point::origin(dim);
    rec(&mut p, 0, r0 as i32, (r0 as i64).pow(2), &mut out);
    out
}

/// Quadrature nodes in t with the Bessel values e^{-z} I_n(z), z = t/d.
fn nodes(dim: usize, nmax: usize, order: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let gl = GaussLegendre::new(order.try_into().expect("order ≥ 2"));
    let zmax = (4.0 * (nmax * nmax) as f64).max(64.0);
    let tmax = (dim as f64 * zmax).log2().ceil().exp2();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut push = |a: f64, b: f64, map: &dyn Fn(f64) -> (f64, f64)| {
        for (x, w) in gl.iter() {
            let s = a + (b - a) * 0.5 * (x + 1.0);
            let (t, jac) = map(s);
            pts.push((t, w * 0.5 * (b - a) * jac));
        }
    };
    push(0.0, 1.0, &|s| (s, 1.0));
    let mut a = 1.0;
    while a < tmax {
        push(a, 2.0 * a, &|s| (s, 1.0));
        a *= 2.0;
    }
    // Tail t = T/v², dt = 2T/v³ dv.
    for (lo, hi) in [(0.0, 0.5), (0.5, 1.0)] {
        push(lo, hi, &|v| (tmax / (v * v), 2.0 * tmax / (v * v * v)));
    }
    let mut weights = Vec::with_capacity(pts.len());
    let mut bessel = Vec::with_capacity(pts.len());
    for (t, w) in pts {
        let mut ie = vec![0.0; nmax + 1];
        scaled_bessel(t / dim as f64, &mut ie);
        weights.push(w);
        bessel.push(ie);
    }
    (weights, bessel)
}

impl GreenTable {
    /// Build with the fitted far-field correction enabled.
    pub fn build(dim: usize, r0: u32, order: usize) -> Result<GreenTable> {
        GreenTable::build_with(dim, r0, order, true)
    }

    pub fn build_with(dim: usize, r0: u32, order: usize, corrected: bool) -> Result<GreenTable> {
        check_dim(dim)?;
        if !(4..=255).contains(&r0) {
            return Err(Error::param(format!("crossover radius {r0} outside 4..=255")));
        }
        if order < 8 {
            return Err(Error::param("quadrature order must be ≥ 8"));
        }
        let reps = canonical_reps(dim, r0);
        let (w, ie) = nodes(dim, r0 as usize, order);
        let values: Vec<(u64, f64)> = reps
            .iter()
            .map(|c| {
                let v: f64 = w
                    .iter()
                    .zip(&ie)
                    .map(|(&wj, row)| wj * c.coords().iter().map(|&n| row[n as usize]).product::<f64>())
                    .sum();
                (key(c), v)
            })
            .collect();
        GreenTable::assemble(dim, r0, order, corrected, values)
    }

    fn assemble(
        dim: usize,
        r0: u32,
        order: usize,
        corrected: bool,
        reps: Vec<(u64, f64)>,
    ) -> Result<GreenTable> {
        let map: FxHashMap<u64, f64> = reps.iter().copied().collect();
        let g0 = map[&0];
        let mut table = GreenTable {
            dim,
            r0,
            order,
            a_d: far_constant(dim),
            c1: 0.0,
            c2: 0.0,
            corrected,
            g0,
            band_error: 0.0,
            reps,
            store: Store::Canon(map),
        };
        let band = table.band();
        if corrected {
            table.fit_correction(&band);
        }
        table.band_error = band
            .iter()
            .map(|(c, v)| (table.far(c) / v - 1.0).abs())
            .fold(0.0, f64::max);
        if table.band_error > 0.01 {
            return Err(Error::numeric(format!(
                "Green table d={dim} r0={r0} order={order}: overlap-band mismatch {:.3e} > 1%",
                table.band_error
            )));
        }
        let side = r0 as usize + 1;
        if side.pow(dim as u32) <= DENSE_LIMIT {
            let Store::Canon(map) = &table.store else { unreachable!() };
            let mut vals = vec![f64::NAN; side.pow(dim as u32)];
            let mut p = Point::origin(dim);
            let r2 = (r0 as i64).pow(2);
            for idx in 0..vals.len() {
                let mut rest = idx;
                for i in 0..dim {
                    p.coords_mut()[i] = (rest % side) as i32;
                    rest /= side;
                }
                if p.norm2() <= r2 {
                    vals[idx] = map[&key(&canonical(&p))];
                }
            }
            table.store = Store::Dense { side, vals };
        }
        Ok(table)
    }

    fn band(&self) -> Vec<(Point, f64)> {
        let lo = (self.r0 as i64).pow(2) / 4;
        self.reps
            .iter()
            .filter_map(|&(k, v)| {
                let p = unkey(self.dim, k);
                (p.norm2() >= lo).then_some((p, v))
            })
            .collect()
    }

    /// Least squares for (g/(a_d|x|^{2−d}) − 1)|x|² = c1 + c2 s4.
    fn fit_correction(&mut self, band: &[(Point, f64)]) {
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, v) in band {
            let r2 = p.norm2() as f64;
            let lead = self.a_d * r2.powf(1.0 - self.dim as f64 / 2.0);
            let y = (v / lead - 1.0) * r2;
            let s4 = quartic(p) / (r2 * r2);
            s11 += 1.0;
            s12 += s4;
            s22 += s4 * s4;
            b1 += y;
            b2 += y * s4;
        }
        let det = s11 * s22 - s12 * s12;
        if det.abs() > 1e-12 * s11 * s22 {
            self.c1 = (b1 * s22 - b2 * s12) / det;
            self.c2 = (s11 * b2 - s12 * b1) / det;
        } else {
            self.c1 = b1 / s11;
        }
    }

    #[inline]
    fn far(&self, p: &Point) -> f64 {
        let r2 = p.norm2() as f64;
        let r = r2.sqrt();
        let mut v = self.a_d / r.powi(self.dim as i32 - 2);
        if self.corrected {
            v *= 1.0 + (self.c1 + self.c2 * quartic(p) / (r2 * r2)) / r2;
        }
        v
    }

    /// g(x), the expected number of visits to x by a walk from 0.
    #[inline]
    pub fn value(&self, x: &Point) -> f64 {
        let r2 = x.norm2();
        let r0 = self.r0 as i64;
        if r2 > r0 * r0 {
            return self.far(x);
        }
        match &self.store {
            Store::Dense { side, vals } => {
                let mut idx = 0usize;
                let mut s = 1usize;
                for &c in x.coords() {
                    idx += c.unsigned_abs() as usize * s;
                    s *= side;
                }
                vals[idx]
            }
            Store::Canon(map) => map[&key(&canonical(x))],
        }
    }

    /// g(x − y).
    #[inline]
    pub fn between(&self, x: &Point, y: &Point) -> f64 {
        self.value(&(*x - *y))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r0(&self) -> u32 {
        self.r0
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn a_d(&self) -> f64 {
        self.a_d
    }

    /// Fitted coefficients (c1, c2) of the first far-field correction.
    pub fn correction(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    /// Largest relative mismatch between table and far form on the band.
    pub fn band_error(&self) -> f64 {
        self.band_error
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(48 + 16 * self.reps.len());
        buf.extend_from_slice(MAGIC);
        for v in [VERSION, self.dim as u32, self.r0, self.order as u32, self.corrected as u32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(self.reps.len() as u64).to_le_bytes());
        for &(k, v) in &self.reps {
            buf.extend_from_slice(&k.to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
        crate::io::write_atomic(path, &buf)
    }

    /// Load a cache file, checking that it was built for (dim, r0, order).
    pub fn load(path: &Path, dim: usize, r0: u32, order: usize) -> Result<GreenTable> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
        if buf.len() < 36 || &buf[..8] != MAGIC {
            return Err(bad("not a Green table cache"));
        }
        let word = |i: usize| u32::from_le_bytes(buf[8 + 4 * i..12 + 4 * i].try_into().unwrap());
        if word(0) != VERSION {
            return Err(bad("unsupported cache version"));
        }
        if (word(1), word(2), word(3)) != (dim as u32, r0, order as u32) {
            return Err(bad("cache key (d, r0, order) mismatch"));
        }
        let corrected = word(4) != 0;
        let count = u64::from_le_bytes(buf[28..36].try_into().unwrap()) as usize;
        if buf.len() != 36 + 16 * count {
            return Err(bad("truncated cache"));
        }
        let reps = (0..count)
            .map(|i| {
                let o = 36 + 16 * i;
                (
                    u64::from_le_bytes(buf[o..o + 8].try_into().unwrap()),
                    f64::from_le_bytes(buf[o + 8..o + 16].try_into().unwrap()),
                )
            })
            .collect();
        GreenTable::assemble(dim, r0, order, corrected, reps)
    }

    /// Load from `dir` if a matching cache exists, else build and store it.
    pub fn cached(dir: &Path, dim: usize, r0: u32, order: usize) -> Result<GreenTable> {
        let path = dir.join(format!("green_d{dim}_r{r0}_q{order}.bin"));
        if let Ok(t) = GreenTable::load(&path, dim, r0, order) {
            return Ok(t);
        }
        let t = GreenTable::build(dim, r0, order)?;
        std::fs::create_dir_all(dir)?;
        t.save(&path)?;
        Ok(t)
    }

    /// Process-wide table for `dim` with default parameters.
    pub fn shared(dim: usize) -> Result<Arc<GreenTable>> {
        static TABLES: OnceLock<Mutex<FxHashMap<usize, Arc<GreenTable>>>> = OnceLock::new();
        let lock = TABLES.get_or_init(Default::default);
        let mut map = lock.lock().expect("green table cache poisoned");
        if let Some(t) = map.get(&dim) {
            return Ok(t.clone());
        }
        let t = Arc::new(GreenTable::build(dim, default_r0(dim), DEFAULT_ORDER)?);
        map.insert(dim, t.clone());
        Ok(t)
    }
}

fn quartic(p: &Point) -> f64 {
    p.coords().iter().map(|&v| (v as f64).powi(4)).sum()
}

fn unkey(dim: usize, mut k: u64) -> Point {
    let mut c = [0i32; MAX_DIM];
    for i in (0..dim).rev() {
        c[i] = (k & 0xff) as i32;
        k >>= 8;
    }
    Point::new(&c[..dim])
}

/// g_free(x) as a free function.
pub fn green_free(x: &Point, table: &GreenTable) -> f64 {
    table.value(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_against_reference() {
        // scipy.special.ive
        for (z, n, v) in [
            (1.0, 0, 0.4657596075936404),
            (10.0, 3, 0.07983036102984051),
            (59.0, 5, 0.0420401219857523),
            (300.0, 17, 0.014224994280390165),
            (2000.0, 30, 0.007123334724412073),
        ] {
            let mut ie = vec![0.0; 31];
            scaled_bessel(z, &mut ie);
            assert!((ie[n] / v - 1.0).abs() < 1e-13, "z={z} n={n}: {}", ie[n]);
        }
        let mut ie = vec![0.0; 31];
        scaled_bessel(1e-8, &mut ie);
        assert!((ie[0] - (1.0 - 1e-8)).abs() < 1e-15);
        assert!(ie[30] >= 0.0);
        for z in [0.3, 2.0] {
            scaled_bessel(z, &mut ie);
            let s = ie[0] + 2.0 * ie[1..].iter().sum::<f64>();
            assert!((s - 1.0).abs() < 1e-14);
        }
        // Miller and Hankel agree where both are valid.
        let mut a = vec![0.0; 6];
        scaled_bessel(59.0, &mut a);
        for (n, v) in a.iter().enumerate() {
            assert!((v / hankel(n, 59.0) - 1.0).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn known_values_d3() {
        // References computed offline with an independent quadrature.
        let t = GreenTable::shared(3).unwrap();
        let e = |c: &[i32]| t.value(&Point::new(c));
        assert!((e(&[0, 0, 0]) - 1.5163860591519784).abs() < 1e-10);
        assert!((e(&[1, 0, 0]) - 0.51638605915).abs() < 1e-10);
        assert!((e(&[3, 1, 2]) - 0.126945971812).abs() < 1e-10);
        assert!((e(&[5, 0, 0]) - 0.096606452012).abs() < 1e-10);
        assert_eq!(e(&[3, -1, 2]), e(&[-3, 1, -2]));
        let far = e(&[0, 0, 50]) / (t.a_d() / 50.0);
        assert!((far - 1.0001002).abs() < 2e-5, "{far}");
    }

    #[test]
    fn harmonic_off_origin() {
        // g(x) = (1/2d) Σ_y g(y) for x ≠ 0 and g0 = 1 + g(e1).
        let t = GreenTable::shared(3).unwrap();
        assert!((t.g0() - 1.0 - t.value(&Point::unit(3, 0))).abs() < 1e-12);
        for c in [[1, 2, 3], [4, 0, 1], [7, 7, 7]] {
            let p = Point::new(&c);
            let avg: f64 = p.neighbors().map(|q| t.value(&q)).sum::<f64>() / 6.0;
            assert!((avg - t.value(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn other_dimensions() {
        for (d, g0) in [(4, 1.2394671218), (5, 1.1563081248), (6, 1.1169633732)] {
            let t = GreenTable::shared(d).unwrap();
            assert!((t.g0() - g0).abs() < 1e-9, "d={d} g0={}", t.g0());
            assert_eq!(t.value(&Point::unit(d, 0)), t.value(&Point::unit(d, 1)));
            assert!(t.band_error() < 0.01);
        }
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile_dir();
        let t = GreenTable::cached(&dir, 4, 10, 24).unwrap();
        let u = GreenTable::load(&dir.join("green_d4_r10_q24.bin"), 4, 10, 24).unwrap();
        for c in [[0, 0, 0, 0], [1, 2, 0, 3], [9, 1, 0, 0], [30, 2, 2, 2]] {
            let p = Point::new(&c);
            assert_eq!(t.value(&p), u.value(&p));
        }
        assert!(GreenTable::load(&dir.join("green_d4_r10_q24.bin"), 4, 10, 32).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn tempfile_dir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("caplab-green-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }
}
