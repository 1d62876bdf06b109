//! Hyperoctahedral symmetry (signed coordinate permutations) and the
//! orbit-reduced killed chain used by the spectral and DP solvers.

use super::{Domain, Point, MAX_DIM, NONE};

/// Representative of the orbit of `p`: absolute values sorted decreasingly.
pub fn canonical(p: &Point) -> Point {
    let mut q = *p;
    let c = q.coords_mut();
    c.iter_mut().for_each(|v| *v = v.abs());
    c.sort_unstable_by(|a, b| b.cmp(a));
    q
}

/// A signed coordinate permutation σ with σ(y)_{perm[k]} = ±y_k.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignedPerm {
    dim: u8,
    perm: [u8; MAX_DIM],
    neg: u8,
}

impl SignedPerm {
    /// Some σ with σ(canonical(p)) = p.
    pub fn onto(p: &Point) -> SignedPerm {
        let d = p.dim();
        let c = p.coords();
        let mut order = [0u8; MAX_DIM];
        for (k, o) in order.iter_mut().enumerate().take(d) {
            *o = k as u8;
        }
        order[..d].sort_by(|&a, &b| c[b as usize].abs().cmp(&c[a as usize].abs()));
        let mut neg = 0u8;
        for k in 0..d {
            if c[order[k] as usize] < 0 {
                neg |= 1 << k;
            }
        }
        SignedPerm {
            dim: d as u8,
            perm: order,
            neg,
        }
    }

    #[inline]
    pub fn apply(&self, y: &Point) -> Point {
        let mut out = Point::origin(self.dim as usize);
        let yc = y.coords();
        let oc = out.coords_mut();
        for k in 0..self.dim as usize {
            let v = yc[k];
            oc[self.perm[k] as usize] = if self.neg >> k & 1 == 1 { -v } else { v };
        }
        out
    }
}

/// The killed transition operator P_A, possibly restricted to functions
/// invariant under the symmetry group of A. Rows are stored in CSR form with
/// killed moves dropped; every state has degree 2d in the full walk.
#[derive(Clone, Debug)]
pub struct Chain {
    deg: usize,
    offsets: Vec<u32>,
    targets: Vec<u32>,
    state_of: Vec<u32>,
    rep: Vec<u32>,
    mult: Vec<f64>,
    reduced: bool,
}

impl Chain {
    /// One state per point.
    pub fn full(dom: &Domain) -> Chain {
        let n = dom.len();
        let states: Vec<u32> = (0..n as u32).collect();
        Chain::from_states(dom, states.clone(), states, false)
    }

    /// One state per orbit; `None` when the domain is not symmetric.
    pub fn reduced(dom: &Domain) -> Option<Chain> {
        if !dom.is_symmetric() {
            return None;
        }
        let n = dom.len();
        let mut id_of_index = vec![NONE; n];
        let mut rep = Vec::new();
        for (i, p) in dom.points().iter().enumerate() {
            if canonical(p) == *p {
                id_of_index[i] = rep.len() as u32;
                rep.push(i as u32);
            }
        }
        let state_of = dom
            .points()
            .iter()
            .map(|p| {
                let c = dom.index_of(&canonical(p)).expect("symmetric domain holds its orbits");
                id_of_index[c as usize]
            })
            .collect();
        Some(Chain::from_states(dom, state_of, rep, true))
    }

    /// Reduced when possible.
    pub fn auto(dom: &Domain) -> Chain {
        Chain::reduced(dom).unwrap_or_else(|| Chain::full(dom))
    }

    fn from_states(dom: &Domain, state_of: Vec<u32>, rep: Vec<u32>, reduced: bool) -> Chain {
        let mut mult = vec![0.0; rep.len()];
        for &s in &state_of {
            mult[s as usize] += 1.0;
        }
        let mut offsets = Vec::with_capacity(rep.len() + 1);
        let mut targets = Vec::with_capacity(rep.len() * 2 * dom.dim());
        offsets.push(0);
        for &r in &rep {
            for &j in dom.neighbor_row(r) {
                if j != NONE {
                    targets.push(state_of[j as usize]);
                }
            }
            offsets.push(targets.len() as u32);
        }
        Chain {
            deg: 2 * dom.dim(),
            offsets,
            targets,
            state_of,
            rep,
            mult,
            reduced,
        }
    }

    pub fn len(&self) -> usize {
        self.rep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rep.is_empty()
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn degree(&self) -> usize {
        self.deg
    }

    /// State of domain point `i`.
    #[inline]
    pub fn state_of(&self, i: u32) -> u32 {
        self.state_of[i as usize]
    }

    pub fn states(&self) -> &[u32] {
        &self.state_of
    }

    /// Domain index of the representative of state `s`.
    pub fn rep(&self, s: u32) -> u32 {
        self.rep[s as usize]
    }

    /// Orbit size of each state.
    pub fn mult(&self) -> &[f64] {
        &self.mult
    }

    /// Surviving moves out of state `s`.
    #[inline]
    pub fn row(&self, s: usize) -> &[u32] {
        &self.targets[self.offsets[s] as usize..self.offsets[s + 1] as usize]
    }

    /// out = P_A f.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let inv = 1.0 / self.deg as f64;
        for (s, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &t in self.row(s) {
                acc += f[t as usize];
            }
            *o = acc * inv;
        }
    }

    /// Lift a state vector to one value per domain point.
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        self.state_of.iter().map(|&s| v[s as usize]).collect()
    }

    /// Σ over domain points of f, for f given on states.
    pub fn total(&self, v: &[f64]) -> f64 {
        crate::stats::pairwise_sum_by(v.len(), |s| v[s] * self.mult[s])
    }
}
