use super::{check_dim, Point};
use crate::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Exact rational with positive denominator, in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Rational> {
        if den == 0 {
            return Err(Error::param("rational with zero denominator"));
        }
        let s = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den);
        Ok(Rational {
            num: s * num / g,
            den: s * den / g,
        })
    }

    pub fn integer(v: i64) -> Rational {
        Rational { num: v, den: 1 }
    }

    pub fn one() -> Rational {
        Rational::integer(1)
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn mul(&self, o: &Rational) -> Rational {
        Rational::new(self.num * o.num, self.den * o.den).expect("nonzero denominators")
    }

    /// Strict comparison by cross multiplication.
    pub fn lt(&self, o: &Rational) -> bool {
        (self.num as i128) * (o.den as i128) < (o.num as i128) * (self.den as i128)
    }

    pub fn is_positive(&self) -> bool {
        self.num > 0
    }

    /// Largest integer k with k ≤ self·n.
    pub fn floor_times(&self, n: i64) -> i64 {
        (self.num * n).div_euclid(self.den)
    }

    /// Smallest integer k with k ≥ self·n.
    pub fn ceil_times(&self, n: i64) -> i64 {
        -((-self.num * n).div_euclid(self.den))
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Rational> {
        let s = s.trim();
        let bad = || Error::param(format!("cannot parse rational from {s:?}"));
        if let Some((a, b)) = s.split_once('/') {
            let a: i64 = a.trim().parse().map_err(|_| bad())?;
            let b: i64 = b.trim().parse().map_err(|_| bad())?;
            return Rational::new(a, b);
        }
        if s.contains(['e', 'E']) {
            return Err(bad());
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if frac.len() > 15 || (int.is_empty() && frac.is_empty()) {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        let n: i64 = digits.parse().map_err(|_| bad())?;
        let den = 10i64.pow(frac.len() as u32);
        Rational::new(if neg { -n } else { n }, den)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(v) => return Ok(Rational::integer(v)),
            // Shortest round-trip decimal, so 0.9 means 9/10.
            Raw::Float(v) => format!("{v}"),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<Rational>,
    pub hi: Vec<Rational>,
}

fn one() -> Rational {
    Rational::one()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    /// Closed Euclidean ball of the given radius.
    Ball {
        #[serde(default = "one")]
        radius: Rational,
    },
    /// Closed cube [−h, h]^d.
    Box {
        #[serde(default = "one")]
        half_width: Rational,
    },
    /// inner < |x| ≤ outer.
    Annulus { inner: Rational, outer: Rational },
    UnionOfBoxes { boxes: Vec<BoxSpec> },
}

/// A compact set D ⊂ R^d; its blow-up at scale N is (N·D) ∩ Z^d.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: ShapeKind,
}

impl ShapeSpec {
    pub fn ball(dim: usize) -> ShapeSpec {
        ShapeSpec {
            dim,
            kind: ShapeKind::Ball { radius: one() },
        }
    }

    pub fn cube(dim: usize) -> ShapeSpec {
        ShapeSpec {
            dim,
            kind: ShapeKind::Box { half_width: one() },
        }
    }

    pub fn annulus(dim: usize, inner: Rational, outer: Rational) -> ShapeSpec {
        ShapeSpec {
            dim,
            kind: ShapeKind::Annulus { inner, outer },
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim)?;
        match &self.kind {
            ShapeKind::Ball { radius } => {
                if !radius.is_positive() {
                    return Err(Error::param("ball radius must be positive"));
                }
            }
            ShapeKind::Box { half_width } => {
                if !half_width.is_positive() {
                    return Err(Error::param("box half width must be positive"));
                }
            }
            ShapeKind::Annulus { inner, outer } => {
                if !inner.is_positive() || !inner.lt(outer) || one().lt(outer) {
                    return Err(Error::param(format!(
                        "annulus needs 0 < inner < outer ≤ 1, got {inner}, {outer}"
                    )));
                }
            }
            ShapeKind::UnionOfBoxes { boxes } => {
                if boxes.is_empty() {
                    return Err(Error::param("union of boxes needs at least one box"));
                }
                for b in boxes {
                    if b.lo.len() != self.dim || b.hi.len() != self.dim {
                        return Err(Error::param("box corner length differs from dimension"));
                    }
                    if b.lo.iter().zip(&b.hi).any(|(l, h)| h.lt(l)) {
                        return Err(Error::param("box with lo > hi is empty"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_ball(&self) -> bool {
        matches!(self.kind, ShapeKind::Ball { .. })
    }

    /// Short label for CSV output.
    pub fn label(&self) -> String {
        match &self.kind {
            ShapeKind::Ball { radius } if *radius == one() => "ball".into(),
            ShapeKind::Ball { radius } => format!("ball(r={radius})"),
            ShapeKind::Box { half_width } if *half_width == one() => "box".into(),
            ShapeKind::Box { half_width } => format!("box(h={half_width})"),
            ShapeKind::Annulus { inner, outer } => format!("annulus({inner};{outer})"),
            ShapeKind::UnionOfBoxes { boxes } => format!("boxes({})", boxes.len()),
        }
    }

    /// Exact test of x/N ∈ D.
    pub fn contains(&self, x: &Point, n: i64) -> bool {
        let n = n as i128;
        let r2 = x.norm2() as i128;
        let within = |r: &Rational, strict: bool| {
            let lhs = r2 * (r.den as i128).pow(2);
            let rhs = (r.num as i128).pow(2) * n * n;
            if strict {
                lhs < rhs
            } else {
                lhs <= rhs
            }
        };
        match &self.kind {
            ShapeKind::Ball { radius } => within(radius, false),
            ShapeKind::Box { half_width } => {
                x.linf() as i128 * half_width.den as i128 <= half_width.num as i128 * n
            }
            ShapeKind::Annulus { inner, outer } => !within(inner, false) && within(outer, false),
            ShapeKind::UnionOfBoxes { boxes } => boxes.iter().any(|b| {
                x.coords().iter().enumerate().all(|(i, &v)| {
                    let v = v as i128;
                    v * b.lo[i].den as i128 >= b.lo[i].num as i128 * n
                        && v * b.hi[i].den as i128 <= b.hi[i].num as i128 * n
                })
            }),
        }
    }

    /// Per-axis integer bounds enclosing the blow-up at scale N.
    pub fn bounds(&self, n: i64) -> Vec<(i64, i64)> {
        let sym = |r: &Rational| {
            let k = r.floor_times(n);
            vec![(-k, k); self.dim]
        };
        match &self.kind {
            ShapeKind::Ball { radius } => sym(radius),
            ShapeKind::Box { half_width } => sym(half_width),
            ShapeKind::Annulus { outer, .. } => sym(outer),
            ShapeKind::UnionOfBoxes { boxes } => (0..self.dim)
                .map(|i| {
                    let lo = boxes.iter().map(|b| b.lo[i].ceil_times(n)).min().unwrap();
                    let hi = boxes.iter().map(|b| b.hi[i].floor_times(n)).max().unwrap();
                    (lo, hi)
                })
                .collect(),
        }
    }

    /// Squared Euclidean radius bound, used to prune enumeration of round shapes.
    pub(crate) fn radius2_bound(&self, n: i64) -> Option<i128> {
        let r = match &self.kind {
            ShapeKind::Ball { radius } => radius,
            ShapeKind::Annulus { outer, .. } => outer,
            _ => return None,
        };
        let k = r.floor_times(n) as i128;
        Some(k * k)
    }

    /// Whether the blow-up is invariant under coordinate permutations and sign flips.
    pub fn is_hyperoctahedral(&self) -> bool {
        !matches!(self.kind, ShapeKind::UnionOfBoxes { .. })
    }
}
