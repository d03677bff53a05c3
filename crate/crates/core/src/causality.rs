//! Future-cone containment test for jamming in 1+1 dimensions (c = 1).
//!
//! An operation in `O` may change correlations between `A` and `B` without a
//! causality paradox when the overlap of the future cones of `A` and `B` lies
//! inside the future cone of `O`. Regions are closed rectangles; the future
//! cone of a rectangle is bounded below by
//! `f(x) = t_min + dist(x, [x_min, x_max])`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack for the non-strict containment test.
pub const CONTAINMENT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct SpacetimeRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionRepr {
    x: [f64; 2],
    t: [f64; 2],
}

impl TryFrom<RegionRepr> for SpacetimeRegion {
    type Error = Error;

    fn try_from(r: RegionRepr) -> Result<Self> {
        SpacetimeRegion::new(r.x[0], r.x[1], r.t[0], r.t[1])
    }
}

impl From<SpacetimeRegion> for RegionRepr {
    fn from(r: SpacetimeRegion) -> Self {
        RegionRepr { x: [r.x_min, r.x_max], t: [r.t_min, r.t_max] }
    }
}

impl SpacetimeRegion {
    pub fn new(x_min: f64, x_max: f64, t_min: f64, t_max: f64) -> Result<Self> {
        if ![x_min, x_max, t_min, t_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("region bounds must be finite".into()));
        }
        if x_min > x_max || t_min > t_max {
            return Err(Error::InvalidArgument(format!(
                "region [{x_min}, {x_max}] x [{t_min}, {t_max}] has inverted bounds"
            )));
        }
        Ok(SpacetimeRegion { x_min, x_max, t_min, t_max })
    }

    pub fn point(x: f64, t: f64) -> Self {
        SpacetimeRegion { x_min: x, x_max: x, t_min: t, t_max: t }
    }

    pub fn translated(&self, dx: f64, dt: f64) -> Self {
        SpacetimeRegion {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            t_min: self.t_min + dt,
            t_max: self.t_max + dt,
        }
    }

    pub fn reflected(&self) -> Self {
        SpacetimeRegion { x_min: -self.x_max, x_max: -self.x_min, ..*self }
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.t_min..=self.t_max).contains(&t)
    }
}

/// Lower boundary of a future cone: slope −1 left of `left.0`, flat between
/// the two breakpoints, slope +1 to the right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeBoundary {
    pub left: (f64, f64),
    pub right: (f64, f64),
}

/// A linear piece `t = t0 + slope·(x − x0)`.
#[derive(Clone, Copy, Debug)]
struct Piece {
    x0: f64,
    t0: f64,
    slope: f64,
}

impl ConeBoundary {
    pub fn eval(&self, x: f64) -> f64 {
        let base = self.left.1;
        if x < self.left.0 {
            base + (self.left.0 - x)
        } else if x > self.right.0 {
            base + (x - self.right.0)
        } else {
            base
        }
    }

    pub fn breakpoints(&self) -> [f64; 2] {
        [self.left.0, self.right.0]
    }

    /// True when `(x, t)` lies in the (closed) future cone.
    pub fn contains(&self, x: f64, t: f64) -> bool {
        t >= self.eval(x)
    }

    fn pieces(&self) -> [Piece; 3] {
        [
            Piece { x0: self.left.0, t0: self.left.1, slope: -1.0 },
            Piece { x0: self.left.0, t0: self.left.1, slope: 0.0 },
            Piece { x0: self.right.0, t0: self.right.1, slope: 1.0 },
        ]
    }
}

pub fn future_cone(r: &SpacetimeRegion) -> ConeBoundary {
    ConeBoundary { left: (r.x_min, r.t_min), right: (r.x_max, r.t_min) }
}

/// True when no point of one region can signal to any point of the other.
pub fn spacelike_separated(r1: &SpacetimeRegion, r2: &SpacetimeRegion) -> bool {
    let gap = (r1.x_min - r2.x_max).max(r2.x_min - r1.x_max).max(0.0);
    let max_dt = (r1.t_max - r2.t_min).abs().max((r2.t_max - r1.t_min).abs());
    gap - max_dt > 0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub x: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairwiseSeparation {
    pub a_b: bool,
    pub a_o: bool,
    pub b_o: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JammingVerdict {
    pub allowed: bool,
    /// `min_x [max(f_A, f_B) − f_O]`; non-negative when allowed.
    pub margin: f64,
    /// Present when not allowed: a point in both future cones of A and B
    /// but outside the future cone of O.
    pub witness: Option<Witness>,
    pub spacelike: PairwiseSeparation,
}

fn crossing(p: &Piece, q: &Piece) -> Option<f64> {
    if p.slope == q.slope {
        return None;
    }
    // t0p + sp (x − x0p) = t0q + sq (x − x0q)
    Some((q.t0 - p.t0 + p.slope * p.x0 - q.slope * q.x0) / (p.slope - q.slope))
}

/// Decides whether jamming from `o` onto `a ∪ b` is paradox-free.
///
/// `h(x) = max(f_A, f_B)(x) − f_O(x)` is piecewise linear; its breakpoints
/// are those of the three cones plus the abscissae where `f_A` and `f_B`
/// cross, and outside them every slope is ±1 so `h` is constant. Its minimum
/// is therefore attained on that finite candidate set (plus one point past
/// each end).
pub fn jamming_allowed(a: &SpacetimeRegion, b: &SpacetimeRegion, o: &SpacetimeRegion) -> JammingVerdict {
    let (fa, fb, fo) = (future_cone(a), future_cone(b), future_cone(o));
    let mut xs: Vec<f64> = [fa.breakpoints(), fb.breakpoints(), fo.breakpoints()].concat();
    for p in fa.pieces() {
        for q in fb.pieces() {
            if let Some(x) = crossing(&p, &q) {
                if x.is_finite() {
                    xs.push(x);
                }
            }
        }
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    xs.push(lo - 1.0);
    xs.push(hi + 1.0);

    let overlap_floor = |x: f64| fa.eval(x).max(fb.eval(x));
    let (mut best_x, mut margin) = (xs[0], f64::INFINITY);
    for &x in &xs {
        let h = overlap_floor(x) - fo.eval(x);
        if h < margin {
            margin = h;
            best_x = x;
        }
    }
    let allowed = margin >= -CONTAINMENT_TOL;
    let witness = (!allowed).then(|| Witness { x: best_x, t: overlap_floor(best_x) });
    JammingVerdict {
        allowed,
        margin,
        witness,
        spacelike: PairwiseSeparation {
            a_b: spacelike_separated(a, b),
            a_o: spacelike_separated(a, o),
            b_o: spacelike_separated(b, o),
        },
    }
}

/// Regions file layout: `{"A": {"x": [..], "t": [..]}, "B": .., "O": ..}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionTriple {
    #[serde(rename = "A")]
    pub a: SpacetimeRegion,
    #[serde(rename = "B")]
    pub b: SpacetimeRegion,
    #[serde(rename = "O")]
    pub o: SpacetimeRegion,
}

impl RegionTriple {
    pub fn verdict(&self) -> JammingVerdict {
        jamming_allowed(&self.a, &self.b, &self.o)
    }
}
