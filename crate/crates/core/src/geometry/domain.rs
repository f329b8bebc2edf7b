use rustc_hash::FxHashSet;

use super::{check_scale, Dyadic, LatticePoint, Site};
use crate::error::{Error, Result};

/// One end of an interval on the first axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Closed(Dyadic),
    Open(Dyadic),
    Unbounded,
}

/// Continuum description of a region of `R^3`.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `|x - center| < sqrt(radius_sq)`, or `<=` when `closed`.
    Ball {
        center: [Dyadic; 3],
        radius_sq: Dyadic,
        closed: bool,
    },
    /// Closed sup-norm ball.
    Cube {
        center: [Dyadic; 3],
        half_side: Dyadic,
    },
    /// `lo (<)<= x^1 (<)<= hi` with `|x^2|, |x^3| <= half_width`.
    Slab {
        lo: Bound,
        hi: Bound,
        half_width: Dyadic,
    },
    /// Explicit lattice sites (at the owning domain's scale).
    Points(Vec<Site>),
    Intersection(Vec<Shape>),
    Complement(Box<Shape>),
    Translate(Box<Shape>, [Dyadic; 3]),
}

impl Shape {
    pub fn ball(center: [Dyadic; 3], radius: Dyadic) -> Shape {
        Shape::Ball { center, radius_sq: radius.mul(radius), closed: false }
    }

    pub fn closed_ball(center: [Dyadic; 3], radius: Dyadic) -> Shape {
        Shape::Ball { center, radius_sq: radius.mul(radius), closed: true }
    }

    pub fn translate(self, by: [Dyadic; 3]) -> Shape {
        Shape::Translate(Box::new(self), by)
    }

    fn max_exp(&self) -> u32 {
        let pt = |c: &[Dyadic; 3]| c.iter().map(|d| d.exp()).max().unwrap_or(0);
        let bd = |b: &Bound| match b {
            Bound::Closed(d) | Bound::Open(d) => d.exp(),
            Bound::Unbounded => 0,
        };
        match self {
            Shape::Ball { center, radius_sq, .. } => pt(center).max(radius_sq.exp().div_ceil(2)),
            Shape::Cube { center, half_side } => pt(center).max(half_side.exp()),
            Shape::Slab { lo, hi, half_width } => bd(lo).max(bd(hi)).max(half_width.exp()),
            Shape::Points(_) => 0,
            Shape::Intersection(v) => v.iter().map(Shape::max_exp).max().unwrap_or(0),
            Shape::Complement(s) => s.max_exp(),
            Shape::Translate(s, by) => s.max_exp().max(pt(by)),
        }
    }
}

#[derive(Clone, Debug)]
enum CShape {
    Ball { c: [i128; 3], r2: i128, closed: bool },
    Cube { c: [i128; 3], h: i128 },
    Slab { lo: Option<(i128, bool)>, hi: Option<(i128, bool)>, c: [i128; 3], w: i128 },
    Points(FxHashSet<Site>),
    And(Vec<CShape>),
    Not(Box<CShape>),
}

/// A region of `2^-scale Z^3`, compiled to integer membership tests.
#[derive(Clone, Debug)]
pub struct Domain {
    scale: u8,
    shape: Shape,
    /// Extra binary digits below the lattice spacing needed to represent
    /// every threshold exactly.
    fine: u32,
    compiled: CShape,
}

impl Domain {
    pub fn new(scale: u8, shape: Shape) -> Result<Domain> {
        let fine = shape.max_exp().saturating_sub(scale as u32);
        if scale as u32 + fine > 48 {
            return Err(Error::InvalidParameter(format!(
                "domain needs 2^-{} resolution, beyond the supported 2^-48",
                scale as u32 + fine
            )));
        }
        let bits = scale as u32 + fine;
        let compiled = compile(&shape, bits, fine, [0; 3])?;
        Ok(Domain { scale, shape, fine, compiled })
    }

    /// Open ball of radius `r` about the origin.
    pub fn ball(scale: u8, r: Dyadic) -> Result<Domain> {
        Domain::new(scale, Shape::ball([Dyadic::ZERO; 3], r))
    }

    /// The lattice unit ball `2^-n Z^3 ∩ {|x| < 1}`.
    pub fn unit_ball(scale: u8) -> Domain {
        Domain::ball(scale, Dyadic::ONE).expect("unit ball")
    }

    /// Closed sup-norm ball about the origin.
    pub fn cube(scale: u8, half_side: Dyadic) -> Result<Domain> {
        Domain::new(scale, Shape::Cube { center: [Dyadic::ZERO; 3], half_side })
    }

    /// Annulus `{a < |x| <= b}` about the origin; see `estimators::annulus`.
    pub fn annulus(scale: u8, a: Dyadic, b: Dyadic) -> Result<Domain> {
        Domain::new(
            scale,
            Shape::Intersection(vec![
                Shape::closed_ball([Dyadic::ZERO; 3], b),
                Shape::Complement(Box::new(Shape::closed_ball([Dyadic::ZERO; 3], a))),
            ]),
        )
    }

    pub fn points(scale: u8, sites: impl IntoIterator<Item = Site>) -> Domain {
        Domain::new(scale, Shape::Points(sites.into_iter().collect())).expect("point set")
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn contains(&self, s: Site) -> bool {
        let f = self.fine;
        let p = [(s[0] as i128) << f, (s[1] as i128) << f, (s[2] as i128) << f];
        eval(&self.compiled, s, p)
    }

    /// Membership with a scale check.
    pub fn contains_point(&self, p: LatticePoint) -> Result<bool> {
        check_scale(self.scale, p.scale)?;
        Ok(self.contains(p.site))
    }

    /// Inclusive lattice bounding box, `None` when unbounded.
    pub fn bounding_box(&self) -> Option<(Site, Site)> {
        let (lo, hi) = bbox(&self.compiled, self.fine)?;
        let f = self.fine;
        let down = |v: i128| -> i64 { (v >> f) as i64 };
        let up = |v: i128| -> i64 { -((-v) >> f) as i64 };
        let lo = [up(lo[0]), up(lo[1]), up(lo[2])];
        let hi = [down(hi[0]), down(hi[1]), down(hi[2])];
        Some((lo, hi))
    }

    /// All lattice points, ordered by `(z, y, x)`.
    pub fn lattice_points(&self) -> Result<Vec<Site>> {
        let (lo, hi) = self.bounding_box().ok_or(Error::Unbounded)?;
        let mut out = Vec::new();
        if (0..3).any(|i| lo[i] > hi[i]) {
            return Ok(out);
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let s = [x, y, z];
                    if self.contains(s) {
                        out.push(s);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Sites outside the domain adjacent to it, ordered by `(z, y, x)`.
    pub fn outer_boundary(&self) -> Result<Vec<Site>> {
        let pts = self.lattice_points()?;
        let mut seen = FxHashSet::default();
        for p in &pts {
            for q in super::neighbours(*p) {
                if !self.contains(q) {
                    seen.insert(q);
                }
            }
        }
        let mut out: Vec<Site> = seen.into_iter().collect();
        out.sort_by_key(|s| super::zyx_key(*s));
        Ok(out)
    }
}

fn compile(shape: &Shape, bits: u32, fine: u32, off: [i128; 3]) -> Result<CShape> {
    let pt = |c: &[Dyadic; 3]| -> [i128; 3] {
        [c[0].scaled(bits) + off[0], c[1].scaled(bits) + off[1], c[2].scaled(bits) + off[2]]
    };
    let bd = |b: &Bound| match b {
        Bound::Closed(d) => Some((d.scaled(bits) + off[0], true)),
        Bound::Open(d) => Some((d.scaled(bits) + off[0], false)),
        Bound::Unbounded => None,
    };
    Ok(match shape {
        Shape::Ball { center, radius_sq, closed } => {
            if radius_sq.num() < 0 {
                return Err(Error::InvalidParameter("negative squared radius".into()));
            }
            CShape::Ball { c: pt(center), r2: radius_sq.scaled(2 * bits), closed: *closed }
        }
        Shape::Cube { center, half_side } => {
            CShape::Cube { c: pt(center), h: half_side.scaled(bits) }
        }
        Shape::Slab { lo, hi, half_width } => CShape::Slab {
            lo: bd(lo),
            hi: bd(hi),
            c: off,
            w: half_width.scaled(bits),
        },
        Shape::Points(sites) => {
            let mask = (1i128 << fine) - 1;
            if off.iter().any(|v| v & mask != 0) {
                return Err(Error::NotSnapped { what: "translation of a point set".into(), n: 0 });
            }
            let o = off.map(|v| (v >> fine) as i64);
            CShape::Points(sites.iter().map(|s| [s[0] + o[0], s[1] + o[1], s[2] + o[2]]).collect())
        }
        Shape::Intersection(v) => CShape::And(
            v.iter().map(|s| compile(s, bits, fine, off)).collect::<Result<Vec<_>>>()?,
        ),
        Shape::Complement(s) => CShape::Not(Box::new(compile(s, bits, fine, off)?)),
        Shape::Translate(s, by) => {
            let b = pt(by);
            compile(s, bits, fine, b)?
        }
    })
}

#[inline]
fn eval(c: &CShape, site: Site, p: [i128; 3]) -> bool {
    match c {
        CShape::Ball { c, r2, closed } => {
            let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            let s = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if *closed {
                s <= *r2
            } else {
                s < *r2
            }
        }
        CShape::Cube { c, h } => (0..3).all(|i| (p[i] - c[i]).abs() <= *h),
        CShape::Slab { lo, hi, c, w } => {
            let x = p[0];
            let lo_ok = match lo {
                Some((v, true)) => x >= *v,
                Some((v, false)) => x > *v,
                None => true,
            };
            let hi_ok = match hi {
                Some((v, true)) => x <= *v,
                Some((v, false)) => x < *v,
                None => true,
            };
            lo_ok && hi_ok && (p[1] - c[1]).abs() <= *w && (p[2] - c[2]).abs() <= *w
        }
        CShape::Points(set) => set.contains(&site),
        CShape::And(v) => v.iter().all(|s| eval(s, site, p)),
        CShape::Not(s) => !eval(s, site, p),
    }
}

type Box3 = ([i128; 3], [i128; 3]);

fn isqrt_ceil(v: i128) -> i128 {
    if v <= 0 {
        return 0;
    }
    let mut r = (v as f64).sqrt() as i128;
    while r * r < v {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= v {
        r -= 1;
    }
    r
}

fn bbox(c: &CShape, fine: u32) -> Option<Box3> {
    match c {
        CShape::Ball { c, r2, .. } => {
            let r = isqrt_ceil(*r2);
            Some(([c[0] - r, c[1] - r, c[2] - r], [c[0] + r, c[1] + r, c[2] + r]))
        }
        CShape::Cube { c, h } => Some(([c[0] - h, c[1] - h, c[2] - h], [c[0] + h, c[1] + h, c[2] + h])),
        CShape::Slab { lo: Some((l, _)), hi: Some((h, _)), c, w } => {
            Some(([*l, c[1] - w, c[2] - w], [*h, c[1] + w, c[2] + w]))
        }
        CShape::Slab { .. } => None,
        CShape::Points(set) => {
            let mut it = set.iter();
            let first = it.next()?;
            let mut lo = first.map(|v| v as i128);
            let mut hi = lo;
            for s in it {
                for i in 0..3 {
                    lo[i] = lo[i].min(s[i] as i128);
                    hi[i] = hi[i].max(s[i] as i128);
                }
            }
            Some((lo.map(|v| v << fine), hi.map(|v| v << fine)))
        }
        CShape::And(v) => {
            let mut acc: Option<Box3> = None;
            for b in v.iter().filter_map(|s| bbox(s, fine)) {
                acc = Some(match acc {
                    None => b,
                    Some((lo, hi)) => (
                        [lo[0].max(b.0[0]), lo[1].max(b.0[1]), lo[2].max(b.0[2])],
                        [hi[0].min(b.1[0]), hi[1].min(b.1[1]), hi[2].min(b.1[2])],
                    ),
                });
            }
            acc
        }
        CShape::Not(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_at_scale_zero_is_the_origin() {
        let d = Domain::unit_ball(0);
        assert_eq!(d.lattice_points().unwrap(), vec![[0, 0, 0]]);
        assert_eq!(d.outer_boundary().unwrap().len(), 6);
    }

    #[test]
    fn ball_is_strict() {
        let d = Domain::ball(0, Dyadic::int(2)).unwrap();
        assert!(d.contains([1, 1, 1]));
        assert!(!d.contains([2, 0, 0]));
        // B(2) at unit spacing: |x|^2 in {0,1,2,3}: 1 + 6 + 12 + 8
        assert_eq!(d.lattice_points().unwrap().len(), 27);
    }

    #[test]
    fn scale_mismatch_is_reported() {
        let d = Domain::unit_ball(3);
        let e = d.contains_point(LatticePoint::new([0, 0, 0], 2)).unwrap_err();
        assert_eq!(e, Error::ScaleMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn translated_slab_with_fine_bounds() {
        // half-integer lower bound at scale 0 needs one extra bit
        let s = Shape::Slab {
            lo: Bound::Open(Dyadic::new(1, 1)),
            hi: Bound::Closed(Dyadic::int(3)),
            half_width: Dyadic::ONE,
        }
        .translate([Dyadic::int(10), Dyadic::ZERO, Dyadic::ZERO]);
        let d = Domain::new(0, s).unwrap();
        assert!(!d.contains([10, 0, 0]));
        assert!(d.contains([11, 1, -1]));
        assert!(d.contains([13, 0, 0]));
        assert!(!d.contains([14, 0, 0]));
        assert_eq!(d.lattice_points().unwrap().len(), 3 * 9);
    }

    #[test]
    fn annulus_excludes_inner_sphere() {
        let d = Domain::annulus(0, Dyadic::int(1), Dyadic::int(2)).unwrap();
        assert!(!d.contains([1, 0, 0]));
        assert!(d.contains([1, 1, 0]));
        assert!(d.contains([2, 0, 0]));
        assert!(!d.contains([0, 0, 0]));
    }
}
