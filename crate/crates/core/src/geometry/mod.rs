//! Dyadic lattices `2^-n Z^3`, bounded domains, the tube partition along the
//! first axis and the epsilon-net used by the net-seeded Wilson run.
//!
//! Points are stored as integer coordinates in units of `2^-n`; every
//! threshold is an exact [`Dyadic`], so membership tests never round.

mod domain;
mod dyadic;
mod net;
mod tube;

pub use domain::{Bound, Domain, Shape};
pub use dyadic::Dyadic;
pub use net::NetGrid;
pub use tube::TubePartition;

/// The partition `a_i = 2^-m (2i - 1)`, `q = 2^(-m-m0)` snapped to scale `n`.
pub fn build_tube_partition(m: u8, m0: u8, n: u8) -> Result<TubePartition> {
    TubePartition::new(m, m0, n)
}

/// The cubic net of spacing `r` over `domain`.
pub fn build_net(r: Dyadic, domain: &Domain) -> Result<NetGrid> {
    NetGrid::new(domain.clone(), r)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer lattice coordinates in units of `2^-n` for an implied scale `n`.
pub type Site = [i64; 3];

/// Unit steps in the fixed direction order `+x, -x, +y, -y, +z, -z`.
pub const DIRS: [Site; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

pub const ORIGIN: Site = [0, 0, 0];

#[inline]
pub fn step(s: Site, dir: u8) -> Site {
    let d = DIRS[dir as usize];
    [s[0] + d[0], s[1] + d[1], s[2] + d[2]]
}

#[inline]
pub fn neighbours(s: Site) -> [Site; 6] {
    let mut out = [s; 6];
    for (o, d) in out.iter_mut().zip(DIRS.iter()) {
        o[0] += d[0];
        o[1] += d[1];
        o[2] += d[2];
    }
    out
}

/// Direction code from `a` to its neighbour `b`.
pub fn direction_between(a: Site, b: Site) -> Option<u8> {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    DIRS.iter().position(|x| *x == d).map(|i| i as u8)
}

#[inline]
pub fn sub(a: Site, b: Site) -> Site {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Site, b: Site) -> Site {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Squared Euclidean norm in lattice units.
#[inline]
pub fn norm2(a: Site) -> i128 {
    let [x, y, z] = a.map(|v| v as i128);
    x * x + y * y + z * z
}

#[inline]
pub fn dist2(a: Site, b: Site) -> i128 {
    norm2(sub(a, b))
}

#[inline]
pub fn sup_norm(a: Site) -> i64 {
    a[0].abs().max(a[1].abs()).max(a[2].abs())
}

/// Lexicographic key with `z` most significant, then `y`, then `x`.
#[inline]
pub fn zyx_key(s: Site) -> (i64, i64, i64) {
    (s[2], s[1], s[0])
}

/// A point of `2^-scale Z^3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticePoint {
    pub site: Site,
    pub scale: u8,
}

impl LatticePoint {
    pub fn new(site: Site, scale: u8) -> Self {
        LatticePoint { site, scale }
    }

    pub fn origin(scale: u8) -> Self {
        LatticePoint { site: ORIGIN, scale }
    }

    /// Snap continuum coordinates to the lattice; errors unless exact.
    pub fn from_dyadic(coords: [Dyadic; 3], scale: u8) -> Result<Self> {
        let mut site = [0; 3];
        for (s, c) in site.iter_mut().zip(coords) {
            *s = c.snapped_units(scale, "coordinate")?;
        }
        Ok(LatticePoint { site, scale })
    }

    pub fn to_f64(self) -> [f64; 3] {
        let h = 2f64.powi(-(self.scale as i32));
        self.site.map(|v| v as f64 * h)
    }

    pub fn neighbours(self) -> [LatticePoint; 6] {
        neighbours(self.site).map(|s| LatticePoint { site: s, scale: self.scale })
    }
}

pub(crate) fn check_scale(expected: u8, found: u8) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ScaleMismatch { expected, found })
    }
}

/// Compare `sqrt(lattice_sq) * 2^-n` against `sqrt(bound_sq)` exactly.
///
/// `lattice_sq` is a squared length in lattice units, `bound_sq` a squared
/// continuum length.
pub fn cmp_sq(lattice_sq: i128, n: u8, bound_sq: Dyadic) -> std::cmp::Ordering {
    // lattice_sq / 4^n  vs  num / 2^exp
    let e = bound_sq.exp() as i64;
    let two_n = 2 * n as i64;
    let shift = e.max(two_n);
    let lhs = lattice_sq.checked_shl((shift - two_n) as u32);
    let rhs = (bound_sq.num() as i128).checked_shl((shift - e) as u32);
    match (lhs, rhs) {
        (Some(l), Some(r)) if l.leading_zeros() > 1 && r.leading_zeros() > 1 => l.cmp(&r),
        _ => {
            let l = lattice_sq as f64 / 4f64.powi(n as i32);
            l.partial_cmp(&bound_sq.to_f64()).unwrap_or(std::cmp::Ordering::Equal)
        }
    }
}

/// Squared directed distance `max_{a ∈ A} min_{b ∈ B} |a - b|^2` in lattice
/// units. The inner scan stops once it drops below the running maximum.
fn directed_sq(a: &[Site], b: &[Site]) -> i128 {
    let mut best = 0i128;
    for &x in a {
        let mut inner = i128::MAX;
        for &y in b {
            let d = dist2(x, y);
            if d < inner {
                inner = d;
                if inner <= best {
                    break;
                }
            }
        }
        best = best.max(inner);
    }
    best
}

/// Hausdorff distance between two non-empty finite sets of lattice points of
/// one scale, in continuum units.
pub fn hausdorff_distance(a: &[LatticePoint], b: &[LatticePoint]) -> Result<f64> {
    let (Some(first), false) = (a.first(), b.is_empty()) else {
        return Err(Error::EmptyDomain);
    };
    let n = first.scale;
    for p in a.iter().chain(b) {
        check_scale(n, p.scale)?;
    }
    let sa: Vec<Site> = a.iter().map(|p| p.site).collect();
    let sb: Vec<Site> = b.iter().map(|p| p.site).collect();
    let sq = directed_sq(&sa, &sb).max(directed_sq(&sb, &sa));
    Ok((sq as f64).sqrt() / 2f64.powi(n as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cmp::Ordering;

    #[test]
    fn cmp_sq_is_exact_at_the_boundary() {
        // |(3,4,0)| = 5 lattice units at scale 2, i.e. 5/4
        let r = Dyadic::new(5, 2);
        assert_eq!(cmp_sq(25, 2, r.mul(r)), Ordering::Equal);
        assert_eq!(cmp_sq(24, 2, r.mul(r)), Ordering::Less);
        assert_eq!(cmp_sq(26, 2, r.mul(r)), Ordering::Greater);
    }

    #[test]
    fn directions_round_trip() {
        for d in 0..6u8 {
            assert_eq!(direction_between(ORIGIN, step(ORIGIN, d)), Some(d));
        }
        assert_eq!(direction_between(ORIGIN, [1, 1, 0]), None);
    }

    #[test]
    fn hausdorff_examples() {
        let o = LatticePoint::origin(0);
        let e = LatticePoint::new([1, 0, 0], 0);
        assert_eq!(hausdorff_distance(&[o], &[o]).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&[o], &[e]).unwrap(), 1.0);
        assert_eq!(hausdorff_distance(&[o, e], &[o]).unwrap(), 1.0);
        assert_eq!(hausdorff_distance(&[LatticePoint::new([3, 4, 0], 2)], &[LatticePoint::origin(2)]).unwrap(), 1.25);
        assert!(hausdorff_distance(&[], &[o]).is_err());
        assert!(hausdorff_distance(&[o], &[LatticePoint::origin(1)]).is_err());
    }
}
