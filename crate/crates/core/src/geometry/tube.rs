use serde::{Deserialize, Serialize};

use super::{Bound, Domain, Dyadic, Shape, Site};
use crate::error::{invalid, Result};

/// Partition of a tube along the first axis into cubes `Q_i = H[a_i, a_{i+1}]`.
///
/// With `u = 2^-m` the planes sit at `a_i = u (2i - 1)`, every slab has
/// transverse half-width `u`, and the backtracking allowance is
/// `q = 2^(-m-m0)`. All helpers below work in lattice units of `2^-n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TubePartition {
    pub m: u8,
    pub m0: u8,
    pub n: u8,
}

impl TubePartition {
    /// Requires `m0 >= 2` and `n >= m + m0`, so that `q` is a lattice length.
    pub fn new(m: u8, m0: u8, n: u8) -> Result<Self> {
        if m0 < 2 {
            return invalid(format!("m0 must be at least 2, got {m0}"));
        }
        if (n as u32) < m as u32 + m0 as u32 {
            return invalid(format!("scale n = {n} is below m + m0 = {}", m as u32 + m0 as u32));
        }
        if n > 40 {
            return invalid(format!("scale n = {n} is too fine"));
        }
        Ok(TubePartition { m, m0, n })
    }

    /// `2^-m` in lattice units: transverse half-width and half cube side.
    #[inline]
    pub fn unit(&self) -> i64 {
        1i64 << (self.n - self.m)
    }

    /// `q` in lattice units.
    #[inline]
    pub fn q(&self) -> i64 {
        1i64 << (self.n - self.m - self.m0)
    }

    /// `q / 2` in lattice units, if `q/2` is a lattice length.
    pub fn half_q(&self) -> Option<i64> {
        (self.n > self.m + self.m0).then(|| self.q() / 2)
    }

    /// Number of planes `a_0 .. a_{2 m0 + 1}`.
    pub fn plane_count(&self) -> usize {
        2 * self.m0 as usize + 2
    }

    /// Plane `a_i` in lattice units.
    #[inline]
    pub fn a(&self, i: usize) -> i64 {
        self.unit() * (2 * i as i64 - 1)
    }

    /// `a_{3 m0 / 2}` in lattice units, read as `u (3 m0 - 1)` so that odd
    /// `m0` is covered as well.
    pub fn a_three_halves(&self) -> i64 {
        self.unit() * (3 * self.m0 as i64 - 1)
    }

    pub fn a_dyadic(&self, i: usize) -> Dyadic {
        Dyadic::pow2(-(self.m as i32)).mul_int(2 * i as i64 - 1)
    }

    pub fn q_dyadic(&self) -> Dyadic {
        Dyadic::pow2(-(self.m as i32) - self.m0 as i32)
    }

    pub fn unit_dyadic(&self) -> Dyadic {
        Dyadic::pow2(-(self.m as i32))
    }

    #[inline]
    fn transverse(&self, s: Site, w: i64) -> bool {
        s[1].abs() <= w && s[2].abs() <= w
    }

    /// `s ∈ H(a)`: on the plane `x^1 = a` inside the tube cross-section.
    #[inline]
    pub fn in_plane(&self, s: Site, a: i64) -> bool {
        s[0] == a && self.transverse(s, self.unit())
    }

    /// `s ∈ G(a)`: the central half of the face `H(a)`.
    #[inline]
    pub fn in_face(&self, s: Site, a: i64) -> bool {
        s[0] == a && self.transverse(s, self.unit() / 2)
    }

    /// Membership in the slab between `lo` and `hi` (lattice units).
    #[inline]
    pub fn in_slab(&self, s: Site, lo: i64, lo_closed: bool, hi: i64, hi_closed: bool) -> bool {
        let x = s[0];
        let lo_ok = if lo_closed { x >= lo } else { x > lo };
        let hi_ok = if hi_closed { x <= hi } else { x < hi };
        lo_ok && hi_ok && self.transverse(s, self.unit())
    }

    #[inline]
    pub fn in_closed_slab(&self, s: Site, lo: i64, hi: i64) -> bool {
        self.in_slab(s, lo, true, hi, true)
    }

    /// `s ∈ Q_i`.
    #[inline]
    pub fn in_cube(&self, s: Site, i: usize) -> bool {
        self.in_closed_slab(s, self.a(i), self.a(i + 1))
    }

    /// `s ∈ H_w` for `w = (wx, 0, 0)`: `|s^1 - wx| <= q`, transverse `<= 2^-m`.
    #[inline]
    pub fn in_cuboid(&self, s: Site, wx: i64) -> bool {
        (s[0] - wx).abs() <= self.q() && self.transverse(s, self.unit())
    }

    /// The slab `H[lo, hi]` as a [`Domain`].
    pub fn slab_domain(&self, lo: Bound, hi: Bound) -> Result<Domain> {
        Domain::new(self.n, Shape::Slab { lo, hi, half_width: self.unit_dyadic() })
    }

    /// The plane section `H(a)` as a [`Domain`]; `a` must be snapped.
    pub fn plane_domain(&self, a: Dyadic) -> Result<Domain> {
        a.snapped_units(self.n, "plane position")?;
        self.slab_domain(Bound::Closed(a), Bound::Closed(a))
    }

    /// `Q_i` as a [`Domain`].
    pub fn cube_domain(&self, i: usize) -> Result<Domain> {
        self.slab_domain(Bound::Closed(self.a_dyadic(i)), Bound::Closed(self.a_dyadic(i + 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q0_at_coarse_scale() {
        // m = 1, m0 = 2, n = 4: a_0 = -1/2, a_1 = 1/2, transverse 1/2
        let t = TubePartition::new(1, 2, 4).unwrap();
        assert_eq!((t.a(0), t.a(1), t.unit(), t.q()), (-8, 8, 8, 2));
        let q0 = t.cube_domain(0).unwrap();
        assert_eq!(q0.lattice_points().unwrap().len(), 17 * 17 * 17);
        assert!(q0.contains([8, 8, -8]));
        assert!(!q0.contains([9, 0, 0]));
    }

    #[test]
    fn scale_below_m_plus_m0_is_rejected() {
        assert!(TubePartition::new(3, 2, 4).is_err());
        assert!(TubePartition::new(3, 1, 8).is_err());
        let t = TubePartition::new(3, 2, 8).unwrap();
        assert_eq!(t.plane_count(), 6);
        assert_eq!(t.q(), 8);
        assert_eq!(t.a_three_halves(), t.a(3));
    }

    #[test]
    fn unsnapped_plane_is_an_error() {
        let t = TubePartition::new(3, 2, 5).unwrap();
        assert!(t.plane_domain(Dyadic::new(1, 6)).is_err());
        assert!(t.plane_domain(Dyadic::new(1, 5)).is_ok());
    }

    #[test]
    fn lattice_helpers_agree_with_domains() {
        let t = TubePartition::new(1, 2, 4).unwrap();
        let q1 = t.cube_domain(1).unwrap();
        for s in q1.lattice_points().unwrap() {
            assert!(t.in_cube(s, 1));
        }
        let a1 = t.plane_domain(t.a_dyadic(1)).unwrap();
        assert_eq!(a1.lattice_points().unwrap().len(), 17 * 17);
    }
}
