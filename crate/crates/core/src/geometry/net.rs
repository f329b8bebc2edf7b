use super::{dist2, zyx_key, Domain, Dyadic, Site};
use crate::error::{invalid, Error, Result};

/// A grid `r Z^3 ∩ D` of net points inside a bounded domain.
///
/// Points are kept in `(z, y, x)` lexicographic order, which is also the
/// tie-break when two net points are equally close to a query site.
#[derive(Clone, Debug)]
pub struct NetGrid {
    domain: Domain,
    spacing: i64,
    points: Vec<Site>,
}

impl NetGrid {
    /// `spacing` must be a positive multiple of the lattice spacing.
    pub fn new(domain: Domain, spacing: Dyadic) -> Result<NetGrid> {
        let n = domain.scale();
        let s = spacing.snapped_units(n, "net spacing")?;
        if s <= 0 {
            return invalid("net spacing must be positive");
        }
        let points: Vec<Site> = domain
            .lattice_points()?
            .into_iter()
            .filter(|p| p.iter().all(|c| c.rem_euclid(s) == 0))
            .collect();
        if points.is_empty() {
            return Err(Error::EmptyDomain);
        }
        Ok(NetGrid { domain, spacing: s, points })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn spacing(&self) -> i64 {
        self.spacing
    }

    pub fn points(&self) -> &[Site] {
        &self.points
    }

    /// Closest net point to `x`, ties broken by `(z, y, x)` order.
    pub fn nearest(&self, x: Site) -> Site {
        let s = self.spacing;
        let base = x.map(|c| c.div_euclid(s));
        let mut best: Option<(i128, (i64, i64, i64), Site)> = None;
        for dz in -2..=2 {
            for dy in -2..=2 {
                for dx in -2..=2 {
                    let p = [(base[0] + dx) * s, (base[1] + dy) * s, (base[2] + dz) * s];
                    if !self.domain.contains(p) {
                        continue;
                    }
                    let key = (dist2(p, x), zyx_key(p), p);
                    if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                        best = Some(key);
                    }
                }
            }
        }
        // Any net point beyond the searched block is at least 2s away while
        // the best candidate found is within sqrt(3) s, so a hit is final.
        match best {
            Some(b) if b.0 <= 3 * (s as i128) * (s as i128) => b.2,
            _ => *self
                .points
                .iter()
                .min_by_key(|p| (dist2(**p, x), zyx_key(**p)))
                .expect("net is non-empty"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_prefers_lexicographically_first_tie() {
        let d = Domain::unit_ball(3);
        let net = NetGrid::new(d, Dyadic::new(1, 2)).unwrap();
        assert_eq!(net.spacing(), 2);
        // (1,0,0) is equidistant from (0,0,0) and (2,0,0)
        assert_eq!(net.nearest([1, 0, 0]), [0, 0, 0]);
        assert_eq!(net.nearest([3, 3, 0]), [2, 2, 0]);
    }

    #[test]
    fn nearest_matches_brute_force() {
        let d = Domain::unit_ball(3);
        let net = NetGrid::new(d.clone(), Dyadic::new(3, 3)).unwrap();
        for x in d.lattice_points().unwrap() {
            let bf = *net.points().iter().min_by_key(|p| (dist2(**p, x), zyx_key(**p))).unwrap();
            assert_eq!(net.nearest(x), bf, "at {x:?}");
        }
    }
}
