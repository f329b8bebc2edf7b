//! Good cut times and the events `V_1 .. V_5` for a walk started where a
//! path first leaves the box `{‖x‖∞ <= M 2^-m}`.
//!
//! Everything is evaluated in a frame where the exit face is the right face
//! (`+x`); the lattice symmetry used is a coordinate swap followed by a sign
//! flip, both of which preserve the walk law and every clause.

use serde::{Deserialize, Serialize};

use super::tube::length_scale;
use crate::error::{invalid, precondition, Error, Result};
use crate::geometry::{check_scale, dist2, norm2, sup_norm, Domain, Site, TubePartition};
use crate::loop_erasure::erase_loops;
use crate::rng::RandomSource;
use crate::walk::{sample_conditioned_walk, ConditionedSample, ConditionedWalkSpec, LatticePath, SimplePath, StopRule};

/// Box half-side `M` (in units of `2^-m`) and the tube scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VGeometry {
    pub tube: TubePartition,
    pub box_half: i64,
}

impl VGeometry {
    pub fn new(tube: TubePartition, box_half: i64) -> Result<Self> {
        if box_half <= 0 {
            return invalid("box half-side M must be positive");
        }
        if tube.half_q().is_none() {
            return invalid("q/2 is not a lattice length: need n > m + m0");
        }
        let g = VGeometry { tube, box_half };
        // B ⊂ (3/4) D: the corner at distance sqrt(3) M 2^-m
        let side = g.box_units() as i128;
        let unit = 1i128 << tube.n;
        if 3 * side * side * 16 > 9 * unit * unit {
            return invalid("the box is not inside (3/4) of the unit ball");
        }
        Ok(g)
    }

    /// `M 2^-m` in lattice units.
    pub fn box_units(&self) -> i64 {
        self.box_half * self.tube.unit()
    }

    fn mu(&self, k: i64) -> i64 {
        k * self.tube.m0 as i64 * self.tube.unit()
    }
}

/// The exit face: coordinate `axis` with sign `sign`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub axis: usize,
    pub sign: i64,
}

impl Frame {
    fn to_frame(self, s: Site) -> Site {
        let mut t = s;
        t.swap(0, self.axis);
        t[0] *= self.sign;
        t
    }

    fn from_frame(self, s: Site) -> Site {
        let mut t = s;
        t[0] *= self.sign;
        t.swap(0, self.axis);
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VEventReport {
    pub geometry: VGeometry,
    pub c_hat: f64,
    pub beta: f64,
    pub frame: Frame,
    /// Exit point and anchor `w = z + 100 m0 2^-m e`, original coordinates.
    pub z: Site,
    pub w: Site,
    /// `T`, the first exit of the unit ball.
    pub exit_index: usize,
    pub tau: [Option<usize>; 4],
    pub good_cuts: Vec<usize>,
    pub k_star: Option<usize>,
    pub xi_len: Option<usize>,
    pub u1: Option<usize>,
    /// `V_1 .. V_5`; `None` when a clause refers to a time that does not exist
    /// (`V_4` without a good cut, `V_5` without `τ_3`).
    pub v: [Option<bool>; 5],
    /// First index breaking `V_1` or `V_2`, or the late return breaking `V_5`.
    pub witness: Option<usize>,
}

impl VEventReport {
    pub fn all(&self) -> Option<bool> {
        super::tube::all_of(self.v)
    }
}

/// The face of `z`; ties on edges and corners go to the first axis, `+`
/// before `-`.
fn exit_frame(z: Site, side: i64) -> Result<Frame> {
    for axis in 0..3 {
        for sign in [1, -1] {
            if z[axis] * sign == side + 1 {
                return Ok(Frame { axis, sign });
            }
        }
    }
    precondition("the prefix does not end on the outer boundary of the box")
}

/// Walk from `z = λ(len)` conditioned on `X[1, T] ∩ λ = ∅`, run to the exit of
/// the unit ball.
pub fn sample_v_walk(prefix: &SimplePath, max_attempts: u64, rng: &mut RandomSource) -> Result<ConditionedSample> {
    let n = prefix.scale();
    let spec = ConditionedWalkSpec {
        start: prefix.end(),
        avoid: prefix.sites().iter().copied().collect(),
        rule: StopRule::ExitDomain(Domain::unit_ball(n)),
        max_attempts,
    };
    sample_conditioned_walk(&spec, rng)
}

/// Evaluates the good cut times, `k_*`, `ξ`, `U_1` and `V_1 .. V_5`.
///
/// `walk` must start at the end of `prefix` and reach the exit of the unit
/// ball; it is cut at that exit. Avoidance of `prefix` is the sampler's
/// business and is not re-checked here.
pub fn detect_v_events(
    prefix: &SimplePath,
    walk: &LatticePath,
    geometry: &VGeometry,
    c_hat: f64,
    beta: f64,
) -> Result<VEventReport> {
    let g = *geometry;
    let t = g.tube;
    check_scale(t.n, prefix.scale())?;
    check_scale(t.n, walk.scale())?;
    if !(c_hat > 0.0) {
        return invalid("Ĉ must be positive");
    }
    if !(beta > 1.0 && beta <= 5.0 / 3.0) {
        return invalid(format!("β = {beta} is outside (1, 5/3]"));
    }
    let side = g.box_units();
    let ps = prefix.sites();
    if ps[0] != [0, 0, 0] {
        return precondition("the prefix must start at the origin");
    }
    if let Some(i) = ps[..ps.len() - 1].iter().position(|s| sup_norm(*s) > side) {
        return Err(Error::Precondition(format!("the prefix leaves the box at index {i} before its end")));
    }
    let z0 = *ps.last().unwrap();
    let frame = exit_frame(z0, side)?;
    if walk.at(0) != z0 {
        return precondition("the walk must start at the end of the prefix");
    }
    let one = 1i128 << t.n;
    let Some(exit) = walk.sites().iter().position(|s| norm2(*s) >= one * one) else {
        return precondition("the walk does not reach the exit of the unit ball");
    };
    let x: Vec<Site> = walk.sites()[..=exit].iter().map(|s| frame.to_frame(*s)).collect();
    let z = frame.to_frame(z0);
    let w = [z[0] + g.mu(100), z[1], z[2]];
    let rel = |s: Site| [s[0] - w[0], s[1] - w[1], s[2] - w[2]];
    let q = t.q();
    let hq = t.half_q().expect("checked by VGeometry::new");
    let top = t.a(2 * t.m0 as usize + 1);

    let reach0 = g.mu(100) - t.unit();
    let tau0 = x.iter().position(|s| sup_norm([s[0] - z[0], s[1] - z[1], s[2] - z[2]]) >= reach0);
    let tau1 = x.iter().position(|s| t.in_plane(rel(*s), t.a(1)));
    let tau2 = x.iter().position(|s| t.in_plane(rel(*s), top));
    let r3 = g.mu(40) as i128;
    let tau3 = tau1.and_then(|t1| (t1..x.len()).find(|&j| dist2(x[j], x[t1]) >= r3 * r3));

    // V_1
    let line_r2 = (g.mu(1) as i128).pow(2);
    let off_line = |s: Site| {
        let d = [s[0] - z[0], s[1] - z[1], s[2] - z[2]];
        let t2 = (d[1] as i128).pow(2) + (d[2] as i128).pow(2);
        if d[0] >= 0 {
            t2
        } else {
            t2 + (d[0] as i128).pow(2)
        }
    };
    let mut witness = None;
    let v1 = match tau0 {
        None => false,
        Some(t0) => {
            let far = (0..=t0).find(|&j| off_line(x[j]) > line_r2);
            if far.is_some() {
                witness = far;
            }
            t.in_face(rel(x[t0]), t.a(0)) && far.is_none()
        }
    };
    // V_2
    let v2 = match (tau0, tau1) {
        (Some(t0), Some(t1)) => {
            let out = (t0..=t1).find(|&j| !t.in_closed_slab(rel(x[j]), t.a(0) - t.unit(), t.a(1)));
            if out.is_some() && witness.is_none() {
                witness = out;
            }
            out.is_none() && t.in_face(rel(x[t1]), t.a(1))
        }
        _ => false,
    };

    // good cut times
    let mut good_cuts = Vec::new();
    if let (Some(t1), Some(t3)) = (tau1, tau3) {
        let r103 = (g.mu(103) as i128).pow(2);
        let iii = match tau2 {
            Some(t2) if t2 <= t3 => x[t2..=t3].iter().all(|s| dist2(*s, z) >= r103),
            _ => true,
        };
        let end = x[t3];
        let iv = dist2(end, w) < (g.mu(41) as i128).pow(2) && end[0] - z[0] >= g.mu(138);
        if iii && iv {
            let a2 = t.a(2);
            let disjoint = split_disjoint(&x, t1, t3);
            let head_bad = (t1..=t3).find(|&j| !t.in_closed_slab(rel(x[j]), 0, a2 + q));
            let last_bad_tail = tau2.and_then(|t2| (0..=t2).rev().find(|&j| !t.in_closed_slab(rel(x[j]), a2, top)));
            for k in t1..=t3 {
                let i = k == t3 || disjoint[k - t1];
                let ii = head_bad.is_none_or(|b| b > k)
                    && t.in_closed_slab(rel(x[k]), a2 + hq, a2 + q)
                    && match tau2 {
                        Some(t2) if k <= t2 => last_bad_tail.is_none_or(|b| b < k),
                        _ => true,
                    };
                if i && ii {
                    good_cuts.push(k);
                }
            }
        }
    }
    let k_star = good_cuts.first().copied();
    let (xi_len, u1) = match (k_star, tau3) {
        (Some(k), Some(t3)) => {
            let seg = LatticePath::from_sites_unchecked(t.n, x[k..=t3].to_vec());
            let xi = erase_loops(&seg);
            let u1 = xi.sites().iter().position(|s| t.in_plane(rel(*s), t.a(t.m0 as usize)));
            (Some(xi.len()), u1)
        }
        _ => (None, None),
    };
    let bound = c_hat * t.m0 as f64 * length_scale(&t, beta);
    let v4 = k_star.map(|_| u1.is_some_and(|u| u as f64 <= bound));
    let v5 = tau3.map(|t3| {
        let r = (g.mu(110) as i128).pow(2);
        let back = (t3..=exit).find(|&j| dist2(x[j], z) < r);
        if back.is_some() && witness.is_none() {
            witness = back;
        }
        back.is_none()
    });
    Ok(VEventReport {
        geometry: g,
        c_hat,
        beta,
        frame,
        z: z0,
        w: frame.from_frame(w),
        exit_index: exit,
        tau: [tau0, tau1, tau2, tau3],
        good_cuts,
        k_star,
        xi_len,
        u1,
        v: [Some(v1), Some(v2), Some(k_star.is_some()), v4, v5],
        witness,
    })
}

fn split_disjoint(s: &[Site], lo: usize, hi: usize) -> Vec<bool> {
    let last = crate::loop_erasure::last_occurrence(&s[lo..=hi]);
    let mut reach = 0usize;
    last.iter()
        .enumerate()
        .map(|(j, &l)| {
            reach = reach.max(l);
            reach <= j
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::sample_walk;
    use rustc_hash::FxHashSet;

    fn vertex_set(s: &[Site]) -> FxHashSet<Site> {
        s.iter().copied().collect()
    }

    /// Box exit straight along `+x` at `M = 10`, then the walk keeps going.
    fn setup(m0: u8, n: u8) -> (VGeometry, SimplePath) {
        let t = TubePartition::new(9, m0, n).unwrap();
        let g = VGeometry::new(t, 10).unwrap();
        let side = g.box_units();
        let pre = SimplePath::new(LatticePath::new(n, (0..=side + 1).map(|i| [i, 0, 0]).collect()).unwrap()).unwrap();
        (g, pre)
    }

    fn ray(from: Site, dir: Site, until: impl Fn(Site) -> bool) -> Vec<Site> {
        let mut out = vec![from];
        let mut c = from;
        while !until(c) {
            c = [c[0] + dir[0], c[1] + dir[1], c[2] + dir[2]];
            out.push(c);
        }
        out
    }

    fn out_of_ball(n: u8) -> impl Fn(Site) -> bool {
        move |s| norm2(s) >= (1i128 << n).pow(2)
    }

    #[test]
    fn monotone_walk_along_the_half_line() {
        let (g, pre) = setup(2, 12);
        let z = pre.end().site;
        let walk = LatticePath::new(12, ray(z, [1, 0, 0], out_of_ball(12))).unwrap();
        let r = detect_v_events(&pre, &walk, &g, 1.0, 1.6).unwrap();
        let u = g.tube.unit() as usize;
        assert_eq!(r.frame, Frame { axis: 0, sign: 1 });
        assert_eq!(r.tau[0], Some(199 * u));
        assert_eq!(r.tau[1], Some(201 * u));
        assert_eq!(r.tau[2], Some(209 * u));
        assert_eq!(r.tau[3], Some(281 * u));
        let q = g.tube.q() as usize;
        assert_eq!(r.k_star, Some(203 * u + q / 2));
        assert_eq!(r.good_cuts, ((203 * u + q / 2)..=(203 * u + q)).collect::<Vec<_>>());
        assert_eq!(r.v[..3], [Some(true); 3]);
        // with m0 = 2 the plane a_{m0} is a_2, behind every good cut point
        assert_eq!((r.u1, r.v[3]), (None, Some(false)));
        assert_eq!(r.v[4], Some(true));
    }

    #[test]
    fn monotone_walk_with_three_cubes_passes_every_v() {
        let (g, pre) = setup(3, 13);
        let z = pre.end().site;
        let walk = LatticePath::new(13, ray(z, [1, 0, 0], out_of_ball(13))).unwrap();
        let r = detect_v_events(&pre, &walk, &g, 1.0, 1.6).unwrap();
        let (u, q) = (g.tube.unit() as usize, g.tube.q() as usize);
        assert_eq!(r.u1, Some(2 * u - q / 2));
        assert_eq!(r.all(), Some(true));
    }

    #[test]
    fn late_return_breaks_v5() {
        let (g, pre) = setup(2, 12);
        let z = pre.end().site;
        let u = g.tube.unit();
        let mut s = ray(z, [1, 0, 0], |c| c[0] >= z[0] + 300 * u);
        let turn = *s.last().unwrap();
        s.extend(ray(turn, [-1, 0, 0], |c| c[0] <= z[0] + 200 * u).into_iter().skip(1));
        let back = *s.last().unwrap();
        s.extend(ray(back, [0, 1, 0], out_of_ball(12)).into_iter().skip(1));
        let walk = LatticePath::new(12, s).unwrap();
        let r = detect_v_events(&pre, &walk, &g, 1.0, 1.6).unwrap();
        assert_eq!(r.v[2], Some(true));
        assert_eq!(r.v[4], Some(false));
        let k = r.witness.unwrap();
        assert!(dist2(walk.at(k), z) < (220 * u as i128).pow(2));
    }

    #[test]
    fn other_faces_map_to_the_right_face() {
        let (g, pre) = setup(2, 12);
        let walk = LatticePath::new(12, ray(pre.end().site, [1, 0, 0], out_of_ball(12))).unwrap();
        let base = detect_v_events(&pre, &walk, &g, 1.0, 1.6).unwrap();
        // the same picture rotated so the exit is through the -y face
        let map = |s: Site| [s[1], -s[0], s[2]];
        let pre2 = SimplePath::new(LatticePath::new(12, pre.sites().iter().map(|s| map(*s)).collect()).unwrap()).unwrap();
        let walk2 = LatticePath::new(12, walk.sites().iter().map(|s| map(*s)).collect()).unwrap();
        let r = detect_v_events(&pre2, &walk2, &g, 1.0, 1.6).unwrap();
        assert_eq!(r.frame, Frame { axis: 1, sign: -1 });
        assert_eq!((r.tau, &r.good_cuts, r.v), (base.tau, &base.good_cuts, base.v));
        assert_eq!(r.w, map(base.w));
    }

    #[test]
    fn good_cuts_match_literal_clauses() {
        // random walks from z, scored clause by clause over vertex sets
        let (g, pre) = setup(2, 12);
        let t = g.tube;
        let z = pre.end().site;
        let mut rng = RandomSource::new(5, 0);
        let mut seen = 0;
        for _ in 0..60 {
            // straight to the window, a short random wiggle there, then
            // straight out of the ball
            let mut s = ray(z, [1, 0, 0], |c| c[0] >= z[0] + 203 * t.unit() - 2);
            let mut c = *s.last().unwrap();
            for _ in 0..rng.index(120) {
                c = crate::geometry::step(c, rng.direction());
                s.push(c);
            }
            s.extend(ray(c, [1, 0, 0], out_of_ball(12)).into_iter().skip(1));
            let walk = LatticePath::new(12, s).unwrap();
            let r = detect_v_events(&pre, &walk, &g, 1.0, 1.6).unwrap();
            let x = walk.sites();
            let w = r.w;
            let rel = |p: Site| [p[0] - w[0], p[1] - w[1], p[2] - w[2]];
            let (Some(t1), Some(t3)) = (r.tau[1], r.tau[3]) else { continue };
            let u = t.unit();
            let mu = |k: i64| (k * 2 * u) as i128;
            let literal = |k: usize| {
                let head = vertex_set(&x[t1..=k]);
                let i = x[k + 1..=t3].iter().all(|p| !head.contains(p));
                let ii = x[t1..=k].iter().all(|p| t.in_closed_slab(rel(*p), 0, t.a(2) + t.q()))
                    && t.in_closed_slab(rel(x[k]), t.a(2) + t.half_q().unwrap(), t.a(2) + t.q())
                    && r.tau[2].is_none_or(|t2| k > t2 || x[k..=t2].iter().all(|p| t.in_closed_slab(rel(*p), t.a(2), t.a(5))));
                let iii = r.tau[2].is_none_or(|t2| t2 > t3 || x[t2..=t3].iter().all(|p| dist2(*p, z) >= mu(103).pow(2)));
                let iv = dist2(x[t3], w) < mu(41).pow(2) && x[t3][0] - z[0] >= (138 * 2 * u);
                i && ii && iii && iv
            };
            let want: Vec<usize> = (t1..=t3).filter(|&k| literal(k)).collect();
            assert_eq!(r.good_cuts, want);
            seen += want.len();
        }
        assert!(seen > 0);
    }

    #[test]
    fn empty_avoid_set_is_plain_walk() {
        let n = 6;
        let start = crate::geometry::LatticePoint::new([3, 0, 0], n);
        let rule = StopRule::ExitDomain(Domain::unit_ball(n));
        let spec = ConditionedWalkSpec { start, avoid: FxHashSet::default(), rule: rule.clone(), max_attempts: 1 };
        let a = sample_conditioned_walk(&spec, &mut RandomSource::new(9, 1)).unwrap();
        let b = sample_walk(start, &rule, &mut RandomSource::new(9, 1)).unwrap();
        assert_eq!(a.path, b);
    }

    #[test]
    fn sampled_walks_avoid_the_prefix() {
        let t = TubePartition::new(3, 2, 6).unwrap();
        let g = VGeometry::new(t, 2).unwrap();
        let pre = SimplePath::new(LatticePath::new(6, (0..=17).map(|i| [i, 0, 0]).collect()).unwrap()).unwrap();
        let mut rng = RandomSource::new(2, 0);
        for _ in 0..5 {
            let x = sample_v_walk(&pre, 10_000, &mut rng).unwrap().path;
            assert!(x.sites()[1..].iter().all(|s| !pre.sites().contains(s)));
            let r = detect_v_events(&pre, &x, &g, 1.0, 1.6).unwrap();
            assert_eq!(r.exit_index, x.len());
        }
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let (g, pre) = setup(2, 12);
        let inner = SimplePath::new(LatticePath::new(12, (0..=5).map(|i| [i, 0, 0]).collect()).unwrap()).unwrap();
        let walk = LatticePath::new(12, ray([5, 0, 0], [1, 0, 0], out_of_ball(12))).unwrap();
        assert!(matches!(detect_v_events(&inner, &walk, &g, 1.0, 1.6), Err(Error::Precondition(_))));
        let short = LatticePath::new(12, vec![pre.end().site]).unwrap();
        assert!(detect_v_events(&pre, &short, &g, 1.0, 1.6).is_err());
        assert!(VGeometry::new(TubePartition::new(2, 2, 12).unwrap(), 2).is_err());
        assert!(VGeometry::new(TubePartition::new(9, 2, 11).unwrap(), 10).is_err());
    }
}
