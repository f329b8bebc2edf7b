//! Time-rescaled curves `η(t) = γ(2^{βn} t)`, the metric `ρ` on curves and
//! the Hölder modulus statistic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::walk::LatticePath;

pub type Point = [f64; 3];

/// Piecewise-linear curve through `points` with one breakpoint every `dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametrizedCurve {
    points: Vec<Point>,
    dt: f64,
    scale: Option<u8>,
    beta: Option<f64>,
}

/// `η_n(t) = γ_n(2^{βn} t)` for `β ∈ (1, 5/3]`.
pub fn parametrize(gamma: &LatticePath, beta: f64) -> Result<ParametrizedCurve> {
    if !(beta > 1.0 && beta <= 5.0 / 3.0) {
        return invalid(format!("β = {beta} is outside (1, 5/3]"));
    }
    let n = gamma.scale();
    let unit = 2f64.powi(-(n as i32));
    let points = gamma.sites().iter().map(|s| [s[0] as f64 * unit, s[1] as f64 * unit, s[2] as f64 * unit]).collect();
    Ok(ParametrizedCurve { points, dt: 2f64.powf(-beta * n as f64), scale: Some(n), beta: Some(beta) })
}

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

#[inline]
fn lerp(a: Point, b: Point, f: f64) -> Point {
    [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])]
}

impl ParametrizedCurve {
    /// A curve through arbitrary points, `dt > 0` apart in time.
    pub fn from_points(points: Vec<Point>, dt: f64) -> Result<Self> {
        if points.is_empty() {
            return invalid("a curve needs at least one point");
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid("time step must be positive");
        }
        Ok(ParametrizedCurve { points, dt, scale: None, beta: None })
    }

    /// Records the `β` used for `h = 1/β`; `β = 1` gives `h = 1`.
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta >= 1.0 && beta.is_finite()) {
            return invalid(format!("β = {beta} must be at least 1"));
        }
        self.beta = Some(beta);
        Ok(self)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Number of linear pieces.
    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scale(&self) -> Option<u8> {
        self.scale
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    /// `t_η`.
    pub fn duration(&self) -> f64 {
        self.segments() as f64 * self.dt
    }

    /// Time of breakpoint `k`.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `η(t)`, clamped to `[0, t_η]`.
    pub fn eval(&self, t: f64) -> Point {
        let len = self.segments();
        if len == 0 || t <= 0.0 {
            return self.points[0];
        }
        if t >= self.duration() {
            return self.points[len];
        }
        let x = t / self.dt;
        let k = (x.floor() as usize).min(len - 1);
        lerp(self.points[k], self.points[k + 1], x - k as f64)
    }

    /// `η(s t_η)` for `s = num / den`, with the position computed in integers.
    fn eval_fraction(&self, num: u64, den: u64) -> Point {
        let len = self.segments() as u128;
        if len == 0 {
            return self.points[0];
        }
        let x = num as u128 * len;
        let k = (x / den as u128) as usize;
        let rem = x % den as u128;
        if rem == 0 {
            self.points[k]
        } else {
            lerp(self.points[k], self.points[k + 1], rem as f64 / den as f64)
        }
    }
}

/// `ρ(η_1, η_2) = |t_1 - t_2| + max_{s ∈ [0,1]} |η_1(s t_1) - η_2(s t_2)|`.
///
/// The difference of the two reparametrized curves is linear between
/// consecutive breakpoints of either curve, so the maximum is taken over the
/// merged breakpoint set `{k / len_1} ∪ {j / len_2}`.
pub fn rho_distance(c1: &ParametrizedCurve, c2: &ParametrizedCurve) -> f64 {
    let l1 = c1.segments().max(1) as u64;
    let l2 = c2.segments().max(1) as u64;
    let mut best = 0f64;
    let (mut i, mut j) = (0u64, 0u64);
    // merge k/l1 and j/l2 in increasing order, visiting shared values once
    while i <= l1 || j <= l2 {
        let (num, den) = match (i <= l1, j <= l2) {
            (true, true) => match (i as u128 * l2 as u128).cmp(&(j as u128 * l1 as u128)) {
                Ordering::Less => {
                    i += 1;
                    (i - 1, l1)
                }
                Ordering::Greater => {
                    j += 1;
                    (j - 1, l2)
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (i - 1, l1)
                }
            },
            (true, false) => {
                i += 1;
                (i - 1, l1)
            }
            _ => {
                j += 1;
                (j - 1, l2)
            }
        };
        best = best.max(dist(c1.eval_fraction(num, den), c2.eval_fraction(num, den)));
    }
    (c1.duration() - c2.duration()).abs() + best
}

/// Supremum of `|η(s) - η(t)| / (t - s)^h` and a maximizing pair of times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    pub value: f64,
    pub s: f64,
    pub t: f64,
}

/// Times and positions of the breakpoints inside a window, with the window
/// ends added when they fall between breakpoints.
struct Samples {
    times: Vec<f64>,
    points: Vec<Point>,
}

fn window_samples(curve: &ParametrizedCurve, lo: f64, hi: f64) -> Samples {
    let mut times = vec![lo];
    let mut points = vec![curve.eval(lo)];
    let first = (lo / curve.dt).floor() as usize + 1;
    for k in first..=curve.segments() {
        let t = curve.time(k);
        if t >= hi {
            break;
        }
        if t > lo {
            times.push(t);
            points.push(curve.points[k]);
        }
    }
    if hi > lo {
        times.push(hi);
        points.push(curve.eval(hi));
    }
    Samples { times, points }
}

#[inline]
fn ratio(a: Point, b: Point, gap: f64, h: f64) -> f64 {
    dist(a, b) / gap.powf(h)
}

/// Axis-aligned boxes over index ranges, as a binary tree.
struct BoxTree {
    lo: Vec<Point>,
    hi: Vec<Point>,
    ranges: Vec<(usize, usize)>,
    kids: Vec<Option<(usize, usize)>>,
}

const LEAF: usize = 16;

impl BoxTree {
    fn build(points: &[Point]) -> BoxTree {
        let mut t = BoxTree { lo: Vec::new(), hi: Vec::new(), ranges: Vec::new(), kids: Vec::new() };
        t.node(points, 0, points.len() - 1);
        t
    }

    fn node(&mut self, p: &[Point], a: usize, b: usize) -> usize {
        let id = self.ranges.len();
        let mut lo = p[a];
        let mut hi = p[a];
        for q in &p[a..=b] {
            for c in 0..3 {
                lo[c] = lo[c].min(q[c]);
                hi[c] = hi[c].max(q[c]);
            }
        }
        self.lo.push(lo);
        self.hi.push(hi);
        self.ranges.push((a, b));
        self.kids.push(None);
        if b - a + 1 > LEAF {
            let mid = (a + b) / 2;
            let l = self.node(p, a, mid);
            let r = self.node(p, mid + 1, b);
            self.kids[id] = Some((l, r));
        }
        id
    }

    fn children(&self, id: usize) -> Option<(usize, usize)> {
        self.kids[id]
    }

    fn max_dist(&self, x: usize, y: usize) -> f64 {
        let mut s = 0.0;
        for c in 0..3 {
            let d = (self.hi[y][c] - self.lo[x][c]).abs().max((self.hi[x][c] - self.lo[y][c]).abs());
            s += d * d;
        }
        s.sqrt()
    }
}

struct Candidate {
    bound: f64,
    x: usize,
    y: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, o: &Self) -> bool {
        self.bound == o.bound
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.bound.total_cmp(&o.bound).then(o.x.cmp(&self.x)).then(o.y.cmp(&self.y))
    }
}

/// Relative slack on bounds so float rounding can never prune the maximum.
const SLACK: f64 = 1.0 + 1e-9;

/// `sup |η(s) - η(t)| / (t - s)^h` over `lo <= s < t <= hi` (the whole curve
/// by default).
///
/// On a product of two linear pieces the numerator is convex and the
/// denominator concave in `(s, t)`, so the ratio is quasiconvex and its
/// maximum sits at breakpoints. The search is a best-first branch and bound
/// over pairs of index blocks, with the bound
/// `sup_{g ∈ [g_min, g_max]} min(D, v g) / g^h` where `D` bounds the distance
/// between the blocks and `v` is the curve's speed.
pub fn modulus_statistic(curve: &ParametrizedCurve, h: f64, window: Option<(f64, f64)>) -> Result<Modulus> {
    if !(h > 0.0 && h <= 1.0) {
        return invalid(format!("exponent h = {h} is outside (0, 1]"));
    }
    let (lo, hi) = window.unwrap_or((0.0, curve.duration()));
    if !(lo >= 0.0 && lo <= hi && hi <= curve.duration() * SLACK) {
        return invalid(format!("window [{lo}, {hi}] is not inside [0, {}]", curve.duration()));
    }
    let hi = hi.min(curve.duration());
    let smp = window_samples(curve, lo, hi);
    let k = smp.times.len();
    let zero = Modulus { value: 0.0, s: lo, t: lo };
    if k < 2 {
        return Ok(zero);
    }
    let speed = (0..curve.segments()).map(|i| dist(curve.points[i], curve.points[i + 1])).fold(0.0, f64::max) / curve.dt;
    let mut best = zero;
    let consider = |i: usize, j: usize, best: &mut Modulus| {
        let v = ratio(smp.points[i], smp.points[j], smp.times[j] - smp.times[i], h);
        if v > best.value {
            *best = Modulus { value: v, s: smp.times[i], t: smp.times[j] };
        }
    };
    consider(0, k - 1, &mut best);
    let tree = BoxTree::build(&smp.points);
    let bound = |x: usize, y: usize| -> f64 {
        let (a0, a1) = tree.ranges[x];
        let (b0, b1) = tree.ranges[y];
        let gmax = smp.times[b1] - smp.times[a0];
        let gmin = if a1 < b0 {
            smp.times[b0] - smp.times[a1]
        } else {
            // pairs inside one block: the smallest consecutive gap
            (a0.max(b0)..a1.min(b1)).map(|i| smp.times[i + 1] - smp.times[i]).fold(f64::INFINITY, f64::min)
        };
        if !(gmax > 0.0) {
            return 0.0;
        }
        let d = tree.max_dist(x, y);
        let g = if speed > 0.0 { (d / speed).clamp(gmin, gmax) } else { gmax };
        (d.min(speed * g) / g.powf(h)) * SLACK
    };
    let mut heap = BinaryHeap::new();
    heap.push(Candidate { bound: f64::INFINITY, x: 0, y: 0 });
    while let Some(c) = heap.pop() {
        if c.bound <= best.value {
            break;
        }
        match (tree.children(c.x), tree.children(c.y)) {
            (None, None) => {
                let (a0, a1) = tree.ranges[c.x];
                let (b0, b1) = tree.ranges[c.y];
                for i in a0..=a1 {
                    for j in b0.max(i + 1)..=b1 {
                        consider(i, j, &mut best);
                    }
                }
            }
            (cx, cy) => {
                let mut pairs = Vec::with_capacity(4);
                if c.x == c.y {
                    let (l, r) = cx.expect("same node has children");
                    pairs.extend([(l, l), (l, r), (r, r)]);
                } else {
                    let size = |id: usize| tree.ranges[id].1 - tree.ranges[id].0;
                    match (cx, cy) {
                        (Some((l, r)), _) if cy.is_none() || size(c.x) >= size(c.y) => {
                            pairs.extend([(l, c.y), (r, c.y)])
                        }
                        (_, Some((l, r))) => pairs.extend([(c.x, l), (c.x, r)]),
                        _ => unreachable!(),
                    }
                }
                for (x, y) in pairs {
                    let b = bound(x, y);
                    if b > best.value {
                        heap.push(Candidate { bound: b, x, y });
                    }
                }
            }
        }
    }
    Ok(best)
}

/// `O(K^2)` scan over the same sample times; the reference for the
/// branch-and-bound search.
pub fn modulus_statistic_naive(curve: &ParametrizedCurve, h: f64, window: Option<(f64, f64)>) -> Result<Modulus> {
    if !(h > 0.0 && h <= 1.0) {
        return invalid(format!("exponent h = {h} is outside (0, 1]"));
    }
    let (lo, hi) = window.unwrap_or((0.0, curve.duration()));
    let smp = window_samples(curve, lo, hi.min(curve.duration()));
    let mut best = Modulus { value: 0.0, s: lo, t: lo };
    for i in 0..smp.times.len() {
        for j in i + 1..smp.times.len() {
            let v = ratio(smp.points[i], smp.points[j], smp.times[j] - smp.times[i], h);
            if v > best.value {
                best = Modulus { value: v, s: smp.times[i], t: smp.times[j] };
            }
        }
    }
    Ok(best)
}

/// The single-pair ratio `|η(t) - η(s)| / (t - s)^h` at breakpoints `i < j`,
/// evaluated exactly as inside [`modulus_statistic`].
pub fn pair_ratio(curve: &ParametrizedCurve, i: usize, j: usize, h: f64) -> f64 {
    ratio(curve.points[i], curve.points[j], curve.time(j) - curve.time(i), h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(len: usize, dt: f64) -> ParametrizedCurve {
        ParametrizedCurve::from_points((0..=len).map(|i| [i as f64 / len as f64, 0.0, 0.0]).collect(), dt).unwrap()
    }

    #[test]
    fn scale_zero_is_the_path_itself() {
        let g = LatticePath::new(0, vec![[0, 0, 0], [1, 0, 0], [1, 1, 0]]).unwrap();
        let c = parametrize(&g, 1.5).unwrap();
        assert_eq!(c.duration(), 2.0);
        assert_eq!(c.eval(1.5), [1.0, 0.5, 0.0]);
        assert_eq!(c.eval(2.0), [1.0, 1.0, 0.0]);
        assert!(parametrize(&g, 1.0).is_err());
        assert!(parametrize(&g, 1.7).is_err());
    }

    #[test]
    fn duration_is_len_times_dt() {
        let g = LatticePath::new(3, (0..=5).map(|i| [i, 0, 0]).collect()).unwrap();
        let c = parametrize(&g, 1.6).unwrap();
        assert!((c.duration() - 5.0 * 2f64.powf(-4.8)).abs() < 1e-15);
    }

    #[test]
    fn rho_examples() {
        let c = line(4, 0.25);
        assert_eq!(rho_distance(&c, &c), 0.0);
        let p = ParametrizedCurve::from_points(vec![[0.0; 3], [0.0; 3]], 0.5).unwrap();
        let q = ParametrizedCurve::from_points(vec![[0.0, 0.3, 0.4], [0.0, 0.3, 0.4]], 0.5).unwrap();
        assert!((rho_distance(&p, &q) - 0.5).abs() < 1e-15);
        let r = ParametrizedCurve::from_points(vec![[0.0; 3], [0.0; 3]], 0.75).unwrap();
        assert!((rho_distance(&p, &r) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rho_uses_merged_breakpoints() {
        // a zigzag of 3 pieces against a straight line of 2 pieces: the
        // largest gap is at s = 1/3
        let z = ParametrizedCurve::from_points(vec![[0.0; 3], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0; 3]], 1.0).unwrap();
        let s = ParametrizedCurve::from_points(vec![[0.0; 3], [0.0; 3], [0.0; 3]], 1.5).unwrap();
        assert!((rho_distance(&z, &s) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn modulus_examples() {
        let c = ParametrizedCurve::from_points(vec![[0.5; 3]; 4], 0.25).unwrap();
        assert_eq!(modulus_statistic(&c, 0.5, None).unwrap().value, 0.0);
        let l = line(8, 0.125);
        let m = modulus_statistic(&l, 1.0, None).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        let m = modulus_statistic(&l, 0.5, None).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        assert_eq!((m.s, m.t), (0.0, 1.0));
        assert!(modulus_statistic(&l, 0.0, None).is_err());
        assert!(modulus_statistic(&l, 1.5, None).is_err());
    }

    #[test]
    fn window_ends_between_breakpoints() {
        let l = line(4, 0.25);
        let m = modulus_statistic(&l, 1.0, Some((0.1, 0.3))).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        assert!((m.s - 0.1).abs() < 1e-15 && (m.t - 0.3).abs() < 1e-15);
    }

    fn zigzag(len: usize, seed: u64) -> ParametrizedCurve {
        let mut rng = crate::rng::RandomSource::new(seed, 0);
        let mut cur = [0i64; 3];
        let mut sites = vec![cur];
        for _ in 0..len {
            cur = crate::geometry::step(cur, rng.direction());
            sites.push(cur);
        }
        let p = LatticePath::new(4, sites).unwrap();
        parametrize(&p, 1.6).unwrap()
    }

    #[test]
    fn branch_and_bound_matches_the_full_scan() {
        for seed in 0..12 {
            let c = zigzag(300, seed);
            for h in [0.4, 1.0 / 1.6, 0.9, 1.0] {
                let a = modulus_statistic(&c, h, None).unwrap();
                let b = modulus_statistic_naive(&c, h, None).unwrap();
                assert!((a.value - b.value).abs() <= 1e-12 * b.value, "{seed} {h}: {a:?} {b:?}");
                let w = Some((0.3 * c.duration(), 0.71 * c.duration()));
                let a = modulus_statistic(&c, h, w).unwrap();
                let b = modulus_statistic_naive(&c, h, w).unwrap();
                assert!((a.value - b.value).abs() <= 1e-12 * b.value);
            }
        }
    }

    #[test]
    fn breakpoints_dominate_a_finer_grid() {
        // the sup over a 4x finer time grid never beats the breakpoint sup
        for seed in 0..4 {
            let c = zigzag(60, seed);
            let h = 0.625;
            let m = modulus_statistic(&c, h, None).unwrap().value;
            let k = 4 * c.segments();
            let step = c.duration() / k as f64;
            let mut fine = 0f64;
            for i in 0..=k {
                for j in i + 1..=k {
                    let (s, t) = (i as f64 * step, j as f64 * step);
                    fine = fine.max(dist(c.eval(s), c.eval(t)) / (t - s).powf(h));
                }
            }
            assert!(fine <= m * (1.0 + 1e-9), "{fine} > {m}");
        }
    }
}
