//! Quasi-loops: `x` is an `(s1, s2)`-quasi-loop centre of `γ` when some
//! `k1 <= k2` have `γ(k1), γ(k2) ∈ B(x, s1)` while `γ[k1, k2] ⊄ B(x, s2)`.
//!
//! With `e_x` and `l_x` the first and last indices in `B(x, s1)`, the
//! condition is `max_{e_x <= j <= l_x} |γ(j) - x| >= s2`. Centres are
//! searched over an octree of lattice boxes; a segment tree of bounding boxes
//! over path indices gives conservative per-box versions of `e`, `l` and the
//! maximum, so whole boxes can be discarded without losing centres.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{dist2, Dyadic, Site};
use crate::walk::LatticePath;

/// `d^2 < s^2` in lattice units for a dyadic length `s`, exactly.
#[derive(Clone, Copy, Debug)]
struct SqBound {
    num2: i128,
    shift: u32,
}

impl SqBound {
    fn new(s: Dyadic, n: u8) -> Result<SqBound> {
        // s 2^n = num / 2^e
        let e = (s.exp() as i64 - n as i64).max(0) as u32;
        let num = if s.exp() as i64 >= n as i64 { s.num() as i128 } else { (s.num() as i128) << (n as u32 - s.exp()) };
        let num2 = num.checked_mul(num).filter(|v| v.leading_zeros() > 2);
        match num2 {
            Some(num2) if e < 40 => Ok(SqBound { num2, shift: 2 * e }),
            _ => invalid("radius too large or too fine for exact comparison"),
        }
    }

    #[inline]
    fn below(&self, d2: i128) -> bool {
        (d2 << self.shift) < self.num2
    }

    /// Smallest integer `r` with `r^2 >= s^2` (lattice units), for boxes.
    fn ceil_radius(&self) -> i64 {
        let mut r = ((self.num2 as f64).sqrt() / 2f64.powi(self.shift as i32 / 2)) as i64;
        while self.below((r as i128) * (r as i128)) {
            r += 1;
        }
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Aabb {
    lo: Site,
    hi: Site,
}

impl Aabb {
    fn point(s: Site) -> Aabb {
        Aabb { lo: s, hi: s }
    }

    fn union(a: Aabb, b: Aabb) -> Aabb {
        let mut r = a;
        for c in 0..3 {
            r.lo[c] = a.lo[c].min(b.lo[c]);
            r.hi[c] = a.hi[c].max(b.hi[c]);
        }
        r
    }

    /// Squared distance between the closest points of two boxes.
    fn min_d2(&self, o: &Aabb) -> i128 {
        let mut s = 0i128;
        for c in 0..3 {
            let gap = (o.lo[c] - self.hi[c]).max(self.lo[c] - o.hi[c]).max(0) as i128;
            s += gap * gap;
        }
        s
    }

    /// Squared distance between the farthest points of two boxes.
    fn max_d2(&self, o: &Aabb) -> i128 {
        let mut s = 0i128;
        for c in 0..3 {
            let d = (o.hi[c] - self.lo[c]).abs().max((self.hi[c] - o.lo[c]).abs()) as i128;
            s += d * d;
        }
        s
    }

    fn volume(&self) -> i128 {
        (0..3).map(|c| (self.hi[c] - self.lo[c] + 1) as i128).product()
    }

    /// Split along the longest axis.
    fn split(&self) -> (Aabb, Aabb) {
        let c = (0..3).max_by_key(|&c| (self.hi[c] - self.lo[c], -(c as i64))).unwrap();
        let mid = self.lo[c] + (self.hi[c] - self.lo[c]).div_euclid(2);
        let mut a = *self;
        let mut b = *self;
        a.hi[c] = mid;
        b.lo[c] = mid + 1;
        (a, b)
    }
}

/// Bounding boxes of index ranges of a path.
struct SegTree {
    size: usize,
    boxes: Vec<Aabb>,
    len: usize,
}

impl SegTree {
    fn new(sites: &[Site]) -> SegTree {
        let len = sites.len();
        let size = len.next_power_of_two();
        let empty = Aabb { lo: [i64::MAX; 3], hi: [i64::MIN; 3] };
        let mut boxes = vec![empty; 2 * size];
        for (i, s) in sites.iter().enumerate() {
            boxes[size + i] = Aabb::point(*s);
        }
        for i in (1..size).rev() {
            boxes[i] = Aabb::union(boxes[2 * i], boxes[2 * i + 1]);
        }
        SegTree { size, boxes, len }
    }

    fn node_range(&self, node: usize) -> (usize, usize) {
        let depth = usize::BITS - 1 - node.leading_zeros();
        let width = self.size >> depth;
        let start = (node - (1 << depth)) * width;
        (start, start + width - 1)
    }

    fn is_empty_node(&self, node: usize) -> bool {
        self.node_range(node).0 >= self.len
    }

    /// First index whose site may lie within `s1` of `cell`.
    fn first_near(&self, cell: &Aabb, s1: &SqBound) -> Option<usize> {
        self.find_near(1, cell, s1, true)
    }

    fn last_near(&self, cell: &Aabb, s1: &SqBound) -> Option<usize> {
        self.find_near(1, cell, s1, false)
    }

    fn find_near(&self, node: usize, cell: &Aabb, s1: &SqBound, first: bool) -> Option<usize> {
        if self.is_empty_node(node) || !s1.below(self.boxes[node].min_d2(cell)) {
            return None;
        }
        if node >= self.size {
            return Some(node - self.size);
        }
        let (a, b) = if first { (2 * node, 2 * node + 1) } else { (2 * node + 1, 2 * node) };
        self.find_near(a, cell, s1, first).or_else(|| self.find_near(b, cell, s1, first))
    }

    /// Whether every site with index in `[lo, hi]` is within `s2` of every
    /// point of `cell`.
    fn all_within(&self, node: usize, lo: usize, hi: usize, cell: &Aabb, s2: &SqBound) -> bool {
        let (a, b) = self.node_range(node);
        if b < lo || a > hi || a >= self.len {
            return true;
        }
        if s2.below(self.boxes[node].max_d2(cell)) {
            return true;
        }
        if node >= self.size {
            return false;
        }
        self.all_within(2 * node, lo, hi, cell, s2) && self.all_within(2 * node + 1, lo, hi, cell, s2)
    }
}

struct Search<'a> {
    sites: &'a [Site],
    tree: SegTree,
    s1: SqBound,
    s2: SqBound,
}

impl Search<'_> {
    /// Exact test at a single centre.
    fn is_centre(&self, x: Site) -> bool {
        let Some(e) = self.sites.iter().position(|s| self.s1.below(dist2(*s, x))) else {
            return false;
        };
        let l = self.sites.iter().rposition(|s| self.s1.below(dist2(*s, x))).unwrap();
        self.sites[e..=l].iter().any(|s| !self.s2.below(dist2(*s, x)))
    }

    /// Depth-first over centre boxes; `emit` returns false to stop.
    fn visit(&self, cell: Aabb, emit: &mut dyn FnMut(Site) -> bool) -> bool {
        let Some(e) = self.tree.first_near(&cell, &self.s1) else {
            return true;
        };
        let l = self.tree.last_near(&cell, &self.s1).unwrap();
        if self.tree.all_within(1, e, l, &cell, &self.s2) {
            return true;
        }
        if cell.volume() <= 8 {
            for z in cell.lo[2]..=cell.hi[2] {
                for y in cell.lo[1]..=cell.hi[1] {
                    for x in cell.lo[0]..=cell.hi[0] {
                        if self.is_centre([x, y, z]) && !emit([x, y, z]) {
                            return false;
                        }
                    }
                }
            }
            return true;
        }
        let (a, b) = cell.split();
        self.visit(a, emit) && self.visit(b, emit)
    }
}

fn setup(gamma: &LatticePath, s1: Dyadic, s2: Dyadic) -> Result<(Search<'_>, Aabb)> {
    if !(s1.is_positive() && s1 < s2) {
        return invalid("need 0 < s1 < s2");
    }
    let n = gamma.scale();
    let s1b = SqBound::new(s1, n)?;
    let s2b = SqBound::new(s2, n)?;
    let sites = gamma.sites();
    let tree = SegTree::new(sites);
    let r = s1b.ceil_radius();
    let mut root = tree.boxes[1];
    for c in 0..3 {
        root.lo[c] -= r;
        root.hi[c] += r;
    }
    Ok((Search { sites, tree, s1: s1b, s2: s2b }, root))
}

/// `QL(s1, s2; γ)` as a sorted list of lattice centres (z, y, x order).
pub fn detect_quasi_loops(gamma: &LatticePath, s1: Dyadic, s2: Dyadic) -> Result<Vec<Site>> {
    let (search, root) = setup(gamma, s1, s2)?;
    let mut out = Vec::new();
    search.visit(root, &mut |x| {
        out.push(x);
        true
    });
    out.sort_by_key(|s| crate::geometry::zyx_key(*s));
    Ok(out)
}

/// Whether `QL(s1, s2; γ)` is non-empty, with the first centre found.
pub fn find_quasi_loop(gamma: &LatticePath, s1: Dyadic, s2: Dyadic) -> Result<Option<Site>> {
    let (search, root) = setup(gamma, s1, s2)?;
    let mut found = None;
    search.visit(root, &mut |x| {
        found = Some(x);
        false
    });
    Ok(found)
}

/// Scans every lattice point of the padded bounding box and every index
/// pair `k1 <= k2`, straight from the definition.
pub fn quasi_loops_brute_force(gamma: &LatticePath, s1: Dyadic, s2: Dyadic) -> Result<Vec<Site>> {
    let (search, root) = setup(gamma, s1, s2)?;
    let g = gamma.sites();
    let mut out = Vec::new();
    for z in root.lo[2]..=root.hi[2] {
        for y in root.lo[1]..=root.hi[1] {
            for x in root.lo[0]..=root.hi[0] {
                let c = [x, y, z];
                let inside: Vec<usize> = (0..g.len()).filter(|&k| search.s1.below(dist2(g[k], c))).collect();
                let hit = inside.iter().any(|&k1| {
                    inside
                        .iter()
                        .filter(|&&k2| k2 >= k1)
                        .any(|&k2| (k1..=k2).any(|j| !search.s2.below(dist2(g[j], c))))
                });
                if hit {
                    out.push(c);
                }
            }
        }
    }
    Ok(out)
}

/// Summary of one path at one `(s1, s2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiLoopRecord {
    pub s1: Dyadic,
    pub s2: Dyadic,
    pub witness: Option<Site>,
}
