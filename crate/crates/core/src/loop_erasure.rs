//! Chronological loop erasure, cut times and decomposition at a cut time.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::geometry::Site;
use crate::walk::{LatticePath, SimplePath};

/// Sentinel for "not on the current erased path".
pub const NONE: u32 = u32::MAX;

/// Map from site to its position on the erased path.
pub trait SiteIndex {
    fn get(&self, s: Site) -> u32;
    fn set(&mut self, s: Site, v: u32);
}

#[derive(Default, Debug, Clone)]
pub struct HashIndex(FxHashMap<Site, u32>);

impl SiteIndex for HashIndex {
    #[inline]
    fn get(&self, s: Site) -> u32 {
        self.0.get(&s).copied().unwrap_or(NONE)
    }

    #[inline]
    fn set(&mut self, s: Site, v: u32) {
        if v == NONE {
            self.0.remove(&s);
        } else {
            self.0.insert(s, v);
        }
    }
}

const PAGE_BITS: u32 = 4;
const PAGE_SIDE: i64 = 1 << PAGE_BITS;
const PAGE_CELLS: usize = 1 << (3 * PAGE_BITS);

/// Dense index over a box, allocated in `16^3` pages on first touch.
///
/// Lookups are two array reads, which keeps loop erasure of long walks in
/// large balls close to the cost of generating the walk itself.
#[derive(Debug, Clone)]
pub struct PagedGrid {
    lo: Site,
    dims: [usize; 3],
    directory: Vec<u32>,
    pages: Vec<Box<[u32]>>,
}

impl PagedGrid {
    /// Covers the inclusive box `lo ..= hi`.
    pub fn new(lo: Site, hi: Site) -> PagedGrid {
        let dims = [0, 1, 2].map(|i| ((hi[i] - lo[i]).max(0) as usize >> PAGE_BITS) + 1);
        PagedGrid {
            lo,
            dims,
            directory: vec![NONE; dims[0] * dims[1] * dims[2]],
            pages: Vec::new(),
        }
    }

    #[inline]
    fn locate(&self, s: Site) -> Option<(usize, usize)> {
        let r = [s[0] - self.lo[0], s[1] - self.lo[1], s[2] - self.lo[2]];
        if r.iter().any(|&v| v < 0) {
            return None;
        }
        let p = [0, 1, 2].map(|i| (r[i] >> PAGE_BITS) as usize);
        if (0..3).any(|i| p[i] >= self.dims[i]) {
            return None;
        }
        let page = (p[2] * self.dims[1] + p[1]) * self.dims[0] + p[0];
        let m = PAGE_SIDE - 1;
        let cell = ((((r[2] & m) << PAGE_BITS) | (r[1] & m)) << PAGE_BITS | (r[0] & m)) as usize;
        Some((page, cell))
    }
}

impl SiteIndex for PagedGrid {
    #[inline]
    fn get(&self, s: Site) -> u32 {
        match self.locate(s) {
            Some((page, cell)) => {
                let id = self.directory[page];
                if id == NONE {
                    NONE
                } else {
                    self.pages[id as usize][cell]
                }
            }
            None => NONE,
        }
    }

    #[inline]
    fn set(&mut self, s: Site, v: u32) {
        let (page, cell) = self.locate(s).expect("site outside the paged grid");
        let mut id = self.directory[page];
        if id == NONE {
            if v == NONE {
                return;
            }
            id = self.pages.len() as u32;
            self.pages.push(vec![NONE; PAGE_CELLS].into_boxed_slice());
            self.directory[page] = id;
        }
        self.pages[id as usize][cell] = v;
    }
}

/// Online loop erasure: after pushing `S(0), ..., S(t)` the current path is
/// `LE(S[0, t])`.
#[derive(Debug, Clone)]
pub struct LoopEraser<I: SiteIndex> {
    index: I,
    path: Vec<Site>,
}

impl LoopEraser<HashIndex> {
    pub fn hashed() -> Self {
        LoopEraser { index: HashIndex::default(), path: Vec::new() }
    }
}

impl<I: SiteIndex> LoopEraser<I> {
    pub fn with_index(index: I) -> Self {
        LoopEraser { index, path: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, s: Site) {
        let pos = self.index.get(s);
        if pos == NONE {
            self.index.set(s, self.path.len() as u32);
            self.path.push(s);
        } else {
            let keep = pos as usize + 1;
            for &t in &self.path[keep..] {
                self.index.set(t, NONE);
            }
            self.path.truncate(keep);
        }
    }

    pub fn path(&self) -> &[Site] {
        &self.path
    }

    /// Position of `s` on the current erased path.
    pub fn position(&self, s: Site) -> Option<usize> {
        let p = self.index.get(s);
        (p != NONE).then_some(p as usize)
    }

    /// Forget the current path; the index is left empty and reusable.
    pub fn clear(&mut self) {
        for &t in &self.path {
            self.index.set(t, NONE);
        }
        self.path.clear();
    }

    pub fn take(&mut self, scale: u8) -> SimplePath {
        let sites = self.path.clone();
        self.clear();
        SimplePath::new_unchecked(LatticePath::from_sites_unchecked(scale, sites))
    }
}

/// `LE(λ)`, computed online in expected linear time.
pub fn erase_loops(path: &LatticePath) -> SimplePath {
    let mut le = LoopEraser::hashed();
    for &s in path.sites() {
        le.push(s);
    }
    le.take(path.scale())
}

/// `LE(λ)` straight from the last-visit recursion: `s_0` is the last visit
/// to `λ(0)`, and `s_i` the last visit to `λ(s_{i-1} + 1)`. Quadratic in the
/// worst case; kept as the reference definition.
pub fn erase_loops_by_last_visits(path: &LatticePath) -> SimplePath {
    let sites = path.sites();
    let last = |v: Site| sites.iter().rposition(|s| *s == v).unwrap();
    let mut out = Vec::new();
    let mut s = last(sites[0]);
    out.push(sites[s]);
    while s < path.len() {
        s = last(sites[s + 1]);
        out.push(sites[s]);
    }
    SimplePath::new_unchecked(LatticePath::from_sites_unchecked(path.scale(), out))
}

/// `LE(S[0, T])` for a walk from the origin stopped on leaving `domain`.
pub fn sample_lerw(domain: &crate::geometry::Domain, rng: &mut crate::rng::RandomSource) -> Result<SimplePath> {
    if domain.bounding_box().is_none() {
        return Err(Error::Unbounded);
    }
    if !domain.contains([0, 0, 0]) {
        return Err(Error::Precondition("the domain does not contain the origin".into()));
    }
    let start = crate::geometry::LatticePoint::origin(domain.scale());
    let walk = crate::walk::sample_walk(start, &crate::walk::StopRule::ExitDomain(domain.clone()), rng)?;
    Ok(erase_loops(&walk))
}

/// For each index, the last index carrying the same vertex.
pub(crate) fn last_occurrence(sites: &[Site]) -> Vec<usize> {
    let mut last: FxHashMap<Site, usize> = FxHashMap::default();
    last.reserve(sites.len());
    for (i, s) in sites.iter().enumerate() {
        last.insert(*s, i);
    }
    sites.iter().map(|s| last[s]).collect()
}

/// Cut times `t` with `λ[0, t] ∩ λ[t + 1, len] = ∅`. `len` is always one.
pub fn cut_times(path: &LatticePath) -> Vec<usize> {
    let last = last_occurrence(path.sites());
    let mut reach = 0usize;
    let mut out = Vec::new();
    for (t, &l) in last.iter().enumerate() {
        reach = reach.max(l);
        if reach <= t {
            out.push(t);
        }
    }
    out
}

pub fn is_cut_time(path: &LatticePath, k: usize) -> bool {
    let sites = path.sites();
    if k > path.len() {
        return false;
    }
    let head: rustc_hash::FxHashSet<Site> = sites[..=k].iter().copied().collect();
    !sites[k + 1..].iter().any(|s| head.contains(s))
}

/// At a cut time `k`, `LE(λ) = LE(λ[0, k]) ⊕ LE(λ[k, len])`; returns both
/// halves.
pub fn decompose_at_cut(path: &LatticePath, k: usize) -> Result<(SimplePath, SimplePath)> {
    if k > path.len() {
        return Err(Error::OutOfRange { index: k, len: path.len() });
    }
    if !is_cut_time(path, k) {
        return Err(Error::Precondition(format!("{k} is not a cut time of the path")));
    }
    let head = erase_loops(&path.slice(0, k)?);
    let tail = erase_loops(&path.slice(k, path.len())?);
    Ok((head, tail))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(sites: &[Site]) -> LatticePath {
        LatticePath::new(0, sites.to_vec()).unwrap()
    }

    const A: Site = [0, 0, 0];
    const B: Site = [1, 0, 0];
    const C: Site = [0, 1, 0];

    #[test]
    fn small_examples() {
        assert_eq!(erase_loops(&p(&[A, B, A, C])).sites(), &[A, C]);
        assert_eq!(erase_loops(&p(&[A])).sites(), &[A]);
        let walk = p(&[A, B, A, B, A]);
        assert_eq!(erase_loops(&walk).sites(), &[A]);
        assert_eq!(cut_times(&p(&[A, B, A, C])), vec![2, 3]);
        assert_eq!(cut_times(&p(&[A])), vec![0]);
    }

    #[test]
    fn decomposition_rejects_non_cut_times() {
        let walk = p(&[A, B, A, C]);
        assert!(decompose_at_cut(&walk, 0).is_err());
        let (h, t) = decompose_at_cut(&walk, 2).unwrap();
        assert_eq!(h.sites(), &[A]);
        assert_eq!(t.sites(), &[A, C]);
    }

    #[test]
    fn paged_grid_matches_hash_index() {
        let mut g = PagedGrid::new([-20, -20, -20], [20, 20, 20]);
        let mut h = HashIndex::default();
        let pts = [[-20, 5, 3], [20, 20, 20], [0, 0, 0], [17, -16, 15]];
        for (i, s) in pts.iter().enumerate() {
            g.set(*s, i as u32);
            h.set(*s, i as u32);
        }
        for s in pts {
            assert_eq!(g.get(s), h.get(s));
        }
        assert_eq!(g.get([21, 0, 0]), NONE);
        g.set([0, 0, 0], NONE);
        assert_eq!(g.get([0, 0, 0]), NONE);
    }
}
