//! Simple random walk on `2^-n Z^3`: paths, stopping rules and the
//! rejection sampler for walks conditioned to avoid a set.

use std::ops::Deref;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{check_scale, direction_between, step, Domain, Dyadic, LatticePoint, Site, TubePartition};
use crate::rng::RandomSource;

/// Hard ceiling on walk length, applied to every run.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000_000;

/// A nearest-neighbour path `λ = [λ(0), ..., λ(len)]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePath {
    scale: u8,
    sites: Vec<Site>,
}

impl LatticePath {
    /// Validates that consecutive sites are lattice neighbours.
    pub fn new(scale: u8, sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return invalid("a path has at least one vertex");
        }
        for (i, w) in sites.windows(2).enumerate() {
            if direction_between(w[0], w[1]).is_none() {
                return Err(Error::NotNearestNeighbour(i));
            }
        }
        Ok(LatticePath { scale, sites })
    }

    pub(crate) fn from_sites_unchecked(scale: u8, sites: Vec<Site>) -> Self {
        debug_assert!(!sites.is_empty());
        LatticePath { scale, sites }
    }

    pub fn from_steps(start: LatticePoint, steps: &[u8]) -> Result<Self> {
        let mut sites = Vec::with_capacity(steps.len() + 1);
        let mut cur = start.site;
        sites.push(cur);
        for (i, &d) in steps.iter().enumerate() {
            if d > 5 {
                return invalid(format!("step code {d} at step {i} is not in 0..6"));
            }
            cur = step(cur, d);
            sites.push(cur);
        }
        Ok(LatticePath { scale: start.scale, sites })
    }

    pub fn trivial(p: LatticePoint) -> Self {
        LatticePath { scale: p.scale, sites: vec![p.site] }
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn into_sites(self) -> Vec<Site> {
        self.sites
    }

    #[inline]
    pub fn at(&self, i: usize) -> Site {
        self.sites[i]
    }

    pub fn start(&self) -> LatticePoint {
        LatticePoint::new(self.sites[0], self.scale)
    }

    pub fn end(&self) -> LatticePoint {
        LatticePoint::new(*self.sites.last().unwrap(), self.scale)
    }

    pub fn steps(&self) -> Vec<u8> {
        self.sites
            .windows(2)
            .map(|w| direction_between(w[0], w[1]).expect("validated path"))
            .collect()
    }

    /// `λ[a, b]` (inclusive).
    pub fn slice(&self, a: usize, b: usize) -> Result<LatticePath> {
        if a > b || b > self.len() {
            return Err(Error::OutOfRange { index: b.max(a), len: self.len() });
        }
        Ok(LatticePath { scale: self.scale, sites: self.sites[a..=b].to_vec() })
    }

    /// True when no vertex repeats.
    pub fn is_simple(&self) -> bool {
        first_repeat(&self.sites).is_none()
    }

    /// `λ ⊕ λ'`: requires `λ'(0) = λ(len)` and the same scale.
    pub fn concat(&self, other: &LatticePath) -> Result<LatticePath> {
        check_scale(self.scale, other.scale)?;
        if other.sites[0] != *self.sites.last().unwrap() {
            return invalid("second path does not start where the first one ends");
        }
        let mut sites = Vec::with_capacity(self.sites.len() + other.len());
        sites.extend_from_slice(&self.sites);
        sites.extend_from_slice(&other.sites[1..]);
        Ok(LatticePath { scale: self.scale, sites })
    }
}

/// `t_λ(a)`: first index with `λ(k) ∈ H(a)`. `a` must be a multiple of `2^-n`.
pub fn plane_hit_time(path: &LatticePath, tube: &TubePartition, a: Dyadic) -> Result<Option<usize>> {
    check_scale(tube.n, path.scale)?;
    let a = a.snapped_units(path.scale, "plane position")?;
    Ok(path.sites.iter().position(|s| tube.in_plane(*s, a)))
}

fn first_repeat(sites: &[Site]) -> Option<usize> {
    let mut seen = FxHashSet::default();
    seen.reserve(sites.len());
    sites.iter().position(|s| !seen.insert(*s))
}

/// A path with pairwise distinct vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplePath(LatticePath);

impl SimplePath {
    pub fn new(path: LatticePath) -> Result<Self> {
        match first_repeat(path.sites()) {
            Some(i) => Err(Error::NotSimple(i)),
            None => Ok(SimplePath(path)),
        }
    }

    pub(crate) fn new_unchecked(path: LatticePath) -> Self {
        debug_assert!(path.is_simple());
        SimplePath(path)
    }

    pub fn as_path(&self) -> &LatticePath {
        &self.0
    }

    pub fn into_path(self) -> LatticePath {
        self.0
    }
}

impl Deref for SimplePath {
    type Target = LatticePath;
    fn deref(&self) -> &LatticePath {
        &self.0
    }
}

/// When a walk stops. Rules are checked at every index `k >= 0`, so a walk
/// started outside its domain has length zero.
#[derive(Clone, Debug)]
pub enum StopRule {
    /// First `k` with `S(k) ∉ D`.
    ExitDomain(Domain),
    /// First `k` with `S(k) ∈ K`.
    HitSet(FxHashSet<Site>),
    /// First `k` with `S(k) ∈ H(a)` for the given tube.
    HitPlane { tube: TubePartition, a: Dyadic },
    /// Stop at `k = cap`. On its own this is an ordinary horizon; inside
    /// [`StopRule::FirstOf`] reaching it is reported as
    /// [`Error::StepCapExhausted`].
    StepCap(u64),
    FirstOf(Vec<StopRule>),
}

#[derive(Debug)]
enum Compiled<'a> {
    Exit(&'a Domain),
    Hit(&'a FxHashSet<Site>),
    Plane(TubePartition, i64),
    Cap(u64),
    Any(Vec<Compiled<'a>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fired {
    Rule,
    Cap,
}

impl StopRule {
    fn compile(&self, scale: u8) -> Result<Compiled<'_>> {
        Ok(match self {
            StopRule::ExitDomain(d) => {
                check_scale(scale, d.scale())?;
                Compiled::Exit(d)
            }
            StopRule::HitSet(k) => Compiled::Hit(k),
            StopRule::HitPlane { tube, a } => {
                check_scale(scale, tube.n)?;
                Compiled::Plane(*tube, a.snapped_units(scale, "stopping plane")?)
            }
            StopRule::StepCap(c) => Compiled::Cap(*c),
            StopRule::FirstOf(v) => {
                Compiled::Any(v.iter().map(|r| r.compile(scale)).collect::<Result<_>>()?)
            }
        })
    }
}

impl Compiled<'_> {
    #[inline]
    fn check(&self, k: u64, s: Site) -> Option<Fired> {
        match self {
            Compiled::Exit(d) => (!d.contains(s)).then_some(Fired::Rule),
            Compiled::Hit(set) => set.contains(&s).then_some(Fired::Rule),
            Compiled::Plane(t, a) => t.in_plane(s, *a).then_some(Fired::Rule),
            Compiled::Cap(c) => (k >= *c).then_some(Fired::Cap),
            Compiled::Any(v) => {
                let mut cap = None;
                for r in v {
                    match r.check(k, s) {
                        Some(Fired::Rule) => return Some(Fired::Rule),
                        Some(Fired::Cap) => cap = Some(Fired::Cap),
                        None => {}
                    }
                }
                cap
            }
        }
    }
}

/// `S[0, T]` for the first index `T` at which `rule` fires.
pub fn sample_walk(start: LatticePoint, rule: &StopRule, rng: &mut RandomSource) -> Result<LatticePath> {
    let compiled = rule.compile(start.scale)?;
    let top_level_cap = matches!(rule, StopRule::StepCap(_));
    let mut sites = vec![start.site];
    let mut cur = start.site;
    let mut k = 0u64;
    loop {
        match compiled.check(k, cur) {
            Some(Fired::Rule) => break,
            Some(Fired::Cap) if top_level_cap => break,
            Some(Fired::Cap) => return Err(Error::StepCapExhausted(k)),
            None => {}
        }
        if k >= DEFAULT_MAX_STEPS {
            return Err(Error::StepCapExhausted(k));
        }
        cur = step(cur, rng.direction());
        sites.push(cur);
        k += 1;
    }
    Ok(LatticePath::from_sites_unchecked(start.scale, sites))
}

/// Walk conditioned on `X[1, T] ∩ K = ∅`, sampled by rejection.
#[derive(Clone, Debug)]
pub struct ConditionedWalkSpec {
    pub start: LatticePoint,
    pub avoid: FxHashSet<Site>,
    pub rule: StopRule,
    pub max_attempts: u64,
}

#[derive(Clone, Debug)]
pub struct ConditionedSample {
    pub path: LatticePath,
    /// Attempts used, including the accepted one.
    pub attempts: u64,
}

/// Attempts are drawn one after another from the same source; an attempt is
/// abandoned as soon as it enters `K`, which cannot change the accepted law.
pub fn sample_conditioned_walk(spec: &ConditionedWalkSpec, rng: &mut RandomSource) -> Result<ConditionedSample> {
    let compiled = spec.rule.compile(spec.start.scale)?;
    let top_level_cap = matches!(spec.rule, StopRule::StepCap(_));
    let mut sites = Vec::new();
    for attempt in 1..=spec.max_attempts {
        sites.clear();
        let mut cur = spec.start.site;
        sites.push(cur);
        let mut k = 0u64;
        let accepted = loop {
            if k >= 1 && spec.avoid.contains(&cur) {
                break false;
            }
            match compiled.check(k, cur) {
                Some(Fired::Rule) => break true,
                Some(Fired::Cap) if top_level_cap => break true,
                Some(Fired::Cap) => return Err(Error::StepCapExhausted(k)),
                None => {}
            }
            if k >= DEFAULT_MAX_STEPS {
                return Err(Error::StepCapExhausted(k));
            }
            cur = step(cur, rng.direction());
            sites.push(cur);
            k += 1;
        };
        if accepted {
            return Ok(ConditionedSample {
                path: LatticePath::from_sites_unchecked(spec.start.scale, std::mem::take(&mut sites)),
                attempts: attempt,
            });
        }
    }
    Err(Error::RejectionExhausted(spec.max_attempts))
}

/// Walks from `start` until `stop(site)` holds, calling `visit` on every
/// vertex including the first and last. Returns the number of steps.
#[inline]
pub fn walk_until<S, V>(start: Site, rng: &mut RandomSource, max_steps: u64, mut stop: S, mut visit: V) -> Result<u64>
where
    S: FnMut(Site) -> bool,
    V: FnMut(Site),
{
    let mut cur = start;
    let mut k = 0u64;
    visit(cur);
    while !stop(cur) {
        if k >= max_steps {
            return Err(Error::StepCapExhausted(k));
        }
        cur = step(cur, rng.direction());
        visit(cur);
        k += 1;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dyadic;

    #[test]
    fn concat_joins_at_shared_vertex() {
        let a = LatticePath::new(0, vec![[0, 0, 0], [1, 0, 0]]).unwrap();
        let b = LatticePath::new(0, vec![[1, 0, 0], [1, 1, 0]]).unwrap();
        assert_eq!(a.concat(&b).unwrap().sites(), &[[0, 0, 0], [1, 0, 0], [1, 1, 0]]);
        assert_eq!(a.concat(&LatticePath::trivial(a.end())).unwrap(), a);
        assert!(b.concat(&b).is_err());
        let c = LatticePath::new(1, vec![[1, 0, 0]]).unwrap();
        assert!(a.concat(&c).is_err());
    }

    #[test]
    fn plane_hits() {
        let t = TubePartition::new(3, 2, 8).unwrap();
        let len = 1i64 << 5;
        let p = LatticePath::new(8, (0..=len).map(|i| [i, 0, 0]).collect()).unwrap();
        assert_eq!(plane_hit_time(&p, &t, t.a_dyadic(1)).unwrap(), Some(32));
        assert_eq!(plane_hit_time(&p, &t, t.a_dyadic(2)).unwrap(), None);
        assert_eq!(plane_hit_time(&p, &t, Dyadic::ZERO).unwrap(), Some(0));
        assert!(plane_hit_time(&p, &t, Dyadic::new(1, 9)).is_err());
    }

    #[test]
    fn zero_cap_gives_trivial_path() {
        let mut rng = RandomSource::new(1, 0);
        let p = sample_walk(LatticePoint::origin(0), &StopRule::StepCap(0), &mut rng).unwrap();
        assert_eq!(p.len(), 0);
    }

    #[test]
    fn scale_zero_unit_ball_exit_takes_one_step() {
        let mut rng = RandomSource::new(1, 0);
        let d = Domain::unit_ball(0);
        for _ in 0..20 {
            let p = sample_walk(LatticePoint::origin(0), &StopRule::ExitDomain(d.clone()), &mut rng).unwrap();
            assert_eq!(p.len(), 1);
        }
    }

    #[test]
    fn start_outside_domain_stops_immediately() {
        let mut rng = RandomSource::new(1, 0);
        let d = Domain::ball(2, Dyadic::new(1, 2)).unwrap();
        let p = sample_walk(LatticePoint::new([5, 0, 0], 2), &StopRule::ExitDomain(d), &mut rng).unwrap();
        assert_eq!(p.len(), 0);
    }

    #[test]
    fn nested_cap_is_an_error() {
        let mut rng = RandomSource::new(1, 0);
        let d = Domain::ball(6, Dyadic::ONE).unwrap();
        let rule = StopRule::FirstOf(vec![StopRule::ExitDomain(d), StopRule::StepCap(3)]);
        let e = sample_walk(LatticePoint::origin(6), &rule, &mut rng).unwrap_err();
        assert_eq!(e, Error::StepCapExhausted(3));
    }

    #[test]
    fn same_stream_same_path() {
        let d = Domain::ball(3, Dyadic::ONE).unwrap();
        let rule = StopRule::ExitDomain(d);
        let a = sample_walk(LatticePoint::origin(3), &rule, &mut RandomSource::new(9, 5)).unwrap();
        let b = sample_walk(LatticePoint::origin(3), &rule, &mut RandomSource::new(9, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_avoid_set_matches_plain_walk() {
        let d = Domain::ball(3, Dyadic::ONE).unwrap();
        let rule = StopRule::ExitDomain(d);
        let spec = ConditionedWalkSpec {
            start: LatticePoint::origin(3),
            avoid: FxHashSet::default(),
            rule: rule.clone(),
            max_attempts: 1,
        };
        let c = sample_conditioned_walk(&spec, &mut RandomSource::new(2, 2)).unwrap();
        let p = sample_walk(LatticePoint::origin(3), &rule, &mut RandomSource::new(2, 2)).unwrap();
        assert_eq!(c.attempts, 1);
        assert_eq!(c.path, p);
    }

    #[test]
    fn conditioned_walk_avoids_the_set() {
        let d = Domain::ball(2, Dyadic::ONE).unwrap();
        let avoid: FxHashSet<Site> = [[0, 0, 0], [1, 0, 0]].into_iter().collect();
        let spec = ConditionedWalkSpec {
            start: LatticePoint::new([1, 0, 0], 2),
            avoid: avoid.clone(),
            rule: StopRule::ExitDomain(d),
            max_attempts: 10_000,
        };
        let mut rng = RandomSource::new(4, 0);
        for _ in 0..200 {
            let c = sample_conditioned_walk(&spec, &mut rng).unwrap();
            assert!(c.path.sites()[1..].iter().all(|s| !avoid.contains(s)));
        }
    }

    #[test]
    fn steps_round_trip() {
        let p = LatticePath::new(2, vec![[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, -1]]).unwrap();
        let q = LatticePath::from_steps(p.start(), &p.steps()).unwrap();
        assert_eq!(p, q);
        assert!(LatticePath::new(2, vec![[0, 0, 0], [1, 1, 0]]).is_err());
    }
}
