//! Avoidance probabilities `P^x(R[0, T_{x,s}] ∩ γ = ∅)` and three-valued
//! comparisons of Monte Carlo proportions against thresholds.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::error::{Error, Result};
use crate::geometry::{cmp_sq, dist2, step, Dyadic, Site};
use crate::rng::RandomSource;
use crate::walk::{LatticePath, DEFAULT_MAX_STEPS};

/// Outcome of a statistical comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    True,
    False,
    Undecided,
}

impl Verdict {
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::False, _) | (_, Verdict::False) => Verdict::False,
            (Verdict::True, Verdict::True) => Verdict::True,
            _ => Verdict::Undecided,
        }
    }

    pub fn from_bool(b: bool) -> Verdict {
        if b {
            Verdict::True
        } else {
            Verdict::False
        }
    }
}

/// Number of standard deviations used by the Wilson score interval.
pub const VERDICT_Z: f64 = 4.0;

/// Wilson score interval for `successes / n` at `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Is the proportion at most `threshold`? Decided only when the Wilson
/// interval lies entirely on one side.
pub fn proportion_at_most(successes: u64, n: u64, threshold: f64) -> Verdict {
    let (lo, hi) = wilson_interval(successes, n, VERDICT_Z);
    if hi <= threshold {
        Verdict::True
    } else if lo > threshold {
        Verdict::False
    } else {
        Verdict::Undecided
    }
}

/// Walks from `x` until leaving `B(x, sqrt(radius_sq))` and reports the
/// proportion of walks that never touch `γ`. The count of avoiding walks is
/// `estimate.mean * samples`.
pub fn estimate_hittability(
    gamma: &LatticePath,
    x: Site,
    radius_sq: Dyadic,
    samples: u64,
    rng: &mut RandomSource,
) -> Result<(Estimate, u64)> {
    let set: FxHashSet<Site> = gamma.sites().iter().copied().collect();
    hittability_with_set(&set, gamma.scale(), x, radius_sq, samples, rng)
}

pub(crate) fn hittability_with_set(
    set: &FxHashSet<Site>,
    n: u8,
    x: Site,
    radius_sq: Dyadic,
    samples: u64,
    rng: &mut RandomSource,
) -> Result<(Estimate, u64)> {
    if set.contains(&x) {
        return Ok((Estimate { mean: 0.0, stderr: 0.0, samples }, 0));
    }
    let mut avoided = 0u64;
    for _ in 0..samples {
        let mut cur = x;
        let mut steps = 0u64;
        let hit = loop {
            if cmp_sq(dist2(cur, x), n, radius_sq) != std::cmp::Ordering::Less {
                break false;
            }
            if steps >= DEFAULT_MAX_STEPS {
                return Err(Error::StepCapExhausted(steps));
            }
            cur = step(cur, rng.direction());
            steps += 1;
            if set.contains(&cur) {
                break true;
            }
        };
        if !hit {
            avoided += 1;
        }
    }
    Ok((Estimate::bernoulli(avoided, samples), avoided))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_on_gamma_never_avoids() {
        let g = LatticePath::new(2, vec![[0, 0, 0], [1, 0, 0]]).unwrap();
        let (e, k) = estimate_hittability(&g, [1, 0, 0], Dyadic::ONE, 50, &mut RandomSource::new(0, 0)).unwrap();
        assert_eq!((e.mean, k), (0.0, 0));
    }

    #[test]
    fn far_curve_is_always_avoided() {
        let g = LatticePath::new(0, vec![[100, 0, 0]]).unwrap();
        let (e, _) = estimate_hittability(&g, [0, 0, 0], Dyadic::int(9), 200, &mut RandomSource::new(0, 0)).unwrap();
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 2.0);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(proportion_at_most(0, 10, 1e-6), Verdict::Undecided);
        assert_eq!(proportion_at_most(0, 100_000_000, 1e-3), Verdict::True);
        assert_eq!(proportion_at_most(500, 1000, 0.1), Verdict::False);
    }
}
