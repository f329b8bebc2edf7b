//! Escape probability `Es(N) = P(LE(S^1[0, T^1_N]) ∩ S^2[1, T^2_N] = ∅)` for
//! two independent walks from the origin of `Z^3`, `T_N` the exit time of
//! `B(N)`.
//!
//! One pair of walks serves every radius: the first walk runs to the
//! largest radius and its erased path is snapshotted at each `T^1_N`.

use serde::{Deserialize, Serialize};

use super::growth::{fit_growth_exponent, GrowthFit};
use super::Estimate;
use crate::error::{invalid, Error, Result};
use crate::geometry::{norm2, step, Site};
use crate::loop_erasure::{LoopEraser, PagedGrid, SiteIndex, NONE};
use crate::rng::RandomSource;
use crate::walk::DEFAULT_MAX_STEPS;

pub struct EscapeSampler {
    radii: Vec<i64>,
    eraser: LoopEraser<PagedGrid>,
    /// Bit `j` set at a site when it lies on `LE(S^1[0, T^1_{N_j}])`.
    marks: PagedGrid,
    marked: Vec<Site>,
}

impl EscapeSampler {
    /// `radii` strictly increasing, at most 32 of them.
    pub fn new(radii: &[i64]) -> Result<Self> {
        if radii.is_empty() || radii.len() > 32 || radii[0] < 1 || radii.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("radii must be 1..=32 strictly increasing positive integers");
        }
        let r = *radii.last().unwrap() + 1;
        Ok(EscapeSampler {
            radii: radii.to_vec(),
            eraser: LoopEraser::with_index(PagedGrid::new([-r; 3], [r; 3])),
            marks: PagedGrid::new([-r; 3], [r; 3]),
            marked: Vec::new(),
        })
    }

    pub fn radii(&self) -> &[i64] {
        &self.radii
    }

    fn mark(&mut self, s: Site, bit: u32) {
        let cur = self.marks.get(s);
        if cur == NONE {
            self.marked.push(s);
            self.marks.set(s, 1 << bit);
        } else {
            self.marks.set(s, cur | (1 << bit));
        }
    }

    /// One coupled pair; bit `j` of the result is set when radius `j` escaped.
    pub fn sample(&mut self, rng: &mut RandomSource) -> Result<u32> {
        for s in self.marked.drain(..) {
            self.marks.set(s, NONE);
        }
        self.eraser.clear();
        let r2: Vec<i128> = self.radii.iter().map(|&r| (r as i128) * (r as i128)).collect();
        let k = self.radii.len();

        let mut cur: Site = [0, 0, 0];
        self.eraser.push(cur);
        let mut next = 0;
        let mut steps = 0u64;
        while next < k {
            while next < k && norm2(cur) >= r2[next] {
                let snapshot: Vec<Site> = self.eraser.path().to_vec();
                for s in snapshot {
                    self.mark(s, next as u32);
                }
                next += 1;
            }
            if next == k {
                break;
            }
            if steps >= DEFAULT_MAX_STEPS {
                return Err(Error::StepCapExhausted(steps));
            }
            cur = step(cur, rng.direction());
            self.eraser.push(cur);
            steps += 1;
        }

        let all: u32 = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
        let mut hit = 0u32;
        let mut done = 0u32;
        let mut cur: Site = [0, 0, 0];
        let mut steps = 0u64;
        while (hit | done) != all {
            if steps >= DEFAULT_MAX_STEPS {
                return Err(Error::StepCapExhausted(steps));
            }
            cur = step(cur, rng.direction());
            steps += 1;
            let m = self.marks.get(cur);
            if m != NONE {
                hit |= m & !done;
            }
            let d2 = norm2(cur);
            for j in 0..k {
                if done & (1 << j) == 0 && d2 >= r2[j] {
                    done |= 1 << j;
                }
            }
        }
        Ok(all & !hit)
    }
}

/// Escape frequencies per radius and the fitted exponent of
/// `log Es(N)` against `log N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeCurve {
    pub radii: Vec<i64>,
    pub escaped: Vec<u64>,
    pub samples: u64,
    pub estimates: Vec<Estimate>,
    /// `None` when some frequency is 0 or 1 and the fit has no weights.
    pub fit: Option<GrowthFit>,
}

impl EscapeCurve {
    pub fn from_counts(radii: &[i64], escaped: Vec<u64>, samples: u64) -> EscapeCurve {
        let estimates: Vec<Estimate> = escaped.iter().map(|&k| Estimate::bernoulli(k, samples)).collect();
        let pts: Vec<(f64, Estimate)> = radii.iter().zip(&estimates).map(|(&r, e)| ((r as f64).log2(), *e)).collect();
        let fit = if radii.len() >= 2 { fit_growth_exponent(&pts).ok() } else { None };
        EscapeCurve { radii: radii.to_vec(), escaped, samples, estimates, fit }
    }

    /// Fitted exponent `s` in `Es(N) ≈ N^s`.
    pub fn exponent(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.beta)
    }
}

/// Counts of escaping pairs per radius from `samples` coupled pairs.
pub fn escape_counts(radii: &[i64], samples: u64, rng: &mut RandomSource) -> Result<Vec<u64>> {
    let mut s = EscapeSampler::new(radii)?;
    let mut counts = vec![0u64; radii.len()];
    for _ in 0..samples {
        let b = s.sample(rng)?;
        for (j, c) in counts.iter_mut().enumerate() {
            *c += ((b >> j) & 1) as u64;
        }
    }
    Ok(counts)
}

pub fn estimate_escape(radii: &[i64], samples: u64, rng: &mut RandomSource) -> Result<EscapeCurve> {
    let counts = escape_counts(radii, samples, rng)?;
    Ok(EscapeCurve::from_counts(radii, counts, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_one_escape_is_five_sixths() {
        let mut s = EscapeSampler::new(&[1]).unwrap();
        let mut rng = RandomSource::new(11, 0);
        let n = 60_000;
        let esc: u64 = (0..n).map(|_| s.sample(&mut rng).unwrap() as u64).sum();
        let p = esc as f64 / n as f64;
        let se = (5.0 / 36.0 / n as f64).sqrt();
        assert!((p - 5.0 / 6.0).abs() < 4.0 * se, "{p}");
    }

    #[test]
    fn escape_is_monotone_in_radius_per_sample() {
        // a hit of the smaller erased path is not implied for larger radii,
        // but escape probabilities should decrease on average
        let mut s = EscapeSampler::new(&[2, 4, 8]).unwrap();
        let mut rng = RandomSource::new(5, 0);
        let mut counts = [0u64; 3];
        for _ in 0..20_000 {
            let b = s.sample(&mut rng).unwrap();
            for (j, c) in counts.iter_mut().enumerate() {
                *c += ((b >> j) & 1) as u64;
            }
        }
        assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
    }

    #[test]
    fn curve_fit_is_negative() {
        let c = estimate_escape(&[2, 4, 8], 4000, &mut RandomSource::new(2, 0)).unwrap();
        assert!(c.exponent().unwrap() < 0.0);
        assert_eq!(c.escaped.len(), 3);
    }
}
