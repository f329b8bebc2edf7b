//! Loop-erased walk lengths in the unit ball and the growth-exponent fit.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::Estimate;
use crate::error::{invalid, Error, Result};
use crate::geometry::{norm2, step, Site};
use crate::loop_erasure::{LoopEraser, PagedGrid};
use crate::rng::RandomSource;
use crate::walk::{LatticePath, SimplePath, DEFAULT_MAX_STEPS};

/// Reusable sampler of `γ_n = LE(S[0, T])`, `T` the exit time of the unit
/// ball at scale `n`. Holds a paged index sized to the ball.
pub struct LerwSampler {
    n: u8,
    r2: i128,
    eraser: LoopEraser<PagedGrid>,
}

impl LerwSampler {
    pub fn new(n: u8) -> Result<Self> {
        if n > 14 {
            return invalid("unit-ball sampler supports n <= 14");
        }
        let r = 1i64 << n;
        let grid = PagedGrid::new([-r - 1; 3], [r + 1; 3]);
        Ok(LerwSampler { n, r2: (r as i128) * (r as i128), eraser: LoopEraser::with_index(grid) })
    }

    pub fn scale(&self) -> u8 {
        self.n
    }

    fn run(&mut self, rng: &mut RandomSource) -> Result<u64> {
        self.eraser.clear();
        let mut cur: Site = [0, 0, 0];
        self.eraser.push(cur);
        let mut steps = 0u64;
        while norm2(cur) < self.r2 {
            if steps >= DEFAULT_MAX_STEPS {
                return Err(Error::StepCapExhausted(steps));
            }
            cur = step(cur, rng.direction());
            self.eraser.push(cur);
            steps += 1;
        }
        Ok(steps)
    }

    /// `len γ_n`.
    pub fn sample_len(&mut self, rng: &mut RandomSource) -> Result<usize> {
        self.run(rng)?;
        Ok(self.eraser.path().len() - 1)
    }

    /// `γ_n` itself, with the walk length `T`.
    pub fn sample(&mut self, rng: &mut RandomSource) -> Result<(SimplePath, u64)> {
        let t = self.run(rng)?;
        let path = SimplePath::new_unchecked(LatticePath::from_sites_unchecked(self.n, self.eraser.path().to_vec()));
        Ok((path, t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// Slope of `log2 E[len γ_n]` against `n`.
    pub beta: f64,
    pub intercept: f64,
    /// Standard error of the slope after any Birge scaling.
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub chi2: f64,
    pub dof: usize,
    /// `max(1, sqrt(chi2 / dof))`, applied to the standard error.
    pub birge: f64,
}

/// Weighted least squares of `log2 mean` on `n`, weights from the
/// propagated standard errors `σ / (mean ln 2)`.
pub fn fit_growth_exponent(points: &[(f64, Estimate)]) -> Result<GrowthFit> {
    if points.len() < 2 {
        return invalid("need at least two scales");
    }
    let mut s = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut rows = Vec::new();
    for (x, e) in points {
        if !(e.mean > 0.0 && e.stderr > 0.0) {
            return invalid("every point needs a positive mean and standard error");
        }
        let y = e.mean.log2();
        let sigma = e.stderr / (e.mean * std::f64::consts::LN_2);
        let w = 1.0 / (sigma * sigma);
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
        rows.push((*x, y, w));
    }
    let delta = s * sxx - sx * sx;
    if delta <= 0.0 {
        return Err(Error::Numerical("degenerate abscissae".into()));
    }
    let beta = (s * sxy - sx * sy) / delta;
    let intercept = (sxx * sy - sx * sxy) / delta;
    let chi2: f64 = rows.iter().map(|(x, y, w)| w * (y - intercept - beta * x).powi(2)).sum();
    let dof = points.len() - 2;
    let birge = if dof > 0 { (chi2 / dof as f64).sqrt().max(1.0) } else { 1.0 };
    let stderr = (s / delta).sqrt() * birge;
    let t = if dof > 0 {
        StudentsT::new(0.0, 1.0, dof as f64).expect("dof").inverse_cdf(0.975)
    } else {
        1.959963984540054
    };
    Ok(GrowthFit { beta, intercept, stderr, ci95: (beta - t * stderr, beta + t * stderr), chi2, dof, birge })
}

/// Which length is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthVariant {
    /// `M_n = len γ_n`.
    Unit,
    /// `M'_n`: the first index at which `LE(S[0, T_D])` leaves the unit
    /// ball, for `D = B(0, outer)` with integer `outer >= 4`.
    Outer { outer: i64 },
}

/// Sampler of `M'_n`.
pub struct OuterLengthSampler {
    n: u8,
    r2: i128,
    unit2: i128,
    eraser: LoopEraser<PagedGrid>,
}

impl OuterLengthSampler {
    pub fn new(n: u8, outer: i64) -> Result<Self> {
        if outer < 4 {
            return invalid("the outer radius must be at least 4");
        }
        if n > 12 || (outer as i128) << n > 1 << 14 {
            return invalid("outer domain too large for the paged index");
        }
        let r = outer << n;
        let grid = PagedGrid::new([-r - 1; 3], [r + 1; 3]);
        let unit = 1i128 << n;
        Ok(OuterLengthSampler { n, r2: (r as i128) * (r as i128), unit2: unit * unit, eraser: LoopEraser::with_index(grid) })
    }

    pub fn scale(&self) -> u8 {
        self.n
    }

    pub fn sample_len(&mut self, rng: &mut RandomSource) -> Result<usize> {
        self.eraser.clear();
        let mut cur: Site = [0, 0, 0];
        self.eraser.push(cur);
        let mut steps = 0u64;
        while norm2(cur) < self.r2 {
            if steps >= DEFAULT_MAX_STEPS {
                return Err(Error::StepCapExhausted(steps));
            }
            cur = step(cur, rng.direction());
            self.eraser.push(cur);
            steps += 1;
        }
        let unit2 = self.unit2;
        Ok(self.eraser.path().iter().position(|s| norm2(*s) >= unit2).expect("the walk left the unit ball"))
    }
}

/// `samples` lengths at scale `n`.
pub fn sample_lengths(n: u8, samples: u64, variant: LengthVariant, rng: &mut RandomSource) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(samples as usize);
    match variant {
        LengthVariant::Unit => {
            let mut s = LerwSampler::new(n)?;
            for _ in 0..samples {
                out.push(s.sample_len(rng)? as u64);
            }
        }
        LengthVariant::Outer { outer } => {
            let mut s = OuterLengthSampler::new(n, outer)?;
            for _ in 0..samples {
                out.push(s.sample_len(rng)? as u64);
            }
        }
    }
    Ok(out)
}

/// Ratios `r` of the tail table.
pub const TAIL_RATIOS: [f64; 4] = [1.5, 2.0, 3.0, 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub n: u8,
    pub mean: Estimate,
    pub variance: f64,
    /// `P(M / mean ∈ [1/r, r])` for each of [`TAIL_RATIOS`].
    pub tail: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthMoments {
    pub variant: LengthVariant,
    pub rows: Vec<LengthRow>,
    pub fit: GrowthFit,
}

pub fn length_row(n: u8, lens: &[u64]) -> Result<LengthRow> {
    if lens.is_empty() {
        return invalid("no samples");
    }
    let mut acc = super::Accumulator::default();
    for &l in lens {
        acc.push(l as f64);
    }
    let mean = acc.estimate();
    let variance = mean.stderr * mean.stderr * lens.len() as f64;
    let tail = TAIL_RATIOS
        .iter()
        .map(|&r| {
            let inside = lens.iter().filter(|&&l| {
                let x = l as f64 / mean.mean;
                x >= 1.0 / r && x <= r
            });
            (r, inside.count() as f64 / lens.len() as f64)
        })
        .collect();
    Ok(LengthRow { n, mean, variance, tail })
}

/// Per-scale summaries of already drawn lengths and the exponent fit.
pub fn summarize_lengths(variant: LengthVariant, per_n: &[(u8, Vec<u64>)]) -> Result<LengthMoments> {
    if per_n.len() < 2 || per_n.windows(2).any(|w| w[0].0 >= w[1].0) {
        return invalid("need at least two strictly increasing scales");
    }
    let rows = per_n.iter().map(|(n, l)| length_row(*n, l)).collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, Estimate)> = rows.iter().map(|r| (r.n as f64, r.mean)).collect();
    let fit = fit_growth_exponent(&pts)?;
    Ok(LengthMoments { variant, rows, fit })
}

/// Mean, variance and tail table of `M_n` (or `M'_n`) for each `n`, with
/// the fitted growth exponent.
pub fn estimate_length_moments(
    n_list: &[u8],
    samples: u64,
    variant: LengthVariant,
    rng: &mut RandomSource,
) -> Result<LengthMoments> {
    let per_n = n_list
        .iter()
        .map(|&n| Ok((n, sample_lengths(n, samples, variant, rng)?)))
        .collect::<Result<Vec<_>>>()?;
    summarize_lengths(variant, &per_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_is_recovered() {
        let pts: Vec<(f64, Estimate)> = (3..9)
            .map(|n| {
                let m = 2f64.powf(1.6 * n as f64 + 0.3);
                (n as f64, Estimate { mean: m, stderr: m * 0.01, samples: 100 })
            })
            .collect();
        let f = fit_growth_exponent(&pts).unwrap();
        assert!((f.beta - 1.6).abs() < 1e-12);
        assert!(f.chi2 < 1e-18);
        assert!(f.ci95.0 < 1.6 && 1.6 < f.ci95.1);
    }

    #[test]
    fn scale_zero_lerw_has_length_one() {
        let mut s = LerwSampler::new(0).unwrap();
        let mut rng = RandomSource::new(0, 0);
        for _ in 0..10 {
            assert_eq!(s.sample_len(&mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn tail_table_is_nested() {
        let mut rng = RandomSource::new(4, 0);
        let m = estimate_length_moments(&[2, 3, 4], 300, LengthVariant::Unit, &mut rng).unwrap();
        for row in &m.rows {
            assert!(row.tail.windows(2).all(|w| w[0].1 <= w[1].1));
        }
        assert!(m.rows[0].mean.mean < m.rows[2].mean.mean);
        assert!(estimate_length_moments(&[3], 10, LengthVariant::Unit, &mut rng).is_err());
    }

    #[test]
    fn outer_variant_is_at_least_the_exit_distance() {
        let mut rng = RandomSource::new(4, 1);
        let lens = sample_lengths(2, 50, LengthVariant::Outer { outer: 4 }, &mut rng).unwrap();
        assert!(lens.iter().all(|&l| l >= 4));
        assert!(sample_lengths(2, 1, LengthVariant::Outer { outer: 3 }, &mut rng).is_err());
    }
}
