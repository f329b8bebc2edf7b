//! Exit law of an annulus, and the hit-the-origin variant with constants
//! fitted from exact Green's function solves.
//!
//! Convention: the walk runs in `{a < |y| <= b}` and stops on leaving it, so
//! "inner exit" means `|S_τ| <= a`. A start with `|x| <= a` has already
//! exited inward and is reported as degenerate with probability one.

use serde::{Deserialize, Serialize};

use super::{exact_green, Estimate};
use crate::error::{invalid, Result};
use crate::geometry::{norm2, Domain, Dyadic, Site};
use crate::rng::RandomSource;
use crate::walk::{walk_until, DEFAULT_MAX_STEPS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusReport {
    /// Empirical `P^x(|S_τ| <= a)`.
    pub empirical: Estimate,
    /// Leading-order value `(|x|^-1 - b^-1) / (a^-1 - b^-1)`.
    pub formula: f64,
    /// The start was outside the annulus; no walk was run.
    pub degenerate: bool,
}

pub fn annulus_formula(a: f64, b: f64, x_norm: f64) -> f64 {
    (1.0 / x_norm - 1.0 / b) / (1.0 / a - 1.0 / b)
}

/// Walks on `Z^3` from `x` until leaving `{a < |y| <= b}`.
pub fn check_annulus_exit(a: Dyadic, b: Dyadic, x: Site, samples: u64, rng: &mut RandomSource) -> Result<AnnulusReport> {
    if !(a.is_positive() && a < b) {
        return invalid("annulus needs 0 < a < b");
    }
    let ann = Domain::annulus(0, a, b)?;
    let inner = Domain::new(0, crate::geometry::Shape::closed_ball([Dyadic::ZERO; 3], a))?;
    let xn = (norm2(x) as f64).sqrt();
    let formula = annulus_formula(a.to_f64(), b.to_f64(), xn);
    if !ann.contains(x) {
        let p = if inner.contains(x) { 1.0 } else { 0.0 };
        return Ok(AnnulusReport {
            empirical: Estimate { mean: p, stderr: 0.0, samples: 0 },
            formula,
            degenerate: true,
        });
    }
    let mut inward = 0u64;
    for _ in 0..samples {
        let mut last = x;
        walk_until(x, rng, DEFAULT_MAX_STEPS, |s| !ann.contains(s), |s| last = s)?;
        if inner.contains(last) {
            inward += 1;
        }
    }
    Ok(AnnulusReport { empirical: Estimate::bernoulli(inward, samples), formula, degenerate: false })
}

/// `G(0)` and the Green's function constant `c0`, from exact solves on
/// balls `B(R)`: `G_{B(R)}(0, 0) = G(0) - c0 / R + d / R^2` fitted through
/// three radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenConstants {
    pub g0: f64,
    pub c0: f64,
    pub ball_values: Vec<(i64, f64)>,
}

pub fn green_constants(radii: [i64; 3]) -> Result<GreenConstants> {
    let mut ball_values = Vec::new();
    for r in radii {
        let d = Domain::ball(0, Dyadic::int(r))?;
        let g = exact_green(&d, [0, 0, 0])?;
        ball_values.push((r, g.value_at([0, 0, 0]).unwrap()));
    }
    // rows [1, -1/R, 1/R^2] · [g0, c0, d] = G_R
    let m = nalgebra::Matrix3::from_fn(|i, j| {
        let r = ball_values[i].0 as f64;
        [1.0, -1.0 / r, 1.0 / (r * r)][j]
    });
    let rhs = nalgebra::Vector3::from_fn(|i, _| ball_values[i].1);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| crate::Error::Numerical("degenerate radii".into()))?;
    Ok(GreenConstants { g0: sol[0], c0: sol[1], ball_values })
}

/// `P^x(S hits 0 before leaving B(b))` to leading order:
/// `(c0/|x| - c0/b) / (G(0) - c0/b)`.
pub fn hit_origin_formula(x_norm: f64, b: f64, k: &GreenConstants) -> f64 {
    (k.c0 / x_norm - k.c0 / b) / (k.g0 - k.c0 / b)
}

/// Empirical `P^x(S hits 0 before |S| > b)`.
pub fn hit_origin_mc(b: Dyadic, x: Site, samples: u64, rng: &mut RandomSource) -> Result<Estimate> {
    let ball = Domain::new(0, crate::geometry::Shape::closed_ball([Dyadic::ZERO; 3], b))?;
    if !ball.contains(x) || x == [0, 0, 0] {
        return invalid("start must satisfy 1 <= |x| <= b");
    }
    let mut hits = 0u64;
    for _ in 0..samples {
        let mut last = x;
        walk_until(x, rng, DEFAULT_MAX_STEPS, |s| s == [0, 0, 0] || !ball.contains(s), |s| last = s)?;
        if last == [0, 0, 0] {
            hits += 1;
        }
    }
    Ok(Estimate::bernoulli(hits, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_on_inner_sphere_is_degenerate() {
        let mut rng = RandomSource::new(0, 0);
        let r = check_annulus_exit(Dyadic::int(2), Dyadic::int(8), [2, 0, 0], 10, &mut rng).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.empirical.mean, 1.0);
        assert!((r.formula - 1.0).abs() < 1e-15);
    }

    #[test]
    fn formula_midpoint() {
        assert!((annulus_formula(4.0, 16.0, 8.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn green_constants_match_known_lattice_values() {
        // G(0) ≈ 1.5164 and c0 = 3/(2π) for the simple random walk on Z^3
        let k = green_constants([6, 12, 24]).unwrap();
        assert!((k.g0 - 1.516386).abs() < 5e-3, "{k:?}");
        assert!((k.c0 - 3.0 / (2.0 * std::f64::consts::PI)).abs() < 0.05, "{k:?}");
    }
}
