//! Gambler's ruin for the first coordinate of the walk.
//!
//! `S^1` is a lazy walk: `±1` with probability `1/6` each, otherwise still.
//! With `t_r` the first time `S^1 ∉ (0, r)`, `P^x(S^1(t_r) >= r)` is harmonic
//! for that chain.

use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::error::{invalid, Result};
use crate::rng::RandomSource;

/// Solves the harmonic equations of the lazy chain on `{0, ..., r}` with
/// the Thomas algorithm. The answer is `x / r`; the solve does not assume it.
pub fn gamblers_ruin_exact(r: u64, x: u64) -> Result<f64> {
    if r == 0 || x > r {
        return invalid("need 0 <= x <= r and r >= 1");
    }
    if x == 0 || x == r {
        return Ok(if x == r { 1.0 } else { 0.0 });
    }
    // interior k = 1..r-1: -(1/6) h(k-1) + (1/3) h(k) - (1/6) h(k+1) = 0
    let m = (r - 1) as usize;
    let (a, b, c) = (-1.0 / 6.0, 1.0 / 3.0, -1.0 / 6.0);
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    for i in 0..m {
        let rhs = if i + 1 == m { -c * 1.0 } else { 0.0 };
        let denom = if i == 0 { b } else { b - a * cp[i - 1] };
        cp[i] = c / denom;
        dp[i] = if i == 0 { rhs / denom } else { (rhs - a * dp[i - 1]) / denom };
    }
    let mut h = vec![0.0; m];
    for i in (0..m).rev() {
        h[i] = dp[i] - if i + 1 < m { cp[i] * h[i + 1] } else { 0.0 };
    }
    Ok(h[x as usize - 1])
}

/// Runs the full three-dimensional walk from `(x, 0, 0)` and watches `S^1`.
pub fn gamblers_ruin_mc(r: u64, x: u64, samples: u64, rng: &mut RandomSource) -> Result<Estimate> {
    if r == 0 || x > r {
        return invalid("need 0 <= x <= r and r >= 1");
    }
    let (r, x0) = (r as i64, x as i64);
    let mut up = 0u64;
    for _ in 0..samples {
        let mut x = x0;
        while x > 0 && x < r {
            match rng.direction() {
                0 => x += 1,
                1 => x -= 1,
                _ => {}
            }
        }
        if x >= r {
            up += 1;
        }
    }
    Ok(Estimate::bernoulli(up, samples))
}

/// Measured constants in `c1 (x+1)/r <= P <= c2 (x+1)/r` over `1 <= x < r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuinConstants {
    pub c1: f64,
    pub c2: f64,
}

pub fn gamblers_ruin_constants(r: u64) -> Result<RuinConstants> {
    if r < 2 {
        return invalid("need r >= 2");
    }
    let mut c1 = f64::INFINITY;
    let mut c2 = 0f64;
    for x in 1..r {
        let ratio = gamblers_ruin_exact(r, x)? * r as f64 / (x + 1) as f64;
        c1 = c1.min(ratio);
        c2 = c2.max(ratio);
    }
    Ok(RuinConstants { c1, c2 })
}

/// Empirical and exact `P^x(S^1(t_r) >= r)` with the constants of the
/// linear bracket over all starts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamblerCheck {
    pub empirical: Estimate,
    pub exact: f64,
    pub constants: RuinConstants,
    /// `c1 (x+1)/r <= exact <= c2 (x+1)/r`.
    pub bracketed: bool,
}

pub fn gambler_ruin_check(x: u64, r: u64, samples: u64, rng: &mut RandomSource) -> Result<GamblerCheck> {
    if r < 2 || x > r {
        return invalid("need 0 <= x <= r and r >= 2");
    }
    let exact = gamblers_ruin_exact(r, x)?;
    let constants = gamblers_ruin_constants(r)?;
    let empirical = gamblers_ruin_mc(r, x, samples, rng)?;
    let lin = (x + 1) as f64 / r as f64;
    // exact inequality at interior starts; x = 0 and x = r sit outside the bracket's range
    let bracketed = x == 0 || x == r || (constants.c1 * lin <= exact * (1.0 + 1e-12) && exact <= constants.c2 * lin * (1.0 + 1e-12));
    Ok(GamblerCheck { empirical, exact, constants, bracketed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_is_linear() {
        for r in [1u64, 2, 5, 64] {
            for x in 0..=r {
                let h = gamblers_ruin_exact(r, x).unwrap();
                assert!((h - x as f64 / r as f64).abs() < 1e-12, "r={r} x={x}");
            }
        }
    }

    #[test]
    fn constants_bracket_one_half_and_one() {
        let c = gamblers_ruin_constants(100).unwrap();
        assert!((c.c1 - 0.5).abs() < 1e-12);
        assert!(c.c2 < 1.0);
    }

    #[test]
    fn check_examples() {
        let mut rng = RandomSource::new(1, 0);
        let top = gambler_ruin_check(8, 8, 10, &mut rng).unwrap();
        assert_eq!((top.exact, top.empirical.mean), (1.0, 1.0));
        let bottom = gambler_ruin_check(0, 8, 10, &mut rng).unwrap();
        assert_eq!((bottom.exact, bottom.empirical.mean), (0.0, 0.0));
        let mid = gambler_ruin_check(8, 16, 20_000, &mut rng).unwrap();
        assert!((mid.exact - 0.5).abs() < 1e-12);
        assert!(mid.bracketed);
        assert!((mid.empirical.mean - 0.5).abs() <= 4.0 * mid.empirical.stderr);
        assert!(gambler_ruin_check(9, 8, 1, &mut rng).is_err());
    }
}
