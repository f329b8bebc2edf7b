//! Monte Carlo and exact estimators, with the statistical plumbing (standard
//! errors, chi-squared tests, weighted fits) used to compare them.

pub mod annulus;
pub mod chi2;
pub mod escape;
pub mod events;
pub mod gambler;
pub mod green;
pub mod growth;
pub mod hittability;
pub mod lerw_law;

use serde::{Deserialize, Serialize};

pub use annulus::{check_annulus_exit, AnnulusReport};
pub use chi2::{chi_square_gof, chi_square_homogeneity, ChiSquare};
pub use escape::{estimate_escape, EscapeCurve, EscapeSampler};
pub use events::{check_f_events, check_k_event, compute_tau_sequence, tau_sequence, TauSequence, EventReport, FReport, KReport};
pub use gambler::{gambler_ruin_check, gamblers_ruin_exact, gamblers_ruin_mc, GamblerCheck};
pub use green::{exact_green, exact_harmonic_measure, exact_green_matrix, mc_green, mc_green_row, GreenSolution};
pub use growth::{estimate_length_moments, fit_growth_exponent, GrowthFit, LengthMoments, LengthVariant, LerwSampler};
pub use hittability::{estimate_hittability, Verdict};
pub use lerw_law::{exact_lerw_law, truncated_lerw_law, LerwLaw};

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl Estimate {
    /// From the running sums `Σv` and `Σv²` of `n` draws.
    pub fn from_moments(sum: f64, sum2: f64, n: u64) -> Estimate {
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, samples: 0 };
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sum2 - sum * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Estimate { mean, stderr: (var / nf).sqrt(), samples: n }
    }

    pub fn bernoulli(successes: u64, n: u64) -> Estimate {
        let s = successes as f64;
        Estimate::from_moments(s, s, n)
    }
}

/// Welford running mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> Estimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        let stderr = if self.n > 0 { (var / self.n as f64).sqrt() } else { f64::NAN };
        Estimate { mean: if self.n > 0 { self.mean } else { f64::NAN }, stderr, samples: self.n }
    }
}
