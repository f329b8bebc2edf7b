//! The good events for a loop-erased path `γ` in the unit ball: the
//! `F` clauses on the `τ` sequence, the `H`/`I` clauses from the net-seeded
//! Wilson run, and the bad event `K_n` of a large jump over a short time.
//!
//! Irrational thresholds (`δ^{1/β-ε0}`, `r^{1/3}`) are evaluated in floating
//! point on squared lattice lengths; `>=` thresholds are nudged up by one
//! ulp so rounding can only make a clause harder to satisfy.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::hittability::{hittability_with_set, proportion_at_most, Verdict};
use super::Estimate;
use crate::error::{invalid, Result};
use crate::geometry::{dist2, Domain, Dyadic, Site};
use crate::rng::RandomSource;
use crate::ust::NetWilsonRecord;
use crate::walk::LatticePath;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    pub delta: f64,
    pub eps: f64,
    pub beta: f64,
    pub r: Dyadic,
    /// Walks per candidate point in the `F_(2)` hittability check.
    pub hit_samples: u64,
}

impl EventParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid("δ must lie in (0, 1)");
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return invalid("ε must lie in (0, 1)");
        }
        if !(self.beta > 1.0 && self.beta <= 5.0 / 3.0) {
            return invalid("β must lie in (1, 5/3]");
        }
        if !self.r.is_positive() {
            return invalid("r must be positive");
        }
        Ok(())
    }

    /// `δ^{1/β - ε0}` with `ε0 = ε / 100`.
    pub fn tau_threshold(&self) -> f64 {
        self.delta.powf(1.0 / self.beta - self.eps / 100.0)
    }
}

/// Squared threshold in lattice units, rounded up.
fn sq_threshold_up(len: f64, n: u8) -> f64 {
    let v = len * 2f64.powi(n as i32);
    (v * v).next_up()
}

/// `τ_0 = 0`, `τ_l = inf{j >= τ_{l-1} : |γ(j) - γ(τ_{l-1})| >= threshold}`,
/// stopping at the last `τ_l <= len γ`.
pub fn tau_sequence(gamma: &LatticePath, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0) {
        return invalid("τ threshold must be positive");
    }
    let t2 = sq_threshold_up(threshold, gamma.scale());
    let g = gamma.sites();
    let mut tau = vec![0usize];
    let mut anchor = g[0];
    for (j, s) in g.iter().enumerate() {
        if dist2(*s, anchor) as f64 >= t2 {
            tau.push(j);
            anchor = *s;
        }
    }
    Ok(tau)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauSequence {
    pub delta: f64,
    pub eps: f64,
    pub eps0: f64,
    pub threshold: f64,
    pub tau: Vec<usize>,
    /// `N`, the index of the last `τ`.
    pub n_count: usize,
    pub anchors: Vec<Site>,
    /// Set when `δ < 1/10`, `ε < 1/10` or `δ^{-ε/2} > 100` fails.
    pub relaxed: bool,
}

/// The `τ` sequence with threshold `δ^{1/β - ε/100}`.
pub fn compute_tau_sequence(gamma: &LatticePath, delta: f64, eps: f64, beta: f64) -> Result<TauSequence> {
    if !(delta > 0.0 && delta < 1.0 && eps > 0.0 && eps < 1.0 && beta > 1.0) {
        return invalid("need δ, ε in (0, 1) and β > 1");
    }
    let eps0 = eps / 100.0;
    let threshold = delta.powf(1.0 / beta - eps0);
    let tau = tau_sequence(gamma, threshold)?;
    let anchors = tau.iter().map(|&t| gamma.at(t)).collect();
    let relaxed = !(delta < 0.1 && eps < 0.1 && delta.powf(-eps / 2.0) > 100.0);
    Ok(TauSequence { delta, eps, eps0, threshold, n_count: tau.len() - 1, tau, anchors, relaxed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FReport {
    pub tau: Vec<usize>,
    /// `N`, the index of the last `τ`.
    pub n_count: usize,
    /// `N <= δ^-3`.
    pub f1: bool,
    /// Every candidate's avoidance probability is at most `δ^5`.
    pub f2: Verdict,
    pub f2_candidates: usize,
    /// Least favourable candidate: the one with the largest estimate.
    pub f2_worst: Option<(Site, Estimate)>,
    /// `(γ[0, τ_{l-1}] ∪ γ[τ_{l+1}, len]) ∩ B(x_l, r^{1/3}) = ∅` for all `l`.
    pub f3: bool,
    /// `(l, k)` with `γ(k)` too close to `x_l`.
    pub f3_witness: Option<(usize, usize)>,
}

impl FReport {
    pub fn verdict(&self) -> Verdict {
        Verdict::from_bool(self.f1).and(self.f2).and(Verdict::from_bool(self.f3))
    }
}

/// Evaluates `F_(1)`, `F_(2)`, `F_(3)` for `γ` at scale `n`. `F_(2)` is a
/// Monte Carlo verdict over every lattice point of `D_n` within `r` of `γ`.
pub fn check_f_events(gamma: &LatticePath, params: &EventParams, rng: &mut RandomSource) -> Result<FReport> {
    params.validate()?;
    let n = gamma.scale();
    let tau = tau_sequence(gamma, params.tau_threshold())?;
    let big_n = tau.len() - 1;
    let f1 = (big_n as f64) <= params.delta.powi(-3);

    let g = gamma.sites();
    let set: FxHashSet<Site> = g.iter().copied().collect();
    let unit = Domain::unit_ball(n);
    let r_units = params.r.to_f64() * 2f64.powi(n as i32);
    let reach = r_units.floor() as i64;
    let r2 = r_units * r_units;
    let mut cands: FxHashSet<Site> = FxHashSet::default();
    for s in g {
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let d2 = (dx * dx + dy * dy + dz * dz) as f64;
                    let p = [s[0] + dx, s[1] + dy, s[2] + dz];
                    if d2 <= r2 && unit.contains(p) {
                        cands.insert(p);
                    }
                }
            }
        }
    }
    let mut cands: Vec<Site> = cands.into_iter().collect();
    cands.sort_by_key(|s| crate::geometry::zyx_key(*s));
    let bound = params.delta.powi(5);
    let ball_sq = params.r;
    let mut f2 = Verdict::True;
    let mut worst: Option<(Site, Estimate)> = None;
    for x in &cands {
        let (est, avoided) = hittability_with_set(&set, n, *x, ball_sq, params.hit_samples, rng)?;
        let v = if set.contains(x) { Verdict::True } else { proportion_at_most(avoided, params.hit_samples, bound) };
        f2 = f2.and(v);
        if worst.is_none_or(|(_, w)| est.mean > w.mean) {
            worst = Some((*x, est));
        }
    }

    let rad = params.r.to_f64().cbrt() * 2f64.powi(n as i32);
    let rad2 = rad * rad;
    let mut f3_witness = None;
    'outer: for (l, &t) in tau.iter().enumerate() {
        let x = g[t];
        let before = if l >= 1 { 0..=tau[l - 1] } else { std::ops::RangeInclusive::new(1, 0) };
        let after = if l < big_n { tau[l + 1]..=gamma.len() } else { std::ops::RangeInclusive::new(1, 0) };
        for k in before.chain(after) {
            if (dist2(g[k], x) as f64) < rad2 {
                f3_witness = Some((l, k));
                break 'outer;
            }
        }
    }
    Ok(FReport {
        tau,
        n_count: big_n,
        f1,
        f2,
        f2_candidates: cands.len(),
        f2_worst: worst,
        f3: f3_witness.is_none(),
        f3_witness,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KReport {
    pub holds: bool,
    pub witness: Option<(usize, usize)>,
    /// Largest admissible gap `⌊2 δ 2^{βn}⌋`.
    pub window: usize,
}

/// `K_n`: some `s < t` with `t - s <= 2 δ 2^{βn}` and
/// `|γ(s) - γ(t)| >= δ^{1/β - ε} / 2`. For each `s` the gaps are scanned
/// from the widest down, so a straight segment reports `(0, window)`.
pub fn check_k_event(gamma: &LatticePath, delta: f64, eps: f64, beta: f64) -> Result<KReport> {
    if !(delta > 0.0 && delta < 1.0 && beta > 1.0 && eps > 0.0) {
        return invalid("need δ in (0,1), β > 1, ε > 0");
    }
    let n = gamma.scale();
    let window = (2.0 * delta * 2f64.powf(beta * n as f64)).floor() as usize;
    let len_thr = delta.powf(1.0 / beta - eps) / 2.0;
    let t2 = sq_threshold_up(len_thr, n);
    let min_gap = (len_thr * 2f64.powi(n as i32)).ceil().max(1.0) as usize;
    let g = gamma.sites();
    let len = gamma.len();
    for s in 0..len {
        let hi = (s + window).min(len);
        if hi < s + min_gap {
            continue;
        }
        // a path moves one lattice unit per step, so shorter gaps cannot work
        for t in (s + min_gap..=hi).rev() {
            if dist2(g[s], g[t]) as f64 >= t2 {
                return Ok(KReport { holds: true, witness: Some((s, t)), window });
            }
        }
    }
    Ok(KReport { holds: false, witness: None, window })
}

/// All event outcomes for one `γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub f: FReport,
    /// `H`: every applicable net branch stays in `B(y_l, sqrt r)` and lands
    /// on `γ[τ_{l-1}, τ_{l+1}]`.
    pub h: bool,
    /// `I`: every net branch has `L_l <= r^{1/3} 2^{βn}`.
    pub i: bool,
    pub k: KReport,
    pub net: Vec<NetWilsonRecord>,
}

impl EventReport {
    pub fn from_parts(f: FReport, net: Vec<NetWilsonRecord>, k: KReport) -> EventReport {
        let h = net.iter().all(|r| !r.h_applies || r.h_holds);
        let i = net.iter().all(|r| r.i_holds);
        EventReport { f, h, i, k, net }
    }

    /// Good event: all `F`, `H`, `I` clauses and not `K_n`.
    pub fn verdict(&self) -> Verdict {
        self.f
            .verdict()
            .and(Verdict::from_bool(self.h))
            .and(Verdict::from_bool(self.i))
            .and(Verdict::from_bool(!self.k.holds))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: u8, len: usize) -> LatticePath {
        LatticePath::new(n, (0..=len as i64).map(|i| [i, 0, 0]).collect()).unwrap()
    }

    #[test]
    fn short_path_has_trivial_tau() {
        let g = straight(4, 1);
        assert_eq!(tau_sequence(&g, 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn tau_on_a_straight_line() {
        // 1/4 at n = 4 is exactly 4 lattice units; rounding up the `>=`
        // threshold pushes each hit one step further
        let g = straight(4, 13);
        assert_eq!(tau_sequence(&g, 0.25).unwrap(), vec![0, 5, 10]);
        assert_eq!(tau_sequence(&g, 0.2499).unwrap(), vec![0, 4, 8, 12]);
    }

    #[test]
    fn straight_segment_triggers_k_with_widest_gap() {
        let (delta, eps, beta) = (0.1, 0.05, 1.6);
        let n = 6;
        let window = (2.0 * delta * 2f64.powf(beta * n as f64)).floor() as usize;
        let g = straight(n, window + 5);
        let k = check_k_event(&g, delta, eps, beta).unwrap();
        assert!(k.holds);
        assert_eq!(k.witness, Some((0, window)));
    }

    #[test]
    fn short_path_has_no_k() {
        let g = straight(6, 1);
        let k = check_k_event(&g, 0.1, 0.05, 1.6).unwrap();
        assert!(!k.holds);
    }
}
