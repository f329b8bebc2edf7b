//! The modulus statistic on the stretch of a curve right after it leaves each
//! box `B^l = {‖x‖∞ <= M_l}`, `M_l = l 2^-m1`.

use serde::{Deserialize, Serialize};

use super::curve::{modulus_statistic, Modulus, ParametrizedCurve, Point};
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusScanParams {
    pub m: u8,
    pub m0: u8,
    /// Box spacing exponent; an independent integer here.
    pub m1: u8,
}

impl AnnulusScanParams {
    pub fn new(m: u8, m0: u8, m1: u8) -> Result<Self> {
        if m0 == 0 || m1 == 0 || m1 > 40 || m > 60 {
            return invalid("need m0 >= 1 and 1 <= m1 <= 40");
        }
        Ok(AnnulusScanParams { m, m0, m1 })
    }

    /// `q_1 = max{q : M_q <= 2/3}`.
    pub fn box_count(&self) -> usize {
        ((1u64 << self.m1) * 2 / 3) as usize
    }

    /// `M_l`.
    pub fn radius(&self, l: usize) -> f64 {
        l as f64 * 2f64.powi(-(self.m1 as i32))
    }

    /// `150 m0 2^-m`.
    pub fn move_distance(&self) -> f64 {
        150.0 * self.m0 as f64 * 2f64.powi(-(self.m as i32))
    }

    /// `2^-m1 > 200 m0 2^-m`, i.e. `2^(m - m1) > 200 m0`.
    pub fn spacing_ok(&self) -> bool {
        self.m >= self.m1 && (1u128 << (self.m - self.m1)) > 200 * self.m0 as u128
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusRecord {
    pub l: usize,
    pub radius: f64,
    /// `v'_l`, the first time `η` reaches `∂B^l`.
    pub exit_time: f64,
    /// `w_l`, the first time after `v'_l` at distance `150 m0 2^-m` from
    /// `η(v'_l)`; `None` when the curve ends first.
    pub annulus_time: Option<f64>,
    pub statistic: Option<Modulus>,
    /// `statistic >= threshold_ratio`.
    pub meets: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusScan {
    pub params: AnnulusScanParams,
    pub threshold_ratio: f64,
    pub spacing_ok: bool,
    pub records: Vec<AnnulusRecord>,
    /// Boxes `1..=q_1` without a complete record.
    pub truncated: usize,
    /// `v'_1 < w_1 < v'_2 < ...` over the complete records.
    pub ordered: bool,
}

fn sup(p: Point) -> f64 {
    p[0].abs().max(p[1].abs()).max(p[2].abs())
}

/// First time the curve reaches sup-norm `r`, exactly within a segment.
fn box_exit(curve: &ParametrizedCurve, r: f64) -> Option<f64> {
    let p = curve.points();
    if sup(p[0]) >= r {
        return Some(0.0);
    }
    let k = (1..p.len()).find(|&k| sup(p[k]) >= r)?;
    let (a, b) = (p[k - 1], p[k]);
    let mut f = 1f64;
    for c in 0..3 {
        let d = b[c] - a[c];
        for target in [r, -r] {
            if d != 0.0 {
                let g = (target - a[c]) / d;
                if g > 0.0 && g < f {
                    f = g;
                }
            }
        }
    }
    Some(curve.time(k - 1) + f * curve.dt())
}

/// First `t >= from` with `|η(t) - η(from)| >= dist`.
fn departure(curve: &ParametrizedCurve, from: f64, dist: f64) -> Option<f64> {
    let p = curve.points();
    let o = curve.eval(from);
    let d2 = dist * dist;
    let n2 = |x: Point| (x[0] - o[0]).powi(2) + (x[1] - o[1]).powi(2) + (x[2] - o[2]).powi(2);
    let first = ((from / curve.dt()).floor() as usize + 1).min(p.len());
    let mut start = (from, o);
    for k in first..p.len() {
        let end = p[k];
        if n2(end) >= d2 {
            // |a + f b| = dist has exactly one positive root when |a| < dist
            let a = [start.1[0] - o[0], start.1[1] - o[1], start.1[2] - o[2]];
            let b = [end[0] - start.1[0], end[1] - start.1[1], end[2] - start.1[2]];
            let bb = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
            let ab = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let aa = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
            let f = ((-ab + (ab * ab - bb * (aa - d2)).max(0.0).sqrt()) / bb).clamp(0.0, 1.0);
            return Some(start.0 + f * (curve.time(k) - start.0));
        }
        start = (curve.time(k), end);
    }
    None
}

/// Per-box records for `l = 1..=q_1`, with `h = 1/β` taken from the curve.
pub fn modulus_per_annulus(curve: &ParametrizedCurve, scan: &AnnulusScanParams, threshold_ratio: f64) -> Result<AnnulusScan> {
    let Some(beta) = curve.beta() else {
        return invalid("the curve carries no β");
    };
    if curve.points()[0] != [0.0; 3] {
        return invalid("the curve must start at the origin");
    }
    let h = 1.0 / beta;
    let q1 = scan.box_count();
    let mut records = Vec::new();
    let mut complete = 0;
    for l in 1..=q1 {
        let r = scan.radius(l);
        let Some(v) = box_exit(curve, r) else { break };
        let w = departure(curve, v, scan.move_distance());
        let statistic = match w {
            Some(w) => Some(modulus_statistic(curve, h, Some((v, w)))?),
            None => None,
        };
        complete += w.is_some() as usize;
        records.push(AnnulusRecord {
            l,
            radius: r,
            exit_time: v,
            annulus_time: w,
            meets: statistic.map(|s| s.value >= threshold_ratio),
            statistic,
        });
    }
    let mut ordered = true;
    let mut last = f64::NEG_INFINITY;
    for rec in records.iter().filter(|r| r.annulus_time.is_some()) {
        let w = rec.annulus_time.unwrap();
        ordered &= last < rec.exit_time && rec.exit_time < w;
        last = w;
    }
    Ok(AnnulusScan {
        params: *scan,
        threshold_ratio,
        spacing_ok: scan.spacing_ok(),
        records,
        truncated: q1 - complete,
        ordered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::curve::parametrize;
    use crate::walk::LatticePath;

    #[test]
    fn box_counts() {
        let p = AnnulusScanParams::new(14, 2, 2).unwrap();
        assert_eq!(p.box_count(), 2);
        assert!(p.spacing_ok());
        assert!(!AnnulusScanParams::new(10, 2, 3).unwrap().spacing_ok());
        assert_eq!(AnnulusScanParams::new(14, 2, 4).unwrap().box_count(), 10);
    }

    #[test]
    fn constant_curve_has_no_records() {
        let c = ParametrizedCurve::from_points(vec![[0.0; 3]; 5], 0.1).unwrap().with_beta(1.6).unwrap();
        let s = modulus_per_annulus(&c, &AnnulusScanParams::new(14, 2, 2).unwrap(), 1.0).unwrap();
        assert!(s.records.is_empty());
        assert_eq!(s.truncated, 2);
    }

    #[test]
    fn straight_unit_speed_curve() {
        // a straight lattice path run at unit speed: v'_l = M_l and every
        // h = 1 ratio equals 1
        let n = 10;
        let g = LatticePath::new(n, (0..=1024).map(|i| [i, 0, 0]).collect()).unwrap();
        let mut c = parametrize(&g, 1.6).unwrap();
        c = ParametrizedCurve::from_points(c.points().to_vec(), 1.0 / 1024.0).unwrap().with_beta(1.0).unwrap();
        let scan = AnnulusScanParams::new(13, 2, 3).unwrap();
        let s = modulus_per_annulus(&c, &scan, 0.5).unwrap();
        assert_eq!(s.records.len(), 5);
        assert_eq!(s.truncated, 0);
        assert!(s.ordered);
        for r in &s.records {
            assert!((r.exit_time - r.radius).abs() < 1e-12);
            let w = r.annulus_time.unwrap();
            assert!((w - r.exit_time - scan.move_distance()).abs() < 1e-12);
            assert!((r.statistic.unwrap().value - 1.0).abs() < 1e-12);
            assert_eq!(r.meets, Some(true));
        }
    }

    #[test]
    fn departure_inside_a_segment() {
        let c = ParametrizedCurve::from_points(vec![[0.0; 3], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]], 1.0).unwrap();
        // |(f, 1)| = 1.25 at f = 0.75
        assert!((departure(&c, 0.0, 1.25).unwrap() - 1.75).abs() < 1e-12);
        assert_eq!(departure(&c, 0.0, 2.0), None);
        assert!((box_exit(&c, 0.5).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn curve_ending_early_is_truncated() {
        let g = LatticePath::new(4, (0..=10).map(|i| [i, 0, 0]).collect()).unwrap();
        let c = parametrize(&g, 1.5).unwrap();
        let s = modulus_per_annulus(&c, &AnnulusScanParams::new(8, 1, 2).unwrap(), 1.0).unwrap();
        // both boxes are left, but 150 * 2^-8 further is never reached
        assert_eq!(s.records.len(), 2);
        assert!(s.records.iter().all(|r| r.annulus_time.is_none() && r.meets.is_none()));
        assert_eq!(s.truncated, 2);
    }
}
