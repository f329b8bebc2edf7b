//! Pearson chi-squared tests with pooling of sparse bins.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins left after pooling.
    pub bins: usize,
}

fn p_value(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let d = ChiSquared::new(dof as f64).expect("positive dof");
    d.sf(stat)
}

/// Groups bin indices, smallest weight first, until each group reaches
/// `min_weight`; a light final group is merged into the previous one.
fn pool(weights: &[f64], min_weight: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[a].partial_cmp(&weights[b]).unwrap().then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut cur = Vec::new();
    let mut acc = 0.0;
    for i in order {
        cur.push(i);
        acc += weights[i];
        if acc >= min_weight {
            groups.push(std::mem::take(&mut cur));
            acc = 0.0;
        }
    }
    if !cur.is_empty() {
        match groups.last_mut() {
            Some(g) => g.extend(cur),
            None => groups.push(cur),
        }
    }
    groups
}

/// Goodness of fit of counts against probabilities (which must sum to 1).
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> Result<ChiSquare> {
    if observed.len() != probs.len() || observed.is_empty() {
        return invalid("observed and expected must have the same non-zero length");
    }
    let total: u64 = observed.iter().sum();
    let psum: f64 = probs.iter().sum();
    if (psum - 1.0).abs() > 1e-9 {
        return invalid(format!("probabilities sum to {psum}"));
    }
    let expected: Vec<f64> = probs.iter().map(|p| p * total as f64).collect();
    let groups = pool(&expected, min_expected);
    let mut stat = 0.0;
    for g in &groups {
        let o: f64 = g.iter().map(|&i| observed[i] as f64).sum();
        let e: f64 = g.iter().map(|&i| expected[i]).sum();
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
        } else if o > 0.0 {
            stat = f64::INFINITY;
        }
    }
    let dof = groups.len().saturating_sub(1);
    Ok(ChiSquare { statistic: stat, dof, p_value: p_value(stat, dof), bins: groups.len() })
}

/// Homogeneity of two count vectors over the same categories.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64], min_expected: f64) -> Result<ChiSquare> {
    if a.len() != b.len() || a.is_empty() {
        return invalid("count vectors must have the same non-zero length");
    }
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    if na == 0.0 || nb == 0.0 {
        return invalid("both samples must be non-empty");
    }
    let n = na + nb;
    // a column's smaller expected cell is min(na, nb) * col / n
    let weights: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) as f64 * na.min(nb) / n).collect();
    let groups = pool(&weights, min_expected);
    let mut stat = 0.0;
    for g in &groups {
        let oa: f64 = g.iter().map(|&i| a[i] as f64).sum();
        let ob: f64 = g.iter().map(|&i| b[i] as f64).sum();
        let col = oa + ob;
        if col == 0.0 {
            continue;
        }
        let ea = col * na / n;
        let eb = col * nb / n;
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let dof = groups.len().saturating_sub(1);
    Ok(ChiSquare { statistic: stat, dof, p_value: p_value(stat, dof), bins: groups.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_has_p_one() {
        let r = chi_square_gof(&[25, 25, 50], &[0.25, 0.25, 0.5], 5.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(r.dof, 2);
    }

    #[test]
    fn known_statistic() {
        // (60-50)^2/50 + (40-50)^2/50 = 4, dof 1, p = 0.0455
        let r = chi_square_gof(&[60, 40], &[0.5, 0.5], 5.0).unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.0455003).abs() < 1e-6);
    }

    #[test]
    fn sparse_bins_are_pooled() {
        let r = chi_square_gof(&[100, 1, 0, 1], &[0.97, 0.01, 0.01, 0.01], 5.0).unwrap();
        assert_eq!(r.bins, 1);
    }

    #[test]
    fn homogeneity_of_identical_samples() {
        let r = chi_square_homogeneity(&[10, 20, 30], &[20, 40, 60], 5.0).unwrap();
        assert!(r.statistic.abs() < 1e-12);
    }
}
