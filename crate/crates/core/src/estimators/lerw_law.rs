//! Exact law of `LE(S[0, τ_A])` on tiny domains.

use nalgebra::DMatrix;
use rustc_hash::FxHashMap;

use crate::error::{invalid, Error, Result};
use crate::geometry::{neighbours, Domain, Site};

/// Distribution over loop-erased paths, each ending at its exterior site.
#[derive(Clone, Debug, PartialEq)]
pub struct LerwLaw {
    pub paths: Vec<(Vec<Site>, f64)>,
}

impl LerwLaw {
    pub fn total(&self) -> f64 {
        self.paths.iter().map(|(_, p)| p).sum()
    }

    pub fn probability(&self, path: &[Site]) -> f64 {
        self.paths.iter().find(|(p, _)| p == path).map_or(0.0, |(_, q)| *q)
    }
}

const MAX_POINTS: usize = 24;

/// Exact law via the product formula
/// `P(LE = γ) = 6^-len ∏_j G_{A \ γ[0, j-1]}(γ(j), γ(j))`,
/// summed over every simple path from `x` through `A` to an exterior site.
pub fn exact_lerw_law(domain: &Domain, x: Site) -> Result<LerwLaw> {
    let pts = domain.lattice_points()?;
    if pts.len() > MAX_POINTS {
        return invalid(format!("exact law limited to {MAX_POINTS} points, domain has {}", pts.len()));
    }
    let idx: FxHashMap<Site, usize> = pts.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let Some(&ix) = idx.get(&x) else {
        return invalid(format!("{x:?} is not in the domain"));
    };
    let mut cache: FxHashMap<(u32, usize), f64> = FxHashMap::default();
    let mut diag = |mask: u32, v: usize| -> Result<f64> {
        if let Some(&g) = cache.get(&(mask, v)) {
            return Ok(g);
        }
        let members: Vec<usize> = (0..pts.len()).filter(|i| mask & (1 << i) != 0).collect();
        let k = members.len();
        let mut m = DMatrix::<f64>::identity(k, k);
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                if neighbours(pts[i]).contains(&pts[j]) {
                    m[(a, b)] -= 1.0 / 6.0;
                }
            }
        }
        let inv = m.try_inverse().ok_or_else(|| Error::Numerical("singular Green block".into()))?;
        let pos = members.iter().position(|&i| i == v).unwrap();
        let g = inv[(pos, pos)];
        cache.insert((mask, v), g);
        Ok(g)
    };
    let full: u32 = if pts.len() == 32 { u32::MAX } else { (1u32 << pts.len()) - 1 };
    let mut paths = Vec::new();
    // depth-first over simple paths; `mask` is A minus the vertices used
    let mut stack: Vec<(Vec<usize>, u32, f64)> = vec![(vec![ix], full, 1.0)];
    while let Some((path, mask, weight)) = stack.pop() {
        let v = *path.last().unwrap();
        let w = weight * diag(mask, v)? / 6.0;
        let rest = mask & !(1 << v);
        for nb in neighbours(pts[v]) {
            match idx.get(&nb) {
                None => {
                    let mut sites: Vec<Site> = path.iter().map(|&i| pts[i]).collect();
                    sites.push(nb);
                    paths.push((sites, w));
                }
                Some(&j) if rest & (1 << j) != 0 => {
                    let mut p = path.clone();
                    p.push(j);
                    stack.push((p, rest, w));
                }
                Some(_) => {}
            }
        }
    }
    paths.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(LerwLaw { paths })
}

/// The law restricted to walks absorbed within `depth` steps, as exact
/// counts over the common denominator `6^depth`, plus the unabsorbed count.
pub fn truncated_lerw_law(domain: &Domain, x: Site, depth: u32) -> Result<(FxHashMap<Vec<Site>, u128>, u128)> {
    if depth > 48 {
        return invalid("depth above 48 overflows the exact denominator");
    }
    if !domain.contains(x) {
        return invalid(format!("{x:?} is not in the domain"));
    }
    let mut states: FxHashMap<Vec<Site>, u128> = FxHashMap::default();
    states.insert(vec![x], 1);
    let mut absorbed: FxHashMap<Vec<Site>, u128> = FxHashMap::default();
    for k in 0..depth {
        let scale = 6u128.pow(depth - k - 1);
        let mut next: FxHashMap<Vec<Site>, u128> = FxHashMap::default();
        for (le, c) in &states {
            let cur = *le.last().unwrap();
            for nb in neighbours(cur) {
                let mut path = le.clone();
                if let Some(pos) = path.iter().position(|s| *s == nb) {
                    path.truncate(pos + 1);
                } else {
                    path.push(nb);
                }
                if domain.contains(nb) {
                    *next.entry(path).or_default() += c;
                } else {
                    *absorbed.entry(path).or_default() += c * scale;
                }
            }
        }
        states = next;
    }
    let rest = states.values().sum();
    Ok((absorbed, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_law_is_uniform_over_exits() {
        let d = Domain::points(0, [[0, 0, 0]]);
        let law = exact_lerw_law(&d, [0, 0, 0]).unwrap();
        assert_eq!(law.paths.len(), 6);
        for (_, p) in &law.paths {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn product_formula_agrees_with_truncated_enumeration() {
        let d = Domain::points(0, [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]);
        let law = exact_lerw_law(&d, [0, 0, 0]).unwrap();
        assert!((law.total() - 1.0).abs() < 1e-12);
        let depth = 40;
        let (trunc, rest) = truncated_lerw_law(&d, [0, 0, 0], depth).unwrap();
        let denom = 6f64.powi(depth as i32);
        let slack = rest as f64 / denom;
        assert!(slack < 1e-12);
        for (path, p) in &law.paths {
            let q = trunc.get(path).copied().unwrap_or(0) as f64 / denom;
            assert!(q <= p + 1e-15 && p - q <= slack + 1e-15, "{path:?}: {p} vs {q}");
        }
    }
}
