use nalgebra::{DMatrix, DVector};
use rustc_hash::FxHashMap;

use super::Estimate;
use crate::error::{invalid, Error, Result};
use crate::geometry::{neighbours, Domain, Site};
use crate::rng::RandomSource;
use crate::walk::DEFAULT_MAX_STEPS;

/// Above this many points the solve switches from dense LU to conjugate
/// gradients on the (symmetric positive definite) operator `I - P_A`.
pub const DENSE_LIMIT: usize = 3000;

/// `G_A(·, y)` on every point of `A`.
#[derive(Clone, Debug)]
pub struct GreenSolution {
    pub points: Vec<Site>,
    pub values: Vec<f64>,
    /// Max-norm residual of `(I - P_A) g = δ_y` after solving.
    pub residual: f64,
}

impl GreenSolution {
    pub fn value_at(&self, x: Site) -> Option<f64> {
        self.points.iter().position(|p| *p == x).map(|i| self.values[i])
    }
}

/// Points of `A` with, for each, the indices of its in-domain neighbours.
struct Operator {
    points: Vec<Site>,
    index: FxHashMap<Site, usize>,
    nbrs: Vec<Vec<u32>>,
}

impl Operator {
    fn new(domain: &Domain) -> Result<Operator> {
        let points = domain.lattice_points()?;
        if points.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let index: FxHashMap<Site, usize> = points.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let nbrs = points
            .iter()
            .map(|p| neighbours(*p).iter().filter_map(|q| index.get(q).map(|&j| j as u32)).collect())
            .collect();
        Ok(Operator { points, index, nbrs })
    }

    fn apply(&self, g: &[f64], out: &mut [f64]) {
        for (i, nb) in self.nbrs.iter().enumerate() {
            let s: f64 = nb.iter().map(|&j| g[j as usize]).sum();
            out[i] = g[i] - s / 6.0;
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let k = self.points.len();
        let mut m = DMatrix::<f64>::identity(k, k);
        for (i, nb) in self.nbrs.iter().enumerate() {
            for &j in nb {
                m[(i, j as usize)] -= 1.0 / 6.0;
            }
        }
        m
    }

    fn residual(&self, g: &[f64], rhs: &[f64]) -> f64 {
        let mut ag = vec![0.0; g.len()];
        self.apply(g, &mut ag);
        ag.iter().zip(rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn solve_dense(op: &Operator, rhs: &[f64]) -> Result<Vec<f64>> {
    let m = op.dense();
    let lu = m.clone().lu();
    let b = DVector::from_column_slice(rhs);
    let mut x = lu.solve(&b).ok_or_else(|| Error::Numerical("singular Green operator".into()))?;
    // one round of iterative refinement
    let r = &b - &m * &x;
    if let Some(d) = lu.solve(&r) {
        x += d;
    }
    Ok(x.as_slice().to_vec())
}

fn solve_cg(op: &Operator, rhs: &[f64]) -> Result<Vec<f64>> {
    let k = rhs.len();
    let mut x = vec![0.0; k];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; k];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut rr = dot(&r, &r);
    let target = 1e-28 * dot(rhs, rhs).max(1.0);
    for _ in 0..10 * k + 100 {
        if rr <= target {
            return Ok(x);
        }
        op.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..k {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..k {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::Numerical("conjugate gradients did not converge".into()))
}

/// Solves `(I - P_A) G(·, y) = δ_y`.
pub fn exact_green(domain: &Domain, y: Site) -> Result<GreenSolution> {
    let op = Operator::new(domain)?;
    let Some(&iy) = op.index.get(&y) else {
        return invalid(format!("{y:?} is not in the domain"));
    };
    let mut rhs = vec![0.0; op.points.len()];
    rhs[iy] = 1.0;
    let values = if op.points.len() <= DENSE_LIMIT { solve_dense(&op, &rhs)? } else { solve_cg(&op, &rhs)? };
    let residual = op.residual(&values, &rhs);
    Ok(GreenSolution { points: op.points, values, residual })
}

/// The full matrix `G_A(x, y)` for small domains, rows and columns in the
/// order of [`Domain::lattice_points`].
pub fn exact_green_matrix(domain: &Domain) -> Result<(Vec<Site>, DMatrix<f64>)> {
    let op = Operator::new(domain)?;
    if op.points.len() > DENSE_LIMIT {
        return invalid(format!("domain has {} points; dense inverse limited to {DENSE_LIMIT}", op.points.len()));
    }
    let inv = op
        .dense()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Green operator".into()))?;
    Ok((op.points, inv))
}

/// Monte Carlo `G_A(x, y)`: mean number of visits to `y` before leaving `A`.
pub fn mc_green(domain: &Domain, x: Site, y: Site, samples: u64, rng: &mut RandomSource) -> Result<Estimate> {
    if !domain.contains(x) || !domain.contains(y) {
        return invalid("both points must lie in the domain");
    }
    let mut acc = super::Accumulator::default();
    for _ in 0..samples {
        let mut visits = 0u64;
        crate::walk::walk_until(x, rng, DEFAULT_MAX_STEPS, |s| !domain.contains(s), |s| {
            if s == y {
                visits += 1;
            }
        })?;
        acc.push(visits as f64);
    }
    Ok(acc.estimate())
}

/// Monte Carlo `G_A(x, ·)` for every `y` at once, in the order of
/// [`Domain::lattice_points`]. Each walk contributes one visit count per
/// point, so the per-point standard errors are honest.
pub fn mc_green_row(domain: &Domain, x: Site, samples: u64, rng: &mut RandomSource) -> Result<Vec<Estimate>> {
    let op = Operator::new(domain)?;
    let Some(&ix) = op.index.get(&x) else {
        return invalid(format!("{x:?} is not in the domain"));
    };
    let k = op.points.len();
    // neighbour table with NONE for exits, so the walk never hashes
    let table: Vec<[u32; 6]> = op
        .points
        .iter()
        .map(|p| neighbours(*p).map(|q| op.index.get(&q).map_or(u32::MAX, |&j| j as u32)))
        .collect();
    let mut sum = vec![0f64; k];
    let mut sum2 = vec![0f64; k];
    let mut count = vec![0u32; k];
    let mut touched = Vec::new();
    for _ in 0..samples {
        let mut cur = ix as u32;
        let mut steps = 0u64;
        loop {
            let c = cur as usize;
            if count[c] == 0 {
                touched.push(c);
            }
            count[c] += 1;
            cur = table[c][rng.direction() as usize];
            steps += 1;
            if cur == u32::MAX {
                break;
            }
            if steps >= DEFAULT_MAX_STEPS {
                return Err(Error::StepCapExhausted(steps));
            }
        }
        for &c in &touched {
            let v = count[c] as f64;
            sum[c] += v;
            sum2[c] += v * v;
            count[c] = 0;
        }
        touched.clear();
    }
    Ok((0..k).map(|i| Estimate::from_moments(sum[i], sum2[i], samples)).collect())
}

/// `P^x(S(τ_A) ∈ target)`: solves `(I - P_A) h = b` with `b(y)` the
/// one-step probability of leaving `A` from `y` into the target.
pub fn exact_harmonic_measure<F>(domain: &Domain, start: Site, target: F) -> Result<f64>
where
    F: Fn(Site) -> bool,
{
    if !domain.contains(start) {
        return Ok(if target(start) { 1.0 } else { 0.0 });
    }
    let op = Operator::new(domain)?;
    if op.points.len() > DENSE_LIMIT {
        return invalid(format!("domain has {} points; dense solve limited to {DENSE_LIMIT}", op.points.len()));
    }
    let rhs: Vec<f64> = op
        .points
        .iter()
        .map(|p| {
            let hits = neighbours(*p).iter().filter(|q| !op.index.contains_key(*q) && target(**q)).count();
            hits as f64 / 6.0
        })
        .collect();
    let h = solve_dense(&op, &rhs)?;
    Ok(h[op.index[&start]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dyadic;

    #[test]
    fn single_point_domain() {
        let d = Domain::points(0, [[0, 0, 0]]);
        let g = exact_green(&d, [0, 0, 0]).unwrap();
        assert_eq!(g.values, vec![1.0]);
    }

    #[test]
    fn two_point_domain_closed_form() {
        // g0 = 1 + g1/6, g1 = g0/6  =>  g0 = 36/35
        let d = Domain::points(0, [[0, 0, 0], [1, 0, 0]]);
        let g = exact_green(&d, [0, 0, 0]).unwrap();
        assert!((g.value_at([0, 0, 0]).unwrap() - 36.0 / 35.0).abs() < 1e-14);
        assert!((g.value_at([1, 0, 0]).unwrap() - 6.0 / 35.0).abs() < 1e-14);
    }

    #[test]
    fn cg_agrees_with_dense() {
        let d = Domain::ball(0, Dyadic::int(5)).unwrap();
        let op = Operator::new(&d).unwrap();
        let mut rhs = vec![0.0; op.points.len()];
        rhs[op.index[&[0, 0, 0]]] = 1.0;
        let a = solve_dense(&op, &rhs).unwrap();
        let b = solve_cg(&op, &rhs).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn green_is_symmetric() {
        let d = Domain::ball(0, Dyadic::int(3)).unwrap();
        let (_, g) = exact_green_matrix(&d).unwrap();
        assert!((&g - g.transpose()).amax() < 1e-12);
    }

    #[test]
    fn harmonic_measure_examples() {
        let d = Domain::points(0, [[0, 0, 0]]);
        let one = exact_harmonic_measure(&d, [0, 0, 0], |s| s == [1, 0, 0]).unwrap();
        assert!((one - 1.0 / 6.0).abs() < 1e-15);
        let b = Domain::ball(0, Dyadic::int(2)).unwrap();
        let all = exact_harmonic_measure(&b, [0, 0, 0], |_| true).unwrap();
        assert!((all - 1.0).abs() < 1e-12);
        let pos = exact_harmonic_measure(&b, [0, 0, 0], |s| s[0] > 0).unwrap();
        let neg = exact_harmonic_measure(&b, [0, 0, 0], |s| s[0] < 0).unwrap();
        assert!((pos - neg).abs() < 1e-12 && pos > 0.0);
    }
}
