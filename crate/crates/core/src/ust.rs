//! Wired uniform spanning tree via Wilson's algorithm.
//!
//! The domain's exterior is collapsed to one boundary vertex `∂`, but every
//! edge from a domain vertex to an exterior site stays a distinct edge, so a
//! vertex with `j` exterior neighbours has `j` parallel edges to `∂`. Trees
//! record the concrete exterior site of the edge used.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, precondition, Error, Result};
use crate::geometry::{cmp_sq, dist2, neighbours, norm2, step, zyx_key, Domain, Dyadic, NetGrid, Site};
use crate::loop_erasure::NONE;
use crate::rng::RandomSource;
use crate::walk::{LatticePath, SimplePath, DEFAULT_MAX_STEPS};

/// A vertex of the wired graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeVertex {
    Site(Site),
    Boundary,
}

/// Parent pointer of a domain vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parent {
    /// Index into [`SpanningTree::vertices`].
    Vertex(u32),
    /// Edge to `∂` through the given exterior site.
    Boundary(Site),
}

/// Dense site lookup over the domain's bounding box.
#[derive(Clone, Debug)]
struct BoxIndex {
    lo: Site,
    dims: [usize; 3],
    ids: Vec<u32>,
}

impl BoxIndex {
    fn new(vertices: &[Site]) -> BoxIndex {
        let mut lo = vertices[0];
        let mut hi = vertices[0];
        for v in vertices {
            for i in 0..3 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        let dims = [0, 1, 2].map(|i| (hi[i] - lo[i] + 1) as usize);
        let mut b = BoxIndex { lo, dims, ids: vec![NONE; dims[0] * dims[1] * dims[2]] };
        for (i, v) in vertices.iter().enumerate() {
            let slot = b.slot(*v).unwrap();
            b.ids[slot] = i as u32;
        }
        b
    }

    #[inline]
    fn slot(&self, s: Site) -> Option<usize> {
        let r = [s[0] - self.lo[0], s[1] - self.lo[1], s[2] - self.lo[2]];
        if (0..3).any(|i| r[i] < 0 || r[i] as usize >= self.dims[i]) {
            return None;
        }
        Some((r[2] as usize * self.dims[1] + r[1] as usize) * self.dims[0] + r[0] as usize)
    }

    #[inline]
    fn get(&self, s: Site) -> u32 {
        self.slot(s).map_or(NONE, |i| self.ids[i])
    }
}

/// A spanning tree of the wired graph, rooted at `∂`.
#[derive(Clone, Debug)]
pub struct SpanningTree {
    scale: u8,
    vertices: Vec<Site>,
    index: BoxIndex,
    parent: Vec<Parent>,
}

/// Parent-chain path from a vertex to `∂`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreePath {
    /// Domain vertices from the start to the last vertex before `∂`.
    pub interior: SimplePath,
    /// Exterior site of the final edge.
    pub exit: Site,
}

impl TreePath {
    /// The path with the exit site appended, comparable with `LE(S[0, τ])`
    /// for a walk stopped on leaving the domain.
    pub fn with_exit(&self) -> SimplePath {
        let mut sites = self.interior.sites().to_vec();
        sites.push(self.exit);
        SimplePath::new_unchecked(LatticePath::from_sites_unchecked(self.interior.scale(), sites))
    }
}

impl SpanningTree {
    pub fn scale(&self) -> u8 {
        self.scale
    }

    /// Domain vertices in `(z, y, x)` order.
    pub fn vertices(&self) -> &[Site] {
        &self.vertices
    }

    pub fn parents(&self) -> &[Parent] {
        &self.parent
    }

    pub fn vertex_id(&self, s: Site) -> Option<usize> {
        let id = self.index.get(s);
        (id != NONE).then_some(id as usize)
    }

    pub fn parent_of(&self, s: Site) -> Option<TreeVertex> {
        let id = self.vertex_id(s)?;
        Some(match self.parent[id] {
            Parent::Vertex(p) => TreeVertex::Site(self.vertices[p as usize]),
            Parent::Boundary(_) => TreeVertex::Boundary,
        })
    }

    /// Number of edges from `x` to `∂`.
    pub fn depth(&self, x: TreeVertex) -> Result<usize> {
        let mut id = match x {
            TreeVertex::Boundary => return Ok(0),
            TreeVertex::Site(s) => self.require(s)?,
        };
        let mut d = 1;
        while let Parent::Vertex(p) = self.parent[id] {
            id = p as usize;
            d += 1;
        }
        Ok(d)
    }

    fn require(&self, s: Site) -> Result<usize> {
        self.vertex_id(s)
            .ok_or_else(|| Error::Precondition(format!("{s:?} is not a vertex of the tree")))
    }

    pub fn path_to_boundary(&self, x: Site) -> Result<TreePath> {
        let mut id = self.require(x)?;
        let mut sites = vec![x];
        loop {
            match self.parent[id] {
                Parent::Vertex(p) => {
                    id = p as usize;
                    sites.push(self.vertices[id]);
                }
                Parent::Boundary(exit) => {
                    let interior = SimplePath::new_unchecked(LatticePath::from_sites_unchecked(self.scale, sites));
                    return Ok(TreePath { interior, exit });
                }
            }
        }
    }

    /// Graph distance in the tree, `∂` included as a vertex.
    pub fn tree_distance(&self, x: TreeVertex, y: TreeVertex) -> Result<usize> {
        let chain = |v: TreeVertex| -> Result<Vec<TreeVertex>> {
            let mut out = vec![v];
            if let TreeVertex::Site(s) = v {
                let mut id = self.require(s)?;
                loop {
                    match self.parent[id] {
                        Parent::Vertex(p) => {
                            id = p as usize;
                            out.push(TreeVertex::Site(self.vertices[id]));
                        }
                        Parent::Boundary(_) => {
                            out.push(TreeVertex::Boundary);
                            break;
                        }
                    }
                }
            }
            Ok(out)
        };
        let cx = chain(x)?;
        let cy = chain(y)?;
        // both chains end at ∂; strip the common suffix
        let mut i = cx.len();
        let mut j = cy.len();
        while i > 0 && j > 0 && cx[i - 1] == cy[j - 1] {
            i -= 1;
            j -= 1;
        }
        Ok(i + j)
    }

    /// Canonical encoding of the tree's edge set, usable as a map key.
    pub fn edge_key(&self) -> Vec<Parent> {
        self.parent.clone()
    }

    /// Checks the parent pointers form a spanning tree using lattice edges.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.parent.iter().enumerate() {
            let v = self.vertices[i];
            let ok = match *p {
                Parent::Vertex(q) => neighbours(v).contains(&self.vertices[q as usize]),
                Parent::Boundary(e) => neighbours(v).contains(&e) && self.index.get(e) == NONE,
            };
            if !ok {
                return precondition(format!("parent edge of {v:?} is not a lattice edge"));
            }
        }
        for i in 0..self.vertices.len() {
            let mut id = i;
            let mut hops = 0;
            while let Parent::Vertex(p) = self.parent[id] {
                id = p as usize;
                hops += 1;
                if hops > self.vertices.len() {
                    return precondition("parent pointers contain a cycle");
                }
            }
        }
        Ok(())
    }
}

/// Wilson's algorithm state over a fixed domain.
struct Wilson {
    vertices: Vec<Site>,
    index: BoxIndex,
    in_tree: Vec<bool>,
    next: Vec<u8>,
    parent: Vec<Parent>,
}

/// What one loop-erased branch did.
#[derive(Clone, Copy, Debug)]
struct Branch {
    walk_steps: u64,
    le_steps: usize,
    end: Site,
    max_dist2: i128,
}

impl Wilson {
    fn new(domain: &Domain) -> Result<Wilson> {
        let vertices = domain.lattice_points()?;
        if vertices.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if vertices.len() >= NONE as usize {
            return invalid("domain too large");
        }
        let index = BoxIndex::new(&vertices);
        let k = vertices.len();
        Ok(Wilson {
            vertices,
            index,
            in_tree: vec![false; k],
            next: vec![0; k],
            parent: vec![Parent::Vertex(NONE); k],
        })
    }

    /// Random walk from vertex `start` until it meets the tree or leaves the
    /// domain, then attach its loop erasure via last-exit pointers.
    fn branch(&mut self, start: usize, rng: &mut RandomSource) -> Result<Branch> {
        let origin = self.vertices[start];
        let mut id = start;
        let mut cur = origin;
        let mut steps = 0u64;
        let mut max_dist2 = 0i128;
        while !self.in_tree[id] {
            if steps >= DEFAULT_MAX_STEPS {
                return Err(Error::StepCapExhausted(steps));
            }
            let d = rng.direction();
            self.next[id] = d;
            cur = step(cur, d);
            steps += 1;
            max_dist2 = max_dist2.max(dist2(cur, origin));
            id = self.index.get(cur) as usize;
            if id == NONE as usize {
                break;
            }
        }
        let end = cur;
        let mut id = start;
        let mut le_steps = 0;
        while !self.in_tree[id] {
            self.in_tree[id] = true;
            let nb = step(self.vertices[id], self.next[id]);
            let nid = self.index.get(nb);
            le_steps += 1;
            if nid == NONE {
                self.parent[id] = Parent::Boundary(nb);
                break;
            }
            self.parent[id] = Parent::Vertex(nid);
            id = nid as usize;
        }
        Ok(Branch { walk_steps: steps, le_steps, end, max_dist2 })
    }

    fn finish(self, scale: u8) -> SpanningTree {
        SpanningTree { scale, vertices: self.vertices, index: self.index, parent: self.parent }
    }
}

/// Domain vertices in `(z, y, x)` lexicographic order.
pub fn lexicographic_order(domain: &Domain) -> Result<Vec<Site>> {
    domain.lattice_points()
}

/// Wilson's algorithm with an explicit vertex ordering.
pub fn sample_wired_ust(domain: &Domain, ordering: &[Site], rng: &mut RandomSource) -> Result<SpanningTree> {
    wilson_ust(domain, Some(ordering), rng)
}

/// Uniform spanning tree of the wired graph. `ordering`, when given, must
/// list every domain vertex exactly once.
pub fn wilson_ust(domain: &Domain, ordering: Option<&[Site]>, rng: &mut RandomSource) -> Result<SpanningTree> {
    let mut w = Wilson::new(domain)?;
    let order: Vec<usize> = match ordering {
        None => (0..w.vertices.len()).collect(),
        Some(o) => {
            if o.len() != w.vertices.len() {
                return invalid("ordering is not a permutation of the domain vertices");
            }
            let mut seen = vec![false; o.len()];
            let mut ids = Vec::with_capacity(o.len());
            for s in o {
                let id = w.index.get(*s);
                if id == NONE || seen[id as usize] {
                    return invalid("ordering is not a permutation of the domain vertices");
                }
                seen[id as usize] = true;
                ids.push(id as usize);
            }
            ids
        }
    };
    for id in order {
        if !w.in_tree[id] {
            w.branch(id, rng)?;
        }
    }
    Ok(w.finish(domain.scale()))
}

/// Per-net-point data from the net-seeded run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetWilsonRecord {
    pub l: usize,
    /// `x_l = γ(τ_l)`.
    pub x: Site,
    /// Net point nearest `x_l`.
    pub y: Site,
    /// `t^l`, the steps taken before meeting the tree or `∂`.
    pub walk_steps: u64,
    /// `w_l = R^l(t^l)`; an exterior site when the walk reached `∂`.
    pub w: Site,
    /// `L_l = len LE(R^l[0, t^l])`.
    pub branch_len: usize,
    /// Whether `y_l` is far enough from the unit sphere for the `H` clause.
    pub h_applies: bool,
    /// `R^l[0, t^l] ⊂ B(y_l, sqrt r)` and `w_l ∈ γ[τ_{l-1}, τ_{l+1}]`.
    pub h_holds: bool,
    /// `L_l <= r^{1/3} 2^{βn}`.
    pub i_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetWilsonParams {
    /// Net spacing `r`, also the scale of the `H` and `I` clauses.
    pub r: Dyadic,
    pub beta: f64,
}

/// Wilson's algorithm seeded with `γ`, then one branch from the net point
/// nearest each `γ(τ_l)`, then the remaining vertices in `(z, y, x)` order.
///
/// `γ` must run from a domain vertex to its first exterior site.
pub fn wilson_with_net(
    gamma: &SimplePath,
    net: &NetGrid,
    tau: &[usize],
    params: &NetWilsonParams,
    rng: &mut RandomSource,
) -> Result<(SpanningTree, Vec<NetWilsonRecord>)> {
    let domain = net.domain();
    let n = domain.scale();
    crate::geometry::check_scale(n, gamma.scale())?;
    let g = gamma.sites();
    let len = gamma.len();
    if len == 0 || g[..len].iter().any(|s| !domain.contains(*s)) || domain.contains(g[len]) {
        return precondition("γ must stay in the domain and end at its first exterior site");
    }
    if tau.is_empty() || tau[0] != 0 || tau.windows(2).any(|w| w[0] >= w[1]) || *tau.last().unwrap() > len {
        return invalid("τ must be strictly increasing from 0 and bounded by len γ");
    }
    if !params.r.is_positive() {
        return invalid("r must be positive");
    }
    let mut w = Wilson::new(domain)?;
    for j in 0..len {
        let id = w.index.get(g[j]) as usize;
        w.in_tree[id] = true;
        w.parent[id] = if j + 1 < len {
            Parent::Vertex(w.index.get(g[j + 1]))
        } else {
            Parent::Boundary(g[len])
        };
    }
    let gamma_pos: FxHashMap<Site, usize> = g.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let r = params.r;
    let r_f = r.to_f64();
    let scale = 2f64.powi(n as i32);
    let i_bound = r_f.cbrt() * 2f64.powf(params.beta * n as f64);
    let h_margin = 1.0 - 4.0 * r_f.sqrt();
    let big_n = tau.len() - 1;
    let mut records = Vec::with_capacity(tau.len());
    for (l, &t) in tau.iter().enumerate() {
        let x = g[t];
        let y = net.nearest(x);
        let id = w.index.get(y) as usize;
        let b = w.branch(id, rng)?;
        let lo = if l == 0 { 0 } else { tau[l - 1] };
        let hi = if l < big_n { tau[l + 1] } else { len };
        let on_window = gamma_pos.get(&b.end).is_some_and(|&j| lo <= j && j <= hi);
        let inside = cmp_sq(b.max_dist2, n, r) == std::cmp::Ordering::Less;
        let y_norm = (norm2(y) as f64).sqrt() / scale;
        records.push(NetWilsonRecord {
            l,
            x,
            y,
            walk_steps: b.walk_steps,
            w: b.end,
            branch_len: b.le_steps,
            h_applies: y_norm <= h_margin,
            h_holds: inside && on_window,
            i_holds: (b.le_steps as f64) <= i_bound,
        });
    }
    let mut rest: Vec<usize> = (0..w.vertices.len()).filter(|&i| !w.in_tree[i]).collect();
    rest.sort_by_key(|&i| zyx_key(w.vertices[i]));
    for id in rest {
        if !w.in_tree[id] {
            w.branch(id, rng)?;
        }
    }
    Ok((w.finish(n), records))
}

/// Number of spanning trees of the wired graph (matrix-tree theorem).
///
/// Exact integer Bareiss elimination; errors if an intermediate value would
/// overflow `i128`.
pub fn spanning_tree_count(domain: &Domain) -> Result<u128> {
    let verts = domain.lattice_points()?;
    let k = verts.len();
    if k == 0 {
        return Ok(1);
    }
    let idx: FxHashMap<Site, usize> = verts.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut a = vec![vec![0i128; k]; k];
    for (i, v) in verts.iter().enumerate() {
        a[i][i] = 6;
        for nb in neighbours(*v) {
            if let Some(&j) = idx.get(&nb) {
                a[i][j] -= 1;
            }
        }
    }
    let overflow = || Error::Numerical("spanning tree count overflows i128".into());
    let mut prev = 1i128;
    let mut sign = 1i128;
    for p in 0..k {
        if a[p][p] == 0 {
            let Some(sw) = (p + 1..k).find(|&r| a[r][p] != 0) else {
                return Ok(0);
            };
            a.swap(p, sw);
            sign = -sign;
        }
        for i in p + 1..k {
            for j in p + 1..k {
                let v = a[i][j]
                    .checked_mul(a[p][p])
                    .and_then(|x| a[i][p].checked_mul(a[p][j]).and_then(|y| x.checked_sub(y)))
                    .ok_or_else(overflow)?;
                a[i][j] = v / prev;
            }
            a[i][p] = 0;
        }
        prev = a[p][p];
    }
    let det = sign * a[k - 1][k - 1];
    u128::try_from(det).map_err(|_| Error::Numerical("negative determinant".into()))
}

/// Every spanning tree of the wired graph, as parent vectors in the vertex
/// order of [`Domain::lattice_points`]. Exponential; for tiny domains only.
pub fn enumerate_spanning_trees(domain: &Domain, limit: usize) -> Result<Vec<Vec<Parent>>> {
    let verts = domain.lattice_points()?;
    let idx: FxHashMap<Site, u32> = verts.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();
    let options: Vec<Vec<Parent>> = verts
        .iter()
        .map(|v| {
            neighbours(*v)
                .iter()
                .map(|nb| match idx.get(nb) {
                    Some(&j) => Parent::Vertex(j),
                    None => Parent::Boundary(*nb),
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut choice = vec![0usize; verts.len()];
    // every vertex picks one outgoing edge; keep the acyclic choices
    loop {
        let parents: Vec<Parent> = choice.iter().enumerate().map(|(i, &c)| options[i][c]).collect();
        if reaches_boundary(&parents) {
            out.push(parents);
            if out.len() > limit {
                return invalid(format!("more than {limit} spanning trees"));
            }
        }
        let mut i = 0;
        loop {
            if i == choice.len() {
                return Ok(out);
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn reaches_boundary(parents: &[Parent]) -> bool {
    (0..parents.len()).all(|start| {
        let mut id = start;
        for _ in 0..=parents.len() {
            match parents[id] {
                Parent::Boundary(_) => return true,
                Parent::Vertex(p) => id = p as usize,
            }
        }
        false
    })
}
