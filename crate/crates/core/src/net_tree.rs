//! Leveled net hierarchy over a normalized finite space.
//!
//! Level `ℓ` holds a `δ_ℓ`-net `N_ℓ` with `δ_ℓ = (1 − τ) τ^ℓ`, `τ = 1/4`; the
//! vertex for `a ∈ N_ℓ` carries label `Δ = τ^ℓ` and hangs below the nearest
//! point of `N_{ℓ−1}`. Level 0 is the single first point. Nets are greedy in
//! ingestion order and nested, and the hierarchy stops at the first level
//! whose net radius drops to the minimum positive distance, where every
//! point is its own leaf.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{MeasuredMetric, MetricMeasureSpace};
use crate::report::ValidationReport;

pub const TAU: f64 = 0.25;
pub const KAPPA: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetVertex {
    pub level: usize,
    pub rep: usize,
    pub label: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub pboundary: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetTree {
    pub vertices: Vec<NetVertex>,
    pub root: usize,
    pub tau: f64,
    pub kappa: f64,
    pub max_level: usize,
    pub nets: Vec<Vec<usize>>,
    pub net_radii: Vec<f64>,
    n_points: usize,
    tin: Vec<usize>,
    tout: Vec<usize>,
}

impl NetTree {
    /// Assembles a tree from vertex records (children lists are rebuilt from
    /// parent links in record order).
    pub fn from_vertices(mut vertices: Vec<NetVertex>, n_points: usize) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Empty("net tree"));
        }
        let roots: Vec<usize> = (0..vertices.len()).filter(|&i| vertices[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Format(format!(
                "net tree must have exactly one root, found {}",
                roots.len()
            )));
        }
        for v in vertices.iter_mut() {
            v.children.clear();
        }
        for i in 0..vertices.len() {
            if let Some(p) = vertices[i].parent {
                if p >= vertices.len() {
                    return Err(Error::Format(format!("vertex {i} has unknown parent {p}")));
                }
                vertices[p].children.push(i);
            }
        }
        let max_level = vertices.iter().map(|v| v.level).max().unwrap_or(0);
        let mut nets = vec![Vec::new(); max_level + 1];
        for v in &vertices {
            nets[v.level].push(v.rep);
        }
        let net_radii = (0..=max_level).map(|l| (1.0 - TAU) * TAU.powi(l as i32)).collect();
        let mut tree = Self {
            vertices,
            root: roots[0],
            tau: TAU,
            kappa: KAPPA,
            max_level,
            nets,
            net_radii,
            n_points,
            tin: Vec::new(),
            tout: Vec::new(),
        };
        tree.index_euler()?;
        Ok(tree)
    }

    /// Number of points of the space the tree was built over.
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, v: usize) -> &NetVertex {
        &self.vertices[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.vertices[v].children.is_empty()
    }

    /// Weak ancestor test: `a` is `b` or lies on `b`'s path to the root.
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        self.tin[a] <= self.tin[b] && self.tout[b] <= self.tout[a]
    }

    pub fn related(&self, a: usize, b: usize) -> bool {
        self.is_ancestor(a, b) || self.is_ancestor(b, a)
    }

    fn index_euler(&mut self) -> Result<()> {
        let n = self.vertices.len();
        self.tin = vec![usize::MAX; n];
        self.tout = vec![0; n];
        let mut clock = 0;
        let mut stack = vec![(self.root, 0usize)];
        self.tin[self.root] = clock;
        clock += 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < self.vertices[v].children.len() {
                let c = self.vertices[v].children[*next];
                *next += 1;
                if self.tin[c] != usize::MAX {
                    return Err(Error::Format(format!("vertex {c} reached twice")));
                }
                self.tin[c] = clock;
                clock += 1;
                stack.push((c, 0));
            } else {
                self.tout[v] = clock;
                clock += 1;
                stack.pop();
            }
        }
        if self.tin.contains(&usize::MAX) {
            return Err(Error::Format("net tree is not connected".into()));
        }
        Ok(())
    }

    /// Vertices of the subtree below `u` (inclusive), in preorder.
    pub fn subtree(&self, u: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![u];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.vertices[v].children.iter().rev());
        }
        out
    }

    /// Representatives of the leaves below `u`: the finite boundary `∂(u)`.
    pub fn boundary(&self, u: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .subtree(u)
            .into_iter()
            .filter(|&v| self.is_leaf(v))
            .map(|v| self.vertices[v].rep)
            .collect();
        set.into_iter().collect()
    }

    /// Representatives of every vertex below `u`: `𝒟(u)`.
    pub fn descendant_reps(&self, u: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.subtree(u).into_iter().map(|v| self.vertices[v].rep).collect();
        set.into_iter().collect()
    }

    /// `δ`-descendants of `u`: the maximal descendants `v` with
    /// `Δ(v) <= δ < Δ(parent(v))`, or `{u}` when `δ = Δ(u)`. Below the leaf
    /// scale the leaves under `u` are returned.
    pub fn delta_descendants(&self, u: usize, delta: f64) -> Result<Vec<usize>> {
        let label = self
            .vertices
            .get(u)
            .ok_or(Error::InvalidParameter(format!("no vertex {u}")))?
            .label;
        if !(label > 0.0) {
            return Err(Error::InvalidParameter(format!("vertex {u} has label {label}")));
        }
        if !(delta > 0.0 && delta <= label) {
            return Err(Error::InvalidParameter(format!("delta {delta} outside (0, {label}]")));
        }
        if delta == label || self.is_leaf(u) {
            return Ok(vec![u]);
        }
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.vertices[u].children.iter().rev().copied().collect();
        while let Some(v) = stack.pop() {
            if self.vertices[v].label <= delta || self.is_leaf(v) {
                out.push(v);
            } else {
                stack.extend(self.vertices[v].children.iter().rev());
            }
        }
        Ok(out)
    }

    /// Fills `pboundary` top-down: the root gets `∂(root)`, and the `i`-th
    /// child of `u` gets `pb(u) ∩ (∂(v_i) \ (∂(v_1) ∪ … ∪ ∂(v_{i−1})))`.
    pub fn assign_partial_boundaries(&mut self) {
        let n = self.n_points;
        let boundaries: Vec<Vec<usize>> = (0..self.vertices.len()).map(|v| self.boundary(v)).collect();
        self.vertices[self.root].pboundary = boundaries[self.root].clone();
        let mut in_parent = vec![false; n];
        let mut taken = vec![false; n];
        let mut order = vec![self.root];
        let mut k = 0;
        while k < order.len() {
            let u = order[k];
            k += 1;
            for &p in &self.vertices[u].pboundary {
                in_parent[p] = true;
            }
            let children = self.vertices[u].children.clone();
            let mut touched = Vec::new();
            for &c in &children {
                let pb: Vec<usize> = boundaries[c]
                    .iter()
                    .copied()
                    .filter(|&p| in_parent[p] && !taken[p])
                    .collect();
                for &p in &boundaries[c] {
                    if !taken[p] {
                        taken[p] = true;
                        touched.push(p);
                    }
                }
                self.vertices[c].pboundary = pb;
            }
            for p in touched {
                taken[p] = false;
            }
            for &p in &self.vertices[u].pboundary {
                in_parent[p] = false;
            }
            order.extend(children);
        }
    }

    /// Leaf vertex owning each point (first leaf in preorder for imported
    /// trees where several leaves share a representative).
    pub fn leaf_of_points(&self) -> Vec<Option<usize>> {
        let mut leaf = vec![None; self.n_points];
        for v in self.subtree(self.root) {
            if self.is_leaf(v) {
                let r = self.vertices[v].rep;
                if r < self.n_points && leaf[r].is_none() {
                    leaf[r] = Some(v);
                }
            }
        }
        leaf
    }
}

/// Builds the net-tree over a normalized space and assigns partial boundaries.
pub fn build_net_tree(space: &MetricMeasureSpace) -> Result<NetTree> {
    let n = space.len();
    if n == 0 {
        return Err(Error::Empty("space"));
    }
    let mut vertices = vec![NetVertex {
        level: 0,
        rep: 0,
        label: 1.0,
        parent: None,
        children: Vec::new(),
        pboundary: Vec::new(),
    }];
    let mut nets = vec![vec![0usize]];
    let mut net_radii = vec![1.0 - TAU];
    // vertex id of each member of the previous level's net, by point
    let mut prev_vertex: Vec<usize> = vec![usize::MAX; n];
    prev_vertex[0] = 0;

    if let Some(min_d) = space.min_positive_distance() {
        let mut label = 1.0f64;
        let mut in_net = vec![false; n];
        in_net[0] = true;
        loop {
            label *= TAU;
            let radius = (1.0 - TAU) * label;
            let level = nets.len();
            let prev = nets.last().expect("level 0 exists").clone();
            let mut net = prev.clone();
            for p in 0..n {
                if !in_net[p] && net.iter().all(|&q| space.dist(p, q) >= radius) {
                    net.push(p);
                    in_net[p] = true;
                }
            }
            let mut this_vertex = vec![usize::MAX; n];
            for &a in &net {
                let parent_point = if prev_vertex[a] != usize::MAX {
                    a
                } else {
                    let mut best = prev[0];
                    let mut best_d = space.dist(a, best);
                    for &c in &prev[1..] {
                        let d = space.dist(a, c);
                        if d < best_d || (d == best_d && c < best) {
                            best = c;
                            best_d = d;
                        }
                    }
                    best
                };
                let parent = prev_vertex[parent_point];
                let id = vertices.len();
                vertices.push(NetVertex {
                    level,
                    rep: a,
                    label,
                    parent: Some(parent),
                    children: Vec::new(),
                    pboundary: Vec::new(),
                });
                vertices[parent].children.push(id);
                this_vertex[a] = id;
            }
            prev_vertex = this_vertex;
            nets.push(net);
            net_radii.push(radius);
            if radius <= min_d {
                break;
            }
        }
    }
    let max_level = nets.len() - 1;
    let mut tree = NetTree {
        vertices,
        root: 0,
        tau: TAU,
        kappa: KAPPA,
        max_level,
        nets,
        net_radii,
        n_points: n,
        tin: Vec::new(),
        tout: Vec::new(),
    };
    tree.index_euler()?;
    tree.assign_partial_boundaries();
    Ok(tree)
}

/// Exhaustively checks parent levels, monotone labels, covering and packing
/// (with the tree's `κ`), plus the partial-boundary partition.
pub fn verify_net_tree(tree: &NetTree, space: &MetricMeasureSpace) -> Result<ValidationReport> {
    let n = space.len();
    if tree.n_points() != n {
        return Err(Error::Mismatch(format!(
            "tree built over {} points, space has {n}",
            tree.n_points()
        )));
    }
    if let Some(v) = tree
        .vertices
        .iter()
        .position(|v| v.rep >= n || v.pboundary.iter().any(|&p| p >= n))
    {
        return Err(Error::Mismatch(format!(
            "vertex {v} references a point outside the space"
        )));
    }
    let mut report = ValidationReport::new();
    for (id, v) in tree.vertices.iter().enumerate() {
        if let Some(p) = v.parent {
            let pv = &tree.vertices[p];
            if pv.level + 1 != v.level {
                report.push(
                    "level",
                    format!("vertex {id} at level {} under level {}", v.level, pv.level),
                    vec![p, id],
                );
            }
            if v.label > pv.label {
                report.push(
                    "monotone",
                    format!("label {} above parent label {}", v.label, pv.label),
                    vec![p, id],
                );
            }
        }
    }

    let covering: Vec<(usize, usize)> = (0..tree.len())
        .into_par_iter()
        .flat_map_iter(|u| {
            let (rep, label) = (tree.vertices[u].rep, tree.vertices[u].label);
            tree.subtree(u)
                .into_iter()
                .filter(move |&w| space.dist(rep, tree.vertices[w].rep) > label)
                .map(move |w| (u, w))
        })
        .collect();
    for (u, w) in covering {
        report.push(
            "covering",
            format!("descendant {w} lies outside B(rep {u}, Δ({u}))"),
            vec![u, w],
        );
    }

    let mut by_rep: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (id, v) in tree.vertices.iter().enumerate() {
        by_rep[v.rep].push(id);
    }
    let packing: Vec<(usize, usize)> = (0..tree.len())
        .into_par_iter()
        .flat_map_iter(|u| {
            let mut hits = BTreeSet::new();
            if let Some(p) = tree.vertices[u].parent {
                let radius = tree.vertices[p].label / tree.kappa;
                let rep = tree.vertices[u].rep;
                for w in 0..n {
                    if space.dist(rep, w) < radius {
                        for &x in &by_rep[w] {
                            if !tree.related(u, x) {
                                // name the highest ancestor of x still unrelated to u
                                let mut v = x;
                                while let Some(q) = tree.vertices[v].parent {
                                    if tree.related(u, q) {
                                        break;
                                    }
                                    v = q;
                                }
                                hits.insert(v);
                            }
                        }
                    }
                }
            }
            hits.into_iter().map(move |v| (u, v))
        })
        .collect();
    for (u, v) in packing {
        report.push(
            "packing",
            format!("open ball B°(rep {u}, Δ(parent)/κ) meets 𝒟({v})"),
            vec![u, v],
        );
    }

    // partial boundaries: children partition the parent's, root holds everything
    let root_pb: BTreeSet<usize> = tree.vertices[tree.root].pboundary.iter().copied().collect();
    if root_pb.len() != n {
        report.push(
            "surjective",
            format!("root partial boundary has {} of {n} points", root_pb.len()),
            vec![tree.root],
        );
    }
    for (id, v) in tree.vertices.iter().enumerate() {
        if v.children.is_empty() {
            continue;
        }
        let mut union: Vec<usize> = v
            .children
            .iter()
            .flat_map(|&c| tree.vertices[c].pboundary.iter().copied())
            .collect();
        let total = union.len();
        union.sort_unstable();
        union.dedup();
        let mut own = v.pboundary.clone();
        own.sort_unstable();
        if union.len() != total || union != own {
            report.push(
                "partition",
                format!("children of {id} do not partition its partial boundary"),
                vec![id],
            );
        }
    }
    Ok(report)
}
