//! Binary cluster hierarchy built from repeated annulus splits.
//!
//! Each node holds a set `C̃` of net-tree vertices whose partial boundaries
//! make up its point cluster `C`. A node with more than one point is
//! re-expressed at the scale `s = 4^⌊log₄ Δ⌋/(64t)` (its vertices are expanded
//! to their `s`-descendants), the expanded set is split at scale
//! `Δ + 12s` with [`ramsey_decompose`], and the dense part and the remainder
//! become the two children. Points strictly inside the cut ring but outside
//! the dense part are dropped, which is how the hierarchy selects a subset.
//!
//! Every node also carries `ξ = μ(C) / μ*(Z̃)^{1/t}`, where `μ*` is the
//! quarter-scale local mass of the expanded set; leaves carry `μ(C)^{1−1/t}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{set_diameter, MeasuredMetric, MetricMeasureSpace};
use crate::net_tree::NetTree;
use crate::ramsey::ramsey_decompose;
use crate::report::{le_rel, ValidationReport};
use crate::tree_measure::UltrametricTree;

/// Item-G constant: `B(rep u, Δ(parent)/(BALL_INCLUSION_DIVISOR·t)) ⊆ C_u`.
pub const BALL_INCLUSION_DIVISOR: f64 = 5120.0;
/// Relative tolerance for the `ξ` comparisons.
pub const XI_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonNode {
    /// Net-tree vertices whose partial boundaries form the cluster.
    pub tilde_cluster: Vec<usize>,
    /// Points of the cluster, ascending.
    pub cluster: Vec<usize>,
    /// Diameter of the cluster.
    pub label: f64,
    /// Expansion scale (0 for leaves).
    pub scale: f64,
    pub rep: usize,
    pub rep_vertex: usize,
    pub xi: f64,
    pub weight: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl SkeletonNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonTree {
    pub nodes: Vec<SkeletonNode>,
    pub root: usize,
    pub t: usize,
    pub n_points: usize,
}

/// `4^⌊log₄ Δ⌋`, found by repeated multiplication or division by 4 from 1.
pub fn power_of_four_floor(delta: f64) -> f64 {
    let mut p = 1.0f64;
    while p > delta {
        p /= 4.0;
    }
    while p * 4.0 <= delta {
        p *= 4.0;
    }
    p
}

/// Expansion scale `4^⌊log₄ Δ⌋/(64t)`.
pub fn scale_for(label: f64, t: usize) -> f64 {
    power_of_four_floor(label) / (64.0 * t as f64)
}

/// Net-tree vertices re-weighted by their partial boundaries, with distances
/// between representatives.
struct Projected<'a> {
    space: &'a MetricMeasureSpace,
    reps: Vec<usize>,
    weights: Vec<f64>,
}

impl MeasuredMetric for Projected<'_> {
    fn len(&self) -> usize {
        self.reps.len()
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        self.space.dist(self.reps[a], self.reps[b])
    }

    fn weight(&self, a: usize) -> f64 {
        self.weights[a]
    }
}

struct Pending {
    tilde: Vec<usize>,
    rep_vertex: usize,
    parent: Option<usize>,
}

struct Expanded {
    node: SkeletonNode,
    children: Vec<Pending>,
}

fn cluster_of(net: &NetTree, tilde: &[usize]) -> Vec<usize> {
    let mut c: Vec<usize> = tilde
        .iter()
        .flat_map(|&v| net.vertex(v).pboundary.iter().copied())
        .collect();
    c.sort_unstable();
    c
}

fn heaviest(net: &NetTree, space: &MetricMeasureSpace, members: &[usize]) -> usize {
    let mut best = members[0];
    let mut best_w = space.weight_of(&net.vertex(best).pboundary);
    for &v in &members[1..] {
        let w = space.weight_of(&net.vertex(v).pboundary);
        if w > best_w {
            best = v;
            best_w = w;
        }
    }
    best
}

fn expand(space: &MetricMeasureSpace, net: &NetTree, pending: Pending, t: usize) -> Result<Expanded> {
    let tf = t as f64;
    let cluster = cluster_of(net, &pending.tilde);
    if cluster.is_empty() {
        return Err(Error::Invariant("skeleton cluster is empty".into()));
    }
    let weight = space.weight_of(&cluster);
    let rep = net.vertex(pending.rep_vertex).rep;
    let mut node = SkeletonNode {
        tilde_cluster: pending.tilde,
        cluster,
        label: 0.0,
        scale: 0.0,
        rep,
        rep_vertex: pending.rep_vertex,
        xi: 0.0,
        weight,
        parent: pending.parent,
        children: Vec::new(),
    };
    if node.cluster.len() == 1 {
        node.xi = weight.powf(1.0 - 1.0 / tf);
        return Ok(Expanded {
            node,
            children: Vec::new(),
        });
    }
    node.label = diameter_par(space, &node.cluster);
    node.scale = scale_for(node.label, t);
    let s = node.scale;

    let mut z_tilde = Vec::new();
    for &y in &node.tilde_cluster {
        if net.vertex(y).label <= s {
            z_tilde.push(y);
        } else {
            z_tilde.extend(net.delta_descendants(y, s)?);
        }
    }
    z_tilde.sort_unstable();
    let projected = Projected {
        space,
        reps: z_tilde.iter().map(|&v| net.vertex(v).rep).collect(),
        weights: z_tilde
            .iter()
            .map(|&v| space.weight_of(&net.vertex(v).pboundary))
            .collect(),
    };
    let all: Vec<usize> = (0..z_tilde.len()).collect();
    let split_scale = node.label + 12.0 * s;
    let split = if weight > 0.0 {
        ramsey_decompose(&projected, &all, split_scale, t)?
    } else {
        // massless cluster: split on geometry alone, ξ stays 0
        let unit = Projected {
            space,
            reps: projected.reps.clone(),
            weights: vec![1.0; z_tilde.len()],
        };
        ramsey_decompose(&unit, &all, split_scale, t)?
    };
    if weight > 0.0 {
        node.xi = weight / split.mu_star.powf(1.0 / tf);
    }
    let children = [&split.p, &split.q]
        .into_iter()
        .map(|part| {
            let tilde: Vec<usize> = part.iter().map(|&k| z_tilde[k]).collect();
            let rep_vertex = heaviest(net, space, &tilde);
            Pending {
                tilde,
                rep_vertex,
                parent: None,
            }
        })
        .collect();
    Ok(Expanded { node, children })
}

fn diameter_par(space: &MetricMeasureSpace, set: &[usize]) -> f64 {
    if set.len() < 512 {
        return set_diameter(space, set).unwrap_or(0.0);
    }
    (0..set.len())
        .into_par_iter()
        .map(|i| set[i + 1..].iter().map(|&b| space.dist(set[i], b)).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
}

/// Builds the hierarchy top-down, one depth level at a time (nodes of a level
/// are expanded in parallel; ids follow breadth-first order).
pub fn build_skeleton(space: &MetricMeasureSpace, net: &NetTree, t: usize) -> Result<SkeletonTree> {
    if t < 2 {
        return Err(Error::InvalidParameter(format!("t = {t} must be at least 2")));
    }
    if net.n_points() != space.len() {
        return Err(Error::Mismatch(format!(
            "net tree over {} points, space has {}",
            net.n_points(),
            space.len()
        )));
    }
    if net.vertex(net.root).pboundary.is_empty() {
        return Err(Error::Precondition(
            "net tree has no partial boundaries assigned".into(),
        ));
    }
    let mut nodes: Vec<SkeletonNode> = Vec::new();
    let mut frontier = vec![Pending {
        tilde: vec![net.root],
        rep_vertex: net.root,
        parent: None,
    }];
    while !frontier.is_empty() {
        let expanded: Vec<Expanded> = frontier
            .into_par_iter()
            .map(|p| expand(space, net, p, t))
            .collect::<Result<_>>()?;
        let mut next = Vec::new();
        for e in expanded {
            let id = nodes.len();
            if let Some(p) = e.node.parent {
                nodes[p].children.push(id);
            }
            nodes.push(e.node);
            next.extend(e.children.into_iter().map(|mut c| {
                c.parent = Some(id);
                c
            }));
        }
        frontier = next;
    }
    Ok(SkeletonTree {
        nodes,
        root: 0,
        t,
        n_points: space.len(),
    })
}

impl SkeletonTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn xi(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.xi).collect()
    }

    /// Points owned by leaves, ascending.
    pub fn leaf_points(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.cluster[0])
            .collect();
        s.sort_unstable();
        s
    }

    /// Labeled tree view (leaf nodes map to their single point).
    pub fn to_ultrametric(&self) -> UltrametricTree {
        UltrametricTree {
            root: self.root,
            parent: self.nodes.iter().map(|n| n.parent).collect(),
            children: self.nodes.iter().map(|n| n.children.clone()).collect(),
            label: self.nodes.iter().map(|n| n.label).collect(),
            leaf_point: self.nodes.iter().map(|n| n.is_leaf().then(|| n.cluster[0])).collect(),
            rep: self.nodes.iter().map(|n| n.rep).collect(),
        }
    }

    /// One line per node: `(id, Δ, s, ξ, |C̃|, |C|)`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::from("node\tlabel\tscale\txi\ttilde\tcluster\n");
        for (id, n) in self.nodes.iter().enumerate() {
            out.push_str(&format!(
                "{id}\t{}\t{}\t{}\t{}\t{}\n",
                n.label,
                n.scale,
                n.xi,
                n.tilde_cluster.len(),
                n.cluster.len()
            ));
        }
        out
    }
}

/// Checks the hierarchy against the space: root cover, nesting, exact
/// diameters and scales, sibling separation `Δ/(16t)`, the ball inclusion
/// `B(rep u, Δ(parent)/(5120t)) ⊆ C_u`, leaf-pair distortion
/// `d <= Δ(lca) <= 16t·d`, sub-additivity of `ξ`, the sandwich
/// `μ(C)^{1−1/t} <= ξ <= λ̂^{2/t} μ(C)^{1−1/t}` and the ancestor ratio
/// `ξ(anc) >= λ̂^{−2/t} ξ(desc)`.
pub fn verify_skeleton(tree: &SkeletonTree, space: &MetricMeasureSpace, lambda_hat: f64) -> ValidationReport {
    let mut report = ValidationReport::new();
    let n = space.len();
    let tf = tree.t as f64;
    let exponent = 1.0 - 1.0 / tf;
    let lam = lambda_hat.powf(2.0 / tf);
    if tree.n_points != n || tree.nodes.iter().any(|node| node.cluster.iter().any(|&p| p >= n)) {
        report.push("mismatch", "skeleton does not belong to this space", vec![]);
        return report;
    }
    if tree.nodes[tree.root].cluster.len() != n {
        report.push("root", "root cluster is not the whole space", vec![tree.root]);
    }

    let per_node: Vec<ValidationReport> = (0..tree.len())
        .into_par_iter()
        .map(|id| {
            let mut r = ValidationReport::new();
            let node = &tree.nodes[id];
            let diam = set_diameter(space, &node.cluster).unwrap_or(0.0);
            if diam != node.label {
                r.push(
                    "diameter",
                    format!("label {} but diam(C) = {diam}", node.label),
                    vec![id],
                );
            }
            if !node.is_leaf() && node.scale != scale_for(node.label, tree.t) {
                r.push(
                    "scale",
                    format!("scale {} for label {}", node.scale, node.label),
                    vec![id],
                );
            }
            if let Some(p) = node.parent {
                let parent = &tree.nodes[p];
                if node.cluster.iter().any(|x| parent.cluster.binary_search(x).is_err()) {
                    r.push("nesting", "cluster leaves its parent's cluster", vec![p, id]);
                }
                let radius = parent.label / (BALL_INCLUSION_DIVISOR * tf);
                for y in 0..n {
                    if space.dist(node.rep, y) <= radius && node.cluster.binary_search(&y).is_err() {
                        r.push(
                            "ball-inclusion",
                            format!(
                                "point {y} within Δ(parent)/(5120t) = {radius} of rep {} lies outside C",
                                node.rep
                            ),
                            vec![id, y],
                        );
                        break;
                    }
                }
            }
            // sibling separation and distortion of every pair split here
            for (a_i, &a) in node.children.iter().enumerate() {
                for &b in &node.children[a_i + 1..] {
                    let sep_bound = node.label / (16.0 * tf);
                    let mut worst = f64::INFINITY;
                    let mut pair = (0, 0);
                    for &x in &tree.nodes[a].cluster {
                        for &y in &tree.nodes[b].cluster {
                            let d = space.dist(x, y);
                            if d < worst {
                                worst = d;
                                pair = (x, y);
                            }
                        }
                    }
                    if worst < sep_bound {
                        r.push(
                            "separation",
                            format!("d(C_a, C_b) = {worst} < Δ/(16t) = {sep_bound}"),
                            vec![a, b, pair.0, pair.1],
                        );
                    }
                    if node.label > 16.0 * tf * worst {
                        r.push(
                            "distortion",
                            format!("Δ(lca) = {} > 16t·d = {}", node.label, 16.0 * tf * worst),
                            vec![pair.0, pair.1],
                        );
                    }
                }
            }
            if !node.is_leaf() {
                let sum: f64 = node.children.iter().map(|&c| tree.nodes[c].xi).sum();
                if !le_rel(node.xi, sum, XI_TOLERANCE) {
                    r.push(
                        "subadditivity",
                        format!("ξ = {} > Σ children ξ = {sum}", node.xi),
                        vec![id],
                    );
                }
            }
            let base = node.weight.powf(exponent);
            if !le_rel(base, node.xi, XI_TOLERANCE) {
                r.push("xi-lower", format!("μ(C)^(1−1/t) = {base} > ξ = {}", node.xi), vec![id]);
            }
            if !le_rel(node.xi, lam * base, XI_TOLERANCE) {
                r.push(
                    "xi-upper",
                    format!("ξ = {} > λ̂^(2/t) μ(C)^(1−1/t) = {}", node.xi, lam * base),
                    vec![id],
                );
            }
            if (node.weight - space.weight_of(&node.cluster)).abs() > 1e-12 * node.weight.max(1e-300) {
                r.push("weight", "stored cluster weight is stale", vec![id]);
            }
            r
        })
        .collect();
    for r in per_node {
        report.extend(r);
    }

    // ancestor ratio via the largest ξ strictly below each node
    let mut below = vec![0.0f64; tree.len()];
    let mut arg = vec![usize::MAX; tree.len()];
    for id in (0..tree.len()).rev() {
        for &c in &tree.nodes[id].children {
            let (cand, who) = if tree.nodes[c].xi >= below[c] {
                (tree.nodes[c].xi, c)
            } else {
                (below[c], arg[c])
            };
            if cand > below[id] || arg[id] == usize::MAX {
                below[id] = cand;
                arg[id] = who;
            }
        }
        if arg[id] != usize::MAX && !le_rel(below[id], lam * tree.nodes[id].xi, XI_TOLERANCE) {
            report.push(
                "ancestor-ratio",
                format!(
                    "ξ(anc) = {} < λ̂^(−2/t) ξ(desc) = {}",
                    tree.nodes[id].xi,
                    below[id] / lam
                ),
                vec![id, arg[id]],
            );
        }
    }
    report
}
