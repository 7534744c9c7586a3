//! Trimming a sub-additive premeasure into an additive one, the induced
//! atomic measure, and the label ultrametric of a hierarchy.
//!
//! Trimming walks the tree top-down. The root keeps `σ = ξ`; each kept node
//! keeps a minimal set `L` of children whose `ξ` values reach its `σ`
//! (largest first) and deletes the others. A single survivor inherits `σ`,
//! several survivors split it in proportion to their `ξ`. The kept leaves then
//! carry an additive measure whose node masses are exactly `σ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{le_rel, ValidationReport};

/// Relative tolerance on the precondition and sandwich checks.
pub const TRIM_TOLERANCE: f64 = 1e-9;
/// Relative tolerance on additivity of `σ`.
pub const ADDITIVITY_TOLERANCE: f64 = 1e-12;

/// Rooted tree with monotone labels whose leaves stand for points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UltrametricTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub label: Vec<f64>,
    /// Point owned by each leaf (`None` for internal nodes).
    pub leaf_point: Vec<Option<usize>>,
    /// Representative point of each node.
    pub rep: Vec<usize>,
}

impl UltrametricTree {
    /// Builds a tree from parent links; children keep index order.
    pub fn from_parents(
        parent: Vec<Option<usize>>,
        label: Vec<f64>,
        leaf_point: Vec<Option<usize>>,
        rep: Vec<usize>,
    ) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::Empty("tree"));
        }
        if label.len() != n || leaf_point.len() != n || rep.len() != n {
            return Err(Error::Format("tree arrays differ in length".into()));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Format(format!(
                "tree must have exactly one root, found {}",
                roots.len()
            )));
        }
        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::Format(format!("node {i} has unknown parent {p}")));
                }
                children[p].push(i);
            }
        }
        let tree = Self {
            root: roots[0],
            parent,
            children,
            label,
            leaf_point,
            rep,
        };
        if tree.preorder().len() != n {
            return Err(Error::Format("tree is not connected".into()));
        }
        for i in 0..n {
            if tree.children[i].is_empty() != tree.leaf_point[i].is_some() {
                return Err(Error::Format(format!("node {i}: exactly the leaves must own points")));
            }
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        out
    }

    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.len()];
        for v in self.preorder() {
            for &c in &self.children[v] {
                depth[c] = depth[v] + 1;
            }
        }
        depth
    }

    /// One past the largest point index owned by a leaf.
    pub fn point_bound(&self) -> usize {
        self.leaf_point.iter().flatten().map(|&p| p + 1).max().unwrap_or(0)
    }

    pub fn leaf_of_points(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.point_bound()];
        for (v, p) in self.leaf_point.iter().enumerate() {
            if let Some(p) = *p {
                out[p] = Some(v);
            }
        }
        out
    }

    pub fn lca(&self, depth: &[usize], mut a: usize, mut b: usize) -> usize {
        while depth[a] > depth[b] {
            a = self.parent[a].expect("deeper node has a parent");
        }
        while depth[b] > depth[a] {
            b = self.parent[b].expect("deeper node has a parent");
        }
        while a != b {
            a = self.parent[a].expect("distinct nodes below the root");
            b = self.parent[b].expect("distinct nodes below the root");
        }
        a
    }

    /// `ρ(x, y)`: label of the least common ancestor of the leaves of `x` and `y`.
    pub fn ultrametric(&self, x: usize, y: usize) -> Result<f64> {
        let leaves = self.leaf_of_points();
        let lx = leaves
            .get(x)
            .copied()
            .flatten()
            .ok_or(Error::UnknownPoint(format!("{x} is not a leaf point")))?;
        let ly = leaves
            .get(y)
            .copied()
            .flatten()
            .ok_or(Error::UnknownPoint(format!("{y} is not a leaf point")))?;
        if lx == ly {
            return Ok(0.0);
        }
        Ok(self.label[self.lca(&self.depths(), lx, ly)])
    }

    /// Points below each node (leaf points of its subtree), restricted to `keep`.
    pub fn points_below(&self, keep: &[bool]) -> Vec<Vec<usize>> {
        let mut below: Vec<Vec<usize>> = vec![Vec::new(); self.len()];
        for v in self.preorder().into_iter().rev() {
            if !keep[v] {
                continue;
            }
            let mut pts: Vec<usize> = self.leaf_point[v].into_iter().collect();
            for &c in &self.children[v] {
                if keep[c] {
                    pts.extend_from_slice(&below[c]);
                }
            }
            pts.sort_unstable();
            below[v] = pts;
        }
        below
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimmedTree {
    pub tree: UltrametricTree,
    pub xi: Vec<f64>,
    pub kept: Vec<bool>,
    /// `σ` on kept nodes (0 elsewhere).
    pub sigma: Vec<f64>,
    pub delta_param: f64,
}

impl TrimmedTree {
    pub fn kept_children(&self, u: usize) -> Vec<usize> {
        self.tree.children[u]
            .iter()
            .copied()
            .filter(|&c| self.kept[c])
            .collect()
    }

    /// Kept leaves in preorder.
    pub fn kept_leaves(&self) -> Vec<usize> {
        self.tree
            .preorder()
            .into_iter()
            .filter(|&v| self.kept[v] && self.tree.leaf_point[v].is_some())
            .collect()
    }

    /// The kept subtree as a standalone labeled tree (node order: preorder of
    /// the kept nodes) together with the original id of every new node.
    pub fn kept_subtree(&self) -> (UltrametricTree, Vec<usize>) {
        let order: Vec<usize> = self.tree.preorder().into_iter().filter(|&v| self.kept[v]).collect();
        let mut new_id = vec![usize::MAX; self.tree.len()];
        for (i, &v) in order.iter().enumerate() {
            new_id[v] = i;
        }
        let parent = order.iter().map(|&v| self.tree.parent[v].map(|p| new_id[p])).collect();
        let children = order
            .iter()
            .map(|&v| self.kept_children(v).into_iter().map(|c| new_id[c]).collect())
            .collect();
        let sub = UltrametricTree {
            root: 0,
            parent,
            children,
            label: order.iter().map(|&v| self.tree.label[v]).collect(),
            leaf_point: order.iter().map(|&v| self.tree.leaf_point[v]).collect(),
            rep: order.iter().map(|&v| self.tree.rep[v]).collect(),
        };
        (sub, order)
    }

    /// `ρ` restricted to the support.
    pub fn ultrametric(&self, x: usize, y: usize) -> Result<f64> {
        for p in [x, y] {
            let leaf = self.tree.leaf_of_points().get(p).copied().flatten();
            if !leaf.is_some_and(|l| self.kept[l]) {
                return Err(Error::UnknownPoint(format!("{p} is not in the support")));
            }
        }
        self.tree.ultrametric(x, y)
    }
}

/// Largest `ξ` strictly below each node, with the node attaining it.
fn max_below(tree: &UltrametricTree, xi: &[f64]) -> Vec<Option<(f64, usize)>> {
    let mut below: Vec<Option<(f64, usize)>> = vec![None; tree.len()];
    for v in tree.preorder().into_iter().rev() {
        for &c in &tree.children[v] {
            for cand in [Some((xi[c], c)), below[c]].into_iter().flatten() {
                if below[v].is_none_or(|(b, _)| cand.0 > b) {
                    below[v] = Some(cand);
                }
            }
        }
    }
    below
}

/// Tightest `δ` with `ξ(anc) >= δ·ξ(desc)` for every ancestor pair, capped at 1.
pub fn effective_delta(tree: &UltrametricTree, xi: &[f64]) -> f64 {
    let mut delta = 1.0f64;
    for (v, below) in max_below(tree, xi).into_iter().enumerate() {
        if let Some((b, _)) = below {
            if b > 0.0 {
                delta = delta.min(xi[v] / b);
            }
        }
    }
    delta
}

/// Trims `tree` so that `σ` is additive with `ξ >= σ >= (δ/2)ξ` on kept nodes.
pub fn trim_balanced(tree: &UltrametricTree, xi: &[f64], delta_param: f64) -> Result<TrimmedTree> {
    let n = tree.len();
    if xi.len() != n {
        return Err(Error::Mismatch(format!("{} ξ values for {n} nodes", xi.len())));
    }
    if let Some(v) = xi.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ξ({v}) = {} is not finite and non-negative",
            xi[v]
        )));
    }
    if !(delta_param > 0.0 && delta_param <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta_param} outside (0, 1]")));
    }
    for v in 0..n {
        if tree.children[v].is_empty() {
            continue;
        }
        let sum: f64 = tree.children[v].iter().map(|&c| xi[c]).sum();
        if !le_rel(xi[v], sum, TRIM_TOLERANCE) {
            return Err(Error::Precondition(format!(
                "ξ is not sub-additive at node {v}: {} > {sum}",
                xi[v]
            )));
        }
    }
    for (v, below) in max_below(tree, xi).into_iter().enumerate() {
        if let Some((b, d)) = below {
            if !le_rel(delta_param * b, xi[v], TRIM_TOLERANCE) {
                return Err(Error::Precondition(format!(
                    "ancestor {v} has ξ = {} below δ·ξ({d}) = {}",
                    xi[v],
                    delta_param * b
                )));
            }
        }
    }

    let mut kept = vec![false; n];
    let mut sigma = vec![0.0; n];
    kept[tree.root] = true;
    sigma[tree.root] = xi[tree.root];
    let mut stack = vec![tree.root];
    while let Some(u) = stack.pop() {
        let target = sigma[u];
        if tree.children[u].is_empty() || target == 0.0 {
            continue;
        }
        let mut cands: Vec<usize> = tree.children[u].iter().copied().filter(|&c| xi[c] > 0.0).collect();
        cands.sort_by(|&a, &b| xi[b].total_cmp(&xi[a]));
        if cands.is_empty() {
            return Err(Error::Invariant(format!(
                "node {u} has σ = {target} but no child with positive ξ"
            )));
        }
        let mut chosen = Vec::new();
        let mut sum = 0.0;
        for &c in &cands {
            chosen.push(c);
            sum += xi[c];
            if sum >= target {
                break;
            }
        }
        while chosen.len() > 1 {
            let smallest = *chosen.last().expect("non-empty");
            if sum - xi[smallest] >= target {
                chosen.pop();
                sum -= xi[smallest];
            } else {
                break;
            }
        }
        if chosen.len() == 1 {
            sigma[chosen[0]] = target;
        } else {
            for &c in &chosen {
                sigma[c] = target * (xi[c] / sum);
            }
        }
        for &c in &chosen {
            kept[c] = true;
            stack.push(c);
        }
    }
    Ok(TrimmedTree {
        tree: tree.clone(),
        xi: xi.to_vec(),
        kept,
        sigma,
        delta_param,
    })
}

/// Audits a trim: kept set closed upward, `σ(root) = ξ(root)`, additivity,
/// the sandwich `ξ >= σ >= (δ/2)ξ`, and minimality of every multi-child `L`.
pub fn verify_trim(trimmed: &TrimmedTree) -> ValidationReport {
    let mut report = ValidationReport::new();
    let tree = &trimmed.tree;
    let (xi, sigma) = (&trimmed.xi, &trimmed.sigma);
    if sigma[tree.root] != xi[tree.root] || !trimmed.kept[tree.root] {
        report.push(
            "root",
            format!("σ(root) = {} but ξ(root) = {}", sigma[tree.root], xi[tree.root]),
            vec![tree.root],
        );
    }
    for u in 0..tree.len() {
        if !trimmed.kept[u] {
            continue;
        }
        if let Some(p) = tree.parent[u] {
            if !trimmed.kept[p] {
                report.push("closure", "kept node below a deleted parent", vec![p, u]);
            }
        }
        if !le_rel(sigma[u], xi[u], TRIM_TOLERANCE) {
            report.push("sandwich-upper", format!("σ = {} > ξ = {}", sigma[u], xi[u]), vec![u]);
        }
        let floor = trimmed.delta_param / 2.0 * xi[u];
        if !le_rel(floor, sigma[u], TRIM_TOLERANCE) {
            report.push(
                "sandwich-lower",
                format!("σ = {} < (δ/2)ξ = {floor}", sigma[u]),
                vec![u],
            );
        }
        let kids = trimmed.kept_children(u);
        if kids.is_empty() {
            if tree.leaf_point[u].is_none() && sigma[u] > 0.0 {
                report.push("additivity", "internal node keeps mass but no children", vec![u]);
            }
            continue;
        }
        let sum: f64 = kids.iter().map(|&c| sigma[c]).sum();
        if (sum - sigma[u]).abs() > ADDITIVITY_TOLERANCE * sigma[u].abs().max(sum.abs()) {
            report.push(
                "additivity",
                format!("σ = {} but children sum to {sum}", sigma[u]),
                vec![u],
            );
        }
        if kids.len() > 1 {
            let xs: f64 = kids.iter().map(|&c| xi[c]).sum();
            let min = kids.iter().map(|&c| xi[c]).fold(f64::INFINITY, f64::min);
            if xs - min >= sigma[u] {
                report.push(
                    "minimality",
                    "dropping the smallest kept child still reaches σ",
                    vec![u],
                );
            }
        }
    }
    report
}

/// Atomic measure on the kept leaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonMeasure {
    /// Mass of every point of the space (0 off the support).
    pub nu: Vec<f64>,
    /// Support points, ascending.
    pub support: Vec<usize>,
}

impl SkeletonMeasure {
    pub fn total(&self) -> f64 {
        self.support.iter().map(|&p| self.nu[p]).sum()
    }
}

/// Puts `σ(leaf)` on the point of every kept leaf.
pub fn induce_measure(trimmed: &TrimmedTree, n_points: usize) -> Result<SkeletonMeasure> {
    let mut nu = vec![0.0; n_points];
    let mut support = Vec::new();
    for v in trimmed.kept_leaves() {
        let p = trimmed.tree.leaf_point[v].expect("kept leaves own points");
        if p >= n_points {
            return Err(Error::Mismatch(format!(
                "leaf point {p} outside a space of {n_points} points"
            )));
        }
        nu[p] = trimmed.sigma[v];
        support.push(p);
    }
    support.sort_unstable();
    Ok(SkeletonMeasure { nu, support })
}

/// `ρ` between every pair of `points` (all must be leaf points of `tree`).
pub fn ultrametric_matrix(tree: &UltrametricTree, points: &[usize]) -> Result<Vec<Vec<f64>>> {
    let leaves = tree.leaf_of_points();
    let depth = tree.depths();
    let owners: Vec<usize> = points
        .iter()
        .map(|&p| {
            leaves
                .get(p)
                .copied()
                .flatten()
                .ok_or(Error::UnknownPoint(format!("{p} is not a leaf point")))
        })
        .collect::<Result<_>>()?;
    Ok(owners
        .iter()
        .map(|&a| {
            owners
                .iter()
                .map(|&b| {
                    if a == b {
                        0.0
                    } else {
                        tree.label[tree.lca(&depth, a, b)]
                    }
                })
                .collect()
        })
        .collect())
}

/// Exhaustive strong-triangle check `ρ(x,z) <= max(ρ(x,y), ρ(y,z))` over all
/// triples of `points` (exact comparison).
pub fn strong_triangle_violations(tree: &UltrametricTree, points: &[usize]) -> Result<ValidationReport> {
    let rho = ultrametric_matrix(tree, points)?;
    let k = points.len();
    let mut report = ValidationReport::new();
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                if rho[a][c] > rho[a][b].max(rho[b][c]) {
                    report.push(
                        "strong-triangle",
                        format!("ρ = {} exceeds max({}, {})", rho[a][c], rho[a][b], rho[b][c]),
                        vec![points[a], points[b], points[c]],
                    );
                }
            }
        }
    }
    Ok(report)
}
