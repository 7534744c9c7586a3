#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umsk_core::generators::{gen_cantor, gen_grid, gen_random_doubling, gen_sierpinski};
use umsk_core::{MeasuredMetric, MetricMeasureSpace, TrimmedTree, UltrametricTree};

/// Random split instance: up to 64 points drawn uniformly, in clusters or on
/// a line, random (sometimes zero) weights, a random subset `Z` and a random
/// `Δ ∈ (0, 2·diam Z)`.
pub fn ramsey_instance(seed: u64) -> (MetricMeasureSpace, Vec<usize>, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=64);
    let shape = rng.gen_range(0..3);
    let centers: Vec<[f64; 2]> = (0..4).map(|_| [rng.gen(), rng.gen()]).collect();
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|_| match shape {
            0 => vec![rng.gen(), rng.gen()],
            1 => {
                let c = centers[rng.gen_range(0..centers.len())];
                vec![c[0] + 0.05 * rng.gen::<f64>(), c[1] + 0.05 * rng.gen::<f64>()]
            }
            _ => vec![rng.gen::<f64>()],
        })
        .collect();
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.15) {
                0.0
            } else {
                rng.gen_range(0.01..1.0)
            }
        })
        .collect();
    let mut weights = weights;
    weights[0] = weights[0].max(0.5);
    let ids = (0..n).map(|i| format!("p{i}")).collect();
    let space = MetricMeasureSpace::from_coordinates(format!("ramsey-{seed}"), ids, coords, weights).unwrap();

    let mut z: Vec<usize> = if rng.gen_bool(0.5) {
        space.points().collect()
    } else {
        space.points().filter(|_| rng.gen_bool(0.6)).collect()
    };
    if z.len() < 2 || z.iter().all(|&p| space.weight(p) == 0.0) {
        z = space.points().collect();
    }
    let mut diam: f64 = 0.0;
    for &a in &z {
        for &b in &z {
            diam = diam.max(space.dist(a, b));
        }
    }
    let delta = 2.0 * diam * rng.gen_range(1e-3..1.0);
    let t = [2, 3, 5][rng.gen_range(0..3)];
    (space, z, delta, t)
}

/// Random labeled tree with a sub-additive `ξ` and a valid `δ` for it.
pub fn random_subadditive(seed: u64) -> (UltrametricTree, Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=60);
    // node i > 0 hangs below a random earlier node
    let mut parent: Vec<Option<usize>> = vec![None];
    for i in 1..n {
        parent.push(Some(rng.gen_range(0..i)));
    }
    let mut children = vec![Vec::new(); n];
    for i in 1..n {
        children[parent[i].unwrap()].push(i);
    }
    let mut depth = vec![0usize; n];
    for i in 1..n {
        depth[i] = depth[parent[i].unwrap()] + 1;
    }
    let label: Vec<f64> = (0..n)
        .map(|i| {
            if children[i].is_empty() {
                0.0
            } else {
                0.5f64.powi(depth[i] as i32)
            }
        })
        .collect();
    let mut leaf_point = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if children[i].is_empty() {
            leaf_point[i] = Some(next);
            next += 1;
        }
    }
    let mut rep = vec![0; n];
    let mut xi = vec![0.0; n];
    for i in (0..n).rev() {
        if let Some(p) = leaf_point[i] {
            rep[i] = p;
            xi[i] = if rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(0.01..1.0)
            };
        } else {
            rep[i] = rep[children[i][0]];
            let sum: f64 = children[i].iter().map(|&c| xi[c]).sum();
            let max = children[i].iter().map(|&c| xi[c]).fold(0.0, f64::max);
            xi[i] = match rng.gen_range(0..3) {
                0 => sum,
                1 => max + (sum - max) * rng.gen::<f64>(),
                _ => max * rng.gen_range(0.3..1.0),
            };
        }
    }
    let tree = UltrametricTree::from_parents(parent.clone(), label, leaf_point, rep).unwrap();
    // tightest ancestor ratio, by walking every ancestor chain
    let mut delta: f64 = 1.0;
    for v in 0..n {
        let mut a = parent[v];
        while let Some(u) = a {
            if xi[v] > 0.0 {
                delta = delta.min(xi[u] / xi[v]);
            }
            a = parent[u];
        }
    }
    let delta = delta * rng.gen_range(0.5..=1.0);
    (tree, xi, delta.max(f64::MIN_POSITIVE))
}

/// Checks the trim contract directly from the arrays: root, upward closure,
/// additivity (1e-12), the sandwich `ξ >= σ >= (δ/2)ξ` (1e-9) and minimality
/// of every kept child set with more than one member.
pub fn trim_contract_failures(tr: &TrimmedTree) -> Vec<String> {
    let t = &tr.tree;
    let mut out = Vec::new();
    if !tr.kept[t.root] || tr.sigma[t.root] != tr.xi[t.root] {
        out.push("root".to_string());
    }
    for u in 0..t.len() {
        if !tr.kept[u] {
            continue;
        }
        if let Some(p) = t.parent[u] {
            if !tr.kept[p] {
                out.push(format!("closure at {u}"));
            }
        }
        let (s, x) = (tr.sigma[u], tr.xi[u]);
        if s > x + 1e-9 * x {
            out.push(format!("sandwich upper at {u}: {s} > {x}"));
        }
        let floor = tr.delta_param / 2.0 * x;
        if s < floor - 1e-9 * floor {
            out.push(format!("sandwich lower at {u}: {s} < {floor}"));
        }
        let kids: Vec<usize> = t.children[u].iter().copied().filter(|&c| tr.kept[c]).collect();
        if kids.is_empty() {
            continue;
        }
        let sum: f64 = kids.iter().map(|&c| tr.sigma[c]).sum();
        if (sum - s).abs() > 1e-12 * s.abs().max(sum.abs()) {
            out.push(format!("additivity at {u}: {sum} vs {s}"));
        }
        if kids.len() > 1 {
            let xs: Vec<f64> = kids.iter().map(|&c| tr.xi[c]).collect();
            let total: f64 = xs.iter().sum();
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            if total - min >= s {
                out.push(format!("minimality at {u}"));
            }
        }
    }
    out
}

/// `ρ(x, y)` for all pairs of `points` by explicit ancestor chains.
pub fn lca_distances(tree: &UltrametricTree, points: &[usize]) -> Vec<Vec<f64>> {
    let mut leaf_of = std::collections::HashMap::new();
    for v in 0..tree.len() {
        if let Some(p) = tree.leaf_point[v] {
            leaf_of.insert(p, v);
        }
    }
    let chains: Vec<Vec<usize>> = points
        .iter()
        .map(|p| {
            let mut chain = vec![leaf_of[p]];
            while let Some(q) = tree.parent[*chain.last().unwrap()] {
                chain.push(q);
            }
            chain
        })
        .collect();
    let k = points.len();
    let mut rho = vec![vec![0.0; k]; k];
    for i in 0..k {
        let set: std::collections::HashSet<usize> = chains[i].iter().copied().collect();
        for j in i + 1..k {
            let lca = *chains[j].iter().find(|v| set.contains(v)).unwrap();
            rho[i][j] = tree.label[lca];
            rho[j][i] = tree.label[lca];
        }
    }
    rho
}

/// Slope of `log N(ε)` against `log(1/ε)` where `N(ε)` counts occupied grid
/// cells of side `ε = 1/k` in the raw coordinates, for each `k` in `cells`.
pub fn box_count_exponent(space: &MetricMeasureSpace, cells: &[f64]) -> f64 {
    let coords = space.coordinates().expect("coordinate space");
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .map(|&k| {
            let occupied: std::collections::HashSet<Vec<i64>> = coords
                .iter()
                .map(|c| c.iter().map(|x| (x * k + 1e-9).floor() as i64).collect())
                .collect();
            (k.ln(), (occupied.len() as f64).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// The four families at roughly 500 to 750 points.
pub fn mid_size_families() -> Vec<MetricMeasureSpace> {
    vec![
        gen_cantor(9, 1.0 / 3.0).unwrap(),
        gen_grid(2, 22).unwrap(),
        gen_sierpinski(6).unwrap(),
        gen_random_doubling(7, 600).unwrap(),
    ]
}
