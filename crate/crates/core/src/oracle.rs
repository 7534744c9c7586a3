//! Brute-force re-derivation of annulus splits.
//!
//! Everything here is written with plain loops over `dist`/`weight` so that it
//! shares no code with [`crate::ramsey`] beyond the metric trait.

use crate::metric::MeasuredMetric;

/// Relative slack for the measure inequalities.
pub const ORACLE_SLACK: f64 = 1e-12;

/// A split recomputed from scratch.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSplit {
    pub center: usize,
    pub ring_index: usize,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub qbar: Vec<usize>,
}

fn mass_where<M: MeasuredMetric + ?Sized>(space: &M, z: &[usize], keep: impl Fn(usize) -> bool) -> f64 {
    let mut m = 0.0;
    for &y in z {
        if keep(y) {
            m += space.weight(y);
        }
    }
    m
}

fn total<M: MeasuredMetric + ?Sized>(space: &M, a: &[usize]) -> f64 {
    let mut m = 0.0;
    for &y in a {
        m += space.weight(y);
    }
    m
}

fn diam<M: MeasuredMetric + ?Sized>(space: &M, a: &[usize]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            d = d.max(space.dist(a[i], a[j]));
        }
    }
    d
}

fn gap<M: MeasuredMetric + ?Sized>(space: &M, a: &[usize], b: &[usize]) -> f64 {
    let mut d = f64::INFINITY;
    for &x in a {
        for &y in b {
            d = d.min(space.dist(x, y));
        }
    }
    d
}

/// `max_a μ(B(a, Δ/4) ∩ A)`; zero for an empty set.
fn local_mass<M: MeasuredMetric + ?Sized>(space: &M, a: &[usize], delta: f64) -> f64 {
    let mut best: f64 = 0.0;
    for &x in a {
        best = best.max(mass_where(space, a, |y| space.dist(x, y) <= delta / 4.0));
    }
    best
}

fn frac(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

fn ge_slack(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - rhs.abs() * ORACLE_SLACK
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

/// Recomputes the split. With `ring` set, that ring index is used instead of
/// the first light ring (useful for probing wrong choices).
pub fn oracle_split<M: MeasuredMetric + ?Sized>(
    space: &M,
    z: &[usize],
    delta: f64,
    t: usize,
    ring: Option<usize>,
) -> Option<OracleSplit> {
    if z.len() < 2 || t < 2 {
        return None;
    }
    let mut center = z[0];
    let mut best = -1.0;
    for &x in z {
        let inner = mass_where(space, z, |y| space.dist(x, y) <= delta / 8.0);
        let outer = mass_where(space, z, |y| space.dist(x, y) < delta / 4.0);
        let score = if outer == 0.0 { 0.0 } else { inner / outer };
        if score > best {
            best = score;
            center = x;
        }
    }
    let tf = t as f64;
    let radius = |i: usize| (1.0 + i as f64 / tf) * delta / 8.0;
    let h = |i: usize| {
        if i < t {
            mass_where(space, z, |y| space.dist(center, y) <= radius(i))
        } else {
            mass_where(space, z, |y| space.dist(center, y) < delta / 4.0)
        }
    };
    let ring_index = match ring {
        Some(i) if (1..=t).contains(&i) => i,
        Some(_) => return None,
        None => {
            let factor = (h(t) / h(0)).powf(1.0 / tf);
            let mut found = None;
            for i in 1..=t {
                if h(i) <= h(i - 1) * factor {
                    found = Some(i);
                    break;
                }
            }
            found?
        }
    };
    let cut = radius(ring_index);
    let p_radius = radius(ring_index - 1);
    let mut p = Vec::new();
    let mut q = Vec::new();
    let mut qbar = Vec::new();
    for &y in z {
        let d = space.dist(center, y);
        if d < cut {
            qbar.push(y);
        } else {
            q.push(y);
        }
        if d <= p_radius {
            p.push(y);
        }
    }
    Some(OracleSplit {
        center,
        ring_index,
        p,
        q,
        qbar,
    })
}

/// Names of the split conclusions that fail for the given parts: nonempty
/// disjoint parts, separation, both diameter bounds, the dense-part mass
/// inequality and the combined corollary inequality.
pub fn failed_conclusions<M: MeasuredMetric + ?Sized>(
    space: &M,
    z: &[usize],
    delta: f64,
    t: usize,
    p: &[usize],
    q: &[usize],
    qbar: &[usize],
) -> Vec<&'static str> {
    let mut failed = Vec::new();
    let tf = t as f64;
    let zs = sorted(z);
    let mut union: Vec<usize> = q.iter().chain(qbar).copied().collect();
    union.sort_unstable();
    if union != zs {
        failed.push("partition");
    }
    if p.is_empty() || q.is_empty() || p.iter().any(|x| q.contains(x)) || p.iter().any(|x| !zs.contains(x)) {
        failed.push("nonempty-disjoint");
        return failed;
    }
    if !(total(space, p) > 0.0) {
        failed.push("dense-weight");
    }
    let need = delta / (8.0 * tf);
    if !ge_slack(gap(space, p, q), need) {
        failed.push("separation");
    }
    if !ge_slack(delta / 2.0, diam(space, qbar)) {
        failed.push("diam-qbar");
    }
    if !ge_slack((0.5 - 0.25 / tf) * delta, diam(space, p)) {
        failed.push("diam-p");
    }
    let star = local_mass(space, z, delta);
    let half = local_mass(space, qbar, delta / 2.0);
    let mu_p = total(space, p);
    let rhs = total(space, qbar) * frac(half, star).powf(1.0 / tf);
    if !ge_slack(mu_p, rhs) {
        failed.push("dense-mass");
    }
    let lhs = frac(mu_p, half.powf(1.0 / tf)) + frac(total(space, q), star.powf(1.0 / tf));
    let whole = frac(total(space, z), star.powf(1.0 / tf));
    if !ge_slack(lhs, whole) {
        failed.push("corollary");
    }
    failed
}

/// Whether `result` is exactly the split re-derived here and every
/// conclusion holds for it.
pub fn oracle_check_ramsey<M: MeasuredMetric + ?Sized>(
    space: &M,
    z: &[usize],
    delta: f64,
    t: usize,
    result: &crate::ramsey::RamseyResult,
) -> bool {
    if result.t != t || result.delta != delta {
        return false;
    }
    let Some(expected) = oracle_split(space, z, delta, t, None) else {
        return false;
    };
    let same = expected.center == result.center
        && expected.ring_index == result.ring_index
        && sorted(&expected.p) == sorted(&result.p)
        && sorted(&expected.q) == sorted(&result.q)
        && sorted(&expected.qbar) == sorted(&result.qbar);
    same && failed_conclusions(space, z, delta, t, &result.p, &result.q, &result.qbar).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricMeasureSpace;
    use crate::ramsey::ramsey_decompose;

    fn line(xs: &[f64]) -> MetricMeasureSpace {
        let n = xs.len();
        MetricMeasureSpace::from_coordinates(
            "line",
            (0..n).map(|i| format!("p{i}")).collect(),
            xs.iter().map(|&x| vec![x]).collect(),
            vec![1.0 / n as f64; n],
        )
        .unwrap()
    }

    #[test]
    fn agrees_on_small_line() {
        let s = line(&[0.0, 0.05, 0.1, 0.4, 0.45, 1.0]);
        let z: Vec<usize> = (0..6).collect();
        let r = ramsey_decompose(&s, &z, 1.2, 3).unwrap();
        assert!(oracle_check_ramsey(&s, &z, 1.2, 3, &r));
    }

    #[test]
    fn swapped_parts_rejected() {
        let s = line(&[0.0, 0.05, 0.1, 0.4, 0.45, 1.0]);
        let z: Vec<usize> = (0..6).collect();
        let mut r = ramsey_decompose(&s, &z, 1.2, 3).unwrap();
        std::mem::swap(&mut r.q, &mut r.qbar);
        assert!(!oracle_check_ramsey(&s, &z, 1.2, 3, &r));
    }
}
