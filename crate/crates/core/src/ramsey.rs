//! One annulus split of a weighted finite set.
//!
//! Around the center `x` maximizing `μ(B(x,Δ/8) ∩ Z) / μ(B°(x,Δ/4) ∩ Z)` the
//! rings `H_i = B(x, (1+i/t)Δ/8) ∩ Z` (`i < t`) and `H_t = B°(x,Δ/4) ∩ Z`
//! grow from the core to the quarter ball. The first ring whose mass grows by
//! at most the geometric-mean factor `(μ(H_t)/μ(H_0))^{1/t}` becomes the cut:
//! everything strictly inside it is `Q̄`, the rest is `Q`, and the previous
//! ring is the dense part `P`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{mu_delta, set_diameter, set_distance, BallKind, MeasuredMetric};

/// Relative slack used when asserting the split's inequalities.
pub const RAMSEY_SLACK: f64 = 1e-12;

const PARALLEL_THRESHOLD: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseyResult {
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub qbar: Vec<usize>,
    pub center: usize,
    pub ring_index: usize,
    pub annuli: Vec<Vec<usize>>,
    pub delta: f64,
    pub t: usize,
    /// `μ^Δ(Z)`, reused by callers that normalize by it.
    pub mu_star: f64,
    /// Whether some candidate center had an empty-mass quarter ball, so the
    /// `0/0 = 0` convention decided its score.
    pub zero_over_zero: bool,
    /// Whether no ring met the growth condition exactly (only possible
    /// through rounding) and the ring with the smallest growth was used.
    pub ring_fallback: bool,
}

fn ring_radius(i: usize, t: usize, delta: f64) -> f64 {
    (1.0 + i as f64 / t as f64) * delta / 8.0
}

fn ball_mass<M: MeasuredMetric + ?Sized>(space: &M, z: &[usize], x: usize, r: f64, kind: BallKind) -> f64 {
    z.iter()
        .filter(|&&y| kind.contains(space.dist(x, y), r))
        .map(|&y| space.weight(y))
        .sum()
}

/// Splits `z` at scale `delta`. Requires `|Z| >= 2`, `0 < Δ < 2·diam(Z)`,
/// `t >= 2` and `μ(Z) > 0`; every conclusion of the split is asserted before
/// returning and a failure surfaces as [`Error::Invariant`].
pub fn ramsey_decompose<M: MeasuredMetric + ?Sized>(
    space: &M,
    z: &[usize],
    delta: f64,
    t: usize,
) -> Result<RamseyResult> {
    if z.len() < 2 {
        return Err(Error::Precondition(format!(
            "split needs at least 2 points, got {}",
            z.len()
        )));
    }
    if let Some(&p) = z.iter().find(|&&p| p >= space.len()) {
        return Err(Error::UnknownPoint(format!("index {p}")));
    }
    if t < 2 {
        return Err(Error::Precondition(format!("t = {t} must be at least 2")));
    }
    let diam = set_diameter(space, z)?;
    if !(delta > 0.0 && delta < 2.0 * diam) {
        return Err(Error::Precondition(format!(
            "delta {delta} outside (0, 2·diam = {})",
            2.0 * diam
        )));
    }
    let total = space.weight_of(z);
    if !(total > 0.0) {
        return Err(Error::Precondition("set has zero weight".into()));
    }

    let score = |x: usize| {
        let core = ball_mass(space, z, x, delta / 8.0, BallKind::Closed);
        let quarter = ball_mass(space, z, x, delta / 4.0, BallKind::Open);
        if quarter == 0.0 {
            (0.0, true)
        } else {
            (core / quarter, false)
        }
    };
    let scores: Vec<(f64, bool)> = if z.len() >= PARALLEL_THRESHOLD {
        z.par_iter().map(|&x| score(x)).collect()
    } else {
        z.iter().map(|&x| score(x)).collect()
    };
    let mut best = 0;
    for k in 1..z.len() {
        if scores[k].0 > scores[best].0 {
            best = k;
        }
    }
    let zero_over_zero = scores.iter().any(|s| s.1);
    let x = z[best];

    let annuli: Vec<Vec<usize>> = (0..=t)
        .map(|i| {
            let (r, kind) = if i < t {
                (ring_radius(i, t, delta), BallKind::Closed)
            } else {
                (delta / 4.0, BallKind::Open)
            };
            z.iter()
                .copied()
                .filter(|&y| kind.contains(space.dist(x, y), r))
                .collect()
        })
        .collect();
    let mass: Vec<f64> = annuli.iter().map(|h| space.weight_of(h)).collect();
    if !(mass[0] > 0.0) {
        return Err(Error::Invariant(format!("core ball around center {x} has no mass")));
    }
    let growth = (mass[t] / mass[0]).powf(1.0 / t as f64);
    let (ring_index, ring_fallback) = match (1..=t).find(|&i| mass[i] <= mass[i - 1] * growth) {
        Some(i) => (i, false),
        None => {
            let i = (1..=t)
                .min_by(|&a, &b| (mass[a] / mass[a - 1]).total_cmp(&(mass[b] / mass[b - 1])))
                .expect("t >= 2");
            (i, true)
        }
    };

    let cut = if ring_index < t {
        ring_radius(ring_index, t, delta)
    } else {
        delta / 4.0
    };
    let (qbar, q): (Vec<usize>, Vec<usize>) = z.iter().partition(|&&y| space.dist(x, y) < cut);
    let p = annuli[ring_index - 1].clone();
    let mu_star = mu_delta(space, z, delta)?;

    let result = RamseyResult {
        p,
        q,
        qbar,
        center: x,
        ring_index,
        annuli,
        delta,
        t,
        mu_star,
        zero_over_zero,
        ring_fallback,
    };
    assert_conclusions(space, &result)?;
    Ok(result)
}

fn assert_conclusions<M: MeasuredMetric + ?Sized>(space: &M, r: &RamseyResult) -> Result<()> {
    let tf = r.t as f64;
    let slack = |bound: f64| bound * RAMSEY_SLACK;
    let fail = |what: String| Err(Error::Invariant(format!("split at center {}: {what}", r.center)));
    let mu_p = space.weight_of(&r.p);
    if !(mu_p > 0.0) {
        return fail("dense part has no weight".into());
    }
    if r.q.is_empty() {
        return fail("remainder is empty".into());
    }
    let sep = set_distance(space, &r.p, &r.q)?;
    let need = r.delta / (8.0 * tf);
    if sep < need - slack(need) {
        return fail(format!("d(P,Q) = {sep} < Δ/(8t) = {need}"));
    }
    let dq = set_diameter(space, &r.qbar)?;
    if dq > r.delta / 2.0 + slack(r.delta) {
        return fail(format!("diam(Q̄) = {dq} > Δ/2"));
    }
    let dp = set_diameter(space, &r.p)?;
    let bound = (0.5 - 0.25 / tf) * r.delta;
    if dp > bound + slack(bound) {
        return fail(format!("diam(P) = {dp} > (1/2 − 1/(4t))Δ = {bound}"));
    }
    let rhs = space.weight_of(&r.qbar) * (mu_delta(space, &r.qbar, r.delta / 2.0)? / r.mu_star).powf(1.0 / tf);
    if mu_p < rhs - slack(rhs) {
        return fail(format!("μ(P) = {mu_p} below μ(Q̄)(μ^(Δ/2)(Q̄)/μ^Δ(Z))^(1/t) = {rhs}"));
    }
    Ok(())
}

/// `a / b` with `0/0 = 0` (and `a/0 = ∞` for `a > 0`).
pub(crate) fn ratio_00(a: f64, b: f64) -> f64 {
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

/// Evaluates `μ(P)/μ^{Δ/2}(Q̄)^{1/t} + μ(Q)/μ^Δ(Z)^{1/t} >= μ(Z)/μ^Δ(Z)^{1/t}`
/// with `0/0 = 0` and relative slack [`RAMSEY_SLACK`].
pub fn check_corollary<M: MeasuredMetric + ?Sized>(result: &RamseyResult, space: &M, z: &[usize]) -> Result<bool> {
    let mut sorted_z = z.to_vec();
    sorted_z.sort_unstable();
    let mut parts: Vec<usize> = result.q.iter().chain(&result.qbar).copied().collect();
    parts.sort_unstable();
    if parts != sorted_z {
        return Err(Error::Mismatch("Q and Q̄ do not partition Z".into()));
    }
    if result.p.iter().any(|p| sorted_z.binary_search(p).is_err()) {
        return Err(Error::Mismatch("P is not a subset of Z".into()));
    }
    let inv_t = 1.0 / result.t as f64;
    let mu_z_star = mu_delta(space, z, result.delta)?;
    let mu_qbar_half = if result.qbar.is_empty() {
        0.0
    } else {
        mu_delta(space, &result.qbar, result.delta / 2.0)?
    };
    let lhs = ratio_00(space.weight_of(&result.p), mu_qbar_half.powf(inv_t))
        + ratio_00(space.weight_of(&result.q), mu_z_star.powf(inv_t));
    let rhs = ratio_00(space.weight_of(z), mu_z_star.powf(inv_t));
    Ok(lhs >= rhs - rhs * RAMSEY_SLACK)
}
