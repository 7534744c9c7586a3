//! End-to-end extraction and the bound verifiers.
//!
//! [`um_skeleton`] chains net-tree, skeleton, trimming and measure induction
//! and checks the result: pairwise distortion over the support, the growth
//! bound `ν(B(x,r)) <= λ̂^{2/t} μ(B(x,(32t+1)r))^{1−1/t}` and the shrink bound
//! `ν(B(y,r)) >= (λ̂^{−2/t}/2) μ(B(x′, r/(5120t)))^{1−1/t}` for a witness `x′`
//! with `B(x′, r/(5120t)) ⊆ B(y,r)`. [`dvoretzky_extract`] then lowers the
//! exponent of the skeleton measure to a target `β` by a second trim.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{doubling_upper, MeasuredMetric, MetricMeasureSpace, RegularityProfile};
use crate::net_tree::{build_net_tree, NetTree};
use crate::report::ValidationReport;
use crate::skeleton::{build_skeleton, SkeletonTree, BALL_INCLUSION_DIVISOR};
use crate::tree_measure::{
    effective_delta, induce_measure, trim_balanced, SkeletonMeasure, TrimmedTree, UltrametricTree,
};

/// Relative slack on the growth and shrink comparisons.
pub const BOUND_TOLERANCE: f64 = 1e-9;
/// Relative slack on the lower distortion bound `d <= ρ`.
pub const DISTORTION_SLACK: f64 = 1e-12;
/// Default tolerance on fitted exponents.
pub const DEFAULT_EXPONENT_TOLERANCE: f64 = 0.15;
const REGRESSION_RADII: usize = 24;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    /// Tightest ratio realized on the instance.
    #[default]
    Effective,
    /// `λ̂^{−2/t}` from the doubling estimate.
    Lambda,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub delta_mode: DeltaMode,
    pub concentric_probe: bool,
    /// Keep every verdict row (for CSV export), not only failures.
    pub keep_rows: bool,
    /// Use this doubling estimate instead of computing one.
    pub lambda_hat: Option<u64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            delta_mode: DeltaMode::Effective,
            concentric_probe: false,
            keep_rows: false,
            lambda_hat: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub center: usize,
    pub radius: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Positive when the inequality holds.
    pub margin: f64,
    pub witness: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub checked: usize,
    pub passed: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictTable {
    pub inequality: String,
    /// Number of `(center, radius)` pairs covered.
    pub checked: usize,
    pub failures: Vec<Verdict>,
    /// Verdict with the smallest relative margin.
    pub worst: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Verdict>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentric: Option<ProbeStats>,
}

impl VerdictTable {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn absorb(&mut self, part: VerdictTable) {
        self.checked += part.checked;
        self.failures.extend(part.failures);
        if let Some(w) = part.worst {
            if self.worst.as_ref().is_none_or(|cur| relative(&w) < relative(cur)) {
                self.worst = Some(w);
            }
        }
        if let Some(rows) = part.rows {
            self.rows.get_or_insert_with(Vec::new).extend(rows);
        }
        if let Some(p) = part.concentric {
            let c = self.concentric.get_or_insert_with(ProbeStats::default);
            c.checked += p.checked;
            c.passed += p.passed;
        }
    }

    fn record(&mut self, v: Verdict, ok: bool, keep_rows: bool) {
        self.checked += 1;
        if self.worst.as_ref().is_none_or(|cur| relative(&v) < relative(cur)) {
            self.worst = Some(v.clone());
        }
        if keep_rows {
            self.rows.get_or_insert_with(Vec::new).push(v.clone());
        }
        if !ok {
            self.failures.push(v);
        }
    }
}

fn relative(v: &Verdict) -> f64 {
    let scale = v.lhs.abs().max(v.rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        v.margin / scale
    }
}

fn ge_rel(a: f64, b: f64) -> bool {
    a >= b || b - a <= BOUND_TOLERANCE * a.abs().max(b.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub space: String,
    pub n_points: usize,
    pub subset: Vec<usize>,
    pub measure: SkeletonMeasure,
    pub t: usize,
    pub lambda_hat: u64,
    pub delta_mode: DeltaMode,
    pub delta_param: f64,
    /// `max ρ/d` over support pairs (1 for a single point).
    pub distortion: f64,
    pub distortion_bound: f64,
    pub distortion_violations: usize,
    pub growth_check: VerdictTable,
    pub shrink_check: VerdictTable,
    pub regularity: Option<RegularityProfile>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub target_exponent: Option<f64>,
    pub exponent_within_tolerance: Option<bool>,
    pub degenerate: bool,
    pub runtime_ms: u64,
}

impl ExtractionReport {
    pub fn all_bounds_hold(&self) -> bool {
        self.distortion_violations == 0 && self.growth_check.passed() && self.shrink_check.passed()
    }
}

/// Everything a skeleton run produces.
#[derive(Clone, Debug)]
pub struct SkeletonRun {
    pub net: NetTree,
    pub skeleton: SkeletonTree,
    pub trimmed: TrimmedTree,
    pub measure: SkeletonMeasure,
    pub report: ExtractionReport,
}

/// Net-tree → skeleton → trim → measure, followed by the distortion, growth
/// and shrink verifiers.
pub fn um_skeleton(space: &MetricMeasureSpace, t: usize, options: &PipelineOptions) -> Result<SkeletonRun> {
    let start = Instant::now();
    if t < 2 {
        return Err(Error::InvalidParameter(format!("t = {t} must be at least 2")));
    }
    let lambda_hat = options.lambda_hat.unwrap_or_else(|| doubling_upper(space));
    let net = build_net_tree(space)?;
    let skeleton = build_skeleton(space, &net, t)?;
    let tree = skeleton.to_ultrametric();
    let xi = skeleton.xi();
    let delta_param = match options.delta_mode {
        DeltaMode::Effective => effective_delta(&tree, &xi),
        DeltaMode::Lambda => (lambda_hat as f64).powf(-2.0 / t as f64),
    };
    let trimmed = trim_balanced(&tree, &xi, delta_param)?;
    let measure = induce_measure(&trimmed, space.len())?;

    let (distortion, dist_report) = distortion_check(space, &trimmed, 16.0 * t as f64);
    let growth_check = verify_growth(space, &measure, t, lambda_hat as f64, options.keep_rows);
    let shrink_check = verify_shrink(space, &trimmed, &measure, t, lambda_hat as f64, options);
    let report = ExtractionReport {
        space: space.name().to_string(),
        n_points: space.len(),
        subset: measure.support.clone(),
        measure: measure.clone(),
        t,
        lambda_hat,
        delta_mode: options.delta_mode,
        delta_param,
        distortion,
        distortion_bound: 16.0 * t as f64,
        distortion_violations: dist_report.len(),
        growth_check,
        shrink_check,
        regularity: None,
        alpha: None,
        beta: None,
        target_exponent: None,
        exponent_within_tolerance: None,
        degenerate: measure.support.len() <= 1,
        runtime_ms: start.elapsed().as_millis() as u64,
    };
    Ok(SkeletonRun {
        net,
        skeleton,
        trimmed,
        measure,
        report,
    })
}

/// `max ρ/d` over pairs of kept leaf points, with a report of pairs breaking
/// `d <= ρ` (relative slack [`DISTORTION_SLACK`]) or `ρ <= bound·d` (exact).
pub fn distortion_check(space: &MetricMeasureSpace, trimmed: &TrimmedTree, bound: f64) -> (f64, ValidationReport) {
    let tree = &trimmed.tree;
    let below = tree.points_below(&trimmed.kept);
    let nodes: Vec<usize> = (0..tree.len()).filter(|&u| trimmed.kept[u]).collect();
    let parts: Vec<(f64, ValidationReport)> = nodes
        .into_par_iter()
        .map(|u| {
            let kids = trimmed.kept_children(u);
            let rho = tree.label[u];
            let mut worst = 1.0f64;
            let mut report = ValidationReport::new();
            for (i, &a) in kids.iter().enumerate() {
                for &b in &kids[i + 1..] {
                    for &x in &below[a] {
                        for &y in &below[b] {
                            let d = space.dist(x, y);
                            if d > rho && d - rho > DISTORTION_SLACK * d {
                                report.push("distortion-lower", format!("d = {d} > ρ = {rho}"), vec![x, y]);
                            }
                            if rho > bound * d {
                                report.push(
                                    "distortion-upper",
                                    format!("ρ = {rho} > {bound}·d = {}", bound * d),
                                    vec![x, y],
                                );
                            }
                            worst = worst.max(rho / d);
                        }
                    }
                }
            }
            (worst, report)
        })
        .collect();
    let mut worst = 1.0f64;
    let mut report = ValidationReport::new();
    for (w, r) in parts {
        worst = worst.max(w);
        report.extend(r);
    }
    (worst, report)
}

/// Distances from `x` sorted ascending with prefix sums of `μ` and `ν`.
struct Sweep {
    dist: Vec<f64>,
    mu: Vec<f64>,
    nu: Vec<f64>,
}

impl Sweep {
    fn new(space: &MetricMeasureSpace, nu: &[f64], x: usize) -> Self {
        let mut order: Vec<(f64, usize)> = space.points().map(|y| (space.dist(x, y), y)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut mu = Vec::with_capacity(order.len());
        let mut nus = Vec::with_capacity(order.len());
        let (mut m, mut v) = (0.0, 0.0);
        for &(_, y) in &order {
            m += space.weight(y);
            v += nu[y];
            mu.push(m);
            nus.push(v);
        }
        Self {
            dist: order.into_iter().map(|o| o.0).collect(),
            mu,
            nu: nus,
        }
    }

    /// Number of points in the closed ball of radius `r`.
    fn count(&self, r: f64) -> usize {
        self.dist.partition_point(|&d| d <= r)
    }

    fn mu(&self, r: f64) -> f64 {
        match self.count(r) {
            0 => 0.0,
            k => self.mu[k - 1],
        }
    }

    fn nu(&self, r: f64) -> f64 {
        match self.count(r) {
            0 => 0.0,
            k => self.nu[k - 1],
        }
    }

    /// `0` and every distinct distance from the center.
    fn radii(&self) -> Vec<f64> {
        let mut r = vec![0.0];
        for &d in &self.dist {
            if d > *r.last().expect("non-empty") {
                r.push(d);
            }
        }
        r
    }
}

/// Checks `ν(B(x,r)) <= λ̂^{2/t} μ(B(x,(32t+1)r))^{1−1/t}` at every center and
/// every radius in `{0} ∪ {d(x,y)}`. Closed balls only change at these radii
/// and the right side is non-decreasing, so this covers every `r >= 0`.
pub fn verify_growth(
    space: &MetricMeasureSpace,
    measure: &SkeletonMeasure,
    t: usize,
    lambda_hat: f64,
    keep_rows: bool,
) -> VerdictTable {
    let tf = t as f64;
    let lam = lambda_hat.powf(2.0 / tf);
    let exponent = 1.0 - 1.0 / tf;
    let factor = 32.0 * tf + 1.0;
    let parts: Vec<VerdictTable> = space
        .points()
        .into_par_iter()
        .map(|x| {
            let sweep = Sweep::new(space, &measure.nu, x);
            let mut table = VerdictTable::default();
            for r in sweep.radii() {
                let lhs = sweep.nu(r);
                let rhs = lam * sweep.mu(factor * r).powf(exponent);
                let v = Verdict {
                    center: x,
                    radius: r,
                    lhs,
                    rhs,
                    margin: rhs - lhs,
                    witness: None,
                };
                let ok = ge_rel(rhs, lhs);
                table.record(v, ok, keep_rows);
            }
            table
        })
        .collect();
    let mut table = VerdictTable {
        inequality: "growth: ν(B(x,r)) <= λ̂^(2/t) μ(B(x,(32t+1)r))^(1-1/t)".into(),
        ..Default::default()
    };
    for p in parts {
        table.absorb(p);
    }
    table
}

/// Checks `ν(B(y,r)) >= (λ̂^{−2/t}/2) μ(B(x′, r/(5120t)))^{1−1/t}` with
/// `B(x′, r/(5120t)) ⊆ B(y,r)` for every support point `y` and every `r >= 0`.
///
/// Radii are grouped by the kept ancestors `v` of `y`'s leaf: on
/// `[Δ(v), Δ(parent(v)))` the witness is `rep(v)`, and the interval passes at
/// once if `B(rep v, Δ(parent)/(5120t)) ⊆ B(y, Δ(v))` and the inequality
/// holds between `ν(B(y, Δ(v)))` and that largest witness ball. Otherwise each
/// realized radius in the interval is checked on its own, trying `rep(v)` and
/// then every point as witness. The last interval starts at the root label and
/// is unbounded; it uses `μ(X)` on the right.
pub fn verify_shrink(
    space: &MetricMeasureSpace,
    trimmed: &TrimmedTree,
    measure: &SkeletonMeasure,
    t: usize,
    lambda_hat: f64,
    options: &PipelineOptions,
) -> VerdictTable {
    let tf = t as f64;
    let coef = lambda_hat.powf(-2.0 / tf) / 2.0;
    let exponent = 1.0 - 1.0 / tf;
    let divisor = BALL_INCLUSION_DIVISOR * tf;
    let tree = &trimmed.tree;
    let leaves = tree.leaf_of_points();
    let total = space.total_weight();

    let parts: Vec<VerdictTable> = measure
        .support
        .par_iter()
        .map(|&y| {
            let sweep = Sweep::new(space, &measure.nu, y);
            let radii = sweep.radii();
            let mut table = VerdictTable::default();
            // kept ancestors of y's leaf, bottom-up
            let mut chain = Vec::new();
            let mut v = leaves[y].expect("support points own kept leaves");
            loop {
                chain.push(v);
                match tree.parent[v] {
                    Some(p) => v = p,
                    None => break,
                }
            }
            for &v in &chain {
                let lo = tree.label[v];
                let hi = tree.parent[v].map_or(f64::INFINITY, |p| tree.label[p]);
                if !(lo < hi) {
                    continue;
                }
                let in_interval: Vec<f64> = radii.iter().copied().filter(|&r| r >= lo && r < hi).collect();
                if in_interval.is_empty() {
                    continue;
                }
                let witness = tree.rep[v];
                let lhs = sweep.nu(lo);
                let (contained, witness_mass) = if hi.is_finite() {
                    let wr = hi / divisor;
                    let ball = space
                        .ball(witness, wr, crate::metric::BallKind::Closed)
                        .unwrap_or_default();
                    let inside = ball.iter().all(|&z| space.dist(y, z) <= lo);
                    (inside, space.weight_of(&ball))
                } else {
                    (true, total)
                };
                let rhs = coef * witness_mass.powf(exponent);
                if contained && ge_rel(lhs, rhs) {
                    for &r in &in_interval {
                        let v = Verdict {
                            center: y,
                            radius: r,
                            lhs: sweep.nu(r),
                            rhs,
                            margin: sweep.nu(r) - rhs,
                            witness: Some(witness),
                        };
                        table.record(v, true, options.keep_rows);
                    }
                    continue;
                }
                for &r in &in_interval {
                    let verdict = pointwise_shrink(space, &sweep, y, r, witness, coef, exponent, divisor);
                    let ok = verdict.margin >= 0.0 || ge_rel(verdict.lhs, verdict.rhs);
                    let ok = ok && verdict.witness.is_some();
                    table.record(verdict, ok, options.keep_rows);
                }
            }
            if options.concentric_probe {
                let mut probe = ProbeStats::default();
                for &r in &radii {
                    let rhs = coef * sweep.mu(r / divisor).powf(exponent);
                    probe.checked += 1;
                    if ge_rel(sweep.nu(r), rhs) {
                        probe.passed += 1;
                    }
                }
                table.concentric = Some(probe);
            }
            table
        })
        .collect();
    let mut table = VerdictTable {
        inequality: "shrink: ν(B(y,r)) >= (λ̂^(-2/t)/2) μ(B(x',r/(5120t)))^(1-1/t)".into(),
        ..Default::default()
    };
    for p in parts {
        table.absorb(p);
    }
    table
}

#[allow(clippy::too_many_arguments)]
fn pointwise_shrink(
    space: &MetricMeasureSpace,
    sweep: &Sweep,
    y: usize,
    r: f64,
    preferred: usize,
    coef: f64,
    exponent: f64,
    divisor: f64,
) -> Verdict {
    let lhs = sweep.nu(r);
    let wr = r / divisor;
    let try_witness = |x: usize| -> Option<f64> {
        let mut mass = 0.0;
        for z in space.points() {
            if space.dist(x, z) <= wr {
                if space.dist(y, z) > r {
                    return None;
                }
                mass += space.weight(z);
            }
        }
        Some(coef * mass.powf(exponent))
    };
    let mut best: Option<(usize, f64)> = None;
    for x in std::iter::once(preferred).chain(space.points()) {
        if let Some(rhs) = try_witness(x) {
            if ge_rel(lhs, rhs) {
                return Verdict {
                    center: y,
                    radius: r,
                    lhs,
                    rhs,
                    margin: lhs - rhs,
                    witness: Some(x),
                };
            }
            if best.is_none_or(|(_, b)| rhs < b) {
                best = Some((x, rhs));
            }
        }
    }
    let (w, rhs) = best.map_or((None, f64::INFINITY), |(x, r)| (Some(x), r));
    Verdict {
        center: y,
        radius: r,
        lhs,
        rhs,
        margin: lhs - rhs,
        witness: w,
    }
}

/// Least-squares fit of `log ν(B(x,r))` against `log r` over support centers
/// and `samples` geometrically spaced radii in `range` (closed balls, masses
/// from `mass` indexed by point), with `c_lower`/`c_upper` the extreme values
/// of `ν(B)/r^α` over the samples.
pub fn estimate_regularity<D>(
    support: &[usize],
    mass: &[f64],
    dist: D,
    range: (f64, f64),
    samples: usize,
) -> Result<RegularityProfile>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    let (lo, hi) = range;
    if support.len() < 2 {
        return Err(Error::Precondition("regularity needs at least 2 support points".into()));
    }
    if !(lo > 0.0 && hi > lo) || samples < 2 {
        return Err(Error::InvalidParameter(format!("empty radius range [{lo}, {hi}]")));
    }
    let step = (hi / lo).log2() / (samples - 1) as f64;
    let radii: Vec<f64> = (0..samples)
        .map(|i| match i {
            0 => lo,
            i if i + 1 == samples => hi,
            i => lo * (i as f64 * step).exp2(),
        })
        .collect();
    let pairs: Vec<(f64, f64)> = support
        .par_iter()
        .flat_map_iter(|&x| {
            let mut ds: Vec<(f64, f64)> = support.iter().map(|&y| (dist(x, y), mass[y])).collect();
            ds.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut prefix = Vec::with_capacity(ds.len());
            let mut acc = 0.0;
            for &(_, m) in &ds {
                acc += m;
                prefix.push(acc);
            }
            let ds: Vec<f64> = ds.into_iter().map(|d| d.0).collect();
            radii
                .iter()
                .map(move |&r| {
                    let k = ds.partition_point(|&d| d <= r);
                    (r, if k == 0 { 0.0 } else { prefix[k - 1] })
                })
                .collect::<Vec<_>>()
        })
        .filter(|&(_, m)| m > 0.0)
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Precondition("no ball with positive mass in range".into()));
    }
    let n = pairs.len() as f64;
    let (sx, sy) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, m)| (a + r.ln(), b + m.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(r, m) in &pairs {
        sxx += (r.ln() - mx) * (r.ln() - mx);
        sxy += (r.ln() - mx) * (m.ln() - my);
    }
    if sxx == 0.0 {
        return Err(Error::Precondition("radius range collapses to a point".into()));
    }
    let alpha = sxy / sxx;
    let ratios = pairs.iter().map(|&(r, m)| m / r.powf(alpha));
    let c_lower = ratios.clone().fold(f64::INFINITY, f64::min);
    let c_upper = ratios.fold(0.0, f64::max);
    Ok(RegularityProfile {
        alpha,
        c_lower,
        c_upper,
        fit_range: range,
    })
}

/// Default regression band: nine times the smallest positive distance up to a
/// ninth of the diameter (the end scales carry truncation effects).
pub fn default_band(space: &MetricMeasureSpace) -> Option<(f64, f64)> {
    let lo = 9.0 * space.min_positive_distance()?;
    let hi = space.diameter() / 9.0;
    (lo < hi).then_some((lo, hi))
}

fn fit_on_space(
    space: &MetricMeasureSpace,
    measure: &SkeletonMeasure,
    band: Option<(f64, f64)>,
) -> Option<RegularityProfile> {
    let band = band.or_else(|| default_band(space))?;
    estimate_regularity(
        &measure.support,
        &measure.nu,
        |a, b| space.dist(a, b),
        band,
        REGRESSION_RADII,
    )
    .ok()
}

/// Runs [`um_skeleton`] and fits the exponent of the resulting measure,
/// flagging whether it lies within `tolerance` of `(1 − 1/t)α`.
pub fn extract_near_alpha(
    space: &MetricMeasureSpace,
    t: usize,
    alpha: f64,
    tolerance: f64,
    band: Option<(f64, f64)>,
    options: &PipelineOptions,
) -> Result<SkeletonRun> {
    let start = Instant::now();
    let mut run = um_skeleton(space, t, options)?;
    let target = (1.0 - 1.0 / t as f64) * alpha;
    let report = &mut run.report;
    report.alpha = Some(alpha);
    report.target_exponent = Some(target);
    if !report.degenerate {
        report.regularity = fit_on_space(space, &run.measure, band);
        report.exponent_within_tolerance = report
            .regularity
            .as_ref()
            .map(|p| (p.alpha - target).abs() <= tolerance);
    }
    report.runtime_ms = start.elapsed().as_millis() as u64;
    Ok(run)
}

/// Lowers the exponent of an additive leaf measure on a labeled tree from
/// `alpha` to `beta`: `ξ′ = (node mass)^{β/α}`, trimmed with `δ = 1`.
pub fn extract_beta_regular_um(
    tree: &UltrametricTree,
    nu: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<(TrimmedTree, SkeletonMeasure)> {
    if !(alpha > 0.0 && beta > 0.0 && beta <= alpha) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < beta <= alpha, got alpha {alpha}, beta {beta}"
        )));
    }
    let keep_all = vec![true; tree.len()];
    let below = tree.points_below(&keep_all);
    let ratio = beta / alpha;
    let xi: Vec<f64> = below
        .iter()
        .map(|pts| {
            let m: f64 = pts.iter().map(|&p| nu.get(p).copied().unwrap_or(0.0)).sum();
            m.powf(ratio)
        })
        .collect();
    let trimmed = trim_balanced(tree, &xi, 1.0)?;
    let measure = induce_measure(&trimmed, nu.len().max(tree.point_bound()))?;
    Ok((trimmed, measure))
}

/// `t = ⌈α/(α−β)⌉`, absorbing a relative rounding error of `1e-9` in the
/// quotient so that e.g. `β = α/2` gives 2.
pub fn dvoretzky_t(alpha: f64, beta: f64) -> Result<usize> {
    if !(alpha > 0.0 && beta > 0.0 && beta < alpha) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < beta < alpha, got alpha {alpha}, beta {beta}"
        )));
    }
    let q = alpha / (alpha - beta);
    let t = (q * (1.0 - 1e-9)).ceil().max(2.0);
    Ok(t as usize)
}

/// Result of [`dvoretzky_extract`]: the skeleton run it went through plus the
/// `β`-regular subset.
#[derive(Clone, Debug)]
pub struct DvoretzkyRun {
    pub skeleton: SkeletonRun,
    pub trimmed: TrimmedTree,
    /// Node ids of the skeleton run's kept subtree, indexed like `trimmed`.
    pub node_map: Vec<usize>,
    pub measure: SkeletonMeasure,
    pub report: ExtractionReport,
}

/// Chooses `t = ⌈α/(α−β)⌉`, builds the skeleton at that `t` and lowers its
/// exponent `(1−1/t)α` to `β`. Degenerate outputs (at most one point) are
/// reported, not raised.
pub fn dvoretzky_extract(
    space: &MetricMeasureSpace,
    alpha: f64,
    beta: f64,
    tolerance: f64,
    band: Option<(f64, f64)>,
    options: &PipelineOptions,
) -> Result<DvoretzkyRun> {
    let start = Instant::now();
    let t = dvoretzky_t(alpha, beta)?;
    let run = um_skeleton(space, t, options)?;
    let alpha_prime = (1.0 - 1.0 / t as f64) * alpha;
    let (sub, node_map) = run.trimmed.kept_subtree();
    let (trimmed, measure) = extract_beta_regular_um(&sub, &run.measure.nu, alpha_prime, beta)?;
    let measure = SkeletonMeasure {
        nu: {
            let mut nu = measure.nu;
            nu.resize(space.len(), 0.0);
            nu
        },
        support: measure.support,
    };
    let (distortion, dist_report) = distortion_check(space, &trimmed, 16.0 * t as f64);
    let degenerate = measure.support.len() <= 1;
    let regularity = if degenerate {
        None
    } else {
        fit_on_space(space, &measure, band)
    };
    let report = ExtractionReport {
        space: space.name().to_string(),
        n_points: space.len(),
        subset: measure.support.clone(),
        measure: measure.clone(),
        t,
        lambda_hat: run.report.lambda_hat,
        delta_mode: run.report.delta_mode,
        delta_param: 1.0,
        distortion,
        distortion_bound: 16.0 * t as f64,
        distortion_violations: dist_report.len(),
        growth_check: run.report.growth_check.clone(),
        shrink_check: run.report.shrink_check.clone(),
        exponent_within_tolerance: regularity.as_ref().map(|p| (p.alpha - beta).abs() <= tolerance),
        regularity,
        alpha: Some(alpha),
        beta: Some(beta),
        target_exponent: Some(beta),
        degenerate,
        runtime_ms: start.elapsed().as_millis() as u64,
    };
    Ok(DvoretzkyRun {
        skeleton: run,
        trimmed,
        node_map,
        measure,
        report,
    })
}

/// Exact constants `(c, C)` with `c r^α <= m(v) <= C r^α` for every ball of a
/// labeled tree: the ball of radius `r ∈ [Δ(v), Δ(parent v))` around a point
/// below `v` is `v`'s leaf set. Only radii in `[smallest positive label,
/// Δ(root))` are covered.
pub fn exact_ball_constants(tree: &UltrametricTree, mass: &[f64], alpha: f64) -> Option<(f64, f64)> {
    let floor = tree
        .label
        .iter()
        .copied()
        .filter(|&l| l > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return None;
    }
    let (mut c, mut big) = (f64::INFINITY, 0.0f64);
    for v in 0..tree.len() {
        let Some(p) = tree.parent[v] else { continue };
        let lo = tree.label[v].max(floor);
        let hi = tree.label[p];
        if !(lo < hi) {
            continue;
        }
        c = c.min(mass[v] / hi.powf(alpha));
        big = big.max(mass[v] / lo.powf(alpha));
    }
    c.is_finite().then_some((c, big))
}

/// Checks `0.5 c^{β/α} r^β <= ν′(B) <= C^{β/α} r^β` for every ball of the
/// kept subtree in the radius range of [`exact_ball_constants`], with a
/// relative slack of `1e-12`.
pub fn verify_um_ball_bounds(trimmed: &TrimmedTree, constants: (f64, f64), alpha: f64, beta: f64) -> ValidationReport {
    let tree = &trimmed.tree;
    let (c, big) = constants;
    let ratio = beta / alpha;
    let floor = tree
        .label
        .iter()
        .copied()
        .filter(|&l| l > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut report = ValidationReport::new();
    for v in 0..tree.len() {
        if !trimmed.kept[v] {
            continue;
        }
        let Some(p) = tree.parent[v] else { continue };
        let lo = tree.label[v].max(floor);
        let hi = tree.label[p];
        if !(lo < hi) {
            continue;
        }
        let m = trimmed.sigma[v];
        let lower = 0.5 * c.powf(ratio) * hi.powf(beta);
        let upper = big.powf(ratio) * lo.powf(beta);
        if m < lower * (1.0 - 1e-12) {
            report.push(
                "ball-lower",
                format!("ν′ = {m} < 0.5 c^(β/α) r^β = {lower} near r = {hi}"),
                vec![v],
            );
        }
        if m > upper * (1.0 + 1e-12) {
            report.push(
                "ball-upper",
                format!("ν′ = {m} > C^(β/α) r^β = {upper} at r = {lo}"),
                vec![v],
            );
        }
    }
    report
}

/// Complete binary tree of the given depth with labels `2^{-k}` at depth `k`
/// (leaves labeled 0) and uniform leaf mass: an exact dyadic ultrametric of
/// exponent 1.
pub fn dyadic_ultrametric(depth: u32) -> (UltrametricTree, Vec<f64>) {
    let leaves = 1usize << depth;
    let total = 2 * leaves - 1;
    // heap layout: node i has children 2i+1, 2i+2
    let mut parent = vec![None; total];
    let mut label = vec![0.0; total];
    let mut leaf_point = vec![None; total];
    for i in 0..total {
        if i > 0 {
            parent[i] = Some((i - 1) / 2);
        }
        let d = (usize::BITS - (i + 1).leading_zeros() - 1) as i32;
        if i >= leaves - 1 {
            leaf_point[i] = Some(i - (leaves - 1));
        } else {
            label[i] = (-d as f64).exp2();
        }
    }
    let rep: Vec<usize> = (0..total)
        .map(|mut i| {
            while i < leaves - 1 {
                i = 2 * i + 1;
            }
            i - (leaves - 1)
        })
        .collect();
    let tree = UltrametricTree::from_parents(parent, label, leaf_point, rep).expect("well-formed heap");
    (tree, vec![1.0 / leaves as f64; leaves])
}
