//! Finite metric-measure spaces.
//!
//! Points are addressed by their ingestion index. Every space is normalized
//! to diameter 1 when it is built; the pre-normalization diameter is kept in
//! [`MetricMeasureSpace::scale_factor`]. Duplicate locations are merged at
//! ingestion with their weights summed, so distinct indices are always at
//! positive distance.
//!
//! All set-membership comparisons (balls, nets, annuli) are exact on the
//! stored `f64` values.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::ValidationReport;

/// Read access to a finite metric space carrying an atomic measure.
///
/// Implemented by [`MetricMeasureSpace`] and by the projected instances the
/// skeleton construction builds over net-tree vertices.
pub trait MeasuredMetric: Sync {
    fn len(&self) -> usize;
    fn dist(&self, a: usize, b: usize) -> f64;
    fn weight(&self, a: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&p| self.weight(p)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallKind {
    Open,
    Closed,
}

impl BallKind {
    #[inline]
    pub fn contains(self, d: f64, radius: f64) -> bool {
        match self {
            BallKind::Open => d < radius,
            BallKind::Closed => d <= radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Geometry {
    /// Raw coordinates; distances are Euclidean divided by the scale factor.
    Euclidean(Vec<Vec<f64>>),
    /// Row-major normalized distance matrix.
    Matrix(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricMeasureSpace {
    name: String,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    geometry: Geometry,
    weights: Vec<f64>,
    scale_factor: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weight {w} is not a finite non-negative number"
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidParameter(
            "weights must have a finite positive total".into(),
        ));
    }
    Ok(())
}

fn build_index(ids: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(Error::Format(format!("duplicate point id {id:?}")));
        }
    }
    Ok(index)
}

impl MetricMeasureSpace {
    /// Builds a Euclidean space from coordinates. Points with identical
    /// coordinates are merged into the first occurrence.
    pub fn from_coordinates(
        name: impl Into<String>,
        ids: Vec<String>,
        coords: Vec<Vec<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("point set"));
        }
        if ids.len() != coords.len() || weights.len() != coords.len() {
            return Err(Error::Format(format!(
                "{} ids, {} coordinate rows, {} weights",
                ids.len(),
                coords.len(),
                weights.len()
            )));
        }
        let dim = coords[0].len();
        if coords.iter().any(|c| c.len() != dim) {
            return Err(Error::Format("coordinate rows differ in dimension".into()));
        }
        if coords.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite coordinate".into()));
        }
        check_weights(&weights)?;
        build_index(&ids)?;

        // Merge duplicates: sort indices by coordinates, fold equal runs into
        // the earliest ingested index.
        let mut order: Vec<usize> = (0..coords.len()).collect();
        order.sort_by(|&a, &b| {
            coords[a]
                .iter()
                .zip(&coords[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut owner: Vec<usize> = (0..coords.len()).collect();
        for w in order.windows(2) {
            if euclid(&coords[w[0]], &coords[w[1]]) == 0.0 {
                owner[w[1]] = owner[w[0]];
            }
        }
        let mut merged_weight = vec![0.0; coords.len()];
        for (i, &o) in owner.iter().enumerate() {
            merged_weight[o] += weights[i];
        }
        let keep: Vec<usize> = (0..coords.len()).filter(|&i| owner[i] == i).collect();
        let ids: Vec<String> = keep.iter().map(|&i| ids[i].clone()).collect();
        let weights: Vec<f64> = keep.iter().map(|&i| merged_weight[i]).collect();
        let coords: Vec<Vec<f64>> = keep.into_iter().map(|i| coords[i].clone()).collect();

        let diam = (0..coords.len())
            .into_par_iter()
            .map(|i| {
                (i + 1..coords.len())
                    .map(|j| euclid(&coords[i], &coords[j]))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        let scale_factor = if diam > 0.0 { diam } else { 1.0 };
        Ok(Self {
            name: name.into(),
            index: build_index(&ids)?,
            ids,
            geometry: Geometry::Euclidean(coords),
            weights,
            scale_factor,
        })
    }

    /// Builds a space from a dense distance matrix. The matrix is not required
    /// to be a metric (use [`validate_metric`] to audit it), but entries must be
    /// finite and non-negative. Index pairs at distance zero are merged.
    pub fn from_matrix(
        name: impl Into<String>,
        ids: Vec<String>,
        matrix: Vec<Vec<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        Self::from_matrix_scaled(name, ids, matrix, weights, 1.0)
    }

    /// Like [`from_matrix`](Self::from_matrix), with distances already divided
    /// by `prior_scale` (used when re-reading normalized files).
    pub fn from_matrix_scaled(
        name: impl Into<String>,
        ids: Vec<String>,
        matrix: Vec<Vec<f64>>,
        weights: Vec<f64>,
        prior_scale: f64,
    ) -> Result<Self> {
        let n = matrix.len();
        if n == 0 {
            return Err(Error::Empty("point set"));
        }
        if ids.len() != n || weights.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Format(
                "distance matrix must be square and match ids/weights".into(),
            ));
        }
        if matrix.iter().flatten().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Format("distances must be finite and non-negative".into()));
        }
        if !(prior_scale > 0.0 && prior_scale.is_finite()) {
            return Err(Error::InvalidParameter("scale factor must be positive".into()));
        }
        check_weights(&weights)?;
        build_index(&ids)?;

        let mut owner: Vec<usize> = (0..n).collect();
        for i in 0..n {
            if let Some(j) = (0..i).find(|&j| owner[j] == j && (matrix[i][j] == 0.0 || matrix[j][i] == 0.0)) {
                owner[i] = j;
            }
        }
        let keep: Vec<usize> = (0..n).filter(|&i| owner[i] == i).collect();
        let mut merged_weight = vec![0.0; n];
        for (i, &o) in owner.iter().enumerate() {
            merged_weight[o] += weights[i];
        }
        let m = keep.len();
        let mut flat = Vec::with_capacity(m * m);
        for &i in &keep {
            for &j in &keep {
                flat.push(matrix[i][j]);
            }
        }
        let diam = flat.iter().copied().fold(0.0, f64::max);
        let scale = if diam > 0.0 { diam } else { 1.0 };
        if diam > 0.0 {
            flat.iter_mut().for_each(|d| *d /= scale);
        }
        let ids: Vec<String> = keep.iter().map(|&i| ids[i].clone()).collect();
        Ok(Self {
            name: name.into(),
            index: build_index(&ids)?,
            ids,
            geometry: Geometry::Matrix(flat),
            weights: keep.iter().map(|&i| merged_weight[i]).collect(),
            scale_factor: scale * prior_scale,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, p: usize) -> &str {
        &self.ids[p]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownPoint(id.to_string()))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Pre-normalization diameter (1 for a single point).
    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    pub fn coordinates(&self) -> Option<&[Vec<f64>]> {
        match &self.geometry {
            Geometry::Euclidean(c) => Some(c),
            Geometry::Matrix(_) => None,
        }
    }

    /// Normalized distance matrix, row-major (materialized for coordinate spaces).
    pub fn distance_rows(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.dist(i, j)).collect()).collect()
    }

    /// Distance in the original (pre-normalization) units.
    pub fn raw_dist(&self, a: usize, b: usize) -> f64 {
        match &self.geometry {
            Geometry::Euclidean(c) => euclid(&c[a], &c[b]),
            Geometry::Matrix(_) => self.dist(a, b) * self.scale_factor,
        }
    }

    pub fn diameter(&self) -> f64 {
        if self.len() > 1 {
            1.0
        } else {
            0.0
        }
    }

    pub fn points(&self) -> std::ops::Range<usize> {
        0..self.len()
    }

    fn check_point(&self, p: usize) -> Result<()> {
        if p < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownPoint(format!("index {p}")))
        }
    }

    /// `B(center, radius)` over the whole space.
    pub fn ball(&self, center: usize, radius: f64, kind: BallKind) -> Result<Vec<usize>> {
        self.check_point(center)?;
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::InvalidParameter(format!("radius {radius} must be non-negative")));
        }
        Ok(self
            .points()
            .filter(|&y| kind.contains(self.dist(center, y), radius))
            .collect())
    }

    /// Minimum positive pairwise distance (`None` for a single point).
    pub fn min_positive_distance(&self) -> Option<f64> {
        let n = self.len();
        let min = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| self.dist(i, j))
                    .filter(|&d| d > 0.0)
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min);
        min.is_finite().then_some(min)
    }
}

impl MeasuredMetric for MetricMeasureSpace {
    fn len(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    fn dist(&self, a: usize, b: usize) -> f64 {
        match &self.geometry {
            Geometry::Euclidean(c) => {
                if a == b {
                    0.0
                } else {
                    euclid(&c[a], &c[b]) / self.scale_factor
                }
            }
            Geometry::Matrix(m) => m[a * self.ids.len() + b],
        }
    }

    #[inline]
    fn weight(&self, a: usize) -> f64 {
        self.weights[a]
    }
}

/// Maximum pairwise distance within `set`.
pub fn set_diameter<M: MeasuredMetric + ?Sized>(space: &M, set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("set for diameter"));
    }
    let mut diam = 0.0f64;
    for (k, &a) in set.iter().enumerate() {
        for &b in &set[k + 1..] {
            diam = diam.max(space.dist(a, b));
        }
    }
    Ok(diam)
}

/// Minimum cross distance between two sets.
pub fn set_distance<M: MeasuredMetric + ?Sized>(space: &M, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("set for distance"));
    }
    let mut best = f64::INFINITY;
    for &x in a {
        for &y in b {
            best = best.min(space.dist(x, y));
        }
    }
    Ok(best)
}

/// Weight of `B(center, radius) ∩ set`.
pub fn ball_weight_within<M: MeasuredMetric + ?Sized>(
    space: &M,
    set: &[usize],
    center: usize,
    radius: f64,
    kind: BallKind,
) -> f64 {
    set.iter()
        .filter(|&&y| kind.contains(space.dist(center, y), radius))
        .map(|&y| space.weight(y))
        .sum()
}

/// `max_{a ∈ A} μ(B(a, Δ/4) ∩ A)`, the scale-Δ local mass of `A`.
pub fn mu_delta<M: MeasuredMetric + ?Sized>(space: &M, set: &[usize], delta: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("set for mu_delta"));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} must be positive")));
    }
    let r = delta / 4.0;
    Ok(set
        .iter()
        .map(|&a| ball_weight_within(space, set, a, r, BallKind::Closed))
        .fold(0.0, f64::max))
}

/// Audits the metric axioms and the weights. Violations are reported with
/// the witnessing pair or triple; the triangle inequality is checked with a
/// relative slack of `1e-12` to absorb rounding in computed distances.
pub fn validate_metric(space: &MetricMeasureSpace) -> ValidationReport {
    const CAP: usize = 10_000;
    let n = space.len();
    let mut report = ValidationReport::new();
    for p in 0..n {
        let w = space.weight(p);
        if !w.is_finite() || w < 0.0 {
            report.push("weight", format!("weight {w} at point {p}"), vec![p]);
        }
        if space.dist(p, p) != 0.0 {
            report.push("identity", format!("d({p},{p}) = {}", space.dist(p, p)), vec![p]);
        }
        for q in p + 1..n {
            let (dpq, dqp) = (space.dist(p, q), space.dist(q, p));
            if dpq != dqp {
                report.push(
                    "symmetry",
                    format!("d({p},{q}) = {dpq} but d({q},{p}) = {dqp}"),
                    vec![p, q],
                );
            }
            if !(dpq > 0.0) {
                report.push("positivity", format!("d({p},{q}) = {dpq}"), vec![p, q]);
            }
        }
    }
    let triangles: Vec<(usize, usize, usize, f64, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            let mut out = Vec::new();
            for c in 0..n {
                if c == a {
                    continue;
                }
                let dac = space.dist(a, c);
                for b in 0..n {
                    if b == a || b == c {
                        continue;
                    }
                    let via = space.dist(a, b) + space.dist(b, c);
                    if dac > via && dac - via > 1e-12 * dac {
                        out.push((a, b, c, dac, via));
                        if out.len() >= CAP {
                            return out;
                        }
                    }
                }
            }
            out
        })
        .collect();
    for (a, b, c, dac, via) in triangles.into_iter().take(CAP) {
        report.push(
            "triangle",
            format!("d({a},{c}) = {dac} > d({a},{b}) + d({b},{c}) = {via}"),
            vec![a, b, c],
        );
    }
    report
}

/// Greedy first-fit cover of `ball` (listed in order of distance from its
/// center) by pieces of diameter at most `half`.
fn greedy_cover_count<M: MeasuredMetric + ?Sized>(space: &M, ball: &[usize], half: f64) -> usize {
    let mut pieces: Vec<Vec<usize>> = Vec::new();
    for &q in ball {
        match pieces
            .iter_mut()
            .find(|piece| piece.iter().all(|&m| space.dist(q, m) <= half))
        {
            Some(piece) => piece.push(q),
            None => pieces.push(vec![q]),
        }
    }
    pieces.len()
}

/// Number of radii per center above which [`doubling_upper`] subsamples.
pub const EXHAUSTIVE_DOUBLING_LIMIT: usize = 300;
const SAMPLED_RADII_PER_CENTER: usize = 16;
const SAMPLED_CENTERS: usize = 128;

/// Upper estimate `λ̂` of the doubling constant.
///
/// Enumerates balls `B(x, r)` centered at every point with radii from the
/// realized distances from `x`; each ball is covered greedily by pieces of
/// diameter at most half its diameter and `λ̂` is the largest piece count.
/// Since a greedy cover is never smaller than an optimal one, `λ̂` bounds the
/// doubling constant of the enumerated family from above. Spaces with more
/// than [`EXHAUSTIVE_DOUBLING_LIMIT`] points use evenly spaced centers and a
/// geometric subsample of ball sizes per center; see [`doubling_upper_with`].
pub fn doubling_upper(space: &MetricMeasureSpace) -> u64 {
    if space.len() <= EXHAUSTIVE_DOUBLING_LIMIT {
        doubling_upper_with(space, None, None)
    } else {
        doubling_upper_with(space, Some(SAMPLED_CENTERS), Some(SAMPLED_RADII_PER_CENTER))
    }
}

/// [`doubling_upper`] with explicit caps on the number of centers and on the
/// number of radii enumerated per center (`None` = all).
pub fn doubling_upper_with<M: MeasuredMetric + ?Sized>(
    space: &M,
    max_centers: Option<usize>,
    max_radii: Option<usize>,
) -> u64 {
    let n = space.len();
    if n <= 1 {
        return 1;
    }
    let centers: Vec<usize> = match max_centers {
        Some(c) if c < n => {
            let mut v: Vec<usize> = (0..c).map(|i| i * n / c).collect();
            v.dedup();
            v
        }
        _ => (0..n).collect(),
    };
    centers
        .into_par_iter()
        .map(|x| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| space.dist(x, a).total_cmp(&space.dist(x, b)).then(a.cmp(&b)));
            // Ball sizes: the prefix lengths ending at a distinct distance.
            let mut sizes: Vec<usize> = (1..=n)
                .filter(|&k| k == n || space.dist(x, order[k]) > space.dist(x, order[k - 1]))
                .collect();
            if let Some(cap) = max_radii {
                if sizes.len() > cap {
                    let m = sizes.len();
                    let mut picked: Vec<usize> = (0..cap)
                        .map(|i| {
                            let f = (m as f64).powf(i as f64 / (cap - 1) as f64);
                            (f.round() as usize).clamp(1, m) - 1
                        })
                        .collect();
                    picked.dedup();
                    sizes = picked.into_iter().map(|i| sizes[i]).collect();
                }
            }
            // Running diameter of the growing prefix.
            let mut best = 1u64;
            let mut diam = 0.0f64;
            let mut grown = 1usize;
            for k in sizes {
                while grown < k {
                    let p = order[grown];
                    for &q in &order[..grown] {
                        diam = diam.max(space.dist(p, q));
                    }
                    grown += 1;
                }
                if diam > 0.0 {
                    let c = greedy_cover_count(space, &order[..k], diam / 2.0) as u64;
                    best = best.max(c);
                }
            }
            best
        })
        .max()
        .unwrap_or(1)
}

/// Target or fitted Ahlfors profile `c r^α <= μ(B(x, r)) <= C r^α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityProfile {
    pub alpha: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub fit_range: (f64, f64),
}
