//! Deterministic test families with known regularity exponents.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricMeasureSpace;

pub const DEFAULT_POINT_CAP: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Cantor,
    Grid,
    Sierpinski,
    RandomDoubling,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cantor" => Ok(Family::Cantor),
            "grid" => Ok(Family::Grid),
            "sierpinski" => Ok(Family::Sierpinski),
            "random-doubling" => Ok(Family::RandomDoubling),
            other => Err(Error::InvalidParameter(format!(
                "unknown family {other:?} (expected cantor, grid, sierpinski or random-doubling)"
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Cantor => "cantor",
            Family::Grid => "grid",
            Family::Sierpinski => "sierpinski",
            Family::RandomDoubling => "random-doubling",
        })
    }
}

/// Full description of a generated instance. `level` doubles as the grid
/// side length and the random family's point count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub level: usize,
    pub dimension: usize,
    pub seed: u64,
    pub ratio: f64,
    pub cap: usize,
}

impl GeneratorSpec {
    pub fn new(family: Family, level: usize) -> Self {
        Self {
            family,
            level,
            dimension: 1,
            seed: 0,
            ratio: 1.0 / 3.0,
            cap: DEFAULT_POINT_CAP,
        }
    }

    pub fn generate(&self) -> Result<MetricMeasureSpace> {
        match self.family {
            Family::Cantor => cantor_with_cap(self.level, self.ratio, self.cap),
            Family::Grid => grid_with_cap(self.dimension, self.level, self.cap),
            Family::Sierpinski => sierpinski_with_cap(self.level, self.cap),
            Family::RandomDoubling => random_doubling_with_cap(self.seed, self.level, self.cap),
        }
    }

    /// Nominal regularity exponent of the family.
    pub fn nominal_alpha(&self) -> f64 {
        match self.family {
            Family::Cantor => 2f64.ln() / (1.0 / self.ratio).ln(),
            Family::Grid => self.dimension as f64,
            Family::Sierpinski => 3f64.ln() / 2f64.ln(),
            Family::RandomDoubling => 2.0,
        }
    }
}

fn check_count(count: Option<usize>, cap: usize) -> Result<usize> {
    match count {
        Some(c) if c <= cap => Ok(c),
        _ => Err(Error::InvalidParameter(format!(
            "instance exceeds the point cap of {cap}"
        ))),
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Left endpoints of the `2^level` construction intervals of the middle
/// Cantor set with contraction `ratio`, each of weight `2^{-level}`.
pub fn gen_cantor(level: usize, ratio: f64) -> Result<MetricMeasureSpace> {
    cantor_with_cap(level, ratio, DEFAULT_POINT_CAP)
}

fn cantor_with_cap(level: usize, ratio: f64, cap: usize) -> Result<MetricMeasureSpace> {
    if !(ratio > 0.0 && ratio < 0.5) {
        return Err(Error::InvalidParameter(format!("ratio {ratio} outside (0, 1/2)")));
    }
    let n = check_count(
        u32::try_from(level)
            .ok()
            .and_then(|l| 1usize.checked_shl(l))
            .filter(|&n| n > 0),
        cap,
    )?;
    let third = ratio == 1.0 / 3.0;
    let denom = 3f64.powi(level as i32);
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|code| {
            if third {
                // exact: sum of 2·3^{level−k} over set bits, divided by 3^level
                let mut m = 0u64;
                for k in 1..=level {
                    if code >> (level - k) & 1 == 1 {
                        m += 2 * 3u64.pow((level - k) as u32);
                    }
                }
                vec![m as f64 / denom]
            } else {
                let mut x = 0.0;
                let mut scale = 1.0 - ratio;
                for k in 1..=level {
                    if code >> (level - k) & 1 == 1 {
                        x += scale;
                    }
                    scale *= ratio;
                }
                vec![x]
            }
        })
        .collect();
    let ids = (0..n).map(|i| format!("c{i}")).collect();
    MetricMeasureSpace::from_coordinates(format!("cantor-{level}"), ids, coords, uniform(n))
}

/// `side^dimension` lattice points of `[0,1]^dimension`, uniform weights.
pub fn gen_grid(dimension: usize, side: usize) -> Result<MetricMeasureSpace> {
    grid_with_cap(dimension, side, DEFAULT_POINT_CAP)
}

fn grid_with_cap(dimension: usize, side: usize, cap: usize) -> Result<MetricMeasureSpace> {
    if dimension == 0 || side == 0 {
        return Err(Error::InvalidParameter(
            "grid dimension and side must be positive".into(),
        ));
    }
    let n = check_count(u32::try_from(dimension).ok().and_then(|d| side.checked_pow(d)), cap)?;
    let step = if side > 1 { 1.0 / (side - 1) as f64 } else { 0.0 };
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|mut i| {
            let mut c = vec![0.0; dimension];
            for k in (0..dimension).rev() {
                c[k] = (i % side) as f64 * step;
                i /= side;
            }
            c
        })
        .collect();
    let ids = (0..n).map(|i| format!("g{i}")).collect();
    MetricMeasureSpace::from_coordinates(format!("grid-{dimension}-{side}"), ids, coords, uniform(n))
}

/// Lower-left vertices of the `3^level` triangles of the level-`level`
/// Sierpiński construction over the unit triangle, uniform weights.
pub fn gen_sierpinski(level: usize) -> Result<MetricMeasureSpace> {
    sierpinski_with_cap(level, DEFAULT_POINT_CAP)
}

fn sierpinski_with_cap(level: usize, cap: usize) -> Result<MetricMeasureSpace> {
    let n = check_count(u32::try_from(level).ok().and_then(|l| 3usize.checked_pow(l)), cap)?;
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.5, 3f64.sqrt() / 2.0)];
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|code| {
            let (mut x, mut y) = (0.0, 0.0);
            let mut scale = 0.5;
            let mut rest = code;
            let mut digits = vec![0usize; level];
            for d in digits.iter_mut().rev() {
                *d = rest % 3;
                rest /= 3;
            }
            for d in digits {
                x += scale * corners[d].0;
                y += scale * corners[d].1;
                scale *= 0.5;
            }
            vec![x, y]
        })
        .collect();
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    MetricMeasureSpace::from_coordinates(format!("sierpinski-{level}"), ids, coords, uniform(n))
}

/// `n` points of the unit square drawn from a seeded recursive subdivision:
/// cells split into 2 to 4 of their quadrants until there are at least `n`
/// cells, then `n` cells receive a jittered center point.
pub fn gen_random_doubling(seed: u64, n: usize) -> Result<MetricMeasureSpace> {
    random_doubling_with_cap(seed, n, DEFAULT_POINT_CAP)
}

fn random_doubling_with_cap(seed: u64, n: usize, cap: usize) -> Result<MetricMeasureSpace> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "random-doubling needs at least one point".into(),
        ));
    }
    check_count(Some(n), cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (x, y, side) of the lower-left corner; FIFO keeps the tree balanced
    let mut cells = std::collections::VecDeque::from([(0.0f64, 0.0f64, 1.0f64)]);
    while cells.len() < n {
        let (x, y, side) = cells.pop_front().expect("cells never empty");
        let half = side / 2.0;
        let k = rng.gen_range(2..=4usize);
        let mut quadrants = [0usize, 1, 2, 3];
        for i in 0..k {
            let j = rng.gen_range(i..4);
            quadrants.swap(i, j);
        }
        let mut chosen = quadrants[..k].to_vec();
        chosen.sort_unstable();
        for q in chosen {
            cells.push_back((x + half * (q & 1) as f64, y + half * (q >> 1) as f64, half));
        }
    }
    let mut picked = rand::seq::index::sample(&mut rng, cells.len(), n).into_vec();
    picked.sort_unstable();
    let coords: Vec<Vec<f64>> = picked
        .into_iter()
        .map(|i| {
            let (x, y, side) = cells[i];
            let jx = rng.gen_range(-0.125..0.125) * side;
            let jy = rng.gen_range(-0.125..0.125) * side;
            vec![x + side / 2.0 + jx, y + side / 2.0 + jy]
        })
        .collect();
    let ids = (0..n).map(|i| format!("r{i}")).collect();
    MetricMeasureSpace::from_coordinates(format!("random-doubling-{seed}-{n}"), ids, coords, uniform(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{validate_metric, MeasuredMetric};

    #[test]
    fn cantor_small_levels() {
        let c0 = gen_cantor(0, 1.0 / 3.0).unwrap();
        assert_eq!(c0.len(), 1);
        assert_eq!(c0.weights(), &[1.0]);
        let c1 = gen_cantor(1, 1.0 / 3.0).unwrap();
        assert_eq!(c1.coordinates().unwrap(), &[vec![0.0], vec![2.0 / 3.0]]);
        assert_eq!(c1.weights(), &[0.5, 0.5]);
        let c3 = gen_cantor(3, 1.0 / 3.0).unwrap();
        let xs: Vec<f64> = c3.coordinates().unwrap().iter().map(|c| c[0] * 27.0).collect();
        assert_eq!(xs, vec![0.0, 2.0, 6.0, 8.0, 18.0, 20.0, 24.0, 26.0]);
    }

    #[test]
    fn cantor_general_ratio_matches_third() {
        let a = gen_cantor(4, 1.0 / 3.0).unwrap();
        let b = gen_cantor(4, 0.3333333333333333).unwrap();
        assert_eq!(a, b);
        let c = gen_cantor(4, 0.25).unwrap();
        assert_eq!(c.len(), 16);
        assert!(validate_metric(&c).is_empty());
        assert!(gen_cantor(2, 0.5).is_err());
    }

    #[test]
    fn grid_and_sierpinski_shapes() {
        let g = gen_grid(2, 2).unwrap();
        assert_eq!(
            g.coordinates().unwrap(),
            &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
        assert_eq!(g.weights(), &[0.25; 4]);
        let s = gen_sierpinski(1).unwrap();
        assert_eq!(s.len(), 3);
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert!((s.dist(a, b) - 1.0).abs() < 1e-15);
        }
        assert_eq!(gen_sierpinski(4).unwrap().len(), 81);
    }

    #[test]
    fn random_doubling_is_seeded() {
        let a = gen_random_doubling(7, 200).unwrap();
        let b = gen_random_doubling(7, 200).unwrap();
        let c = gen_random_doubling(8, 200).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 200);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(gen_grid(3, 100).is_err());
        assert!(gen_cantor(40, 1.0 / 3.0).is_err());
        let mut spec = GeneratorSpec::new(Family::Cantor, 5);
        spec.cap = 16;
        assert!(spec.generate().is_err());
    }

    #[test]
    fn generators_are_valid_metrics() {
        for s in [
            gen_cantor(6, 1.0 / 3.0).unwrap(),
            gen_grid(2, 9).unwrap(),
            gen_sierpinski(4).unwrap(),
            gen_random_doubling(3, 100).unwrap(),
        ] {
            assert!(validate_metric(&s).is_empty(), "{}", s.name());
        }
    }
}
