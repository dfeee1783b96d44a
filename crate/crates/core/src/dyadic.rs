//! Dyadic cube arithmetic on the unit cube `(0,1]^d`.
//!
//! A level-`n` cube with index `(j_1,…,j_d)` is the half-open product
//! `∏ (j_k 2^-n, (j_k+1) 2^-n]`. Any two dyadic cubes are nested or disjoint.
//! Coordinates produced internally are exact dyadic rationals; floats are
//! accepted only through [`DyadicPoint::snap`] and [`cube_of_point`].

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{DimError, Result};
use crate::Rational;

/// Largest level a [`DyadicCode`] may carry (indices are `u64`).
pub const MAX_LEVEL: u32 = 62;

/// Identifier of a half-open dyadic cube.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCode {
    level: u32,
    index: Vec<u64>,
}

impl DyadicCode {
    pub fn new(level: u32, index: Vec<u64>) -> Result<Self> {
        if index.is_empty() {
            return Err(DimError::domain("dyadic code needs at least one coordinate"));
        }
        if level > MAX_LEVEL {
            return Err(DimError::domain(format!(
                "level {level} exceeds the maximum code level {MAX_LEVEL}"
            )));
        }
        let side = 1u64 << level;
        if let Some(j) = index.iter().find(|&&j| j >= side) {
            return Err(DimError::domain(format!(
                "index {j} out of range for level {level} (must be < {side})"
            )));
        }
        Ok(Self { level, index })
    }

    /// The unit cube `(0,1]^d`.
    pub fn root(dim: usize) -> Self {
        Self { level: 0, index: vec![0; dim] }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> &[u64] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn parent(&self) -> Option<Self> {
        if self.level == 0 {
            return None;
        }
        Some(Self {
            level: self.level - 1,
            index: self.index.iter().map(|j| j >> 1).collect(),
        })
    }

    /// Ancestor at a coarser `level` (the cube itself when levels agree).
    pub fn ancestor(&self, level: u32) -> Option<Self> {
        if level > self.level {
            return None;
        }
        let shift = self.level - level;
        Some(Self {
            level,
            index: self.index.iter().map(|j| j >> shift).collect(),
        })
    }

    /// The `2^d` children in Morton order.
    pub fn children(&self) -> Result<Vec<Self>> {
        if self.level >= MAX_LEVEL {
            return Err(DimError::domain("cannot refine beyond the maximum code level"));
        }
        let d = self.dim();
        Ok((0..1u64 << d)
            .map(|c| Self {
                level: self.level + 1,
                index: self
                    .index
                    .iter()
                    .enumerate()
                    .map(|(k, j)| (j << 1) | ((c >> k) & 1))
                    .collect(),
            })
            .collect())
    }

    /// True iff `other`'s cube is a subset of this cube.
    pub fn contains(&self, other: &Self) -> bool {
        other.dim() == self.dim()
            && other.level >= self.level
            && other.ancestor(self.level).as_ref() == Some(self)
    }

    /// Side length `2^-level`.
    pub fn side(&self) -> Rational {
        Rational::new(BigInt::one(), BigInt::one() << self.level)
    }

    pub fn lower_corner(&self) -> DyadicPoint {
        DyadicPoint { level: self.level, coords: self.index.clone() }
    }

    /// The upper corner, which belongs to the half-open cube.
    pub fn upper_corner(&self) -> DyadicPoint {
        DyadicPoint {
            level: self.level,
            coords: self.index.iter().map(|j| j + 1).collect(),
        }
    }

    pub fn center(&self) -> DyadicPoint {
        DyadicPoint {
            level: self.level + 1,
            coords: self.index.iter().map(|j| 2 * j + 1).collect(),
        }
    }

    /// Morton key: child key = `(parent key << d) | c`.
    pub fn key(&self) -> u128 {
        morton_encode(&self.index, self.level)
    }

    pub fn from_key(dim: usize, level: u32, key: u128) -> Self {
        Self { level, index: morton_decode(key, level, dim) }
    }
}

/// A point with exact dyadic-rational coordinates `coords[k] / 2^level`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicPoint {
    pub level: u32,
    pub coords: Vec<u64>,
}

impl DyadicPoint {
    /// Snaps a point of `(0,1]^d` to the upper corner of the level-`depth`
    /// cube containing it, so cube membership at every level `≤ depth` is
    /// unchanged.
    pub fn snap(x: &[f64], depth: u32) -> Result<Self> {
        let code = cube_of_point(x, depth)?;
        Ok(code.upper_corner())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let scale = (-(self.level as f64)).exp2();
        self.coords.iter().map(|&c| c as f64 * scale).collect()
    }

    pub fn coord(&self, k: usize) -> Rational {
        Rational::new(BigInt::from(self.coords[k]), BigInt::one() << self.level)
    }

    /// Exact squared Euclidean distance.
    pub fn dist_sq(&self, other: &Self) -> Rational {
        let level = self.level.max(other.level);
        let mut acc = BigInt::zero();
        for (a, b) in self.coords.iter().zip(&other.coords) {
            let a = BigInt::from(*a) << (level - self.level);
            let b = BigInt::from(*b) << (level - other.level);
            let diff = a - b;
            acc += &diff * &diff;
        }
        Rational::new(acc, BigInt::one() << (2 * level))
    }

    /// Level-`n` cube containing this point; the point must lie in `(0,1]^d`.
    pub fn cube(&self, n: u32) -> Result<DyadicCode> {
        let side = 1u64 << self.level;
        if self.coords.iter().any(|&c| c == 0 || c > side) {
            return Err(DimError::domain("point outside (0,1]^d"));
        }
        let index = self
            .coords
            .iter()
            .map(|&c| {
                // ceil(c 2^n / 2^level) - 1
                let num = (c as u128) << n;
                let den = 1u128 << self.level;
                (num.div_ceil(den) - 1) as u64
            })
            .collect();
        DyadicCode::new(n, index)
    }
}

/// Level-`n` cube containing `x ∈ (0,1]^d`.
pub fn cube_of_point(x: &[f64], n: u32) -> Result<DyadicCode> {
    if x.is_empty() {
        return Err(DimError::domain("point has no coordinates"));
    }
    if n > MAX_LEVEL {
        return Err(DimError::domain(format!("level {n} exceeds {MAX_LEVEL}")));
    }
    let scale = (n as f64).exp2();
    let mut index = Vec::with_capacity(x.len());
    for &c in x {
        if !(c > 0.0 && c <= 1.0) {
            return Err(DimError::domain(format!("coordinate {c} outside (0,1]")));
        }
        // scaling by a power of two is exact
        let j = (c * scale).ceil() as u64 - 1;
        index.push(j);
    }
    DyadicCode::new(n, index)
}

/// Exact distances between the closures of two cubes.
#[derive(Clone, Debug, PartialEq)]
pub struct CubePairGeometry {
    pub min_dist: f64,
    pub max_dist: f64,
    pub min_dist_sq: Rational,
    pub max_dist_sq: Rational,
}

pub fn cube_pair_geometry(a: &DyadicCode, b: &DyadicCode) -> Result<CubePairGeometry> {
    if a.dim() != b.dim() {
        return Err(DimError::domain("cubes of different dimension"));
    }
    let level = a.level.max(b.level);
    let mut gap_sq = BigInt::zero();
    let mut span_sq = BigInt::zero();
    for (ja, jb) in a.index.iter().zip(&b.index) {
        let (lo_a, hi_a) = scaled_interval(*ja, a.level, level);
        let (lo_b, hi_b) = scaled_interval(*jb, b.level, level);
        let gap = (lo_b - hi_a).max(lo_a - hi_b).max(0);
        let span = hi_a.max(hi_b) - lo_a.min(lo_b);
        gap_sq += BigInt::from(gap) * BigInt::from(gap);
        span_sq += BigInt::from(span) * BigInt::from(span);
    }
    let den = BigInt::one() << (2 * level);
    let min_dist_sq = Rational::new(gap_sq, den.clone());
    let max_dist_sq = Rational::new(span_sq, den);
    Ok(CubePairGeometry {
        min_dist: crate::exact::to_f64(&min_dist_sq).sqrt(),
        max_dist: crate::exact::to_f64(&max_dist_sq).sqrt(),
        min_dist_sq,
        max_dist_sq,
    })
}

fn scaled_interval(j: u64, from: u32, to: u32) -> (i128, i128) {
    let shift = to - from;
    ((j as i128) << shift, ((j as i128) + 1) << shift)
}

pub(crate) fn morton_encode(index: &[u64], level: u32) -> u128 {
    let d = index.len();
    let mut key = 0u128;
    for b in (0..level).rev() {
        for (k, j) in index.iter().enumerate() {
            key |= (((j >> b) & 1) as u128) << (b as usize * d + k);
        }
    }
    key
}

pub(crate) fn morton_decode(key: u128, level: u32, dim: usize) -> Vec<u64> {
    let mut index = vec![0u64; dim];
    for b in 0..level as usize {
        for (k, j) in index.iter_mut().enumerate() {
            *j |= (((key >> (b * dim + k)) & 1) as u64) << b;
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn code(level: u32, index: &[u64]) -> DyadicCode {
        DyadicCode::new(level, index.to_vec()).unwrap()
    }

    #[test]
    fn point_lookup_examples() {
        assert_eq!(cube_of_point(&[0.3], 2).unwrap(), code(2, &[1]));
        assert_eq!(cube_of_point(&[1.0], 3).unwrap(), code(3, &[7]));
        assert_eq!(cube_of_point(&[0.3, 0.9], 1).unwrap(), code(1, &[0, 1]));
        // right endpoints belong to the cube
        assert_eq!(cube_of_point(&[0.5], 1).unwrap(), code(1, &[0]));
        assert_eq!(cube_of_point(&[0.25], 2).unwrap(), code(2, &[0]));
    }

    #[test]
    fn point_lookup_rejects_outside() {
        assert!(cube_of_point(&[0.0], 2).is_err());
        assert!(cube_of_point(&[1.5], 2).is_err());
        assert!(cube_of_point(&[f64::NAN], 2).is_err());
        assert!(cube_of_point(&[0.5, -0.1], 2).is_err());
    }

    #[test]
    fn geometry_examples() {
        let g = cube_pair_geometry(&code(2, &[0]), &code(2, &[2])).unwrap();
        assert_eq!(g.min_dist_sq, Rational::new(1.into(), 16.into()));
        assert_eq!(g.max_dist_sq, Rational::new(9.into(), 16.into()));
        assert!((g.min_dist - 0.25).abs() < 1e-15 && (g.max_dist - 0.75).abs() < 1e-15);

        let c = code(3, &[2, 5]);
        let g = cube_pair_geometry(&c, &c).unwrap();
        assert!(g.min_dist_sq.is_zero());
        assert!((g.max_dist - 0.125 * 2f64.sqrt()).abs() < 1e-15);

        let g = cube_pair_geometry(&code(1, &[0]), &code(2, &[1])).unwrap();
        assert!(g.min_dist_sq.is_zero());
        assert_eq!(g.max_dist_sq, Rational::new(1.into(), 4.into()));
    }

    #[test]
    fn touching_cubes_have_zero_gap() {
        let g = cube_pair_geometry(&code(2, &[1]), &code(2, &[2])).unwrap();
        assert!(g.min_dist_sq.is_zero());
    }

    #[test]
    fn serializes_as_level_and_index() {
        let json = serde_json::to_string(&code(3, &[1, 6])).unwrap();
        assert_eq!(json, r#"{"level":3,"index":[1,6]}"#);
    }

    #[test]
    fn invalid_codes_rejected() {
        assert!(DyadicCode::new(2, vec![4]).is_err());
        assert!(DyadicCode::new(2, vec![]).is_err());
        assert!(DyadicCode::new(63, vec![0]).is_err());
    }

    fn arb_code(dim: usize) -> impl Strategy<Value = DyadicCode> {
        (0u32..20).prop_flat_map(move |level| {
            proptest::collection::vec(0u64..(1u64 << level), dim)
                .prop_map(move |index| DyadicCode::new(level, index).unwrap())
        })
    }

    proptest! {
        #[test]
        fn children_round_trip(c in (1usize..4).prop_flat_map(arb_code)) {
            for child in c.children().unwrap() {
                prop_assert_eq!(child.parent().unwrap(), c.clone());
                prop_assert!(c.contains(&child));
            }
        }

        #[test]
        fn sampled_points_land_in_their_cube(
            c in (1usize..3).prop_flat_map(arb_code),
            u in proptest::collection::vec(0.0f64..1.0, 2),
        ) {
            let side = (-(c.level() as f64)).exp2();
            let x: Vec<f64> = c.index().iter().zip(u.iter().cycle())
                .map(|(&j, &t)| (j as f64 + 1.0 - t) * side)
                .collect();
            prop_assert_eq!(cube_of_point(&x, c.level()).unwrap(), c);
        }

        #[test]
        fn containment_matches_sampling(a in arb_code(2), b in arb_code(2), u in 0.0f64..1.0, v in 0.0f64..1.0) {
            // b ⊂ a iff a contains b; a sampled point of b lies in a when contained
            let side = (-(b.level() as f64)).exp2();
            let x = [(b.index()[0] as f64 + 1.0 - u) * side, (b.index()[1] as f64 + 1.0 - v) * side];
            let in_a = a.level() <= b.level() && cube_of_point(&x, a.level()).unwrap() == a;
            prop_assert_eq!(a.contains(&b), in_a);
        }

        #[test]
        fn geometry_symmetric(a in arb_code(2), b in arb_code(2)) {
            let g1 = cube_pair_geometry(&a, &b).unwrap();
            let g2 = cube_pair_geometry(&b, &a).unwrap();
            prop_assert_eq!(&g1, &g2);
            prop_assert!(g1.min_dist_sq <= g1.max_dist_sq);
            // min = 0 iff closures intersect
            let level = a.level().max(b.level());
            let overlap = a.index().iter().zip(b.index()).all(|(&ja, &jb)| {
                let (la, ha) = scaled_interval(ja, a.level(), level);
                let (lb, hb) = scaled_interval(jb, b.level(), level);
                la <= hb && lb <= ha
            });
            prop_assert_eq!(g1.min_dist_sq.is_zero(), overlap);
        }

        #[test]
        fn morton_round_trip(c in (1usize..4).prop_flat_map(arb_code)) {
            let back = DyadicCode::from_key(c.dim(), c.level(), c.key());
            prop_assert_eq!(back, c);
        }
    }
}
