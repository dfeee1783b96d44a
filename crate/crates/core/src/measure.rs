//! Finite-depth Borel probability measures on dyadic trees.
//!
//! Masses are exact rationals attached to every selected cube of the
//! support tree. Below the deepest level a leaf either spreads its mass
//! uniformly over the cube or concentrates it on one dyadic point.
//!
//! Pair sums over cubes (correlation, energy) are computed by a dual-tree
//! traversal that prunes pairs entirely inside or outside the radius. The
//! exact sums are reduced in parallel; rational arithmetic makes the
//! reduction order irrelevant.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCode, DyadicPoint};
use crate::error::{DimError, Result};
use crate::exact;
use crate::set::DyadicSetTree;
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "points", rename_all = "kebab-case")]
pub enum LeafModel {
    /// Leaf mass spread as normalized Lebesgue measure on the cube.
    UniformOnCube,
    /// Leaf mass concentrated at one point per leaf (aligned with the
    /// deepest level of the support).
    AtomAtPoint(Vec<DyadicPoint>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicMeasureTree {
    support: DyadicSetTree,
    masses: Vec<Vec<Rational>>,
    leaf_model: LeafModel,
}

/// Lower and upper bounds on a pair sum.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationBracket {
    pub lower: Rational,
    pub upper: Rational,
}

impl CorrelationBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (exact::to_f64(&self.lower) + exact::to_f64(&self.upper))
    }

    pub fn width(&self) -> f64 {
        exact::to_f64(&(&self.upper - &self.lower))
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lower <= x && x <= &self.upper
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }
}

/// Bracket of an `s`-energy, in floating point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyBracket {
    pub lower: f64,
    pub upper: f64,
}

impl EnergyBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Controls the ball-correlation bracket in dimension `d >= 2`, where
/// uniform leaves are refined virtually before min/max distances are used.
#[derive(Clone, Copy, Debug)]
pub struct BracketConfig {
    pub extra_levels: u32,
}

impl Default for BracketConfig {
    fn default() -> Self {
        Self { extra_levels: 4 }
    }
}

impl DyadicMeasureTree {
    /// Builds from leaf masses at the deepest level; interior masses are sums.
    pub fn from_leaf_masses(
        support: DyadicSetTree,
        leaf_masses: Vec<Rational>,
        leaf_model: LeafModel,
    ) -> Result<Self> {
        let depth = support.max_depth();
        if leaf_masses.len() != support.len_at(depth) {
            return Err(DimError::invalid("one mass per leaf cube required"));
        }
        if let LeafModel::AtomAtPoint(points) = &leaf_model {
            if points.len() != leaf_masses.len() {
                return Err(DimError::invalid("one atom per leaf cube required"));
            }
            for (i, p) in points.iter().enumerate() {
                if p.cube(depth)? != support.code(depth, i) {
                    return Err(DimError::invalid(format!("atom {p:?} outside its leaf cube")));
                }
            }
        }
        let mut masses = vec![Vec::new(); depth as usize + 1];
        masses[depth as usize] = leaf_masses;
        for n in (0..depth).rev() {
            let below = &masses[n as usize + 1];
            let level: Vec<Rational> = (0..support.len_at(n))
                .map(|i| support.children(n, i).map(|c| &below[c]).sum())
                .collect();
            masses[n as usize] = level;
        }
        let mu = Self { support, masses, leaf_model };
        mu.check_invariants()?;
        Ok(mu)
    }

    /// Atomic measure from weighted points, supported on the occupied-cube
    /// tree at `depth`. Coincident points are merged; distinct points must
    /// fall in distinct level-`depth` cubes.
    pub fn atomic(dim: usize, atoms: &[(DyadicPoint, Rational)], depth: u32) -> Result<Self> {
        if atoms.is_empty() {
            return Err(DimError::domain("atomic measure needs at least one atom"));
        }
        let mut keyed: Vec<(u128, DyadicPoint, Rational)> = Vec::with_capacity(atoms.len());
        for (p, w) in atoms {
            if !w.is_positive() {
                return Err(DimError::domain("atom weights must be positive"));
            }
            keyed.push((p.cube(depth)?.key(), p.clone(), w.clone()));
        }
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(u128, DyadicPoint, Rational)> = Vec::with_capacity(keyed.len());
        for (key, p, w) in keyed {
            match merged.last_mut() {
                Some(last) if last.0 == key => {
                    if last.1.dist_sq(&p).is_zero() {
                        last.2 += w;
                    } else {
                        return Err(DimError::domain(format!(
                            "two distinct atoms share a level-{depth} cube; increase the depth"
                        )));
                    }
                }
                _ => merged.push((key, p, w)),
            }
        }
        let points: Vec<DyadicPoint> = merged.iter().map(|m| m.1.clone()).collect();
        let support = DyadicSetTree::from_points(dim, &points, depth)?;
        let masses = merged.into_iter().map(|m| m.2).collect();
        Self::from_leaf_masses(support, masses, LeafModel::AtomAtPoint(points))
    }

    /// Splits each parent's mass equally among its selected children.
    pub fn uniform_on_set(set: &DyadicSetTree) -> Result<Self> {
        let mut masses = vec![vec![Rational::one()]];
        for n in 0..set.max_depth() {
            let parent = &masses[n as usize];
            let mut level = Vec::with_capacity(set.len_at(n + 1));
            for (i, m) in parent.iter().enumerate() {
                let kids = set.children(n, i);
                let share = m / Rational::from_integer(BigInt::from(kids.len()));
                level.extend(std::iter::repeat(share).take(kids.len()));
            }
            masses.push(level);
        }
        Ok(Self { support: set.clone(), masses, leaf_model: LeafModel::UniformOnCube })
    }

    /// Equal mass on every leaf cube of the set.
    pub fn equal_leaf_masses(set: &DyadicSetTree) -> Result<Self> {
        let n = set.len_at(set.max_depth());
        let w = Rational::new(BigInt::one(), BigInt::from(n));
        Self::from_leaf_masses(set.clone(), vec![w; n], LeafModel::UniformOnCube)
    }

    pub fn support(&self) -> &DyadicSetTree {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn depth(&self) -> u32 {
        self.support.max_depth()
    }

    pub fn leaf_model(&self) -> &LeafModel {
        &self.leaf_model
    }

    pub fn masses(&self, n: u32) -> &[Rational] {
        &self.masses[n as usize]
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.leaf_model, LeafModel::AtomAtPoint(_))
    }

    /// Root mass one, children summing to parents, and strictly positive
    /// masses on every selected cube.
    pub fn check_invariants(&self) -> Result<()> {
        if self.masses.len() != self.support.max_depth() as usize + 1 {
            return Err(DimError::invalid("mass levels do not match support depth"));
        }
        if self.masses[0] != [Rational::one()] {
            return Err(DimError::invalid("root mass must be exactly 1"));
        }
        for n in 0..=self.depth() {
            let level = &self.masses[n as usize];
            if level.len() != self.support.len_at(n) {
                return Err(DimError::invalid(format!("level {n} mass count mismatch")));
            }
            if let Some(m) = level.iter().find(|m| !m.is_positive()) {
                return Err(DimError::invalid(format!("non-positive mass {m} at level {n}")));
            }
            if n < self.depth() {
                for (i, m) in level.iter().enumerate() {
                    let sum: Rational = self
                        .support
                        .children(n, i)
                        .map(|c| &self.masses[n as usize + 1][c])
                        .sum();
                    if &sum != m {
                        return Err(DimError::invalid(format!(
                            "children of level-{n} cube {i} carry {sum}, parent {m}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `μ(C)` for any dyadic cube, including cubes below the leaf level.
    pub fn mass_of(&self, cube: &DyadicCode) -> Rational {
        let depth = self.depth();
        if cube.dim() != self.dim() {
            return Rational::zero();
        }
        if cube.level() <= depth {
            return self
                .support
                .position(cube.level(), cube.key())
                .map(|i| self.masses[cube.level() as usize][i].clone())
                .unwrap_or_else(Rational::zero);
        }
        let leaf = cube.ancestor(depth).expect("deeper cube has an ancestor");
        let Some(i) = self.support.position(depth, leaf.key()) else {
            return Rational::zero();
        };
        let w = &self.masses[depth as usize][i];
        match &self.leaf_model {
            LeafModel::UniformOnCube => {
                let extra = (cube.level() - depth) as usize * self.dim();
                w / Rational::from_integer(BigInt::one() << extra)
            }
            LeafModel::AtomAtPoint(points) => match points[i].cube(cube.level()) {
                Ok(c) if &c == cube => w.clone(),
                _ => Rational::zero(),
            },
        }
    }

    /// `Σ_C μ(C)²` over level-`n` cubes.
    pub fn dyadic_correlation_sum(&self, n: u32) -> Result<Rational> {
        self.check_level(n)?;
        Ok(sum_rationals(self.masses[n as usize].iter().map(|m| m * m)))
    }

    pub fn max_cube_mass(&self, n: u32) -> Result<Rational> {
        self.check_level(n)?;
        Ok(self.masses[n as usize].iter().max().cloned().expect("levels are non-empty"))
    }

    /// `(n, -log2 max_C μ(C) / n)` for each requested level `n >= 1`.
    pub fn frostman_profile(&self, levels: &[u32]) -> Result<Vec<(u32, f64)>> {
        levels
            .iter()
            .map(|&n| {
                if n == 0 {
                    return Err(DimError::domain("profile levels start at 1"));
                }
                let m = self.max_cube_mass(n)?;
                Ok((n, -exact::log2_rational(&m) / n as f64))
            })
            .collect()
    }

    /// Conditional measure `μ|_C / μ(C)` on a selected cube.
    pub fn restrict_normalize(&self, cube: &DyadicCode) -> Result<Self> {
        let mass = self.mass_of(cube);
        if mass.is_zero() || cube.level() > self.depth() {
            return Err(DimError::domain(format!("cube {cube:?} carries no materialized mass")));
        }
        let support = self.support.restrict(cube)?;
        let n = cube.level();
        let i = self.support.position(n, cube.key()).expect("mass implies selected");
        let depth = self.depth();
        let range = self.support.descendants(n, i, depth);
        let leaves: Vec<Rational> = self.masses[depth as usize][range.clone()]
            .iter()
            .map(|m| m / &mass)
            .collect();
        let leaf_model = match &self.leaf_model {
            LeafModel::UniformOnCube => LeafModel::UniformOnCube,
            LeafModel::AtomAtPoint(points) => LeafModel::AtomAtPoint(points[range].to_vec()),
        };
        Self::from_leaf_masses(support, leaves, leaf_model)
    }

    /// Upper bound on `μ(B(x,r))` from the level-`n` cubes meeting the closed
    /// ball; at most `2^d` cubes when `2r < 2^-n`.
    pub fn cover_mass(&self, x: &DyadicPoint, r: &Rational, n: u32) -> Result<Rational> {
        self.check_level(n)?;
        let scale = Rational::from_integer(BigInt::one() << n);
        let top = (1u64 << n) - 1;
        let mut ranges = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let c = x.coord(k);
            let lo = exact::ceil(&((&c - r) * &scale)) - 1;
            let hi = exact::ceil(&((&c + r) * &scale)) - 1;
            let clamp = |v: BigInt| v.to_i128().unwrap_or(i128::MAX).clamp(0, top as i128) as u64;
            ranges.push((clamp(lo), clamp(hi)));
        }
        let mut total = Rational::zero();
        let mut idx: Vec<u64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let code = DyadicCode::new(n, idx.clone())?;
            total += self.mass_of(&code);
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return Ok(total);
                }
                if idx[k] < ranges[k].1 {
                    idx[k] += 1;
                    break;
                }
                idx[k] = ranges[k].0;
                k += 1;
            }
        }
    }

    /// Exact `μ(B(x,r))` for atomic measures.
    pub fn atomic_ball_mass(&self, x: &DyadicPoint, r: &Rational) -> Result<Rational> {
        let LeafModel::AtomAtPoint(points) = &self.leaf_model else {
            return Err(DimError::Unsupported("exact ball mass needs an atomic measure".into()));
        };
        let r2 = r * r;
        let leaves = &self.masses[self.depth() as usize];
        Ok(sum_rationals(
            points
                .iter()
                .zip(leaves)
                .filter(|(p, _)| p.dist_sq(x) <= r2)
                .map(|(_, w)| w.clone()),
        ))
    }

    /// Bracket of `(μ×μ){|x-y| <= r}`. Atomic measures and uniform leaves in
    /// dimension one give a degenerate (exact) bracket; otherwise uniform
    /// leaves are refined `config.extra_levels` times and bounded by closed
    /// cube-pair distances.
    pub fn ball_correlation_bracket(
        &self,
        r: &Rational,
        config: BracketConfig,
    ) -> Result<CorrelationBracket> {
        if !r.is_positive() {
            return Err(DimError::domain("radius must be positive"));
        }
        let r2 = r * r;
        let seeds = self.frontier(4 * rayon::current_num_threads().max(1));
        let (lower, upper) = seeds
            .par_iter()
            .map(|&(n, i, j)| {
                let mut acc = PairAcc::default();
                self.correlate_pair(n, i, j, &r2, r, config, &mut acc);
                acc
            })
            .reduce(PairAcc::default, PairAcc::merge)
            .finish();
        Ok(CorrelationBracket { lower, upper })
    }

    /// Bracket of the `s`-energy `∬|x-y|^-s dμ dμ` for uniform leaves.
    pub fn energy_bracket(&self, s: f64, refine_depth: u32) -> Result<EnergyBracket> {
        let d = self.dim() as f64;
        if s <= 0.0 || !s.is_finite() {
            return Err(DimError::domain("energy exponent must be positive"));
        }
        if self.is_atomic() {
            return Err(DimError::Divergent(
                "point masses have infinite s-energy for s > 0".into(),
            ));
        }
        if s >= d {
            return Err(DimError::Divergent(format!(
                "s = {s} >= d = {d}: diagonal blocks of uniform leaves diverge"
            )));
        }
        let depth = self.depth();
        let h = (-(depth as f64)).exp2();
        let leaves: Vec<(Vec<i64>, f64)> = self
            .support
            .codes(depth)
            .into_iter()
            .zip(&self.masses[depth as usize])
            .map(|(c, m)| (c.index().iter().map(|&j| j as i64).collect(), exact::to_f64(m)))
            .collect();
        let kernel = if self.dim() == 1 {
            PairKernel::Interval { s }
        } else {
            PairKernel::Cube { s, unit: unit_cube_energy(self.dim(), s, refine_depth)? }
        };
        let (lo, hi) = leaves
            .par_iter()
            .enumerate()
            .map(|(a, (ia, wa))| {
                let mut lo = 0.0;
                let mut hi = 0.0;
                for (ib, wb) in &leaves[a..] {
                    let offset: Vec<i64> = ia.iter().zip(ib).map(|(x, y)| x - y).collect();
                    let (l, u) = kernel.pair_bounds(&offset);
                    let factor = if std::ptr::eq(ia, ib) { 1.0 } else { 2.0 } * wa * wb;
                    lo += factor * l;
                    hi += factor * u;
                }
                (lo, hi)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let scale = h.powf(-s);
        // relative allowance for floating-point accumulation
        let slack = 1e-12 * hi * scale + f64::MIN_POSITIVE;
        Ok(EnergyBracket { lower: lo * scale - slack, upper: hi * scale + slack })
    }

    fn check_level(&self, n: u32) -> Result<()> {
        if n > self.depth() {
            return Err(DimError::unavailable(format!(
                "level {n} beyond measure depth {}",
                self.depth()
            )));
        }
        Ok(())
    }

    /// Candidate cube pairs `(level, i, j)` with `i <= j`, expanded until
    /// there are enough independent work items.
    fn frontier(&self, target: usize) -> Vec<(u32, usize, usize)> {
        let mut n = 0;
        while n < self.depth() && self.support.len_at(n) * self.support.len_at(n) < 2 * target {
            n += 1;
        }
        let len = self.support.len_at(n);
        (0..len).flat_map(|i| (i..len).map(move |j| (n, i, j))).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn correlate_pair(
        &self,
        n: u32,
        i: usize,
        j: usize,
        r2: &Rational,
        r: &Rational,
        config: BracketConfig,
        acc: &mut PairAcc,
    ) {
        let keys = self.support.keys(n);
        let (a, b) = (
            DyadicCode::from_key(self.dim(), n, keys[i]),
            DyadicCode::from_key(self.dim(), n, keys[j]),
        );
        let (gap2, span2) = index_dist_sq(a.index(), b.index());
        let threshold = r2 * Rational::from_integer(BigInt::one() << (2 * n as usize));
        let weight = if i == j { 1 } else { 2 };
        let product = || {
            &self.masses[n as usize][i]
                * &self.masses[n as usize][j]
                * Rational::from_integer(BigInt::from(weight))
        };
        if Rational::from_integer(BigInt::from(span2)) <= threshold
            && !self.is_atomic()
        {
            let p = product();
            acc.both(p);
            return;
        }
        if Rational::from_integer(BigInt::from(gap2)) > threshold {
            return;
        }
        if n < self.depth() {
            let (ci, cj) = (self.support.children(n, i), self.support.children(n, j));
            for x in ci.clone() {
                for y in cj.clone() {
                    if i == j && y < x {
                        continue;
                    }
                    self.correlate_pair(n + 1, x, y, r2, r, config, acc);
                }
            }
            return;
        }
        match &self.leaf_model {
            LeafModel::AtomAtPoint(points) => {
                if points[i].dist_sq(&points[j]) <= *r2 {
                    acc.both(product());
                }
            }
            LeafModel::UniformOnCube if self.dim() == 1 => {
                let delta = a.index()[0] as i64 - b.index()[0] as i64;
                let rho = r * Rational::from_integer(BigInt::one() << n as usize);
                acc.both(product() * interval_pair_fraction(delta, &rho));
            }
            LeafModel::UniformOnCube => {
                let (lo, hi) = refined_cube_fraction(a.index(), b.index(), n, r2, config.extra_levels);
                let p = product();
                acc.lower.push(&p * lo);
                acc.upper.push(p * hi);
            }
        }
    }
}

#[derive(Default)]
struct PairAcc {
    lower: Vec<Rational>,
    upper: Vec<Rational>,
}

impl PairAcc {
    fn both(&mut self, p: Rational) {
        self.lower.push(p.clone());
        self.upper.push(p);
    }

    fn merge(mut self, mut other: Self) -> Self {
        self.lower.append(&mut other.lower);
        self.upper.append(&mut other.upper);
        self
    }

    fn finish(self) -> (Rational, Rational) {
        (sum_rationals(self.lower), sum_rationals(self.upper))
    }
}

/// Sums rationals over their common denominator (one reduction at the end).
pub fn sum_rationals(values: impl IntoIterator<Item = Rational>) -> Rational {
    let values: Vec<Rational> = values.into_iter().collect();
    if values.is_empty() {
        return Rational::zero();
    }
    let den = exact::common_denominator(values.iter());
    let num: BigInt = values.iter().map(|v| v.numer() * (&den / v.denom())).sum();
    Rational::new(num, den)
}

fn index_dist_sq(a: &[u64], b: &[u64]) -> (u128, u128) {
    let mut gap = 0u128;
    let mut span = 0u128;
    for (x, y) in a.iter().zip(b) {
        let delta = x.abs_diff(*y) as u128;
        let g = delta.saturating_sub(1);
        gap += g * g;
        span += (delta + 1) * (delta + 1);
    }
    (gap, span)
}

fn ramp2(z: &Rational) -> Rational {
    if z.is_positive() {
        z * z / Rational::from_integer(BigInt::from(2))
    } else {
        Rational::zero()
    }
}

/// Area of `{(x,y) ∈ [0,1]²: x - y > c}`.
fn diff_tail_area(c: &Rational) -> Rational {
    let one = Rational::one();
    ramp2(&(&one - c)) - ramp2(&-c) - ramp2(&-c) + ramp2(&(-c - &one))
}

/// `P(|X - Y| <= ρ)` for `X`, `Y` uniform on unit intervals whose left
/// endpoints differ by `delta` (all lengths in units of the interval side).
pub fn interval_pair_fraction(delta: i64, rho: &Rational) -> Rational {
    let delta = Rational::from_integer(BigInt::from(delta));
    diff_tail_area(&(-rho - &delta)) - diff_tail_area(&(rho - &delta))
}

/// Bracket of `P(|X - Y| <= r)` for uniform points in two level-`n` cubes,
/// refining both cubes `extra` more levels.
fn refined_cube_fraction(a: &[u64], b: &[u64], n: u32, r2: &Rational, extra: u32) -> (Rational, Rational) {
    let d = a.len();
    let m = 1u64 << extra;
    let level = n + extra;
    let threshold = r2 * Rational::from_integer(BigInt::one() << (2 * level as usize));
    let floor = exact::floor(&threshold).to_u128().unwrap_or(u128::MAX);
    // offset histogram per coordinate: sub-cube index differences
    let per_coord: Vec<Vec<(i64, u64)>> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let base = (x as i64 - y as i64) * m as i64;
            (-(m as i64) + 1..m as i64)
                .map(|t| (base + t, m - t.unsigned_abs()))
                .collect()
        })
        .collect();
    let mut inside = 0u128;
    let mut boundary = 0u128;
    let mut idx = vec![0usize; d];
    'outer: loop {
        let mut gap = 0u128;
        let mut span = 0u128;
        let mut mult = 1u128;
        for k in 0..d {
            let (off, count) = per_coord[k][idx[k]];
            let delta = off.unsigned_abs() as u128;
            let g = delta.saturating_sub(1);
            gap += g * g;
            span += (delta + 1) * (delta + 1);
            mult *= count as u128;
        }
        if span <= floor {
            inside += mult;
        } else if gap <= floor {
            boundary += mult;
        }
        for k in 0..d {
            idx[k] += 1;
            if idx[k] < per_coord[k].len() {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    let total = Rational::from_integer(BigInt::one() << (2 * extra as usize * d));
    let lo = Rational::from_integer(BigInt::from(inside)) / &total;
    let hi = Rational::from_integer(BigInt::from(inside + boundary)) / total;
    (lo, hi)
}

/// Energy kernel for a pair of equal-size leaf cubes at integer offset.
/// Values are in units where the cube side is one.
enum PairKernel {
    /// Closed form in dimension one.
    Interval { s: f64 },
    /// Min/max distance bounds; touching pairs bounded by the unit-cube
    /// self-energy bracket.
    Cube { s: f64, unit: (f64, f64) },
}

impl PairKernel {
    fn pair_bounds(&self, offset: &[i64]) -> (f64, f64) {
        match *self {
            PairKernel::Interval { s } => {
                let v = interval_pair_energy(offset[0].unsigned_abs(), s);
                (v, v)
            }
            PairKernel::Cube { s, unit } => {
                let (gap2, span2) = offset.iter().fold((0.0, 0.0), |(g, sp), &o| {
                    let delta = o.unsigned_abs() as f64;
                    let gap = (delta - 1.0).max(0.0);
                    (g + gap * gap, sp + (delta + 1.0) * (delta + 1.0))
                });
                let lower = span2.powf(-s / 2.0);
                if offset.iter().all(|&o| o == 0) {
                    unit
                } else if gap2 == 0.0 {
                    (lower, unit.1)
                } else {
                    (lower, gap2.powf(-s / 2.0))
                }
            }
        }
    }
}

/// `∫₀¹∫₀¹ |δ + x - y|^-s dx dy`, the second difference of
/// `|z|^(2-s) / ((1-s)(2-s))`; a Taylor expansion about `δ` replaces the
/// cancelling difference for large offsets.
pub fn interval_pair_energy(delta: u64, s: f64) -> f64 {
    let norm = (1.0 - s) * (2.0 - s);
    if delta < 16 {
        let f = |z: f64| z.abs().powf(2.0 - s) / norm;
        let x = delta as f64;
        return f(x + 1.0) - 2.0 * f(x) + f(x - 1.0);
    }
    // tent-weighted average: f + f''/12 + f''''/360 + f^(6)/20160 + ...
    let x = delta as f64;
    let base = x.powf(-s);
    let c2 = s * (s + 1.0) / (12.0 * x * x);
    let c4 = c2 * (s + 2.0) * (s + 3.0) / (30.0 * x * x);
    let c6 = c4 * (s + 4.0) * (s + 5.0) / (56.0 * x * x);
    base * (1.0 + c2 + c4 + c6)
}

/// Bracket for the self-energy of Lebesgue measure on `[0,1]^d` by
/// self-similar refinement: at level `D` the diagonal blocks reproduce the
/// whole integral scaled by `2^(D(s-d))`, touching blocks are at most the
/// diagonal value, and separated blocks are bounded by cube distances.
pub fn unit_cube_energy(dim: usize, s: f64, depth: u32) -> Result<(f64, f64)> {
    let d = dim as f64;
    if s >= d {
        return Err(DimError::Divergent(format!("s = {s} >= d = {d}")));
    }
    if dim as u32 * depth > 24 {
        return Err(DimError::domain("refinement too deep for the unit-cube energy bracket"));
    }
    let m = 1i64 << depth;
    let h = (-(depth as f64)).exp2();
    let mut sep_lo = 0.0;
    let mut sep_hi = 0.0;
    let mut touch_lo = 0.0;
    let mut touch_weight = 0.0;
    let mut idx = vec![-(m - 1); dim];
    'outer: loop {
        let mult: f64 = idx.iter().map(|&o| (m - o.abs()) as f64).product();
        let (gap2, span2) = idx.iter().fold((0.0, 0.0), |(g, sp), &o| {
            let delta = o.unsigned_abs() as f64;
            let gap = (delta - 1.0).max(0.0);
            (g + gap * gap, sp + (delta + 1.0) * (delta + 1.0))
        });
        if idx.iter().any(|&o| o != 0) {
            let lower = mult * span2.powf(-s / 2.0);
            if gap2 == 0.0 {
                touch_lo += lower;
                touch_weight += mult;
            } else {
                sep_lo += lower;
                sep_hi += mult * gap2.powf(-s / 2.0);
            }
        }
        for o in idx.iter_mut() {
            *o += 1;
            if *o < m {
                continue 'outer;
            }
            *o = -(m - 1);
        }
        break;
    }
    // block (u, v) at side h contributes h^(2d) · h^-s · (unit-side value)
    let scale = h.powf(2.0 * d - s);
    let diag = (m as f64).powf(d) * scale;
    let lower = (sep_lo + touch_lo) * scale / (1.0 - diag);
    let denom = 1.0 - diag - touch_weight * scale;
    if denom <= 0.0 {
        return Err(DimError::domain("refinement depth too shallow for an upper energy bound"));
    }
    Ok((lower, sep_hi * scale / denom))
}

/// Atomic measure `c Σ_k k^-2 N_k^-1 Σ_i δ_{x_{k,i}}` over the separated
/// nets of the given levels, `c` normalizing the truncated sum.
pub fn anti_frostman_measure(set: &DyadicSetTree, levels: &[u32]) -> Result<(DyadicMeasureTree, Rational)> {
    if levels.is_empty() {
        return Err(DimError::domain("anti-Frostman measure needs at least one level"));
    }
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels[0] == 0 {
        return Err(DimError::domain("levels start at 1"));
    }
    let depth = *levels.last().expect("non-empty");
    if depth > set.max_depth() {
        return Err(DimError::unavailable(format!(
            "level {depth} beyond set depth {}",
            set.max_depth()
        )));
    }
    let inv_sq = |k: u32| Rational::new(BigInt::one(), BigInt::from(k as u64 * k as u64));
    let c = sum_rationals(levels.iter().map(|&k| inv_sq(k))).recip();
    let mut atoms = Vec::new();
    for &k in &levels {
        let net = set.separated_net(k)?;
        let w = &c * inv_sq(k) / Rational::from_integer(BigInt::from(net.len()));
        atoms.extend(net.into_iter().map(|p| (p, w.clone())));
    }
    Ok((DyadicMeasureTree::atomic(set.dim(), &atoms, depth)?, c))
}

/// Uniform atomic measure on the level-`n` separated net (weights `1/N`).
pub fn net_measure(set: &DyadicSetTree, n: u32) -> Result<DyadicMeasureTree> {
    let net = set.separated_net(n)?;
    let w = Rational::new(BigInt::one(), BigInt::from(net.len()));
    let atoms: Vec<_> = net.into_iter().map(|p| (p, w.clone())).collect();
    DyadicMeasureTree::atomic(set.dim(), &atoms, n)
}

/// Compares `μ`-mass `x` against `r^s` exactly.
pub fn mass_vs_power(x: &Rational, r: &Rational, s: &Rational) -> Ordering {
    if x.is_zero() {
        return Ordering::Less;
    }
    exact::cmp_pow(x, r, s)
}
