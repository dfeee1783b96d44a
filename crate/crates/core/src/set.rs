//! Finite-depth compact sets as dyadic prefix trees.
//!
//! Level `n` of a [`DyadicSetTree`] is the sorted list of Morton keys of the
//! selected cubes `𝒞_n`. A tree of depth `N` stands for the union of the
//! closed level-`N` cubes. Children of a cube are contiguous in the next
//! level, so parent/child navigation is an offset lookup.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCode, DyadicPoint, MAX_LEVEL};
use crate::error::{DimError, Result};
use crate::exact;

/// Key width budget: `dim * depth` bits must fit in a `u128`.
const KEY_BITS: usize = 126;

/// Largest number of cubes materialized at one level.
pub const MAX_LEVEL_CUBES: usize = 1 << 24;

#[derive(Clone, PartialEq, Eq)]
pub struct DyadicSetTree {
    dim: usize,
    levels: Vec<Vec<u128>>,
    // child_start[n][i]..child_start[n][i+1] indexes level n+1
    child_start: Vec<Vec<usize>>,
}

impl fmt::Debug for DyadicSetTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DyadicSetTree")
            .field("dim", &self.dim)
            .field("max_depth", &self.max_depth())
            .field("counts", &self.levels.iter().map(Vec::len).collect::<Vec<_>>())
            .finish()
    }
}

pub fn check_depth(dim: usize, depth: u32) -> Result<()> {
    if dim == 0 {
        return Err(DimError::domain("dimension must be at least 1"));
    }
    if depth > MAX_LEVEL || dim * depth as usize > KEY_BITS {
        return Err(DimError::domain(format!(
            "depth {depth} too large for dimension {dim} (need dim*depth <= {KEY_BITS}, depth <= {MAX_LEVEL})"
        )));
    }
    Ok(())
}

impl DyadicSetTree {
    /// Builds a tree from per-level key lists, validating every invariant.
    pub fn from_levels(dim: usize, mut levels: Vec<Vec<u128>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(DimError::invalid("a set tree needs at least level 0"));
        }
        check_depth(dim, (levels.len() - 1) as u32)?;
        for level in &mut levels {
            level.sort_unstable();
            level.dedup();
        }
        if levels[0] != [0] {
            return Err(DimError::invalid("level 0 must be the unit cube"));
        }
        let mut child_start = Vec::with_capacity(levels.len());
        for n in 0..levels.len() - 1 {
            let (parents, children) = (&levels[n], &levels[n + 1]);
            let mut starts = Vec::with_capacity(parents.len() + 1);
            let mut c = 0;
            for (i, &p) in parents.iter().enumerate() {
                starts.push(c);
                if c < children.len() && (children[c] >> dim) < p {
                    return Err(DimError::invalid(format!(
                        "level {} cube {} has no selected parent",
                        n + 1,
                        children[c]
                    )));
                }
                while c < children.len() && (children[c] >> dim) == p {
                    c += 1;
                }
                if starts[i] == c {
                    return Err(DimError::invalid(format!(
                        "level {n} cube {p} has no selected child"
                    )));
                }
            }
            if c != children.len() {
                return Err(DimError::invalid(format!(
                    "level {} cube {} has no selected parent",
                    n + 1,
                    children[c]
                )));
            }
            starts.push(c);
            child_start.push(starts);
        }
        Ok(Self { dim, levels, child_start })
    }

    /// Builds level by level from a refinement rule giving the child
    /// digits (`0..2^dim`) of each selected cube.
    pub fn from_rule<F>(dim: usize, depth: u32, mut children: F) -> Result<Self>
    where
        F: FnMut(u32, usize, u128) -> Vec<u128>,
    {
        check_depth(dim, depth)?;
        let mut levels = vec![vec![0u128]];
        for n in 0..depth {
            let prev = &levels[n as usize];
            let mut next = Vec::new();
            for (i, &key) in prev.iter().enumerate() {
                let mut digits = children(n, i, key);
                digits.sort_unstable();
                digits.dedup();
                next.extend(digits.into_iter().map(|c| (key << dim) | c));
                if next.len() > MAX_LEVEL_CUBES {
                    return Err(DimError::unavailable(format!(
                        "level {} has more than {MAX_LEVEL_CUBES} cubes; materialize a shallower tree",
                        n + 1
                    )));
                }
            }
            levels.push(next);
        }
        Self::from_levels(dim, levels)
    }

    /// The tree whose deepest level is exactly the given cubes.
    pub fn from_leaf_keys(dim: usize, depth: u32, mut keys: Vec<u128>) -> Result<Self> {
        check_depth(dim, depth)?;
        keys.sort_unstable();
        keys.dedup();
        let mut levels = vec![Vec::new(); depth as usize + 1];
        levels[depth as usize] = keys;
        for n in (0..depth as usize).rev() {
            let mut up: Vec<u128> = levels[n + 1].iter().map(|k| k >> dim).collect();
            up.dedup();
            levels[n] = up;
        }
        Self::from_levels(dim, levels)
    }

    /// The whole unit cube down to `depth`.
    pub fn full(dim: usize, depth: u32) -> Result<Self> {
        let all: Vec<u128> = (0..1u128 << dim).collect();
        Self::from_rule(dim, depth, |_, _, _| all.clone())
    }

    /// Self-similar set: each kept level-`kg` cube is refined by the allowed
    /// level-`g` patterns. A pattern lists one base-`2^g` digit per coordinate.
    pub fn from_digit_ifs(dim: usize, g: u32, patterns: &[Vec<u64>], depth: u32) -> Result<Self> {
        let patterns = normalize_patterns(dim, g, patterns)?;
        if depth % g != 0 {
            return Err(DimError::domain(format!("depth {depth} is not a multiple of {g}")));
        }
        check_depth(dim, depth)?;
        let blocks: Vec<u128> = patterns.iter().map(|p| crate::dyadic::morton_encode(p, g)).collect();
        let mut anchors = vec![0u128];
        let mut levels = vec![vec![0u128]];
        for _ in 0..depth / g {
            let next: Vec<u128> = anchors
                .iter()
                .flat_map(|&a| blocks.iter().map(move |&b| (a << (dim as u32 * g)) | b))
                .collect();
            for r in 1..g {
                let shift = dim as u32 * (g - r);
                levels.push(next.iter().map(|k| k >> shift).collect());
            }
            levels.push(next.clone());
            anchors = next;
        }
        Self::from_levels(dim, levels)
    }

    /// Occupied-cube tree of a point cloud snapped to `snap_depth`.
    pub fn from_points(dim: usize, points: &[DyadicPoint], snap_depth: u32) -> Result<Self> {
        check_depth(dim, snap_depth)?;
        if points.is_empty() {
            return Err(DimError::domain("empty point cloud"));
        }
        let mut leaves = BTreeSet::new();
        for p in points {
            if p.dim() != dim {
                return Err(DimError::domain("point dimension mismatch"));
            }
            leaves.insert(p.cube(snap_depth)?.key());
        }
        let mut levels = vec![Vec::new(); snap_depth as usize + 1];
        levels[snap_depth as usize] = leaves.into_iter().collect();
        for n in (0..snap_depth as usize).rev() {
            let mut up: Vec<u128> = levels[n + 1].iter().map(|k| k >> dim).collect();
            up.dedup();
            levels[n] = up;
        }
        Self::from_levels(dim, levels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_depth(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn keys(&self, n: u32) -> &[u128] {
        &self.levels[n as usize]
    }

    pub fn len_at(&self, n: u32) -> usize {
        self.levels[n as usize].len()
    }

    pub fn codes(&self, n: u32) -> Vec<DyadicCode> {
        self.levels[n as usize]
            .iter()
            .map(|&k| DyadicCode::from_key(self.dim, n, k))
            .collect()
    }

    pub fn code(&self, n: u32, i: usize) -> DyadicCode {
        DyadicCode::from_key(self.dim, n, self.levels[n as usize][i])
    }

    pub fn position(&self, n: u32, key: u128) -> Option<usize> {
        self.levels.get(n as usize)?.binary_search(&key).ok()
    }

    pub fn contains_code(&self, code: &DyadicCode) -> bool {
        code.dim() == self.dim
            && code.level() <= self.max_depth()
            && self.position(code.level(), code.key()).is_some()
    }

    /// Range of positions in level `n+1` holding the children of cube `i`.
    pub fn children(&self, n: u32, i: usize) -> Range<usize> {
        let starts = &self.child_start[n as usize];
        starts[i]..starts[i + 1]
    }

    /// Range of positions at level `m >= n` holding descendants of cube `i`.
    pub fn descendants(&self, n: u32, i: usize, m: u32) -> Range<usize> {
        let mut range = i..i + 1;
        for level in n..m {
            let starts = &self.child_start[level as usize];
            range = starts[range.start]..starts[range.end];
        }
        range
    }

    /// Number of selected level-`n` cubes.
    pub fn box_count(&self, n: u32) -> Result<BigUint> {
        if n > self.max_depth() {
            return Err(DimError::unavailable(format!(
                "level {n} beyond materialized depth {}",
                self.max_depth()
            )));
        }
        Ok(BigUint::from(self.len_at(n)))
    }

    pub fn truncate(&self, depth: u32) -> Self {
        let depth = depth.min(self.max_depth()) as usize;
        Self {
            dim: self.dim,
            levels: self.levels[..=depth].to_vec(),
            child_start: self.child_start[..depth].to_vec(),
        }
    }

    /// Level-wise union; depth is the smaller of the two.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(DimError::domain("union of sets of different dimension"));
        }
        let depth = self.max_depth().min(other.max_depth()) as usize;
        let levels = (0..=depth)
            .map(|n| merge_sorted(&self.levels[n], &other.levels[n]))
            .collect();
        Self::from_levels(self.dim, levels)
    }

    /// Selected cubes inside `cube`, keeping the ancestor chain above it so
    /// levels stay absolute.
    pub fn restrict(&self, cube: &DyadicCode) -> Result<Self> {
        let n = cube.level();
        let i = self.position(n, cube.key()).filter(|_| cube.dim() == self.dim).ok_or_else(|| {
            DimError::domain(format!("cube {cube:?} is not selected in the set"))
        })?;
        let mut levels = Vec::with_capacity(self.levels.len());
        for m in 0..n {
            levels.push(vec![cube.key() >> (self.dim as u32 * (n - m))]);
        }
        for m in n..=self.max_depth() {
            levels.push(self.levels[m as usize][self.descendants(n, i, m)].to_vec());
        }
        Self::from_levels(self.dim, levels)
    }

    /// Maximal `2^-n`-separated set of representative points: the upper
    /// corners of the selected level-`n` cubes. Distinct grid corners are at
    /// least `2^-n` apart, so every corner is kept, and every selected cube is
    /// within `2^-n √d` of its own corner.
    pub fn separated_net(&self, n: u32) -> Result<Vec<DyadicPoint>> {
        if n > self.max_depth() {
            return Err(DimError::unavailable(format!(
                "level {n} beyond materialized depth {}",
                self.max_depth()
            )));
        }
        Ok(self.codes(n).iter().map(DyadicCode::upper_corner).collect())
    }

    /// Full walk re-checking parent closure and child non-emptiness.
    pub fn check_invariants(&self) -> Result<()> {
        Self::from_levels(self.dim, self.levels.clone()).map(|_| ())
    }
}

fn merge_sorted(a: &[u128], b: &[u128]) -> Vec<u128> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn normalize_patterns(dim: usize, g: u32, patterns: &[Vec<u64>]) -> Result<Vec<Vec<u64>>> {
    if g == 0 {
        return Err(DimError::domain("pattern level g must be at least 1"));
    }
    if patterns.is_empty() {
        return Err(DimError::domain("empty pattern set"));
    }
    let base = 1u64.checked_shl(g).ok_or_else(|| DimError::domain("g too large"))?;
    let mut out: Vec<Vec<u64>> = Vec::new();
    for p in patterns {
        if p.len() != dim {
            return Err(DimError::domain("pattern dimension mismatch"));
        }
        if p.iter().any(|&digit| digit >= base) {
            return Err(DimError::domain(format!("pattern digit outside 0..{base}")));
        }
        out.push(p.clone());
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Closed-form per-level cardinalities `#𝒞_n`, usable beyond the
/// materialized depth.
pub trait CountFormula: Send + Sync + fmt::Debug {
    fn count_at(&self, n: u64) -> Option<BigUint>;

    fn log2_count_at(&self, n: u64) -> Option<f64> {
        self.count_at(n).map(|c| exact::log2_biguint(&c))
    }

    /// Largest level the formula covers, `None` when unbounded.
    fn horizon(&self) -> Option<u64>;
}

#[derive(Clone, Debug)]
pub struct SymbolicCounts(Arc<dyn CountFormula>);

impl SymbolicCounts {
    pub fn new(formula: impl CountFormula + 'static) -> Self {
        Self(Arc::new(formula))
    }

    pub fn count_at(&self, n: u64) -> Option<BigUint> {
        self.0.count_at(n)
    }

    pub fn log2_count_at(&self, n: u64) -> Option<f64> {
        self.0.log2_count_at(n)
    }

    pub fn horizon(&self) -> Option<u64> {
        self.0.horizon()
    }

    /// Exact agreement with the materialized tree at every level.
    pub fn agrees_with(&self, set: &DyadicSetTree) -> bool {
        (0..=set.max_depth())
            .all(|n| self.count_at(n as u64) == Some(BigUint::from(set.len_at(n))))
    }
}

/// Counts of a digit-IFS set: `|A|^k · P_r` at level `kg + r`, where `P_r`
/// is the number of distinct length-`r` prefixes of the patterns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DigitIfsCounts {
    pub g: u32,
    pub branching: u64,
    pub prefix_counts: Vec<u64>,
}

impl DigitIfsCounts {
    pub fn new(dim: usize, g: u32, patterns: &[Vec<u64>]) -> Result<Self> {
        let patterns = normalize_patterns(dim, g, patterns)?;
        let prefix_counts = (0..g)
            .map(|r| {
                let set: BTreeSet<Vec<u64>> = patterns
                    .iter()
                    .map(|p| p.iter().map(|digit| digit >> (g - r)).collect())
                    .collect();
                set.len() as u64
            })
            .collect();
        Ok(Self { g, branching: patterns.len() as u64, prefix_counts })
    }

    /// `log2|A| / g`, the dimension of the limit set.
    pub fn dimension(&self) -> f64 {
        (self.branching as f64).log2() / self.g as f64
    }
}

impl CountFormula for DigitIfsCounts {
    fn count_at(&self, n: u64) -> Option<BigUint> {
        let g = self.g as u64;
        let (k, r) = (n / g, (n % g) as usize);
        let k = u32::try_from(k).ok()?;
        Some(num_traits::pow(BigUint::from(self.branching), k as usize) * self.prefix_counts[r])
    }

    fn log2_count_at(&self, n: u64) -> Option<f64> {
        let g = self.g as u64;
        let (k, r) = (n / g, (n % g) as usize);
        Some(k as f64 * (self.branching as f64).log2() + (self.prefix_counts[r] as f64).log2())
    }

    fn horizon(&self) -> Option<u64> {
        None
    }
}

/// `#𝒞_n`, from the tree when materialized, else from the symbolic counts.
pub fn box_count(
    set: &DyadicSetTree,
    symbolic: Option<&SymbolicCounts>,
    n: u64,
) -> Result<BigUint> {
    if n <= set.max_depth() as u64 {
        return set.box_count(n as u32);
    }
    symbolic
        .and_then(|s| s.count_at(n))
        .ok_or_else(|| {
            DimError::unavailable(format!(
                "level {n} beyond materialized depth {} and no symbolic counts",
                set.max_depth()
            ))
        })
}

/// Middle-half Cantor set: digits `{0, 3}` in base 4.
pub fn middle_half_cantor(depth: u32) -> Result<(DyadicSetTree, SymbolicCounts)> {
    let patterns = [vec![0], vec![3]];
    Ok((
        DyadicSetTree::from_digit_ifs(1, 2, &patterns, depth)?,
        SymbolicCounts::new(DigitIfsCounts::new(1, 2, &patterns)?),
    ))
}
