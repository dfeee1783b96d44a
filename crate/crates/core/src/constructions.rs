//! Explicit constructions on dyadic trees: the alternating two-method set,
//! the set with designated intervals, side-by-side unions, and stage-wise
//! Frostman measures chosen level by level.
//!
//! Plans are computed with exact rational floors. Counts are symbolic so the
//! count inequalities can be checked far beyond any materializable depth.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCode, DyadicPoint};
use crate::error::{DimError, Result};
use crate::estimators;
use crate::exact::{self, format_rational};
use crate::measure::{DyadicMeasureTree, LeafModel};
use crate::set::{self, CountFormula, DigitIfsCounts, DyadicSetTree, SymbolicCounts};
use crate::Rational;

fn check_order(t: &Rational, s: &Rational) -> Result<()> {
    if !(t > &Rational::zero() && t < s && s < &Rational::one()) {
        return Err(DimError::domain(format!(
            "parameters must satisfy 0 < t < s < 1, got t = {}, s = {}",
            format_rational(t),
            format_rational(s)
        )));
    }
    Ok(())
}

fn to_u64(v: BigInt, what: &str) -> Result<u64> {
    v.to_u64()
        .ok_or_else(|| DimError::ConstructionFailed(format!("{what} does not fit in 64 bits")))
}

fn big_pow2(e: u64) -> BigUint {
    BigUint::one() << e as usize
}

/// `count <= m · 2^(m·exp) · factor`, decided exactly.
fn count_within(count: &BigUint, m: u64, exp: &Rational, factor: u64) -> bool {
    if count.is_zero() {
        return true;
    }
    let x = Rational::new(BigInt::from(count.clone()), BigInt::from(m * factor));
    exact::cmp_pow2(&x, &(exp * Rational::from_integer(m.into()))) != Ordering::Greater
}

// ---------------------------------------------------------------------------
// Alternating construction: one child per cube, then both children.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Keep only the left child of every cube.
    LeftOnly,
    /// Keep both children of every cube.
    BothHalves,
}

/// Levels `from < m <= to` built with `method`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stretch {
    pub method: Method,
    pub from: u64,
    pub to: u64,
}

#[derive(Clone, Debug, Default)]
pub enum EpsSchedule {
    /// `ε_k = t/(k+2)`.
    #[default]
    Default,
    /// `ε_1, ε_2, …`; must be strictly decreasing in `(0, t)`.
    Explicit(Vec<Rational>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1Plan {
    #[serde(with = "exact::as_string")]
    pub t: Rational,
    #[serde(with = "exact::as_string")]
    pub s: Rational,
    /// `eps[k-1] = ε_k`.
    #[serde(with = "exact::vec_as_string")]
    pub eps: Vec<Rational>,
    /// `n_0 = 0, n_1 = 1, …`; the last entry is the first to exceed the budget.
    pub n_seq: Vec<u64>,
    pub level_budget: u64,
    pub methods: Vec<Stretch>,
}

pub fn example1_plan(
    t: &Rational,
    s: &Rational,
    schedule: &EpsSchedule,
    level_budget: u64,
) -> Result<Example1Plan> {
    check_order(t, s)?;
    let one = Rational::one();
    let mut n_seq = vec![0u64, 1];
    let mut eps: Vec<Rational> = Vec::new();
    // Σ_{i<k} (n_{2i+1} - n_{2i})
    let mut sum = 1u64;
    let mut k = 1usize;
    while *n_seq.last().unwrap() <= level_budget {
        let e = match schedule {
            EpsSchedule::Default => t / Rational::from_integer((k as i64 + 2).into()),
            EpsSchedule::Explicit(v) => v.get(k - 1).cloned().ok_or_else(|| {
                DimError::domain(format!("ε schedule has no entry for k = {k}"))
            })?,
        };
        if !(e > Rational::zero() && &e < t) {
            return Err(DimError::domain(format!("ε_{k} = {} outside (0, t)", format_rational(&e))));
        }
        if eps.last().is_some_and(|prev| &e >= prev) {
            return Err(DimError::domain("ε schedule must be strictly decreasing"));
        }
        let sum_r = Rational::from_integer(sum.into());
        let even = to_u64(exact::floor(&(&sum_r / (t - &e))) + 1, "n_2k")?;
        let odd_r = (Rational::from_integer(even.into()) - &sum_r) / (&one - s);
        let odd = to_u64(exact::floor(&odd_r), "n_2k+1")?;
        if even < *n_seq.last().unwrap() || odd < even {
            return Err(DimError::ConstructionFailed(format!(
                "level sequence not monotone at k = {k}"
            )));
        }
        eps.push(e);
        n_seq.push(even);
        if even > level_budget {
            break;
        }
        n_seq.push(odd);
        sum += odd - even;
        k += 1;
    }
    let methods = n_seq
        .windows(2)
        .enumerate()
        .map(|(i, w)| Stretch {
            method: if i % 2 == 0 { Method::BothHalves } else { Method::LeftOnly },
            from: w[0],
            to: w[1],
        })
        .collect();
    Ok(Example1Plan { t: t.clone(), s: s.clone(), eps, n_seq, level_budget, methods })
}

impl Example1Plan {
    /// Largest level whose method is known.
    pub fn horizon(&self) -> u64 {
        *self.n_seq.last().unwrap()
    }

    /// Method building level `m` from level `m - 1`.
    pub fn method_at(&self, m: u64) -> Option<Method> {
        if m == 0 {
            return None;
        }
        self.methods.iter().find(|st| st.from < m && m <= st.to).map(|st| st.method)
    }

    /// `log2 #𝒞_m`: the number of both-halves levels in `1..=m`.
    pub fn count_exponent(&self, m: u64) -> Option<u64> {
        if m > self.horizon() {
            return None;
        }
        Some(
            self.methods
                .iter()
                .filter(|st| st.method == Method::BothHalves)
                .map(|st| m.min(st.to).saturating_sub(st.from))
                .sum(),
        )
    }

    /// Deepest level `<= depth` with at most `max_cubes` selected cubes.
    pub fn deepest_within(&self, depth: u64, max_cubes: u64) -> u64 {
        let limit = max_cubes.max(1).ilog2() as u64;
        (0..=depth.min(self.horizon()))
            .rev()
            .find(|&m| self.count_exponent(m).is_some_and(|e| e <= limit))
            .unwrap_or(0)
    }

    pub fn n(&self, k: usize) -> Option<u64> {
        self.n_seq.get(k).copied()
    }

    /// Largest `m` with `n_{2m+1}` computed.
    pub fn measure_stages(&self) -> usize {
        (self.n_seq.len() / 2).saturating_sub(1)
    }

    pub fn counts(&self) -> SymbolicCounts {
        SymbolicCounts::new(Example1Counts { plan: self.clone() })
    }
}

#[derive(Debug)]
struct Example1Counts {
    plan: Example1Plan,
}

impl CountFormula for Example1Counts {
    fn count_at(&self, n: u64) -> Option<BigUint> {
        self.plan.count_exponent(n).map(big_pow2)
    }

    fn log2_count_at(&self, n: u64) -> Option<f64> {
        self.plan.count_exponent(n).map(|e| e as f64)
    }

    fn horizon(&self) -> Option<u64> {
        Some(self.plan.horizon())
    }
}

pub fn example1_set(plan: &Example1Plan, depth: u32) -> Result<(DyadicSetTree, SymbolicCounts)> {
    if depth as u64 > plan.horizon() {
        return Err(DimError::unavailable(format!(
            "depth {depth} beyond the planned levels (up to {})",
            plan.horizon()
        )));
    }
    let tree = DyadicSetTree::from_rule(1, depth, |n, _, _| {
        match plan.method_at(n as u64 + 1) {
            Some(Method::BothHalves) => vec![0, 1],
            _ => vec![0],
        }
    })?;
    Ok((tree, plan.counts()))
}

/// Equal mass on the surviving level-`n_{2m+1}` intervals.
pub fn example1_measure(plan: &Example1Plan, m: usize) -> Result<DyadicMeasureTree> {
    let level = plan.n(2 * m + 1).ok_or_else(|| {
        DimError::unavailable(format!("n_{} not computed by the plan", 2 * m + 1))
    })?;
    let depth = u32::try_from(level)
        .ok()
        .filter(|&d| set::check_depth(1, d).is_ok())
        .ok_or_else(|| {
            DimError::unavailable(format!("level {level} is too deep to materialize"))
        })?;
    let (tree, _) = example1_set(plan, depth)?;
    DyadicMeasureTree::equal_leaf_masses(&tree)
}

#[derive(Clone, Debug, Serialize)]
pub struct CountCheck {
    pub relation: String,
    pub k: usize,
    pub level: u64,
    /// `log2 #𝒞_level`.
    pub exponent: u64,
    pub lower: String,
    pub upper: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Example1Report {
    pub plan: Example1Plan,
    pub checks: Vec<CountCheck>,
    pub pass: bool,
}

/// Checks `2^{n_{2k}(t-ε_k)-1} <= #𝒞_{n_{2k}} < 2^{n_{2k}(t-ε_k)}` and
/// `2^{n_{2k+1}s-1} < #𝒞_{n_{2k+1}} <= 2^{n_{2k+1}s}` for every index up to
/// `max_level`, comparing exponents exactly.
pub fn verify_example1(plan: &Example1Plan, max_level: u64) -> Example1Report {
    let mut checks = Vec::new();
    for (idx, &n) in plan.n_seq.iter().enumerate().skip(2) {
        if n > max_level {
            break;
        }
        let k = idx / 2;
        let e = Rational::from_integer(plan.count_exponent(n).unwrap().into());
        let nr = Rational::from_integer(n.into());
        let (relation, a, pass) = if idx % 2 == 0 {
            let a = &nr * (&plan.t - &plan.eps[k - 1]);
            let pass = &a - Rational::one() <= e && e < a;
            ("even: 2^(a-1) <= #C < 2^a, a = n(t - eps_k)", a, pass)
        } else {
            let a = &nr * &plan.s;
            let pass = &a - Rational::one() < e && e <= a;
            ("odd: 2^(a-1) < #C <= 2^a, a = n s", a, pass)
        };
        checks.push(CountCheck {
            relation: relation.into(),
            k,
            level: n,
            exponent: plan.count_exponent(n).unwrap(),
            lower: format_rational(&(&a - Rational::one())),
            upper: format_rational(&a),
            pass,
        });
    }
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    Example1Report { plan: plan.clone(), checks, pass }
}

/// `(n, log2 #𝒞_n)` along the even (`odd = false`) or odd indices of the
/// level sequence, up to `max_level`.
pub fn example1_subsequence(plan: &Example1Plan, odd: bool, max_level: u64) -> Vec<(u64, u64)> {
    plan.n_seq
        .iter()
        .enumerate()
        .skip(2)
        .filter(|(i, &n)| (i % 2 == 1) == odd && n <= max_level)
        .map(|(_, &n)| (n, plan.count_exponent(n).unwrap()))
        .collect()
}

// ---------------------------------------------------------------------------
// Designated-interval construction.

mod decimal_vec {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(ToString::to_string).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| t.parse().map_err(D::Error::custom))
            .collect()
    }
}

/// One designated interval `C̃_{N_k}` and the levels where its count is low.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Designated {
    pub k: usize,
    pub level: u64,
    /// Position among the selected level-`N_k` intervals, left to right.
    pub rank: String,
    /// Indices `j >= k` whose designated interval lies inside this one.
    pub contains: Vec<usize>,
    /// Inclusive level ranges; `None` as upper end means open past the plan.
    pub lower_count_ranges: Vec<(u64, Option<u64>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<DyadicCode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropeqPlan {
    #[serde(with = "exact::as_string")]
    pub t: Rational,
    #[serde(with = "exact::as_string")]
    pub s: Rational,
    pub budget: u64,
    /// `n_1, n_2, …` (entry `k-1` is `n_k`).
    pub n: Vec<u64>,
    /// `N_0 = 1, N_1, …`.
    pub big_n: Vec<u64>,
    /// `#𝒞_{N_j}` for each `j`.
    #[serde(with = "decimal_vec")]
    pub counts: Vec<BigUint>,
    /// Rank of `C̃_{N_j}` within `𝒞_{N_j}`.
    #[serde(with = "decimal_vec")]
    pub ranks: Vec<BigUint>,
    pub designated: Vec<Designated>,
}

pub fn propeq_plan(t: &Rational, s: &Rational, budget: u64) -> Result<PropeqPlan> {
    check_order(t, s)?;
    let one = Rational::one();
    let n_floor = to_u64(exact::ceil(&(t / (s - t))), "n_k floor")?;
    let big_floor = to_u64(exact::ceil(&((&one - s) / s)), "N_k floor")?;
    let mut n = Vec::new();
    let mut big_n = vec![1u64];
    while *big_n.last().unwrap() <= budget {
        let prev = Rational::from_integer((*big_n.last().unwrap()).into());
        let nk = to_u64(exact::floor(&(prev / (&one - s))), "n_k")?.max(n_floor);
        let bk = to_u64(exact::floor(&(s * Rational::from_integer(nk.into()) / t)), "N_k")?
            .max(big_floor);
        n.push(nk);
        big_n.push(bk);
    }
    let mut counts = vec![BigUint::from(2u32)];
    let mut ranks = vec![BigUint::zero()];
    for j in 1..big_n.len() {
        let delta = n[j - 1] - big_n[j - 1];
        let c = &counts[j - 1] - 1u32 + big_pow2(delta);
        let p = if ranks[j - 1] == &counts[j - 1] - 1u32 {
            BigUint::zero()
        } else {
            &ranks[j - 1] + big_pow2(delta)
        };
        counts.push(c);
        ranks.push(p);
    }
    let mut plan = PropeqPlan {
        t: t.clone(),
        s: s.clone(),
        budget,
        n,
        big_n,
        counts,
        ranks,
        designated: Vec::new(),
    };
    plan.designated = (0..plan.big_n.len()).map(|k| plan.designated_info(k)).collect();
    Ok(plan)
}

impl PropeqPlan {
    pub fn horizon(&self) -> u64 {
        *self.big_n.last().unwrap()
    }

    /// `2^{n_{j+1} - N_j}`: the spread of the designated interval at `N_j`.
    fn spread(&self, j: usize) -> Option<u64> {
        self.n.get(j).map(|&nj| nj - self.big_n[j])
    }

    /// Rank ranges `[lo, hi]` at `N_j`, `j >= k`, of the selected intervals
    /// inside `C̃_{N_k}`.
    fn descendant_ranks(&self, k: usize) -> Vec<(BigUint, BigUint)> {
        let mut out = vec![(self.ranks[k].clone(), self.ranks[k].clone())];
        for j in k..self.big_n.len() - 1 {
            let (lo, hi) = out.last().unwrap().clone();
            let p = &self.ranks[j];
            let extra = big_pow2(self.spread(j).unwrap()) - 1u32;
            let lo = if &lo <= p { lo } else { lo + &extra };
            let hi = match hi.cmp(p) {
                Ordering::Less => hi,
                _ => hi + &extra,
            };
            out.push((lo, hi));
        }
        out
    }

    fn designated_info(&self, k: usize) -> Designated {
        let ranges = self.descendant_ranks(k);
        let contains: Vec<usize> = (k..self.big_n.len())
            .filter(|&j| {
                let (lo, hi) = &ranges[j - k];
                lo <= &self.ranks[j] && &self.ranks[j] <= hi
            })
            .collect();
        // segments of consecutive members; gaps between them are the
        // lower-count ranges [N_{end+1}, N_{next start}]
        let mut lcr = Vec::new();
        let mut i = 0;
        while i < contains.len() {
            let mut end = i;
            while end + 1 < contains.len() && contains[end + 1] == contains[end] + 1 {
                end += 1;
            }
            let after = contains[end] + 1;
            if after < self.big_n.len() {
                let upper = contains.get(end + 1).map(|&j| self.big_n[j]);
                lcr.push((self.big_n[after], upper));
            }
            i = end + 1;
        }
        Designated {
            k,
            level: self.big_n[k],
            rank: self.ranks[k].to_string(),
            contains,
            lower_count_ranges: lcr,
            code: None,
        }
    }

    pub fn counts_formula(&self) -> SymbolicCounts {
        SymbolicCounts::new(PropeqCounts { plan: self.clone() })
    }

    /// `#𝒞_m`.
    pub fn count_at(&self, m: u64) -> Option<BigUint> {
        if m > self.horizon() {
            return None;
        }
        if m <= 1 {
            return Some(BigUint::from(1u32 << m));
        }
        let j = self.big_n.partition_point(|&b| b < m) - 1;
        let nj = self.n[j];
        if m <= nj {
            Some(&self.counts[j] - 1u32 + big_pow2(m - self.big_n[j]))
        } else {
            Some(self.counts[j + 1].clone())
        }
    }

    /// `#(𝒞_m ∩ C̃_{N_k})` for `m >= N_k`.
    pub fn designated_count(&self, k: usize, m: u64) -> Option<BigUint> {
        if m < self.big_n[k] || m > self.horizon() {
            return None;
        }
        let j = self.big_n.partition_point(|&b| b < m).max(1) - 1;
        let j = j.max(k);
        let ranges = self.descendant_ranks(k);
        if m == self.big_n[j] {
            let (lo, hi) = &ranges[j - k];
            return Some(hi - lo + 1u32);
        }
        let (lo, hi) = &ranges[j - k];
        let mut count = hi - lo + 1u32;
        let p = &self.ranks[j];
        if lo <= p && p <= hi {
            let grow = m.min(self.n[j]) - self.big_n[j];
            count += big_pow2(grow) - 1u32;
        }
        Some(count)
    }

    /// Whether level `m` lies in a lower-count range of `C̃_{N_k}`.
    pub fn in_lower_count_range(&self, k: usize, m: u64) -> bool {
        self.designated[k]
            .lower_count_ranges
            .iter()
            .any(|&(lo, hi)| lo <= m && hi.is_none_or(|hi| m <= hi))
    }
}

#[derive(Debug)]
struct PropeqCounts {
    plan: PropeqPlan,
}

impl CountFormula for PropeqCounts {
    fn count_at(&self, n: u64) -> Option<BigUint> {
        self.plan.count_at(n)
    }

    fn horizon(&self) -> Option<u64> {
        Some(self.plan.horizon())
    }
}

/// Materializes the designated-interval set by the left-most/designated
/// selection rules, filling in the codes of the designated intervals that
/// fall within `depth`.
pub fn propeq_set(
    plan: &PropeqPlan,
    depth: u32,
) -> Result<(DyadicSetTree, SymbolicCounts, Vec<Designated>)> {
    set::check_depth(1, depth)?;
    if depth as u64 > plan.horizon() {
        return Err(DimError::unavailable(format!(
            "depth {depth} beyond the planned levels (up to {})",
            plan.horizon()
        )));
    }
    let mut levels: Vec<Vec<u128>> = vec![vec![0]];
    let mut designated = plan.designated.clone();
    if depth >= 1 {
        levels.push(vec![0, 1]);
    }
    // current designated key and its level
    let mut current: (u64, u128) = (1, 0);
    designated[0].code = Some(DyadicCode::from_key(1, 1, 0));
    for m in 2..=depth as u64 {
        let j = plan.big_n.partition_point(|&b| b < m) - 1;
        let grows = m <= plan.n[j];
        let (dl, dkey) = current;
        let prev = &levels[m as usize - 1];
        let mut next = Vec::with_capacity(prev.len() + 1);
        if prev.len() > set::MAX_LEVEL_CUBES {
            return Err(DimError::unavailable(format!(
                "level {m} has more than {} cubes; materialize a shallower tree",
                set::MAX_LEVEL_CUBES
            )));
        }
        for &key in prev {
            next.push(key << 1);
            if grows && key >> (m - 1 - dl) == dkey {
                next.push((key << 1) | 1);
            }
        }
        if m == plan.big_n[j + 1] {
            // left-most to the right of the previous designated interval,
            // wrapping to the left-most when it was right-most
            let shift = m - dl;
            let key = next
                .iter()
                .copied()
                .find(|&k| k >> shift > dkey)
                .unwrap_or(next[0]);
            current = (m, key);
            designated[j + 1].code = Some(DyadicCode::from_key(1, m as u32, key));
        }
        levels.push(next);
    }
    let tree = DyadicSetTree::from_levels(1, levels)?;
    Ok((tree, plan.counts_formula(), designated))
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanCheck {
    pub relation: String,
    pub k: usize,
    pub witness: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DesignatedCheck {
    pub k: usize,
    pub level: u64,
    pub count: String,
    /// `#(𝒞_m ∩ C̃_{N_k}) <= m 2^{ms}`.
    pub upper_ok: bool,
    pub in_lower_count_range: bool,
    /// `#(𝒞_m ∩ C̃_{N_k}) <= m 2^{mt+1}`, checked in lower-count ranges.
    pub lower_ok: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropeqReport {
    pub plan_checks: Vec<PlanCheck>,
    pub designated_checks: Vec<DesignatedCheck>,
    /// Disjoint designated pairs `(k, k')` for which some level past both
    /// lies in neither family of lower-count ranges.
    pub disjoint_pair_failures: Vec<(usize, usize, u64)>,
    pub disjoint_pairs_checked: usize,
    /// Symbolic counts equal to the materialized tree at every level.
    pub materialized_agrees: Option<bool>,
    pub pass: bool,
}

/// Verifies interleaving, the two per-index inequalities (`k >= 2`), the
/// total-count bound at `n_k <= count_limit`, within-designated bounds at
/// levels up to `designated_limit`, and the lower-count cover property for
/// disjoint designated pairs up to `designated_limit`.
pub fn verify_propeq(
    plan: &PropeqPlan,
    count_limit: u64,
    designated_limit: u64,
    tree: Option<&DyadicSetTree>,
) -> PropeqReport {
    let (t, s) = (&plan.t, &plan.s);
    let one = Rational::one();
    let int = |v: u64| Rational::from_integer(v.into());
    let mut plan_checks = Vec::new();
    for k in 1..plan.big_n.len() {
        let nk = plan.n[k - 1];
        if nk > count_limit {
            break;
        }
        let bk = plan.big_n[k];
        let next = plan.n.get(k).copied();
        plan_checks.push(PlanCheck {
            relation: "interleave: n_k < N_k < n_{k+1}".into(),
            k,
            witness: format!("{nk} < {bk} < {}", next.map_or("?".into(), |v| v.to_string())),
            pass: nk < bk && next.is_none_or(|v| bk < v),
        });
        if k < 2 {
            continue;
        }
        let snk = s * int(nk);
        let gap = int(nk - plan.big_n[k - 1]);
        plan_checks.push(PlanCheck {
            relation: "s n_k - (1-s) < n_k - N_{k-1} <= s n_k".into(),
            k,
            witness: format!("{} < {} <= {}", format_rational(&(&snk - (&one - s))), gap, format_rational(&snk)),
            pass: &snk - (&one - s) < gap && gap <= snk,
        });
        let bt = int(bk) * t;
        plan_checks.push(PlanCheck {
            relation: "s n_k - t < N_k t <= s n_k".into(),
            k,
            witness: format!("{} < {} <= {}", format_rational(&(&snk - t)), format_rational(&bt), format_rational(&snk)),
            pass: &snk - t < bt && bt <= snk,
        });
        let by_sum = (1..=k).fold(BigUint::from(2u32), |acc, m| {
            acc + big_pow2(plan.n[m - 1] - plan.big_n[m - 1]) - 1u32
        });
        let count = plan.count_at(nk).unwrap();
        let bound_ok = count_within(&count, k as u64, &(s * int(nk) / int(k as u64)), 1);
        plan_checks.push(PlanCheck {
            relation: "#C_{n_k} = sum (2^{n_m - N_{m-1}} - 1) + 2 <= k 2^{n_k s}".into(),
            k,
            witness: format!("log2 #C = {:.6}, log2(k 2^(n_k s)) = {:.6}", exact::log2_biguint(&count), (k as f64).log2() + exact::to_f64(&snk)),
            pass: by_sum == count && bound_ok,
        });
    }

    let mut designated_checks = Vec::new();
    for d in &plan.designated {
        for m in d.level + 1..=designated_limit.min(plan.horizon()) {
            let count = plan.designated_count(d.k, m).unwrap();
            let upper_ok = count_within(&count, m, s, 1);
            let in_lcr = plan.in_lower_count_range(d.k, m);
            let lower_ok = in_lcr.then(|| count_within(&count, m, t, 2));
            designated_checks.push(DesignatedCheck {
                k: d.k,
                level: m,
                count: count.to_string(),
                upper_ok,
                in_lower_count_range: in_lcr,
                lower_ok,
            });
        }
    }

    let mut disjoint_pair_failures = Vec::new();
    let mut disjoint_pairs_checked = 0;
    for a in &plan.designated {
        for b in &plan.designated {
            if b.k <= a.k || a.contains.contains(&b.k) || b.level > designated_limit {
                continue;
            }
            disjoint_pairs_checked += 1;
            let start = a.level.max(b.level) + 1;
            let miss = (start..=designated_limit.min(plan.horizon()))
                .find(|&m| !plan.in_lower_count_range(a.k, m) && !plan.in_lower_count_range(b.k, m));
            if let Some(m) = miss {
                disjoint_pair_failures.push((a.k, b.k, m));
            }
        }
    }

    let materialized_agrees = tree.map(|tr| {
        plan.counts_formula().agrees_with(tr)
            && plan.designated.iter().filter(|d| d.level <= tr.max_depth() as u64).all(|d| {
                (d.level..=tr.max_depth() as u64).all(|m| {
                    let code = DyadicCode::from_key(1, d.level as u32, tr.keys(d.level as u32)[rank_index(&d.rank)]);
                    let i = tr.position(d.level as u32, code.key()).unwrap();
                    let direct = tr.descendants(d.level as u32, i, m as u32).len();
                    plan.designated_count(d.k, m) == Some(BigUint::from(direct))
                })
            })
    });

    let pass = plan_checks.iter().all(|c| c.pass)
        && designated_checks.iter().all(|c| c.upper_ok && c.lower_ok != Some(false))
        && disjoint_pair_failures.is_empty()
        && materialized_agrees != Some(false);
    PropeqReport {
        plan_checks,
        designated_checks,
        disjoint_pair_failures,
        disjoint_pairs_checked,
        materialized_agrees,
        pass,
    }
}

fn rank_index(rank: &str) -> usize {
    rank.parse().expect("materialized ranks fit in usize")
}

// ---------------------------------------------------------------------------
// Auxiliary sets and unions.

/// A base-`2^g` digit set whose dimension `log2(#digits)/g` is the closest
/// to a target among `g <= 16`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryIfs {
    pub g: u32,
    pub digits: Vec<u64>,
    pub dimension: f64,
    #[serde(with = "exact::as_string")]
    pub target: Rational,
    /// True when the dimension equals the target exactly.
    pub exact: bool,
}

pub fn auxiliary_ifs(target: &Rational) -> Result<AuxiliaryIfs> {
    if !(target > &Rational::zero() && target < &Rational::one()) {
        return Err(DimError::domain("auxiliary dimension must lie in (0, 1)"));
    }
    let t = exact::to_f64(target);
    let mut best: Option<(f64, u32, u64)> = None;
    for g in 1..=16u32 {
        let m = (t * g as f64).exp2().round().clamp(1.0, (1u64 << g) as f64) as u64;
        for m in [m.saturating_sub(1).max(1), m, (m + 1).min(1 << g)] {
            let err = ((m as f64).log2() / g as f64 - t).abs();
            if best.is_none_or(|b| err < b.0 - 1e-15) {
                best = Some((err, g, m));
            }
        }
    }
    let (_, g, m) = best.unwrap();
    let step = (1u64 << g) / m;
    let digits: Vec<u64> = (0..m).map(|j| j * step).collect();
    // m = 2^p with p/g = target is the only way to hit the target exactly
    let exact = m.is_power_of_two()
        && Rational::new((m.trailing_zeros() as i64).into(), (g as i64).into()) == *target;
    Ok(AuxiliaryIfs {
        g,
        dimension: (m as f64).log2() / g as f64,
        digits,
        target: target.clone(),
        exact,
    })
}

impl AuxiliaryIfs {
    pub fn build(&self, depth: u32) -> Result<(DyadicSetTree, SymbolicCounts)> {
        let patterns: Vec<Vec<u64>> = self.digits.iter().map(|&d| vec![d]).collect();
        let whole = depth.div_ceil(self.g) * self.g;
        let tree = DyadicSetTree::from_digit_ifs(1, self.g, &patterns, whole.max(self.g))?;
        Ok((tree.truncate(depth), SymbolicCounts::new(DigitIfsCounts::new(1, self.g, &patterns)?)))
    }
}

#[derive(Debug)]
struct SideBySideCounts {
    left: SymbolicCounts,
    right: SymbolicCounts,
}

impl CountFormula for SideBySideCounts {
    fn count_at(&self, n: u64) -> Option<BigUint> {
        if n == 0 {
            return Some(BigUint::one());
        }
        Some(self.left.count_at(n - 1)? + self.right.count_at(n - 1)?)
    }

    fn horizon(&self) -> Option<u64> {
        let plus = |h: Option<u64>| h.map(|h| h + 1);
        match (plus(self.left.horizon()), plus(self.right.horizon())) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Scaled copies of `left` in the lowest corner cube and `right` in the
/// highest corner cube of the first subdivision. Scaling preserves every
/// dimension, so the union has the larger of each pair of dimensions.
pub fn side_by_side(
    left: (&DyadicSetTree, &SymbolicCounts),
    right: (&DyadicSetTree, &SymbolicCounts),
) -> Result<(DyadicSetTree, SymbolicCounts)> {
    let dim = left.0.dim();
    if right.0.dim() != dim {
        return Err(DimError::domain("side-by-side union of sets of different dimension"));
    }
    let depth = left.0.max_depth().min(right.0.max_depth()) + 1;
    set::check_depth(dim, depth)?;
    let high = (1u128 << dim) - 1;
    let mut levels = vec![vec![0u128]];
    for n in 0..depth {
        let shift = dim as u32 * n;
        let mut keys: Vec<u128> = left.0.keys(n).to_vec();
        keys.extend(right.0.keys(n).iter().map(|k| (high << shift) | k));
        levels.push(keys);
    }
    let tree = DyadicSetTree::from_levels(dim, levels)?;
    let counts = SymbolicCounts::new(SideBySideCounts {
        left: left.1.clone(),
        right: right.1.clone(),
    });
    Ok((tree, counts))
}

/// The designated-interval set together with an auxiliary digit set of
/// dimension near `t`.
pub fn propeq_with_auxiliary(
    plan: &PropeqPlan,
    depth: u32,
) -> Result<(DyadicSetTree, SymbolicCounts, AuxiliaryIfs)> {
    let aux = auxiliary_ifs(&plan.t)?;
    let (main, main_counts, _) = propeq_set(plan, depth - 1)?;
    let (extra, extra_counts) = aux.build(depth - 1)?;
    let (tree, counts) = side_by_side((&main, &main_counts), (&extra, &extra_counts))?;
    Ok((tree, counts, aux))
}

/// For `0 < a < b < c < 1`: the alternating set with parameters `(a, b)`
/// next to the designated-interval set (plus auxiliary) with `(a, c)`.
pub fn three_dimension_union(
    a: &Rational,
    b: &Rational,
    c: &Rational,
    depth: u32,
) -> Result<(DyadicSetTree, SymbolicCounts)> {
    check_order(a, b)?;
    check_order(b, c)?;
    let budget = depth as u64 + 2;
    let e1 = example1_plan(a, b, &EpsSchedule::Default, budget)?;
    let (left, left_counts) = example1_set(&e1, depth - 1)?;
    let e2 = propeq_plan(a, c, budget)?;
    let (right, right_counts, _) = propeq_with_auxiliary(&e2, depth - 1)?;
    side_by_side((&left, &left_counts), (&right, &right_counts))
}

// ---------------------------------------------------------------------------
// Stage-wise Frostman measures.

/// Decides whether the part of a set inside a selected cube has modified
/// lower box dimension above `s`.
pub trait DimensionOracle: Sync {
    fn exceeds(&self, set: &DyadicSetTree, n: u32, i: usize, s: &Rational) -> bool;

    fn is_heuristic(&self) -> bool;

    fn describe(&self) -> String;
}

/// Every piece has the same known dimension, as for self-similar sets and
/// the homogeneous constructions above.
#[derive(Clone, Debug)]
pub struct ConstantDimension(pub Rational);

impl DimensionOracle for ConstantDimension {
    fn exceeds(&self, _: &DyadicSetTree, _: u32, _: usize, s: &Rational) -> bool {
        &self.0 > s
    }

    fn is_heuristic(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        format!("constant dimension {}", format_rational(&self.0))
    }
}

/// Least-squares slope of descendant counts over the next `window` levels,
/// admitted when it exceeds `s + margin`.
#[derive(Clone, Debug)]
pub struct WindowedSlope {
    pub window: u32,
    pub margin: f64,
}

impl DimensionOracle for WindowedSlope {
    fn exceeds(&self, set: &DyadicSetTree, n: u32, i: usize, s: &Rational) -> bool {
        let top = (n + self.window).min(set.max_depth());
        let points: Vec<(f64, f64)> = (n..=top)
            .map(|m| (m as f64, (set.descendants(n, i, m).len() as f64).log2()))
            .collect();
        match estimators::least_squares(&points) {
            Ok((slope, _, _)) => slope > exact::to_f64(s) + self.margin,
            Err(_) => false,
        }
    }

    fn is_heuristic(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("windowed slope over {} levels, margin {}", self.window, self.margin)
    }
}

/// The level `n` with `2^-(n+2) <= r < 2^-(n+1)`, or `None` when `r >= 1/2`.
pub fn level_of_radius(r: &Rational) -> Result<Option<u32>> {
    if r <= &Rational::zero() {
        return Err(DimError::domain("radii must be positive"));
    }
    // least a with 2^-a <= r
    let guess = (-exact::log2_rational(r)).ceil() as i64;
    let mut a = guess - 2;
    while exact::pow2(-a) > *r {
        a += 1;
    }
    let n = a - 2;
    if n < 0 {
        return Ok(None);
    }
    u32::try_from(n).map(Some).map_err(|_| DimError::domain("radius too small"))
}

#[derive(Clone, Debug)]
pub struct Stage {
    /// 1-based index into the radius sequence.
    pub k: usize,
    pub radius: Rational,
    pub level: u32,
    pub measure: DyadicMeasureTree,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageSummary {
    pub stage: usize,
    pub k: usize,
    pub radius: String,
    pub level: u32,
    pub cubes: usize,
    pub max_mass: String,
}

#[derive(Clone, Debug)]
pub struct StageConstruction {
    pub s: Rational,
    pub stages: Vec<Stage>,
    pub heuristic: bool,
    pub oracle: String,
}

/// Builds stage measures: each stage takes the least later radius index
/// whose level `n` gives every previous-stage cube `P` enough admitted
/// descendants, `#𝒟_n(P) >= 2^{d + s(n+2)} μ(P)`, and spreads `μ(P)` evenly
/// over them. `stages = None` builds as many as the depth allows.
pub fn mlbd_stage_measures(
    set: &DyadicSetTree,
    oracle: &dyn DimensionOracle,
    s: &Rational,
    radii: &[Rational],
    stages: Option<usize>,
) -> Result<StageConstruction> {
    if s <= &Rational::zero() {
        return Err(DimError::domain("s must be positive"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DimError::domain("radii must be strictly decreasing"));
    }
    let d = set.dim();
    let mut levels = Vec::new();
    for (idx, r) in radii.iter().enumerate() {
        if let Some(n) = level_of_radius(r)? {
            levels.push((idx + 1, n));
        }
    }
    // previous stage: level, keys and masses
    let mut prev_level = 0u32;
    let mut prev: Vec<(usize, Rational)> = vec![(0, Rational::one())];
    let mut built: Vec<Stage> = Vec::new();
    let mut cursor = 0;
    let mut best_ratio = f64::NEG_INFINITY;
    while stages.is_none_or(|m| built.len() < m) {
        let mut found = None;
        while cursor < levels.len() {
            let (k, n) = levels[cursor];
            cursor += 1;
            if n <= prev_level && !built.is_empty() || n > set.max_depth() {
                continue;
            }
            let exp = Rational::from_integer(d.into()) + s * Rational::from_integer((n + 2).into());
            let mut admitted = Vec::with_capacity(prev.len());
            let mut ok = true;
            for (i, w) in &prev {
                let range = set.descendants(prev_level, *i, n);
                let kept: Vec<usize> = range.filter(|&j| oracle.exceeds(set, n, j, s)).collect();
                let ratio = if kept.is_empty() {
                    f64::NEG_INFINITY
                } else {
                    (kept.len() as f64).log2() - exact::log2_rational(w) - exact::to_f64(&exp)
                };
                best_ratio = best_ratio.max(ratio);
                let x = Rational::from_integer(kept.len().into()) / w;
                if kept.is_empty() || exact::cmp_pow2(&x, &exp) == Ordering::Less {
                    ok = false;
                    break;
                }
                admitted.push((w.clone(), kept));
            }
            if ok {
                found = Some((k, n, admitted));
                break;
            }
        }
        let Some((k, n, admitted)) = found else { break };
        let mut leaves: Vec<(usize, Rational)> = admitted
            .into_iter()
            .flat_map(|(w, kept)| {
                let share = w / Rational::from_integer(kept.len().into());
                kept.into_iter().map(move |j| (j, share.clone()))
            })
            .collect();
        leaves.sort_by_key(|l| l.0);
        let keys: Vec<u128> = leaves.iter().map(|(j, _)| set.keys(n)[*j]).collect();
        let support = DyadicSetTree::from_leaf_keys(d, n, keys)?;
        let masses: Vec<Rational> = leaves.iter().map(|l| l.1.clone()).collect();
        let measure = DyadicMeasureTree::from_leaf_masses(support, masses, LeafModel::UniformOnCube)?;
        built.push(Stage { k, radius: radii[k - 1].clone(), level: n, measure });
        prev_level = n;
        prev = leaves;
    }
    if built.is_empty() || stages.is_some_and(|m| built.len() < m) {
        return Err(DimError::ConstructionFailed(format!(
            "{} stage(s) built, {}; no admissible level within depth {} (best log2 margin {:.3})",
            built.len(),
            match stages {
                Some(m) => format!("{m} requested"),
                None => "at least one needed".into(),
            },
            set.max_depth(),
            best_ratio
        )));
    }
    Ok(StageConstruction {
        s: s.clone(),
        stages: built,
        heuristic: oracle.is_heuristic(),
        oracle: oracle.describe(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    #[serde(with = "exact::as_string")]
    pub s: Rational,
    pub oracle: String,
    pub heuristic: bool,
    pub stages: Vec<StageSummary>,
    /// `μ_m(C) <= 2^{-(d+2s)} 2^{-n_i s}` for every stage `m`, every `i <= m`.
    pub mass_bounds_hold: bool,
    /// Later stages keep the masses of earlier-stage cubes.
    pub masses_preserved: bool,
    /// Sampled `μ(U(x, r_i)) <= r_i^s` for the deepest stage.
    pub cover_samples: usize,
    pub cover_failures: usize,
    pub support_in_set: bool,
    pub pass: bool,
}

impl StageConstruction {
    pub fn summaries(&self) -> Vec<StageSummary> {
        self.stages
            .iter()
            .enumerate()
            .map(|(m, st)| StageSummary {
                stage: m + 1,
                k: st.k,
                radius: format_rational(&st.radius),
                level: st.level,
                cubes: st.measure.support().len_at(st.level),
                max_mass: format_rational(&st.measure.max_cube_mass(st.level).unwrap()),
            })
            .collect()
    }

    pub fn deepest(&self) -> &DyadicMeasureTree {
        &self.stages.last().unwrap().measure
    }

    /// Checks the stage mass bounds exactly and the ball cover bound at
    /// `samples` seeded uniform points.
    pub fn verify(&self, set: &DyadicSetTree, samples: usize, seed: u64) -> Result<StageReport> {
        let d = Rational::from_integer(self.stages[0].measure.dim().into());
        let s = &self.s;
        let mut mass_bounds_hold = true;
        let mut masses_preserved = true;
        for (m, st) in self.stages.iter().enumerate() {
            for (i, earlier) in self.stages[..=m].iter().enumerate() {
                let n = earlier.level;
                let exp = -(&d + s * Rational::from_integer((n + 2).into()));
                let max = st.measure.max_cube_mass(n)?;
                if exact::cmp_pow2(&max, &exp) == Ordering::Greater {
                    mass_bounds_hold = false;
                }
                if i < m && st.measure.masses(n) != self.stages[m - 1].measure.masses(n) {
                    masses_preserved = false;
                }
            }
        }
        let deepest = self.deepest();
        let support_in_set = self.stages.iter().all(|st| {
            st.measure.support().keys(st.level).iter().all(|&k| set.position(st.level, k).is_some())
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = deepest.dim();
        let points: Vec<DyadicPoint> = (0..samples)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
                DyadicPoint::snap(&x, 40)
            })
            .collect::<Result<_>>()?;
        let failures: usize = points
            .par_iter()
            .map(|x| {
                self.stages
                    .iter()
                    .filter(|st| {
                        let mass = deepest.cover_mass(x, &st.radius, st.level).unwrap();
                        !mass.is_zero() && exact::cmp_pow(&mass, &st.radius, s) == Ordering::Greater
                    })
                    .count()
            })
            .sum();
        Ok(StageReport {
            s: s.clone(),
            oracle: self.oracle.clone(),
            heuristic: self.heuristic,
            stages: self.summaries(),
            mass_bounds_hold,
            masses_preserved,
            cover_samples: samples,
            cover_failures: failures,
            support_in_set,
            pass: mass_bounds_hold && masses_preserved && failures == 0,
        })
    }
}

/// `r_k = 2^-k` for `k = 1..=count`.
pub fn halving_radii(count: u32) -> Vec<Rational> {
    (1..=count as i64).map(|k| exact::pow2(-k)).collect()
}
