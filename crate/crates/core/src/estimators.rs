//! Log-log slope fitting, finite-window liminf/limsup proxies, and the
//! dimension predicates checked on dyadic measures.
//!
//! Windowed slopes are proxies: nothing here claims convergence, and every
//! estimate carries the window it was fitted on.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{DyadicCode, DyadicPoint};
use crate::error::{DimError, Result};
use crate::exact;
use crate::measure::{self, BracketConfig, DyadicMeasureTree, LeafModel};
use crate::set::{self, DyadicSetTree, SymbolicCounts};
use crate::Rational;

pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    LiminfProxy,
    LimsupProxy,
    FullFit,
    /// The window over the deepest scales.
    TailWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeEstimate {
    pub value: f64,
    pub window: (f64, f64),
    pub residual: f64,
    pub variant: Variant,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub lower: SlopeEstimate,
    pub full: SlopeEstimate,
    pub upper: SlopeEstimate,
    pub tail: SlopeEstimate,
    pub window_len: usize,
}

/// Least-squares `(slope, intercept, rms residual)`.
pub fn least_squares(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(DimError::domain("a line fit needs at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * (1.0 + mx * mx) * n {
        return Err(DimError::domain("degenerate abscissae"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok((slope, intercept, (rss / n).sqrt()))
}

/// Full least-squares slope plus min/max over sliding windows of
/// `window_len` consecutive points.
pub fn slope_fit(points: &[(f64, f64)], window_len: usize) -> Result<SlopeFit> {
    if points.len() < 4 {
        return Err(DimError::domain(format!("slope fit needs >= 4 points, got {}", points.len())));
    }
    let increasing = points.windows(2).all(|w| w[1].0 > w[0].0);
    let decreasing = points.windows(2).all(|w| w[1].0 < w[0].0);
    if !(increasing || decreasing) {
        return Err(DimError::domain("scales must be strictly monotone"));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(DimError::domain("non-finite point in slope data"));
    }
    let window_len = window_len.clamp(2, points.len());
    let estimate = |slice: &[(f64, f64)], variant| -> Result<SlopeEstimate> {
        let (value, _, residual) = least_squares(slice)?;
        Ok(SlopeEstimate {
            value,
            window: (slice[0].0, slice[slice.len() - 1].0),
            residual,
            variant,
        })
    };
    let full = estimate(points, Variant::FullFit)?;
    let windows: Vec<SlopeEstimate> = points
        .windows(window_len)
        .map(|w| estimate(w, Variant::TailWindow))
        .collect::<Result<_>>()?;
    let pick = |better: Ordering, variant| {
        let mut best = windows
            .iter()
            .cloned()
            .reduce(|a, b| if b.value.total_cmp(&a.value) == better { b } else { a })
            .expect("at least one window");
        best.variant = variant;
        best
    };
    let lower = pick(Ordering::Less, Variant::LiminfProxy);
    let upper = pick(Ordering::Greater, Variant::LimsupProxy);
    let tail = windows.last().cloned().expect("at least one window");
    Ok(SlopeFit { lower, full, upper, tail, window_len })
}

/// Scale-ratio proxies `y_n / n` over the deeper half of the levels: the
/// chord slope from the coarsest scale, i.e. the finite form of
/// `liminf/limsup log N_r / -log r`. Unlike sliding-window slopes these do
/// not track the local growth rate, which for sets built from alternating
/// stretches swings between the extreme branching rates. The lower proxy
/// is the smallest ratio; the upper proxy must recur, so it is the smaller
/// of the two half-window maxima (mirroring the packing proxy).
pub fn ratio_proxies(points: &[(f64, f64)]) -> Result<(SlopeEstimate, SlopeEstimate)> {
    let levels: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ratios: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && deep_level(p.0, &levels))
        .map(|p| (p.0, p.1 / p.0))
        .collect();
    if ratios.is_empty() {
        return Err(DimError::domain("ratio proxies need a positive level"));
    }
    let best = |part: &[(f64, f64)], better: Ordering| {
        part.iter()
            .copied()
            .reduce(|a, b| if b.1.total_cmp(&a.1) == better { b } else { a })
            .expect("non-empty part")
    };
    let estimate = |(n, value): (f64, f64), variant| SlopeEstimate { value, window: (0.0, n), residual: 0.0, variant };
    let lower = best(&ratios, Ordering::Less);
    let (first, second) = ratios.split_at(ratios.len() / 2);
    let upper = if first.is_empty() {
        best(second, Ordering::Greater)
    } else {
        best(&[best(first, Ordering::Greater), best(second, Ordering::Greater)], Ordering::Less)
    };
    Ok((estimate(lower, Variant::LiminfProxy), estimate(upper, Variant::LimsupProxy)))
}

/// Whether `n` lies in the deeper half of the span of `levels`.
fn deep_level(n: f64, levels: &[f64]) -> bool {
    let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    2.0 * n >= lo + hi
}

/// `(n, log2 #𝒞_n)` over the given levels, from the tree or symbolic counts.
pub fn box_profile(
    set: &DyadicSetTree,
    symbolic: Option<&SymbolicCounts>,
    levels: &[u64],
) -> Result<Vec<(f64, f64)>> {
    levels
        .iter()
        .map(|&n| {
            let log = match symbolic.and_then(|s| s.log2_count_at(n)) {
                Some(v) if n > set.max_depth() as u64 => v,
                _ => exact::log2_biguint(&set::box_count(set, symbolic, n)?),
            };
            Ok((n as f64, log))
        })
        .collect()
}

/// Slopes of `log2 #𝒞_n` against `n`.
pub fn box_dims(
    set: &DyadicSetTree,
    symbolic: Option<&SymbolicCounts>,
    levels: &[u64],
    window_len: usize,
) -> Result<SlopeFit> {
    slope_fit(&box_profile(set, symbolic, levels)?, window_len)
}

/// `(n, -log2 Σ μ(C)²)` over the given levels.
pub fn correlation_profile(mu: &DyadicMeasureTree, levels: &[u32]) -> Result<Vec<(f64, f64)>> {
    levels
        .par_iter()
        .map(|&n| {
            let sum = mu.dyadic_correlation_sum(n)?;
            Ok((n as f64, -exact::log2_rational(&sum)))
        })
        .collect()
}

/// Slopes of `log2 Σ_C μ(C)²` against `-n`.
pub fn correlation_dims(mu: &DyadicMeasureTree, levels: &[u32], window_len: usize) -> Result<SlopeFit> {
    slope_fit(&correlation_profile(mu, levels)?, window_len)
}

/// Slopes of `log2 corr(r)` against `log2 r` from ball-correlation bracket
/// midpoints at `r = 2^-n`.
pub fn ball_correlation_dims(mu: &DyadicMeasureTree, levels: &[u32], window_len: usize) -> Result<SlopeFit> {
    let points = levels
        .par_iter()
        .map(|&n| {
            let b = mu.ball_correlation_bracket(&exact::pow2(-(n as i64)), BracketConfig::default())?;
            Ok((n as f64, -b.midpoint().log2()))
        })
        .collect::<Result<Vec<_>>>()?;
    slope_fit(&points, window_len)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsOnWindow,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleCheck {
    pub level: u32,
    /// `None` when the bracket straddles the threshold.
    pub pass: Option<bool>,
    pub witness: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredicateReport {
    pub predicate: String,
    pub s: String,
    pub checks: Vec<ScaleCheck>,
    pub verdict: Verdict,
}

impl PredicateReport {
    /// The verdict follows the per-scale records: any failure fails, any
    /// undecided scale makes the report inconclusive.
    fn new(predicate: &str, s: &Rational, checks: Vec<ScaleCheck>) -> Self {
        let verdict = if checks.iter().any(|c| c.pass == Some(false)) {
            Verdict::Fails
        } else if checks.iter().any(|c| c.pass.is_none()) {
            Verdict::Inconclusive
        } else {
            Verdict::HoldsOnWindow
        };
        Self { predicate: predicate.into(), s: exact::format_rational(s), checks, verdict }
    }
}

fn le_power(x: &Rational, r: &Rational, s: &Rational) -> bool {
    measure::mass_vs_power(x, r, s) != Ordering::Greater
}

/// Per-scale checks at `r = 2^-n` of the three sequence characterizations of
/// the upper correlation dimension: pair integral, ball supremum, and
/// maximal dyadic cube mass, each compared with `r^s`.
pub fn ucod_predicates(mu: &DyadicMeasureTree, s: &Rational, levels: &[u32]) -> Result<Vec<PredicateReport>> {
    let two = Rational::from_integer(BigInt::from(2));
    for &n in levels {
        if n > mu.depth() {
            return Err(DimError::unavailable(format!(
                "level {n} beyond measure depth {}",
                mu.depth()
            )));
        }
    }
    let pair: Vec<ScaleCheck> = levels
        .par_iter()
        .map(|&n| {
            let r = exact::pow2(-(n as i64));
            let b = mu.ball_correlation_bracket(&r, BracketConfig::default())?;
            let pass = if le_power(&b.upper, &r, s) {
                Some(true)
            } else if !le_power(&b.lower, &r, s) {
                Some(false)
            } else {
                None
            };
            Ok(ScaleCheck {
                level: n,
                pass,
                witness: format!("corr in [{}, {}]", b.lower, b.upper),
            })
        })
        .collect::<Result<_>>()?;
    let ball: Vec<ScaleCheck> = levels
        .iter()
        .map(|&n| {
            let r = exact::pow2(-(n as i64));
            let upper = if n >= 2 { max_block_mass(mu, n - 2)? } else { Rational::one() };
            // a cube of diameter <= r sits inside a ball of radius r about its center
            let inner = n + (mu.dim() as f64).sqrt().log2().ceil() as u32;
            let lower = max_mass_below(mu, inner);
            let pass = if le_power(&upper, &r, s) {
                Some(true)
            } else if !le_power(&lower, &r, s) {
                Some(false)
            } else {
                None
            };
            Ok(ScaleCheck { level: n, pass, witness: format!("sup ball mass in [{lower}, {upper}]") })
        })
        .collect::<Result<_>>()?;
    let cube: Vec<ScaleCheck> = levels
        .iter()
        .map(|&n| {
            let m = mu.max_cube_mass(n)?;
            let pass = le_power(&m, &two.recip(), &(s * Rational::from_integer(BigInt::from(n))))
                || (n == 0 && m.is_one());
            Ok(ScaleCheck { level: n, pass: Some(pass), witness: format!("max cube mass {m}") })
        })
        .collect::<Result<_>>()?;
    Ok(vec![
        PredicateReport::new("pair-integral", s, pair),
        PredicateReport::new("ball-supremum", s, ball),
        PredicateReport::new("cube-maximum", s, cube),
    ])
}

/// Largest mass of a cube at level `n`, following the leaf model below the
/// materialized depth.
fn max_mass_below(mu: &DyadicMeasureTree, n: u32) -> Rational {
    if n <= mu.depth() {
        return mu.max_cube_mass(n).expect("level checked");
    }
    match mu.leaf_model() {
        LeafModel::AtomAtPoint(_) => mu.max_cube_mass(mu.depth()).expect("depth exists"),
        LeafModel::UniformOnCube => {
            let extra = (n - mu.depth()) as usize * mu.dim();
            mu.max_cube_mass(mu.depth()).expect("depth exists")
                / Rational::from_integer(BigInt::one() << extra)
        }
    }
}

/// Largest total mass of a `2 × ... × 2` block of adjacent level-`n` cubes;
/// any ball of radius below `2^-(n+1)` lies in such a block.
fn max_block_mass(mu: &DyadicMeasureTree, n: u32) -> Result<Rational> {
    let dim = mu.dim();
    let codes = mu.support().codes(n);
    let mut best = Rational::zero();
    for code in &codes {
        for corner in 0..1usize << dim {
            let base: Vec<i64> = code
                .index()
                .iter()
                .enumerate()
                .map(|(k, &j)| j as i64 - ((corner >> k) & 1) as i64)
                .collect();
            let mut total = Rational::zero();
            for offset in 0..1usize << dim {
                let idx: Option<Vec<u64>> = base
                    .iter()
                    .enumerate()
                    .map(|(k, &b)| u64::try_from(b + ((offset >> k) & 1) as i64).ok())
                    .collect();
                if let Some(idx) = idx {
                    if idx.iter().all(|&j| j < 1u64 << n) {
                        total += mu.mass_of(&DyadicCode::new(n, idx)?);
                    }
                }
            }
            if total > best {
                best = total;
            }
        }
    }
    Ok(best)
}

/// Finite proxy for "`μ(C_n(x)) <= 2^-ns` for infinitely many `n`": every
/// leaf must hit the bound at least once in each half of the window.
pub fn packing_predicate(mu: &DyadicMeasureTree, s: &Rational, levels: &[u32]) -> Result<PredicateReport> {
    if levels.len() < 2 {
        return Err(DimError::domain("packing proxy needs at least two levels"));
    }
    let depth = mu.depth();
    if let Some(&n) = levels.iter().find(|&&n| n > depth) {
        return Err(DimError::unavailable(format!("level {n} beyond measure depth {depth}")));
    }
    let half = levels.len() / 2;
    let halves = [&levels[..half], &levels[half..]];
    let leaves = mu.support().codes(depth);
    let hits = |n: u32| -> Vec<bool> {
        mu.masses(n)
            .iter()
            .map(|m| le_power(m, &exact::rational(1, 2), &(s * Rational::from_integer(BigInt::from(n)))))
            .collect()
    };
    let per_level: Vec<(u32, Vec<bool>)> = levels.iter().map(|&n| (n, hits(n))).collect();
    let mut checks = Vec::new();
    for (h, part) in halves.iter().enumerate() {
        let mut missing = 0usize;
        for leaf in &leaves {
            let covered = part.iter().any(|&n| {
                let anc = leaf.ancestor(n).expect("level within depth");
                let i = mu.support().position(n, anc.key()).expect("ancestor selected");
                per_level.iter().find(|p| p.0 == n).expect("level listed").1[i]
            });
            if !covered {
                missing += 1;
            }
        }
        checks.push(ScaleCheck {
            level: part.first().copied().unwrap_or_default(),
            pass: Some(missing == 0),
            witness: format!("half {h}: {missing} of {} leaves without a hit", leaves.len()),
        });
    }
    Ok(PredicateReport::new("packing-per-half-window", s, checks))
}

/// Packing proxy for trees where every cube at a level carries the same mass
/// `1/#𝒞_n`, decided from counts alone: `#𝒞_n >= 2^(ns)`.
pub fn packing_predicate_from_counts(
    counts: &SymbolicCounts,
    s: &Rational,
    levels: &[u64],
) -> Result<PredicateReport> {
    if levels.len() < 2 {
        return Err(DimError::domain("packing proxy needs at least two levels"));
    }
    let half = levels.len() / 2;
    let mut checks = Vec::new();
    for part in [&levels[..half], &levels[half..]] {
        let hit = part.iter().find(|&&n| {
            counts
                .count_at(n)
                .map(|c| {
                    let c = Rational::from_integer(BigInt::from(c));
                    exact::cmp_pow2(&c, &(s * Rational::from_integer(BigInt::from(n)))) != Ordering::Less
                })
                .unwrap_or(false)
        });
        checks.push(ScaleCheck {
            level: part[0] as u32,
            pass: Some(hit.is_some()),
            witness: match hit {
                Some(n) => format!("hit at level {n}"),
                None => "no level with mass below 2^-ns".into(),
            },
        });
    }
    Ok(PredicateReport::new("packing-per-half-window", s, checks))
}

/// Best Frostman exponent over the supplied measures: for each measure the
/// smallest `-log2(max cube mass)/n` over the levels, then the largest over
/// measures.
pub fn frostman_proxy(measures: &[&DyadicMeasureTree], levels: &[u32]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for mu in measures {
        let profile = mu.frostman_profile(levels)?;
        let worst = profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        best = best.max(worst);
    }
    Ok(best)
}

/// Fraction of mass on level-`n` cubes violating `μ(C) <= 2^-ns`: the
/// empirical stand-in for discarding a small-mass exceptional set.
pub fn frostman_violation_mass(mu: &DyadicMeasureTree, s: &Rational, n: u32) -> Result<Rational> {
    let exp = s * Rational::from_integer(BigInt::from(n));
    Ok(measure::sum_rationals(
        mu.masses(n)
            .iter()
            .filter(|m| !le_power(m, &exact::rational(1, 2), &exp))
            .cloned(),
    ))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct InequalityInputs {
    pub frostman: Option<f64>,
    pub lower_box: Option<SlopeEstimate>,
    pub upper_box: Option<SlopeEstimate>,
    pub lower_corr: Option<SlopeEstimate>,
    pub upper_corr: Option<SlopeEstimate>,
    /// Packing-proxy verdicts at tested exponents.
    pub packing: Vec<(f64, Verdict)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderingCheck {
    pub relation: String,
    pub left: f64,
    pub right: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityReport {
    pub inputs: InequalityInputs,
    /// Bracket `[frostman proxy, lower box]` for the modified lower box dimension.
    pub mlbd_bracket: Option<(f64, f64)>,
    pub orderings: Vec<OrderingCheck>,
    pub gaps: Vec<String>,
    pub tolerance: f64,
}

impl InequalityReport {
    pub fn all_pass(&self) -> bool {
        self.orderings.iter().all(|o| o.pass)
    }
}

/// Tabulates the estimates and checks `frostman <= lower box <= upper box`,
/// `lower corr <= upper corr`, and that the packing proxy holds at every
/// tested exponent below the upper correlation proxy.
pub fn inequality_report(inputs: InequalityInputs, tolerance: f64) -> InequalityReport {
    let mut orderings = Vec::new();
    let mut gaps = Vec::new();
    let mut le = |relation: &str, left: Option<f64>, right: Option<f64>, tol: f64| match (left, right) {
        (Some(l), Some(r)) => orderings.push(OrderingCheck {
            relation: relation.into(),
            left: l,
            right: r,
            pass: l <= r + tol,
        }),
        _ => gaps.push(format!("{relation}: missing input")),
    };
    let v = |e: &Option<SlopeEstimate>| e.as_ref().map(|e| e.value);
    le("frostman <= lower-box", inputs.frostman, v(&inputs.lower_box), tolerance);
    le("lower-box <= upper-box", v(&inputs.lower_box), v(&inputs.upper_box), tolerance);
    le("lower-corr <= upper-corr", v(&inputs.lower_corr), v(&inputs.upper_corr), tolerance);
    le("lower-corr <= upper-box", v(&inputs.lower_corr), v(&inputs.upper_box), tolerance);
    // the upper correlation dimension is bounded by the packing dimension:
    // the packing proxy must hold at every exponent below the correlation proxy
    for &(s, verdict) in &inputs.packing {
        if let Some(uc) = v(&inputs.upper_corr) {
            if s <= uc - tolerance {
                orderings.push(OrderingCheck {
                    relation: format!("packing holds at s = {s:.3} below upper-corr"),
                    left: s,
                    right: uc,
                    pass: verdict == Verdict::HoldsOnWindow,
                });
            }
        }
    }
    let mlbd_bracket = match (inputs.frostman, v(&inputs.lower_box)) {
        (Some(f), Some(l)) => Some((f, l)),
        _ => None,
    };
    InequalityReport { inputs, mlbd_bracket, orderings, gaps, tolerance }
}

/// Gathers the chain inputs for a materialized measure: scale-ratio box
/// proxies from the support (or its symbolic counts), a Frostman proxy from
/// the measure and the uniform measure, scale-ratio correlation proxies
/// from the measure, and the packing proxy at each exponent. The packing
/// proxy runs over the deeper half of the levels, the same scales the
/// ratio proxies are read from.
pub fn chain_inputs(
    mu: &DyadicMeasureTree,
    symbolic: Option<&SymbolicCounts>,
    levels: &[u32],
    packing_exponents: &[Rational],
) -> Result<InequalityInputs> {
    let set = mu.support();
    let (lower_box, upper_box) = ratio_proxies(&box_profile(set, symbolic, &widen(levels))?)?;
    let (lower_corr, upper_corr) = ratio_proxies(&correlation_profile(mu, levels)?)?;
    let frostman = if mu.is_atomic() {
        frostman_proxy(&[mu], levels)?
    } else {
        let uniform = DyadicMeasureTree::uniform_on_set(set)?;
        frostman_proxy(&[mu, &uniform], levels)?
    };
    let span: Vec<f64> = levels.iter().map(|&n| n as f64).collect();
    let deep: Vec<u32> = levels.iter().copied().filter(|&n| n > 0 && deep_level(n as f64, &span)).collect();
    let packing = packing_exponents
        .iter()
        .map(|s| Ok((exact::to_f64(s), packing_predicate(mu, s, &deep)?.verdict)))
        .collect::<Result<_>>()?;
    Ok(InequalityInputs {
        frostman: Some(frostman),
        lower_box: Some(lower_box),
        upper_box: Some(upper_box),
        lower_corr: Some(lower_corr),
        upper_corr: Some(upper_corr),
        packing,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichLevel {
    pub level: u32,
    pub box_count: u64,
    /// Smallest dyadic correlation sum among the candidate measures.
    pub min_correlation_sum: String,
    pub lower_holds: bool,
    /// Net-point measure: ball correlation at `r = 2^-(n+1)` equals `1/N`.
    pub net_attains: bool,
    /// Uniform level-`n` measure: dyadic correlation sum equals `1/N`.
    pub uniform_attains: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub levels: Vec<SandwichLevel>,
    pub random_measures: usize,
    pub seed: u64,
    pub pass: bool,
}

/// Checks `1/#𝒞_n <= Σ μ(C)²` on the uniform measure and seeded random
/// leaf-mass measures, and that both witness measures with weights `1/#𝒞_n`
/// attain `1/#𝒞_n` exactly.
pub fn lemma22_sandwich(set: &DyadicSetTree, levels: &[u32], random_measures: usize, seed: u64) -> Result<SandwichReport> {
    let depth = levels.iter().copied().max().ok_or_else(|| DimError::domain("no levels"))?;
    if depth > set.max_depth() {
        return Err(DimError::unavailable(format!("level {depth} beyond set depth {}", set.max_depth())));
    }
    let tree = set.truncate(depth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = vec![DyadicMeasureTree::uniform_on_set(&tree)?];
    let leaves = tree.len_at(depth);
    for _ in 0..random_measures {
        let w: Vec<Rational> = (0..leaves).map(|_| exact::rational(rng.gen_range(1..1000), 1)).collect();
        let total = measure::sum_rationals(w.iter().cloned());
        let w = w.into_iter().map(|x| x / &total).collect();
        candidates.push(DyadicMeasureTree::from_leaf_masses(tree.clone(), w, LeafModel::UniformOnCube)?);
    }
    let out: Vec<SandwichLevel> = levels
        .par_iter()
        .map(|&n| {
            let count = tree.len_at(n);
            let inv = Rational::new(BigInt::one(), BigInt::from(count));
            let sums: Vec<Rational> = candidates
                .iter()
                .map(|mu| mu.dyadic_correlation_sum(n))
                .collect::<Result<_>>()?;
            let min = sums.iter().min().cloned().expect("candidates exist");
            let lower_holds = sums.iter().all(|x| x >= &inv);
            let net = measure::net_measure(&tree, n)?;
            let b = net.ball_correlation_bracket(&exact::pow2(-(n as i64) - 1), BracketConfig::default())?;
            let uniform = DyadicMeasureTree::equal_leaf_masses(&tree.truncate(n))?;
            Ok(SandwichLevel {
                level: n,
                box_count: count as u64,
                min_correlation_sum: exact::format_rational(&min),
                lower_holds,
                net_attains: b.is_point() && b.lower == inv,
                uniform_attains: uniform.dyadic_correlation_sum(n)? == inv,
            })
        })
        .collect::<Result<_>>()?;
    let pass = out.iter().all(|l| l.lower_holds && l.net_attains && l.uniform_attains);
    Ok(SandwichReport { levels: out, random_measures, seed, pass })
}

#[derive(Clone, Debug, Serialize)]
pub struct NetBoundLevel {
    pub level: u32,
    pub bound: String,
    pub min_ball_mass: String,
    pub centers: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetBoundReport {
    pub normalizer: String,
    pub levels: Vec<NetBoundLevel>,
    pub pass: bool,
}

/// For the anti-Frostman measure on the given levels, checks
/// `μ(B(x, 2^(1-k))) >= c k^-2 / N_k` exactly at the centers and upper
/// corners of every selected cube at the set's depth.
pub fn net_ball_lower_bound(set: &DyadicSetTree, levels: &[u32]) -> Result<NetBoundReport> {
    let (mu, c) = measure::anti_frostman_measure(set, levels)?;
    let depth = set.max_depth();
    let centers: Vec<DyadicPoint> = set
        .codes(depth)
        .into_iter()
        .flat_map(|code| [code.center(), code.upper_corner()])
        .collect();
    let out: Vec<NetBoundLevel> = levels
        .par_iter()
        .map(|&k| {
            let n_k = set.len_at(k);
            let bound = &c / Rational::from_integer(BigInt::from(k as u64 * k as u64 * n_k as u64));
            let r = exact::pow2(1 - k as i64);
            let mut min = Rational::one();
            for x in &centers {
                let m = mu.atomic_ball_mass(x, &r)?;
                if m < min {
                    min = m;
                }
            }
            Ok(NetBoundLevel {
                level: k,
                bound: exact::format_rational(&bound),
                min_ball_mass: exact::format_rational(&min),
                centers: centers.len(),
                pass: min >= bound,
            })
        })
        .collect::<Result<_>>()?;
    let pass = out.iter().all(|l| l.pass);
    Ok(NetBoundReport { normalizer: exact::format_rational(&c), levels: out, pass })
}

/// Integer levels `lo..=hi`.
pub fn level_range(lo: u32, hi: u32) -> Vec<u32> {
    (lo..=hi).collect()
}

/// Converts a measure level list for use with set-level helpers.
pub fn widen(levels: &[u32]) -> Vec<u64> {
    levels.iter().map(|&n| n as u64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::set::middle_half_cantor;
    use exact::rational;
    use proptest::prelude::*;

    #[test]
    fn line_fits() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.5 * i as f64 + 3.0)).collect();
        let f = slope_fit(&pts, 4).unwrap();
        for e in [&f.lower, &f.full, &f.upper, &f.tail] {
            assert!((e.value - 0.5).abs() < 1e-12);
        }
        let flat: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0)).collect();
        assert!(slope_fit(&flat, 3).unwrap().full.value.abs() < 1e-12);
        assert!(slope_fit(&pts[..3], 2).is_err());
        let bad = vec![(0.0, 0.0), (1.0, 1.0), (1.0, 2.0), (2.0, 0.0)];
        assert!(slope_fit(&bad, 2).is_err());
    }

    #[test]
    fn alternating_segments() {
        // slope 0.4 on even blocks and 0.7 on odd blocks of 10 levels
        let mut y = 0.0;
        let mut pts = vec![(0.0, 0.0)];
        for i in 1..=80 {
            y += if (i - 1) / 10 % 2 == 0 { 0.4 } else { 0.7 };
            pts.push((i as f64, y));
        }
        let f = slope_fit(&pts, 8).unwrap();
        assert!((f.lower.value - 0.4).abs() < 1e-9 && (f.upper.value - 0.7).abs() < 1e-9);
        assert!(f.lower.value <= f.full.value && f.full.value <= f.upper.value);
    }

    #[test]
    fn ratio_proxies_follow_the_chord() {
        // growth 1 on levels 1..=4 and 9..=16, flat elsewhere: local slopes
        // swing between 0 and 1 while the chord ratios stay in between
        let mut y = 0.0;
        let mut pts = vec![(0.0, 0.0)];
        for n in 1..=20 {
            if n <= 4 || (9..=16).contains(&n) {
                y += 1.0;
            }
            pts.push((n as f64, y));
        }
        let (lower, upper) = ratio_proxies(&pts).unwrap();
        // deep levels 10..=20; halves 10..=14 and 15..=20
        assert_eq!((lower.value, lower.window), (6.0 / 10.0, (0.0, 10.0)));
        assert_eq!((upper.value, upper.window), (10.0 / 14.0, (0.0, 14.0)));
        assert!(ratio_proxies(&[(0.0, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn ratio_proxies_are_ordered(ys in proptest::collection::vec(0.0f64..1.0, 2..40)) {
            let mut acc = 0.0;
            let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, d)| { acc += d; (i as f64 + 1.0, acc) }).collect();
            let (lower, upper) = ratio_proxies(&pts).unwrap();
            let ratios: Vec<f64> = pts.iter().map(|p| p.1 / p.0).collect();
            let hi = ratios.iter().copied().fold(0.0, f64::max);
            prop_assert!(lower.value <= upper.value && upper.value <= hi);
        }

        #[test]
        fn proxies_bracket_full_fit(ys in proptest::collection::vec(0.0f64..1.0, 6..40), w in 2usize..6) {
            let mut acc = 0.0;
            let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, d)| { acc += d; (i as f64, acc) }).collect();
            let f = slope_fit(&pts, w).unwrap();
            prop_assert!(f.lower.value <= f.upper.value + 1e-12);
            prop_assert!(f.lower.value <= f.tail.value + 1e-12 && f.tail.value <= f.upper.value + 1e-12);
            // with consecutive-pair windows the full fit is a weighted mean of window slopes
            if w == 2 {
                prop_assert!(f.lower.value <= f.full.value + 1e-9 && f.full.value <= f.upper.value + 1e-9);
            }
        }
    }

    #[test]
    fn box_dims_examples() {
        let full = DyadicSetTree::full(1, 12).unwrap();
        let f = box_dims(&full, None, &widen(&level_range(1, 12)), 4).unwrap();
        assert!((f.lower.value - 1.0).abs() < 0.01 && (f.upper.value - 1.0).abs() < 0.01);

        let (cantor, counts) = middle_half_cantor(10).unwrap();
        let f = box_dims(&cantor, Some(&counts), &widen(&level_range(8, 24)), 9).unwrap();
        assert!((f.full.value - 0.5).abs() < 1e-12);
        assert!((f.lower.value - 0.5).abs() < 0.02 && (f.upper.value - 0.5).abs() < 0.02);
    }

    #[test]
    fn correlation_dims_examples() {
        let full = DyadicMeasureTree::uniform_on_set(&DyadicSetTree::full(1, 10).unwrap()).unwrap();
        let f = correlation_dims(&full, &level_range(1, 10), 4).unwrap();
        assert!((f.lower.value - 1.0).abs() < 1e-12 && (f.upper.value - 1.0).abs() < 1e-12);

        let (cantor, _) = middle_half_cantor(16).unwrap();
        let mu = DyadicMeasureTree::uniform_on_set(&cantor).unwrap();
        let f = correlation_dims(&mu, &level_range(4, 16), 5).unwrap();
        assert!((f.lower.value - 0.5).abs() < 0.02 && (f.upper.value - 0.5).abs() < 0.02);
    }

    #[test]
    fn cube_predicates_on_lebesgue() {
        let mu = DyadicMeasureTree::uniform_on_set(&DyadicSetTree::full(1, 8).unwrap()).unwrap();
        let levels = level_range(2, 8);
        let reports = ucod_predicates(&mu, &rational(1, 1), &levels).unwrap();
        assert_eq!(reports[2].verdict, Verdict::HoldsOnWindow);
        let reports = ucod_predicates(&mu, &rational(11, 10), &levels).unwrap();
        assert!(reports.iter().all(|r| r.verdict == Verdict::Fails));
        assert!(reports[2].checks.iter().all(|c| c.pass == Some(false)));
        // half-dimension passes everywhere on the pair integral and cube max
        let reports = ucod_predicates(&mu, &rational(1, 2), &levels).unwrap();
        assert_eq!(reports[0].verdict, Verdict::HoldsOnWindow);
        assert_eq!(reports[2].verdict, Verdict::HoldsOnWindow);
    }

    #[test]
    fn packing_examples() {
        let mu = DyadicMeasureTree::uniform_on_set(&DyadicSetTree::full(1, 8).unwrap()).unwrap();
        let r = packing_predicate(&mu, &rational(1, 1), &level_range(1, 8)).unwrap();
        assert_eq!(r.verdict, Verdict::HoldsOnWindow);
        let atom = DyadicMeasureTree::atomic(1, &[(DyadicPoint { level: 2, coords: vec![1] }, rational(1, 1))], 8).unwrap();
        let r = packing_predicate(&atom, &rational(1, 10), &level_range(1, 8)).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        let (_, counts) = middle_half_cantor(2).unwrap();
        let r = packing_predicate_from_counts(&counts, &rational(1, 2), &widen(&level_range(10, 40))).unwrap();
        assert_eq!(r.verdict, Verdict::HoldsOnWindow);
        let r = packing_predicate_from_counts(&counts, &rational(3, 5), &widen(&level_range(10, 40))).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
    }

    #[test]
    fn sandwich_on_cantor() {
        let (cantor, _) = middle_half_cantor(12).unwrap();
        let r = lemma22_sandwich(&cantor, &level_range(4, 12), 10, 3).unwrap();
        assert!(r.pass);
        assert_eq!(r.levels[0].box_count, 4);
        assert_eq!(r.levels[0].min_correlation_sum, "1/4");
    }

    #[test]
    fn net_bound_on_cantor() {
        let (cantor, _) = middle_half_cantor(8).unwrap();
        let r = net_ball_lower_bound(&cantor, &[2, 4, 6, 8]).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.normalizer, "576/205");
    }

    #[test]
    fn frostman_and_violations() {
        let (cantor, _) = middle_half_cantor(12).unwrap();
        let mu = DyadicMeasureTree::uniform_on_set(&cantor).unwrap();
        let f = frostman_proxy(&[&mu], &level_range(2, 12)).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
        assert!(frostman_violation_mass(&mu, &rational(1, 2), 8).unwrap().is_zero());
        assert_eq!(frostman_violation_mass(&mu, &rational(3, 5), 8).unwrap(), rational(1, 1));
    }

    #[test]
    fn ordering_report() {
        let est = |v: f64| Some(SlopeEstimate { value: v, window: (0.0, 1.0), residual: 0.0, variant: Variant::FullFit });
        let r = inequality_report(
            InequalityInputs {
                frostman: Some(0.5),
                lower_box: est(0.5),
                upper_box: est(0.5),
                lower_corr: est(0.49),
                upper_corr: est(0.51),
                packing: vec![(0.4, Verdict::HoldsOnWindow)],
            },
            0.05,
        );
        assert!(r.all_pass() && r.gaps.is_empty());
        let r = inequality_report(InequalityInputs { frostman: Some(0.8), lower_box: est(0.5), ..Default::default() }, 0.05);
        assert!(!r.all_pass() && !r.gaps.is_empty());
    }
}
