//! Acceptance suite: runs every criterion in sequence, prints one
//! PASS/FAIL line each with its timing, and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dimlab::constructions::{
    self as cons, ConstantDimension, EpsSchedule, Example1Plan,
};
use dimlab::dyadic::DyadicPoint;
use dimlab::estimators::{self, level_range, widen};
use dimlab::exact::{self, rational};
use dimlab::fourier::{self, QuadConfig};
use dimlab::measure::DyadicMeasureTree;
use dimlab::set::{middle_half_cantor, DyadicSetTree, SymbolicCounts};
use dimlab::{DimError, Rational};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn lift<T>(r: dimlab::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn t() -> Rational {
    rational(2, 5)
}

fn s() -> Rational {
    rational(7, 10)
}

fn example1(budget: u64) -> Result<Example1Plan, String> {
    lift(cons::example1_plan(&t(), &s(), &EpsSchedule::Default, budget))
}

fn lebesgue() -> DyadicMeasureTree {
    DyadicMeasureTree::uniform_on_set(&DyadicSetTree::full(1, 0).unwrap()).unwrap()
}

fn atom() -> DyadicMeasureTree {
    DyadicMeasureTree::atomic(1, &[(DyadicPoint { level: 3, coords: vec![3] }, rational(1, 1))], 12).unwrap()
}

fn cantor_measure(depth: u32) -> DyadicMeasureTree {
    DyadicMeasureTree::uniform_on_set(&middle_half_cantor(depth).unwrap().0).unwrap()
}

fn c1_alternating_counts() -> Outcome {
    let plan = example1(2_000_000)?;
    let last_odd = plan
        .n_seq
        .iter()
        .enumerate()
        .filter(|(i, &n)| i % 2 == 1 && n <= 1_000_000)
        .map(|(_, &n)| n)
        .last()
        .ok_or("no odd index within 10^6")?;
    ensure(plan.horizon() >= last_odd, "plan stops before the last odd index")?;
    let report = cons::verify_example1(&plan, last_odd);
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| c.level).collect();
    ensure(failed.is_empty(), format!("failing levels {failed:?}"))?;
    ensure(report.checks.last().map(|c| c.level) == Some(last_odd), "last odd index not checked")?;
    Ok(format!("{} checks, last n = {last_odd}", report.checks.len()))
}

fn c2_designated_counts() -> Outcome {
    let plan = lift(cons::propeq_plan(&t(), &s(), 100_000))?;
    let (tree, _, _) = lift(cons::propeq_set(&plan, 24))?;
    let report = cons::verify_propeq(&plan, 100_000, 24, Some(&tree));
    let bad_plan: Vec<_> = report.plan_checks.iter().filter(|c| !c.pass).map(|c| (c.k, c.relation.clone())).collect();
    ensure(bad_plan.is_empty(), format!("plan checks failed: {bad_plan:?}"))?;
    let bad: Vec<_> = report
        .designated_checks
        .iter()
        .filter(|c| !c.upper_ok || c.lower_ok == Some(false))
        .map(|c| (c.k, c.level))
        .collect();
    ensure(bad.is_empty(), format!("designated checks failed: {bad:?}"))?;
    ensure(report.disjoint_pair_failures.is_empty(), "lower-count ranges miss a level")?;
    ensure(report.materialized_agrees == Some(true), "symbolic counts disagree with the tree")?;
    ensure(report.pass, "report not passing")?;
    let last = plan.n.iter().filter(|&&n| n <= 100_000).last().copied().unwrap_or(0);
    Ok(format!(
        "{} plan checks up to n = {last} (count bound from k = 2), {} designated checks",
        report.plan_checks.len(),
        report.designated_checks.len()
    ))
}

fn c3_stage_measures() -> Outcome {
    let mut lines = Vec::new();
    let plan = example1(200)?;
    let cases: Vec<(&str, DyadicSetTree, Rational, Rational)> = vec![
        ("interval", lift(DyadicSetTree::full(1, 20))?, rational(1, 1), rational(1, 2)),
        ("alternating", lift(cons::example1_set(&plan, 20))?.0, t(), rational(3, 10)),
    ];
    for (name, set, dim, target) in cases {
        let radii = cons::halving_radii(set.max_depth() + 2);
        let built = lift(cons::mlbd_stage_measures(&set, &ConstantDimension(dim), &target, &radii, None))?;
        let report = lift(built.verify(&set, 1000, 7))?;
        ensure(report.mass_bounds_hold, format!("{name}: stage mass bounds fail"))?;
        ensure(report.masses_preserved, format!("{name}: stage masses not preserved"))?;
        ensure(report.support_in_set, format!("{name}: support leaves the set"))?;
        ensure(
            report.cover_samples == 1000 && report.cover_failures == 0,
            format!("{name}: {} of {} ball bounds fail", report.cover_failures, report.cover_samples),
        )?;
        ensure(report.pass, format!("{name}: report not passing"))?;
        let levels: Vec<u32> = report.stages.iter().map(|st| st.level).collect();
        lines.push(format!("{name} stages at {levels:?}"));
    }
    Ok(lines.join("; "))
}

fn c4_sandwich() -> Outcome {
    let (set, _) = lift(middle_half_cantor(12))?;
    let report = lift(estimators::lemma22_sandwich(&set, &level_range(4, 12), 100, 2024))?;
    for l in &report.levels {
        ensure(l.lower_holds, format!("1/N exceeds a correlation sum at level {}", l.level))?;
        ensure(l.net_attains && l.uniform_attains, format!("witness misses 1/N at level {}", l.level))?;
    }
    ensure(report.pass && report.random_measures == 100, "report not passing")?;
    Ok(format!("levels 4..=12, {} random measures", report.random_measures))
}

fn ratio(n: u64, e: u64) -> f64 {
    e as f64 / n as f64
}

fn c5_slopes() -> Outcome {
    let (tree, counts) = lift(middle_half_cantor(24))?;
    let levels = level_range(8, 24);
    let boxes = lift(estimators::box_dims(&tree, Some(&counts), &widen(&levels), 5))?;
    let mu = lift(DyadicMeasureTree::uniform_on_set(&tree))?;
    let corr = lift(estimators::correlation_dims(&mu, &levels, 5))?;
    for (what, v) in [("box", boxes.full.value), ("corr", corr.full.value)] {
        ensure((v - 0.5).abs() <= 0.02, format!("cantor {what} slope {v}"))?;
    }
    let plan = example1(200_000)?;
    let ((n_lo, e_lo), (n_hi, e_hi)) = deepest_pair(&plan)?;
    let lower = ratio(n_lo, e_lo);
    ensure((lower - 0.4).abs() <= 0.05, format!("lower box proxy {lower} at n = {n_lo}"))?;
    // equal masses per level make the correlation sum the reciprocal count
    let upper_corr = upper_corr_from_counts(&plan, n_hi)?;
    let upper_box = ratio(n_hi, e_hi);
    for (what, v) in [("box", upper_box), ("corr", upper_corr)] {
        ensure((v - 0.7).abs() <= 0.05, format!("upper {what} proxy {v} at n = {n_hi}"))?;
    }
    Ok(format!(
        "cantor box {:.4} corr {:.4}; alternating lower {lower:.4} (n = {n_lo}), upper {upper_box:.4}/{upper_corr:.4} (n = {n_hi})",
        boxes.full.value, corr.full.value
    ))
}

/// `(n_{2k}, e)` and `(n_{2k+1}, e)` for the largest `k` with `n_{2k+1}`
/// around `10^5`; `e` is `log2` of the count.
fn deepest_pair(plan: &Example1Plan) -> Result<((u64, u64), (u64, u64)), String> {
    const CAP: u64 = 120_000;
    let odd = *cons::example1_subsequence(plan, true, CAP).last().ok_or("no odd index")?;
    let even = *cons::example1_subsequence(plan, false, odd.0).last().ok_or("no even index")?;
    ensure(odd.0 >= 100_000, format!("odd subsequence stops at {} short of 10^5", odd.0))?;
    Ok((even, odd))
}

/// `-log2 Σ μ(C)² / n` for the equal-mass measure, after checking on the
/// materialized levels that the sum is the reciprocal count.
fn upper_corr_from_counts(plan: &Example1Plan, n: u64) -> Result<f64, String> {
    let mu = lift(cons::example1_measure(plan, 1))?;
    for m in 0..=mu.depth() {
        let sum = lift(mu.dyadic_correlation_sum(m))?;
        let e = plan.count_exponent(m as u64).ok_or("count out of plan")?;
        ensure(sum == exact::pow2(-(e as i64)), format!("correlation sum at level {m} is not 1/N"))?;
    }
    let e = plan.count_exponent(n).ok_or("count out of plan")?;
    Ok(ratio(n, e))
}

fn prop41_measures() -> Vec<(&'static str, DyadicMeasureTree)> {
    vec![("uniform", lebesgue()), ("atom", atom()), ("cantor", cantor_measure(12))]
}

fn c6_fourier_sandwich() -> Outcome {
    let mut lines = Vec::new();
    for (name, mu) in prop41_measures() {
        let report = lift(fourier::prop41_report(&mu, 0.2, &level_range(4, 10), 0.05, QuadConfig::default()))?;
        ensure(!report.inconclusive, format!("{name}: correlation bracket too wide"))?;
        ensure(report.verified(), format!("{name}: slope {} outside {:?}", report.slope, report.allowed))?;
        lines.push(format!("{name} {:+.4}", report.slope));
    }
    Ok(format!("slopes {} within [-0.25, 0.25]", lines.join(", ")))
}

fn c7_fourier_agreement() -> Outcome {
    let levels = level_range(4, 10);
    let radii: Vec<f64> = levels.iter().map(|&n| (n as f64).exp2()).collect();
    let mut lines = Vec::new();
    for (name, mu) in prop41_measures() {
        let pair = lift(estimators::ball_correlation_dims(&mu, &levels, 5))?.full.value;
        let spectral = lift(fourier::fourier_correlation_dims(&mu, &radii, 5, QuadConfig::default()))?.fit.full.value;
        ensure((pair - spectral).abs() <= 0.07, format!("{name}: pair-sum {pair} vs Fourier {spectral}"))?;
        lines.push(format!("{name} {pair:.4}/{spectral:.4}"));
    }
    Ok(lines.join(", "))
}

fn chain_on(
    name: &str,
    mu: &DyadicMeasureTree,
    counts: Option<&SymbolicCounts>,
) -> Result<estimators::InequalityReport, String> {
    let exponents: Vec<Rational> = (1..20).map(|k| rational(k, 20)).collect();
    let levels = level_range(2, mu.depth());
    let inputs = lift(estimators::chain_inputs(mu, counts, &levels, &exponents))?;
    let report = estimators::inequality_report(inputs, 0.05);
    let failed: Vec<_> = report.orderings.iter().filter(|o| !o.pass).map(|o| o.relation.clone()).collect();
    ensure(failed.is_empty(), format!("{name}: {failed:?}"))?;
    ensure(report.gaps.is_empty(), format!("{name}: missing inputs {:?}", report.gaps))?;
    Ok(report)
}

fn c8_inequality_chain() -> Outcome {
    let plan = example1(200_000)?;
    let depth = plan.deepest_within(64, 1 << 16) as u32;
    let (e1, e1_counts) = lift(cons::example1_set(&plan, depth))?;
    let pq = lift(cons::propeq_plan(&t(), &s(), 1000))?;
    let (pq_set, pq_counts, _) = lift(cons::propeq_set(&pq, 16))?;
    let (aux_set, aux_counts, _) = lift(cons::propeq_with_auxiliary(&pq, 16))?;
    let (cantor, cantor_counts) = lift(middle_half_cantor(16))?;
    let (union, union_counts) = lift(cons::three_dimension_union(&rational(1, 5), &rational(2, 5), &rational(3, 5), 14))?;
    let examples: Vec<(&str, DyadicSetTree, Option<SymbolicCounts>)> = vec![
        ("interval", lift(DyadicSetTree::full(1, 12))?, None),
        ("cantor", cantor, Some(cantor_counts)),
        ("alternating", e1, Some(e1_counts)),
        ("designated", pq_set, Some(pq_counts)),
        ("designated+aux", aux_set, Some(aux_counts)),
        ("union", union, Some(union_counts)),
    ];
    for (name, set, counts) in &examples {
        // equal mass per leaf: the stage measure of each construction
        let mu = lift(DyadicMeasureTree::equal_leaf_masses(set))?;
        chain_on(name, &mu, counts.as_ref())?;
    }
    // the gap along the two subsequences
    let ((n_lo, e_lo), (n_hi, _)) = deepest_pair(&plan)?;
    let lower_box = ratio(n_lo, e_lo);
    let upper_corr = upper_corr_from_counts(&plan, n_hi)?;
    ensure(
        upper_corr - lower_box >= 0.2,
        format!("upper corr {upper_corr} vs lower box {lower_box}: margin below 0.2"),
    )?;
    Ok(format!(
        "{} examples ordered; alternating upper corr {upper_corr:.4} > lower box {lower_box:.4}",
        examples.len()
    ))
}

fn c9_energy() -> Outcome {
    let b = lift(lebesgue().energy_bracket(0.5, 12))?;
    ensure(b.contains(8.0 / 3.0), format!("[{}, {}] misses 8/3", b.lower, b.upper))?;
    ensure(b.width() < 1e-3, format!("width {}", b.width()))?;
    match atom().energy_bracket(0.5, 12) {
        Err(DimError::Divergent(_)) => {}
        other => return Err(format!("atom energy not flagged divergent: {other:?}")),
    }
    Ok(format!("[{:.6}, {:.6}], width {:.2e}; atom divergent", b.lower, b.upper, b.width()))
}

fn c10_net_ball_bound() -> Outcome {
    let (set, _) = lift(middle_half_cantor(12))?;
    let report = lift(estimators::net_ball_lower_bound(&set, &[2, 4, 6, 8]))?;
    ensure(report.levels.len() == 4, "not every level reported")?;
    ensure(report.pass, "ball lower bound fails")?;
    Ok("levels 2, 4, 6, 8, every center".into())
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "alternating-construction counts", budget: Duration::from_secs(5), run: c1_alternating_counts },
        Criterion { id: 2, name: "designated-interval counts", budget: Duration::from_secs(30), run: c2_designated_counts },
        Criterion { id: 3, name: "stage measures", budget: Duration::from_secs(30), run: c3_stage_measures },
        Criterion { id: 4, name: "count/correlation sandwich", budget: Duration::from_secs(10), run: c4_sandwich },
        Criterion { id: 5, name: "slope reproductions", budget: Duration::from_secs(10), run: c5_slopes },
        Criterion { id: 6, name: "Fourier sandwich", budget: Duration::from_secs(120), run: c6_fourier_sandwich },
        Criterion { id: 7, name: "Fourier/pair-sum agreement", budget: Duration::from_secs(120), run: c7_fourier_agreement },
        Criterion { id: 8, name: "inequality chain", budget: Duration::from_secs(120), run: c8_inequality_chain },
        Criterion { id: 9, name: "energy", budget: Duration::from_secs(60), run: c9_energy },
        Criterion { id: 10, name: "net-measure ball bound", budget: Duration::from_secs(60), run: c10_net_ball_bound },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} budget", c.budget)),
            Err(e) => (false, e),
        };
        failures += usize::from(!ok);
        println!(
            "criterion {:>2} {:<34} {} ({:.2}s) {detail}",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    if failures == 0 {
        println!("acceptance: all {} criteria pass", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of {} criteria fail", criteria.len());
        ExitCode::FAILURE
    }
}
