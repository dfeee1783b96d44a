use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use dimlab::constructions::{self as cons, ConstantDimension, DimensionOracle, EpsSchedule, WindowedSlope};
use dimlab::dyadic::DyadicPoint;
use dimlab::estimators::{self, SlopeEstimate};
use dimlab::exact;
use dimlab::fourier::{self, QuadConfig};
use dimlab::io::{self, Artifact, Construction};
use dimlab::measure::{self, DyadicMeasureTree};
use dimlab::set::{DyadicSetTree, SymbolicCounts};
use dimlab::{DimError, Rational};

/// Fractal dimension estimation and verification on dyadic trees.
#[derive(Parser)]
#[command(name = "dimlab", version)]
struct Cli {
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, env = "DIMLAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a set or measure and write it as JSON.
    #[command(subcommand)]
    Construct(Construct),
    /// Run one estimator on a stored set or measure.
    Estimate(EstimateArgs),
    /// Run a verification suite; exits 4 when an exact check fails.
    #[command(subcommand)]
    Verify(Verify),
}

#[derive(Subcommand)]
enum Construct {
    /// Alternating one-child/two-child construction.
    Example1 {
        #[arg(long, value_parser = rational)]
        t: Rational,
        #[arg(long, value_parser = rational)]
        s: Rational,
        /// Planned depth; the stored tree stops at the deepest level with
        /// at most --max-cubes cubes (and at level 62).
        #[arg(long)]
        depth: u64,
        #[arg(long, default_value_t = 65_536)]
        max_cubes: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plan_out: Option<PathBuf>,
        /// Also write the equal-mass measure on level n_{2m+1}.
        #[arg(long, requires = "measure_out")]
        stage: Option<usize>,
        #[arg(long)]
        measure_out: Option<PathBuf>,
    },
    /// Construction with designated intervals.
    Propeq {
        #[arg(long, value_parser = rational)]
        t: Rational,
        #[arg(long, value_parser = rational)]
        s: Rational,
        #[arg(long)]
        depth: u32,
        /// Level budget of the symbolic plan.
        #[arg(long, default_value_t = 100_000)]
        budget: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plan_out: Option<PathBuf>,
        /// Place a digit set of dimension near t beside the construction.
        #[arg(long)]
        auxiliary: bool,
    },
    /// Digit set: base 2^g, kept digits (patterns `a:b` when d > 1).
    Ifs {
        #[arg(long)]
        base: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        keep: Vec<String>,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Occupied-cube tree of a CSV point cloud.
    Points {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        snap_depth: u32,
        #[arg(long)]
        out: PathBuf,
        /// Also write the atomic measure with weight proportional to multiplicity.
        #[arg(long)]
        measure_out: Option<PathBuf>,
    },
    /// A measure on a stored set.
    Measure {
        #[arg(long)]
        set: PathBuf,
        #[arg(long, value_enum, default_value_t = MeasureKind::Uniform)]
        kind: MeasureKind,
        /// Level of the net measure.
        #[arg(long)]
        level: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureKind {
    /// Normalized Lebesgue measure on the selected deepest cubes.
    Uniform,
    /// Equal mass per deepest cube.
    EqualLeaf,
    /// Point masses at the level-n net.
    Net,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Estimator {
    Box,
    Corr,
    Frostman,
    FourierCorr,
    FourierBox,
    Energy,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    estimator: Estimator,
    /// Levels, as `lo..hi` or a comma list; defaults to `1..depth`.
    #[arg(long)]
    levels: Option<String>,
    /// Sliding window length (points) for liminf/limsup proxies. An odd
    /// length spans whole periods of counts that step every other level.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Radii exponents `lo..hi` for Fourier estimators: R = 2^(j/2).
    #[arg(long)]
    radii: Option<String>,
    /// Energy exponent.
    #[arg(long, value_parser = rational)]
    s: Option<Rational>,
    /// Virtual refinement depth for energy brackets in d >= 2.
    #[arg(long, default_value_t = 12)]
    refine: u32,
    #[arg(long, default_value_t = 1e-9)]
    quad_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot-ready curve.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verify {
    /// Exact count bounds of the alternating construction.
    Example1Counts {
        #[arg(long, value_parser = rational)]
        t: Rational,
        #[arg(long, value_parser = rational)]
        s: Rational,
        /// Check indices up to 2 kmax + 1.
        #[arg(long, default_value_t = 12)]
        kmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan inequalities, total and within-designated counts.
    PropeqCounts {
        #[arg(long, value_parser = rational)]
        t: Rational,
        #[arg(long, value_parser = rational)]
        s: Rational,
        #[arg(long, default_value_t = 100_000)]
        budget: u64,
        /// Levels up to which within-designated counts are checked.
        #[arg(long, default_value_t = 24)]
        designated_limit: u64,
        /// Depth of the tree materialized for the cross-check.
        #[arg(long, default_value_t = 24)]
        materialize: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage-wise Frostman measures with their mass and ball bounds.
    MlbdStages {
        #[arg(long)]
        set: PathBuf,
        #[arg(long, value_parser = rational)]
        s: Rational,
        /// Known dimension of every piece; otherwise taken from the stored
        /// construction, or the windowed-slope heuristic is used.
        #[arg(long, value_parser = rational)]
        dimension: Option<Rational>,
        #[arg(long)]
        heuristic: bool,
        #[arg(long, default_value_t = 6)]
        heuristic_window: u32,
        #[arg(long, default_value_t = 0.1)]
        heuristic_margin: f64,
        /// Radii 2^-k for k = 1..=K; defaults to depth + 2.
        #[arg(long)]
        radii: Option<u32>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlation versus Fourier mean square sandwich.
    Prop41 {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, value_parser = rational)]
        eps: Rational,
        #[arg(long, default_value = "4..10")]
        levels: String,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Box count versus minimal correlation sum sandwich.
    Lemma22 {
        #[arg(long)]
        set: PathBuf,
        #[arg(long, default_value = "4..12")]
        levels: String,
        #[arg(long, default_value_t = 100)]
        random_measures: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ordering of all dimension proxies.
    IneqChain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        levels: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ball lower bound of the net measure built on several levels.
    Prop24 {
        #[arg(long)]
        set: PathBuf,
        #[arg(long, default_value = "2,4,6,8")]
        levels: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failures grouped by exit code.
enum Failure {
    Validation(String),
    Computation(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Computation(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Computation(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<DimError> for Failure {
    fn from(e: DimError) -> Self {
        let msg = e.to_string();
        match e {
            DimError::Domain(_) | DimError::Invalid(_) | DimError::Io(_) | DimError::Json(_) | DimError::Csv(_) => {
                Failure::Validation(msg)
            }
            _ => Failure::Computation(msg),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn rational(s: &str) -> Result<Rational, String> {
    exact::parse_rational(s).map_err(|e| e.to_string())
}

/// `lo..hi` (inclusive) or `a,b,c`.
fn parse_levels(text: &str) -> Outcome<Vec<u32>> {
    let bad = || Failure::Validation(format!("'{text}' is not a level list (use lo..hi or a,b,c)"));
    let levels: Vec<u32> = if let Some((lo, hi)) = text.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        text.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Outcome<_>>()?
    };
    if levels.is_empty() {
        return Err(bad());
    }
    Ok(levels)
}

fn check_levels(levels: &[u32], depth: u32) -> Outcome {
    if let Some(n) = levels.iter().find(|&&n| n > depth) {
        return Err(Failure::Validation(format!(
            "level {n} beyond the materialized depth; available levels are 0..={depth}"
        )));
    }
    Ok(())
}

fn emit(value: &impl Serialize, out: Option<&Path>) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Computation(e.to_string()))?;
    // a closed pipe downstream is not an error of ours
    let _ = writeln!(std::io::stdout(), "{text}");
    if let Some(path) = out {
        std::fs::write(path, &text).map_err(|e| Failure::Validation(e.to_string()))?;
    }
    Ok(())
}

fn verdict(pass: bool, what: &str) -> Outcome {
    if pass {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{what}: at least one check failed")))
    }
}

fn as_measure(artifact: &Artifact) -> Outcome<DyadicMeasureTree> {
    match artifact {
        Artifact::Measure(mu, _) => Ok(mu.clone()),
        Artifact::Set(set, _) => Ok(DyadicMeasureTree::uniform_on_set(set)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Construct(c) => construct(c),
        Command::Estimate(a) => estimate(a),
        Command::Verify(v) => verify(v),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn construct(cmd: Construct) -> Outcome {
    match cmd {
        Construct::Example1 { t, s, depth, max_cubes, out, plan_out, stage, measure_out } => {
            let plan = cons::example1_plan(&t, &s, &EpsSchedule::Default, depth)?;
            let materialized = plan.deepest_within(depth.min(62), max_cubes) as u32;
            let (tree, _) = cons::example1_set(&plan, materialized)?;
            let construction = Construction::Example1 { plan: plan.clone() };
            io::write_set(&out, &tree, Some(&construction))?;
            if let Some(path) = &plan_out {
                io::write_json(path, &plan)?;
            }
            if let (Some(m), Some(path)) = (stage, &measure_out) {
                let mu = cons::example1_measure(&plan, m)?;
                io::write_measure(path, &mu, Some(&construction))?;
            }
            emit(
                &json!({
                    "construction": "example1",
                    "requested_depth": depth,
                    "materialized_depth": materialized,
                    "n_seq": plan.n_seq,
                    "counts": (0..=materialized).map(|n| tree.len_at(n)).collect::<Vec<_>>(),
                }),
                None,
            )
        }
        Construct::Propeq { t, s, depth, budget, out, plan_out, auxiliary } => {
            let plan = cons::propeq_plan(&t, &s, budget.max(depth as u64))?;
            let (tree, designated) = if auxiliary {
                let (tree, _, aux) = cons::propeq_with_auxiliary(&plan, depth)?;
                (tree, json!({ "auxiliary": aux }))
            } else {
                let (tree, _, designated) = cons::propeq_set(&plan, depth)?;
                (tree, json!({ "designated": designated }))
            };
            let construction = (!auxiliary).then(|| Construction::Propeq { plan: plan.clone() });
            io::write_set(&out, &tree, construction.as_ref())?;
            if let Some(path) = &plan_out {
                io::write_json(path, &plan)?;
            }
            emit(
                &json!({
                    "construction": "propeq",
                    "n": plan.n,
                    "big_n": plan.big_n,
                    "depth": depth,
                    "details": designated,
                }),
                None,
            )
        }
        Construct::Ifs { base, keep, depth, out } => {
            if !base.is_power_of_two() || base < 2 {
                return Err(Failure::Validation(format!("base {base} is not a power of two >= 2")));
            }
            let g = base.trailing_zeros();
            let patterns: Vec<Vec<u64>> = keep
                .iter()
                .map(|p| {
                    p.split(':')
                        .map(|d| d.trim().parse::<u64>().map_err(|_| Failure::Validation(format!("bad digit '{d}'"))))
                        .collect::<Outcome<Vec<u64>>>()
                })
                .collect::<Outcome<_>>()?;
            let dim = patterns[0].len();
            if depth % g != 0 {
                return Err(Failure::Validation(format!("depth {depth} must be a multiple of {g}")));
            }
            let tree = DyadicSetTree::from_digit_ifs(dim, g, &patterns, depth)?;
            let construction = Construction::Ifs { dim, g, patterns };
            io::write_set(&out, &tree, Some(&construction))?;
            let counts = construction.counts().expect("digit sets have counts");
            emit(
                &json!({
                    "construction": "ifs",
                    "d": dim,
                    "depth": depth,
                    "count_at_depth": counts.count_at(depth as u64).map(|c| c.to_string()),
                }),
                None,
            )
        }
        Construct::Points { csv, snap_depth, out, measure_out } => {
            let rows = io::read_points_csv(&csv)?;
            let dim = rows[0].len();
            let points: Vec<DyadicPoint> = rows
                .iter()
                .map(|x| DyadicPoint::snap(x, snap_depth))
                .collect::<Result<_, _>>()?;
            let tree = DyadicSetTree::from_points(dim, &points, snap_depth)?;
            let construction = Construction::Points { snap_depth, count: points.len() };
            io::write_set(&out, &tree, Some(&construction))?;
            if let Some(path) = &measure_out {
                let w = exact::rational(1, points.len() as i64);
                let atoms: Vec<(DyadicPoint, Rational)> = points.iter().map(|p| (p.clone(), w.clone())).collect();
                let mu = DyadicMeasureTree::atomic(dim, &atoms, snap_depth)?;
                io::write_measure(path, &mu, Some(&construction))?;
            }
            emit(
                &json!({
                    "construction": "points",
                    "points": points.len(),
                    "snap_depth": snap_depth,
                    "occupied_cubes": tree.len_at(snap_depth),
                }),
                None,
            )
        }
        Construct::Measure { set, kind, level, out } => {
            let artifact = io::read_artifact(&set)?;
            let tree = artifact.support();
            let mu = match kind {
                MeasureKind::Uniform => DyadicMeasureTree::uniform_on_set(tree)?,
                MeasureKind::EqualLeaf => DyadicMeasureTree::equal_leaf_masses(tree)?,
                MeasureKind::Net => measure::net_measure(tree, level.unwrap_or(tree.max_depth()))?,
            };
            io::write_measure(&out, &mu, artifact.construction())?;
            emit(&json!({ "measure": "written", "depth": mu.depth(), "leaves": mu.support().len_at(mu.depth()) }), None)
        }
    }
}

#[derive(Serialize)]
struct EstimateReport {
    estimator: &'static str,
    value: Option<f64>,
    window: Option<(f64, f64)>,
    residual: Option<f64>,
    verdict: String,
    details: Value,
}

fn slope_details(fit: &estimators::SlopeFit) -> Value {
    let one = |e: &SlopeEstimate| json!({ "value": e.value, "window": e.window, "residual": e.residual });
    json!({
        "lower": one(&fit.lower),
        "full": one(&fit.full),
        "upper": one(&fit.upper),
        "tail": one(&fit.tail),
        "window_len": fit.window_len,
    })
}

fn radii_from(text: Option<&str>, depth: u32) -> Outcome<Vec<f64>> {
    let (lo, hi) = match text {
        Some(t) => {
            let v = parse_levels(t)?;
            (v[0], *v.last().unwrap())
        }
        None => (0, 2 * depth.clamp(4, 12)),
    };
    Ok((lo..=hi).map(|j| (j as f64 / 2.0).exp2()).collect())
}

fn estimate(a: EstimateArgs) -> Outcome {
    let artifact = io::read_artifact(&a.input)?;
    let symbolic: Option<SymbolicCounts> = artifact.construction().and_then(Construction::counts);
    let depth = artifact.support().max_depth();
    let levels = match &a.levels {
        Some(t) => parse_levels(t)?,
        None => (1..=depth).collect(),
    };
    let cfg = QuadConfig { tol: a.quad_tol, ..QuadConfig::default() };
    let mut curve: Vec<[f64; 2]> = Vec::new();
    let report = match a.estimator {
        Estimator::Box => {
            // symbolic counts extend the box estimator past the tree
            let limit = symbolic.as_ref().and_then(|s| s.horizon()).unwrap_or(if symbolic.is_some() { u64::MAX } else { depth as u64 });
            if let Some(n) = levels.iter().find(|&&n| n as u64 > limit.max(depth as u64)) {
                return Err(Failure::Validation(format!("level {n} beyond available levels 0..={}", limit.max(depth as u64))));
            }
            let wide = estimators::widen(&levels);
            let profile = estimators::box_profile(artifact.support(), symbolic.as_ref(), &wide)?;
            curve = profile.iter().map(|p| [p.0, p.1]).collect();
            let fit = estimators::slope_fit(&profile, a.window)?;
            fit_report("box", &fit)
        }
        Estimator::Corr => {
            check_levels(&levels, depth)?;
            let mu = as_measure(&artifact)?;
            let profile = estimators::correlation_profile(&mu, &levels)?;
            curve = profile.iter().map(|p| [p.0, p.1]).collect();
            fit_report("corr", &estimators::slope_fit(&profile, a.window)?)
        }
        Estimator::Frostman => {
            check_levels(&levels, depth)?;
            let mu = as_measure(&artifact)?;
            let profile = mu.frostman_profile(&levels)?;
            curve = profile.iter().map(|p| [p.0 as f64, p.1]).collect();
            let value = estimators::frostman_proxy(&[&mu], &levels)?;
            EstimateReport {
                estimator: "frostman",
                value: Some(value),
                window: Some((levels[0] as f64, *levels.last().unwrap() as f64)),
                residual: None,
                verdict: "finite-window-proxy".into(),
                details: json!({ "profile": profile }),
            }
        }
        Estimator::FourierCorr | Estimator::FourierBox => {
            let radii = radii_from(a.radii.as_deref(), depth)?;
            let dims = if a.estimator == Estimator::FourierCorr {
                fourier::fourier_correlation_dims(&as_measure(&artifact)?, &radii, a.window, cfg)?
            } else {
                let candidates = fourier::default_candidates(artifact.support())?;
                fourier::fourier_box_estimate(&candidates, &radii, a.window, cfg)?
            };
            // the large-R tail is the asymptotic regime; small R only sees |μ̂(0)| = 1
            let mut r = fit_report(
                if a.estimator == Estimator::FourierCorr { "fourier-corr" } else { "fourier-box" },
                &dims.fit,
            );
            r.value = Some(dims.fit.tail.value);
            r.window = Some(dims.fit.tail.window);
            r.residual = Some(dims.fit.tail.residual);
            if dims.curve.degraded {
                r.verdict = "degraded".into();
            } else if dims.low_confidence {
                r.verdict = "low-confidence".into();
            }
            if let Some(path) = &a.csv {
                let rows: Vec<[f64; 3]> = dims.curve.samples.iter().map(|s| [s.r, s.i, s.err]).collect();
                io::write_csv(path, ["R", "I", "err"], &rows)?;
            }
            r
        }
        Estimator::Energy => {
            let s = a.s.as_ref().ok_or_else(|| Failure::Validation("--s is required for energy".into()))?;
            let mu = as_measure(&artifact)?;
            energy_report(&mu, exact::to_f64(s), a.refine)?
        }
    };
    if let (Some(path), false) = (&a.csv, curve.is_empty()) {
        io::write_csv(path, ["level", "value"], &curve)?;
    }
    emit(&report, a.out.as_deref())
}

fn fit_report(estimator: &'static str, fit: &estimators::SlopeFit) -> EstimateReport {
    EstimateReport {
        estimator,
        value: Some(fit.full.value),
        window: Some(fit.full.window),
        residual: Some(fit.full.residual),
        verdict: "finite-window-proxy".into(),
        details: slope_details(fit),
    }
}

fn energy_report(mu: &DyadicMeasureTree, s: f64, refine: u32) -> Outcome<EstimateReport> {
    let divergent = |why: String| EstimateReport {
        estimator: "energy",
        value: None,
        window: None,
        residual: None,
        verdict: "divergent".into(),
        details: json!({ "s": s, "reason": why }),
    };
    if mu.is_atomic() && s > 0.0 {
        return Ok(divergent("point masses have infinite s-energy for s > 0".into()));
    }
    match mu.energy_bracket(s, refine) {
        Ok(b) => Ok(EstimateReport {
            estimator: "energy",
            value: Some(b.midpoint()),
            window: Some((b.lower, b.upper)),
            residual: Some(b.width()),
            verdict: "bracket".into(),
            details: json!({ "s": s, "lower": b.lower, "upper": b.upper, "refine": refine }),
        }),
        Err(DimError::Divergent(why)) => Ok(divergent(why)),
        Err(e) => Err(e.into()),
    }
}

fn verify(cmd: Verify) -> Outcome {
    match cmd {
        Verify::Example1Counts { t, s, kmax, out } => {
            let mut budget = 1024u64;
            let plan = loop {
                let plan = cons::example1_plan(&t, &s, &EpsSchedule::Default, budget)?;
                if plan.n_seq.len() > 2 * kmax + 1 || budget > 1 << 40 {
                    break plan;
                }
                budget *= 4;
            };
            let max_level = plan.n(2 * kmax + 1).unwrap_or(plan.horizon());
            let report = cons::verify_example1(&plan, max_level);
            emit(&json!({ "checks": report.checks, "n_seq": &plan.n_seq, "pass": report.pass }), out.as_deref())?;
            verdict(report.pass, "example1-counts")
        }
        Verify::PropeqCounts { t, s, budget, designated_limit, materialize, out } => {
            let plan = cons::propeq_plan(&t, &s, budget)?;
            let (tree, _, designated) = cons::propeq_set(&plan, materialize)?;
            let report = cons::verify_propeq(&plan, budget, designated_limit, Some(&tree));
            emit(&json!({ "report": report, "designated": designated }), out.as_deref())?;
            verdict(report.pass, "propeq-counts")
        }
        Verify::MlbdStages {
            set,
            s,
            dimension,
            heuristic,
            heuristic_window,
            heuristic_margin,
            radii,
            stages,
            samples,
            seed,
            out,
        } => {
            let artifact = io::read_artifact(&set)?;
            let tree = artifact.support();
            let known = dimension.or_else(|| match artifact.construction() {
                Some(Construction::Example1 { plan }) => Some(plan.t.clone()),
                Some(Construction::Ifs { dim, g, patterns }) => ifs_dimension(*dim, *g, patterns.len()),
                _ => None,
            });
            let oracle: Box<dyn DimensionOracle> = match (heuristic, known) {
                (false, Some(d)) => Box::new(ConstantDimension(d)),
                _ => Box::new(WindowedSlope { window: heuristic_window, margin: heuristic_margin }),
            };
            let radii = cons::halving_radii(radii.unwrap_or(tree.max_depth() + 2));
            let built = cons::mlbd_stage_measures(tree, oracle.as_ref(), &s, &radii, stages)?;
            let report = built.verify(tree, samples, seed)?;
            emit(&report, out.as_deref())?;
            verdict(report.pass, "mlbd-stages")
        }
        Verify::Prop41 { measure, eps, levels, tolerance, out, csv } => {
            let artifact = io::read_artifact(&measure)?;
            let mu = as_measure(&artifact)?;
            let levels = parse_levels(&levels)?;
            let report = fourier::prop41_report(&mu, exact::to_f64(&eps), &levels, tolerance, QuadConfig::default())?;
            if let Some(path) = &csv {
                let rows: Vec<[f64; 3]> = report.rows.iter().map(|r| [1.0 / r.r, r.mean_square, r.mean_square_err]).collect();
                io::write_csv(path, ["R", "I", "err"], &rows)?;
            }
            let status = if report.inconclusive {
                "inconclusive"
            } else if report.verified() {
                "pass"
            } else {
                "fail"
            };
            emit(&json!({ "status": status, "report": report }), out.as_deref())?;
            verdict(report.inconclusive || report.verified(), "prop41")
        }
        Verify::Lemma22 { set, levels, random_measures, seed, out } => {
            let artifact = io::read_artifact(&set)?;
            let levels = parse_levels(&levels)?;
            check_levels(&levels, artifact.support().max_depth())?;
            let report = estimators::lemma22_sandwich(artifact.support(), &levels, random_measures, seed)?;
            emit(&report, out.as_deref())?;
            verdict(report.pass, "lemma22")
        }
        Verify::IneqChain { input, levels, tolerance, out } => {
            let artifact = io::read_artifact(&input)?;
            let symbolic = artifact.construction().and_then(Construction::counts);
            // a bare set is read through its equal-mass leaf measure, the
            // stage measure of the constructions
            let mu = match &artifact {
                Artifact::Set(set, _) => DyadicMeasureTree::equal_leaf_masses(set)?,
                Artifact::Measure(mu, _) => mu.clone(),
            };
            let levels = match levels {
                Some(t) => parse_levels(&t)?,
                None => (1..=mu.depth()).collect(),
            };
            check_levels(&levels, mu.depth())?;
            let exponents: Vec<Rational> = (1..20).map(|k| exact::rational(k, 20)).collect();
            let inputs = estimators::chain_inputs(&mu, symbolic.as_ref(), &levels, &exponents)?;
            let report = estimators::inequality_report(inputs, tolerance);
            emit(&json!({ "pass": report.all_pass(), "report": report }), out.as_deref())?;
            verdict(report.all_pass(), "ineq-chain")
        }
        Verify::Prop24 { set, levels, out } => {
            let artifact = io::read_artifact(&set)?;
            let levels = parse_levels(&levels)?;
            check_levels(&levels, artifact.support().max_depth())?;
            let report = estimators::net_ball_lower_bound(artifact.support(), &levels)?;
            emit(&report, out.as_deref())?;
            verdict(report.pass, "prop24")
        }
    }
}

/// `log2(#patterns)/g` when it is rational, i.e. the pattern count is a
/// power of two.
fn ifs_dimension(_dim: usize, g: u32, count: usize) -> Option<Rational> {
    count
        .is_power_of_two()
        .then(|| exact::rational(count.trailing_zeros() as i64, g as i64))
}
