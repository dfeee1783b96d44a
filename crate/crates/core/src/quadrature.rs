//! Adaptive Gauss–Kronrod (7/15) integration and Gauss–Legendre rules.

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub err: f64,
    /// False when the bisection budget ran out before the tolerance was met.
    pub converged: bool,
}

impl Quad {
    pub fn zero() -> Self {
        Self { value: 0.0, err: 0.0, converged: true }
    }

    pub fn add(self, other: Quad) -> Quad {
        Quad {
            value: self.value + other.value,
            err: self.err + other.err,
            converged: self.converged && other.converged,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One G7K15 panel: Kronrod value and |Kronrod − Gauss|.
pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates over `[a, b]` split into panels of width at most `max_panel`,
/// bisecting any panel whose error estimate exceeds its share of `tol`.
pub fn integrate(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    max_panel: f64,
    tol: f64,
    max_depth: u32,
) -> Quad {
    if b <= a {
        return Quad::zero();
    }
    let panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    let share = tol / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + w * i as f64;
            let hi = if i + 1 == panels { b } else { lo + w };
            adapt(f, lo, hi, share, max_depth)
        })
        .fold(Quad::zero(), Quad::add)
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Quad {
    let (value, err) = gk15(f, a, b);
    if err <= tol.max(1e-15 * value.abs()) {
        return Quad { value, err, converged: true };
    }
    if depth == 0 {
        return Quad { value, err, converged: false };
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, tol / 2.0, depth - 1).add(adapt(f, m, b, tol / 2.0, depth - 1))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 0 {
                break;
            }
            let p = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}
