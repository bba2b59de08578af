//! Small numerical kernels shared across modules: compensated summation,
//! a safeguarded Newton/bisection solver for monotone equations, adaptive
//! Gauss–Kronrod quadrature, and a few special values.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Outcome of [`solve_increasing`].
#[derive(Debug, Clone, Copy)]
pub struct RootReport {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
    pub used_bisection: bool,
}

/// Solves `f(x) = 0` for a strictly increasing `f` on the bracket `[lo, hi]`
/// with `f(lo) <= 0 <= f(hi)`.
///
/// `eval` returns `(f(x), f'(x))`. Newton steps are taken from `start` and
/// clipped to `max_step`; any step that leaves the current bracket is
/// replaced by bisection. Iteration stops once `|f| <= f_tol` or the bracket
/// collapses to rounding.
pub fn solve_increasing<F>(
    mut eval: F,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    max_step: f64,
    f_tol: f64,
) -> RootReport
where
    F: FnMut(f64) -> (f64, f64),
{
    let mut x = start.clamp(lo, hi);
    let mut used_bisection = false;
    let mut best = (x, f64::INFINITY);
    for iter in 1..=200 {
        let (fx, dfx) = eval(x);
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx.abs() <= f_tol {
            return RootReport {
                root: x,
                residual: fx,
                iterations: iter,
                used_bisection,
            };
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = if dfx > 0.0 && dfx.is_finite() {
            let step = (fx / dfx).clamp(-max_step, max_step);
            x - step
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
            used_bisection = true;
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || next == x {
            let (fx, _) = eval(next);
            let (root, residual) = if fx.abs() < best.1.abs() {
                (next, fx)
            } else {
                best
            };
            return RootReport {
                root,
                residual,
                iterations: iter,
                used_bisection,
            };
        }
        x = next;
    }
    RootReport {
        root: best.0,
        residual: best.1,
        iterations: 200,
        used_bisection,
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel with its embedded 7-point Gauss estimate.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * GAUSS7_WEIGHTS[3];
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Returns `(integral, error_estimate)`. Panels are bisected until the sum of
/// panel error estimates is below `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate_gk<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> (f64, f64) {
    let (v0, e0) = gk15(&mut f, a, b);
    let mut panels = vec![(a, b, v0, e0)];
    for _ in 0..2000 {
        let total: f64 = compensated_sum(panels.iter().map(|p| p.2));
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return (total, err);
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty panel list");
        let (pa, pb, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        let (vl, el) = gk15(&mut f, pa, mid);
        let (vr, er) = gk15(&mut f, mid, pb);
        panels.push((pa, mid, vl, el));
        panels.push((mid, pb, vr, er));
    }
    let total = compensated_sum(panels.iter().map(|p| p.2));
    let err = panels.iter().map(|p| p.3).sum();
    (total, err)
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Even-index Bernoulli numbers `B_0, B_2, ..., B_24`.
pub const BERNOULLI_EVEN: [f64; 13] = [
    1.0,
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sum of the alternating series `Σ_{k≥0} (-1)^k term(k)` for completely
/// monotone terms (Cohen–Villegas–Zagier acceleration).
fn alternating_sum<F: Fn(f64) -> f64>(term: F) -> f64 {
    const TERMS: i32 = 40;
    let n = TERMS as f64;
    let mut d = (3.0 + 8f64.sqrt()).powi(TERMS);
    d = 0.5 * (d + 1.0 / d);
    let mut b = -1.0;
    let mut c = -d;
    let mut s = 0.0;
    for k in 0..TERMS {
        let kf = k as f64;
        c = b - c;
        s += c * term(kf);
        b *= (kf + n) * (kf - n) / ((kf + 0.5) * (kf + 1.0));
    }
    s / d
}

/// Riemann zeta on `0 < s < 1` (and beyond, away from the pole at 1) via the
/// Dirichlet eta function.
pub fn riemann_zeta(s: f64) -> f64 {
    let eta = alternating_sum(|k| (k + 1.0).powf(-s));
    eta / (1.0 - 2f64.powf(1.0 - s))
}

/// Dirichlet beta `β(s) = Σ (-1)^k (2k+1)^{-s}`.
pub fn dirichlet_beta(s: f64) -> f64 {
    alternating_sum(|k| (2.0 * k + 1.0).powf(-s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1.0e16, 1.0, -1.0e16];
        values.extend(std::iter::repeat(1e-3).take(1000));
        assert!((compensated_sum(values) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solver_finds_cube_root() {
        let r = solve_increasing(|x| (x * x * x - 2.0, 3.0 * x * x), 0.0, 2.0, 0.1, 1.0, 1e-15);
        assert!((r.root - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn solver_survives_zero_derivative_start() {
        let r = solve_increasing(|x| (x * x * x, 3.0 * x * x), -1.0, 3.0, 0.0, 1.0, 1e-30);
        assert!(r.root.abs() < 1e-9);
    }

    #[test]
    fn gk_integrates_gaussian_density() {
        let (v, _) = integrate_gk(
            |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -10.0,
            10.0,
            0.0,
            1e-14,
        );
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn zeta_and_beta_reference_values() {
        // mpmath: zeta(0.75), zeta(0.5), dirichlet beta(0.75), zeta(2)
        assert!((riemann_zeta(0.75) - (-3.441_285_386_945_223)).abs() < 1e-12);
        assert!((riemann_zeta(0.5) - (-1.460_354_508_809_586_8)).abs() < 1e-12);
        assert!((riemann_zeta(2.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        assert!((dirichlet_beta(1.0) - std::f64::consts::FRAC_PI_4).abs() < 1e-13);
        let beta075 = dirichlet_beta(0.75);
        assert!((4.0 * riemann_zeta(0.75) * beta075 - (-10.077_559_478_793_152)).abs() < 1e-11);
    }

    #[test]
    fn slope_of_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert!((ols_slope(&xs, &ys) - 2.5).abs() < 1e-14);
    }
}
