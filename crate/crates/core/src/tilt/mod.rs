//! The conjugate-measure engine: aggregate CGF of `S_n`, the saddle point of
//! `x = Λ_n'(z)/√B_n`, and the moderate-deviation tail approximations built on
//! it.

pub mod normal;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PartialSumModel;
use crate::numeric::{solve_increasing, CompensatedSum};
use crate::series::{lambda_coefficients, DEFAULT_ORDER, MAX_ORDER};

/// Below this `|t|` the pointwise `λ_n(t)` is replaced by the truncated
/// Cramér series.
pub const SMALL_T: f64 = 1e-4;
/// Multiple of `(H_n √B_n)^{1/3}` bounding the cube-root range.
pub const CUBE_ROOT_CONSTANT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltOptions {
    /// Trust region `|t| < t_max`, with `t = x/(H_n √B_n)`.
    pub t_max: f64,
    /// Truncation order of the Cramér series used near `t = 0`.
    pub series_order: usize,
}

impl Default for TiltOptions {
    fn default() -> Self {
        TiltOptions {
            t_max: 0.75,
            series_order: DEFAULT_ORDER,
        }
    }
}

impl TiltOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) {
            return Err(Error::param("t_max", format!("must be positive, got {}", self.t_max)));
        }
        if self.series_order > MAX_ORDER {
            return Err(Error::OrderTooLarge {
                order: self.series_order,
                max: MAX_ORDER,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FullRange,
    CubeRootRange,
    OutOfRange,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::FullRange => "full_range",
            Regime::CubeRootRange => "cube_root_range",
            Regime::OutOfRange => "out_of_range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `(1 − Φ(x)) exp{x³ λ_n(t)/(H_n √B_n)}`.
    #[default]
    TheoremForm,
    /// `e^{−(zM̄ − Λ)} ψ(z √B̄)/√(2π)`.
    SaddlepointForm,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::TheoremForm => "theorem_form",
            Variant::SaddlepointForm => "saddlepoint_form",
        }
    }
}

/// Saddle point of `x = Λ_n'(z)/√B_n` and the quantities derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltSolution {
    pub x: f64,
    pub t: f64,
    pub z: f64,
    pub m_bar: f64,
    pub b_bar: f64,
    /// `z M̄_n − Λ_n(z)`.
    pub exponent: f64,
    pub lambda_t: f64,
    pub newton_iters: usize,
    pub residual: f64,
    /// `x/(2√B_n) ≤ |z| ≤ 2x/√B_n`.
    pub in_bracket: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub x: f64,
    pub value: f64,
    /// Natural log of the unclamped value.
    pub log_value: f64,
    /// `exp{x³ λ_n(t)/(H_n √B_n)}`, the ratio to the normal tail.
    pub correction_factor: f64,
    /// `(x + 1)/(H_n √B_n)`.
    pub error_scale: f64,
    /// `e^{−x²/2}/(H_n √B_n)`, the scale of the additive error form.
    pub additive_bound: f64,
    pub regime: Regime,
    pub variant: Variant,
    pub t: f64,
    pub z: f64,
    pub lambda_t: f64,
}

/// `Λ_n(z) = Σ_j L(b_j z)` with its first two derivatives.
pub fn aggregate_cgf(model: &PartialSumModel, z: f64) -> Result<(f64, f64, f64)> {
    let inn = model.innovation();
    if !inn.is_gaussian() && !(z.abs() < model.h_n()) {
        return Err(Error::CgfDomain { z: z.abs(), h_n: model.h_n() });
    }
    let mut l = CompensatedSum::new();
    let mut d1 = CompensatedSum::new();
    let mut d2 = CompensatedSum::new();
    for &(b, count) in model.weight_groups() {
        let c = count as f64;
        let w = b * z;
        l.add(c * inn.cgf(w));
        d1.add(c * b * inn.cgf_d1(w));
        d2.add(c * b * b * inn.cgf_d2(w));
    }
    Ok((l.value(), d1.value(), d2.value()))
}

fn out_of_range(model: &PartialSumModel, t: f64, opts: &TiltOptions) -> Error {
    Error::OutOfRange {
        t,
        t_max: opts.t_max,
        x_boundary: opts.t_max * model.scale(),
    }
}

/// Whether `x` (standardized, either sign) is inside the trust region.
pub fn in_trust_region(model: &PartialSumModel, x: f64, opts: &TiltOptions) -> bool {
    model.innovation().is_gaussian() || (x / model.scale()).abs() < opts.t_max
}

/// Regime classification of a standardized threshold.
pub fn regime(model: &PartialSumModel, x: f64, opts: &TiltOptions) -> Regime {
    if !in_trust_region(model, x, opts) {
        Regime::OutOfRange
    } else if x.abs() <= CUBE_ROOT_CONSTANT * model.scale().cbrt() {
        Regime::CubeRootRange
    } else {
        Regime::FullRange
    }
}

/// Solves `Λ_n'(z) = x √B_n`. Negative `x` gives the lower-tail saddle.
pub fn solve_saddle(model: &PartialSumModel, x: f64, opts: &TiltOptions) -> Result<TiltSolution> {
    if !x.is_finite() {
        return Err(Error::param("x", format!("must be finite, got {x}")));
    }
    let gaussian = model.innovation().is_gaussian();
    let sqrt_b = model.b_n().sqrt();
    let scale = model.scale();
    let t = x / scale;
    if !gaussian && t.abs() >= opts.t_max {
        return Err(out_of_range(model, t, opts));
    }
    let target = x * sqrt_b;
    let (z, iters) = if gaussian {
        (x / sqrt_b, 0)
    } else if x == 0.0 {
        (0.0, 0)
    } else {
        let h = model.h_n() * (1.0 - 1e-6);
        let (lo, hi) = if x > 0.0 { (0.0, h) } else { (-h, 0.0) };
        let edge = aggregate_cgf(model, if x > 0.0 { hi } else { lo })?.1;
        if (x > 0.0 && edge < target) || (x < 0.0 && edge > target) {
            return Err(Error::SaddleOutsideDisc { x, h_n: model.h_n() });
        }
        let tol = 1e-15 * target.abs();
        let report = solve_increasing(
            |z| {
                let (_, d1, d2) = aggregate_cgf(model, z).expect("inside the disc");
                (d1 - target, d2)
            },
            lo,
            hi,
            x / sqrt_b,
            0.4 * model.h_n(),
            tol,
        );
        (report.root, report.iterations)
    };
    let (cgf, m_bar, b_bar) = aggregate_cgf(model, z)?;
    // z·x√B_n − Λ_n(z) equals zM̄_n − Λ_n(z) at the root and is stationary in
    // z there, so solver error enters only at second order
    let exponent = if gaussian { 0.5 * x * x } else { z * target - cgf };
    let lambda_t = if gaussian {
        0.0
    } else if t.abs() < SMALL_T {
        lambda_coefficients(model, opts.series_order.max(1))?.eval(t)
    } else {
        let s2 = scale * scale;
        (0.5 * s2 * t * t - exponent) / (s2 * t * t * t)
    };
    let ax = x.abs();
    let az = z.abs();
    Ok(TiltSolution {
        x,
        t,
        z,
        m_bar,
        b_bar,
        exponent,
        lambda_t,
        newton_iters: iters,
        residual: (m_bar / sqrt_b - x).abs(),
        in_bracket: ax / (2.0 * sqrt_b) <= az && az <= 2.0 * ax / sqrt_b,
    })
}

fn estimate(
    model: &PartialSumModel,
    x: f64,
    sol: &TiltSolution,
    variant: Variant,
    opts: &TiltOptions,
) -> TailEstimate {
    let scale = model.scale();
    // x³λ(t)/(H_n√B_n) = x²/2 − exponent identically
    let log_correction = 0.5 * x * x - sol.exponent;
    let log_value = match variant {
        Variant::TheoremForm => normal::mills_psi(x).ln() - normal::LN_SQRT_2PI - sol.exponent,
        Variant::SaddlepointForm => {
            normal::mills_psi(sol.z.abs() * sol.b_bar.sqrt()).ln() - normal::LN_SQRT_2PI - sol.exponent
        }
    };
    TailEstimate {
        x,
        value: log_value.exp().clamp(0.0, 1.0),
        log_value,
        correction_factor: log_correction.exp(),
        error_scale: (x + 1.0) / scale,
        additive_bound: (-0.5 * x * x).exp() / scale,
        regime: regime(model, x, opts),
        variant,
        t: sol.t,
        z: sol.z,
        lambda_t: sol.lambda_t,
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::param("x", format!("must be finite and nonnegative, got {x}")));
    }
    Ok(())
}

/// Approximation of `P(S_n > x √B_n)`.
pub fn tail_upper(model: &PartialSumModel, x: f64, variant: Variant, opts: &TiltOptions) -> Result<TailEstimate> {
    check_x(x)?;
    let sol = solve_saddle(model, x, opts)?;
    Ok(estimate(model, x, &sol, variant, opts))
}

/// Approximation of `P(S_n < −x √B_n)`, from the saddle at `−x`.
pub fn tail_lower(model: &PartialSumModel, x: f64, variant: Variant, opts: &TiltOptions) -> Result<TailEstimate> {
    check_x(x)?;
    let sol = solve_saddle(model, -x, opts)?;
    let mut est = estimate(model, x, &sol, variant, opts);
    est.t = sol.t;
    Ok(est)
}

/// `(1 − Φ(x)) exp{x³ Γ_3/(6 B_n^{3/2})}`. Computed outside the cube-root
/// range too, with the regime flag set accordingly.
pub fn tail_leading_order(model: &PartialSumModel, x: f64, opts: &TiltOptions) -> Result<TailEstimate> {
    check_x(x)?;
    let g3 = model.aggregate_cumulant(3)?;
    let b = model.b_n();
    let log_correction = x * x * x * g3 / (6.0 * b * b.sqrt());
    let log_value = normal::ln_sf(x) + log_correction;
    let scale = model.scale();
    let regime = if in_trust_region(model, x, opts) && x <= CUBE_ROOT_CONSTANT * scale.cbrt() {
        Regime::CubeRootRange
    } else if in_trust_region(model, x, opts) {
        Regime::FullRange
    } else {
        Regime::OutOfRange
    };
    Ok(TailEstimate {
        x,
        value: log_value.exp().clamp(0.0, 1.0),
        log_value,
        correction_factor: log_correction.exp(),
        error_scale: (x + 1.0) / scale,
        additive_bound: (-0.5 * x * x).exp() / scale,
        regime,
        variant: Variant::TheoremForm,
        t: x / scale,
        z: f64::NAN,
        lambda_t: scale * g3 / (6.0 * b * b.sqrt()),
    })
}

/// `(F_n(x + c/x) − F_n(x))/(1 − F_n(x))` from the upper-tail approximation.
pub fn interval_ratio(model: &PartialSumModel, x: f64, c: f64, opts: &TiltOptions) -> Result<f64> {
    if !(x > 0.0) || !(c > 0.0) {
        return Err(Error::param("x, c", "both must be positive"));
    }
    let near = tail_upper(model, x, Variant::TheoremForm, opts)?;
    let far = tail_upper(model, x + c / x, Variant::TheoremForm, opts)?;
    Ok(-(far.log_value - near.log_value).exp_m1())
}

/// Upper-tail approximations over a grid of thresholds, evaluated in
/// parallel with one result per point in input order.
pub fn tail_upper_grid(
    model: &PartialSumModel,
    xs: &[f64],
    variant: Variant,
    opts: &TiltOptions,
) -> Vec<Result<TailEstimate>> {
    xs.par_iter().map(|&x| tail_upper(model, x, variant, opts)).collect()
}

/// The two perturbation bounds on the conjugate mean and variance at `z`:
/// `|M̄_n − z B_n| ≤ 8 z² C_n / H_n³` and `|B̄_n − B_n| ≤ 28 |z| C_n / H_n³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProofBoundCheck {
    pub z: f64,
    pub mean_gap: f64,
    pub mean_bound: f64,
    pub variance_gap: f64,
    pub variance_bound: f64,
}

impl ProofBoundCheck {
    pub fn holds(&self) -> bool {
        self.mean_gap < self.mean_bound && self.variance_gap < self.variance_bound
    }
}

pub fn proof_bounds(model: &PartialSumModel, z: f64) -> Result<ProofBoundCheck> {
    let (_, m_bar, b_bar) = aggregate_cgf(model, z)?;
    let h3 = model.h_n().powi(3);
    let c = model.c_n();
    Ok(ProofBoundCheck {
        z,
        mean_gap: (m_bar - z * model.b_n()).abs(),
        mean_bound: 8.0 * z * z * c / h3,
        variance_gap: (b_bar - model.b_n()).abs(),
        variance_bound: 28.0 * z.abs() * c / h3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::InnovationModel;
    use crate::field::{CoefficientField, Cutoff};
    use proptest::prelude::*;

    fn iid(inn: InnovationModel, n: usize) -> PartialSumModel {
        CoefficientField::iid(1).unwrap().window_weights(&inn, n).unwrap()
    }

    fn opts() -> TiltOptions {
        TiltOptions::default()
    }

    #[test]
    fn aggregate_cgf_examples() {
        let g = iid(InnovationModel::gaussian(1.0).unwrap(), 6);
        let (l, d1, d2) = aggregate_cgf(&g, 0.3).unwrap();
        assert!((l - 13.0 * 0.045).abs() < 1e-14);
        assert!((d1 - 13.0 * 0.3).abs() < 1e-14);
        assert_eq!(d2, 13.0);
        assert_eq!(aggregate_cgf(&g, 0.0).unwrap(), (0.0, 0.0, 13.0));
        let p = iid(InnovationModel::centered_poisson(1.0).unwrap(), 2);
        let z = 0.4f64;
        let (l, _, _) = aggregate_cgf(&p, z).unwrap();
        assert!((l - 5.0 * (z.exp() - 1.0 - z)).abs() < 1e-14);
        assert!(matches!(aggregate_cgf(&p, p.h_n()), Err(Error::CgfDomain { .. })));
    }

    #[test]
    fn gaussian_saddle_is_closed_form() {
        let g = iid(InnovationModel::gaussian(1.0).unwrap(), 7);
        for x in [0.0, 0.5, 3.0, 8.0] {
            let s = solve_saddle(&g, x, &opts()).unwrap();
            assert!((s.z - x / 15f64.sqrt()).abs() < 1e-15);
            assert!((s.exponent - x * x / 2.0).abs() < 1e-12);
            assert_eq!(s.lambda_t, 0.0);
        }
    }

    #[test]
    fn rademacher_saddle_closed_form() {
        let m = iid(InnovationModel::rademacher(), 4);
        let s = solve_saddle(&m, 1.0, &opts()).unwrap();
        assert!((s.z - (1.0f64 / 3.0).atanh()).abs() < 1e-12);
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn zero_threshold() {
        let p = iid(InnovationModel::centered_poisson(1.0).unwrap(), 30);
        let s = solve_saddle(&p, 0.0, &opts()).unwrap();
        assert_eq!((s.z, s.exponent), (0.0, 0.0));
        let beta0 = lambda_coefficients(&p, 2).unwrap().coeff(0);
        assert!((s.lambda_t - beta0).abs() < 1e-15);
        let est = tail_upper(&p, 0.0, Variant::TheoremForm, &opts()).unwrap();
        assert!((est.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_tails_are_exact() {
        for n in [5usize, 50] {
            let g = iid(InnovationModel::gaussian(1.0).unwrap(), n);
            for i in 0..=16 {
                let x = 0.5 * i as f64;
                for v in [Variant::TheoremForm, Variant::SaddlepointForm] {
                    let up = tail_upper(&g, x, v, &opts()).unwrap();
                    assert!((up.value / normal::sf(x) - 1.0).abs() < 1e-12, "x={x} {v:?}");
                    let lo = tail_lower(&g, x, v, &opts()).unwrap();
                    assert!((lo.value / normal::cdf(-x) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn symmetric_law_has_symmetric_tails() {
        let m = iid(InnovationModel::centered_uniform(1.0).unwrap(), 40);
        for x in [0.3, 1.0, 2.5] {
            let up = tail_upper(&m, x, Variant::TheoremForm, &opts()).unwrap().value;
            let lo = tail_lower(&m, x, Variant::TheoremForm, &opts()).unwrap().value;
            assert!((up / lo - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_is_right_skewed() {
        let m = iid(InnovationModel::centered_poisson(1.0).unwrap(), 5000);
        let up = tail_upper(&m, 2.0, Variant::TheoremForm, &opts()).unwrap().value;
        let lo = tail_lower(&m, 2.0, Variant::TheoremForm, &opts()).unwrap().value;
        assert!(lo < up);
    }

    #[test]
    fn out_of_range_carries_boundary() {
        let m = iid(InnovationModel::rademacher(), 10);
        let x = 0.9 * m.scale();
        match tail_upper(&m, x, Variant::TheoremForm, &opts()) {
            Err(Error::OutOfRange { x_boundary, .. }) => {
                assert!((x_boundary - 0.75 * m.scale()).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn leading_order_examples() {
        let u = iid(InnovationModel::centered_uniform(1.0).unwrap(), 100);
        let est = tail_leading_order(&u, 1.5, &opts()).unwrap();
        assert!((est.value / normal::sf(1.5) - 1.0).abs() < 1e-14);
        let p = iid(InnovationModel::centered_poisson(1.0).unwrap(), 100);
        let n = 201.0f64;
        let est = tail_leading_order(&p, 2.0, &opts()).unwrap();
        assert!((est.correction_factor.ln() - 8.0 / (6.0 * n.sqrt())).abs() < 1e-14);
        let far = tail_leading_order(&p, 0.7 * p.scale(), &opts()).unwrap();
        assert_eq!(far.regime, Regime::FullRange);
    }

    #[test]
    fn leading_order_converges_to_full_form() {
        let mut gaps = Vec::new();
        for n in [50usize, 200, 800] {
            let p = iid(InnovationModel::centered_poisson(1.0).unwrap(), n);
            let full = tail_upper(&p, 2.0, Variant::TheoremForm, &opts()).unwrap().value;
            let lead = tail_leading_order(&p, 2.0, &opts()).unwrap().value;
            gaps.push((lead / full - 1.0).abs());
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn interval_ratio_examples() {
        let g = iid(InnovationModel::gaussian(1.0).unwrap(), 5);
        let r = interval_ratio(&g, 10.0, 1.0, &opts()).unwrap();
        let exact = (normal::sf(10.0) - normal::sf(10.1)) / normal::sf(10.0);
        assert!((r - exact).abs() < 1e-12);
        assert!((r - (1.0 - (-1.0f64).exp())).abs() < 0.06);
        let tiny = interval_ratio(&g, 2.0, 1e-9, &opts()).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-8);
    }

    #[test]
    fn variants_agree_within_error_scale() {
        let p = iid(InnovationModel::centered_poisson(1.0).unwrap(), 500);
        let xmax = 0.1 * p.scale();
        for i in 0..=20 {
            let x = xmax * i as f64 / 20.0;
            let a = tail_upper(&p, x, Variant::TheoremForm, &opts()).unwrap();
            let b = tail_upper(&p, x, Variant::SaddlepointForm, &opts()).unwrap();
            let r = a.value / b.value;
            assert!(r < 1.0 + 5.0 * a.error_scale && 1.0 / r < 1.0 + 5.0 * a.error_scale);
        }
    }

    #[test]
    fn tail_is_strictly_decreasing() {
        let m = iid(InnovationModel::centered_bernoulli(0.3).unwrap(), 100);
        let xmax = 0.5 * 0.75 * m.scale();
        let mut prev = f64::INFINITY;
        let mut x = 0.0;
        while x <= xmax {
            let v = tail_upper(&m, x, Variant::TheoremForm, &opts()).unwrap().log_value;
            assert!(v < prev);
            prev = v;
            x += 0.01;
        }
    }

    #[test]
    fn pointwise_lambda_continuous_at_series_switch() {
        let p = CoefficientField::geometric(1, 0.5, Cutoff::Auto)
            .unwrap()
            .window_weights(&InnovationModel::centered_poisson(1.0).unwrap(), 40)
            .unwrap();
        let beta = lambda_coefficients(&p, DEFAULT_ORDER).unwrap();
        for t in [0.999 * SMALL_T, 1.001 * SMALL_T, 1e-3] {
            let s = solve_saddle(&p, t * p.scale(), &opts()).unwrap();
            assert!((s.lambda_t - beta.eval(t)).abs() < 1e-11, "t={t}");
        }
    }

    #[test]
    fn proof_bounds_on_poisson() {
        let p = iid(InnovationModel::centered_poisson(1.0).unwrap(), 50);
        for i in 1..64 {
            let z = 0.5 * p.h_n() * i as f64 / 64.0;
            assert!(proof_bounds(&p, z).unwrap().holds());
            assert!(proof_bounds(&p, -z).unwrap().holds());
        }
    }

    #[test]
    fn lambda_bounded_across_n() {
        let mut maxima = Vec::new();
        for n in [50usize, 500, 5000] {
            let p = iid(InnovationModel::centered_poisson(1.0).unwrap(), n);
            let mut mx: f64 = 0.0;
            for i in 0..=10 {
                let t = 0.1 * 0.75 * i as f64 / 10.0;
                let s = solve_saddle(&p, t * p.scale(), &opts()).unwrap();
                mx = mx.max(s.lambda_t.abs());
            }
            maxima.push(mx);
        }
        let hi = maxima.iter().cloned().fold(0.0, f64::max);
        let lo = maxima.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi <= 2.0 * lo, "{maxima:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(250))]
        #[test]
        fn saddle_residual_small(
            which in 0usize..5,
            n in 3usize..300,
            frac in 0.0f64..0.99,
            lower in any::<bool>(),
        ) {
            let inn = match which {
                0 => InnovationModel::gaussian(1.3).unwrap(),
                1 => InnovationModel::rademacher(),
                2 => InnovationModel::centered_bernoulli(0.2).unwrap(),
                3 => InnovationModel::centered_uniform(1.0).unwrap(),
                _ => InnovationModel::centered_poisson(2.0).unwrap(),
            };
            let m = iid(inn, n);
            let x = frac * 0.75 * m.scale() * if lower { -1.0 } else { 1.0 };
            let s = match solve_saddle(&m, x, &opts()) {
                Err(Error::SaddleOutsideDisc { .. }) => {
                    // skewed laws can run out of disc before t_max
                    let edge = aggregate_cgf(&m, m.h_n() * (1.0 - 1e-6) * x.signum()).unwrap().1;
                    prop_assert!(edge.abs() < x.abs() * m.b_n().sqrt());
                    return Ok(());
                }
                other => other.unwrap(),
            };
            prop_assert!(s.residual <= 1e-10 * x.abs().max(1.0));
            prop_assert!(s.z.abs() < m.h_n());
            let s2 = m.scale() * m.scale();
            if s.t.abs() >= SMALL_T {
                let ident = 0.5 * s2 * s.t * s.t - s2 * s.t.powi(3) * s.lambda_t;
                prop_assert!((ident - s.exponent).abs() <= 1e-9 * s.exponent.abs().max(1e-300));
            }
        }
    }
}
