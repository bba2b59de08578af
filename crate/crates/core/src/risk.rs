//! Quantiles, expected shortfall and the truncated-model comparison, all
//! driven by the moderate-deviation tail approximation.

use std::cell::RefCell;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PartialSumModel;
use crate::numeric::{integrate_gk, solve_increasing};
use crate::tilt::{aggregate_cgf, normal, regime, tail_lower, tail_upper, Regime, TailEstimate, TiltOptions, Variant};

/// Largest standardized threshold searched for Gaussian innovations, where
/// no trust region applies.
const GAUSSIAN_SEARCH_LIMIT: f64 = 40.0;
/// A quadrature segment contributing less than this fraction of the running
/// integral ends the expected-shortfall integration.
const ES_STOP: f64 = 1e-16;

/// Largest contribution of the tail beyond the reachable range, relative to
/// the shortfall, that is folded into `quadrature_error` instead of failing.
const ES_REMAINDER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskResult {
    pub alpha: f64,
    /// Standardized quantile: the approximate tail equals `alpha` at `x_alpha`.
    pub x_alpha: f64,
    /// `x_alpha √B_n`.
    pub q: f64,
    /// `E(S_n | S_n ≥ Q)`, when computed.
    pub es: Option<f64>,
    pub quadrature_error: f64,
    pub error_scale: f64,
    pub regime: Regime,
    /// Relative mismatch `|tail(x_alpha)/alpha − 1|` at the returned root.
    pub tail_mismatch: f64,
}

/// Approximate `P(S_n > y √B_n)` for any real `y`.
fn upper_prob(model: &PartialSumModel, y: f64, opts: &TiltOptions) -> Result<TailEstimate> {
    if y >= 0.0 {
        tail_upper(model, y, Variant::TheoremForm, opts)
    } else {
        let mut est = tail_lower(model, -y, Variant::TheoremForm, opts)?;
        est.value = 1.0 - est.value;
        est.log_value = est.value.ln();
        Ok(est)
    }
}

/// Largest standardized threshold on one side reachable by both the trust
/// region and the saddle disc.
fn search_limit(model: &PartialSumModel, lower: bool, opts: &TiltOptions) -> Result<f64> {
    if model.innovation().is_gaussian() {
        return Ok(GAUSSIAN_SEARCH_LIMIT);
    }
    let trust = opts.t_max * model.scale() * (1.0 - 1e-9);
    let h = model.h_n() * (1.0 - 1e-6);
    let edge = aggregate_cgf(model, if lower { -h } else { h })?.1.abs() / model.b_n().sqrt();
    Ok(trust.min(edge * (1.0 - 1e-9)))
}

/// Solves `tail(x) = p` on `[0, limit)` for one of the two tails, where the
/// log tail is decreasing with derivative `x − 1/ψ(x) − |z|√B_n`.
fn solve_tail(model: &PartialSumModel, p: f64, lower: bool, opts: &TiltOptions) -> Result<(f64, f64)> {
    let tail = |x: f64| {
        if lower {
            tail_lower(model, x, Variant::TheoremForm, opts)
        } else {
            tail_upper(model, x, Variant::TheoremForm, opts)
        }
    };
    let limit = search_limit(model, lower, opts)?;
    let at_limit = tail(limit)?;
    if at_limit.log_value > p.ln() {
        return Err(Error::OutOfRange {
            t: f64::INFINITY,
            t_max: opts.t_max,
            x_boundary: limit,
        });
    }
    let sqrt_b = model.b_n().sqrt();
    let target = p.ln();
    let mut failure = None;
    let report = solve_increasing(
        |x| match tail(x) {
            Ok(est) => {
                let slope = x - 1.0 / normal::mills_psi(x) - est.z.abs() * sqrt_b;
                (target - est.log_value, -slope)
            }
            Err(e) => {
                failure = Some(e);
                (f64::NAN, f64::NAN)
            }
        },
        0.0,
        limit,
        (-2.0 * p.ln()).sqrt().min(limit),
        1.0,
        1e-13,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let est = tail(report.root)?;
    Ok((report.root, (est.log_value - target).exp_m1().abs()))
}

/// Upper-`alpha` quantile of `S_n` from the tail approximation.
///
/// For `alpha > 1/2` the lower-tail formula is solved for `1 − alpha`, so
/// skewed laws are handled without assuming symmetry.
pub fn quantile(model: &PartialSumModel, alpha: f64, opts: &TiltOptions) -> Result<RiskResult> {
    if !(alpha > 1e-12 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (1e-12, 1), got {alpha}")));
    }
    let (x_alpha, mismatch) = if alpha == 0.5 {
        (0.0, 0.0)
    } else if alpha < 0.5 {
        solve_tail(model, alpha, false, opts)?
    } else {
        let (x, m) = solve_tail(model, 1.0 - alpha, true, opts)?;
        (-x, m)
    };
    let scale = model.scale();
    Ok(RiskResult {
        alpha,
        x_alpha,
        q: x_alpha * model.b_n().sqrt(),
        es: None,
        quadrature_error: 0.0,
        error_scale: (x_alpha.abs() + 1.0) / scale,
        regime: regime(model, x_alpha, opts),
        tail_mismatch: mismatch,
    })
}

/// Expected shortfall `Q + (√B_n/α) ∫_{x_α}^∞ P̂(S_n > y√B_n) dy`, integrated
/// on segments of doubling width until a segment adds less than 1e-16 of the
/// running total or the reachable range ends with a negligible integrand,
/// whose bound is added to `quadrature_error`.
pub fn expected_shortfall(model: &PartialSumModel, alpha: f64, opts: &TiltOptions) -> Result<RiskResult> {
    let mut res = quantile(model, alpha, opts)?;
    let limit = search_limit(model, false, opts)?;
    let sqrt_b = model.b_n().sqrt();
    let failure = RefCell::new(None);
    let integrand = |y: f64| match upper_prob(model, y, opts) {
        Ok(est) => est.value,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let mut a = res.x_alpha;
    let mut width = 0.5;
    let mut total = 0.0;
    let mut err = 0.0;
    loop {
        let b = (a + width).min(limit);
        let (seg, seg_err) = integrate_gk(&integrand, a, b, 0.0, 1e-13);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        total += seg;
        err += seg_err;
        if seg <= ES_STOP * total {
            break;
        }
        // past the last reachable threshold the remaining mass is below
        // f(b)/b, since the tail decays at least as fast as a normal one there
        if b >= limit {
            let remainder = integrand(b) / b.max(1.0);
            let partial_es = res.q + sqrt_b / alpha * total;
            if sqrt_b / alpha * remainder > ES_REMAINDER * partial_es.abs().max(sqrt_b / alpha * total) {
                return Err(Error::QuadratureOutOfRange { y: b, partial_es });
            }
            err += remainder;
            break;
        }
        a = b;
        width *= 2.0;
    }
    res.es = Some(res.q + sqrt_b / alpha * total);
    res.quadrature_error = sqrt_b / alpha * err;
    Ok(res)
}

/// Full versus truncated model at a common standardized threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationComparison {
    pub x: f64,
    /// `(1 − F_n(x))/(1 − F_n^m(x))` from the two tail approximations.
    pub ratio: f64,
    /// `exp{x³ (Γ_3/(6B_n^{3/2}) − Γ_3^m/(6(B_n^m)^{3/2}))}`, the contribution
    /// of the leading Cramér coefficients `β_{0n}` and `β_{0n}^m`.
    pub dominant: f64,
    pub error_scale: f64,
}

/// Compares the tail of `S_n` with that of its finite-moving-average
/// approximation `S_n^m`.
pub fn truncation_ratio(
    full: &PartialSumModel,
    truncated: &PartialSumModel,
    x: f64,
    opts: &TiltOptions,
) -> Result<TruncationComparison> {
    if full.window() != truncated.window() || full.dim() != truncated.dim() {
        return Err(Error::WindowMismatch(format!(
            "window {} (d = {}) vs {} (d = {})",
            full.window(),
            full.dim(),
            truncated.window(),
            truncated.dim()
        )));
    }
    if full.innovation() != truncated.innovation() {
        return Err(Error::WindowMismatch("innovation laws differ".into()));
    }
    let a = tail_upper(full, x, Variant::TheoremForm, opts)?;
    let b = tail_upper(truncated, x, Variant::TheoremForm, opts)?;
    let lead = |m: &PartialSumModel| -> Result<f64> {
        let bn = m.b_n();
        Ok(m.aggregate_cumulant(3)? / (6.0 * bn * bn.sqrt()))
    };
    let dominant = (x * x * x * (lead(full)? - lead(truncated)?)).exp();
    Ok(TruncationComparison {
        x,
        ratio: (a.log_value - b.log_value).exp(),
        dominant,
        error_scale: a.error_scale.max(b.error_scale),
    })
}
