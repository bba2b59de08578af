//! Truncated power series in one variable and the two series built on top of
//! them: the inverse of the saddle-point map `t ↦ z` and the Cramér series
//! `λ_n(t) = Σ β_k t^k`.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::PartialSumModel;

/// Default truncation order of the Cramér series.
pub const DEFAULT_ORDER: usize = 8;
/// Largest supported truncation order of the Cramér series.
pub const MAX_ORDER: usize = 16;

/// `Σ_{k=0}^{K} c_k t^k`, with every operation truncated at order `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    coeffs: Vec<f64>,
}

impl TruncatedSeries {
    /// Builds a series of order `order`, padding with zeros or dropping
    /// coefficients beyond the order.
    pub fn new(mut coeffs: Vec<f64>, order: usize) -> Self {
        coeffs.resize(order + 1, 0.0);
        TruncatedSeries { coeffs }
    }

    /// Series whose order is `coeffs.len() - 1`.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a series needs at least the constant term");
        TruncatedSeries { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self::new(Vec::new(), order)
    }

    pub fn constant(c: f64, order: usize) -> Self {
        Self::new(vec![c], order)
    }

    /// The series `t`.
    pub fn identity(order: usize) -> Self {
        Self::new(vec![0.0, 1.0], order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `c_k`, or 0 beyond the order.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    fn check_order(&self, other: &Self) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(Self::from_coeffs(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(Self::from_coeffs(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_coeffs(self.coeffs.iter().map(|c| c * factor).collect())
    }

    /// Cauchy product truncated at the common order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let k = self.order();
        let mut out = vec![0.0; k + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs[..=k - i].iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Ok(Self::from_coeffs(out))
    }

    /// Formal derivative, kept at the same order (top coefficient becomes 0).
    pub fn derivative(&self) -> Self {
        let k = self.order();
        let mut out = vec![0.0; k + 1];
        for i in 1..=k {
            out[i - 1] = i as f64 * self.coeffs[i];
        }
        Self::from_coeffs(out)
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn reciprocal(&self) -> Result<Self> {
        let c0 = self.coeffs[0];
        if c0 == 0.0 {
            return Err(Error::Numerical("reciprocal of a series with zero constant term".into()));
        }
        let k = self.order();
        let mut out = vec![0.0; k + 1];
        out[0] = 1.0 / c0;
        for n in 1..=k {
            let s: f64 = (1..=n).map(|i| self.coeffs[i] * out[n - i]).sum();
            out[n] = -s / c0;
        }
        Ok(Self::from_coeffs(out))
    }

    /// `self ∘ inner` by Horner evaluation in the series ring.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        self.check_order(inner)?;
        if inner.coeffs[0] != 0.0 {
            return Err(Error::NonzeroConstant(inner.coeffs[0]));
        }
        let k = self.order();
        let mut acc = Self::constant(self.coeffs[k], k);
        for i in (0..k).rev() {
            acc = acc.mul(inner)?;
            acc.coeffs[0] += self.coeffs[i];
        }
        Ok(acc)
    }

    /// Compositional inverse `g` with `f∘g = g∘f = t + O(t^{K+1})`, by Newton
    /// iteration `g ← g − (f∘g − t)/(f'∘g)`.
    pub fn revert(&self) -> Result<Self> {
        if self.coeffs[0] != 0.0 {
            return Err(Error::NonzeroConstant(self.coeffs[0]));
        }
        let k = self.order();
        let f1 = self.coeff(1);
        if f1 == 0.0 {
            return Err(Error::ZeroLinearCoefficient);
        }
        let id = Self::identity(k);
        let df = self.derivative();
        let mut g = id.scale(1.0 / f1);
        // each step doubles the number of correct coefficients
        let mut correct = 2;
        while correct <= k + 1 {
            let resid = self.compose(&g)?.sub(&id)?;
            let slope = df.compose(&g)?.reciprocal()?;
            g = g.sub(&resid.mul(&slope)?)?;
            correct *= 2;
        }
        let resid = self.compose(&g)?.sub(&id)?;
        let slope = df.compose(&g)?.reciprocal()?;
        g = g.sub(&resid.mul(&slope)?)?;
        g.coeffs[0] = 0.0;
        Ok(g)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}·t")?,
                _ => write!(f, "{c}·t^{k}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " + O(t^{})", self.order() + 1)
    }
}

fn check_model(model: &PartialSumModel, order: usize, min: usize) -> Result<()> {
    if !(model.b_n() > 0.0) {
        return Err(Error::Degenerate(format!("B_n = {} is not positive", model.b_n())));
    }
    if order < min {
        return Err(Error::param("order", format!("must be at least {min}, got {order}")));
    }
    Ok(())
}

/// The map `t(z) = Λ'(z)/(H_n B_n) = (1/(H_n B_n)) Σ_{m≥1} Γ_{m+1} z^m/m!`
/// truncated at `order`, with `Γ_k = γ_k Σ_j b_j^k`.
pub fn saddle_map_series(model: &PartialSumModel, order: usize) -> Result<TruncatedSeries> {
    let scale = 1.0 / (model.h_n() * model.b_n());
    let mut coeffs = vec![0.0; order + 1];
    let mut fact = 1.0;
    for m in 1..=order {
        fact *= m as f64;
        coeffs[m] = scale * model.aggregate_cumulant(m + 1)? / fact;
    }
    Ok(TruncatedSeries::from_coeffs(coeffs))
}

/// Coefficients `a_1, …, a_K` of `z = Σ a_m t^m`, the inverse of the saddle
/// map. `a_1 = H_n` and `a_2 = -H_n² Γ_3 / (2 B_n)`.
pub fn inversion_coefficients(model: &PartialSumModel, order: usize) -> Result<TruncatedSeries> {
    check_model(model, order, 2)?;
    saddle_map_series(model, order)?.revert()
}

/// The exponent `zΛ'(z) − Λ(z) = Σ_{k≥2} (k−1)Γ_k z^k / k!` as a series in
/// `t`, truncated at `order`.
pub fn exponent_series(model: &PartialSumModel, order: usize) -> Result<TruncatedSeries> {
    let z = inversion_coefficients(model, order)?;
    let mut outer = vec![0.0; order + 1];
    let mut fact = 1.0;
    for k in 1..=order {
        fact *= k as f64;
        if k >= 2 {
            outer[k] = (k - 1) as f64 * model.aggregate_cumulant(k)? / fact;
        }
    }
    TruncatedSeries::from_coeffs(outer).compose(&z)
}

/// Cramér series `λ_n(t) = Σ_{k=0}^{K} β_k t^k`, defined by
/// `exponent = H_n² B_n t²/2 − H_n² B_n t³ λ_n(t)`.
pub fn lambda_coefficients(model: &PartialSumModel, order: usize) -> Result<TruncatedSeries> {
    check_model(model, order, 0)?;
    if order > MAX_ORDER {
        return Err(Error::OrderTooLarge {
            order,
            max: MAX_ORDER,
        });
    }
    let e = exponent_series(model, order + 3)?;
    let scale = model.h_n() * model.h_n() * model.b_n();
    let beta = (0..=order).map(|k| -e.coeff(k + 3) / scale).collect();
    Ok(TruncatedSeries::from_coeffs(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::InnovationModel;
    use crate::field::{CoefficientField, Cutoff};
    use proptest::prelude::*;

    fn s(c: &[f64]) -> TruncatedSeries {
        TruncatedSeries::from_coeffs(c.to_vec())
    }

    fn close(a: &TruncatedSeries, b: &TruncatedSeries, tol: f64) -> bool {
        a.order() == b.order() && a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn products() {
        assert_eq!(s(&[1., 1., 0., 0., 0.]).mul(&s(&[1., -1., 0., 0., 0.])).unwrap(), s(&[1., 0., -1., 0., 0.]));
        assert_eq!(s(&[0., 1.]).mul(&s(&[0., 1.])).unwrap(), s(&[0., 0.]));
        assert_eq!(s(&[1., 1., 1.]).mul(&s(&[1., 1., 1.])).unwrap(), s(&[1., 2., 3.]));
        assert!(matches!(
            s(&[1., 1.]).mul(&s(&[1., 1., 1.])),
            Err(Error::OrderMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn compositions() {
        let sq = s(&[0., 0., 1., 0., 0.]);
        assert_eq!(sq.compose(&s(&[0., 1., 1., 0., 0.])).unwrap(), s(&[0., 0., 1., 2., 1.]));
        let inner = s(&[0., 0.3, -2., 5., 0.1]);
        assert_eq!(TruncatedSeries::identity(4).compose(&inner).unwrap(), inner);
        let exp: Vec<f64> = (0..=6).map(|k| 1.0 / crate::numeric::factorial(k)).collect();
        let got = s(&exp).compose(&s(&[0., 0., 1., 0., 0., 0., 0.])).unwrap();
        assert!(close(&got, &s(&[1., 0., 1., 0., 0.5, 0., 1.0 / 6.0]), 1e-15));
        assert!(matches!(
            sq.compose(&s(&[1., 1., 0., 0., 0.])),
            Err(Error::NonzeroConstant(c)) if c == 1.0
        ));
    }

    #[test]
    fn reversions() {
        assert_eq!(TruncatedSeries::identity(5).revert().unwrap(), TruncatedSeries::identity(5));
        let g = s(&[0., 1., 1., 0., 0., 0.]).revert().unwrap();
        assert!(close(&g, &s(&[0., 1., -1., 2., -5., 14.]), 1e-12), "{g}");
        assert!(close(&s(&[0., 2., 0.]).revert().unwrap(), &s(&[0., 0.5, 0.]), 0.0));
        assert!(matches!(s(&[0., 0., 1.]).revert(), Err(Error::ZeroLinearCoefficient)));
    }

    #[test]
    fn reciprocal_of_geometric() {
        let r = s(&[1., -1., 0., 0.]).reciprocal().unwrap();
        assert_eq!(r, s(&[1., 1., 1., 1.]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn revert_is_two_sided_inverse(
            first in prop_oneof![-1.0f64..-0.2, 0.2f64..1.0],
            rest in proptest::collection::vec(-1.0f64..1.0, 7),
        ) {
            let mut c = vec![0.0, first];
            c.extend(rest);
            let f = TruncatedSeries::from_coeffs(c);
            let g = f.revert().unwrap();
            let id = TruncatedSeries::identity(f.order());
            // coefficients grow like |first|^{-2k+1}, so scale the tolerance
            let tol = 1e-9 * first.abs().powi(-17);
            prop_assert!(close(&f.compose(&g).unwrap(), &id, tol));
            prop_assert!(close(&g.compose(&f).unwrap(), &id, tol));
        }
    }

    fn iid(model: InnovationModel, n: usize) -> PartialSumModel {
        CoefficientField::iid(1).unwrap().window_weights(&model, n).unwrap()
    }

    #[test]
    fn gaussian_series_are_trivial() {
        let m = iid(InnovationModel::gaussian(1.0).unwrap(), 10);
        let a = inversion_coefficients(&m, 8).unwrap();
        assert!((a.coeff(1) - m.h_n()).abs() < 1e-15 * m.h_n());
        assert!(a.coeffs()[2..].iter().all(|&c| c.abs() < 1e-14));
        let beta = lambda_coefficients(&m, 8).unwrap();
        assert!(beta.coeffs().iter().all(|&c| c.abs() < 1e-14), "{beta}");
    }

    #[test]
    fn poisson_second_inversion_coefficient() {
        let m = iid(InnovationModel::centered_poisson(1.0).unwrap(), 20);
        let a = inversion_coefficients(&m, 6).unwrap();
        let h = m.h_n();
        assert!((a.coeff(1) / h - 1.0).abs() < 1e-12);
        assert!((a.coeff(2) / (-h * h / 2.0) - 1.0).abs() < 1e-10, "{a}");
    }

    #[test]
    fn inversion_contract() {
        let m = iid(InnovationModel::centered_bernoulli(0.2).unwrap(), 7);
        let t = saddle_map_series(&m, 8).unwrap();
        let a = inversion_coefficients(&m, 8).unwrap();
        assert!(close(&t.compose(&a).unwrap(), &TruncatedSeries::identity(8), 1e-12));
    }

    #[test]
    fn symmetric_innovations_have_zero_beta0() {
        let field = CoefficientField::geometric(1, 0.5, Cutoff::Auto).unwrap();
        for inn in [InnovationModel::rademacher(), InnovationModel::centered_uniform(1.0).unwrap()] {
            let m = field.window_weights(&inn, 12).unwrap();
            assert_eq!(lambda_coefficients(&m, 4).unwrap().coeff(0), 0.0);
        }
    }

    #[test]
    fn short_memory_beta0_closed_form() {
        let field = CoefficientField::geometric(1, 0.5, Cutoff::Auto).unwrap();
        let inn = InnovationModel::centered_poisson(1.0).unwrap();
        let m = field.window_weights(&inn, 30).unwrap();
        let beta0 = lambda_coefficients(&m, 4).unwrap().coeff(0);
        let closed = inn.radius_h() * inn.cumulant(3).unwrap() * m.power_sum(3)
            / (12.0 * m.m_n() * m.b_n());
        assert!((beta0 / closed - 1.0).abs() < 1e-10);
    }

    #[test]
    fn order_limits() {
        let m = iid(InnovationModel::rademacher(), 3);
        assert!(inversion_coefficients(&m, 1).is_err());
        assert!(lambda_coefficients(&m, MAX_ORDER + 1).is_err());
        assert!(lambda_coefficients(&m, MAX_ORDER).is_ok());
    }
}
