//! Innovation laws with an analytic cumulant generating function.
//!
//! Every builtin law carries a closed-form CGF `L(z) = log E e^{zε}`, its first
//! two derivatives, cumulants, a working analyticity radius `H`, a bound `C`
//! with `|L(z)| ≤ C` on `|z| < H`, and exact samplers for both the base law and
//! its exponential tilt `dV̄(y) ∝ e^{θy} dV(y)`.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binomial, factorial, BERNOULLI_EVEN};

/// Highest cumulant order available from [`InnovationModel::cumulant`].
pub const MAX_CUMULANT_ORDER: usize = 24;
/// Highest raw-moment order available from [`InnovationModel::raw_moment`].
pub const MAX_MOMENT_ORDER: usize = 12;

const CRAMER_MARGIN: f64 = 1e-3;
const BOUND_INFLATION: f64 = 1.05;
const CONSTRUCTION_GRID: usize = 128;
/// Below this |z| the real CGF is summed from its Taylor series.
const TAYLOR_CUTOFF: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    Gaussian { sigma: f64 },
    Rademacher,
    CenteredBernoulli { p: f64 },
    CenteredUniform { half_width: f64 },
    CenteredPoisson { lambda: f64 },
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::Gaussian { .. } => "gaussian",
            Law::Rademacher => "rademacher",
            Law::CenteredBernoulli { .. } => "centered_bernoulli",
            Law::CenteredUniform { .. } => "centered_uniform",
            Law::CenteredPoisson { .. } => "centered_poisson",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Law::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::param("sigma", format!("must be positive, got {sigma}")))
            }
            Law::CenteredBernoulli { p } if !(p > 0.0 && p < 1.0) => {
                Err(Error::param("p", format!("must lie in (0, 1), got {p}")))
            }
            Law::CenteredUniform { half_width } if !(half_width > 0.0 && half_width.is_finite()) => Err(
                Error::param("half_width", format!("must be positive, got {half_width}")),
            ),
            Law::CenteredPoisson { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(Error::param("lambda", format!("must be positive, got {lambda}")))
            }
            _ => Ok(()),
        }
    }

    /// Distance from the origin to the nearest singularity of `L`.
    pub fn true_radius(&self) -> f64 {
        match *self {
            Law::Gaussian { .. } | Law::CenteredPoisson { .. } => f64::INFINITY,
            Law::Rademacher => PI / 2.0,
            Law::CenteredUniform { half_width } => PI / half_width,
            Law::CenteredBernoulli { p } => ((1.0 - p) / p).ln().hypot(PI),
        }
    }

    fn default_radius(&self) -> f64 {
        match *self {
            Law::Gaussian { .. } | Law::CenteredPoisson { .. } => 2.0,
            Law::Rademacher => 1.0,
            Law::CenteredUniform { half_width } => (0.9 * PI / half_width).min(2.0),
            Law::CenteredBernoulli { .. } => (0.9 * self.true_radius()).min(2.0),
        }
    }
}

/// Values of a lattice law lie in `offset + span·ℤ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub span: f64,
    pub offset: f64,
}

/// A single innovation law together with its Cramér constants `H` and `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationModel {
    law: Law,
    radius_h: f64,
    bound_c: f64,
    cumulants: Vec<f64>,
}

/// The cumulants `γ_1, …, γ_K` of a law (`γ_1 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSeries {
    pub coeffs: Vec<f64>,
}

impl CumulantSeries {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `γ_k` for `1 ≤ k ≤ order`.
    pub fn get(&self, k: usize) -> f64 {
        self.coeffs[k - 1]
    }
}

/// Result of checking `|L(z)| ≤ C` on the complex disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CramerReport {
    pub max_abs_l: f64,
    pub bound_c: f64,
    pub radius_h: f64,
    /// Zeros of the moment generating function enclosed by the grid's outer
    /// circle (argument principle); any zero makes `L` non-analytic there.
    pub zeros_inside: i64,
    pub ok: bool,
}

/// Builds a builtin law by name.
///
/// Recognised parameter keys are `sigma`, `p`, `half_width`, `lambda`, plus
/// the optional overrides `radius_h` and `bound_c`.
pub fn make_builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<InnovationModel> {
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        params
            .get(key)
            .copied()
            .or(default)
            .ok_or_else(|| Error::param(key, format!("required by `{name}`")))
    };
    let (law, allowed): (Law, &[&str]) = match name {
        "gaussian" => (Law::Gaussian { sigma: get("sigma", Some(1.0))? }, &["sigma"]),
        "rademacher" => (Law::Rademacher, &[]),
        "centered_bernoulli" => (Law::CenteredBernoulli { p: get("p", None)? }, &["p"]),
        "centered_uniform" => (
            Law::CenteredUniform {
                half_width: get("half_width", Some(1.0))?,
            },
            &["half_width"],
        ),
        "centered_poisson" => (
            Law::CenteredPoisson {
                lambda: get("lambda", Some(1.0))?,
            },
            &["lambda"],
        ),
        other => return Err(Error::UnknownLaw(other.to_string())),
    };
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) && key != "radius_h" && key != "bound_c" {
            return Err(Error::param(key.clone(), format!("not a parameter of `{name}`")));
        }
    }
    let mut model = InnovationModel::new(law)?;
    if let Some(&h) = params.get("radius_h") {
        model = model.with_radius(h)?;
    }
    if let Some(&c) = params.get("bound_c") {
        model = model.with_bound(c)?;
    }
    Ok(model)
}

impl InnovationModel {
    /// Builds a model with the preset working radius and a bound `C` taken as
    /// 1.05 times the maximum of `|L|` over the disc.
    pub fn new(law: Law) -> Result<Self> {
        law.validate()?;
        let cumulants = compute_cumulants(&law);
        let mut model = InnovationModel {
            law,
            radius_h: law.default_radius(),
            bound_c: f64::NAN,
            cumulants,
        };
        model.bound_c = model.grid_bound();
        Ok(model)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(Law::Gaussian { sigma })
    }

    pub fn rademacher() -> Self {
        Self::new(Law::Rademacher).expect("rademacher has no parameters")
    }

    pub fn centered_bernoulli(p: f64) -> Result<Self> {
        Self::new(Law::CenteredBernoulli { p })
    }

    pub fn centered_uniform(half_width: f64) -> Result<Self> {
        Self::new(Law::CenteredUniform { half_width })
    }

    pub fn centered_poisson(lambda: f64) -> Result<Self> {
        Self::new(Law::CenteredPoisson { lambda })
    }

    /// Replaces the working radius and recomputes `C` on the new disc.
    ///
    /// The radius is not checked against the law's singularities here;
    /// [`verify_cramer`] reports a disc that encloses one.
    pub fn with_radius(mut self, radius_h: f64) -> Result<Self> {
        if !(radius_h > 0.0 && radius_h.is_finite()) {
            return Err(Error::param("radius_h", format!("must be positive, got {radius_h}")));
        }
        self.radius_h = radius_h;
        self.bound_c = self.grid_bound();
        Ok(self)
    }

    pub fn with_bound(mut self, bound_c: f64) -> Result<Self> {
        if !(bound_c > 0.0) {
            return Err(Error::param("bound_c", format!("must be positive, got {bound_c}")));
        }
        self.bound_c = bound_c;
        Ok(self)
    }

    fn grid_bound(&self) -> f64 {
        BOUND_INFLATION * max_abs_cgf_on_disc(self, CONSTRUCTION_GRID)
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn name(&self) -> &'static str {
        self.law.name()
    }

    pub fn radius_h(&self) -> f64 {
        self.radius_h
    }

    pub fn bound_c(&self) -> f64 {
        self.bound_c
    }

    pub fn variance(&self) -> f64 {
        self.cumulants[1]
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.law, Law::Gaussian { .. })
    }

    /// True when every odd cumulant vanishes.
    pub fn is_symmetric(&self) -> bool {
        match self.law {
            Law::Gaussian { .. } | Law::Rademacher | Law::CenteredUniform { .. } => true,
            Law::CenteredBernoulli { p } => p == 0.5,
            Law::CenteredPoisson { .. } => false,
        }
    }

    pub fn lattice(&self) -> Option<Lattice> {
        match self.law {
            Law::Rademacher => Some(Lattice { span: 2.0, offset: 1.0 }),
            Law::CenteredBernoulli { p } => Some(Lattice { span: 1.0, offset: -p }),
            Law::CenteredPoisson { lambda } => Some(Lattice { span: 1.0, offset: -lambda }),
            _ => None,
        }
    }

    /// Atoms `(value, probability)` of finitely supported laws.
    pub fn finite_support(&self) -> Option<Vec<(f64, f64)>> {
        match self.law {
            Law::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Law::CenteredBernoulli { p } => Some(vec![(-p, 1.0 - p), (1.0 - p, p)]),
            _ => None,
        }
    }

    /// `L(z)` on the real line.
    pub fn cgf(&self, z: f64) -> f64 {
        if z.abs() < TAYLOR_CUTOFF && !self.is_gaussian() {
            return self.cgf_taylor(z);
        }
        match self.law {
            Law::Gaussian { sigma } => 0.5 * sigma * sigma * z * z,
            Law::Rademacher => {
                let a = z.abs();
                if a < 20.0 {
                    let s = (0.5 * z).sinh();
                    (2.0 * s * s).ln_1p()
                } else {
                    a - LN_2 + (-2.0 * a).exp().ln_1p()
                }
            }
            Law::CenteredBernoulli { p } => (p * z.exp_m1()).ln_1p() - p * z,
            Law::CenteredUniform { half_width } => {
                let w = (half_width * z).abs();
                w - LN_2 + (-(-2.0 * w).exp()).ln_1p() - w.ln()
            }
            Law::CenteredPoisson { lambda } => lambda * (z.exp_m1() - z),
        }
    }

    fn cgf_taylor(&self, z: f64) -> f64 {
        let mut term = z;
        let mut sum = 0.0;
        for k in 2..=MAX_CUMULANT_ORDER {
            term *= z / k as f64;
            let c = self.cumulants[k - 1];
            if c != 0.0 {
                sum += c * term;
            }
        }
        sum
    }

    /// `L'(z)`, the mean of the tilted law.
    pub fn cgf_d1(&self, z: f64) -> f64 {
        match self.law {
            Law::Gaussian { sigma } => sigma * sigma * z,
            Law::Rademacher => z.tanh(),
            Law::CenteredBernoulli { p } => {
                let e = z.exp_m1();
                if z < 0.0 || e.is_finite() {
                    p * (1.0 - p) * e / (1.0 + p * e)
                } else {
                    1.0 - p
                }
            }
            Law::CenteredUniform { half_width } => {
                let w = half_width * z;
                half_width * langevin(w)
            }
            Law::CenteredPoisson { lambda } => lambda * z.exp_m1(),
        }
    }

    /// `L''(z)`, the variance of the tilted law.
    pub fn cgf_d2(&self, z: f64) -> f64 {
        match self.law {
            Law::Gaussian { sigma } => sigma * sigma,
            Law::Rademacher => {
                let c = z.cosh();
                1.0 / (c * c)
            }
            Law::CenteredBernoulli { p } => {
                // q e^z p / (q + p e^z)^2 written in terms of e^{-|z|}
                let q = 1.0 - p;
                if z <= 0.0 {
                    let e = z.exp();
                    p * q * e / ((q + p * e) * (q + p * e))
                } else {
                    let e = (-z).exp();
                    p * q * e / ((q * e + p) * (q * e + p))
                }
            }
            Law::CenteredUniform { half_width } => {
                let w = half_width * z;
                half_width * half_width * langevin_d1(w)
            }
            Law::CenteredPoisson { lambda } => lambda * z.exp(),
        }
    }

    /// Moment generating function on the complex plane for laws whose CGF is a
    /// logarithm; `None` when `L` is entire and given in closed form.
    pub fn mgf_complex(&self, z: Complex64) -> Option<Complex64> {
        match self.law {
            Law::Rademacher => Some(z.cosh()),
            Law::CenteredBernoulli { p } => Some((1.0 - p) + p * z.exp()),
            Law::CenteredUniform { half_width } => {
                let w = z * half_width;
                if w.norm() < 1e-8 {
                    Some(Complex64::new(1.0, 0.0) + w * w / 6.0)
                } else {
                    Some(w.sinh() / w)
                }
            }
            Law::Gaussian { .. } | Law::CenteredPoisson { .. } => None,
        }
    }

    /// `L(z)` for complex `z`, using the branch of the logarithm obtained by
    /// continuation along the ray from 0 (so that `L(0) = 0`).
    pub fn cgf_complex(&self, z: Complex64) -> Complex64 {
        match self.law {
            Law::Gaussian { sigma } => 0.5 * sigma * sigma * z * z,
            Law::CenteredPoisson { lambda } => lambda * (z.exp() - 1.0 - z),
            _ => {
                const STEPS: usize = 64;
                let mut phase = 0.0;
                let mut prev = Complex64::new(1.0, 0.0);
                let mut last = prev;
                for s in 1..=STEPS {
                    let w = z * (s as f64 / STEPS as f64);
                    let m = self.mgf_complex(w).expect("log-type law");
                    phase += (m / prev).arg();
                    prev = m;
                    last = m;
                }
                let log_m = Complex64::new(last.norm().ln(), phase);
                match self.law {
                    Law::CenteredBernoulli { p } => log_m - p * z,
                    _ => log_m,
                }
            }
        }
    }

    /// Cumulant `γ_k` (`γ_1 = 0`, `γ_2 = σ²`).
    pub fn cumulant(&self, k: usize) -> Result<f64> {
        if k == 0 || k > MAX_CUMULANT_ORDER {
            return Err(Error::OrderTooLarge {
                order: k,
                max: MAX_CUMULANT_ORDER,
            });
        }
        Ok(self.cumulants[k - 1])
    }

    pub fn cumulant_series(&self, order: usize) -> Result<CumulantSeries> {
        if order < 4 {
            return Err(Error::param("order", "cumulant series needs order >= 4"));
        }
        if order > MAX_CUMULANT_ORDER {
            return Err(Error::OrderTooLarge {
                order,
                max: MAX_CUMULANT_ORDER,
            });
        }
        Ok(CumulantSeries {
            coeffs: self.cumulants[..order].to_vec(),
        })
    }

    /// Raw moment `E ε^m` from the cumulants (complete Bell polynomials).
    pub fn raw_moment(&self, m: usize) -> Result<f64> {
        if m > MAX_MOMENT_ORDER {
            return Err(Error::OrderTooLarge {
                order: m,
                max: MAX_MOMENT_ORDER,
            });
        }
        let mut moments = vec![1.0; m + 1];
        for n in 1..=m {
            moments[n] = (1..=n)
                .map(|k| binomial(n - 1, k - 1) * self.cumulants[k - 1] * moments[n - k])
                .sum();
        }
        Ok(moments[m])
    }

    /// One draw from the base law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw_tilted_unchecked(0.0, rng)
    }

    /// One draw from the conjugate law with density `e^{θy - L(θ)}` relative to
    /// the base law. Requires `|θ| < H`.
    pub fn tilted_draw<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> Result<f64> {
        self.check_tilt(theta)?;
        Ok(self.draw_tilted_unchecked(theta, rng))
    }

    /// Sum of `count` independent draws from the conjugate law with parameter
    /// `θ`. Laws closed under convolution are drawn in one step.
    pub fn tilted_sum_draw<R: Rng + ?Sized>(&self, theta: f64, count: usize, rng: &mut R) -> Result<f64> {
        self.check_tilt(theta)?;
        Ok(self.draw_tilted_sum_unchecked(theta, count, rng))
    }

    fn check_tilt(&self, theta: f64) -> Result<()> {
        if theta.abs() >= self.radius_h || !theta.is_finite() {
            return Err(Error::TiltOutsideRadius {
                theta,
                radius: self.radius_h,
            });
        }
        Ok(())
    }

    pub(crate) fn draw_tilted_unchecked<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        match self.law {
            Law::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let n: f64 = StandardNormal.sample(rng);
                s2 * theta + sigma * n
            }
            Law::Rademacher => {
                let p_up = 0.5 * (1.0 + theta.tanh());
                if rng.gen::<f64>() < p_up {
                    1.0
                } else {
                    -1.0
                }
            }
            Law::CenteredBernoulli { p } => {
                let q = tilted_bernoulli_p(p, theta);
                if rng.gen::<f64>() < q {
                    1.0 - p
                } else {
                    -p
                }
            }
            Law::CenteredUniform { half_width } => {
                uniform_tilted_inverse(half_width, theta, (2.0 * theta * half_width).exp_m1(), rng.gen())
            }
            Law::CenteredPoisson { lambda } => poisson_draw(lambda * theta.exp(), rng) - lambda,
        }
    }

    pub(crate) fn draw_tilted_sum_unchecked<R: Rng + ?Sized>(
        &self,
        theta: f64,
        count: usize,
        rng: &mut R,
    ) -> f64 {
        if count == 0 {
            return 0.0;
        }
        let n = count as f64;
        match self.law {
            Law::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let z: f64 = StandardNormal.sample(rng);
                n * s2 * theta + sigma * n.sqrt() * z
            }
            Law::Rademacher => {
                let p_up = 0.5 * (1.0 + theta.tanh());
                let ups = binomial_draw(count as u64, p_up, rng);
                2.0 * ups - n
            }
            Law::CenteredBernoulli { p } => {
                let q = tilted_bernoulli_p(p, theta);
                binomial_draw(count as u64, q, rng) - n * p
            }
            Law::CenteredUniform { half_width } => {
                let em1 = (2.0 * theta * half_width).exp_m1();
                let mut acc = 0.0;
                for _ in 0..count {
                    acc += uniform_tilted_inverse(half_width, theta, em1, rng.gen());
                }
                acc
            }
            Law::CenteredPoisson { lambda } => poisson_draw(n * lambda * theta.exp(), rng) - n * lambda,
        }
    }
}

fn tilted_bernoulli_p(p: f64, theta: f64) -> f64 {
    let e = theta.exp();
    p * e / (1.0 - p + p * e)
}

/// Inverse CDF of the tilted uniform on `[-h, h]`; `em1 = expm1(2θh)`.
#[inline]
fn uniform_tilted_inverse(h: f64, theta: f64, em1: f64, u: f64) -> f64 {
    if theta.abs() * h < 1e-12 {
        return h * (2.0 * u - 1.0);
    }
    -h + (u * em1).ln_1p() / theta
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < 12.0 {
        // sequential inversion
        let mut k = 0.0;
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u: f64 = rng.gen();
        while u > cdf && p > 0.0 {
            k += 1.0;
            p *= mean / k;
            cdf += p;
        }
        return k;
    }
    Poisson::new(mean).expect("positive mean").sample(rng)
}

fn binomial_draw<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return n as f64;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng) as f64
}

/// `coth w - 1/w`.
fn langevin(w: f64) -> f64 {
    if w.abs() < TAYLOR_CUTOFF {
        // Σ_{k≥1} 2^{2k} B_{2k} w^{2k-1} / (2k)!
        let mut sum = 0.0;
        for k in 1..BERNOULLI_EVEN.len() {
            let n = 2 * k;
            sum += 2f64.powi(n as i32) * BERNOULLI_EVEN[k] * w.powi(n as i32 - 1) / factorial(n);
        }
        sum
    } else {
        1.0 / w.tanh() - 1.0 / w
    }
}

/// `d/dw (coth w - 1/w) = 1/w² - 1/sinh² w`.
fn langevin_d1(w: f64) -> f64 {
    if w.abs() < TAYLOR_CUTOFF {
        let mut sum = 0.0;
        for k in 1..BERNOULLI_EVEN.len() {
            let n = 2 * k;
            sum += 2f64.powi(n as i32) * BERNOULLI_EVEN[k] * (n - 1) as f64 * w.powi(n as i32 - 2)
                / factorial(n);
        }
        sum
    } else {
        let s = w.sinh();
        1.0 / (w * w) - 1.0 / (s * s)
    }
}

fn compute_cumulants(law: &Law) -> Vec<f64> {
    let mut out = vec![0.0; MAX_CUMULANT_ORDER];
    match *law {
        Law::Gaussian { sigma } => out[1] = sigma * sigma,
        Law::CenteredPoisson { lambda } => {
            for c in out.iter_mut().skip(1) {
                *c = lambda;
            }
        }
        Law::Rademacher => {
            for k in 1..BERNOULLI_EVEN.len() {
                let n = 2 * k;
                if n > MAX_CUMULANT_ORDER {
                    break;
                }
                let p2 = 2f64.powi(n as i32);
                out[n - 1] = p2 * (p2 - 1.0) * BERNOULLI_EVEN[k] / n as f64;
            }
        }
        Law::CenteredUniform { half_width } => {
            for k in 1..BERNOULLI_EVEN.len() {
                let n = 2 * k;
                if n > MAX_CUMULANT_ORDER {
                    break;
                }
                out[n - 1] = 2f64.powi(n as i32) * BERNOULLI_EVEN[k] * half_width.powi(n as i32) / n as f64;
            }
        }
        Law::CenteredBernoulli { p } => {
            out = bernoulli_cumulants_cauchy(p);
        }
    }
    out
}

/// Cumulants of the centered Bernoulli law from the Cauchy integral of `L`
/// over a circle inside its disc of analyticity (trapezoid rule, which is
/// spectrally accurate for periodic analytic integrands).
fn bernoulli_cumulants_cauchy(p: f64) -> Vec<f64> {
    const NODES: usize = 1024;
    let law = Law::CenteredBernoulli { p };
    let rho = 0.85 * law.true_radius();
    let mut values = Vec::with_capacity(NODES);
    // continuation of log(1 - p + p e^z) around the circle, starting on the
    // positive real axis where the principal branch is correct
    let start = Complex64::new(rho, 0.0);
    let m0 = (1.0 - p) + p * start.exp();
    let mut phase = m0.arg();
    let mut prev = m0;
    for j in 0..NODES {
        let ang = 2.0 * PI * j as f64 / NODES as f64;
        let z = Complex64::from_polar(rho, ang);
        let m = (1.0 - p) + p * z.exp();
        if j > 0 {
            phase += (m / prev).arg();
        }
        prev = m;
        values.push(Complex64::new(m.norm().ln(), phase) - p * z);
    }
    let mut out = vec![0.0; MAX_CUMULANT_ORDER];
    for k in 2..=MAX_CUMULANT_ORDER {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, v) in values.iter().enumerate() {
            let ang = -2.0 * PI * (k * j % NODES) as f64 / NODES as f64;
            acc += v * Complex64::from_polar(1.0, ang);
        }
        let coeff = acc.re / NODES as f64 / rho.powi(k as i32);
        out[k - 1] = coeff * factorial(k);
    }
    out[0] = 0.0;
    out
}

/// Maximum of `|L(z)|` on a polar grid of the disc `|z| ≤ (1 - margin) H`,
/// tracking the logarithm's branch continuously along each ray.
fn max_abs_cgf_on_disc(model: &InnovationModel, grid_size: usize) -> f64 {
    let r_max = (1.0 - CRAMER_MARGIN) * model.radius_h;
    let mut max_abs: f64 = 0.0;
    for a in 0..grid_size {
        let dir = Complex64::from_polar(1.0, 2.0 * PI * a as f64 / grid_size as f64);
        let mut phase = 0.0;
        let mut prev = Complex64::new(1.0, 0.0);
        for r in 1..=grid_size {
            let z = dir * (r_max * r as f64 / grid_size as f64);
            let value = match model.mgf_complex(z) {
                Some(m) => {
                    phase += (m / prev).arg();
                    prev = m;
                    let log_m = Complex64::new(m.norm().ln(), phase);
                    match model.law {
                        Law::CenteredBernoulli { p } => log_m - p * z,
                        _ => log_m,
                    }
                }
                None => model.cgf_complex(z),
            };
            let abs = value.norm();
            if !abs.is_finite() {
                return f64::INFINITY;
            }
            max_abs = max_abs.max(abs);
        }
    }
    max_abs
}

/// Winding number of the moment generating function around 0 along the circle
/// of radius `r`, i.e. the number of its zeros inside.
fn mgf_zeros_inside(model: &InnovationModel, r: f64, samples: usize) -> i64 {
    let start = Complex64::new(r, 0.0);
    let Some(m0) = model.mgf_complex(start) else {
        return 0;
    };
    let mut prev = m0;
    let mut total = 0.0;
    for j in 1..=samples {
        let z = Complex64::from_polar(r, 2.0 * PI * j as f64 / samples as f64);
        let m = model.mgf_complex(z).expect("log-type law");
        total += (m / prev).arg();
        prev = m;
    }
    (total / (2.0 * PI)).round() as i64
}

/// Checks the Cramér condition `|L(z)| ≤ C` on `|z| < H` by evaluating `|L|` on
/// a `grid_size × grid_size` polar grid and counting enclosed zeros of the
/// moment generating function.
pub fn verify_cramer(model: &InnovationModel, grid_size: usize) -> Result<CramerReport> {
    if grid_size < 64 {
        return Err(Error::param("grid_size", format!("must be at least 64, got {grid_size}")));
    }
    let max_abs_l = max_abs_cgf_on_disc(model, grid_size);
    let zeros_inside = mgf_zeros_inside(model, (1.0 - CRAMER_MARGIN) * model.radius_h, 16 * grid_size);
    let ok = max_abs_l.is_finite() && zeros_inside == 0 && max_abs_l <= model.bound_c;
    Ok(CramerReport {
        max_abs_l,
        bound_c: model.bound_c,
        radius_h: model.radius_h,
        zeros_inside,
        ok,
    })
}

/// Checks the sufficient moment condition `|E ε^m| ≤ (m!/2) σ² H^{2-m}` for
/// `2 ≤ m ≤ max_order`.
pub fn verify_moment_condition(model: &InnovationModel, max_order: usize) -> Result<bool> {
    if max_order < 2 {
        return Err(Error::param("max_order", format!("must be at least 2, got {max_order}")));
    }
    let s2 = model.variance();
    let h = model.radius_h;
    for m in 2..=max_order {
        let moment = model.raw_moment(m)?;
        let bound = 0.5 * factorial(m) * s2 * h.powi(2 - m as i32);
        if moment.abs() > bound * (1.0 + 1e-12) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Free-function form of [`InnovationModel::tilted_draw`].
pub fn tilted_draw<R: Rng + ?Sized>(model: &InnovationModel, theta: f64, rng: &mut R) -> Result<f64> {
    model.tilted_draw(theta, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn builtins() -> Vec<InnovationModel> {
        vec![
            InnovationModel::gaussian(1.0).unwrap(),
            InnovationModel::gaussian(0.7).unwrap(),
            InnovationModel::rademacher(),
            InnovationModel::centered_bernoulli(0.3).unwrap(),
            InnovationModel::centered_uniform(1.0).unwrap(),
            InnovationModel::centered_uniform(2.5).unwrap(),
            InnovationModel::centered_poisson(1.0).unwrap(),
            InnovationModel::centered_poisson(3.0).unwrap(),
        ]
    }

    /// Taylor coefficients of `L` at 0 from its Cauchy integral, evaluated with
    /// the complex CGF (independent of the closed-form cumulant tables).
    fn taylor_oracle(model: &InnovationModel, k: usize) -> f64 {
        let nodes = 256;
        let rho = 0.5 * model.radius_h().min(1.0);
        let mut acc = 0.0;
        for j in 0..nodes {
            let ang = 2.0 * PI * j as f64 / nodes as f64;
            let z = Complex64::from_polar(rho, ang);
            let v = model.cgf_complex(z);
            acc += (v * Complex64::from_polar(1.0, -(k as f64) * ang)).re;
        }
        acc / nodes as f64 / rho.powi(k as i32) * factorial(k)
    }

    #[test]
    fn make_builtin_rejects_bad_input() {
        let mut p = BTreeMap::new();
        assert!(matches!(make_builtin("cauchy", &p), Err(Error::UnknownLaw(_))));
        p.insert("sigma".to_string(), -1.0);
        assert!(make_builtin("gaussian", &p).is_err());
        p.clear();
        p.insert("p".to_string(), 1.0);
        assert!(make_builtin("centered_bernoulli", &p).is_err());
        p.clear();
        p.insert("lambda".to_string(), 0.0);
        assert!(make_builtin("centered_poisson", &p).is_err());
        p.clear();
        p.insert("half_width".to_string(), -2.0);
        assert!(make_builtin("centered_uniform", &p).is_err());
        p.clear();
        p.insert("lambda".to_string(), 1.0);
        assert!(make_builtin("gaussian", &p).is_err());
    }

    #[test]
    fn gaussian_cgf_is_quadratic() {
        let m = InnovationModel::gaussian(1.0).unwrap();
        assert!((m.cgf(0.8) - 0.32).abs() < 1e-16);
        assert_eq!(m.cumulant(2).unwrap(), 1.0);
        for k in 3..=MAX_CUMULANT_ORDER {
            assert_eq!(m.cumulant(k).unwrap(), 0.0);
        }
    }

    #[test]
    fn poisson_cumulants_all_equal_lambda() {
        let m = InnovationModel::centered_poisson(1.0).unwrap();
        assert!((m.cgf(0.7) - (0.7f64.exp() - 1.0 - 0.7)).abs() < 1e-15);
        for k in 2..=MAX_CUMULANT_ORDER {
            assert_eq!(m.cumulant(k).unwrap(), 1.0);
        }
        assert_eq!(m.cumulant(1).unwrap(), 0.0);
    }

    #[test]
    fn rademacher_and_uniform_cumulants_match_taylor_oracle() {
        let r = InnovationModel::rademacher();
        assert_eq!(r.cumulant(2).unwrap(), 1.0);
        assert_eq!(r.cumulant(3).unwrap(), 0.0);
        assert!((r.cumulant(4).unwrap() + 2.0).abs() < 1e-15);
        let u = InnovationModel::centered_uniform(1.0).unwrap();
        assert!((u.cumulant(2).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert!((u.cumulant(4).unwrap() + 2.0 / 15.0).abs() < 1e-16);
        for m in builtins() {
            for k in 2..=8 {
                let oracle = taylor_oracle(&m, k);
                let got = m.cumulant(k).unwrap();
                assert!(
                    (oracle - got).abs() < 1e-9 * (1.0 + got.abs()),
                    "{} k={k}: {got} vs {oracle}",
                    m.name()
                );
            }
        }
    }

    #[test]
    fn rademacher_taylor_oracle_values() {
        let r = InnovationModel::rademacher();
        assert!((taylor_oracle(&r, 2) - 1.0).abs() < 1e-12);
        assert!(taylor_oracle(&r, 3).abs() < 1e-12);
        assert!((taylor_oracle(&r, 4) + 2.0).abs() < 1e-10);
        let u = InnovationModel::centered_uniform(1.0).unwrap();
        assert!((taylor_oracle(&u, 4) + 2.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn cauchy_bound_on_cumulants() {
        for m in builtins() {
            for k in 2..=8 {
                let g = m.cumulant(k).unwrap().abs();
                let bound = factorial(k) * m.bound_c() / m.radius_h().powi(k as i32);
                assert!(g <= bound, "{} k={k}: {g} > {bound}", m.name());
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for m in builtins() {
            let h = m.radius_h();
            for i in 0..32 {
                let z = -0.5 * h + h * (i as f64 + 0.5) / 32.0;
                let step = 1e-4 * h;
                let d1 = (m.cgf(z + step) - m.cgf(z - step)) / (2.0 * step);
                let d2 = (m.cgf_d1(z + step) - m.cgf_d1(z - step)) / (2.0 * step);
                let e1 = m.cgf_d1(z);
                let e2 = m.cgf_d2(z);
                assert!(
                    (d1 - e1).abs() <= 1e-6 * e1.abs().max(1e-3 * m.variance()),
                    "{} d1 at {z}: {d1} vs {e1}",
                    m.name()
                );
                assert!((d2 - e2).abs() <= 1e-6 * e2.abs(), "{} d2 at {z}: {d2} vs {e2}", m.name());
            }
        }
    }

    #[test]
    fn cgf_is_continuous_across_taylor_cutoff() {
        for m in builtins() {
            for z in [TAYLOR_CUTOFF * (1.0 - 1e-12), -TAYLOR_CUTOFF * (1.0 - 1e-12)] {
                let inside = m.cgf(z);
                let outside = m.cgf(z * (1.0 + 2e-12));
                assert!((inside - outside).abs() <= 1e-11 * inside.abs(), "{}", m.name());
            }
        }
    }

    #[test]
    fn real_and_complex_cgf_agree() {
        for m in builtins() {
            for z in [-0.9, -0.3, 0.05, 0.4, 0.9] {
                let z = z * m.radius_h();
                let c = m.cgf_complex(Complex64::new(z, 0.0));
                assert!((c.re - m.cgf(z)).abs() < 1e-12 * (1.0 + c.re.abs()), "{}", m.name());
                assert!(c.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strict_convexity_on_working_interval() {
        for m in builtins() {
            let h = m.radius_h();
            for i in 0..100 {
                let z = -h + 2.0 * h * (i as f64 + 0.5) / 100.0;
                assert!(m.cgf_d2(z) > 0.0);
            }
            assert_eq!(m.cgf(0.0), 0.0);
            assert_eq!(m.cgf_d1(0.0), 0.0);
            assert!((m.cgf_d2(0.0) - m.variance()).abs() < 1e-14);
        }
    }

    #[test]
    fn verify_cramer_gaussian_unit_disc() {
        let m = InnovationModel::gaussian(1.0)
            .unwrap()
            .with_radius(1.0)
            .unwrap()
            .with_bound(0.5)
            .unwrap();
        let rep = verify_cramer(&m, 64).unwrap();
        assert!(rep.ok);
        assert!(rep.max_abs_l <= 0.5 && rep.max_abs_l > 0.49);
    }

    #[test]
    fn verify_cramer_rademacher() {
        let m = InnovationModel::rademacher().with_bound(1.0).unwrap();
        let rep = verify_cramer(&m, 256).unwrap();
        assert!(rep.ok, "{rep:?}");
        // cosh vanishes at ±iπ/2 inside |z| < 2
        let wide = InnovationModel::rademacher().with_radius(2.0).unwrap();
        let rep = verify_cramer(&wide, 128).unwrap();
        assert!(!rep.ok);
        assert_eq!(rep.zeros_inside, 2);
        let wide_c1 = wide.with_bound(1.0).unwrap();
        assert!(!verify_cramer(&wide_c1, 64).unwrap().ok);
    }

    #[test]
    fn verify_cramer_rejects_small_grid() {
        assert!(verify_cramer(&InnovationModel::rademacher(), 32).is_err());
    }

    #[test]
    fn builtin_presets_satisfy_cramer() {
        for m in builtins() {
            let rep = verify_cramer(&m, 96).unwrap();
            assert!(rep.ok, "{}: {rep:?}", m.name());
        }
    }

    #[test]
    fn moment_condition_examples() {
        let g = InnovationModel::gaussian(1.0).unwrap().with_radius(0.5).unwrap();
        assert!(verify_moment_condition(&g, 8).unwrap());
        let u = InnovationModel::centered_uniform(1.0).unwrap().with_radius(1.0).unwrap();
        assert!(verify_moment_condition(&u, 6).unwrap());
        assert!(verify_moment_condition(&u, 1).is_err());
        assert!(verify_moment_condition(&g, 13).is_err());
    }

    #[test]
    fn moment_condition_on_presets() {
        for m in builtins() {
            let holds = verify_moment_condition(&m, 12).unwrap();
            if matches!(m.law(), Law::CenteredPoisson { .. }) {
                // E ε^4 = λ + 3λ² exceeds 12·λ/H² at H = 2: the sufficient
                // condition fails although the Cramér condition holds
                assert!(!holds);
            } else {
                assert!(holds, "{}", m.name());
            }
        }
        let p = InnovationModel::centered_poisson(1.0).unwrap().with_radius(1.0).unwrap();
        assert!(verify_moment_condition(&p, 12).unwrap());
    }

    #[test]
    fn raw_moments_match_closed_forms() {
        let g = InnovationModel::gaussian(1.0).unwrap();
        let dfact = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0, 0.0, 945.0, 0.0, 10395.0];
        for m in 0..=12 {
            assert!((g.raw_moment(m).unwrap() - dfact[m]).abs() < 1e-9 * dfact[m].max(1.0));
        }
        let u = InnovationModel::centered_uniform(1.0).unwrap();
        for m in (2..=12).step_by(2) {
            assert!((u.raw_moment(m).unwrap() - 1.0 / (m as f64 + 1.0)).abs() < 1e-12);
        }
        let b = InnovationModel::centered_bernoulli(0.3).unwrap();
        for m in 2..=12 {
            let exact = 0.7 * (-0.3f64).powi(m as i32) + 0.3 * 0.7f64.powi(m as i32);
            assert!((b.raw_moment(m).unwrap() - exact).abs() < 1e-12, "m={m}");
        }
        let p = InnovationModel::centered_poisson(1.0).unwrap();
        assert!((p.raw_moment(4).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn tilted_draw_requires_radius() {
        let m = InnovationModel::rademacher();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(m.tilted_draw(1.0, &mut rng).is_err());
        assert!(m.tilted_draw(0.99, &mut rng).is_ok());
    }

    #[test]
    fn rademacher_zero_tilt_is_fair() {
        let m = InnovationModel::rademacher();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let ups = (0..n).filter(|_| m.tilted_draw(0.0, &mut rng).unwrap() > 0.0).count();
        let frac = ups as f64 / n as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn poisson_tilted_mean_example() {
        let m = InnovationModel::centered_poisson(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let mean = (0..n).map(|_| m.tilted_draw(0.5, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let target = 0.5f64.exp() - 1.0;
        assert!((target - 0.648_721_270_700_128_2).abs() < 1e-15);
        let se = (m.cgf_d2(0.5) / n as f64).sqrt();
        assert!((mean - target).abs() < 4.0 * se);
    }

    #[test]
    fn tilted_moments_match_cgf_derivatives() {
        let n = 1_000_000usize;
        for (idx, m) in builtins().into_iter().enumerate() {
            let h = m.radius_h();
            for (jdx, theta) in [0.25 * h, -0.25 * h, 0.45 * h, -0.45 * h].into_iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + 10 * idx as u64 + jdx as u64);
                let mut s = 0.0;
                let mut s2 = 0.0;
                for _ in 0..n {
                    let y = m.tilted_draw(theta, &mut rng).unwrap();
                    s += y;
                    s2 += y * y;
                }
                let mean = s / n as f64;
                let var = s2 / n as f64 - mean * mean;
                let target_mean = m.cgf_d1(theta);
                let target_var = m.cgf_d2(theta);
                let se = (target_var / n as f64).sqrt();
                assert!(
                    (mean - target_mean).abs() < 4.0 * se,
                    "{} θ={theta}: mean {mean} vs {target_mean}",
                    m.name()
                );
                assert!(
                    (var - target_var).abs() < 0.05 * target_var,
                    "{} θ={theta}: var {var} vs {target_var}",
                    m.name()
                );
            }
        }
    }

    #[test]
    fn tilted_sum_matches_per_site_moments() {
        let count = 37;
        for (idx, m) in builtins().into_iter().enumerate() {
            let theta = 0.3 * m.radius_h();
            let mut rng = ChaCha8Rng::seed_from_u64(77 + idx as u64);
            let reps = 100_000;
            let mut s = 0.0;
            for _ in 0..reps {
                s += m.tilted_sum_draw(theta, count, &mut rng).unwrap();
            }
            let mean = s / reps as f64;
            let target = count as f64 * m.cgf_d1(theta);
            let se = (count as f64 * m.cgf_d2(theta) / reps as f64).sqrt();
            assert!((mean - target).abs() < 4.0 * se, "{}", m.name());
        }
    }
}
