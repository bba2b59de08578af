//! Fixed-design kernel regression with linear random-field errors.
//!
//! With `Y_j = g(z_{n,j}) + X_j` on `j ∈ Γ_n = [−n, n]^d`, the noise part of
//! the estimator `g_n(z) = Σ_j w_{n,j}(z) Y_j` is a weighted sum of
//! innovations `S_n(z) = Σ_j b_{n,j}(z) ε_j` with `b_{n,j}(z) = Σ_i w_{n,i}(z) a_{i−j}`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cgf::InnovationModel;
use crate::error::{Error, Result};
use crate::field::{CoefficientField, PartialSumModel};
use crate::numeric::CompensatedSum;
use crate::tilt::{tail_lower, tail_upper, TailEstimate, TiltOptions, Variant};

/// `B_n(z) H_n²` below this value is flagged as too small for the
/// moderate-deviation regime.
pub const LOW_VARIANCE_THRESHOLD: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `Π_k (3/4)(1 − u_k²)_+`.
    Epanechnikov,
    /// `Π_k φ(u_k)`.
    Gaussian,
}

impl Kernel {
    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Kernel::Epanechnikov => u.iter().map(|v| (0.75 * (1.0 - v * v)).max(0.0)).product(),
            Kernel::Gaussian => u.iter().map(|v| crate::tilt::normal::pdf(*v)).product(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Gaussian => "gaussian",
        }
    }
}

/// Design points, kernel, bandwidth and error model.
#[derive(Debug, Clone)]
pub struct RegressionDesign {
    field: CoefficientField,
    innovation: InnovationModel,
    window: usize,
    kernel: Kernel,
    bandwidth: f64,
    design_dim: usize,
    points: Vec<(Vec<i64>, Vec<f64>)>,
}

fn window_sites(dim: usize, n: usize) -> Vec<Vec<i64>> {
    let side = 2 * n + 1;
    (0..side.pow(dim as u32))
        .map(|flat| {
            let mut site = vec![0i64; dim];
            let mut rem = flat;
            for axis in (0..dim).rev() {
                site[axis] = (rem % side) as i64 - n as i64;
                rem /= side;
            }
            site
        })
        .collect()
}

impl RegressionDesign {
    /// Regular design `z_{n,j} = (j + n)/(2n + 1)` coordinatewise, so the
    /// design dimension equals the lattice dimension.
    pub fn new(
        field: CoefficientField,
        innovation: InnovationModel,
        n: usize,
        kernel: Kernel,
        bandwidth: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "window half-width must be at least 1"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::param("bandwidth", format!("must be positive, got {bandwidth}")));
        }
        let denom = (2 * n + 1) as f64;
        let points = window_sites(field.dim(), n)
            .into_iter()
            .map(|j| {
                let z = j.iter().map(|&c| (c + n as i64) as f64 / denom).collect();
                (j, z)
            })
            .collect();
        Ok(RegressionDesign {
            design_dim: field.dim(),
            field,
            innovation,
            window: n,
            kernel,
            bandwidth,
            points,
        })
    }

    /// Replaces the design points. Every site of `Γ_n` must receive exactly
    /// one point in `[0, 1]^m`.
    pub fn with_points(mut self, points: BTreeMap<Vec<i64>, Vec<f64>>) -> Result<Self> {
        let sites = window_sites(self.field.dim(), self.window);
        if points.len() != sites.len() || sites.iter().any(|j| !points.contains_key(j)) {
            return Err(Error::param("design_points", "must assign one point to every site of the window"));
        }
        let m = points.values().next().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::param("design_points", "points must have positive dimension"));
        }
        for z in points.values() {
            if z.len() != m || z.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::param("design_points", format!("{z:?} is not a point of [0,1]^{m}")));
            }
        }
        self.design_dim = m;
        self.points = points.into_iter().collect();
        Ok(self)
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn innovation(&self) -> &InnovationModel {
        &self.innovation
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn design_dim(&self) -> usize {
        self.design_dim
    }

    pub fn points(&self) -> &[(Vec<i64>, Vec<f64>)] {
        &self.points
    }

    /// `w_{n,j}(z) = K((z − z_{n,j})/h) / Σ_i K((z − z_{n,i})/h)` for every
    /// site, in lexicographic site order.
    pub fn weights_at(&self, z: &[f64]) -> Result<Vec<(Vec<i64>, f64)>> {
        if z.len() != self.design_dim {
            return Err(Error::param("z", format!("expected {} coordinates, got {}", self.design_dim, z.len())));
        }
        let mut u = vec![0.0; self.design_dim];
        let raw: Vec<f64> = self
            .points
            .iter()
            .map(|(_, p)| {
                for k in 0..u.len() {
                    u[k] = (z[k] - p[k]) / self.bandwidth;
                }
                self.kernel.eval(&u)
            })
            .collect();
        let total: f64 = raw.iter().copied().collect::<CompensatedSum>().value();
        if !(total > 0.0) {
            return Err(Error::Degenerate(format!("kernel vanishes at every design point for z = {z:?}")));
        }
        Ok(self
            .points
            .iter()
            .zip(raw)
            .map(|((j, _), k)| (j.clone(), k / total))
            .collect())
    }

    /// `S_n(z)` as a weighted innovation sum with `b_{n,j}(z) = Σ_i w_{n,i}(z) a_{i−j}`.
    pub fn effective_model(&self, z: &[f64]) -> Result<PartialSumModel> {
        let w = self.weights_at(z)?;
        let coeffs = self.field.nonzero_coefficients(self.field.support_radius(self.window));
        let mut b: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (i, wi) in w.iter().filter(|(_, wi)| *wi != 0.0) {
            for (k, a) in &coeffs {
                let j: Vec<i64> = i.iter().zip(k).map(|(x, y)| x - y).collect();
                *b.entry(j).or_insert(0.0) += wi * a;
            }
        }
        let sites: Vec<(Vec<i64>, f64)> = b.into_iter().filter(|(_, v)| *v != 0.0).collect();
        PartialSumModel::from_sites(self.innovation.clone(), self.field.dim(), &sites, self.window)
    }
}

/// Tail estimates for `S_n(z) = g_n(z) − E g_n(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionTail {
    pub b_n: f64,
    pub m_n: f64,
    pub h_n: f64,
    /// `P(S_n(z) > x √B_n(z))`.
    pub upper: TailEstimate,
    /// `P(S_n(z) < −x √B_n(z))`.
    pub lower: TailEstimate,
    /// `P(|S_n(z)| > x √B_n(z))` as the sum of the two tails.
    pub two_sided: f64,
    /// Set when `B_n(z) H_n² < 25`.
    pub low_variance: bool,
}

pub fn regression_tail(design: &RegressionDesign, z: &[f64], x: f64, opts: &TiltOptions) -> Result<RegressionTail> {
    let model = design.effective_model(z)?;
    let upper = tail_upper(&model, x, Variant::TheoremForm, opts)?;
    let lower = tail_lower(&model, x, Variant::TheoremForm, opts)?;
    Ok(RegressionTail {
        b_n: model.b_n(),
        m_n: model.m_n(),
        h_n: model.h_n(),
        upper,
        lower,
        two_sided: upper.value + lower.value,
        low_variance: model.b_n() * model.h_n() * model.h_n() < LOW_VARIANCE_THRESHOLD,
    })
}

/// Regression functions available to the simulation mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionFunction {
    /// `amplitude · sin(2π z_1)`.
    Sinusoid { amplitude: f64 },
}

impl RegressionFunction {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            RegressionFunction::Sinusoid { amplitude } => amplitude * (2.0 * std::f64::consts::PI * z[0]).sin(),
        }
    }
}

/// One simulated evaluation of the estimator, split into bias and noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPoint {
    pub z: Vec<f64>,
    pub g: f64,
    /// `E g_n(z) = Σ_j w_{n,j}(z) g(z_{n,j})`.
    pub mean: f64,
    /// `g_n(z)` from the simulated responses.
    pub estimate: f64,
    /// `S_n(z) = g_n(z) − E g_n(z)`.
    pub noise: f64,
    pub sd: f64,
}

/// Simulates one response field `Y_j = g(z_{n,j}) + X_j` and evaluates the
/// estimator at each query point.
pub fn simulate(
    design: &RegressionDesign,
    g: RegressionFunction,
    queries: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<SimulatedPoint>> {
    let field = design.field();
    let d = field.dim();
    let n = design.window() as i64;
    let m = field.support_radius(design.window());
    let coeffs = field.nonzero_coefficients(m);
    // innovations on [−n−m, n+m]^d, enough to form every X_j with j ∈ Γ_n
    let reach = n + m as i64;
    let side = (2 * reach + 1) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps: Vec<f64> = (0..side.pow(d as u32))
        .map(|_| design.innovation().sample(&mut rng))
        .collect();
    let index = |site: &[i64]| site.iter().fold(0usize, |acc, &c| acc * side + (c + reach) as usize);
    let mut response = BTreeMap::new();
    for (j, p) in design.points() {
        let mut x = CompensatedSum::new();
        for (k, a) in &coeffs {
            let s: Vec<i64> = j.iter().zip(k).map(|(u, v)| u - v).collect();
            x.add(a * eps[index(&s)]);
        }
        response.insert(j.clone(), (g.eval(p), x.value()));
    }
    queries
        .iter()
        .map(|z| {
            let w = design.weights_at(z)?;
            let mut mean = CompensatedSum::new();
            let mut noise = CompensatedSum::new();
            for (j, wj) in &w {
                let (gj, xj) = response[j];
                mean.add(wj * gj);
                noise.add(wj * xj);
            }
            let sd = design.effective_model(z)?.b_n().sqrt();
            Ok(SimulatedPoint {
                z: z.clone(),
                g: g.eval(z),
                mean: mean.value(),
                estimate: mean.value() + noise.value(),
                noise: noise.value(),
                sd,
            })
        })
        .collect()
}
