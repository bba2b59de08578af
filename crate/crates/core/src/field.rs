//! Coefficient fields `a_i` on ℤ^d and the window weights
//! `b_{nj} = Σ_{i∈Γ_n} a_{i−j}` of the partial sum over `Γ_n = [−n, n]^d`.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;

use libm::tgamma as gamma;

use crate::cgf::{InnovationModel, MAX_CUMULANT_ORDER};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, dirichlet_beta, ols_slope, riemann_zeta};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 3;
/// Relative `ℓ²` mass a certified cutoff may discard.
pub const TAIL_TOLERANCE: f64 = 1e-10;
/// Dense problems at most this large are summed directly, term by term.
const DIRECT_LIMIT: usize = 1 << 20;

/// How far out the coefficients are kept (`a_i = 0` for `|i|_∞ > m_max`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    /// Family default: the smallest radius with a certified `ℓ²` tail below
    /// [`TAIL_TOLERANCE`] where one exists, otherwise a window multiple.
    Auto,
    Fixed(usize),
    /// `m_max = ⌈c·n⌉` for window `n`.
    WindowMultiple(f64),
}

/// Slowly varying factor `l(r)` of a long-memory field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlowlyVarying {
    Constant,
    /// `l(r) = ln(1 + r)`.
    Log1p,
}

/// Angular factor `b(u)` on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angular {
    Constant(f64),
    /// `b(u) = u_1`.
    FirstCosine,
}

/// Choice of `a_0` for a long-memory field, where the power law is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Origin {
    /// Continuum-matched when available, 1 otherwise.
    Auto,
    Value(f64),
    /// `a_0 = −c·Σ'_{i∈ℤ^d}|i|^{−α}` (the analytically continued lattice sum),
    /// so that the lattice sum of `a` tracks the continuum integral. Needs
    /// `l` and `b` constant and `d ≤ 2`.
    ContinuumMatched,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Explicit(BTreeMap<Vec<i64>, f64>),
    Iid,
    /// `a_i = ρ^{|i|_1}`.
    Geometric { rho: f64 },
    LongMemory {
        alpha: f64,
        profile: SlowlyVarying,
        angular: Angular,
        a0: f64,
    },
    /// Causal FARIMA(p, β, q) coefficients on ℤ (d = 1).
    Farima {
        beta: f64,
        phi: Vec<f64>,
        theta: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    dim: usize,
    family: Family,
    cutoff: Cutoff,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::param("d", format!("must be 1, 2 or 3, got {dim}")));
    }
    Ok(())
}

impl CoefficientField {
    fn build(dim: usize, family: Family, cutoff: Cutoff) -> Result<Self> {
        check_dim(dim)?;
        if let Cutoff::WindowMultiple(c) = cutoff {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::param("cutoff", format!("window multiple must be positive, got {c}")));
            }
        }
        let field = CoefficientField { dim, family, cutoff };
        field.check_nondegenerate()?;
        Ok(field)
    }

    /// `a_i` given on a finite set of lattice points.
    pub fn explicit(dim: usize, coeffs: BTreeMap<Vec<i64>, f64>) -> Result<Self> {
        check_dim(dim)?;
        for (i, v) in &coeffs {
            if i.len() != dim {
                return Err(Error::param("coefficients", format!("index {i:?} is not {dim}-dimensional")));
            }
            if !v.is_finite() {
                return Err(Error::param("coefficients", format!("a_{i:?} = {v} is not finite")));
            }
        }
        Self::build(dim, Family::Explicit(coeffs), Cutoff::Auto)
    }

    /// `a_0 = 1`, all other coefficients 0.
    pub fn iid(dim: usize) -> Result<Self> {
        Self::build(dim, Family::Iid, Cutoff::Auto)
    }

    pub fn geometric(dim: usize, rho: f64, cutoff: Cutoff) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::param("rho", format!("must lie in (0, 1), got {rho}")));
        }
        Self::build(dim, Family::Geometric { rho }, cutoff)
    }

    /// `a_i = l(|i|) b(i/|i|) |i|^{−α}` with Euclidean `|i|`.
    pub fn long_memory(
        dim: usize,
        alpha: f64,
        profile: SlowlyVarying,
        angular: Angular,
        origin: Origin,
        cutoff: Cutoff,
    ) -> Result<Self> {
        check_dim(dim)?;
        let d = dim as f64;
        if !(alpha > d / 2.0 && alpha < d) {
            return Err(Error::param(
                "alpha",
                format!("must lie in (d/2, d) = ({}, {}) for d = {dim}, got {alpha}", d / 2.0, d),
            ));
        }
        let matched = match (profile, angular) {
            (SlowlyVarying::Constant, Angular::Constant(c)) if dim <= 2 => Some(-c * lattice_zeta(dim, alpha)),
            _ => None,
        };
        let a0 = match origin {
            Origin::Value(v) => v,
            Origin::Auto => matched.unwrap_or(1.0),
            Origin::ContinuumMatched => matched.ok_or_else(|| {
                Error::Unsupported("continuum-matched a_0 needs constant l and b and d <= 2".into())
            })?,
        };
        Self::build(
            dim,
            Family::LongMemory {
                alpha,
                profile,
                angular,
                a0,
            },
            cutoff,
        )
    }

    /// FARIMA(p, β, q) on ℤ with `φ(B)(1−B)^β X = θ(B)ε`,
    /// `φ(z) = 1 − Σ φ_l z^l`, `θ(z) = 1 + Σ θ_l z^l`.
    pub fn farima(beta: f64, phi: Vec<f64>, theta: Vec<f64>, cutoff: Cutoff) -> Result<Self> {
        check_farima(beta, &phi)?;
        Self::build(1, Family::Farima { beta, phi, theta }, cutoff)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Explicit(_) => "explicit",
            Family::Iid => "iid",
            Family::Geometric { .. } => "geometric",
            Family::LongMemory { .. } => "long_memory",
            Family::Farima { .. } => "farima",
        }
    }

    pub fn is_long_memory(&self) -> bool {
        match self.family {
            Family::LongMemory { .. } => true,
            Family::Farima { beta, .. } => beta > 0.0,
            _ => false,
        }
    }

    /// `m_max` for window `n`.
    pub fn support_radius(&self, n: usize) -> usize {
        match self.cutoff {
            Cutoff::Fixed(m) => m,
            Cutoff::WindowMultiple(c) => (c * n.max(1) as f64).ceil() as usize,
            Cutoff::Auto => match &self.family {
                Family::Explicit(map) => map
                    .keys()
                    .map(|i| i.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0))
                    .max()
                    .unwrap_or(0),
                Family::Iid => 0,
                Family::Geometric { rho } => geometric_certified_radius(self.dim, *rho),
                Family::LongMemory { .. } => {
                    let c = [4.0, 2.0, 1.0][self.dim - 1];
                    (c * n.max(1) as f64).ceil() as usize
                }
                Family::Farima { .. } => 4 * n.max(1),
            },
        }
    }

    /// `a_i` before truncation.
    pub fn coefficient(&self, i: &[i64]) -> f64 {
        match &self.family {
            Family::Explicit(map) => map.get(i).copied().unwrap_or(0.0),
            Family::Iid => {
                if i.iter().all(|&c| c == 0) {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Geometric { rho } => rho.powi(i.iter().map(|c| c.abs() as i32).sum()),
            Family::LongMemory {
                alpha,
                profile,
                angular,
                a0,
            } => {
                let r2: f64 = i.iter().map(|&c| (c * c) as f64).sum();
                if r2 == 0.0 {
                    return *a0;
                }
                let r = r2.sqrt();
                let l = match profile {
                    SlowlyVarying::Constant => 1.0,
                    SlowlyVarying::Log1p => r.ln_1p(),
                };
                let b = match angular {
                    Angular::Constant(c) => *c,
                    Angular::FirstCosine => i[0] as f64 / r,
                };
                l * b * r.powf(-alpha)
            }
            Family::Farima { beta, phi, theta } => {
                if i[0] < 0 {
                    return 0.0;
                }
                let k = i[0] as usize;
                farima_coefficients(*beta, phi, theta, k + 1).map(|a| a[k]).unwrap_or(f64::NAN)
            }
        }
    }

    /// Dense coefficients on `[−m, m]^d`, row-major with the last coordinate
    /// fastest.
    fn coefficient_box(&self, m: usize) -> CubeBox {
        let side = 2 * m + 1;
        let len = side.pow(self.dim as u32);
        let mut values = vec![0.0; len];
        match &self.family {
            Family::Farima { beta, phi, theta } => {
                let a = farima_coefficients(*beta, phi, theta, m + 1).expect("validated at construction");
                values[m..].copy_from_slice(&a);
            }
            Family::Explicit(map) => {
                for (i, &v) in map {
                    if i.iter().all(|c| c.unsigned_abs() as usize <= m) {
                        let idx = i.iter().fold(0, |acc, &c| acc * side + (c + m as i64) as usize);
                        values[idx] = v;
                    }
                }
            }
            _ => {
                let mut idx = vec![0i64; self.dim];
                for (flat, slot) in values.iter_mut().enumerate() {
                    let mut rem = flat;
                    for axis in (0..self.dim).rev() {
                        idx[axis] = (rem % side) as i64 - m as i64;
                        rem /= side;
                    }
                    *slot = self.coefficient(&idx);
                }
            }
        }
        CubeBox {
            dim: self.dim,
            radius: m,
            values,
        }
    }

    /// Nonzero coefficients on `[−m, m]^d` in lexicographic site order.
    pub(crate) fn nonzero_coefficients(&self, m: usize) -> Vec<(Vec<i64>, f64)> {
        let cube = self.coefficient_box(m);
        let side = 2 * m + 1;
        cube.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(flat, &v)| (unflatten(flat, side, cube.dim, m as i64), v))
            .collect()
    }

    fn check_nondegenerate(&self) -> Result<()> {
        let m = self.support_radius(1).min(64);
        let cube = self.coefficient_box(m);
        let sum = compensated_sum(cube.values.iter().copied());
        let abs: f64 = cube.values.iter().map(|v| v.abs()).sum();
        if !(abs > 0.0) || sum.abs() <= 1e-12 * abs {
            return Err(Error::Degenerate(format!(
                "coefficient sum {sum} vanishes on the truncated support (|i| <= {m})"
            )));
        }
        Ok(())
    }

    /// Weights `b_{nj}` for the window `Γ_n` with coefficients truncated at
    /// the family's support radius.
    pub fn window_weights(&self, innovation: &InnovationModel, n: usize) -> Result<PartialSumModel> {
        self.truncated_weights(innovation, n, self.support_radius(n))
    }

    /// Weights `b^m_{nj}` with `a_i` set to 0 for `|i|_∞ > m`.
    pub fn truncated_weights(&self, innovation: &InnovationModel, n: usize, m: usize) -> Result<PartialSumModel> {
        if n == 0 {
            return Err(Error::param("n", "window half-width must be at least 1"));
        }
        let m = m.min(self.support_radius(n));
        let cube = self.coefficient_box(m);
        let weights = window_sums(&cube, n);
        PartialSumModel::from_dense(innovation.clone(), self.dim, weights.origin, weights.shape, weights.values, n, m)
    }

    /// `Σ_j b_{nj}²` for window `n` (innovation-free).
    pub fn sum_sq_weights(&self, n: usize) -> f64 {
        let cube = self.coefficient_box(self.support_radius(n));
        let w = window_sums(&cube, n);
        compensated_sum(w.values.iter().map(|b| b * b))
    }
}

/// `Σ'_{i∈ℤ^d} |i|^{−α}` continued analytically from `α > d`: `2ζ(α)` for
/// d = 1 and `4ζ(α/2)β(α/2)` for d = 2.
pub fn lattice_zeta(dim: usize, alpha: f64) -> f64 {
    match dim {
        1 => 2.0 * riemann_zeta(alpha),
        2 => 4.0 * riemann_zeta(alpha / 2.0) * dirichlet_beta(alpha / 2.0),
        _ => f64::NAN,
    }
}

fn geometric_certified_radius(dim: usize, rho: f64) -> usize {
    let r2 = rho * rho;
    let total = (1.0 + r2) / (1.0 - r2);
    let mut m = 0usize;
    loop {
        let kept = 1.0 + 2.0 * r2 * (1.0 - r2.powi(m as i32)) / (1.0 - r2);
        let tail = 1.0 - (kept / total).powi(dim as i32);
        if tail < TAIL_TOLERANCE {
            return m;
        }
        m += 1;
    }
}

struct CubeBox {
    dim: usize,
    radius: usize,
    values: Vec<f64>,
}

struct DenseBox {
    origin: [i64; MAX_DIM],
    shape: [usize; MAX_DIM],
    values: Vec<f64>,
}

/// `b_j = Σ_{i∈[−n,n]^d} a_{i−j}` on `j ∈ [−n−m, n+m]^d`.
fn window_sums(a: &CubeBox, n: usize) -> DenseBox {
    let d = a.dim;
    let m = a.radius as i64;
    let ni = n as i64;
    let side_a = 2 * a.radius + 1;
    let side_b = 2 * (n + a.radius) + 1;
    let mut shape = [1usize; MAX_DIM];
    let mut origin = [0i64; MAX_DIM];
    for axis in 0..d {
        shape[MAX_DIM - d + axis] = side_b;
        origin[MAX_DIM - d + axis] = -(ni + m);
    }
    let len = side_b.pow(d as u32);
    let mut values = vec![0.0; len];
    let nonzero: Vec<(Vec<i64>, f64)> = (0..a.values.len())
        .filter(|&f| a.values[f] != 0.0)
        .map(|f| (unflatten(f, side_a, d, m), a.values[f]))
        .collect();

    if len.saturating_mul(nonzero.len()) <= DIRECT_LIMIT {
        // direct sum of a_{i−j} over i ∈ Γ_n; k = i − j runs through the
        // support in the same lexicographic order as i
        for (flat, slot) in values.iter_mut().enumerate() {
            let j = unflatten(flat, side_b, d, ni + m);
            let mut acc = 0.0;
            for (k, v) in &nonzero {
                if k.iter().zip(&j).all(|(kk, jj)| (kk + jj).abs() <= ni) {
                    acc += v;
                }
            }
            *slot = acc;
        }
    } else {
        // inclusion–exclusion on a d-dimensional prefix sum of a
        let ps = side_a + 1;
        let pshape: Vec<usize> = (0..MAX_DIM).map(|ax| if ax >= MAX_DIM - d { ps } else { 1 }).collect();
        let ashape: Vec<usize> = (0..MAX_DIM).map(|ax| if ax >= MAX_DIM - d { side_a } else { 1 }).collect();
        let mut prefix = vec![0.0; pshape.iter().product()];
        let pidx = |x: usize, y: usize, z: usize| (x * pshape[1] + y) * pshape[2] + z;
        for x in 0..ashape[0] {
            for y in 0..ashape[1] {
                for z in 0..ashape[2] {
                    let v = a.values[(x * ashape[1] + y) * ashape[2] + z];
                    let (px, py, pz) = (
                        x + usize::from(pshape[0] > 1),
                        y + usize::from(pshape[1] > 1),
                        z + 1,
                    );
                    let get = |xx: usize, yy: usize, zz: usize| -> f64 {
                        if (pshape[0] > 1 && xx == 0) || (pshape[1] > 1 && yy == 0) || zz == 0 {
                            0.0
                        } else {
                            prefix[pidx(xx, yy, zz)]
                        }
                    };
                    let sx = pshape[0] > 1;
                    let sy = pshape[1] > 1;
                    let mut s = v + get(px, py, pz - 1);
                    if sy {
                        s += get(px, py - 1, pz) - get(px, py - 1, pz - 1);
                    }
                    if sx {
                        s += get(px - 1, py, pz) - get(px - 1, py, pz - 1);
                        if sy {
                            s += -get(px - 1, py - 1, pz) + get(px - 1, py - 1, pz - 1);
                        }
                    }
                    prefix[pidx(px, py, pz)] = s;
                }
            }
        }
        // range of a-indices (0-based) for output coordinate j along one axis
        let range = |j: i64| -> Option<(usize, usize)> {
            let lo = (-ni - j).max(-m) + m;
            let hi = (ni - j).min(m) + m;
            (lo <= hi).then_some((lo as usize, hi as usize))
        };
        let full = (0usize, 0usize);
        for (flat, slot) in values.iter_mut().enumerate() {
            let mut rem = flat;
            let mut ranges = [full; MAX_DIM];
            let mut empty = false;
            for axis in (MAX_DIM - d..MAX_DIM).rev() {
                let j = (rem % side_b) as i64 - (ni + m);
                rem /= side_b;
                match range(j) {
                    Some(r) => ranges[axis] = r,
                    None => empty = true,
                }
            }
            if empty {
                continue;
            }
            // prefix coordinates: P[hi+1] − P[lo] per active axis
            let mut s = 0.0;
            for corner in 0..(1usize << MAX_DIM) {
                let mut sign = 1.0;
                let mut c = [0usize; MAX_DIM];
                let mut skip = false;
                for axis in 0..MAX_DIM {
                    let upper = corner >> axis & 1 == 0;
                    if pshape[axis] == 1 {
                        if !upper {
                            skip = true;
                        }
                        c[axis] = 0;
                        continue;
                    }
                    let (lo, hi) = ranges[axis];
                    if upper {
                        c[axis] = hi + 1;
                    } else {
                        c[axis] = lo;
                        sign = -sign;
                    }
                }
                if skip {
                    continue;
                }
                let zero = (0..MAX_DIM).any(|ax| pshape[ax] > 1 && c[ax] == 0);
                if !zero {
                    s += sign * prefix[pidx(c[0], c[1], c[2])];
                }
            }
            *slot = s;
        }
    }
    DenseBox { origin, shape, values }
}

fn unflatten(flat: usize, side: usize, d: usize, shift: i64) -> Vec<i64> {
    let mut out = vec![0i64; d];
    let mut rem = flat;
    for axis in (0..d).rev() {
        out[axis] = (rem % side) as i64 - shift;
        rem /= side;
    }
    out
}

/// `S_n = Σ_j b_j ε_j` for a finite weight field and an innovation law, with
/// the scalars `B_n = σ²Σb²`, `M_n = max|b|`, `H_n = H/(2M_n)` and
/// `C_n = 2C B_n H_n²/(σ² H²)`.
#[derive(Debug, Clone)]
pub struct PartialSumModel {
    innovation: InnovationModel,
    dim: usize,
    origin: [i64; MAX_DIM],
    shape: [usize; MAX_DIM],
    weights: Vec<f64>,
    window: usize,
    truncation: usize,
    b_n: f64,
    m_n: f64,
    h_n: f64,
    c_n: f64,
    power_sums: OnceLock<Vec<f64>>,
    groups: OnceLock<Vec<(f64, usize)>>,
}

impl PartialSumModel {
    fn from_dense(
        innovation: InnovationModel,
        dim: usize,
        origin: [i64; MAX_DIM],
        shape: [usize; MAX_DIM],
        weights: Vec<f64>,
        window: usize,
        truncation: usize,
    ) -> Result<Self> {
        let sum_sq = compensated_sum(weights.iter().map(|b| b * b));
        if !sum_sq.is_finite() {
            return Err(Error::Numerical("sum of squared weights overflowed".into()));
        }
        if sum_sq == 0.0 {
            return Err(Error::Degenerate("all weights vanish (empty support)".into()));
        }
        let s2 = innovation.variance();
        let h = innovation.radius_h();
        let b_n = s2 * sum_sq;
        let m_n = weights.iter().fold(0.0f64, |acc, b| acc.max(b.abs()));
        let h_n = h / (2.0 * m_n);
        let c_n = 2.0 * innovation.bound_c() * b_n * h_n * h_n / (s2 * h * h);
        Ok(PartialSumModel {
            innovation,
            dim,
            origin,
            shape,
            weights,
            window,
            truncation,
            b_n,
            m_n,
            h_n,
            c_n,
            power_sums: OnceLock::new(),
            groups: OnceLock::new(),
        })
    }

    /// Model from an explicit list of `(site, weight)` pairs.
    pub fn from_sites(
        innovation: InnovationModel,
        dim: usize,
        sites: &[(Vec<i64>, f64)],
        window: usize,
    ) -> Result<Self> {
        check_dim(dim)?;
        if sites.is_empty() {
            return Err(Error::Degenerate("empty weight support".into()));
        }
        let mut lo = [0i64; MAX_DIM];
        let mut hi = [0i64; MAX_DIM];
        for axis in 0..MAX_DIM {
            if axis < MAX_DIM - dim {
                continue;
            }
            let k = axis - (MAX_DIM - dim);
            lo[axis] = sites.iter().map(|s| s.0[k]).min().unwrap_or(0);
            hi[axis] = sites.iter().map(|s| s.0[k]).max().unwrap_or(0);
        }
        let shape: [usize; MAX_DIM] = std::array::from_fn(|a| (hi[a] - lo[a] + 1) as usize);
        let mut weights = vec![0.0; shape.iter().product()];
        for (site, b) in sites {
            if site.len() != dim {
                return Err(Error::param("sites", format!("{site:?} is not {dim}-dimensional")));
            }
            let mut full = [0i64; MAX_DIM];
            full[MAX_DIM - dim..].copy_from_slice(site);
            let idx = (0..MAX_DIM).fold(0usize, |acc, a| acc * shape[a] + (full[a] - lo[a]) as usize);
            weights[idx] += b;
        }
        Self::from_dense(innovation, dim, lo, shape, weights, window, 0)
    }

    /// `N` sites with unit weight (i.i.d. sum of `N` innovations).
    pub fn uniform_weights(innovation: InnovationModel, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Degenerate("empty weight support".into()));
        }
        let shape = [1, 1, count];
        Self::from_dense(innovation, 1, [0, 0, 0], shape, vec![1.0; count], count / 2, 0)
    }

    pub fn innovation(&self) -> &InnovationModel {
        &self.innovation
    }

    /// Same weights with a different innovation law.
    pub fn with_innovation(&self, innovation: InnovationModel) -> Result<Self> {
        Self::from_dense(
            innovation,
            self.dim,
            self.origin,
            self.shape,
            self.weights.clone(),
            self.window,
            self.truncation,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// The coefficient truncation radius used to build the weights.
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn b_n(&self) -> f64 {
        self.b_n
    }

    pub fn m_n(&self) -> f64 {
        self.m_n
    }

    pub fn h_n(&self) -> f64 {
        self.h_n
    }

    pub fn c_n(&self) -> f64 {
        self.c_n
    }

    /// `H_n √B_n`, the scale of the moderate-deviation range.
    pub fn scale(&self) -> f64 {
        self.h_n * self.b_n.sqrt()
    }

    /// Dense weights (zeros included) in row-major order over the bounding box.
    pub fn dense_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of sites with a nonzero weight.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|b| **b != 0.0).count()
    }

    /// Nonzero weights with their lattice coordinates.
    pub fn sites(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        let d = self.dim;
        self.weights.iter().enumerate().filter(|(_, b)| **b != 0.0).map(move |(flat, &b)| {
            let mut full = [0i64; MAX_DIM];
            let mut rem = flat;
            for a in (0..MAX_DIM).rev() {
                full[a] = self.origin[a] + (rem % self.shape[a]) as i64;
                rem /= self.shape[a];
            }
            (full[MAX_DIM - d..].to_vec(), b)
        })
    }

    /// Site with the largest `|b_j|` (first in row-major order on ties).
    pub fn argmax_site(&self) -> Vec<i64> {
        let mut best = (Vec::new(), -1.0);
        for (site, b) in self.sites() {
            if b.abs() > best.1 {
                best = (site, b.abs());
            }
        }
        best.0
    }

    /// `Σ_j b_j^k` for `0 ≤ k ≤ 24`, where `k = 0` counts the support.
    pub fn power_sum(&self, k: usize) -> f64 {
        let sums = self.power_sums.get_or_init(|| {
            let mut acc = vec![crate::numeric::CompensatedSum::new(); MAX_CUMULANT_ORDER + 1];
            for &(b, count) in self.weight_groups() {
                let c = count as f64;
                let mut p = 1.0;
                for slot in acc.iter_mut() {
                    slot.add(c * p);
                    p *= b;
                }
            }
            acc.iter().map(|s| s.value()).collect()
        });
        sums[k]
    }

    /// Aggregate cumulant `Γ_k = γ_k Σ_j b_j^k`.
    pub fn aggregate_cumulant(&self, k: usize) -> Result<f64> {
        Ok(self.innovation.cumulant(k)? * self.power_sum(k))
    }

    /// Distinct nonzero weights with their multiplicities, sorted by value.
    pub fn weight_groups(&self) -> &[(f64, usize)] {
        self.groups.get_or_init(|| {
            let mut w: Vec<f64> = self.weights.iter().copied().filter(|b| *b != 0.0).collect();
            w.sort_by(f64::total_cmp);
            let mut out: Vec<(f64, usize)> = Vec::new();
            for b in w {
                match out.last_mut() {
                    Some((v, c)) if *v == b => *c += 1,
                    _ => out.push((b, 1)),
                }
            }
            out
        })
    }

    /// Writes `j1[,j2,j3],b` rows for every nonzero weight.
    pub fn write_weights_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|k| format!("j{k}")).collect();
        writeln!(out, "{},b", header.join(","))?;
        for (site, b) in self.sites() {
            let coords: Vec<String> = site.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{:.16e}", coords.join(","), b)?;
        }
        Ok(())
    }
}

fn check_farima(beta: f64, phi: &[f64]) -> Result<()> {
    if !(beta > -0.5 && beta < 0.5) {
        return Err(Error::param("beta", format!("must lie in (-1/2, 1/2), got {beta}")));
    }
    // step-down (Schur–Cohn) test: all zeros of φ outside the closed unit disc
    let mut a = phi.to_vec();
    while let Some(&k) = a.last() {
        if !(k.abs() < 1.0) {
            return Err(Error::param(
                "phi",
                "autoregressive polynomial has a zero in the closed unit disc",
            ));
        }
        let p = a.len();
        let denom = 1.0 - k * k;
        a = (0..p - 1).map(|j| (a[j] + k * a[p - 2 - j]) / denom).collect();
    }
    Ok(())
}

/// FARIMA coefficients `a_0, …, a_{count−1}` of `θ(B)/φ(B) · (1−B)^{−β}`.
pub fn farima_coefficients(beta: f64, phi: &[f64], theta: &[f64], count: usize) -> Result<Vec<f64>> {
    check_farima(beta, phi)?;
    let mut psi = vec![0.0; count];
    let mut arma = vec![0.0; count];
    for i in 0..count {
        psi[i] = if i == 0 { 1.0 } else { psi[i - 1] * (i as f64 - 1.0 + beta) / i as f64 };
        let mut c = if i == 0 { 1.0 } else { theta.get(i - 1).copied().unwrap_or(0.0) };
        for (l, &p) in phi.iter().enumerate() {
            if l < i {
                c += p * arma[i - 1 - l];
            }
        }
        arma[i] = c;
    }
    Ok((0..count)
        .map(|i| compensated_sum((0..=i).map(|k| arma[k] * psi[i - k])))
        .collect())
}

/// `θ(1)/(φ(1) Γ(β))`, the constant in `a_i ~ const · i^{β−1}`.
pub fn farima_asymptotic_constant(beta: f64, phi: &[f64], theta: &[f64]) -> f64 {
    let th1 = 1.0 + theta.iter().sum::<f64>();
    let ph1 = 1.0 - phi.iter().sum::<f64>();
    th1 / (ph1 * gamma(beta))
}

/// Long-memory coefficients materialised as an explicit field on
/// `|i|_∞ ≤ m_max`.
pub fn long_memory_coefficients(
    dim: usize,
    alpha: f64,
    profile: SlowlyVarying,
    angular: Angular,
    origin: Origin,
    m_max: usize,
) -> Result<CoefficientField> {
    let lm = CoefficientField::long_memory(dim, alpha, profile, angular, origin, Cutoff::Fixed(m_max))?;
    let cube = lm.coefficient_box(m_max);
    let side = 2 * m_max + 1;
    let map = cube
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(f, &v)| (unflatten(f, side, dim, m_max as i64), v))
        .collect();
    CoefficientField::explicit(dim, map)
}

/// Least-squares slope of `log B_n` against `log n`.
pub fn scaling_exponent(field: &CoefficientField, n_list: &[usize]) -> Result<f64> {
    if n_list.len() < 3 {
        return Err(Error::param("n_list", "needs at least three window sizes"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::param("n_list", "must be positive and strictly increasing"));
    }
    let mut xs = Vec::with_capacity(n_list.len());
    let mut ys = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let s = field.sum_sq_weights(n);
        if !(s > 0.0) {
            return Err(Error::Degenerate(format!("B_n vanishes at n = {n}")));
        }
        xs.push((n as f64).ln());
        ys.push(s.ln());
    }
    Ok(ols_slope(&xs, &ys))
}
