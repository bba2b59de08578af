//! Ground-truth tails for checking the approximation: exact enumeration,
//! the Irwin–Hall convolution, plain Monte Carlo and tilted importance
//! sampling.
//!
//! Monte Carlo runs are split into fixed chunks of [`CHUNK`] samples. Chunk
//! `c` draws from a ChaCha8 stream selected by `(seed, c)`, and chunk
//! summaries are merged in chunk order, so results do not depend on how many
//! worker threads run the chunks.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PartialSumModel;
use crate::numeric::CompensatedSum;
use crate::tilt::{aggregate_cgf, solve_saddle, TiltOptions};

/// Samples per reproducibility chunk.
pub const CHUNK: u64 = 8192;
/// Largest number of configurations visited by [`exact_tail_enum`].
pub const MAX_ENUMERATION: u64 = 1 << 25;
pub const MAX_IRWIN_HALL: usize = 60;
pub const MIN_SAMPLES: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ExactEnum,
    IrwinHall,
    PlainMc,
    TiltedIs,
}

impl OracleMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            OracleMethod::ExactEnum => "exact_enum",
            OracleMethod::IrwinHall => "irwin_hall",
            OracleMethod::PlainMc => "plain_mc",
            OracleMethod::TiltedIs => "tilted_is",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub n_samples: u64,
    pub method: OracleMethod,
    pub tilt_z: Option<f64>,
}

impl OracleEstimate {
    fn exact(p: f64, method: OracleMethod) -> Self {
        OracleEstimate {
            p_hat: p.clamp(0.0, 1.0),
            std_err: 0.0,
            n_samples: 0,
            method,
            tilt_z: None,
        }
    }

    pub fn rel_std_err(&self) -> f64 {
        if self.p_hat > 0.0 {
            self.std_err / self.p_hat
        } else {
            f64::INFINITY
        }
    }
}

/// Exact `P(Σ_j b_j ε_j > threshold)` for finitely supported innovations.
///
/// Equal weights are handled by convolving the support distribution `N`
/// times, which is exact for any `N`. Otherwise every configuration of the
/// nonzero-weight sites is visited, up to [`MAX_ENUMERATION`] of them.
pub fn exact_tail_enum(model: &PartialSumModel, threshold: f64) -> Result<OracleEstimate> {
    let inn = model.innovation();
    let support = inn
        .finite_support()
        .ok_or_else(|| Error::Unsupported(format!("{} innovations are not finitely supported", inn.name())))?;
    let groups = model.weight_groups();
    if groups.len() == 1 {
        let (b, count) = groups[0];
        return Ok(OracleEstimate::exact(equal_weight_tail(&support, b, count, threshold), OracleMethod::ExactEnum));
    }
    let weights: Vec<f64> = model.sites().map(|s| s.1).filter(|b| *b != 0.0).collect();
    let k = support.len() as u64;
    let total = (0..weights.len()).try_fold(1u64, |acc, _| acc.checked_mul(k).filter(|v| *v <= MAX_ENUMERATION));
    let total = total.ok_or_else(|| {
        Error::Unsupported(format!(
            "{} nonzero weights with {} support points exceed the enumeration limit",
            weights.len(),
            support.len()
        ))
    })?;
    let block = 1u64 << 12;
    let parts: Vec<f64> = (0..total.div_ceil(block))
        .into_par_iter()
        .map(|c| {
            let mut acc = CompensatedSum::new();
            for idx in c * block..((c + 1) * block).min(total) {
                let mut rem = idx;
                let mut s = 0.0;
                let mut p = 1.0;
                for b in &weights {
                    let (v, q) = support[(rem % k) as usize];
                    rem /= k;
                    s += b * v;
                    p *= q;
                }
                if s > threshold {
                    acc.add(p);
                }
            }
            acc.value()
        })
        .collect();
    let p: CompensatedSum = parts.into_iter().collect();
    Ok(OracleEstimate::exact(p.value(), OracleMethod::ExactEnum))
}

/// `P(b Σ_{i<count} ε_i > threshold)` by repeated convolution of a two-point
/// (or general finite) support, tracking counts of each support value.
fn equal_weight_tail(support: &[(f64, f64)], b: f64, count: usize, threshold: f64) -> f64 {
    if support.len() == 2 {
        // binomial in the number of draws equal to the second support value
        let (v0, q0) = support[0];
        let (v1, q1) = support[1];
        let n = count as f64;
        let ln_q0 = q0.ln();
        let ln_q1 = q1.ln();
        let mut acc = CompensatedSum::new();
        for k in 0..=count {
            let kf = k as f64;
            let s = b * (kf * v1 + (n - kf) * v0);
            if s > threshold {
                let ln_c = libm::lgamma(n + 1.0) - libm::lgamma(kf + 1.0) - libm::lgamma(n - kf + 1.0);
                acc.add((ln_c + kf * ln_q1 + (n - kf) * ln_q0).exp());
            }
        }
        return acc.value();
    }
    // general support: distribution over sums kept as a sorted map
    let mut dist: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for _ in 0..count {
        let mut next: Vec<(f64, f64)> = Vec::with_capacity(dist.len() * support.len());
        for &(s, p) in &dist {
            for &(v, q) in support {
                next.push((s + b * v, p * q));
            }
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        dist.clear();
        for (s, p) in next {
            match dist.last_mut() {
                Some(last) if (last.0 - s).abs() <= 1e-12 * s.abs().max(1.0) => last.1 += p,
                _ => dist.push((s, p)),
            }
        }
    }
    dist.iter().filter(|(s, _)| *s > threshold).map(|(_, p)| p).copied().collect::<CompensatedSum>().value()
}

/// Exact `P(Σ_{i<n} U_i > threshold)` for `U_i` uniform on `[−1, 1]`.
///
/// With `V = (S + n)/2` Irwin–Hall distributed, `P(V ≤ v) = (1/n!) Σ_{k≤⌊v⌋}
/// (−1)^k C(n,k) (v − k)^n`. The alternating sum is evaluated in exact
/// rational arithmetic and the shorter side of the symmetric law is used.
pub fn irwin_hall_tail(n: usize, threshold: f64) -> Result<OracleEstimate> {
    if n == 0 || n > MAX_IRWIN_HALL {
        return Err(Error::param("n", format!("must lie in 1..={MAX_IRWIN_HALL}, got {n}")));
    }
    if !threshold.is_finite() {
        return Err(Error::param("threshold", "must be finite"));
    }
    let nf = BigRational::from_integer(BigInt::from(n));
    let v = (BigRational::from_float(threshold).expect("finite") + &nf) / BigRational::from_integer(BigInt::from(2));
    let p = if !v.is_positive() {
        1.0
    } else if v >= nf {
        0.0
    } else if v.clone() * BigRational::from_integer(BigInt::from(2)) > nf {
        // P(V > v) = P(V < n − v)
        irwin_hall_cdf(n, &nf - v)
    } else {
        1.0 - irwin_hall_cdf(n, v)
    };
    Ok(OracleEstimate::exact(p, OracleMethod::IrwinHall))
}

fn irwin_hall_cdf(n: usize, v: BigRational) -> f64 {
    let mut acc = BigRational::zero();
    let mut binom = BigInt::one();
    let mut k = 0usize;
    while BigRational::from_integer(BigInt::from(k)) < v {
        let base = &v - BigRational::from_integer(BigInt::from(k));
        let mut term = BigRational::from_integer(binom.clone()) * num_traits::pow(base, n);
        if k % 2 == 1 {
            term = -term;
        }
        acc += term;
        binom = binom * BigInt::from(n - k) / BigInt::from(k + 1);
        k += 1;
        if k > n {
            break;
        }
    }
    let fact: BigInt = (1..=n).map(BigInt::from).product();
    let p = acc / BigRational::from_integer(fact);
    debug_assert!(!p.is_negative());
    p.to_f64().unwrap_or(f64::NAN)
}

/// Chunk summary `(hits, Σw, Σw²)`.
type ChunkSums = (u64, f64, f64);

/// Draws `n_samples` copies of `S_n` under the conjugate law with parameter
/// `z` and averages `e^{−zS + Λ_n(z)} 1{S > threshold}`.
fn run_chunks(model: &PartialSumModel, threshold: f64, z: f64, n_samples: u64, seed: u64) -> Result<(f64, f64)> {
    let inn = model.innovation();
    let groups = model.weight_groups();
    let log_mgf = if z == 0.0 { 0.0 } else { aggregate_cgf(model, z)?.0 };
    for &(b, _) in groups {
        if !inn.is_gaussian() && (z * b).abs() >= inn.radius_h() {
            return Err(Error::TiltOutsideRadius {
                theta: z * b,
                radius: inn.radius_h(),
            });
        }
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let sums: Vec<ChunkSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let mut hits = 0u64;
            let mut sw = CompensatedSum::new();
            let mut sw2 = CompensatedSum::new();
            for _ in 0..len {
                let mut s = 0.0;
                for &(b, count) in groups {
                    s += b * inn.draw_tilted_sum_unchecked(z * b, count, &mut rng);
                }
                if s > threshold {
                    let w = if z == 0.0 { 1.0 } else { (log_mgf - z * s).exp() };
                    hits += 1;
                    sw.add(w);
                    sw2.add(w * w);
                }
            }
            (hits, sw.value(), sw2.value())
        })
        .collect();
    let mut sw = CompensatedSum::new();
    let mut sw2 = CompensatedSum::new();
    for (_, a, b) in &sums {
        sw.add(*a);
        sw2.add(*b);
    }
    let n = n_samples as f64;
    let p = sw.value() / n;
    let var = ((sw2.value() / n - p * p) / (n - 1.0)).max(0.0);
    Ok((p, var.sqrt()))
}

fn check_samples(n_samples: u64) -> Result<()> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::param("n_samples", format!("must be at least {MIN_SAMPLES}, got {n_samples}")));
    }
    Ok(())
}

/// Plain Monte Carlo estimate of `P(S_n > threshold)`.
pub fn plain_mc(model: &PartialSumModel, threshold: f64, n_samples: u64, seed: u64) -> Result<OracleEstimate> {
    check_samples(n_samples)?;
    let (p, se) = run_chunks(model, threshold, 0.0, n_samples, seed)?;
    Ok(OracleEstimate {
        p_hat: p.clamp(0.0, 1.0),
        std_err: se,
        n_samples,
        method: OracleMethod::PlainMc,
        tilt_z: None,
    })
}

/// Importance-sampling estimate of `P(S_n > threshold)` tilted at an
/// explicit `z`, through `P(S_n > s) = E_z[e^{−zS_n + Λ_n(z)} 1{S_n > s}]`.
pub fn tilted_is_at(
    model: &PartialSumModel,
    threshold: f64,
    z: f64,
    n_samples: u64,
    seed: u64,
) -> Result<OracleEstimate> {
    check_samples(n_samples)?;
    let (p, se) = run_chunks(model, threshold, z, n_samples, seed)?;
    Ok(OracleEstimate {
        p_hat: p.clamp(0.0, 1.0),
        std_err: se,
        n_samples,
        method: OracleMethod::TiltedIs,
        tilt_z: Some(z),
    })
}

/// Importance sampling tilted at the saddle of `x = threshold/√B_n`.
pub fn tilted_is(
    model: &PartialSumModel,
    threshold: f64,
    n_samples: u64,
    seed: u64,
    opts: &TiltOptions,
) -> Result<OracleEstimate> {
    let sol = solve_saddle(model, threshold / model.b_n().sqrt(), opts)?;
    tilted_is_at(model, threshold, sol.z, n_samples, seed)
}

/// Midpoint between the two attainable values of `S_n` around `s` when the
/// weights are all equal and the innovation lives on a lattice. Other models
/// return `s` unchanged.
pub fn mid_lattice(model: &PartialSumModel, s: f64) -> f64 {
    let (Some(lat), [(b, count)]) = (model.innovation().lattice(), model.weight_groups()) else {
        return s;
    };
    let base = b * *count as f64 * lat.offset;
    let step = (b * lat.span).abs();
    let k = ((s - base) / step).floor();
    base + step * (k + 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::InnovationModel;
    use crate::field::CoefficientField;
    use crate::tilt::normal;

    fn sites(inn: InnovationModel, b: &[f64]) -> PartialSumModel {
        let s: Vec<(Vec<i64>, f64)> = b.iter().enumerate().map(|(i, v)| (vec![i as i64], *v)).collect();
        PartialSumModel::from_sites(inn, 1, &s, 1).unwrap()
    }

    /// Sums over all sign patterns directly, independent of the library path.
    fn brute_signs(b: &[f64], t: f64) -> f64 {
        let n = b.len();
        let mut hits = 0u64;
        for mask in 0..(1u64 << n) {
            let s: f64 = (0..n).map(|i| if mask >> i & 1 == 1 { b[i] } else { -b[i] }).sum();
            if s > t {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn enumeration_examples() {
        let r = InnovationModel::rademacher();
        let m = PartialSumModel::uniform_weights(r.clone(), 3).unwrap();
        assert!((exact_tail_enum(&m, 2.5).unwrap().p_hat - 0.125).abs() < 1e-15);
        let m = PartialSumModel::uniform_weights(r.clone(), 21).unwrap();
        assert!((exact_tail_enum(&m, 0.0).unwrap().p_hat - 0.5).abs() < 1e-14);
        let m = sites(r.clone(), &[1.0, 2.0, 3.0]);
        assert_eq!(exact_tail_enum(&m, 1.5).unwrap().p_hat, 0.375);
        let b = [0.3, 1.1, 0.7, 0.25, 0.9, 1.6, 0.45, 0.8];
        let m = sites(r.clone(), &b);
        for t in [-1.0, 0.05, 1.3, 3.0] {
            assert!((exact_tail_enum(&m, t).unwrap().p_hat - brute_signs(&b, t)).abs() < 1e-15);
        }
        let g = sites(InnovationModel::gaussian(1.0).unwrap(), &[1.0, 2.0]);
        assert!(matches!(exact_tail_enum(&g, 0.0), Err(Error::Unsupported(_))));
        let big = sites(r, &(0..26).map(|i| 1.0 + i as f64 * 0.01).collect::<Vec<_>>());
        assert!(matches!(exact_tail_enum(&big, 0.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn equal_weight_shortcut_matches_enumeration() {
        let bern = InnovationModel::centered_bernoulli(0.3).unwrap();
        let eq = PartialSumModel::uniform_weights(bern.clone(), 12).unwrap();
        // a tiny perturbation defeats grouping and forces the 2^12 path
        let mut w = vec![1.0; 12];
        w[0] = 1.0 + 1e-13;
        let pert = sites(bern, &w);
        for t in [-2.0, 0.05, 1.05, 3.05] {
            let a = exact_tail_enum(&eq, t).unwrap().p_hat;
            let b = exact_tail_enum(&pert, t).unwrap().p_hat;
            assert!((a - b).abs() < 1e-14, "{t}: {a} vs {b}");
        }
    }

    #[test]
    fn irwin_hall_examples() {
        assert!((irwin_hall_tail(1, 0.5).unwrap().p_hat - 0.25).abs() < 1e-16);
        assert!((irwin_hall_tail(2, 1.0).unwrap().p_hat - 0.125).abs() < 1e-16);
        assert_eq!(irwin_hall_tail(5, 0.0).unwrap().p_hat, 0.5);
        assert_eq!(irwin_hall_tail(5, 5.0).unwrap().p_hat, 0.0);
        assert_eq!(irwin_hall_tail(5, -5.0).unwrap().p_hat, 1.0);
        let hi = irwin_hall_tail(60, 20.0).unwrap().p_hat;
        let lo = irwin_hall_tail(60, -20.0).unwrap().p_hat;
        assert!(hi > 0.0 && (hi + lo - 1.0).abs() < 1e-15);
        assert!(irwin_hall_tail(61, 0.0).is_err());
    }

    #[test]
    fn irwin_hall_against_plain_mc() {
        let u = PartialSumModel::uniform_weights(InnovationModel::centered_uniform(1.0).unwrap(), 20).unwrap();
        let exact = irwin_hall_tail(20, 6.0).unwrap().p_hat;
        let mc = plain_mc(&u, 6.0, 1_000_000, 11).unwrap();
        assert!((mc.p_hat - exact).abs() < 4.0 * mc.std_err, "{exact} vs {mc:?}");
    }

    #[test]
    fn plain_mc_examples() {
        let g = PartialSumModel::uniform_weights(InnovationModel::gaussian(1.0).unwrap(), 9).unwrap();
        let all = plain_mc(&g, -1e6, 4000, 1).unwrap();
        assert_eq!((all.p_hat, all.std_err), (1.0, 0.0));
        let est = plain_mc(&g, 3.0, 200_000, 2).unwrap();
        assert!((est.p_hat - normal::sf(1.0)).abs() < 4.0 * est.std_err);
        assert!(plain_mc(&g, 0.0, 10, 1).is_err());
    }

    #[test]
    fn independent_of_thread_count() {
        let p = PartialSumModel::uniform_weights(InnovationModel::centered_poisson(1.0).unwrap(), 101).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| tilted_is(&p, 25.0, 50_000, 9, &TiltOptions::default()).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.p_hat.to_bits(), b.p_hat.to_bits());
        assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
    }

    #[test]
    fn forced_zero_tilt_is_plain_mc() {
        let m = CoefficientField::geometric(1, 0.5, crate::field::Cutoff::Auto)
            .unwrap()
            .window_weights(&InnovationModel::centered_uniform(1.0).unwrap(), 10)
            .unwrap();
        let a = tilted_is_at(&m, 2.0, 0.0, 20_000, 5).unwrap();
        let b = plain_mc(&m, 2.0, 20_000, 5).unwrap();
        assert_eq!(a.p_hat, b.p_hat);
        assert_eq!(a.std_err, b.std_err);
    }

    #[test]
    fn gaussian_rare_tail() {
        let g = PartialSumModel::uniform_weights(InnovationModel::gaussian(1.0).unwrap(), 16).unwrap();
        let est = tilted_is(&g, 5.0 * 4.0, 100_000, 3, &TiltOptions::default()).unwrap();
        let exact = normal::sf(5.0);
        assert!((exact - 2.8665e-7).abs() < 1e-10);
        assert!((est.p_hat - exact).abs() < 4.0 * est.std_err);
        assert!(est.rel_std_err() < 0.01);
    }

    #[test]
    fn is_unbiased_against_enumeration() {
        let m = PartialSumModel::uniform_weights(InnovationModel::rademacher(), 11).unwrap();
        let s = mid_lattice(&m, 1.5 * 11f64.sqrt());
        assert_eq!(s, 4.0);
        let exact = exact_tail_enum(&m, s).unwrap().p_hat;
        let est = tilted_is(&m, s, 200_000, 17, &TiltOptions::default()).unwrap();
        assert!((est.p_hat - exact).abs() < 4.0 * est.std_err, "{exact} vs {est:?}");
    }

    #[test]
    fn is_agrees_with_plain_mc_on_common_events() {
        let laws = [
            InnovationModel::gaussian(1.0).unwrap(),
            InnovationModel::rademacher(),
            InnovationModel::centered_bernoulli(0.3).unwrap(),
            InnovationModel::centered_uniform(1.0).unwrap(),
            InnovationModel::centered_poisson(1.0).unwrap(),
        ];
        for inn in laws {
            let m = PartialSumModel::uniform_weights(inn.clone(), 50).unwrap();
            let s = mid_lattice(&m, 1.2816 * m.b_n().sqrt());
            let a = plain_mc(&m, s, 100_000, 21).unwrap();
            let b = tilted_is(&m, s, 100_000, 22, &TiltOptions::default()).unwrap();
            let tol = 4.0 * (a.std_err.powi(2) + b.std_err.powi(2)).sqrt();
            assert!((a.p_hat - b.p_hat).abs() < tol, "{}: {a:?} vs {b:?}", inn.name());
        }
    }

    #[test]
    fn variance_reduction_for_rare_events() {
        let m = PartialSumModel::uniform_weights(InnovationModel::centered_poisson(1.0).unwrap(), 1000).unwrap();
        let sb = m.b_n().sqrt();
        let rare = tilted_is(&m, mid_lattice(&m, 4.7534 * sb), 50_000, 1, &TiltOptions::default()).unwrap();
        let common = tilted_is(&m, mid_lattice(&m, 2.3263 * sb), 50_000, 2, &TiltOptions::default()).unwrap();
        assert!(rare.p_hat < 1e-5 && common.p_hat > 5e-3);
        assert!(rare.rel_std_err() < 50.0 * common.rel_std_err());
    }

    #[test]
    fn general_support_convolution() {
        let support = [(-1.0, 0.2), (0.0, 0.5), (2.0, 0.3)];
        let got = equal_weight_tail(&support, 1.0, 3, 1.5);
        let mut want = 0.0;
        for a in &support {
            for b in &support {
                for c in &support {
                    if a.0 + b.0 + c.0 > 1.5 {
                        want += a.1 * b.1 * c.1;
                    }
                }
            }
        }
        assert!((got - want).abs() < 1e-15);
    }
}
