//! Standard normal density, distribution and Mills ratio `ψ(x) = (1 − Φ(x))/φ(x)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

/// `ln √(2π)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Above this point ψ comes from the continued fraction.
const CF_SWITCH: f64 = 6.0;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `1 − Φ(x)` without cancellation.
pub fn sf(x: f64) -> f64 {
    if x > CF_SWITCH {
        pdf(x) * mills_psi(x)
    } else {
        0.5 * erfc(x * FRAC_1_SQRT_2)
    }
}

/// `ln(1 − Φ(x))`, finite for every real `x` up to 1e150.
pub fn ln_sf(x: f64) -> f64 {
    if x > 0.0 {
        mills_psi(x).ln() - 0.5 * x * x - LN_SQRT_2PI
    } else {
        sf(x).ln()
    }
}

/// Mills ratio `ψ(x) = (1 − Φ(x))/φ(x)`; relative error below 1e-12 on
/// `[0, 40]`.
pub fn mills_psi(x: f64) -> f64 {
    if x <= CF_SWITCH {
        erfc(x * FRAC_1_SQRT_2) * (0.5 * PI).sqrt() * (0.5 * x * x).exp()
    } else {
        mills_cf(x)
    }
}

/// `ψ(x) = 1/(x + 1/(x + 2/(x + 3/(x + …))))`, modified Lentz evaluation.
fn mills_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

#[cfg(test)]
mod tests {
    use super::*;

    // mpmath at 30 digits: erfc(x/√2)·√(π/2)·exp(x²/2)
    const PSI_REF: [(f64, f64); 8] = [
        (0.0, 1.253_314_137_315_500_3),
        (1.0, 0.655_679_542_418_798_5),
        (2.5, 0.354_265_111_329_793_7),
        (5.9, 0.164_991_545_300_323_65),
        (6.1, 0.159_843_528_997_826_17),
        (10.0, 0.099_028_596_471_731_92),
        (20.0, 0.049_875_925_981_836_78),
        (40.0, 0.024_984_404_205_720_57),
    ];

    #[test]
    fn mills_ratio_reference_values() {
        for (x, want) in PSI_REF {
            let got = mills_psi(x);
            assert!((got / want - 1.0).abs() < 1e-12, "x={x}: {got} vs {want}");
        }
        assert!((mills_psi(0.0) - (PI / 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mills_ratio_bounds_and_continuity() {
        for i in 1..4000 {
            let x = i as f64 * 0.01;
            let p = mills_psi(x);
            assert!(x / (x * x + 1.0) < p && p < 1.0 / x, "x={x}");
        }
        let below = mills_psi(CF_SWITCH);
        let above = mills_cf(CF_SWITCH);
        assert!((below / above - 1.0).abs() < 1e-13);
    }

    #[test]
    fn distribution_identities() {
        assert_eq!(cdf(0.0), 0.5);
        for x in [-3.0, -0.4, 0.0, 1.2, 5.0, 9.0] {
            assert!((sf(x) - mills_psi(x) * pdf(x)).abs() <= 1e-14 * sf(x));
            assert!((cdf(-x) / sf(x) - 1.0).abs() < 1e-14);
            assert!((ln_sf(x) - sf(x).ln()).abs() < 1e-12);
        }
        assert!(ln_sf(60.0).is_finite());
    }
}
