//! Scalar special functions: Gaussian densities and tails, Mills ratio,
//! truncated-normal moments, and log-odds helpers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `Q(x) = 1 - Phi(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Mills ratio `R(x) = Q(x) / phi(x)`, finite for every finite `x >= -37`.
pub fn mills_ratio(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < 5.0 {
        return normal_sf(x) / normal_pdf(x);
    }
    // Continued fraction R(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...)))), modified Lentz.
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
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

/// Moments of a standard normal truncated to the interval `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedMoments {
    /// `Phi(b) - Phi(a)`; may underflow to zero deep in a tail.
    pub mass: f64,
    pub mean: f64,
    pub var: f64,
}

/// Mean and variance of `X ~ N(0,1)` conditioned on `a < X < b`.
///
/// Tail intervals are evaluated through Mills ratios so that the conditional
/// moments stay accurate even when `mass` itself underflows. Returns `None`
/// when the interval is empty or numerically degenerate.
pub fn truncated_normal_moments(a: f64, b: f64) -> Option<TruncatedMoments> {
    if !(a < b) || a.is_nan() || b.is_nan() {
        return None;
    }
    if b <= 0.0 {
        let m = upper_tail_moments(-b, -a)?;
        return Some(TruncatedMoments {
            mass: m.mass,
            mean: -m.mean,
            var: m.var,
        });
    }
    if a >= 0.0 {
        return upper_tail_moments(a, b);
    }
    // Interval straddles zero: the mass is bounded away from underflow unless
    // the interval is vanishingly narrow.
    let mass = 0.5 * (libm::erf(b * FRAC_1_SQRT_2) - libm::erf(a * FRAC_1_SQRT_2));
    if !(mass > 0.0) {
        return None;
    }
    let (pa, pb) = (normal_pdf(a), normal_pdf(b));
    let apa = if a.is_infinite() { 0.0 } else { a * pa };
    let bpb = if b.is_infinite() { 0.0 } else { b * pb };
    let mean = (pa - pb) / mass;
    let var = 1.0 + (apa - bpb) / mass - mean * mean;
    finite_moments(mass, mean, var)
}

fn upper_tail_moments(a: f64, b: f64) -> Option<TruncatedMoments> {
    // 0 <= a < b <= inf. With e = phi(b)/phi(a) and D = R(a) - e R(b):
    //   mass = phi(a) D, mean = (1 - e)/D, E[X^2] = 1 + (a - b e)/D.
    let e = if b.is_infinite() {
        0.0
    } else {
        (-0.5 * (b - a) * (b + a)).exp()
    };
    let rb = if b.is_infinite() { 0.0 } else { mills_ratio(b) };
    let d = mills_ratio(a) - e * rb;
    if !(d > 0.0) {
        return None;
    }
    let be = if e == 0.0 { 0.0 } else { b * e };
    let mean = (1.0 - e) / d;
    let var = 1.0 + (a - be) / d - mean * mean;
    let mass = normal_pdf(a) * d;
    finite_moments(mass, mean, var)
}

fn finite_moments(mass: f64, mean: f64, var: f64) -> Option<TruncatedMoments> {
    if mean.is_finite() && var.is_finite() {
        Some(TruncatedMoments {
            mass,
            mean,
            var: var.max(0.0),
        })
    } else {
        None
    }
}

/// `ln(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-density of `CN(0, var)` evaluated at a point of squared magnitude `abs2`.
pub fn complex_gaussian_log_pdf(abs2: f64, var: f64) -> f64 {
    -(PI * var).ln() - abs2 / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mills_ratio_matches_direct_evaluation_at_switch_point() {
        let direct = normal_sf(5.0) / normal_pdf(5.0);
        let cf = {
            // evaluate the continued-fraction branch just above the switch
            let x: f64 = 5.0 + 1e-12;
            mills_ratio(x)
        };
        assert!((direct - cf).abs() / direct < 1e-10, "{direct} vs {cf}");
    }

    #[test]
    fn mills_ratio_asymptote() {
        let x: f64 = 40.0;
        let asym = 1.0 / x - 1.0 / x.powi(3) + 3.0 / x.powi(5);
        assert!((mills_ratio(x) - asym).abs() / asym < 1e-7);
    }

    #[test]
    fn half_line_moments() {
        let m = truncated_normal_moments(0.0, f64::INFINITY).unwrap();
        assert!((m.mass - 0.5).abs() < 1e-15);
        assert!((m.mean - (2.0 / PI).sqrt()).abs() < 1e-14);
        assert!((m.var - (1.0 - 2.0 / PI)).abs() < 1e-14);
        let n = truncated_normal_moments(f64::NEG_INFINITY, 0.0).unwrap();
        assert!((n.mean + (2.0 / PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn whole_line_is_standard() {
        let m = truncated_normal_moments(f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert!((m.mass - 1.0).abs() < 1e-15);
        assert!(m.mean.abs() < 1e-15);
        assert!((m.var - 1.0).abs() < 1e-14);
    }

    #[test]
    fn deep_tail_stays_finite() {
        let m = truncated_normal_moments(60.0, f64::INFINITY).unwrap();
        assert_eq!(m.mass, 0.0);
        assert!((m.mean - 60.0).abs() < 0.02);
        assert!(m.var > 0.0 && m.var < 1e-3);
    }

    #[test]
    fn empty_interval_is_rejected() {
        assert!(truncated_normal_moments(1.0, 1.0).is_none());
        assert!(truncated_normal_moments(2.0, 1.0).is_none());
    }

    #[test]
    fn logit_sigmoid_roundtrip() {
        for &p in &[1e-12, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-12] {
            assert!((sigmoid(logit(p)) - p).abs() <= 1e-15 * p.max(1e-3));
        }
        assert_eq!(logit(0.5), 0.0);
        assert_eq!(sigmoid(f64::NEG_INFINITY), 0.0);
        assert_eq!(sigmoid(f64::INFINITY), 1.0);
    }
}
