//! Small numerical helpers: golden-section search, Gaussian tail inverse and
//! log-domain forms of the scaled complementary error function.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

use crate::error::{Error, Result};

/// Golden-section search for a minimum of `f` on `[lo, hi]`. Returns
/// `(argmin, min)`.
pub fn golden_section_min<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Gaussian right tail `Q(x)`.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `Q^{-1}(eps)` by bisection on [`gaussian_q`] followed by Newton polishing.
pub fn gaussian_q_inverse(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    if epsilon == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    // Q is decreasing
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gaussian_q(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let step = (gaussian_q(x) - epsilon) / pdf;
        if !step.is_finite() {
            break;
        }
        x += step;
    }
    Ok(x)
}

/// `ln(1 - sqrt(pi) x e^{x^2} erfc(x))` for `x > 0`.
fn ln_one_minus_scaled_erfc(x: f64) -> f64 {
    if x <= 10.0 {
        let erfcx = (x * x).exp() * erfc(x);
        return (1.0 - PI.sqrt() * x * erfcx).ln();
    }
    // asymptotic series sum_{k>=1} (-1)^{k+1} (2k-1)!! / (2x^2)^k
    let z = 2.0 * x * x;
    let mut term = 1.0 / z;
    let mut sum = term;
    for k in 1..60 {
        let next = -term * (2 * k + 1) as f64 / z;
        if next.abs() >= term.abs() || next.abs() < 1e-18 * sum.abs() {
            break;
        }
        sum += next;
        term = next;
    }
    sum.ln()
}

/// `ln(1 + sqrt(pi) q e^{q^2} erfc(-q))`, evaluated without overflow for any
/// finite `q`.
pub fn ln_phase_factor(q: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else if q > 0.0 {
        // T = sqrt(pi) q e^{q^2} (2 - erfc(q)); ln(1 + T) via ln T
        let ln_t = (PI.sqrt() * q).ln() + q * q + (2.0 - erfc(q)).ln();
        if ln_t > 0.0 {
            ln_t + (-ln_t).exp().ln_1p()
        } else {
            ln_t.exp().ln_1p()
        }
    } else {
        ln_one_minus_scaled_erfc(-q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, v) = golden_section_min(|x| Ok((x - 0.3) * (x - 0.3) + 1.0), -1.0, 2.0, 1e-10).unwrap();
        // function values resolve the argmin only to about sqrt(eps)
        assert!((x - 0.3).abs() < 1e-7);
        assert_relative_eq!(v, 1.0);
    }

    #[test]
    fn q_inverse_values() {
        assert_eq!(gaussian_q_inverse(0.5).unwrap(), 0.0);
        assert_relative_eq!(gaussian_q_inverse(1e-3).unwrap(), 3.090232306167813, max_relative = 1e-10);
        assert_relative_eq!(gaussian_q_inverse(1e-6).unwrap(), 4.7534243088229, max_relative = 1e-10);
        for &eps in &[0.9, 0.3, 1e-2, 1e-9, 1e-15] {
            let x = gaussian_q_inverse(eps).unwrap();
            assert!((gaussian_q(x) - eps).abs() / eps < 1e-6);
        }
        assert!(gaussian_q_inverse(0.0).is_err());
        assert!(gaussian_q_inverse(1.0).is_err());
    }

    #[test]
    fn phase_factor_matches_high_precision_values() {
        // 40-digit references
        let cases = [
            (0.5, 1.004_387_478_661_518_8, -0.788_868_438_528_425_7),
            (1.0, 2.290_328_895_030_395_3, -1.418_289_411_908_619_3),
            (3.0, 11.364_124_971_325_095, -3.032_683_419_150_869_6),
            (8.0, 67.344_953_665_164_48, -4.874_857_632_189_31),
            (12.0, 147.750_418_773_272_66, -5.673_253_355_456_278),
            (30.0, 904.666_709_505_146_9, -7.497_205_381_581_61),
        ];
        for (q, pos, neg) in cases {
            assert_relative_eq!(ln_phase_factor(q), pos, max_relative = 1e-12);
            assert_relative_eq!(ln_phase_factor(-q), neg, max_relative = 1e-10);
        }
        assert_eq!(ln_phase_factor(0.0), 0.0);
        assert!(ln_phase_factor(1e4).is_finite());
        assert!(ln_phase_factor(-1e4).is_finite());
    }
}
