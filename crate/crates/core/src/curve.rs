//! Encoder curve evaluation, closed-form derivatives, Frenet frames and
//! generalized curvatures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::CodeProfile;

/// Central-difference step for frame derivatives.
pub const FRAME_STEP: f64 = 1e-5;

const RANK_TOL: f64 = 1e-12;

/// Orthonormal frame `e_1..e_m` at one curve parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrenetFrame {
    pub alpha: f64,
    pub vectors: Vec<Vec<f64>>,
}

impl FrenetFrame {
    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.vectors.iter().enumerate() {
            for (j, b) in self.vectors.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }
}

/// Generalized curvatures `chi_1..chi_{n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureVector {
    pub values: Vec<f64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// The curve point `x(alpha)`.
pub fn evaluate_curve(profile: &CodeProfile, alpha: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(profile.n());
    for (&r, &w) in profile.radii().iter().zip(profile.frequencies()) {
        let (s, c) = (w as f64 * alpha).sin_cos();
        x.push(r * c);
        x.push(r * s);
    }
    if let Some(b) = profile.helix_coeff() {
        x.push(b * alpha);
    }
    x
}

/// The `k`-th derivative `x^(k)(alpha)`.
///
/// The phase shift `k pi / 2` is applied as an exact quarter-turn
/// permutation of `(cos, sin)` so parity cancellations are exact.
pub fn curve_derivative(profile: &CodeProfile, alpha: f64, k: u32) -> Vec<f64> {
    let mut x = Vec::with_capacity(profile.n());
    for (&r, &w) in profile.radii().iter().zip(profile.frequencies()) {
        let w = w as f64;
        let (s, c) = (w * alpha).sin_cos();
        let amp = r * w.powi(k as i32);
        let (dc, ds) = match k % 4 {
            0 => (c, s),
            1 => (-s, c),
            2 => (-c, -s),
            _ => (s, -c),
        };
        x.push(amp * dc);
        x.push(amp * ds);
    }
    if let Some(b) = profile.helix_coeff() {
        x.push(match k {
            0 => b * alpha,
            1 => b,
            _ => 0.0,
        });
    }
    x
}

/// Gram-Schmidt frame of the first `m` derivatives at `alpha`.
pub fn frenet_frame(profile: &CodeProfile, alpha: f64, m: usize) -> Result<FrenetFrame> {
    if m == 0 || m > profile.n() {
        return Err(Error::Domain(format!(
            "frame size {m} outside 1..={}",
            profile.n()
        )));
    }
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(m);
    for k in 1..=m {
        let mut v = curve_derivative(profile, alpha, k as u32);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for e in &vectors {
                let p = dot(&v, e);
                v.iter_mut().zip(e).for_each(|(vi, ei)| *vi -= p * ei);
            }
        }
        let len = norm(&v);
        if len < RANK_TOL {
            return Err(Error::DegenerateCurve { order: k, alpha });
        }
        v.iter_mut().for_each(|vi| *vi /= len);
        vectors.push(v);
    }
    Ok(FrenetFrame { alpha, vectors })
}

/// `chi_m = <e_m', e_{m+1}> / |x'|`, with `e_m'` from central differences of
/// the frame at step [`FRAME_STEP`].
pub fn generalized_curvatures(profile: &CodeProfile, alpha: f64) -> Result<CurvatureVector> {
    let n = profile.n();
    let here = frenet_frame(profile, alpha, n)?;
    let ahead = frenet_frame(profile, alpha + FRAME_STEP, n)?;
    let behind = frenet_frame(profile, alpha - FRAME_STEP, n)?;
    let speed = norm(&curve_derivative(profile, alpha, 1));
    let values = (0..n - 1)
        .map(|m| {
            let de: Vec<f64> = ahead.vectors[m]
                .iter()
                .zip(&behind.vectors[m])
                .map(|(a, b)| (a - b) / (2.0 * FRAME_STEP))
                .collect();
            dot(&de, &here.vectors[m + 1]) / speed
        })
        .collect();
    Ok(CurvatureVector { values })
}

/// Constant speed `|x'|`.
pub fn speed(profile: &CodeProfile) -> f64 {
    let sum: f64 = profile
        .radii()
        .iter()
        .zip(profile.frequencies())
        .map(|(r, &w)| (r * w as f64).powi(2))
        .sum();
    let b = profile.drift();
    (sum + b * b).sqrt()
}

/// Length of the curve over `alpha` in `[-pi, pi]`.
pub fn path_length(profile: &CodeProfile) -> f64 {
    2.0 * PI * speed(profile)
}

/// Closed-form first curvature `sqrt(sum r^2 w^4) / |x'|^2`.
pub fn first_curvature(profile: &CodeProfile) -> f64 {
    let b: f64 = profile
        .radii()
        .iter()
        .zip(profile.frequencies())
        .map(|(r, &w)| r * r * (w as f64).powi(4))
        .sum();
    let v = speed(profile);
    b.sqrt() / (v * v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn table_one_n4() -> CodeProfile {
        CodeProfile::harmonic(vec![(2.0f64 / 3.0).sqrt(), (1.0f64 / 3.0).sqrt()]).unwrap()
    }

    fn assert_vec(actual: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(actual.len(), expected.len());
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() <= tol, "{actual:?} vs {expected:?}");
        }
    }

    #[test]
    fn evaluate_examples() {
        let p = table_one_n4();
        assert_vec(&evaluate_curve(&p, 0.0), &[0.8165, 0.0, 0.5774, 0.0], 1e-4);
        assert_vec(&evaluate_curve(&p, FRAC_PI_2), &[0.0, 0.8165, -0.5774, 0.0], 1e-4);
        let h = CodeProfile::helix(vec![0.6], 0.2).unwrap();
        assert_vec(&evaluate_curve(&h, PI), &[-0.6, 0.0, 0.6283], 1e-4);
        assert_relative_eq!(norm(&evaluate_curve(&p, 1.234)), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn derivative_examples() {
        let p = table_one_n4();
        assert_vec(&curve_derivative(&p, 0.0, 1), &[0.0, 0.8165, 0.0, 1.1547], 1e-4);
        let circle = CodeProfile::harmonic(vec![1.0]).unwrap();
        assert_vec(&curve_derivative(&circle, 0.0, 2), &[-1.0, 0.0], 1e-15);
        for &a in &[-3.0, -0.4, 0.0, 1.1, 2.9] {
            assert_relative_eq!(norm(&curve_derivative(&p, a, 1)), 2f64.sqrt(), epsilon = 1e-12);
        }
        let h = CodeProfile::helix(vec![0.6], 0.2).unwrap();
        assert_eq!(curve_derivative(&h, 0.3, 1)[2], 0.2);
        assert_eq!(curve_derivative(&h, 0.3, 2)[2], 0.0);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = CodeProfile::harmonic_normalized(&[0.5835, 0.6463, 0.4918]).unwrap();
        let h = 1e-3;
        for &a in &[-2.0, 0.3, 1.7] {
            for k in 1..=3u32 {
                let lo = curve_derivative(&p, a - h, k - 1);
                let hi = curve_derivative(&p, a + h, k - 1);
                let lo2 = curve_derivative(&p, a - 2.0 * h, k - 1);
                let hi2 = curve_derivative(&p, a + 2.0 * h, k - 1);
                let exact = curve_derivative(&p, a, k);
                let scale = norm(&exact);
                for i in 0..p.n() {
                    // fourth-order central difference
                    let fd = (8.0 * (hi[i] - lo[i]) - (hi2[i] - lo2[i])) / (12.0 * h);
                    assert!((fd - exact[i]).abs() / scale < 1e-6);
                }
            }
        }
    }

    #[test]
    fn frame_examples() {
        let circle = CodeProfile::harmonic(vec![1.0]).unwrap();
        let f = frenet_frame(&circle, 0.0, 2).unwrap();
        assert_vec(&f.vectors[0], &[0.0, 1.0], 1e-15);
        assert_vec(&f.vectors[1], &[-1.0, 0.0], 1e-15);

        let p = table_one_n4();
        let f = frenet_frame(&p, 0.7, 4).unwrap();
        assert!(f.orthonormality_error() < 1e-9);
        // e_2 is parallel to x''
        for &a in &[-2.5, 0.0, 0.7, 2.0] {
            let f = frenet_frame(&p, a, 4).unwrap();
            let x2 = curve_derivative(&p, a, 2);
            assert_relative_eq!(dot(&f.vectors[1], &x2), norm(&x2), max_relative = 1e-12);
        }
    }

    #[test]
    fn frame_rank_deficiency_names_order() {
        // a flat helix (b = 0) has no third independent derivative
        let p = CodeProfile::helix(vec![1.0], 0.0).unwrap();
        match frenet_frame(&p, 0.2, 3) {
            Err(Error::DegenerateCurve { order, .. }) => assert_eq!(order, 3),
            other => panic!("expected degenerate curve, got {other:?}"),
        }
        assert!(frenet_frame(&p, 0.2, 4).is_err());
    }

    #[test]
    fn curvature_examples() {
        let circle = CodeProfile::harmonic(vec![1.0]).unwrap();
        assert_relative_eq!(
            generalized_curvatures(&circle, 0.4).unwrap().values[0],
            1.0,
            max_relative = 1e-8
        );
        let h = CodeProfile::helix(vec![0.6], 0.2).unwrap();
        let chi = generalized_curvatures(&h, 0.1).unwrap();
        assert_relative_eq!(chi.values[0], 1.5, max_relative = 1e-8);
        let p = table_one_n4();
        for &a in &[-1.0, 0.0, 2.2] {
            let chi = generalized_curvatures(&p, a).unwrap();
            assert_relative_eq!(chi.values[0], 6f64.sqrt() / 2.0, max_relative = 1e-8);
            assert!(chi.values.iter().all(|&c| c > 0.0));
        }
        assert_relative_eq!(first_curvature(&p), 6f64.sqrt() / 2.0, max_relative = 1e-14);
        assert_relative_eq!(first_curvature(&h), 1.5, max_relative = 1e-14);
    }

    #[test]
    fn path_length_examples() {
        let circle = CodeProfile::harmonic(vec![1.0]).unwrap();
        assert_relative_eq!(path_length(&circle), 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(path_length(&table_one_n4()), 8.88577, epsilon = 1e-5);
        let h = CodeProfile::helix(vec![0.6], 0.2).unwrap();
        assert_relative_eq!(path_length(&h), 3.97384, epsilon = 1e-5);
    }
}
