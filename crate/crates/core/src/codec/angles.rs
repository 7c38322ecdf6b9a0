//! Angles-only likelihood after marginalizing the pair amplitudes.

use std::f64::consts::{FRAC_2_PI, PI};

use super::{alpha_grid, unstretch, MIN_GRID_POINTS};
use crate::error::{Error, Result};
use crate::numeric::{golden_section_min, ln_phase_factor};
use crate::profile::CodeProfile;

const APPROX_A: f64 = 0.8577;
const APPROX_B: f64 = 0.024;
const REFINE_TOL: f64 = 1e-10;

fn q_values<'a>(
    profile: &'a CodeProfile,
    eta: &'a [f64],
    alpha: f64,
    noise_var: f64,
) -> impl Iterator<Item = f64> + 'a {
    let scale = 1.0 / (2.0 * noise_var).sqrt();
    profile
        .radii()
        .iter()
        .zip(profile.frequencies())
        .zip(eta)
        .map(move |((r, w), e)| r * (e - *w as f64 * alpha).cos() * scale)
}

fn check_inputs(profile: &CodeProfile, eta: &[f64], noise_var: f64) -> Result<()> {
    if eta.len() != profile.pairs() {
        return Err(Error::Domain(format!(
            "{} angles given for {} pairs",
            eta.len(),
            profile.pairs()
        )));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::Domain(format!("noise variance {noise_var} must be positive")));
    }
    Ok(())
}

/// `sum_i ln(1 + sqrt(pi) q_i e^{q_i^2} erfc(-q_i))` with
/// `q_i = r_i cos(eta_i - w_i alpha) / sqrt(2 sigma^2)`, up to an
/// alpha-independent constant.
pub fn angles_log_likelihood(profile: &CodeProfile, eta: &[f64], alpha: f64, noise_var: f64) -> Result<f64> {
    check_inputs(profile, eta, noise_var)?;
    Ok(q_values(profile, eta, alpha, noise_var).map(ln_phase_factor).sum())
}

/// Closed-form approximation of `sqrt(pi) q e^{q^2} erfc(q)`:
/// `2 / (1 + sqrt(1 + 2 Phi(q) / q^2))` with
/// `Phi(q) = 1 - c exp(-q a [1 - b q^2 (1 - a q / pi^2)])`, `c = 1 - 2/pi`.
/// Negative arguments use `g(-x) = g(x) - 2 sqrt(pi) x e^{x^2}`.
pub fn angles_likelihood_approx(q: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    if q < 0.0 {
        let x = -q;
        return positive_approx(x) - 2.0 * PI.sqrt() * x * (x * x).exp();
    }
    positive_approx(q)
}

fn positive_approx(q: f64) -> f64 {
    let c = 1.0 - FRAC_2_PI;
    let p = APPROX_A * (1.0 - APPROX_B * q * q * (1.0 - APPROX_A * q / (PI * PI)));
    let phi = 1.0 - c * (-q * p).exp();
    2.0 / (1.0 + (1.0 + 2.0 * phi / (q * q)).sqrt())
}

/// `ln(1 - g~(-q))` where `g~` is [`angles_likelihood_approx`], in log form
/// for large positive `q`.
fn ln_phase_factor_approx(q: f64) -> f64 {
    if q <= 0.0 {
        return (1.0 - angles_likelihood_approx(-q)).ln();
    }
    // 1 - g~(-q) = 2 sqrt(pi) q e^{q^2} + 1 - g~(q)
    let ln_lead = (2.0 * PI.sqrt() * q).ln() + q * q;
    let rest = 1.0 - positive_approx(q);
    ln_lead + (rest * (-ln_lead).exp()).ln_1p()
}

/// [`angles_log_likelihood`] with each factor replaced by its closed-form
/// approximation.
pub fn angles_log_likelihood_approx(
    profile: &CodeProfile,
    eta: &[f64],
    alpha: f64,
    noise_var: f64,
) -> Result<f64> {
    check_inputs(profile, eta, noise_var)?;
    Ok(q_values(profile, eta, alpha, noise_var)
        .map(ln_phase_factor_approx)
        .sum())
}

/// Grid-plus-golden-section maximizer of the angles-only likelihood over the
/// profile's stretch image.
#[derive(Debug, Clone)]
pub struct AnglesDecoder {
    profile: CodeProfile,
    alphas: Vec<f64>,
    noise_var: f64,
    approximate: bool,
}

impl AnglesDecoder {
    pub fn new(profile: &CodeProfile, noise_var: f64, grid_points: usize) -> Result<Self> {
        if profile.is_odd() {
            return Err(Error::Domain("angles-only decoding needs even n".into()));
        }
        if grid_points < MIN_GRID_POINTS {
            return Err(Error::Domain(format!(
                "decoder grid of {grid_points} points is below {MIN_GRID_POINTS}"
            )));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::Domain(format!("noise variance {noise_var} must be positive")));
        }
        Ok(AnglesDecoder {
            profile: profile.clone(),
            alphas: alpha_grid(profile.alpha_max(), grid_points),
            noise_var,
            approximate: false,
        })
    }

    /// Use the closed-form factor approximation instead of the exact one.
    pub fn approximate(mut self, on: bool) -> Self {
        self.approximate = on;
        self
    }

    fn log_likelihood(&self, eta: &[f64], alpha: f64) -> f64 {
        let q = q_values(&self.profile, eta, alpha, self.noise_var);
        if self.approximate {
            q.map(ln_phase_factor_approx).sum()
        } else {
            q.map(ln_phase_factor).sum()
        }
    }

    pub fn decode_alpha(&self, eta: &[f64]) -> Result<f64> {
        check_inputs(&self.profile, eta, self.noise_var)?;
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (j, &a) in self.alphas.iter().enumerate() {
            let v = self.log_likelihood(eta, a);
            if v > best_val {
                best_val = v;
                best = j;
            }
        }
        let lo = self.alphas[best.saturating_sub(1)];
        let hi = self.alphas[(best + 1).min(self.alphas.len() - 1)];
        let (a, neg) = golden_section_min(|a| Ok(-self.log_likelihood(eta, a)), lo, hi, REFINE_TOL)?;
        Ok(if -neg >= best_val { a } else { self.alphas[best] })
    }

    pub fn decode(&self, eta: &[f64]) -> Result<f64> {
        let a = self.decode_alpha(eta)?;
        Ok(unstretch(a, self.profile.stretch(), self.profile.n()))
    }
}

/// One-shot angles-only decode.
pub fn angles_map_decode(profile: &CodeProfile, eta: &[f64], noise_var: f64, grid_points: usize) -> Result<f64> {
    AnglesDecoder::new(profile, noise_var, grid_points)?.decode(eta)
}
