//! Source-to-channel mapping, the AWGN channel and the correlation (MAP)
//! decoder, plus torus-projection and angles-only feature extraction.

mod angles;

pub use angles::{
    angles_likelihood_approx, angles_log_likelihood, angles_log_likelihood_approx,
    angles_map_decode, AnglesDecoder,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curve::evaluate_curve;
use crate::error::{Error, Result};
use crate::numeric::golden_section_min;
use crate::profile::{CodeProfile, Stretch};

/// Default number of points in the decoder search grid.
pub const DEFAULT_GRID_POINTS: usize = 10_000;
/// Smallest accepted decoder grid.
pub const MIN_GRID_POINTS: usize = 1_000;
/// Source variance of `U[-1, 1]`.
pub const SOURCE_VARIANCE: f64 = 1.0 / 3.0;

const REFINE_TOL: f64 = 1e-10;

/// AWGN noise level tied to an average power per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub snr_db: f64,
    /// Noise variance per real dimension.
    pub noise_var: f64,
    /// Average power per channel use `P`.
    pub power: f64,
}

impl ChannelSpec {
    /// `noise_var = P / 10^{snr_db / 10}`.
    pub fn from_power(power: f64, snr_db: f64) -> Self {
        ChannelSpec {
            snr_db,
            noise_var: power / 10f64.powf(snr_db / 10.0),
            power,
        }
    }

    /// Channel at `snr_db` for the profile's average power `E|x|^2 / n`.
    pub fn for_profile(profile: &CodeProfile, snr_db: f64) -> Self {
        Self::from_power(profile.mean_power(), snr_db)
    }

    pub fn noiseless(power: f64) -> Self {
        ChannelSpec {
            snr_db: f64::INFINITY,
            noise_var: 0.0,
            power,
        }
    }

    pub fn snr_linear(&self) -> f64 {
        self.power / self.noise_var
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "raw")]
    Raw,
    #[serde(rename = "tp")]
    TorusProjection,
    #[serde(rename = "ao")]
    AnglesOnly,
}

/// One decoder input encoding of a channel output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mode: FeatureMode,
    pub data: Vec<f64>,
}

fn check_symbol(s: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Domain(format!("source symbol {s} outside [-1, 1]")))
    }
}

/// Source symbol to curve parameter.
pub fn stretch(s: f64, mode: Stretch, n: usize) -> Result<f64> {
    check_symbol(s)?;
    Ok(s * mode.half_width(n))
}

/// Curve parameter back to source symbol, clamped to `[-1, 1]`.
pub fn unstretch(alpha: f64, mode: Stretch, n: usize) -> f64 {
    (alpha / mode.half_width(n)).clamp(-1.0, 1.0)
}

/// `x = x(alpha(s))`.
pub fn encode(profile: &CodeProfile, s: f64) -> Result<Vec<f64>> {
    let alpha = stretch(s, profile.stretch(), profile.n())?;
    Ok(evaluate_curve(profile, alpha))
}

/// `y = x + w`, `w ~ N(0, noise_var I)`.
pub fn awgn_channel<R: Rng + ?Sized>(x: &[f64], spec: &ChannelSpec, rng: &mut R) -> Vec<f64> {
    if spec.noise_var == 0.0 {
        return x.to_vec();
    }
    let sigma = spec.noise_var.sqrt();
    x.iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Uniform grid over `[-a, a]` including both ends.
pub(crate) fn alpha_grid(half_width: f64, points: usize) -> Vec<f64> {
    let step = 2.0 * half_width / (points - 1) as f64;
    (0..points).map(|j| -half_width + j as f64 * step).collect()
}

/// Correlation decoder over a precomputed codebook of curve points.
///
/// Maximizes `<y, x(alpha)> - |x(alpha)|^2 / 2`, which is the correlation
/// `sum r_i [y_{2i-1} cos(w_i a) + y_{2i} sin(w_i a)]` for even `n` and the
/// nearest curve point in general.
#[derive(Debug, Clone)]
pub struct MapDecoder {
    profile: CodeProfile,
    alphas: Vec<f64>,
    /// Codebook points, row-major.
    points: Vec<f64>,
    half_sq_norms: Vec<f64>,
}

impl MapDecoder {
    pub fn new(profile: &CodeProfile, grid_points: usize) -> Result<Self> {
        if grid_points < MIN_GRID_POINTS {
            return Err(Error::Domain(format!(
                "decoder grid of {grid_points} points is below {MIN_GRID_POINTS}"
            )));
        }
        let alphas = alpha_grid(profile.alpha_max(), grid_points);
        let mut points = Vec::with_capacity(grid_points * profile.n());
        let mut half_sq_norms = Vec::with_capacity(grid_points);
        for &a in &alphas {
            let x = evaluate_curve(profile, a);
            half_sq_norms.push(0.5 * x.iter().map(|v| v * v).sum::<f64>());
            points.extend(x);
        }
        Ok(MapDecoder {
            profile: profile.clone(),
            alphas,
            points,
            half_sq_norms,
        })
    }

    pub fn profile(&self) -> &CodeProfile {
        &self.profile
    }

    fn score(&self, y: &[f64], alpha: f64) -> f64 {
        let x = evaluate_curve(&self.profile, alpha);
        let corr: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
        corr - 0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    /// Best grid index by score; ties go to the lower index.
    fn grid_argmax(&self, y: &[f64]) -> usize {
        let n = y.len();
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (j, (row, h)) in self.points.chunks_exact(n).zip(&self.half_sq_norms).enumerate() {
            let v = row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - h;
            if v > best_val {
                best_val = v;
                best = j;
            }
        }
        best
    }

    /// Estimated curve parameter.
    pub fn decode_alpha(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.profile.n() {
            return Err(Error::Domain(format!(
                "channel output has {} entries, expected {}",
                y.len(),
                self.profile.n()
            )));
        }
        let j = self.grid_argmax(y);
        let lo = self.alphas[j.saturating_sub(1)];
        let hi = self.alphas[(j + 1).min(self.alphas.len() - 1)];
        let (a, neg) = golden_section_min(|a| Ok(-self.score(y, a)), lo, hi, REFINE_TOL)?;
        Ok(if -neg >= self.score(y, self.alphas[j]) {
            a
        } else {
            self.alphas[j]
        })
    }

    /// Source estimate in `[-1, 1]`.
    pub fn decode(&self, y: &[f64]) -> Result<f64> {
        let a = self.decode_alpha(y)?;
        Ok(unstretch(a, self.profile.stretch(), self.profile.n()))
    }
}

/// One-shot MAP decode of `y` over the profile's stretch image.
pub fn map_decode(profile: &CodeProfile, y: &[f64], grid_points: usize) -> Result<f64> {
    MapDecoder::new(profile, grid_points)?.decode(y)
}

fn require_even_pairs(y: &[f64]) -> Result<()> {
    if !y.len().is_multiple_of(2) || y.is_empty() {
        return Err(Error::Domain(format!(
            "pairwise features need an even-length output, got {}",
            y.len()
        )));
    }
    Ok(())
}

fn pair_angle(y: &[f64], i: usize) -> Result<f64> {
    let (c, s) = (y[2 * i], y[2 * i + 1]);
    if c.hypot(s) < 1e-12 {
        return Err(Error::UndefinedAngle { pair: i + 1 });
    }
    let eta = s.atan2(c);
    // (-pi, pi]
    Ok(if eta <= -std::f64::consts::PI { std::f64::consts::PI } else { eta })
}

/// Per-pair phases `eta_i = atan2(y_{2i}, y_{2i-1})`; amplitudes discarded.
pub fn angles_features(y: &[f64]) -> Result<FeatureVector> {
    require_even_pairs(y)?;
    let data = (0..y.len() / 2)
        .map(|i| pair_angle(y, i))
        .collect::<Result<_>>()?;
    Ok(FeatureVector {
        mode: FeatureMode::AnglesOnly,
        data,
    })
}

/// Projection onto the flat torus: each pair keeps its four-quadrant phase
/// and takes the known radius `r_i`.
pub fn torus_projection(profile: &CodeProfile, y: &[f64]) -> Result<FeatureVector> {
    if profile.is_odd() {
        return Err(Error::Domain("torus projection needs even n".into()));
    }
    if y.len() != profile.n() {
        return Err(Error::Domain(format!(
            "channel output has {} entries, expected {}",
            y.len(),
            profile.n()
        )));
    }
    let mut data = Vec::with_capacity(y.len());
    for (i, r) in profile.radii().iter().enumerate() {
        let (s, c) = pair_angle(y, i)?.sin_cos();
        data.push(r * c);
        data.push(r * s);
    }
    Ok(FeatureVector {
        mode: FeatureMode::TorusProjection,
        data,
    })
}

/// Repetition baseline before clamping: `s` scaled to per-use power `P`,
/// sent `n` times and estimated by the sample mean.
pub fn repetition_estimate<R: Rng + ?Sized>(n: usize, s: f64, spec: &ChannelSpec, rng: &mut R) -> Result<f64> {
    check_symbol(s)?;
    if n == 0 {
        return Err(Error::Domain("repetition needs at least one channel use".into()));
    }
    let amp = (spec.power / SOURCE_VARIANCE).sqrt();
    let x = vec![amp * s; n];
    let y = awgn_channel(&x, spec, rng);
    Ok(y.iter().sum::<f64>() / n as f64 / amp)
}

/// Repetition baseline decoded by the sample mean and clamped to `[-1, 1]`.
pub fn repetition_code<R: Rng + ?Sized>(n: usize, s: f64, spec: &ChannelSpec, rng: &mut R) -> Result<f64> {
    Ok(repetition_estimate(n, s, spec, rng)?.clamp(-1.0, 1.0))
}

/// Closed-form repetition SDR in dB before clamping: `10 log10(n SNR)`.
pub fn repetition_sdr_db(n: usize, snr_db: f64) -> f64 {
    snr_db + 10.0 * (n as f64).log10()
}

/// `SDR = sigma_s^2 / MSE` in dB from the total squared error.
pub fn sdr_db(sum_sq_error: f64, trials: usize) -> f64 {
    10.0 * (SOURCE_VARIANCE / (sum_sq_error / trials as f64)).log10()
}
