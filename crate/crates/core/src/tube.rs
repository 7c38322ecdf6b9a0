//! Tube geometry: circumradius function, global circumradius (tube radius),
//! hypersphere volume coefficients, packing density and the packing objective.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::curve::{self, dot, norm};
use crate::error::{Error, Result};
use crate::numeric::golden_section_min;
use crate::profile::{CodeProfile, Stretch};

/// Default spacing of the `delta` grid.
pub const DEFAULT_GRID_STEP: f64 = 1e-4;

/// Below this separation the analytic `delta -> 0` limit is returned.
pub const NEAR_ZERO_DELTA: f64 = 1e-6;

const GOLDEN_TOL: f64 = 1e-8;
const DEGENERACY_TOL: f64 = 1e-15;

/// Derived geometry of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeMetrics {
    pub rho_global: f64,
    /// Separation where the minimum is attained; `0` encodes the local limit.
    pub argmin_delta: f64,
    pub path_length: f64,
    pub density: f64,
}

/// Circumradius sampled over a grid of separations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircumradiusProfile {
    pub deltas: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub limit_at_zero: f64,
}

impl CircumradiusProfile {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta", "rho"])?;
        w.write_record(["0".to_string(), self.limit_at_zero.to_string()])?;
        for (d, r) in self.deltas.iter().zip(&self.rho_values) {
            w.write_record([d.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(A, B) = (sum r^2 w^2 + b^2, sum r^2 w^4)`.
fn limit_terms(radii: &[f64], freqs: &[u32], b: f64) -> (f64, f64) {
    let mut a = b * b;
    let mut bb = 0.0;
    for (r, &w) in radii.iter().zip(freqs) {
        let w2 = (w as f64) * (w as f64);
        a += r * r * w2;
        bb += r * r * w2 * w2;
    }
    (a, bb)
}

fn limit_rho_sq(radii: &[f64], freqs: &[u32], b: f64) -> f64 {
    let (a, bb) = limit_terms(radii, freqs, b);
    a * a / bb
}

/// `x - sin x` without cancellation for small `x`.
fn sin_remainder(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        return x - x.sin();
    }
    let x2 = x * x;
    let mut term = x * x2 / 6.0;
    let mut sum = term;
    let mut k = 3.0;
    while term.abs() > 1e-18 * sum.abs() {
        term *= -x2 / ((k + 1.0) * (k + 2.0));
        sum += term;
        k += 2.0;
    }
    sum
}

/// `rho^2 = t1^2 t2 / (4 G)` where `t1 = |d|^2`, `t2 = |v|^2` for the chord
/// `d` and tangent `v`, and `G = t1 t2 - <d, v>^2` is summed as squared
/// 2x2 minors of `(d, v)`. With `s_i = sin(w_i delta / 2)` and
/// `g_i = w_i delta - sin(w_i delta)`:
/// `G = 4 t2 sum r_i^2 s_i^4 + b^2 sum r_i^2 g_i^2
///      + sum_{i<k} r_i^2 r_k^2 (w_i g_k - w_k g_i)^2`.
fn rho_sq_from_parts(r2: &[f64], freqs: &[u32], b2: f64, t2: f64, half_sin_sq: &[f64], rem: &[f64], delta: f64) -> Result<f64> {
    let mut t1 = b2 * delta * delta;
    let mut quartic = 0.0;
    let mut drift = 0.0;
    for i in 0..r2.len() {
        t1 += 4.0 * r2[i] * half_sin_sq[i];
        quartic += r2[i] * half_sin_sq[i] * half_sin_sq[i];
        drift += r2[i] * rem[i] * rem[i];
    }
    let mut cross = 0.0;
    for i in 0..r2.len() {
        let wi = freqs[i] as f64;
        for k in i + 1..r2.len() {
            let wk = freqs[k] as f64;
            let minor = wi * rem[k] - wk * rem[i];
            cross += r2[i] * r2[k] * minor * minor;
        }
    }
    let gram = 4.0 * t2 * quartic + b2 * drift + cross;
    if !(gram > DEGENERACY_TOL * t1 * t2) {
        return Err(Error::GeometricDegeneracy { delta });
    }
    Ok(t1 * t1 * t2 / (4.0 * gram))
}

fn tangent_sq(r2: &[f64], freqs: &[u32], b2: f64) -> f64 {
    b2 + r2
        .iter()
        .zip(freqs)
        .map(|(r2, &w)| r2 * (w as f64) * (w as f64))
        .sum::<f64>()
}

fn rho_sq_raw(radii: &[f64], freqs: &[u32], b: f64, delta: f64) -> Result<f64> {
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let mut half_sin_sq = Vec::with_capacity(freqs.len());
    let mut rem = Vec::with_capacity(freqs.len());
    for &w in freqs {
        let w = w as f64;
        let h = (0.5 * w * delta).sin();
        half_sin_sq.push(h * h);
        rem.push(sin_remainder(w * delta));
    }
    let b2 = b * b;
    rho_sq_from_parts(&r2, freqs, b2, tangent_sq(&r2, freqs, b2), &half_sin_sq, &rem, delta)
}

/// Fold a separation onto `[0, pi]` for periodic curves, where
/// `rho^2(delta) = rho^2(2 pi - delta)`.
fn fold(profile_periodic: bool, delta: f64) -> f64 {
    if profile_periodic && delta > PI {
        TAU - delta
    } else {
        delta
    }
}

/// Squared circumradius `rho^2(delta)` of the circle through `x(a + delta)`
/// and tangent to the curve at `x(a)`; independent of `a`.
pub fn circumradius_sq_delta(profile: &CodeProfile, delta: f64) -> Result<f64> {
    if !(0.0..=TAU + 1e-12).contains(&delta) {
        return Err(Error::Domain(format!("delta = {delta} outside (0, 2 pi]")));
    }
    let d = fold(profile.is_periodic(), delta);
    let (radii, freqs, b) = (profile.radii(), profile.frequencies(), profile.drift());
    if d < NEAR_ZERO_DELTA {
        return Ok(limit_rho_sq(radii, freqs, b));
    }
    rho_sq_raw(radii, freqs, b, d)
}

/// Circumradius from two points and the tangent at the second, evaluated
/// directly from curve points rather than the `delta` closed form.
pub fn circumradius_tangent_point(profile: &CodeProfile, alpha1: f64, alpha2: f64) -> Result<f64> {
    let p1 = curve::evaluate_curve(profile, alpha1);
    let p2 = curve::evaluate_curve(profile, alpha2);
    let t = curve::curve_derivative(profile, alpha2, 1);
    let d: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a - b).collect();
    let dn = norm(&d);
    if alpha1 == alpha2 || dn < 1e-12 {
        return Err(Error::Domain(format!(
            "points at alpha = {alpha1} and {alpha2} coincide"
        )));
    }
    let tn = norm(&t);
    let cos = dot(&d, &t) / (dn * tn);
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    if sin == 0.0 {
        return Err(Error::GeometricDegeneracy {
            delta: alpha1 - alpha2,
        });
    }
    Ok(dn / (2.0 * sin))
}

/// Precomputed trigonometric table over a uniform `delta` grid for one
/// frequency vector. Reused across many radii evaluations.
#[derive(Debug, Clone)]
pub struct DeltaGrid {
    freqs: Vec<u32>,
    step: f64,
    deltas: Vec<f64>,
    /// `sin(w_i d_j / 2)^2`, row-major by grid point.
    half_sin_sq: Vec<f64>,
    /// `w_i d_j - sin(w_i d_j)`, row-major by grid point.
    remainder: Vec<f64>,
    periodic: bool,
}

impl DeltaGrid {
    /// Grid `step, 2 step, ...` up to `pi` for periodic curves and `2 pi`
    /// otherwise.
    pub fn new(freqs: &[u32], step: f64, periodic: bool) -> Result<Self> {
        if !(step > 0.0 && step <= 1e-3) {
            return Err(Error::Domain(format!("grid step {step} must lie in (0, 1e-3]")));
        }
        let upper = if periodic { PI } else { TAU };
        let count = (upper / step).floor() as usize;
        let deltas: Vec<f64> = (1..=count).map(|j| j as f64 * step).collect();
        let m = freqs.len();
        let mut half_sin_sq = Vec::with_capacity(count * m);
        let mut remainder = Vec::with_capacity(count * m);
        for &d in &deltas {
            for &w in freqs {
                let w = w as f64;
                let h = (0.5 * w * d).sin();
                half_sin_sq.push(h * h);
                remainder.push(sin_remainder(w * d));
            }
        }
        Ok(DeltaGrid {
            freqs: freqs.to_vec(),
            step,
            deltas,
            half_sin_sq,
            remainder,
            periodic,
        })
    }

    pub fn for_profile(profile: &CodeProfile, step: f64) -> Result<Self> {
        Self::new(profile.frequencies(), step, profile.is_periodic())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn upper(&self) -> f64 {
        if self.periodic {
            PI
        } else {
            TAU
        }
    }

    /// Minimum of `rho^2` over the grid and the `delta -> 0` limit, then
    /// golden-section refinement around the best grid cell. Returns
    /// `(rho_G^2, argmin delta)`; ties go to the smaller separation.
    pub fn min_rho_sq(&self, radii: &[f64], b: f64) -> Result<(f64, f64)> {
        let m = self.freqs.len();
        debug_assert_eq!(radii.len(), m);
        let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
        let b2 = b * b;
        let t2 = tangent_sq(&r2, &self.freqs, b2);

        let mut best_val = limit_rho_sq(radii, &self.freqs, b);
        let mut best_idx: Option<usize> = None;
        for (j, &d) in self.deltas.iter().enumerate() {
            let row = j * m..(j + 1) * m;
            let v = rho_sq_from_parts(
                &r2,
                &self.freqs,
                b2,
                t2,
                &self.half_sin_sq[row.clone()],
                &self.remainder[row],
                d,
            )?;
            if v < best_val {
                best_val = v;
                best_idx = Some(j);
            }
        }
        let Some(j) = best_idx else {
            return Ok((best_val, 0.0));
        };

        let lo = if j == 0 { 0.5 * self.step } else { self.deltas[j - 1] };
        let hi = self.deltas.get(j + 1).copied().unwrap_or(self.upper());
        let f = |d: f64| rho_sq_raw(radii, &self.freqs, b, d);
        let (d_star, v_star) = golden_section_min(f, lo, hi, GOLDEN_TOL)?;
        if v_star < best_val {
            Ok((v_star, d_star))
        } else {
            Ok((best_val, self.deltas[j]))
        }
    }
}

/// Tube radius `rho_G` and the separation attaining it.
pub fn global_circumradius(profile: &CodeProfile, grid_step: f64) -> Result<(f64, f64)> {
    let grid = DeltaGrid::for_profile(profile, grid_step)?;
    let (v, d) = grid.min_rho_sq(profile.radii(), profile.drift())?;
    Ok((v.sqrt(), d))
}

/// `rho(delta)` over a uniform grid on `(0, 2 pi]`.
pub fn circumradius_profile(profile: &CodeProfile, step: f64) -> Result<CircumradiusProfile> {
    let count = (TAU / step).floor() as usize;
    let mut deltas = Vec::with_capacity(count);
    let mut rho_values = Vec::with_capacity(count);
    for j in 1..=count {
        let d = j as f64 * step;
        deltas.push(d);
        rho_values.push(circumradius_sq_delta(profile, d)?.sqrt());
    }
    Ok(CircumradiusProfile {
        deltas,
        rho_values,
        limit_at_zero: limit_rho_sq(profile.radii(), profile.frequencies(), profile.drift()).sqrt(),
    })
}

fn double_factorial(n: usize) -> f64 {
    (1..=n).rev().step_by(2).map(|k| k as f64).product()
}

/// Volume of the unit `n`-ball, `C_n = pi^{n/2} / Gamma(n/2 + 1)`, from the
/// even and odd closed forms.
pub fn sphere_volume_coeff(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("sphere dimension must be >= 1".into()));
    }
    Ok(if n.is_multiple_of(2) {
        let half = n / 2;
        PI.powi(half as i32) / (1..=half).map(|k| k as f64).product::<f64>()
    } else {
        2f64.powi(n.div_ceil(2) as i32) * PI.powi(((n - 1) / 2) as i32) / double_factorial(n)
    })
}

fn density_from(n: usize, path_length: f64, rho: f64) -> f64 {
    let cn1 = sphere_volume_coeff(n - 1).expect("n >= 2");
    let cn = sphere_volume_coeff(n).expect("n >= 2");
    path_length * cn1 * rho.powi(n as i32 - 1) / (cn * (1.0 + rho).powi(n as i32))
}

/// Full tube metrics at the given grid step.
pub fn tube_metrics(profile: &CodeProfile, grid_step: f64) -> Result<TubeMetrics> {
    let (rho_global, argmin_delta) = global_circumradius(profile, grid_step)?;
    let path_length = curve::path_length(profile);
    Ok(TubeMetrics {
        rho_global,
        argmin_delta,
        path_length,
        density: density_from(profile.n(), path_length, rho_global),
    })
}

/// Tube volume over bounding-ball volume at the default grid step.
pub fn packing_density(profile: &CodeProfile) -> Result<f64> {
    Ok(tube_metrics(profile, DEFAULT_GRID_STEP)?.density)
}

impl TubeMetrics {
    /// Density recomputed from the other fields.
    pub fn density_for(&self, n: usize) -> f64 {
        density_from(n, self.path_length, self.rho_global)
    }
}

/// Tube-packing objective `J = L rho_G^{n-1} / (1 + rho_G)^n` for harmonic
/// frequencies `w_i = i`, with the grid table cached between calls.
#[derive(Debug, Clone)]
pub struct PackingObjective {
    n: usize,
    grid: DeltaGrid,
}

impl PackingObjective {
    pub fn new(n: usize, grid_step: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("dimension {n} < 2")));
        }
        let m = n / 2;
        let freqs: Vec<u32> = (1..=m as u32).collect();
        // odd n drifts, so the grid covers (0, 2 pi]
        let grid = DeltaGrid::new(&freqs, grid_step, n.is_multiple_of(2))?;
        Ok(PackingObjective { n, grid })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of free parameters: `n/2` radii, plus `b` for odd `n`.
    pub fn dim(&self) -> usize {
        self.n / 2 + self.n % 2
    }

    /// Build the profile a parameter vector describes.
    pub fn profile(&self, params: &[f64]) -> Result<CodeProfile> {
        let m = self.n / 2;
        if params.len() != self.dim() {
            return Err(Error::Domain(format!(
                "expected {} parameters, got {}",
                self.dim(),
                params.len()
            )));
        }
        if self.n.is_multiple_of(2) {
            CodeProfile::harmonic(params.to_vec())
        } else {
            CodeProfile::new(
                self.n,
                params[..m].to_vec(),
                (1..=m as u32).collect(),
                Some(params[m]),
                Stretch::FullCircle,
            )
        }
    }

    /// `J` at the parameter vector (radii, then `b` for odd `n`).
    pub fn evaluate(&self, params: &[f64]) -> Result<f64> {
        let profile = self.profile(params)?;
        let (rho_sq, _) = self.grid.min_rho_sq(profile.radii(), profile.drift())?;
        let rho = rho_sq.sqrt();
        let len = curve::path_length(&profile);
        Ok(len * rho.powi(self.n as i32 - 1) / (1.0 + rho).powi(self.n as i32))
    }
}

/// One-shot tube-packing objective for unit-norm radii.
pub fn packing_objective(radii: &[f64], n: usize) -> Result<f64> {
    if radii.len() * 2 != n {
        return Err(Error::Domain(format!(
            "{} radii do not describe dimension {n}",
            radii.len()
        )));
    }
    PackingObjective::new(n, DEFAULT_GRID_STEP)?.evaluate(radii)
}
