//! Simultaneous perturbation stochastic approximation over the unit sphere of
//! radii, maximizing the tube-packing objective.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::CodeProfile;
use crate::tube::{PackingObjective, DEFAULT_GRID_STEP};

/// Smallest admissible radius after a step.
pub const RADIUS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    /// Gain numerator in `a_k = a0 / (k + 1 + A)^alpha`.
    pub a0: f64,
    /// Stability constant `A`.
    pub big_a: f64,
    pub alpha_exp: f64,
    /// Perturbation numerator in `c_k = c0 / (k + 1)^gamma`.
    pub c0: f64,
    pub gamma_exp: f64,
    /// Stop once consecutive objective values differ by less than this...
    pub tolerance: f64,
    /// ...for this many iterations in a row.
    pub patience: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub grid_step: f64,
    /// Starting point; the symmetric point when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig {
            a0: 1.0,
            big_a: 10.0,
            alpha_exp: 0.602,
            c0: 0.01,
            gamma_exp: 0.101,
            tolerance: 1e-6,
            patience: 25,
            max_iters: 1500,
            seed: 0,
            grid_step: DEFAULT_GRID_STEP,
            initial: None,
        }
    }
}

impl SpsaConfig {
    pub fn gain(&self, k: usize) -> f64 {
        self.a0 / (k as f64 + 1.0 + self.big_a).powf(self.alpha_exp)
    }

    pub fn perturbation(&self, k: usize) -> f64 {
        self.c0 / (k as f64 + 1.0).powf(self.gamma_exp)
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.a0, self.c0, self.tolerance, self.grid_step];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("gains, tolerance and grid step must be positive".into()));
        }
        if self.alpha_exp <= 0.0 || self.gamma_exp <= 0.0 || self.big_a < 0.0 {
            return Err(Error::Config("gain sequences must decrease".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Tolerance,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub k: usize,
    pub params: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub iterates: Vec<Iterate>,
    pub terminated_reason: Termination,
}

impl OptimizationTrace {
    pub fn best(&self) -> &Iterate {
        // first maximum wins
        self.iterates
            .iter()
            .fold(&self.iterates[0], |best, it| if it.objective > best.objective { it } else { best })
    }

    /// `iter,J,p1,p2,...`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let width = self.iterates.first().map_or(0, |it| it.params.len());
        let mut header = vec!["iter".to_string(), "J".to_string()];
        header.extend((1..=width).map(|i| format!("p{i}")));
        w.write_record(&header)?;
        for it in &self.iterates {
            let mut row = vec![it.k.to_string(), it.objective.to_string()];
            row.extend(it.params.iter().map(|p| p.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Two-measurement gradient estimate:
/// `g_j = (J(r + c D) - J(r - c D)) / (2 c D_j)`.
pub fn spsa_gradient_estimate<F>(
    mut objective: F,
    r: &[f64],
    c_k: f64,
    perturbation: &[f64],
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if perturbation.len() != r.len() {
        return Err(Error::Domain("perturbation length differs from iterate".into()));
    }
    if perturbation.iter().any(|&d| d != 1.0 && d != -1.0) {
        return Err(Error::Domain("perturbation entries must be +1 or -1".into()));
    }
    let plus: Vec<f64> = r.iter().zip(perturbation).map(|(x, d)| x + c_k * d).collect();
    let minus: Vec<f64> = r.iter().zip(perturbation).map(|(x, d)| x - c_k * d).collect();
    let diff = objective(&plus)? - objective(&minus)?;
    Ok(perturbation.iter().map(|d| diff / (2.0 * c_k * d)).collect())
}

/// Map an arbitrary parameter vector to the feasible set: radii clamped to
/// [`RADIUS_FLOOR`], then unit norm for even `n`; for odd `n` the trailing
/// `b >= 0` joins the constraint `sum r^2 + pi^2 b^2 <= 1`.
pub fn project(params: &[f64], n: usize) -> Vec<f64> {
    let m = n / 2;
    let mut out: Vec<f64> = params.to_vec();
    out[..m].iter_mut().for_each(|r| *r = r.max(RADIUS_FLOOR));
    if n.is_multiple_of(2) {
        let norm = out.iter().map(|r| r * r).sum::<f64>().sqrt();
        out.iter_mut().for_each(|r| *r /= norm);
    } else {
        out[m] = out[m].max(0.0);
        let power = out[..m].iter().map(|r| r * r).sum::<f64>() + PI * PI * out[m] * out[m];
        if power > 1.0 {
            let s = power.sqrt();
            out.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

fn feasible(params: &[f64], n: usize) -> bool {
    let m = n / 2;
    let sum = params[..m].iter().map(|r| r * r).sum::<f64>();
    if n.is_multiple_of(2) {
        (sum - 1.0).abs() <= 1e-12
    } else {
        sum + PI * PI * params[m] * params[m] <= 1.0 + 1e-12
    }
}

/// Symmetric starting point: equal radii, and for odd `n` an equal share of
/// the power budget for the drift.
pub fn symmetric_start(n: usize) -> Vec<f64> {
    let m = n / 2;
    if n.is_multiple_of(2) {
        vec![(2.0 / n as f64).sqrt(); m]
    } else {
        let share = 1.0 / (m as f64 + 1.0);
        let mut v = vec![share.sqrt(); m];
        v.push(share.sqrt() / PI);
        v
    }
}

/// One seeded SPSA run. Returns the best iterate as a harmonic profile.
pub fn optimize_radii(n: usize, config: &SpsaConfig) -> Result<(CodeProfile, OptimizationTrace)> {
    if n < 3 {
        return Err(Error::Domain(format!("nothing to optimize for n = {n}")));
    }
    config.validate()?;
    let objective = PackingObjective::new(n, config.grid_step)?;
    let dim = objective.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut current = match &config.initial {
        Some(v) if v.len() == dim => project(v, n),
        Some(v) => {
            return Err(Error::Config(format!(
                "initial point has {} entries, expected {dim}",
                v.len()
            )))
        }
        None => symmetric_start(n),
    };
    let eval = |p: &[f64], k: usize| {
        objective
            .evaluate(&project(p, n))
            .map_err(|e| Error::Objective {
                iteration: k,
                source: Box::new(e),
            })
    };

    let mut value = eval(&current, 0)?;
    let mut iterates = vec![Iterate {
        k: 0,
        params: current.clone(),
        objective: value,
    }];
    let mut quiet = 0usize;
    let mut reason = Termination::MaxIters;
    for k in 0..config.max_iters {
        let delta: Vec<f64> = (0..dim)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let grad = spsa_gradient_estimate(|p| eval(p, k + 1), &current, config.perturbation(k), &delta)?;
        let a_k = config.gain(k);
        let stepped: Vec<f64> = current.iter().zip(&grad).map(|(x, g)| x + a_k * g).collect();
        current = project(&stepped, n);
        debug_assert!(feasible(&current, n));
        let next = eval(&current, k + 1)?;
        iterates.push(Iterate {
            k: k + 1,
            params: current.clone(),
            objective: next,
        });
        quiet = if (next - value).abs() < config.tolerance { quiet + 1 } else { 0 };
        value = next;
        if quiet >= config.patience.max(1) {
            reason = Termination::Tolerance;
            break;
        }
    }
    let trace = OptimizationTrace {
        iterates,
        terminated_reason: reason,
    };
    let profile = objective.profile(&trace.best().params)?;
    Ok((profile, trace))
}

/// Outcome of several independently seeded runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStart {
    pub profile: CodeProfile,
    pub trace: OptimizationTrace,
    pub best_seed: u64,
    /// Best objective reached by each seed, in seed order.
    pub seed_objectives: Vec<f64>,
}

/// Runs seeds `config.seed .. config.seed + starts` in parallel and keeps the
/// largest objective; ties go to the earliest seed.
pub fn optimize_multistart(n: usize, config: &SpsaConfig, starts: usize) -> Result<MultiStart> {
    if starts == 0 {
        return Err(Error::Config("at least one start is required".into()));
    }
    let runs: Vec<(u64, CodeProfile, OptimizationTrace)> = (0..starts as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SpsaConfig {
                seed: config.seed.wrapping_add(i),
                ..config.clone()
            };
            optimize_radii(n, &cfg).map(|(p, t)| (cfg.seed, p, t))
        })
        .collect::<Result<_>>()?;
    let seed_objectives: Vec<f64> = runs.iter().map(|(_, _, t)| t.best().objective).collect();
    let mut winner = 0;
    for (i, v) in seed_objectives.iter().enumerate() {
        if *v > seed_objectives[winner] {
            winner = i;
        }
    }
    let (best_seed, profile, trace) = runs.into_iter().nth(winner).expect("non-empty");
    Ok(MultiStart {
        profile,
        trace,
        best_seed,
        seed_objectives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_objective_is_exact_in_expectation() {
        let v = [0.3, -1.2, 2.0];
        let lin = |r: &[f64]| -> Result<f64> { Ok(r.iter().zip(&v).map(|(a, b)| a * b).sum()) };
        let r = [0.1, 0.2, 0.3];
        // average over all 8 sign patterns equals the true gradient
        let mut mean = [0.0; 3];
        for mask in 0..8u32 {
            let d: Vec<f64> = (0..3).map(|j| if mask >> j & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let g = spsa_gradient_estimate(lin, &r, 0.05, &d).unwrap();
            let inner: f64 = v.iter().zip(&d).map(|(a, b)| a * b).sum();
            for j in 0..3 {
                assert_relative_eq!(g[j], inner / d[j], max_relative = 1e-12);
                mean[j] += g[j] / 8.0;
            }
        }
        for j in 0..3 {
            assert_relative_eq!(mean[j], v[j], max_relative = 1e-12);
        }
    }

    #[test]
    fn quadratic_objective_directional_estimate() {
        let r0 = [0.4, -0.1];
        let quad = |r: &[f64]| -> Result<f64> {
            Ok(-r.iter().zip(&r0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        };
        let r = [1.0, 0.5];
        let d = [1.0, -1.0];
        let c = 1e-4;
        let g = spsa_gradient_estimate(quad, &r, c, &d).unwrap();
        let grad: Vec<f64> = r.iter().zip(&r0).map(|(a, b)| -2.0 * (a - b)).collect();
        // the estimate equals <grad, D> / D_j up to O(c^2) for a quadratic
        let along: f64 = grad.iter().zip(&d).map(|(a, b)| a * b).sum();
        for j in 0..2 {
            assert!((g[j] - along / d[j]).abs() < 10.0 * c);
        }
    }

    #[test]
    fn rejects_non_rademacher_perturbation() {
        let f = |_: &[f64]| -> Result<f64> { Ok(0.0) };
        assert!(spsa_gradient_estimate(f, &[0.0, 0.0], 0.1, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn packing_gradient_is_finite() {
        let obj = PackingObjective::new(4, 1e-4).unwrap();
        let r = [(2.0f64 / 3.0).sqrt(), (1.0f64 / 3.0).sqrt()];
        let g = spsa_gradient_estimate(|p| obj.evaluate(&project(p, 4)), &r, 0.01, &[1.0, -1.0]).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn projection_feasible() {
        let p = project(&[-0.3, 2.0, 0.1], 6);
        assert!(feasible(&p, 6));
        approx::assert_relative_eq!(p[0], RADIUS_FLOOR / (RADIUS_FLOOR * RADIUS_FLOOR + 4.01f64).sqrt(), max_relative = 1e-14);
        let q = project(&[2.0, 1.0], 3);
        assert!(feasible(&q, 3));
        let inside = project(&[0.5, 0.1], 3);
        assert_eq!(inside, vec![0.5, 0.1]);
    }

    #[test]
    fn gain_sequences_decrease() {
        let c = SpsaConfig::default();
        assert!(c.gain(0) > c.gain(1) && c.gain(1) > c.gain(100));
        assert!(c.perturbation(0) > c.perturbation(1));
        let small = SpsaConfig { a0: 0.01, ..SpsaConfig::default() };
        assert_relative_eq!(small.gain(0), 0.01 / 11f64.powf(0.602));
        assert_relative_eq!(small.perturbation(0), 0.01);
    }

    #[test]
    fn starting_at_optimum_does_not_regress() {
        let start = vec![(2.0f64 / 3.0).sqrt(), (1.0f64 / 3.0).sqrt()];
        let cfg = SpsaConfig {
            initial: Some(start.clone()),
            max_iters: 200,
            grid_step: 1e-3,
            ..SpsaConfig::default()
        };
        let (profile, trace) = optimize_radii(4, &cfg).unwrap();
        let j0 = trace.iterates[0].objective;
        assert!(trace.best().objective >= j0 - cfg.tolerance);
        assert_eq!(profile.n(), 4);
        for it in &trace.iterates {
            let s: f64 = it.params.iter().map(|r| r * r).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SpsaConfig {
            max_iters: 60,
            grid_step: 1e-3,
            seed: 7,
            ..SpsaConfig::default()
        };
        let a = optimize_radii(6, &cfg).unwrap();
        let b = optimize_radii(6, &cfg).unwrap();
        assert_eq!(a, b);
        let best = a.1.best().objective;
        assert!(a.1.iterates.iter().all(|it| it.objective <= best));
    }

    #[test]
    fn odd_dimension_keeps_power_constraint() {
        let cfg = SpsaConfig {
            max_iters: 100,
            grid_step: 1e-3,
            ..SpsaConfig::default()
        };
        let (profile, trace) = optimize_radii(5, &cfg).unwrap();
        assert_eq!(profile.n(), 5);
        assert!(trace.iterates.iter().all(|it| feasible(&it.params, 5)));
        assert!(trace.best().objective >= trace.iterates[0].objective);
    }

    #[test]
    fn trace_csv_columns() {
        let t = OptimizationTrace {
            iterates: vec![Iterate { k: 0, params: vec![0.6, 0.8], objective: 0.25 }],
            terminated_reason: Termination::MaxIters,
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,J,p1,p2\n0,0.25,0.6,0.8\n");
    }
}
