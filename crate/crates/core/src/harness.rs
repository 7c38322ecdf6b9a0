//! End-to-end experiments: SDR-versus-SNR Monte Carlo sweeps, tube geometry
//! export and the table reproduction report.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{required_source_samples, TABLE_II};
use crate::codec::{
    angles_features, awgn_channel, encode, repetition_code, sdr_db, torus_projection, AnglesDecoder,
    ChannelSpec, MapDecoder, DEFAULT_GRID_POINTS,
};
use crate::curve::{evaluate_curve, frenet_frame};
use crate::error::{Error, Result};
use crate::mlp::{MlpDecoder, MlpWeights};
use crate::profile::CodeProfile;
use crate::spsa::{optimize_multistart, SpsaConfig};
use crate::tube::{global_circumradius, tube_metrics, DEFAULT_GRID_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecoderKind {
    #[serde(rename = "RawMAP")]
    RawMap,
    #[serde(rename = "TP_MAP")]
    TpMap,
    #[serde(rename = "AO_MAP")]
    AoMap,
    #[serde(rename = "MLP_Raw")]
    MlpRaw,
    #[serde(rename = "MLP_TP")]
    MlpTp,
    #[serde(rename = "MLP_AO")]
    MlpAo,
    Repetition,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 7] = [
        DecoderKind::RawMap,
        DecoderKind::TpMap,
        DecoderKind::AoMap,
        DecoderKind::MlpRaw,
        DecoderKind::MlpTp,
        DecoderKind::MlpAo,
        DecoderKind::Repetition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::RawMap => "RawMAP",
            DecoderKind::TpMap => "TP_MAP",
            DecoderKind::AoMap => "AO_MAP",
            DecoderKind::MlpRaw => "MLP_Raw",
            DecoderKind::MlpTp => "MLP_TP",
            DecoderKind::MlpAo => "MLP_AO",
            DecoderKind::Repetition => "Repetition",
        }
    }

    pub fn is_mlp(self) -> bool {
        matches!(self, DecoderKind::MlpRaw | DecoderKind::MlpTp | DecoderKind::MlpAo)
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DecoderKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown decoder {s:?}")))
    }
}

/// One (profile, decoder, SNR) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub profile_id: String,
    pub decoder: DecoderKind,
    pub snr_db: f64,
    pub trials: usize,
    /// Absent on error rows.
    pub sdr_db: Option<f64>,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub profiles: Vec<PathBuf>,
    pub snr_grid_db: Vec<f64>,
    pub decoders: Vec<DecoderKind>,
    pub trials: usize,
    pub seed: u64,
    pub grid_points: usize,
    /// Trained networks for the MLP decoders.
    pub mlp_weights: BTreeMap<DecoderKind, PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            profiles: Vec::new(),
            snr_grid_db: (-10..=10).map(f64::from).collect(),
            decoders: vec![DecoderKind::RawMap, DecoderKind::Repetition],
            trials: 100_000,
            seed: 0,
            grid_points: DEFAULT_GRID_POINTS,
            mlp_weights: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_grid_db.is_empty() || self.decoders.is_empty() {
            return Err(Error::Config("empty SNR grid or decoder list".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        Ok(())
    }
}

/// Decoder state shared by every trial of a cell.
pub enum CellDecoder {
    Map(MapDecoder),
    TorusMap(MapDecoder),
    Angles(AnglesDecoder),
    Mlp(Box<MlpDecoder>),
    Repetition,
}

impl CellDecoder {
    pub fn prepare(
        kind: DecoderKind,
        profile: &CodeProfile,
        spec: &ChannelSpec,
        grid_points: usize,
        mlp: Option<&MlpDecoder>,
    ) -> Result<Self> {
        Ok(match kind {
            DecoderKind::RawMap => CellDecoder::Map(MapDecoder::new(profile, grid_points)?),
            DecoderKind::TpMap => {
                if profile.is_odd() {
                    return Err(Error::Domain("torus projection needs even n".into()));
                }
                CellDecoder::TorusMap(MapDecoder::new(profile, grid_points)?)
            }
            DecoderKind::AoMap => CellDecoder::Angles(AnglesDecoder::new(profile, spec.noise_var, grid_points)?),
            DecoderKind::Repetition => CellDecoder::Repetition,
            k => {
                let dec = mlp.ok_or_else(|| Error::Config(format!("no trained network for {k}")))?;
                CellDecoder::Mlp(Box::new(dec.clone()))
            }
        })
    }

    fn trial<R: Rng>(&self, profile: &CodeProfile, spec: &ChannelSpec, rng: &mut R) -> Result<f64> {
        let s: f64 = rng.random_range(-1.0..=1.0);
        if let CellDecoder::Repetition = self {
            return Ok(repetition_code(profile.n(), s, spec, rng)? - s);
        }
        let y = awgn_channel(&encode(profile, s)?, spec, rng);
        let estimate = match self {
            CellDecoder::Map(d) => d.decode(&y)?,
            CellDecoder::TorusMap(d) => d.decode(&torus_projection(profile, &y)?.data)?,
            CellDecoder::Angles(d) => d.decode(&angles_features(&y)?.data)?,
            CellDecoder::Mlp(d) => d.decode(&y)?,
            CellDecoder::Repetition => unreachable!(),
        };
        Ok(estimate - s)
    }
}

/// Generator for trial `t` of the cell seeded by `seed`; independent of the
/// order in which trials run.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// SDR in dB over `trials` draws. Squared errors are summed in trial order,
/// so the result does not depend on the worker count.
pub fn monte_carlo_sdr(
    profile: &CodeProfile,
    decoder: &CellDecoder,
    spec: &ChannelSpec,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let errors: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| decoder.trial(profile, spec, &mut trial_rng(seed, t)))
        .collect::<Result<_>>()?;
    let sse: f64 = errors.iter().map(|e| e * e).sum();
    Ok(sdr_db(sse, trials))
}

/// Per-cell seed from the sweep seed and the cell identity.
pub fn cell_seed(seed: u64, profile_id: &str, decoder: DecoderKind, snr_db: f64) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&seed.to_le_bytes());
    feed(profile_id.as_bytes());
    feed(decoder.name().as_bytes());
    feed(&snr_db.to_bits().to_le_bytes());
    h
}

/// A profile with the identifier used in sweep records.
#[derive(Debug, Clone)]
pub struct NamedProfile {
    pub id: String,
    pub profile: CodeProfile,
}

fn run_cell(
    named: &NamedProfile,
    kind: DecoderKind,
    snr_db: f64,
    config: &ExperimentConfig,
    mlp: &BTreeMap<DecoderKind, MlpDecoder>,
) -> SweepRecord {
    let seed = cell_seed(config.seed, &named.id, kind, snr_db);
    let spec = ChannelSpec::for_profile(&named.profile, snr_db);
    let result = CellDecoder::prepare(kind, &named.profile, &spec, config.grid_points, mlp.get(&kind))
        .and_then(|d| monte_carlo_sdr(&named.profile, &d, &spec, config.trials, seed));
    let (sdr_db, error) = match result {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    SweepRecord {
        profile_id: named.id.clone(),
        decoder: kind,
        snr_db,
        trials: config.trials,
        sdr_db,
        seed,
        error,
    }
}

/// Sweep in-memory profiles. MLP decoders are looked up in `mlp` and cells
/// without one become error rows.
pub fn run_sweep_profiles(
    profiles: &[NamedProfile],
    config: &ExperimentConfig,
    mlp: &BTreeMap<DecoderKind, MlpDecoder>,
) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let mut out = Vec::new();
    for named in profiles {
        for &kind in &config.decoders {
            for &snr in &config.snr_grid_db {
                out.push(run_cell(named, kind, snr, config, mlp));
            }
        }
    }
    Ok(out)
}

fn profile_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Load the configured profiles and networks and sweep every cell.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    if config.profiles.is_empty() {
        return Err(Error::Config("no profiles configured".into()));
    }
    let profiles = config
        .profiles
        .iter()
        .map(|p| {
            Ok(NamedProfile {
                id: profile_id(p),
                profile: CodeProfile::load(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for named in &profiles {
        let mut mlp = BTreeMap::new();
        for (&kind, path) in &config.mlp_weights {
            if !config.decoders.contains(&kind) {
                continue;
            }
            // a network that does not fit this profile only fails its own cells
            if let Ok(dec) = MlpWeights::load(path).and_then(|w| MlpDecoder::new(&named.profile, w)) {
                mlp.insert(kind, dec);
            }
        }
        out.extend(run_sweep_profiles(std::slice::from_ref(named), config, &mlp)?);
    }
    Ok(out)
}

/// Append records to a CSV, writing the header only for a new file, and
/// push the configuration to the JSON sidecar next to it.
pub fn append_sweep_results(path: &Path, config: &ExperimentConfig, records: &[SweepRecord]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(["profile_id", "decoder", "snr_db", "trials", "sdr_db", "seed", "error"])?;
    }
    for r in records {
        w.write_record([
            r.profile_id.clone(),
            r.decoder.to_string(),
            r.snr_db.to_string(),
            r.trials.to_string(),
            r.sdr_db.map(|v| v.to_string()).unwrap_or_default(),
            r.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let sidecar = path.with_extension("json");
    let mut runs: Vec<serde_json::Value> = match std::fs::read_to_string(&sidecar) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => Vec::new(),
    };
    runs.push(serde_json::json!({
        "config": config,
        "cells": records.iter().map(|r| serde_json::json!({
            "profile_id": r.profile_id,
            "decoder": r.decoder,
            "snr_db": r.snr_db,
            "seed": r.seed,
        })).collect::<Vec<_>>(),
    }));
    std::fs::write(&sidecar, serde_json::to_string_pretty(&runs)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    #[serde(rename = "centerline")]
    Centerline,
    #[serde(rename = "surface")]
    Surface,
}

/// A sampled point with the curve parameter of its centerline anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryPoint {
    pub kind: PointKind,
    pub alpha: f64,
    pub coords: Vec<f64>,
}

/// Centerline and tube surface samples. For `n = 4` the surface is the
/// section by the hyperplane `x_4 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeGeometry {
    pub n: usize,
    pub rho: f64,
    pub points: Vec<GeometryPoint>,
}

impl TubeGeometry {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["kind".to_string(), "alpha".to_string()];
        header.extend((1..=self.n).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for p in &self.points {
            let kind = match p.kind {
                PointKind::Centerline => "centerline",
                PointKind::Surface => "surface",
            };
            let mut row = vec![kind.to_string(), p.alpha.to_string()];
            row.extend(p.coords.iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn combine(base: &[f64], terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = base.to_vec();
    for (c, v) in terms {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += c * x;
        }
    }
    out
}

/// Sample the centerline at `samples` parameters over its image and the tube
/// surface of radius `rho_G` around it.
pub fn export_tube_geometry(profile: &CodeProfile, samples: usize) -> Result<TubeGeometry> {
    let n = profile.n();
    if !(2..=4).contains(&n) {
        return Err(Error::Domain(format!("tube export supports n = 2, 3, 4, got {n}")));
    }
    if samples < 2 {
        return Err(Error::Domain("at least two samples are required".into()));
    }
    let (rho, _) = global_circumradius(profile, DEFAULT_GRID_STEP)?;
    let a_max = profile.alpha_max();
    let ring = samples.clamp(8, 64);
    let mut points = Vec::new();
    for j in 0..samples {
        let alpha = -a_max + 2.0 * a_max * j as f64 / (samples - 1) as f64;
        let x = evaluate_curve(profile, alpha);
        points.push(GeometryPoint {
            kind: PointKind::Centerline,
            alpha,
            coords: x.clone(),
        });
        let frame = frenet_frame(profile, alpha, n)?;
        let e = &frame.vectors;
        let mut surface = |coords: Vec<f64>| {
            points.push(GeometryPoint {
                kind: PointKind::Surface,
                alpha,
                coords,
            })
        };
        match n {
            2 => {
                surface(combine(&x, &[(rho, &e[1])]));
                surface(combine(&x, &[(-rho, &e[1])]));
            }
            3 => {
                for k in 0..ring {
                    let phi = std::f64::consts::TAU * k as f64 / ring as f64;
                    surface(combine(&x, &[(rho * phi.cos(), &e[1]), (rho * phi.sin(), &e[2])]));
                }
            }
            _ => {
                // unit normals u with x_4 + rho u_4 = 0: a circle in the normal space
                let a = [e[1][3], e[2][3], e[3][3]];
                let k2 = a.iter().map(|v| v * v).sum::<f64>();
                let c = -x[3] / rho;
                if k2 < 1e-24 || c * c > k2 {
                    continue;
                }
                let k = k2.sqrt();
                let a_hat = [a[0] / k, a[1] / k, a[2] / k];
                // orthonormal pair spanning the complement of a_hat
                let pivot = if a_hat[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let d: f64 = pivot.iter().zip(&a_hat).map(|(p, q)| p * q).sum();
                let mut b1 = [pivot[0] - d * a_hat[0], pivot[1] - d * a_hat[1], pivot[2] - d * a_hat[2]];
                let nb = b1.iter().map(|v| v * v).sum::<f64>().sqrt();
                b1.iter_mut().for_each(|v| *v /= nb);
                let b2 = [
                    a_hat[1] * b1[2] - a_hat[2] * b1[1],
                    a_hat[2] * b1[0] - a_hat[0] * b1[2],
                    a_hat[0] * b1[1] - a_hat[1] * b1[0],
                ];
                let along = c / k;
                let across = (1.0 - along * along).max(0.0).sqrt();
                for m in 0..ring {
                    let th = std::f64::consts::TAU * m as f64 / ring as f64;
                    let w: Vec<f64> = (0..3)
                        .map(|i| along * a_hat[i] + across * (th.cos() * b1[i] + th.sin() * b2[i]))
                        .collect();
                    let mut p = combine(&x, &[(rho * w[0], &e[1]), (rho * w[1], &e[2]), (rho * w[2], &e[3])]);
                    p[3] = 0.0;
                    surface(p);
                }
            }
        }
    }
    Ok(TubeGeometry { n, rho, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Known disagreement with a published value; reported, not failed.
    Flagged,
}

/// One golden comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    /// `published` for printed table values, `oracle` for independently
    /// computed references.
    pub source: String,
    pub status: CheckStatus,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub entries: Vec<ReportEntry>,
}

impl TableReport {
    fn check(&mut self, name: impl Into<String>, value: f64, expected: f64, tolerance: f64, source: &str) {
        let status = if (value - expected).abs() <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self.entries.push(ReportEntry {
            name: name.into(),
            value,
            expected,
            tolerance,
            source: source.into(),
            status,
            note: None,
        });
    }

    fn flag(&mut self, name: impl Into<String>, value: f64, expected: f64, note: &str) {
        self.entries.push(ReportEntry {
            name: name.into(),
            value,
            expected,
            tolerance: 0.0,
            source: "published".into(),
            status: CheckStatus::Flagged,
            note: Some(note.into()),
        });
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.status == CheckStatus::Fail).count()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "status", "value", "expected", "tolerance", "source", "note"])?;
        for e in &self.entries {
            w.write_record([
                e.name.clone(),
                format!("{:?}", e.status),
                e.value.to_string(),
                e.expected.to_string(),
                e.tolerance.to_string(),
                e.source.clone(),
                e.note.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOptions {
    pub spsa: SpsaConfig,
    pub starts: usize,
    pub dimensions: Vec<usize>,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            spsa: SpsaConfig::default(),
            starts: 10,
            dimensions: vec![4, 6, 8],
        }
    }
}

/// Published optimized-code rows: `(n, radii, rho_G, density)`.
pub const TABLE_I: [(usize, &[f64], f64, f64); 3] = [
    (4, &[0.8165, 0.5774], 0.8339, 0.3783),
    (6, &[0.5835, 0.6463, 0.4918], 0.7614, 0.1122),
    (8, &[0.5125, 0.5162, 0.5551, 0.4035], 0.7541, 0.0293),
];

const RHO_N4_NOTE: &str = "the printed radii give rho_G = 0.8165 by grid minimization; \
rho_G = 0.8339 would imply density 0.3867, while 0.8165 implies 0.3771, closer to the printed 0.3783";

/// Optimize the tabulated dimensions, recompute the digital comparison and
/// diff both against the embedded values.
pub fn reproduce_tables(options: &ReproduceOptions) -> Result<TableReport> {
    let mut report = TableReport::default();

    let printed = CodeProfile::harmonic_normalized(TABLE_I[0].1)?;
    let (rho_printed, _) = global_circumradius(&printed, DEFAULT_GRID_STEP)?;
    report.check("n=4 printed radii rho_G", rho_printed, 0.816496580927726, 5e-4, "oracle");
    report.flag("n=4 printed radii rho_G", rho_printed, TABLE_I[0].2, RHO_N4_NOTE);

    for &(n, radii, rho, density) in TABLE_I.iter() {
        if !options.dimensions.contains(&n) {
            continue;
        }
        let best = optimize_multistart(n, &options.spsa, options.starts)?;
        let metrics = tube_metrics(&best.profile, options.spsa.grid_step)?;
        report.check(format!("n={n} density"), metrics.density, density, 0.01, "published");
        if n == 4 {
            for (i, (got, want)) in best.profile.radii().iter().zip(radii).enumerate() {
                report.check(format!("n=4 r{}", i + 1), *got, *want, 0.02, "published");
            }
            report.flag("n=4 rho_G", metrics.rho_global, rho, RHO_N4_NOTE);
        } else {
            report.check(format!("n={n} rho_G"), metrics.rho_global, rho, 0.02, "published");
        }
    }

    for &(n, snr, sdr, rate, ns3, ns6) in TABLE_II.iter() {
        let rel = if n == 4 { 0.05 } else { 0.03 };
        for (eps, want) in [(1e-3, ns3), (1e-6, ns6)] {
            let row = required_source_samples(n, snr, sdr, eps)?;
            let want = want as f64;
            report.check(
                format!("N_s n={n} snr={snr} eps={eps:e}"),
                row.source_samples as f64,
                want,
                rel * want,
                "published",
            );
        }
        let row = required_source_samples(n, snr, sdr, 1e-3)?;
        report.check(format!("R n={n} snr={snr}"), row.rate, rate, 1e-3, "published");
    }
    Ok(report)
}
