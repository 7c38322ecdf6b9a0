use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use c3t::bounds::{awgn_capacity, db_to_linear, linear_to_db, opta_sdr_bound, quantizer_rate, required_source_samples, TABLE_II};
use c3t::codec::{
    angles_features, awgn_channel, encode, torus_projection, AnglesDecoder, ChannelSpec, MapDecoder,
    DEFAULT_GRID_POINTS,
};
use c3t::harness::{
    append_sweep_results, export_tube_geometry, reproduce_tables, run_sweep, CheckStatus, DecoderKind,
    ExperimentConfig, ReproduceOptions,
};
use c3t::mlp::{train_decoder, MlpDecoder, MlpWeights, TrainingConfig};
use c3t::spsa::optimize_multistart;
use c3t::tube::{circumradius_profile, tube_metrics, DEFAULT_GRID_STEP};
use c3t::{CodeProfile, FeatureMode, SpsaConfig, Stretch};

#[derive(Parser)]
#[command(name = "c3t", version, about = "Analog joint source-channel codes on flat tori")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the radii of an n-dimensional code by SPSA.
    Optimize(OptimizeArgs),
    /// Tube radius, path length and packing density of a profile.
    Metrics(MetricsArgs),
    /// Map source symbols to channel inputs, optionally through the channel.
    Encode(EncodeArgs),
    /// Estimate source symbols from channel outputs.
    Decode(DecodeArgs),
    /// Monte Carlo SDR-versus-SNR sweep.
    Sweep(SweepArgs),
    /// Train a neural decoder on simulated channel outputs.
    TrainMlp(TrainArgs),
    /// Optimal SDR bound and quantizer rate.
    Bounds(BoundsArgs),
    /// Source samples a digital code needs to match an analog code.
    CompareDigital(CompareArgs),
    /// Centerline and tube surface samples for plotting.
    ExportTube(ExportArgs),
    /// Recompute the optimized-code and digital-comparison tables.
    ReproduceTables(ReproduceArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(short)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    grid_step: f64,
    /// Write the best profile here (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the iterate trace of the best start as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    grid_step: f64,
    /// Also write rho(delta) on the grid as CSV.
    #[arg(long)]
    circumradius_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StretchArg {
    Full,
    AliasingSafe,
}

impl From<StretchArg> for Stretch {
    fn from(s: StretchArg) -> Self {
        match s {
            StretchArg::Full => Stretch::FullCircle,
            StretchArg::AliasingSafe => Stretch::AliasingSafe,
        }
    }
}

#[derive(Args)]
struct ProfileInput {
    #[arg(long)]
    profile: PathBuf,
    /// Override the stretch stored in the profile.
    #[arg(long, value_enum)]
    stretch: Option<StretchArg>,
}

impl ProfileInput {
    fn load(&self) -> Result<CodeProfile> {
        let p = CodeProfile::load(&self.profile).with_context(|| format!("loading {}", self.profile.display()))?;
        for w in p.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(match self.stretch {
            Some(s) => p.with_stretch(s.into()),
            None => p,
        })
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    profile: ProfileInput,
    /// Add channel noise at this SNR.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// One source symbol per line (stdin when absent).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Raw,
    Tp,
    Ao,
    Mlp,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    profile: ProfileInput,
    #[arg(long, value_enum, default_value = "raw")]
    decoder: DecoderArg,
    /// Channel SNR; required by the angles-only decoder.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid: usize,
    /// Trained network for `--decoder mlp`.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Comma-separated channel outputs, one per line (stdin when absent).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Profiles to add to the configuration.
    #[arg(long = "profile")]
    profiles: Vec<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// Comma-separated decoders, e.g. RawMAP,AO_MAP,Repetition.
    #[arg(long, value_delimiter = ',')]
    decoders: Option<Vec<String>>,
    #[arg(long)]
    grid: Option<usize>,
    /// Trained network for a neural decoder, as KIND=PATH (e.g. MLP_AO=w.json).
    #[arg(long = "mlp-weights")]
    mlp_weights: Vec<String>,
    /// Results CSV, appended to; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    Raw,
    Tp,
    Ao,
}

impl From<FeatureArg> for FeatureMode {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::Raw => FeatureMode::Raw,
            FeatureArg::Tp => FeatureMode::TorusProjection,
            FeatureArg::Ao => FeatureMode::AnglesOnly,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    profile: ProfileInput,
    /// Comma-separated features, concatenated in order.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "raw")]
    features: Vec<FeatureArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    examples_per_snr: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Accept a learning rate outside [1e-6, 1e-4].
    #[arg(long)]
    allow_lr_override: bool,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    train_snr_db: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(short)]
    n: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Vec<f64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Evaluate every row of the published comparison.
    #[arg(long, conflicts_with_all = ["n", "snr_db", "sdr_db"])]
    table: bool,
    #[arg(short, required_unless_present = "table")]
    n: Option<usize>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "table")]
    snr_db: Option<f64>,
    #[arg(long, required_unless_present = "table")]
    sdr_db: Option<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-6])]
    epsilon: Vec<f64>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    profile: ProfileInput,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dimensions to optimize.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 6, 8])]
    dims: Vec<usize>,
    /// Write the full report as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn lines(path: Option<&Path>) -> Result<Vec<String>> {
    let reader: Box<dyn BufRead> = match path {
        Some(p) => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        None => Box::new(BufReader::new(io::stdin().lock())),
    };
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push(t.to_string());
        }
    }
    Ok(out)
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split([',', ' ', '\t'])
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("bad number {s:?}")))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn optimize(a: OptimizeArgs) -> Result<ExitCode> {
    let mut cfg = SpsaConfig {
        seed: a.seed,
        grid_step: a.grid_step,
        ..SpsaConfig::default()
    };
    if let Some(m) = a.max_iters {
        cfg.max_iters = m;
    }
    if let Some(a0) = a.a0 {
        cfg.a0 = a0;
    }
    let best = optimize_multistart(a.n, &cfg, a.starts)?;
    let metrics = tube_metrics(&best.profile, a.grid_step)?;
    eprintln!(
        "best seed {}: rho_G = {:.6}, density = {:.6}",
        best.best_seed, metrics.rho_global, metrics.density
    );
    match &a.out {
        Some(p) => best.profile.save(p)?,
        None => println!("{}", best.profile.to_json()),
    }
    if let Some(p) = &a.trace {
        best.trace.write_csv(File::create(p)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn metrics(a: MetricsArgs) -> Result<ExitCode> {
    let p = CodeProfile::load(&a.profile)?;
    let m = tube_metrics(&p, a.grid_step)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    if let Some(path) = &a.circumradius_csv {
        circumradius_profile(&p, a.grid_step)?.write_csv(File::create(path)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn encode_cmd(a: EncodeArgs) -> Result<ExitCode> {
    let p = a.profile.load()?;
    let spec = a.snr_db.map(|snr| ChannelSpec::for_profile(&p, snr));
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut out = writer(a.output.as_deref())?;
    for line in lines(a.input.as_deref())? {
        let s: f64 = line.parse().with_context(|| format!("bad symbol {line:?}"))?;
        let mut x = encode(&p, s)?;
        if let Some(spec) = &spec {
            x = awgn_channel(&x, spec, &mut rng);
        }
        writeln!(out, "{}", join(&x))?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn decode_cmd(a: DecodeArgs) -> Result<ExitCode> {
    let p = a.profile.load()?;
    let decode: Box<dyn Fn(&[f64]) -> c3t::Result<f64>> = match a.decoder {
        DecoderArg::Raw => {
            let d = MapDecoder::new(&p, a.grid)?;
            Box::new(move |y| d.decode(y))
        }
        DecoderArg::Tp => {
            let d = MapDecoder::new(&p, a.grid)?;
            let q = p.clone();
            Box::new(move |y| d.decode(&torus_projection(&q, y)?.data))
        }
        DecoderArg::Ao => {
            let Some(snr) = a.snr_db else {
                bail!("the angles-only decoder needs --snr-db");
            };
            let d = AnglesDecoder::new(&p, ChannelSpec::for_profile(&p, snr).noise_var, a.grid)?;
            Box::new(move |y| d.decode(&angles_features(y)?.data))
        }
        DecoderArg::Mlp => {
            let Some(w) = &a.weights else {
                bail!("the network decoder needs --weights");
            };
            let d = MlpDecoder::new(&p, MlpWeights::load(w)?)?;
            Box::new(move |y| d.decode(y))
        }
    };
    let mut out = writer(a.output.as_deref())?;
    for line in lines(a.input.as_deref())? {
        writeln!(out, "{}", decode(&parse_row(&line)?)?)?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.profiles.extend(a.profiles);
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(g) = a.snr_db {
        cfg.snr_grid_db = g;
    }
    if let Some(g) = a.grid {
        cfg.grid_points = g;
    }
    if let Some(d) = a.decoders {
        cfg.decoders = d.iter().map(|s| s.parse()).collect::<c3t::Result<Vec<DecoderKind>>>()?;
    }
    for spec in &a.mlp_weights {
        let Some((kind, path)) = spec.split_once('=') else {
            bail!("expected KIND=PATH, got {spec:?}");
        };
        let kind: DecoderKind = kind.parse()?;
        if !kind.is_mlp() {
            bail!("{kind} is not a neural decoder");
        }
        cfg.mlp_weights.insert(kind, PathBuf::from(path));
    }
    let records = run_sweep(&cfg)?;
    append_sweep_results(&a.out, &cfg, &records)?;
    for r in &records {
        match (&r.sdr_db, &r.error) {
            (Some(v), _) => eprintln!("{} {} {:>6.2} dB -> SDR {v:.3} dB", r.profile_id, r.decoder, r.snr_db),
            (None, Some(e)) => eprintln!("{} {} {:>6.2} dB -> error: {e}", r.profile_id, r.decoder, r.snr_db),
            _ => {}
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let p = a.profile.load()?;
    let mut cfg = TrainingConfig {
        seed: a.seed,
        allow_learning_rate_override: a.allow_lr_override,
        ..TrainingConfig::default()
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.examples_per_snr {
        cfg.examples_per_snr = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.train_snr_db {
        cfg.train_snrs_db = v;
    }
    let modes: Vec<FeatureMode> = a.features.into_iter().map(Into::into).collect();
    let dec = train_decoder(&p, &modes, &cfg)?;
    if let Some(last) = dec.weights().metadata.epoch_losses.last() {
        eprintln!("final training loss {last:.6}");
    }
    dec.weights().save(&a.out)?;
    Ok(ExitCode::SUCCESS)
}

fn bounds(a: BoundsArgs) -> Result<ExitCode> {
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["n", "snr_db", "opta_sdr", "opta_sdr_db", "capacity_bits", "quantizer_bits_at_opta"])?;
    for snr_db in a.snr_db {
        let opta = opta_sdr_bound(db_to_linear(snr_db), a.n)?;
        let opta_db = linear_to_db(opta);
        w.write_record([
            a.n.to_string(),
            snr_db.to_string(),
            opta.to_string(),
            opta_db.to_string(),
            awgn_capacity(db_to_linear(snr_db)).to_string(),
            quantizer_rate(opta_db)?.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn compare(a: CompareArgs) -> Result<ExitCode> {
    let rows: Vec<(usize, f64, f64)> = if a.table {
        TABLE_II.iter().map(|r| (r.0, r.1, r.2)).collect()
    } else {
        vec![(a.n.unwrap_or(0), a.snr_db.unwrap_or(0.0), a.sdr_db.unwrap_or(0.0))]
    };
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["n", "snr_db", "sdr_db", "R", "eps", "N_c", "N_s", "N_s_exact", "above_capacity"])?;
    for (n, snr, sdr) in rows {
        for &eps in &a.epsilon {
            let r = required_source_samples(n, snr, sdr, eps)?;
            w.write_record([
                n.to_string(),
                snr.to_string(),
                sdr.to_string(),
                r.rate.to_string(),
                eps.to_string(),
                r.block_length.to_string(),
                r.source_samples.to_string(),
                r.source_samples_exact.to_string(),
                r.above_capacity.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn export(a: ExportArgs) -> Result<ExitCode> {
    let p = a.profile.load()?;
    let g = export_tube_geometry(&p, a.samples)?;
    let mut out = writer(a.out.as_deref())?;
    g.write_csv(&mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn reproduce(a: ReproduceArgs) -> Result<ExitCode> {
    let opts = ReproduceOptions {
        spsa: SpsaConfig {
            seed: a.seed,
            ..SpsaConfig::default()
        },
        starts: a.starts,
        dimensions: a.dims,
    };
    let report = reproduce_tables(&opts)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for e in &report.entries {
            let tag = match e.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Flagged => "FLAG",
            };
            println!(
                "{tag} {:<34} value {:<12.6} expected {:<10} tol {:<8.4} [{}]{}",
                e.name,
                e.value,
                e.expected,
                e.tolerance,
                e.source,
                e.note.as_deref().map(|n| format!(" {n}")).unwrap_or_default()
            );
        }
        println!("{} failure(s)", report.failures());
    }
    if let Some(p) = &a.out {
        report.write_csv(File::create(p)?)?;
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Metrics(a) => metrics(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::TrainMlp(a) => train(a),
        Command::Bounds(a) => bounds(a),
        Command::CompareDigital(a) => compare(a),
        Command::ExportTube(a) => export(a),
        Command::ReproduceTables(a) => reproduce(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
