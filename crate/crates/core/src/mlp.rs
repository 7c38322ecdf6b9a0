//! Fully connected tanh network decoding source symbols from channel
//! features, trained with Adam on simulated channel outputs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{angles_features, awgn_channel, encode, torus_projection, ChannelSpec, FeatureMode};
use crate::error::{Error, Result};
use crate::profile::CodeProfile;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_width: usize,
    /// Five hidden widths, nondecreasing to the middle and nonincreasing after.
    pub layer_widths: Vec<usize>,
    pub output_width: usize,
}

impl MlpArchitecture {
    /// Hidden widths `[4n, 8n, 16n, 8n, 4n]`, each at least 8.
    pub fn for_dimension(n: usize, input_width: usize) -> Self {
        let layer_widths = [4, 8, 16, 8, 4].iter().map(|k| (k * n).max(8)).collect();
        MlpArchitecture {
            input_width,
            layer_widths,
            output_width: 1,
        }
    }

    /// Default network for the given features of an `n`-dimensional code.
    pub fn for_features(n: usize, modes: &[FeatureMode]) -> Self {
        Self::for_dimension(n, feature_width(n, modes))
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.layer_widths;
        if self.input_width == 0 || self.output_width != 1 {
            return Err(Error::Config("input width must be positive and output width 1".into()));
        }
        if w.len() != 5 || w.contains(&0) {
            return Err(Error::Config(format!("expected five positive hidden widths, got {w:?}")));
        }
        if !(w[0] <= w[1] && w[1] <= w[2] && w[2] >= w[3] && w[3] >= w[4]) {
            return Err(Error::Config(format!("hidden widths {w:?} do not peak in the middle")));
        }
        Ok(())
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_width];
        dims.extend(&self.layer_widths);
        dims.push(self.output_width);
        dims.windows(2).map(|p| (p[0], p[1])).collect()
    }
}

/// Concatenated feature width for `modes`.
pub fn feature_width(n: usize, modes: &[FeatureMode]) -> usize {
    modes
        .iter()
        .map(|m| match m {
            FeatureMode::Raw | FeatureMode::TorusProjection => n,
            FeatureMode::AnglesOnly => n / 2,
        })
        .sum()
}

/// Concatenation of the requested encodings of a channel output.
pub fn extract_features(profile: &CodeProfile, y: &[f64], modes: &[FeatureMode]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(feature_width(profile.n(), modes));
    for mode in modes {
        match mode {
            FeatureMode::Raw => out.extend_from_slice(y),
            FeatureMode::TorusProjection => out.extend(torus_projection(profile, y)?.data),
            FeatureMode::AnglesOnly => out.extend(angles_features(y)?.data),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub adam_decay: f64,
    pub epochs: usize,
    pub examples_per_snr: usize,
    pub train_snrs_db: Vec<f64>,
    pub batch_size: usize,
    pub seed: u64,
    /// Permit a learning rate outside `[1e-6, 1e-4]`.
    #[serde(default)]
    pub allow_learning_rate_override: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-4,
            adam_decay: 1e-6,
            epochs: 50,
            examples_per_snr: 15_000,
            train_snrs_db: vec![-5.0, 0.0, 5.0, 10.0],
            batch_size: 128,
            seed: 0,
            allow_learning_rate_override: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if !self.allow_learning_rate_override && !(1e-6..=1e-4).contains(&lr) {
            return Err(Error::Config(format!("learning rate {lr} outside [1e-6, 1e-4]")));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.examples_per_snr == 0 {
            return Err(Error::Config("batch size, epochs and examples must be positive".into()));
        }
        if self.train_snrs_db.is_empty() {
            return Err(Error::Config("no training SNRs".into()));
        }
        if !(self.adam_decay >= 0.0) {
            return Err(Error::Config("decay must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Features and targets, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub modes: Vec<FeatureMode>,
    pub width: usize,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }
}

/// `examples_per_snr` noisy observations of `s ~ U[-1, 1]` at each training SNR.
pub fn generate_training_set<R: Rng + ?Sized>(
    profile: &CodeProfile,
    config: &TrainingConfig,
    modes: &[FeatureMode],
    rng: &mut R,
) -> Result<Dataset> {
    if modes.is_empty() {
        return Err(Error::Config("no feature modes".into()));
    }
    let width = feature_width(profile.n(), modes);
    let total = config.examples_per_snr * config.train_snrs_db.len();
    let mut features = Vec::with_capacity(total * width);
    let mut targets = Vec::with_capacity(total);
    for &snr in &config.train_snrs_db {
        let spec = ChannelSpec::for_profile(profile, snr);
        for _ in 0..config.examples_per_snr {
            let s: f64 = rng.random_range(-1.0..=1.0);
            let x = encode(profile, s)?;
            let y = awgn_channel(&x, &spec, rng);
            features.extend(extract_features(profile, &y, modes)?);
            targets.push(s);
        }
    }
    Ok(Dataset {
        modes: modes.to_vec(),
        width,
        features,
        targets,
    })
}

/// Dense layer, weights row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
            out.push(z.tanh());
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n: usize,
    pub feature_modes: Vec<FeatureMode>,
    pub config: Option<TrainingConfig>,
    pub examples: usize,
    pub epoch_losses: Vec<f64>,
}

/// Network parameters with the architecture and training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub architecture: MlpArchitecture,
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub metadata: TrainingMetadata,
}

impl MlpWeights {
    pub fn zeros(arch: &MlpArchitecture) -> Result<Self> {
        arch.validate()?;
        Ok(MlpWeights {
            architecture: arch.clone(),
            layers: arch.shapes().into_iter().map(|(i, o)| Layer::zeros(i, o)).collect(),
            metadata: TrainingMetadata::default(),
        })
    }

    /// Uniform weights in `±sqrt(3 / fan_in)`, zero biases.
    pub fn random<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Result<Self> {
        let mut w = Self::zeros(arch)?;
        for layer in &mut w.layers {
            let bound = (3.0 / layer.inputs as f64).sqrt();
            for v in &mut layer.weights {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(w)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let w: MlpWeights = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        w.architecture.validate()?;
        let shapes = w.architecture.shapes();
        let consistent = shapes.len() == w.layers.len()
            && shapes.iter().zip(&w.layers).all(|(&(i, o), l)| {
                l.inputs == i && l.outputs == o && l.weights.len() == i * o && l.biases.len() == o
            });
        if !consistent {
            return Err(Error::Config("weight arrays do not match the architecture".into()));
        }
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn check_width(weights: &MlpWeights, features: &[f64]) -> Result<()> {
    if features.len() != weights.architecture.input_width {
        return Err(Error::Config(format!(
            "feature width {} does not match network input {}",
            features.len(),
            weights.architecture.input_width
        )));
    }
    Ok(())
}

/// Network output, in `(-1, 1)`.
pub fn mlp_forward(weights: &MlpWeights, features: &[f64]) -> Result<f64> {
    check_width(weights, features)?;
    let mut a = features.to_vec();
    let mut next = Vec::new();
    for layer in &weights.layers {
        layer.forward_into(&a, &mut next);
        std::mem::swap(&mut a, &mut next);
    }
    Ok(a[0])
}

/// Gradient buffers shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(w: &MlpWeights) -> Self {
        Gradients {
            weights: w.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: w.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }
}

/// Mean squared error over the rows `idx` of `data` and its gradient.
pub fn loss_and_gradient(weights: &MlpWeights, data: &Dataset, idx: &[usize]) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(weights);
    let mut acts: Vec<Vec<f64>> = vec![Vec::new(); weights.layers.len() + 1];
    let mut delta = Vec::new();
    let mut prev_delta = Vec::new();
    let scale = 1.0 / idx.len() as f64;
    let mut loss = 0.0;
    for &i in idx {
        let x = data.row(i);
        check_width(weights, x)?;
        acts[0].clear();
        acts[0].extend_from_slice(x);
        for (l, layer) in weights.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(l + 1);
            layer.forward_into(&head[l], &mut tail[0]);
        }
        let out = acts[weights.layers.len()][0];
        let err = out - data.targets[i];
        loss += err * err * scale;

        delta.clear();
        delta.push(2.0 * err * scale * (1.0 - out * out));
        for l in (0..weights.layers.len()).rev() {
            let layer = &weights.layers[l];
            let input = &acts[l];
            let gw = &mut grads.weights[l];
            for (o, d) in delta.iter().enumerate() {
                grads.biases[l][o] += d;
                for (g, v) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if l > 0 {
                prev_delta.clear();
                prev_delta.resize(layer.inputs, 0.0);
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev_delta.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, a) in prev_delta.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
    }
    Ok((loss, grads))
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl Adam {
    fn new(w: &MlpWeights) -> Self {
        Adam {
            m: Gradients::zeros_like(w),
            v: Gradients::zeros_like(w),
            t: 0,
        }
    }

    fn step(&mut self, w: &mut MlpWeights, g: &Gradients, lr: f64, decay: f64) {
        let lr_t = lr / (1.0 + decay * self.t as f64);
        self.t += 1;
        let t = self.t as i32;
        let corr = (1.0 - ADAM_BETA2.powi(t)).sqrt() / (1.0 - ADAM_BETA1.powi(t));
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr_t * corr * *m / (v.sqrt() + ADAM_EPS);
            }
        };
        for (l, layer) in w.layers.iter_mut().enumerate() {
            update(&mut layer.weights, &g.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]);
            update(&mut layer.biases, &g.biases[l], &mut self.m.biases[l], &mut self.v.biases[l]);
        }
    }
}

/// Minibatch Adam on the mean squared error. The seed in `config` fixes the
/// initialization and the shuffling.
pub fn mlp_train(arch: &MlpArchitecture, data: &Dataset, config: &TrainingConfig) -> Result<MlpWeights> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if data.width != arch.input_width {
        return Err(Error::Config(format!(
            "dataset width {} does not match network input {}",
            data.width, arch.input_width
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = MlpWeights::random(arch, &mut rng)?;
    let mut adam = Adam::new(&weights);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = loss_and_gradient(&weights, data, batch)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    learning_rate: config.learning_rate,
                });
            }
            total += loss * batch.len() as f64;
            adam.step(&mut weights, &grads, config.learning_rate, config.adam_decay);
        }
        losses.push(total / data.len() as f64);
    }
    weights.metadata = TrainingMetadata {
        n: 0,
        feature_modes: data.modes.clone(),
        config: Some(config.clone()),
        examples: data.len(),
        epoch_losses: losses,
    };
    Ok(weights)
}

/// Trained network bound to a profile and its feature encoding.
#[derive(Debug, Clone)]
pub struct MlpDecoder {
    profile: CodeProfile,
    weights: MlpWeights,
    modes: Vec<FeatureMode>,
}

impl MlpDecoder {
    pub fn new(profile: &CodeProfile, weights: MlpWeights) -> Result<Self> {
        let modes = if weights.metadata.feature_modes.is_empty() {
            vec![FeatureMode::Raw]
        } else {
            weights.metadata.feature_modes.clone()
        };
        let width = feature_width(profile.n(), &modes);
        if width != weights.architecture.input_width {
            return Err(Error::Config(format!(
                "features {modes:?} give width {width}, network expects {}",
                weights.architecture.input_width
            )));
        }
        Ok(MlpDecoder {
            profile: profile.clone(),
            weights,
            modes,
        })
    }

    pub fn weights(&self) -> &MlpWeights {
        &self.weights
    }

    pub fn decode(&self, y: &[f64]) -> Result<f64> {
        let f = extract_features(&self.profile, y, &self.modes)?;
        mlp_forward(&self.weights, &f)
    }
}

/// Generate a training set for `profile`, train, and record `n` in the metadata.
pub fn train_decoder(profile: &CodeProfile, modes: &[FeatureMode], config: &TrainingConfig) -> Result<MlpDecoder> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let data = generate_training_set(profile, config, modes, &mut rng)?;
    let arch = MlpArchitecture::for_features(profile.n(), modes);
    let mut weights = mlp_train(&arch, &data, config)?;
    weights.metadata.n = profile.n();
    MlpDecoder::new(profile, weights)
}
