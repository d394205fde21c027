//! The three encoder variants, the shared decoder, and checkpoints.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::init::{init_conv1d, init_linear};
use crate::nn::{Cache, FourierLowpass, Layer, MaxPool1d, Sequential, Tensor};
use crate::pulses::PulseKind;
use crate::rng::{stream, Domain};
use crate::scene::CANONICAL_SAMPLES;

pub const CHECKPOINT_VERSION: u32 = 1;
const POOL: MaxPool1d = MaxPool1d { kernel: 4 };
const HIDDEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Conv,
    Linear,
    Fourier,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 3] = [EncoderKind::Conv, EncoderKind::Linear, EncoderKind::Fourier];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Conv => "conv",
            EncoderKind::Linear => "linear",
            EncoderKind::Fourier => "fourier",
        }
    }

    /// Index of the last layer of each row of the architecture table, so the
    /// layer-level shape trace can be folded into table rows.
    pub fn table_row_ends(self) -> &'static [usize] {
        match self {
            // conv, pool+gelu, conv, pool+gelu, conv, pool+gelu, conv, flatten+gelu, linear
            EncoderKind::Conv => &[0, 2, 3, 5, 6, 8, 9, 11, 12],
            // flatten, 3 x (linear+gelu), linear
            EncoderKind::Linear => &[0, 2, 4, 6, 7],
            // fourier, flatten, 4 x (linear+gelu), linear
            EncoderKind::Fourier => &[0, 1, 3, 5, 7, 9, 10],
        }
    }

    /// Expected per-row output shapes (without the batch dimension).
    pub fn table_shapes(self) -> Vec<Vec<usize>> {
        match self {
            EncoderKind::Conv => vec![
                vec![32, 961],
                vec![32, 240],
                vec![32, 209],
                vec![32, 52],
                vec![32, 37],
                vec![32, 9],
                vec![32, 1],
                vec![32],
                vec![1],
            ],
            EncoderKind::Linear => vec![vec![1024], vec![256], vec![64], vec![8], vec![1]],
            EncoderKind::Fourier => vec![
                vec![1, 22],
                vec![22],
                vec![22],
                vec![22],
                vec![22],
                vec![22],
                vec![1],
            ],
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conv" => Ok(EncoderKind::Conv),
            "linear" => Ok(EncoderKind::Linear),
            "fourier" => Ok(EncoderKind::Fourier),
            other => Err(Error::InvalidArgument(format!(
                "unknown encoder '{other}' (expected conv, linear or fourier)"
            ))),
        }
    }
}

/// Decoder row shapes: linear+tanh, linear, reshape.
pub const DECODER_ROW_ENDS: [usize; 3] = [1, 2, 3];

pub fn decoder_table_shapes() -> Vec<Vec<usize>> {
    vec![vec![HIDDEN], vec![CANONICAL_SAMPLES], vec![1, CANONICAL_SAMPLES]]
}

pub fn build_conv_encoder<R: Rng + ?Sized>(rng: &mut R) -> Sequential {
    Sequential::new(vec![
        Layer::Conv1d(init_conv1d(rng, 1, 32, 64)),
        Layer::MaxPool1d(POOL),
        Layer::Gelu,
        Layer::Conv1d(init_conv1d(rng, 32, 32, 32)),
        Layer::MaxPool1d(POOL),
        Layer::Gelu,
        Layer::Conv1d(init_conv1d(rng, 32, 32, 16)),
        Layer::MaxPool1d(POOL),
        Layer::Gelu,
        Layer::Conv1d(init_conv1d(rng, 32, 32, 9)),
        Layer::Flatten,
        Layer::Gelu,
        Layer::Linear(init_linear(rng, 32, 1)),
    ])
}

pub fn build_linear_encoder<R: Rng + ?Sized>(rng: &mut R) -> Sequential {
    Sequential::new(vec![
        Layer::Flatten,
        Layer::Linear(init_linear(rng, CANONICAL_SAMPLES, 256)),
        Layer::Gelu,
        Layer::Linear(init_linear(rng, 256, 64)),
        Layer::Gelu,
        Layer::Linear(init_linear(rng, 64, 8)),
        Layer::Gelu,
        Layer::Linear(init_linear(rng, 8, 1)),
    ])
}

pub fn build_fourier_encoder<R: Rng + ?Sized>(rng: &mut R) -> Sequential {
    let fourier = FourierLowpass::canonical();
    let width = fourier.features();
    let mut layers = vec![Layer::Fourier(fourier), Layer::Flatten];
    for _ in 0..4 {
        layers.push(Layer::Linear(init_linear(rng, width, width)));
        layers.push(Layer::Gelu);
    }
    layers.push(Layer::Linear(init_linear(rng, width, 1)));
    Sequential::new(layers)
}

pub fn build_encoder<R: Rng + ?Sized>(kind: EncoderKind, rng: &mut R) -> Sequential {
    match kind {
        EncoderKind::Conv => build_conv_encoder(rng),
        EncoderKind::Linear => build_linear_encoder(rng),
        EncoderKind::Fourier => build_fourier_encoder(rng),
    }
}

pub fn build_decoder<R: Rng + ?Sized>(rng: &mut R) -> Sequential {
    Sequential::new(vec![
        Layer::Linear(init_linear(rng, 1, HIDDEN)),
        Layer::Tanh,
        Layer::Linear(init_linear(rng, HIDDEN, CANONICAL_SAMPLES)),
        Layer::Reshape(vec![1, CANONICAL_SAMPLES]),
    ])
}

/// Folds a layer-level shape trace into table rows, dropping the batch dim.
pub fn fold_trace(trace: &[Vec<usize>], row_ends: &[usize]) -> Vec<Vec<usize>> {
    row_ends.iter().map(|&i| trace[i][1..].to_vec()).collect()
}

fn check_conformance(kind: EncoderKind, encoder: &Sequential, decoder: &Sequential) -> Result<()> {
    let probe = Tensor::zeros(&[1, 1, CANONICAL_SAMPLES]);
    let enc = fold_trace(&encoder.shape_trace(&probe)?, kind.table_row_ends());
    if enc != kind.table_shapes() {
        return Err(Error::Checkpoint(format!(
            "{kind} encoder shapes {enc:?} do not match the architecture table"
        )));
    }
    let dec = fold_trace(&decoder.shape_trace(&Tensor::zeros(&[1, 1]))?, &DECODER_ROW_ENDS);
    if dec != decoder_table_shapes() {
        return Err(Error::Checkpoint(format!(
            "decoder shapes {dec:?} do not match the architecture table"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelMetadata {
    pub pulse: Option<PulseKind>,
    /// Noise-to-signal ratio trained at; `None` for noiseless training.
    pub target_ratio: Option<f64>,
    pub master_seed: u64,
    pub member: u64,
    pub epochs: usize,
    pub final_loss: Option<f64>,
}

/// Encoder, decoder and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub kind: EncoderKind,
    pub encoder: Sequential,
    pub decoder: Sequential,
    pub metadata: ModelMetadata,
}

/// Forward activations kept for one backward pass.
#[derive(Debug)]
pub struct ForwardCache {
    encoder: Vec<Cache>,
    decoder: Vec<Cache>,
}

impl AutoencoderModel {
    /// Fresh model with parameters drawn from `rng` (encoder first).
    pub fn build<R: Rng + ?Sized>(kind: EncoderKind, rng: &mut R) -> Result<Self> {
        let encoder = build_encoder(kind, rng);
        let decoder = build_decoder(rng);
        check_conformance(kind, &encoder, &decoder)?;
        Ok(AutoencoderModel {
            kind,
            encoder,
            decoder,
            metadata: ModelMetadata::default(),
        })
    }

    /// Model initialized from the init stream of `(master_seed, member)`.
    pub fn seeded(kind: EncoderKind, master_seed: u64, member: u64) -> Result<Self> {
        let mut rng = stream(master_seed, Domain::Init, member, 0);
        let mut model = Self::build(kind, &mut rng)?;
        model.metadata.master_seed = master_seed;
        model.metadata.member = member;
        Ok(model)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.len() != 3 || s[1] != 1 || s[2] != CANONICAL_SAMPLES {
            return Err(Error::Shape {
                op: "AutoencoderModel::forward",
                expected: vec![s.first().copied().unwrap_or(0), 1, CANONICAL_SAMPLES],
                actual: s.to_vec(),
            });
        }
        Ok(())
    }

    /// Bottleneck activations `z = E[X]`, shape `[B, 1]`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.encoder.forward(x)
    }

    /// `(z, X_hat)` with `X_hat = D[E[X]]` of shape `[B, 1, 1024]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let z = self.encode(x)?;
        let x_hat = self.decoder.forward(&z)?;
        Ok((z, x_hat))
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, Tensor, ForwardCache)> {
        self.check_input(x)?;
        let (z, encoder) = self.encoder.forward_cached(x)?;
        let (x_hat, decoder) = self.decoder.forward_cached(&z)?;
        Ok((z, x_hat, ForwardCache { encoder, decoder }))
    }

    /// Parameter gradients in [`AutoencoderModel::params`] order.
    pub fn backward(&self, cache: &ForwardCache, grad_x_hat: &Tensor) -> Result<Vec<Tensor>> {
        let (grad_z, mut dec) = self.decoder.backward(&cache.decoder, grad_x_hat)?;
        let (_, mut grads) = self.encoder.backward(&cache.encoder, &grad_z)?;
        grads.append(&mut dec);
        Ok(grads)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    /// Names like `encoder.3.weight`, aligned with [`AutoencoderModel::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (part, seq) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, layer) in seq.layers.iter().enumerate() {
                if !layer.params().is_empty() {
                    names.push(format!("{part}.{i}.weight"));
                    names.push(format!("{part}.{i}.bias"));
                }
            }
        }
        names
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let layers = self
            .param_names()
            .into_iter()
            .zip(self.params())
            .map(|(name, t)| {
                let mut bytes = Vec::with_capacity(t.len() * 8);
                for v in t.data() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                CheckpointTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: B64.encode(bytes),
                }
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            encoder_kind: self.kind,
            metadata: self.metadata.clone(),
            layers,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        let mut model = Self::seeded(ckpt.encoder_kind, 0, 0)?;
        model.metadata = ckpt.metadata.clone();
        let names = model.param_names();
        if names.len() != ckpt.layers.len() {
            return Err(Error::Checkpoint(format!(
                "{} encoder needs {} tensors, checkpoint has {}",
                ckpt.encoder_kind,
                names.len(),
                ckpt.layers.len()
            )));
        }
        for ((name, param), stored) in names.iter().zip(model.params_mut()).zip(&ckpt.layers) {
            if &stored.name != name || stored.shape != param.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    stored.name,
                    stored.shape,
                    name,
                    param.shape()
                )));
            }
            let bytes = B64
                .decode(&stored.data)
                .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
            if bytes.len() != param.len() * 8 {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: {} bytes for {} values",
                    bytes.len(),
                    param.len()
                )));
            }
            for (dst, chunk) in param.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_checkpoint()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ckpt)
    }

    /// One-line-per-item summary for `model info`.
    pub fn describe(&self) -> String {
        let mut out = format!("encoder: {}\nparameters: {}\n", self.kind, self.param_count());
        let m = &self.metadata;
        out.push_str(&format!(
            "pulse: {}\ntarget_ratio: {}\nmaster_seed: {}\nmember: {}\nepochs: {}\nfinal_loss: {}\n",
            m.pulse.map(|p| p.name()).unwrap_or("-"),
            m.target_ratio.map(|r| r.to_string()).unwrap_or_else(|| "noiseless".into()),
            m.master_seed,
            m.member,
            m.epochs,
            m.final_loss.map(|l| format!("{l:.6e}")).unwrap_or_else(|| "-".into()),
        ));
        for (name, p) in self.param_names().iter().zip(self.params()) {
            out.push_str(&format!("{name}: {:?}\n", p.shape()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Base64 of little-endian f64 values.
    pub data: String,
}

/// On-disk JSON checkpoint document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub encoder_kind: EncoderKind,
    pub metadata: ModelMetadata,
    pub layers: Vec<CheckpointTensor>,
}

pub fn save_checkpoint(model: &AutoencoderModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<AutoencoderModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AutoencoderModel::from_json(&text)
}

/// Loads a checkpoint and insists on a particular encoder kind.
pub fn load_checkpoint_as(path: &Path, kind: EncoderKind) -> Result<AutoencoderModel> {
    let model = load_checkpoint(path)?;
    if model.kind != kind {
        return Err(Error::KindMismatch {
            expected: kind.to_string(),
            found: model.kind.to_string(),
        });
    }
    Ok(model)
}
