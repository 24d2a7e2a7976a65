//! Convolutional masked autoencoder.
//!
//! The whole image, with masked cells filled by a constant, passes through a
//! stride-2 conv encoder; a mirrored transposed-conv decoder reconstructs the
//! pixels. The trained encoder is later reused, frozen, as a feature extractor
//! for the learned loss.

pub(crate) mod checkpoint;
mod pretrain;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use pretrain::{mask_seed, pretrain, reconstruction_loss, LossRegion, PretrainConfig, PretrainOutcome};

use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Conv2dParams, Tape, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.1;
pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_FEATURE_CHANNELS: usize = 32;

const ENC_KERNEL: usize = 3;
const DEC_KERNEL: usize = 4;
const ENC_CONV: Conv2dParams = Conv2dParams { stride: 2, padding: 1 };
const DEC_CONV: Conv2dParams = Conv2dParams { stride: 2, padding: 1 };

/// Encoder widths for a given depth: 16, 32, 64, ... with the last layer
/// replaced by `feature_channels`.
pub fn encoder_widths(depth: usize, feature_channels: usize) -> Vec<usize> {
    let mut widths: Vec<usize> = (0..depth).map(|i| 16usize << i).collect();
    if let Some(last) = widths.last_mut() {
        *last = feature_channels;
    }
    widths
}

/// Settings recorded when a model was pretrained, echoed into checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainMeta {
    pub patch_px: usize,
    pub patch_frames: usize,
    pub frames: usize,
    pub mask_ratio: f64,
    pub seed: u64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaeModel {
    in_channels: usize,
    widths: Vec<usize>,
    encoder: Vec<ConvLayer>,
    decoder: Vec<ConvLayer>,
    pretrain: Option<PretrainMeta>,
}

/// Tape handles for one registration of a model's weights.
#[derive(Clone, Debug)]
pub struct MaeVars {
    encoder: Vec<(Var, Var)>,
    decoder: Vec<(Var, Var)>,
}

impl MaeVars {
    /// All weight handles in [`MaeModel::params`] order.
    pub fn all(&self) -> Vec<Var> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }

    /// Rebuild from handles in [`MaeModel::params`] order: weight and bias
    /// per layer, encoder first, both halves of equal depth.
    pub fn from_params(vars: &[Var]) -> Result<Self> {
        if vars.is_empty() || vars.len() % 4 != 0 {
            return Err(Error::invalid(format!("expected 4·depth weight handles, got {}", vars.len())));
        }
        let pairs: Vec<(Var, Var)> = vars.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let (encoder, decoder) = pairs.split_at(pairs.len() / 2);
        Ok(MaeVars {
            encoder: encoder.to_vec(),
            decoder: decoder.to_vec(),
        })
    }
}

pub(crate) fn kaiming(shape: &[usize], fan_in: usize, rng: &mut crate::rng::StreamRng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let len = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..len).map(|_| normal.sample(rng)).collect())
}

/// Build a model with seeded fan-in scaled normal weights and zero biases.
pub fn init_mae(in_channels: usize, feature_channels: usize, depth: usize, seed: u64) -> Result<MaeModel> {
    if depth == 0 || in_channels == 0 || feature_channels == 0 {
        return Err(Error::invalid(format!(
            "invalid MAE dimensions: in_channels={in_channels} feature_channels={feature_channels} depth={depth}"
        )));
    }
    let widths = encoder_widths(depth, feature_channels);
    let mut rng = stream_rng(seed, Stream::Init, &[0x4d4145]);
    let mut encoder = Vec::with_capacity(depth);
    let mut prev = in_channels;
    for &w in &widths {
        encoder.push(ConvLayer {
            weight: kaiming(&[w, prev, ENC_KERNEL, ENC_KERNEL], prev * ENC_KERNEL * ENC_KERNEL, &mut rng),
            bias: Tensor::zeros(&[w]),
        });
        prev = w;
    }
    let mut decoder = Vec::with_capacity(depth);
    for i in (0..depth).rev() {
        let from = widths[i];
        let to = if i == 0 { in_channels } else { widths[i - 1] };
        // Each output pixel of a stride-2, 4-tap transpose sees (4/2)² taps per input channel.
        let fan_in = from * (DEC_KERNEL / 2) * (DEC_KERNEL / 2);
        decoder.push(ConvLayer {
            weight: kaiming(&[from, to, DEC_KERNEL, DEC_KERNEL], fan_in, &mut rng),
            bias: Tensor::zeros(&[to]),
        });
    }
    Ok(MaeModel {
        in_channels,
        widths,
        encoder,
        decoder,
        pretrain: None,
    })
}

impl MaeModel {
    pub(crate) fn from_parts(
        in_channels: usize,
        widths: Vec<usize>,
        encoder: Vec<ConvLayer>,
        decoder: Vec<ConvLayer>,
        pretrain: Option<PretrainMeta>,
    ) -> Result<Self> {
        let model = MaeModel {
            in_channels,
            widths,
            encoder,
            decoder,
            pretrain,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let depth = self.widths.len();
        if depth == 0 || self.encoder.len() != depth || self.decoder.len() != depth {
            return Err(Error::invalid("MAE layer count does not match its widths"));
        }
        let mut prev = self.in_channels;
        for (layer, &w) in self.encoder.iter().zip(&self.widths) {
            if layer.weight.shape() != [w, prev, ENC_KERNEL, ENC_KERNEL] || layer.bias.shape() != [w] {
                return Err(Error::invalid("MAE encoder weight shapes are inconsistent"));
            }
            prev = w;
        }
        for (j, layer) in self.decoder.iter().enumerate() {
            let i = depth - 1 - j;
            let to = if i == 0 { self.in_channels } else { self.widths[i - 1] };
            if layer.weight.shape() != [self.widths[i], to, DEC_KERNEL, DEC_KERNEL] || layer.bias.shape() != [to] {
                return Err(Error::invalid("MAE decoder weight shapes are inconsistent"));
            }
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn feature_channels(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn pretrain_meta(&self) -> Option<&PretrainMeta> {
        self.pretrain.as_ref()
    }

    pub(crate) fn set_pretrain_meta(&mut self, meta: PretrainMeta) {
        self.pretrain = Some(meta);
    }

    /// Spatial downsampling factor of the encoder.
    pub fn stride(&self) -> usize {
        1 << self.depth()
    }

    pub fn encoder_layers(&self) -> &[ConvLayer] {
        &self.encoder
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// SHA-256 over every weight's little-endian bytes, hex encoded.
    pub fn checksum(&self) -> String {
        weights_checksum(self.params())
    }

    /// SHA-256 over the encoder weights only.
    pub fn encoder_checksum(&self) -> String {
        weights_checksum(self.encoder.iter().flat_map(|l| [&l.weight, &l.bias]))
    }

    /// Put the weights on `tape`, as trainable params or frozen constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> MaeVars {
        let mut reg = |l: &ConvLayer| {
            if trainable {
                (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
            } else {
                (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
            }
        };
        let encoder = self.encoder.iter().map(&mut reg).collect();
        let decoder = self.decoder.iter().map(&mut reg).collect();
        MaeVars { encoder, decoder }
    }

    fn check_input(&self, x: &Tensor, need_divisible: bool) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.in_channels,
                found: c,
            });
        }
        if need_divisible && (h % self.stride() != 0 || w % self.stride() != 0) {
            return Err(Error::NotDivisible {
                dim: if h % self.stride() != 0 { "height" } else { "width" },
                size: if h % self.stride() != 0 { h } else { w },
                patch: self.stride(),
            });
        }
        Ok(())
    }

    pub fn encode_on(&self, tape: &mut Tape, vars: &MaeVars, x: Var) -> Result<Var> {
        self.check_input(tape.value(x), false)?;
        let mut h = x;
        for &(w, b) in &vars.encoder {
            h = tape.conv2d(h, w, Some(b), ENC_CONV)?;
            h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        }
        Ok(h)
    }

    pub fn decode_on(&self, tape: &mut Tape, vars: &MaeVars, features: Var) -> Result<Var> {
        let mut h = features;
        let last = vars.decoder.len() - 1;
        for (j, &(w, b)) in vars.decoder.iter().enumerate() {
            h = tape.conv2d_transpose(h, w, Some(b), DEC_CONV, 0)?;
            if j != last {
                h = tape.leaky_relu(h, LEAKY_SLOPE)?;
            }
        }
        Ok(h)
    }

    /// Decoder applied to the encoder output. No output activation.
    pub fn reconstruct_on(&self, tape: &mut Tape, vars: &MaeVars, masked: Var) -> Result<Var> {
        self.check_input(tape.value(masked), true)?;
        let f = self.encode_on(tape, vars, masked)?;
        self.decode_on(tape, vars, f)
    }

    /// Inference-only encoder pass.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let xv = tape.constant(x.clone());
        let f = self.encode_on(&mut tape, &vars, xv)?;
        Ok(tape.value(f).clone())
    }

    /// Inference-only reconstruction; output shape equals input shape.
    pub fn reconstruct(&self, masked: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let xv = tape.constant(masked.clone());
        let r = self.reconstruct_on(&mut tape, &vars, xv)?;
        Ok(tape.value(r).clone())
    }
}

pub fn weights_checksum<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        for &d in p.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        for &v in p.data() {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
