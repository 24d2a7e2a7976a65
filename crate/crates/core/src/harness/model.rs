//! Residual convolutional restoration network, `y = x + net(x)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mae::checkpoint::{parse_header, verify_envelope};
use crate::mae::{kaiming, weights_checksum, ConvLayer};
use crate::rng::{stream_rng, Stream};
use crate::tensor::mten::{read_tensor, write_tensor, Reader};
use crate::tensor::{Conv2dParams, Tape, Tensor, Var};

const KERNEL: usize = 3;
const SAME: Conv2dParams = Conv2dParams { stride: 1, padding: 1 };
const MAGIC: &[u8; 4] = b"RSTC";
const VERSION: u8 = 1;
const FORMAT: &str = "RSTC";

/// `layers − 1` blocks of conv3×3 + ReLU, then a final conv3×3 back to the
/// input channels whose weights start at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct RestorationModel {
    channels: usize,
    width: usize,
    layers: Vec<ConvLayer>,
}

impl RestorationModel {
    pub fn init(channels: usize, width: usize, layers: usize, seed: u64) -> Result<Self> {
        if channels == 0 || width == 0 || layers < 2 {
            return Err(Error::invalid(format!(
                "restoration model needs channels, width >= 1 and layers >= 2, got {channels}, {width}, {layers}"
            )));
        }
        let mut rng = stream_rng(seed, Stream::Init, &[0x5253_5443]);
        let mut convs = Vec::with_capacity(layers);
        let mut prev = channels;
        for _ in 0..layers - 1 {
            convs.push(ConvLayer {
                weight: kaiming(&[width, prev, KERNEL, KERNEL], prev * KERNEL * KERNEL, &mut rng),
                bias: Tensor::zeros(&[width]),
            });
            prev = width;
        }
        convs.push(ConvLayer {
            weight: Tensor::zeros(&[channels, prev, KERNEL, KERNEL]),
            bias: Tensor::zeros(&[channels]),
        });
        Ok(RestorationModel {
            channels,
            width,
            layers: convs,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn checksum(&self) -> String {
        weights_checksum(self.params())
    }

    /// Weights as trainable tape parameters, in [`Self::params`] order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.param(p.clone())).collect()
    }

    pub fn forward_on(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let (_, c, _, _) = tape.value(x).dims4()?;
        if c != self.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                found: c,
            });
        }
        if params.len() != 2 * self.layers.len() {
            return Err(Error::invalid("parameter handle count does not match the model"));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, wb) in params.chunks_exact(2).enumerate() {
            h = tape.conv2d(h, wb[0], Some(wb[1]), SAME)?;
            if i != last {
                h = tape.relu(h)?;
            }
        }
        tape.add(x, h)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params().into_iter().map(|p| tape.constant(p.clone())).collect();
        let xv = tape.constant(x.clone());
        let y = self.forward_on(&mut tape, &params, xv)?;
        Ok(tape.value(y).clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = format!("channels = {}\nwidth = {}\nlayers = {}\n", self.channels, self.width, self.layers.len());
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let params = self.params();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            write_tensor(&mut out, p);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let malformed = |reason: &str| Error::Malformed {
            format: FORMAT,
            reason: reason.to_string(),
        };
        let body = verify_envelope(bytes, MAGIC, VERSION, FORMAT)?;
        let mut r = Reader::new(body, FORMAT);
        let header_len = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(header_len)?).map_err(|_| malformed("header is not UTF-8"))?;
        let map = parse_header(header, FORMAT)?;
        let get = |k: &str| -> Result<usize> {
            map.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| malformed(&format!("bad or missing `{k}`")))
        };
        let (channels, width, depth) = (get("channels")?, get("width")?, get("layers")?);
        let mut model = RestorationModel::init(channels, width, depth, 0).map_err(|e| malformed(&e.to_string()))?;
        if r.u32()? as usize != 2 * depth {
            return Err(malformed("tensor count does not match layers"));
        }
        for p in model.params_mut() {
            let t = read_tensor(&mut r)?;
            if t.shape() != p.shape() {
                return Err(malformed("tensor shape does not match the architecture"));
            }
            *p = t;
        }
        if r.remaining() != 0 {
            return Err(malformed("trailing bytes after tensors"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
