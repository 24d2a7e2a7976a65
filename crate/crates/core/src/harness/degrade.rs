//! Synthetic degradations applied to clean `1×C×H×W` tensors in `[0, 1]`.

use std::fmt;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::resample::resize_plane;
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Degradation {
    /// Additive `N(0, σ²)` noise, then clamped to `[0, 1]`.
    GaussianNoise { sigma: f64 },
    /// Bicubic downsample by `scale`, then bicubic upsample back.
    DownUp { scale: usize },
    /// `v → gain · v^γ`.
    GammaDarken { gamma: f64, gain: f64 },
    /// Gaussian noise per frame of a frame-stacked clip, one subseed per frame.
    VideoNoise { sigma: f64, channels_per_frame: usize },
}

impl fmt::Display for Degradation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degradation::GaussianNoise { sigma } => write!(f, "gaussian_noise(sigma={sigma})"),
            Degradation::DownUp { scale } => write!(f, "down_up(scale={scale})"),
            Degradation::GammaDarken { gamma, gain } => write!(f, "gamma_darken(gamma={gamma}, gain={gain})"),
            Degradation::VideoNoise { sigma, channels_per_frame } => {
                write!(f, "video_noise(sigma={sigma}, channels_per_frame={channels_per_frame})")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradationSpec {
    pub kind: Degradation,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(kind: Degradation, seed: u64) -> Result<Self> {
        let spec = DegradationSpec { kind, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            Degradation::GaussianNoise { sigma } | Degradation::VideoNoise { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::invalid(format!("noise sigma must be finite and >= 0, got {sigma}")))
            }
            Degradation::VideoNoise { channels_per_frame: 0, .. } => Err(Error::invalid("channels_per_frame must be >= 1")),
            Degradation::DownUp { scale } if scale != 2 && scale != 4 => {
                Err(Error::invalid(format!("down_up scale must be 2 or 4, got {scale}")))
            }
            Degradation::GammaDarken { gamma, gain } if !(gamma > 0.0 && gamma.is_finite() && gain > 0.0 && gain <= 1.0) => {
                Err(Error::invalid(format!("gamma_darken needs gamma > 0 and gain in (0, 1], got {gamma}, {gain}")))
            }
            _ => Ok(()),
        }
    }
}

fn add_noise(data: &mut [f64], sigma: f64, seed: u64, keys: &[u64]) {
    let mut rng = stream_rng(seed, Stream::Degrade, keys);
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    for v in data {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
}

/// Degrade the clean tensor for image `index`. A pure function of
/// `(spec, index, clean)`.
pub fn degrade(clean: &Tensor, spec: &DegradationSpec, index: u64) -> Result<Tensor> {
    spec.validate()?;
    let (n, c, h, w) = clean.dims4()?;
    let mut out = clean.clone();
    match spec.kind {
        Degradation::GaussianNoise { sigma } => {
            if sigma > 0.0 {
                add_noise(out.data_mut(), sigma, spec.seed, &[index]);
            }
        }
        Degradation::VideoNoise { sigma, channels_per_frame } => {
            if c % channels_per_frame != 0 {
                return Err(Error::invalid(format!(
                    "{c} channels do not split into frames of {channels_per_frame}"
                )));
            }
            if sigma > 0.0 {
                let frame_len = channels_per_frame * h * w;
                for b in 0..n {
                    let item = &mut out.data_mut()[b * c * h * w..(b + 1) * c * h * w];
                    for (t, frame) in item.chunks_mut(frame_len).enumerate() {
                        add_noise(frame, sigma, spec.seed, &[index, b as u64, t as u64]);
                    }
                }
            }
        }
        Degradation::DownUp { scale } => {
            if h < 4 * scale || w < 4 * scale {
                return Err(Error::invalid(format!(
                    "down_up x{scale} needs at least {0}x{0} pixels, got {h}x{w}",
                    4 * scale
                )));
            }
            if h % scale != 0 || w % scale != 0 {
                return Err(Error::NotDivisible {
                    dim: if h % scale != 0 { "height" } else { "width" },
                    size: if h % scale != 0 { h } else { w },
                    patch: scale,
                });
            }
            for plane in out.data_mut().chunks_mut(h * w) {
                let small = resize_plane(plane, h, w, h / scale, w / scale);
                let back = resize_plane(&small, h / scale, w / scale, h, w);
                plane.iter_mut().zip(back).for_each(|(d, v)| *d = v.clamp(0.0, 1.0));
            }
        }
        Degradation::GammaDarken { gamma, gain } => {
            if gamma != 1.0 || gain != 1.0 {
                out.data_mut().iter_mut().for_each(|v| *v = gain * v.powf(gamma));
            }
        }
    }
    Ok(out)
}
