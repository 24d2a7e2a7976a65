//! Full-reference metrics (PSNR, SSIM, SAM, ERGAS) over `N×C×H×W` tensors
//! with values in `[0, 1]`, and the no-reference NIQE score.

pub mod niqe;

use std::fmt;

pub use niqe::{niqe_fit, niqe_score, NiqeModel};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// PSNR reported for identical inputs (and the ceiling for all inputs).
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// ERGAS bands whose reference mean is below this are skipped.
pub const ERGAS_MIN_BAND_MEAN: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Psnr,
    Ssim,
    Niqe,
    Sam,
    Ergas,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PSNR" => Some(Metric::Psnr),
            "SSIM" => Some(Metric::Ssim),
            "NIQE" => Some(Metric::Niqe),
            "SAM" => Some(Metric::Sam),
            "ERGAS" => Some(Metric::Ergas),
            _ => None,
        }
    }

    pub fn higher_is_better(&self) -> bool {
        matches!(self, Metric::Psnr | Metric::Ssim)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Psnr => "PSNR",
            Metric::Ssim => "SSIM",
            Metric::Niqe => "NIQE",
            Metric::Sam => "SAM",
            Metric::Ergas => "ERGAS",
        })
    }
}

pub fn mse(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    pred.expect_same_shape("mse", gt)?;
    let sum: f64 = pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / pred.len() as f64)
}

/// `10·log10(peak² / MSE)` in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(pred: &Tensor, gt: &Tensor, peak: f64) -> Result<f64> {
    let m = mse(pred, gt)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian taps.
pub(crate) fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable "valid" filtering: output is `(h−k+1)×(w−k+1)`.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|j| taps[j] * horiz[(y + j) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, taps: &[f64], c1: f64, c2: f64) -> f64 {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, h, w, taps);
    let my = filter_valid(y, h, w, taps);
    let sxx = filter_valid(&xx, h, w, taps);
    let syy = filter_valid(&yy, h, w, taps);
    let sxy = filter_valid(&xy, h, w, taps);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (a, b) = (mx[i], my[i]);
        let var_x = sxx[i] - a * a;
        let var_y = syy[i] - b * b;
        let cov = sxy[i] - a * b;
        let num = (2.0 * a * b + c1) * (2.0 * cov + c2);
        let den = (a * a + b * b + c1) * (var_x + var_y + c2);
        total += num / den;
    }
    total / mx.len() as f64
}

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), `C1 = (0.01·peak)²`,
/// `C2 = (0.03·peak)²`, averaged over valid window positions, then over
/// channels and batch.
pub fn ssim(pred: &Tensor, gt: &Tensor, peak: f64) -> Result<f64> {
    pred.expect_same_shape("ssim", gt)?;
    let (n, c, h, w) = pred.dims4()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let plane = h * w;
    let total: f64 = (0..n * c)
        .map(|p| {
            let range = p * plane..(p + 1) * plane;
            ssim_plane(&pred.data()[range.clone()], &gt.data()[range], h, w, &taps, c1, c2)
        })
        .sum();
    Ok(total / (n * c) as f64)
}

/// Angle between two vectors, via `2·atan2(|â − b̂|, |â + b̂|)`. Equivalent to
/// `acos(⟨a,b⟩ / (|a||b|))` but without its loss of precision near 0 and π.
/// Zero-norm inputs give 0.
fn spectral_angle(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Mean per-pixel spectral angle in radians; spectra run along channels.
pub fn sam(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    pred.expect_same_shape("sam", gt)?;
    let (n, c, h, w) = pred.dims4()?;
    if c < 2 {
        return Err(Error::invalid(format!("SAM needs at least 2 channels, got {c}")));
    }
    let plane = h * w;
    let mut a = vec![0.0; c];
    let mut b = vec![0.0; c];
    let mut total = 0.0;
    for s in 0..n {
        for p in 0..plane {
            for ch in 0..c {
                let idx = (s * c + ch) * plane + p;
                a[ch] = pred.data()[idx];
                b[ch] = gt.data()[idx];
            }
            total += spectral_angle(&a, &b);
        }
    }
    Ok(total / (n * plane) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ergas {
    pub value: f64,
    /// Bands skipped because their reference mean is ~0.
    pub excluded_bands: Vec<usize>,
}

/// `100 · ratio · sqrt(mean_b (RMSE_b / μ_b)²)` over channel bands, where
/// `ratio` is the high/low resolution ratio (e.g. 1/4 for ×4 fusion).
pub fn ergas(pred: &Tensor, gt: &Tensor, scale_ratio: f64) -> Result<Ergas> {
    pred.expect_same_shape("ergas", gt)?;
    let (n, c, h, w) = pred.dims4()?;
    let plane = h * w;
    let mut excluded = Vec::new();
    let mut acc = 0.0;
    let mut used = 0;
    for band in 0..c {
        let (mut se, mut sum) = (0.0, 0.0);
        for s in 0..n {
            let off = (s * c + band) * plane;
            for i in off..off + plane {
                let d = pred.data()[i] - gt.data()[i];
                se += d * d;
                sum += gt.data()[i];
            }
        }
        let count = (n * plane) as f64;
        let mean = sum / count;
        if mean.abs() < ERGAS_MIN_BAND_MEAN {
            excluded.push(band);
            continue;
        }
        let rmse = (se / count).sqrt();
        acc += (rmse / mean).powi(2);
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("ERGAS: every band has a ~zero reference mean"));
    }
    Ok(Ergas {
        value: 100.0 * scale_ratio * (acc / used as f64).sqrt(),
        excluded_bands: excluded,
    })
}
