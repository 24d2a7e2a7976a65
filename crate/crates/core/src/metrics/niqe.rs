//! NIQE: distance between a multivariate Gaussian fitted to natural-scene
//! statistics of an image and one fitted on a corpus of pristine images.
//!
//! Per patch and per scale (full and half resolution) the luminance is turned
//! into MSCN coefficients (7×7 Gaussian, σ = 7/6). A generalized Gaussian is
//! fitted to the coefficients (shape, std) and an asymmetric one to each of
//! the four neighbour products H, V, D1, D2 (shape, mean, left var, right
//! var), giving 18 features per scale and 36 in total. Shapes are found by
//! nearest-entry lookup in a table of `r(γ) = Γ(1/γ)Γ(3/γ)/Γ(2/γ)²` over
//! `γ ∈ [0.2, 10]` in steps of 0.001.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::image_io::ImageBuffer;
use crate::mae::checkpoint::verify_envelope;
use crate::resample::resize_plane;
use crate::tensor::mten::{read_tensor, write_tensor, Reader};
use crate::tensor::Tensor;

pub const DEFAULT_PATCH_SIZE: usize = 96;
/// Fraction of each pristine image's patches kept, sharpest first.
pub const DEFAULT_KEEP_FRACTION: f64 = 0.75;
pub const MIN_CORPUS_IMAGES: usize = 10;
pub const REGULARIZATION: f64 = 1e-6;
pub const FEATURES_PER_SCALE: usize = 18;
pub const FEATURE_DIM: usize = 2 * FEATURES_PER_SCALE;

const MSCN_WINDOW: usize = 7;
const MSCN_SIGMA: f64 = 7.0 / 6.0;
/// Stabilizer of the MSCN divisor, on the 0–255 luminance scale.
const MSCN_C: f64 = 1.0;
const GAMMA_MIN: f64 = 0.2;
const GAMMA_STEP: f64 = 0.001;
const GAMMA_COUNT: usize = 9801;

const MAGIC: &[u8; 4] = b"NIQE";
const VERSION: u8 = 1;
const FORMAT: &str = "NIQE";

#[derive(Clone, Debug, PartialEq)]
pub struct NiqeModel {
    pub patch_size: usize,
    pub keep_fraction: f64,
    /// Mean feature vector, length [`FEATURE_DIM`].
    pub mean: Vec<f64>,
    /// Row-major `FEATURE_DIM × FEATURE_DIM` covariance.
    pub cov: Vec<f64>,
}

fn shape_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..GAMMA_COUNT)
            .map(|i| {
                let g = GAMMA_MIN + i as f64 * GAMMA_STEP;
                let r = (ln_gamma(1.0 / g) + ln_gamma(3.0 / g) - 2.0 * ln_gamma(2.0 / g)).exp();
                (g, r)
            })
            .collect()
    })
}

/// Table entry minimizing `|r(γ) − target|`; first entry wins ties.
fn nearest_shape(target: f64, reciprocal: bool) -> f64 {
    let mut best = (f64::INFINITY, GAMMA_MIN);
    for &(g, r) in shape_table() {
        let value = if reciprocal { 1.0 / r } else { r };
        let d = (value - target).abs();
        if d < best.0 {
            best = (d, g);
        }
    }
    best.1
}

/// Generalized Gaussian `(shape, std)` by moment matching.
fn fit_ggd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let second = values.iter().map(|v| v * v).sum::<f64>() / n;
    let first = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    if first == 0.0 {
        // Degenerate (flat) patch: report a Gaussian shape with zero spread.
        return (2.0, 0.0);
    }
    (nearest_shape(second / (first * first), false), second.sqrt())
}

/// Asymmetric generalized Gaussian `(shape, mean, left var, right var)`.
fn fit_aggd(values: &[f64]) -> [f64; 4] {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &v in values {
        if v < 0.0 {
            ls += v * v;
            ln += 1;
        } else if v > 0.0 {
            rs += v * v;
            rn += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    if sq_sum == 0.0 {
        return [2.0, 0.0, 0.0, 0.0];
    }
    let left = if ln > 0 { (ls / ln as f64).sqrt() } else { 0.0 };
    let right = if rn > 0 { (rs / rn as f64).sqrt() } else { 0.0 };
    let n = values.len() as f64;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let alpha = if right == 0.0 {
        GAMMA_MIN
    } else {
        let g = left / right;
        let r_norm = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
        nearest_shape(r_norm, true)
    };
    let spread = (gamma(1.0 / alpha) / gamma(3.0 / alpha)).sqrt();
    let mean = (right - left) * spread * gamma(2.0 / alpha) / gamma(1.0 / alpha);
    [alpha, mean, left * left, right * right]
}

/// Same-size Gaussian filtering with replicated borders.
fn filter_same(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut horiz = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            horiz[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[y * w + clamp(x as isize + k as isize - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * horiz[clamp(y as isize + k as isize - half, h) * w + x])
                .sum();
        }
    }
    out
}

/// MSCN coefficients and the local standard deviation field.
fn mscn(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let taps = super::gaussian_taps(MSCN_WINDOW, MSCN_SIGMA);
    let mu = filter_same(plane, h, w, &taps);
    let sq: Vec<f64> = plane.iter().map(|v| v * v).collect();
    let mu_sq = filter_same(&sq, h, w, &taps);
    let sigma: Vec<f64> = mu_sq.iter().zip(&mu).map(|(s, m)| (s - m * m).abs().sqrt()).collect();
    let coeffs = plane
        .iter()
        .zip(&mu)
        .zip(&sigma)
        .map(|((v, m), s)| (v - m) / (s + MSCN_C))
        .collect();
    (coeffs, sigma)
}

fn patch_features(coeffs: &[f64], w: usize, y0: usize, x0: usize, size: usize, out: &mut Vec<f64>) {
    let at = |y: usize, x: usize| coeffs[(y0 + y) * w + x0 + x];
    let values: Vec<f64> = (0..size).flat_map(|y| (0..size).map(move |x| (y, x))).map(|(y, x)| at(y, x)).collect();
    let (shape, std) = fit_ggd(&values);
    out.extend([shape, std]);
    // Horizontal, vertical, main diagonal, anti-diagonal neighbours.
    for (dy, dx) in [(0isize, 1isize), (1, 0), (1, 1), (1, -1)] {
        let mut products = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if ny < size as isize && nx >= 0 && nx < size as isize {
                    products.push(at(y, x) * at(ny as usize, nx as usize));
                }
            }
        }
        out.extend(fit_aggd(&products));
    }
}

struct PatchStats {
    features: Vec<f64>,
    sharpness: f64,
}

/// Features of every non-overlapping patch (top-left aligned grid).
fn image_patches(img: &ImageBuffer, patch: usize) -> Result<Vec<PatchStats>> {
    let (ph, pw) = (img.height() / patch, img.width() / patch);
    if ph == 0 || pw == 0 {
        return Err(Error::invalid(format!(
            "NIQE needs images of at least {patch}x{patch}, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    let (h, w) = (ph * patch, pw * patch);
    let gray = img.to_gray();
    let full_w = img.width();
    let plane: Vec<f64> = (0..h)
        .flat_map(|y| gray[y * full_w..y * full_w + w].iter().map(|v| v * 255.0))
        .collect();
    let half = resize_plane(&plane, h, w, h / 2, w / 2);
    let (c1, sigma1) = mscn(&plane, h, w);
    let (c2, _) = mscn(&half, h / 2, w / 2);

    let mut out = Vec::with_capacity(ph * pw);
    for py in 0..ph {
        for px in 0..pw {
            let mut features = Vec::with_capacity(FEATURE_DIM);
            patch_features(&c1, w, py * patch, px * patch, patch, &mut features);
            let hp = patch / 2;
            patch_features(&c2, w / 2, py * hp, px * hp, hp, &mut features);
            let mut sharp = 0.0;
            for y in py * patch..(py + 1) * patch {
                sharp += sigma1[y * w + px * patch..y * w + (px + 1) * patch].iter().sum::<f64>();
            }
            out.push(PatchStats {
                features,
                sharpness: sharp / (patch * patch) as f64,
            });
        }
    }
    Ok(out)
}

fn mean_and_cov(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    if n > 1 {
        for i in 0..d {
            for j in i..d {
                let s: f64 = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
                cov[i * d + j] = s;
                cov[j * d + i] = s;
            }
        }
    }
    (mean, cov)
}

/// Fit the pristine model on a corpus of at least [`MIN_CORPUS_IMAGES`]
/// images, each at least twice the patch size in both dimensions.
pub fn niqe_fit(corpus: &[ImageBuffer], patch_size: usize, keep_fraction: f64) -> Result<NiqeModel> {
    if corpus.len() < MIN_CORPUS_IMAGES {
        return Err(Error::invalid(format!(
            "NIQE corpus needs at least {MIN_CORPUS_IMAGES} images, got {}",
            corpus.len()
        )));
    }
    if patch_size < 8 || patch_size % 2 != 0 {
        return Err(Error::invalid("NIQE patch size must be even and at least 8"));
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invalid("NIQE keep fraction must lie in (0, 1]"));
    }
    let mut rows = Vec::new();
    for (i, img) in corpus.iter().enumerate() {
        if img.height() < 2 * patch_size || img.width() < 2 * patch_size {
            return Err(Error::invalid(format!(
                "corpus image {i} is {}x{}, needs at least {}x{}",
                img.height(),
                img.width(),
                2 * patch_size,
                2 * patch_size
            )));
        }
        let mut patches = image_patches(img, patch_size)?;
        patches.sort_by(|a, b| b.sharpness.total_cmp(&a.sharpness));
        let keep = ((patches.len() as f64 * keep_fraction).ceil() as usize).max(1);
        rows.extend(patches.into_iter().take(keep).map(|p| p.features));
    }
    let (mean, cov) = mean_and_cov(&rows);
    Ok(NiqeModel {
        patch_size,
        keep_fraction,
        mean,
        cov,
    })
}

/// `sqrt((ν−μ)ᵀ ((Σ + Σ_img)/2 + εI)⁻¹ (ν−μ))`.
pub fn niqe_score(img: &ImageBuffer, model: &NiqeModel) -> Result<f64> {
    let patches = image_patches(img, model.patch_size)?;
    let rows: Vec<Vec<f64>> = patches.into_iter().map(|p| p.features).collect();
    let (nu, cov_img) = mean_and_cov(&rows);
    let d = FEATURE_DIM;
    let m = DMatrix::from_fn(d, d, |i, j| {
        let v = (model.cov[i * d + j] + cov_img[i * d + j]) / 2.0;
        if i == j {
            v + REGULARIZATION
        } else {
            v
        }
    });
    let diff = DVector::from_fn(d, |i, _| nu[i] - model.mean[i]);
    let solved = match m.clone().cholesky() {
        Some(ch) => ch.solve(&diff),
        None => m
            .lu()
            .solve(&diff)
            .ok_or_else(|| Error::invalid("NIQE covariance is singular"))?,
    };
    Ok(diff.dot(&solved).max(0.0).sqrt())
}

impl NiqeModel {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.patch_size as u32).to_le_bytes());
        out.extend_from_slice(&self.keep_fraction.to_le_bytes());
        write_tensor(&mut out, &Tensor::from_parts(vec![FEATURE_DIM], self.mean.clone()));
        write_tensor(&mut out, &Tensor::from_parts(vec![FEATURE_DIM, FEATURE_DIM], self.cov.clone()));
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let body = verify_envelope(bytes, MAGIC, VERSION, FORMAT)?;
        let mut r = Reader::new(body, FORMAT);
        let patch_size = r.u32()? as usize;
        let keep_fraction = r.f64()?;
        let mean = read_tensor(&mut r)?;
        let cov = read_tensor(&mut r)?;
        if mean.shape() != [FEATURE_DIM] || cov.shape() != [FEATURE_DIM, FEATURE_DIM] || r.remaining() != 0 {
            return Err(Error::Malformed {
                format: FORMAT,
                reason: "unexpected tensor shapes".into(),
            });
        }
        Ok(NiqeModel {
            patch_size,
            keep_fraction,
            mean: mean.into_data(),
            cov: cov.into_data(),
        })
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
