//! Seeded synthetic datasets: textured images, translating clips, and
//! dead-leaves images as a stand-in pristine corpus.

use std::f64::consts::TAU;

use rand::Rng;

use crate::image_io::{FrameStack, ImageBuffer};
use crate::rng::{stream_rng, Stream, StreamRng};

const WAVES: usize = 4;
const BLOBS: usize = 3;

struct Wave {
    fy: f64,
    fx: f64,
    phase: f64,
    amp: [f64; 3],
}

struct Blob {
    cy: f64,
    cx: f64,
    radius: f64,
    level: [f64; 3],
}

/// Continuous pattern: oriented sinusoids plus soft discs, sampled per pixel.
struct Pattern {
    waves: Vec<Wave>,
    blobs: Vec<Blob>,
}

fn color(rng: &mut StreamRng, spread: f64) -> [f64; 3] {
    let base: f64 = rng.random_range(-1.0..1.0);
    [0, 1, 2].map(|_| base + rng.random_range(-spread..spread))
}

impl Pattern {
    fn random(rng: &mut StreamRng, h: usize, w: usize) -> Self {
        let waves = (0..WAVES)
            .map(|_| {
                let cycles = rng.random_range(1.0..6.0);
                let angle = rng.random_range(0.0..TAU);
                Wave {
                    fy: cycles * angle.sin() / h as f64,
                    fx: cycles * angle.cos() / w as f64,
                    phase: rng.random_range(0.0..TAU),
                    amp: color(rng, 0.3).map(|a| a * 0.5),
                }
            })
            .collect();
        let blobs = (0..BLOBS)
            .map(|_| Blob {
                cy: rng.random_range(0.0..h as f64),
                cx: rng.random_range(0.0..w as f64),
                radius: rng.random_range(0.15..0.35) * h.min(w) as f64,
                level: color(rng, 0.2),
            })
            .collect();
        Pattern { waves, blobs }
    }

    fn eval(&self, c: usize, y: f64, x: f64) -> f64 {
        let mut v: f64 = self
            .waves
            .iter()
            .map(|wv| wv.amp[c] * (TAU * (wv.fy * y + wv.fx * x) + wv.phase).sin())
            .sum();
        for b in &self.blobs {
            let d = ((y - b.cy).powi(2) + (x - b.cx).powi(2)).sqrt();
            // Logistic edge about one pixel wide.
            v += b.level[c] / (1.0 + ((d - b.radius) * 2.0).exp());
        }
        v
    }
}

fn render(p: &Pattern, h: usize, w: usize, channels: usize, dy: f64, dx: f64, scale: f64) -> ImageBuffer {
    let data: Vec<f64> = (0..channels)
        .flat_map(|c| (0..h).flat_map(move |y| (0..w).map(move |x| (c, y, x))))
        .map(|(c, y, x)| 0.5 + scale * p.eval(c, y as f64 - dy, x as f64 - dx))
        .collect();
    ImageBuffer::from_clamped(h, w, channels, data).expect("valid dimensions")
}

fn fit_scale(p: &Pattern, h: usize, w: usize, channels: usize) -> f64 {
    let peak = (0..channels)
        .flat_map(|c| (0..h).flat_map(move |y| (0..w).map(move |x| (c, y, x))))
        .map(|(c, y, x)| p.eval(c, y as f64, x as f64).abs())
        .fold(0.0, f64::max);
    if peak > 0.0 {
        0.4 / peak
    } else {
        0.0
    }
}

/// Textured image `index` of a dataset seeded by `seed`, values in `[0.1, 0.9]`.
pub fn textured_image(h: usize, w: usize, channels: usize, seed: u64, index: u64) -> ImageBuffer {
    let mut rng = stream_rng(seed, Stream::Synthetic, &[0x54, index]);
    let p = Pattern::random(&mut rng, h, w);
    let scale = fit_scale(&p, h, w, channels);
    render(&p, h, w, channels, 0.0, 0.0, scale)
}

pub fn textured_set(count: usize, h: usize, w: usize, channels: usize, seed: u64, offset: u64) -> Vec<ImageBuffer> {
    (0..count as u64).map(|i| textured_image(h, w, channels, seed, offset + i)).collect()
}

/// Clip of `frames` frames of a pattern drifting with a constant sub-pixel
/// velocity.
pub fn video_clip(frames: usize, h: usize, w: usize, channels: usize, seed: u64, index: u64) -> FrameStack {
    let mut rng = stream_rng(seed, Stream::Synthetic, &[0x56, index]);
    let p = Pattern::random(&mut rng, h, w);
    let (vy, vx): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let scale = fit_scale(&p, h, w, channels);
    let frames = (0..frames)
        .map(|t| render(&p, h, w, channels, vy * t as f64, vx * t as f64, scale))
        .collect();
    FrameStack::new(frames).expect("uniform frames")
}

pub fn video_set(count: usize, frames: usize, h: usize, w: usize, channels: usize, seed: u64, offset: u64) -> Vec<FrameStack> {
    (0..count as u64).map(|i| video_clip(frames, h, w, channels, seed, offset + i)).collect()
}

/// Grayscale dead-leaves image: occluding discs with power-law radii, which
/// reproduces the scale-invariant edge statistics of natural photographs.
pub fn dead_leaves(size: usize, seed: u64, index: u64) -> ImageBuffer {
    let mut rng = stream_rng(seed, Stream::Synthetic, &[0x444c, index]);
    let (r_min, r_max) = (2.0f64, size as f64 / 4.0);
    let mut img = vec![f64::NAN; size * size];
    let mut unfilled = size * size;
    // Front-to-back painting: each disc only fills pixels still uncovered.
    for _ in 0..20_000 {
        if unfilled == 0 {
            break;
        }
        // Density ∝ r^-3 via inverse transform sampling.
        let u: f64 = rng.random();
        let r = (r_min.powi(-2) - u * (r_min.powi(-2) - r_max.powi(-2))).powf(-0.5);
        let cy: f64 = rng.random_range(-r..size as f64 + r);
        let cx: f64 = rng.random_range(-r..size as f64 + r);
        let level: f64 = rng.random_range(0.1..0.9);
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize).min(size);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(size);
        for y in y0..y1 {
            for x in x0..x1 {
                let d2 = (y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2);
                let px = &mut img[y * size + x];
                if d2 <= r * r && px.is_nan() {
                    *px = level;
                    unfilled -= 1;
                }
            }
        }
    }
    for v in img.iter_mut().filter(|v| v.is_nan()) {
        *v = 0.5;
    }
    // Light blur: real optics never produce perfect step edges.
    let mut out = img.clone();
    for y in 0..size {
        for x in 0..size {
            let mut acc = 0.0;
            let mut n = 0.0;
            for (dy, dx) in [(0i64, 0i64), (-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                if yy >= 0 && xx >= 0 && (yy as usize) < size && (xx as usize) < size {
                    let wgt = if dy == 0 && dx == 0 { 4.0 } else { 1.0 };
                    acc += wgt * img[yy as usize * size + xx as usize];
                    n += wgt;
                }
            }
            out[y * size + x] = acc / n;
        }
    }
    ImageBuffer::from_clamped(size, size, 1, out).expect("valid dimensions")
}

pub fn pristine_corpus(count: usize, size: usize, seed: u64) -> Vec<ImageBuffer> {
    (0..count as u64).map(|i| dead_leaves(size, seed, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = textured_image(16, 16, 3, 1, 2);
        assert_eq!(a, textured_image(16, 16, 3, 1, 2));
        assert_ne!(a, textured_image(16, 16, 3, 1, 3));
        assert!(a.data().iter().all(|v| (0.1 - 1e-12..=0.9 + 1e-12).contains(v)));
    }

    #[test]
    fn clips_move() {
        let clip = video_clip(3, 16, 16, 3, 0, 0);
        assert_eq!(clip.len(), 3);
        assert_ne!(clip.frames()[0], clip.frames()[2]);
    }

    #[test]
    fn dead_leaves_has_structure() {
        let img = dead_leaves(64, 0, 0);
        let d = img.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        assert!(var > 1e-3);
    }
}
