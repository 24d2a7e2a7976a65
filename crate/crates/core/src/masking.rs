//! Patch grids over images and frame stacks, and seeded visible-subset
//! sampling for masked-autoencoder pretraining.
//!
//! Cells are indexed time-major: `(ct * gh + cy) * gw + cx`. A planar grid is
//! a spacetime grid with one frame and `patch_frames = 1`, so the two share
//! one code path.

use std::fmt;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

pub const DEFAULT_MASK_RATIO: f64 = 0.75;
pub const DEFAULT_PATCH_PX: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub patch_px: usize,
    pub patch_frames: usize,
}

impl Grid {
    pub fn gt(&self) -> usize {
        self.frames / self.patch_frames
    }

    pub fn gh(&self) -> usize {
        self.height / self.patch_px
    }

    pub fn gw(&self) -> usize {
        self.width / self.patch_px
    }

    pub fn total(&self) -> usize {
        self.gt() * self.gh() * self.gw()
    }

    /// `(ct, cy, cx)` of a flat cell index.
    pub fn cell(&self, index: usize) -> (usize, usize, usize) {
        let per_frame = self.gh() * self.gw();
        (index / per_frame, (index % per_frame) / self.gw(), index % self.gw())
    }
}

fn check_divisible(dim: &'static str, size: usize, patch: usize) -> Result<()> {
    if patch == 0 || size == 0 || size % patch != 0 {
        return Err(Error::NotDivisible { dim, size, patch });
    }
    Ok(())
}

/// Planar grid; `h` and `w` must be multiples of `patch_px`.
pub fn build_grid(h: usize, w: usize, patch_px: usize) -> Result<Grid> {
    build_spacetime_grid(1, h, w, patch_px, 1)
}

pub fn build_spacetime_grid(t: usize, h: usize, w: usize, patch_px: usize, patch_frames: usize) -> Result<Grid> {
    check_divisible("frames", t, patch_frames)?;
    check_divisible("height", h, patch_px)?;
    check_divisible("width", w, patch_px)?;
    Ok(Grid {
        frames: t,
        height: h,
        width: w,
        patch_px,
        patch_frames,
    })
}

/// Number of visible cells: `round((1 - ratio) * total)`, at least one.
pub fn visible_count(total: usize, mask_ratio: f64) -> usize {
    (((1.0 - mask_ratio) * total as f64).round() as usize).clamp(1, total)
}

/// Uniform sample without replacement, sorted ascending.
pub fn sample_visible(total: usize, mask_ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(mask_ratio > 0.0 && mask_ratio < 1.0) {
        return Err(Error::invalid(format!("mask ratio must lie in (0, 1), got {mask_ratio}")));
    }
    if total == 0 {
        return Err(Error::invalid("cannot sample from an empty grid"));
    }
    let mut rng = stream_rng(seed, Stream::Masking, &[]);
    let mut visible = sample(&mut rng, total, visible_count(total, mask_ratio)).into_vec();
    visible.sort_unstable();
    Ok(visible)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSpec {
    grid: Grid,
    mask_ratio: f64,
    seed: u64,
    visible: Vec<usize>,
}

impl MaskSpec {
    pub fn sample(grid: Grid, mask_ratio: f64, seed: u64) -> Result<Self> {
        let visible = sample_visible(grid.total(), mask_ratio, seed)?;
        Ok(MaskSpec {
            grid,
            mask_ratio,
            seed,
            visible,
        })
    }

    /// A spec with an explicit visible set, for ablations and tests.
    pub fn with_visible(grid: Grid, mut visible: Vec<usize>) -> Result<Self> {
        visible.sort_unstable();
        visible.dedup();
        if visible.is_empty() || visible.iter().any(|&v| v >= grid.total()) {
            return Err(Error::invalid("visible set must be non-empty and inside the grid"));
        }
        let mask_ratio = 1.0 - visible.len() as f64 / grid.total() as f64;
        Ok(MaskSpec {
            grid,
            mask_ratio,
            seed: 0,
            visible,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn visible(&self) -> &[usize] {
        &self.visible
    }

    pub fn mask_ratio(&self) -> f64 {
        self.mask_ratio
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn masked_cells(&self) -> usize {
        self.grid.total() - self.visible.len()
    }

    /// Per-cell flags, `true` where the cell is masked.
    pub fn cell_mask(&self) -> Vec<bool> {
        let mut masked = vec![true; self.grid.total()];
        for &v in &self.visible {
            masked[v] = false;
        }
        masked
    }

    /// The 0/1 pixel mask for a `N×(C·T)×H×W` tensor: 1 on masked pixels.
    pub fn pixel_mask(&self, shape: &[usize]) -> Result<Tensor> {
        let [n, c, h, w] = shape[..] else {
            return Err(Error::invalid(format!("mask needs an NCHW shape, got {shape:?}")));
        };
        let g = &self.grid;
        if h != g.height || w != g.width || c % g.frames != 0 {
            return Err(Error::invalid(format!(
                "grid {}x{}x{} does not fit tensor shape {shape:?}",
                g.frames, g.height, g.width
            )));
        }
        let per_frame = c / g.frames;
        let cells = self.cell_mask();
        let mut data = vec![0.0; n * c * h * w];
        for (idx, plane) in data.chunks_exact_mut(h * w).enumerate() {
            let ch = idx % c;
            let ct = (ch / per_frame) / g.patch_frames;
            for y in 0..h {
                let row_cell = (ct * g.gh() + y / g.patch_px) * g.gw();
                for x in 0..w {
                    if cells[row_cell + x / g.patch_px] {
                        plane[y * w + x] = 1.0;
                    }
                }
            }
        }
        Ok(Tensor::from_parts(shape.to_vec(), data))
    }

    /// Key-value description embedded in checkpoints and reports.
    pub fn describe(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.grid;
        writeln!(f, "grid = {},{},{}", g.gt(), g.gh(), g.gw())?;
        writeln!(f, "patch_px = {}", g.patch_px)?;
        writeln!(f, "patch_frames = {}", g.patch_frames)?;
        writeln!(f, "mask_ratio = {}", self.mask_ratio)?;
        write!(f, "seed = {}", self.seed)
    }
}

/// Replace every masked cell with `mask_value` across its channels.
///
/// Returns `(masked, mask01)` with `masked = x·(1 − mask01) + mask_value·mask01`.
pub fn apply_mask(x: &Tensor, spec: &MaskSpec, mask_value: f64) -> Result<(Tensor, Tensor)> {
    let mask = spec.pixel_mask(x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m == 1.0 { mask_value } else { v })
        .collect();
    Ok((Tensor::from_parts(x.shape().to_vec(), data), mask))
}
