use rand::Rng;

use super::{MaeModel, PretrainMeta};
use crate::error::{Error, Result};
use crate::masking::{apply_mask, build_spacetime_grid, visible_count, MaskSpec, DEFAULT_MASK_RATIO, DEFAULT_PATCH_PX};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::tensor::{Optimizer, OptimizerKind, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossRegion {
    /// Squared error averaged over masked pixels only.
    MaskedOnly,
    /// Squared error over the whole image.
    AllPixels,
}

impl LossRegion {
    pub fn name(&self) -> &'static str {
        match self {
            LossRegion::MaskedOnly => "masked_only",
            LossRegion::AllPixels => "all_pixels",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "masked_only" => Some(LossRegion::MaskedOnly),
            "all_pixels" => Some(LossRegion::AllPixels),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub mask_ratio: f64,
    pub patch_px: usize,
    /// Frames per sample; inputs carry `frames · C` stacked channels.
    pub frames: usize,
    pub patch_frames: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub loss_region: LossRegion,
    pub mask_value: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            mask_ratio: DEFAULT_MASK_RATIO,
            patch_px: DEFAULT_PATCH_PX,
            frames: 1,
            patch_frames: 1,
            steps: 2000,
            batch_size: 4,
            optimizer: OptimizerKind::adam(),
            lr: 1e-3,
            loss_region: LossRegion::MaskedOnly,
            mask_value: 0.0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::invalid("pretraining needs steps >= 1 and batch_size >= 1"));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::invalid(format!("mask_ratio must lie in (0, 1), got {}", self.mask_ratio)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.frames == 0 || self.patch_frames == 0 {
            return Err(Error::invalid("frames and patch_frames must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub model: MaeModel,
    /// Loss at each step, before that step's update.
    pub losses: Vec<f64>,
}

/// Reconstruction loss for `rec` against `target`. With
/// [`LossRegion::MaskedOnly`] this is `Σ(mask·(rec−target)²) / Σmask`, built
/// from tape ops so it differentiates like any other graph.
pub fn reconstruction_loss(
    tape: &mut Tape,
    rec: Var,
    target: Var,
    mask: &Tensor,
    region: LossRegion,
) -> Result<Var> {
    match region {
        LossRegion::AllPixels => tape.l2_loss(rec, target),
        LossRegion::MaskedOnly => {
            let covered = mask.sum();
            if covered == 0.0 {
                return Err(Error::invalid("mask covers no pixels"));
            }
            let diff = tape.sub(rec, target)?;
            let masked = tape.mask_mul(diff, mask)?;
            let zero = tape.constant(Tensor::zeros(mask.shape()));
            let mean_all = tape.l2_loss(masked, zero)?;
            tape.mul_scalar(mean_all, mask.len() as f64 / covered)
        }
    }
}

/// Mask seed for `(run seed, step, image index)`.
pub fn mask_seed(run_seed: u64, step: usize, image_index: usize) -> u64 {
    derive_seed(run_seed, Stream::Masking, &[step as u64, image_index as u64])
}

/// Self-supervised masked-reconstruction training of `model` on `dataset`
/// (each item `1×(C·frames)×H×W`).
pub fn pretrain(model: MaeModel, dataset: &[Tensor], cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let first = dataset.first().ok_or_else(|| Error::invalid("pretraining dataset is empty"))?;
    let (_, c, h, w) = first.dims4()?;
    for item in dataset {
        if item.shape() != first.shape() {
            return Err(Error::shape("pretrain dataset", first.shape(), item.shape()));
        }
    }
    if c != model.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: model.in_channels(),
            found: c,
        });
    }
    if c % cfg.frames != 0 {
        return Err(Error::invalid(format!("{c} channels cannot hold {} frames", cfg.frames)));
    }
    let grid = build_spacetime_grid(cfg.frames, h, w, cfg.patch_px, cfg.patch_frames)?;
    if visible_count(grid.total(), cfg.mask_ratio) == grid.total() {
        return Err(Error::invalid("mask ratio leaves every cell visible"));
    }

    let mut model = model;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rng = stream_rng(cfg.seed, Stream::Batch, &[step as u64]);
        let picks: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..dataset.len())).collect();
        let mut inputs = Vec::with_capacity(picks.len());
        let mut masks = Vec::with_capacity(picks.len());
        for &idx in &picks {
            let spec = MaskSpec::sample(grid, cfg.mask_ratio, mask_seed(cfg.seed, step, idx))?;
            let (masked, mask) = apply_mask(&dataset[idx], &spec, cfg.mask_value)?;
            inputs.push(masked);
            masks.push(mask);
        }
        let targets: Vec<Tensor> = picks.iter().map(|&i| dataset[i].clone()).collect();
        let masked = Tensor::cat_batch(&inputs)?;
        let mask = Tensor::cat_batch(&masks)?;
        let target = Tensor::cat_batch(&targets)?;

        let mut tape = Tape::new();
        let vars = model.register(&mut tape, true);
        let xv = tape.constant(masked);
        let tv = tape.constant(target);
        let diverged = |e: Error| Error::Diverged {
            step,
            detail: e.to_string(),
        };
        let rec = model.reconstruct_on(&mut tape, &vars, xv).map_err(diverged)?;
        let loss = reconstruction_loss(&mut tape, rec, tv, &mask, cfg.loss_region).map_err(diverged)?;
        losses.push(tape.value(loss).item());
        let mut grads = tape.backward(loss).map_err(diverged)?;
        let grads: Vec<Tensor> = vars
            .all()
            .into_iter()
            .map(|v| grads.take(v).expect("trainable weight has a gradient"))
            .collect();
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        opt.step(&mut model.params_mut(), &grad_refs)?;
    }
    model.set_pretrain_meta(PretrainMeta {
        patch_px: cfg.patch_px,
        patch_frames: cfg.patch_frames,
        frames: cfg.frames,
        mask_ratio: cfg.mask_ratio,
        seed: cfg.seed,
        steps: cfg.steps,
    });
    Ok(PretrainOutcome { model, losses })
}
