//! Training objective: a pixel loss plus a weighted feature-space distance
//! measured by a frozen MAE encoder,
//!
//! ```text
//! L = base(pred, gt) + λ · feat(E(pred), E(gt))
//! ```
//!
//! Both terms are mean-reduced. The crop variant evaluates the feature term
//! on aligned random crops of `pred` and `gt` and averages over crops.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mae::MaeModel;
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceKind {
    L1,
    L2,
}

impl DistanceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Some(DistanceKind::L1),
            "l2" => Some(DistanceKind::L2),
            _ => None,
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::L1 => "L1",
            DistanceKind::L2 => "L2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchVariant {
    pub crop_px: usize,
    pub crops_per_step: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub base: DistanceKind,
    pub lambda: f64,
    pub feature: DistanceKind,
    pub patch: Option<PatchVariant>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            base: DistanceKind::L1,
            lambda: 1.0,
            feature: DistanceKind::L2,
            patch: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be a finite value >= 0, got {}", self.lambda)));
        }
        if let Some(p) = &self.patch {
            if p.crop_px == 0 || p.crops_per_step == 0 {
                return Err(Error::invalid("crop_px and crops_per_step must be >= 1"));
            }
        }
        Ok(())
    }
}

/// Handles to the loss terms recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub base: Var,
    /// Unweighted feature distance; `None` when no encoder is in use.
    pub feature: Option<Var>,
}

/// Mean L1 or L2 distance between equally shaped tensors.
pub fn feature_distance(tape: &mut Tape, a: Var, b: Var, kind: DistanceKind) -> Result<Var> {
    match kind {
        DistanceKind::L1 => tape.l1_loss(a, b),
        DistanceKind::L2 => tape.l2_loss(a, b),
    }
}

/// Frozen-encoder features of `x` with no gradient path.
pub fn encoder_features(encoder: &MaeModel, x: &Tensor) -> Result<Tensor> {
    encoder.encode(x)
}

fn combine(tape: &mut Tape, base: Var, feature: Option<Var>, lambda: f64) -> Result<Var> {
    match feature {
        Some(f) if lambda != 0.0 => {
            let weighted = tape.mul_scalar(f, lambda)?;
            tape.add(base, weighted)
        }
        _ => Ok(base),
    }
}

/// Full-image objective. `gt_features` may carry a cached `E(gt)`; it is
/// computed on the fly otherwise. Encoder weights enter the tape as constants,
/// so gradients reach `pred` and never the encoder.
pub fn total_loss(
    tape: &mut Tape,
    pred: Var,
    gt: Var,
    encoder: Option<&MaeModel>,
    cfg: &LossConfig,
    gt_features: Option<&Tensor>,
) -> Result<LossTerms> {
    cfg.validate()?;
    let base = feature_distance(tape, pred, gt, cfg.base)?;
    let feature = match encoder {
        None => None,
        Some(enc) => {
            let vars = enc.register(tape, false);
            let fp = enc.encode_on(tape, &vars, pred)?;
            let fg = match gt_features {
                Some(cached) => tape.constant(cached.clone()),
                None => {
                    let gv = tape.value(gt).clone();
                    tape.constant(enc.encode(&gv)?)
                }
            };
            Some(feature_distance(tape, fp, fg, cfg.feature)?)
        }
    };
    let total = combine(tape, base, feature, cfg.lambda)?;
    Ok(LossTerms { total, base, feature })
}

/// Crop origins `(top, left)` for one evaluation of the patch variant.
pub fn crop_schedule(height: usize, width: usize, patch: &PatchVariant, key: u64) -> Result<Vec<(usize, usize)>> {
    if patch.crop_px > height || patch.crop_px > width {
        return Err(Error::invalid(format!(
            "crop of {} px does not fit a {height}x{width} image",
            patch.crop_px
        )));
    }
    let mut rng = stream_rng(patch.seed, Stream::Crops, &[key]);
    Ok((0..patch.crops_per_step)
        .map(|_| {
            let top = rng.random_range(0..=height - patch.crop_px);
            let left = rng.random_range(0..=width - patch.crop_px);
            (top, left)
        })
        .collect())
}

/// Crop-sampled objective: base term over the whole image, feature term
/// averaged over `crops_per_step` aligned crops drawn for `key` (the training
/// step, typically).
pub fn total_loss_patch(
    tape: &mut Tape,
    pred: Var,
    gt: Var,
    encoder: &MaeModel,
    cfg: &LossConfig,
    key: u64,
) -> Result<LossTerms> {
    cfg.validate()?;
    let patch = cfg
        .patch
        .ok_or_else(|| Error::invalid("patch loss requested without a patch variant"))?;
    let (_, _, h, w) = tape.value(pred).dims4()?;
    tape.value(pred).expect_same_shape("total_loss_patch", tape.value(gt))?;
    let base = feature_distance(tape, pred, gt, cfg.base)?;
    let vars = encoder.register(tape, false);
    let crops = crop_schedule(h, w, &patch, key)?;
    let mut sum: Option<Var> = None;
    for &(top, left) in &crops {
        let cp = tape.crop(pred, top, left, patch.crop_px, patch.crop_px)?;
        let cg = tape.value(gt).crop(top, left, patch.crop_px, patch.crop_px)?;
        let fp = encoder.encode_on(tape, &vars, cp)?;
        let fg = tape.constant(encoder.encode(&cg)?);
        let d = feature_distance(tape, fp, fg, cfg.feature)?;
        sum = Some(match sum {
            None => d,
            Some(s) => tape.add(s, d)?,
        });
    }
    let mut feature = sum.expect("crops_per_step >= 1");
    if crops.len() > 1 {
        feature = tape.mul_scalar(feature, 1.0 / crops.len() as f64)?;
    }
    let total = combine(tape, base, Some(feature), cfg.lambda)?;
    Ok(LossTerms {
        total,
        base,
        feature: Some(feature),
    })
}

/// Tape-free evaluation of the objective, returning `(total, base, feature)`.
pub fn evaluate_loss(
    pred: &Tensor,
    gt: &Tensor,
    encoder: Option<&MaeModel>,
    cfg: &LossConfig,
    key: u64,
) -> Result<(f64, f64, f64)> {
    pred.expect_same_shape("total_loss", gt)?;
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let g = tape.constant(gt.clone());
    let terms = match (encoder, cfg.patch) {
        (Some(enc), Some(_)) => total_loss_patch(&mut tape, p, g, enc, cfg, key)?,
        _ => total_loss(&mut tape, p, g, encoder, cfg, None)?,
    };
    let feature = terms.feature.map_or(0.0, |f| tape.value(f).item());
    Ok((tape.value(terms.total).item(), tape.value(terms.base).item(), feature))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mae::init_mae;

    fn noise(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = stream_rng(seed, Stream::Synthetic, &[]);
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn feature_distance_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::ones(&[2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let l1 = feature_distance(&mut tape, a, b, DistanceKind::L1).unwrap();
        let l2 = feature_distance(&mut tape, a, b, DistanceKind::L2).unwrap();
        let same = feature_distance(&mut tape, a, a, DistanceKind::L2).unwrap();
        assert_eq!(tape.value(l1).item(), 1.0);
        assert_eq!(tape.value(l2).item(), 1.0);
        assert_eq!(tape.value(same).item(), 0.0);
        let c = tape.constant(Tensor::ones(&[3]));
        assert!(feature_distance(&mut tape, a, c, DistanceKind::L1).is_err());
    }

    #[test]
    fn lambda_validation() {
        let cfg = LossConfig {
            lambda: -1.0,
            ..LossConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn crop_larger_than_image_rejected() {
        let enc = init_mae(3, 8, 2, 0).unwrap();
        let cfg = LossConfig {
            patch: Some(PatchVariant {
                crop_px: 40,
                crops_per_step: 1,
                seed: 0,
            }),
            ..LossConfig::default()
        };
        let x = noise(&[1, 3, 32, 32], 1);
        assert!(evaluate_loss(&x, &x, Some(&enc), &cfg, 0).is_err());
    }

    #[test]
    fn encoder_channel_mismatch() {
        let enc = init_mae(1, 8, 2, 0).unwrap();
        let x = noise(&[1, 3, 16, 16], 1);
        assert!(matches!(
            evaluate_loss(&x, &x, Some(&enc), &LossConfig::default(), 0),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn crop_schedule_deterministic() {
        let p = PatchVariant {
            crop_px: 8,
            crops_per_step: 2,
            seed: 4,
        };
        let a = crop_schedule(32, 32, &p, 7).unwrap();
        assert_eq!(a, crop_schedule(32, 32, &p, 7).unwrap());
        assert!(a.iter().all(|&(t, l)| t <= 24 && l <= 24));
    }
}
