//! Restoration experiments: data preparation, training under a loss
//! configuration, and evaluation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use super::degrade::{degrade, Degradation, DegradationSpec};
use super::model::RestorationModel;
use super::report::{MetricTable, RunReport, StepLog};
use super::synth;
use crate::error::{Error, Result};
use crate::image_io::{load_image_dir, load_video_dir, stack_frames, to_tensor, unstack_frames, write_pnm, ImageBuffer};
use crate::loss::{total_loss, total_loss_patch, DistanceKind, LossConfig, PatchVariant};
use crate::mae::{load_checkpoint_expecting, weights_checksum, MaeModel};
use crate::metrics::{ergas, niqe_score, psnr, sam, ssim, Metric, NiqeModel};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Optimizer, OptimizerKind, Tape, Tensor};

/// Validation images are degraded under indices offset by this, so their
/// noise never coincides with a training image's.
pub const VAL_INDEX_OFFSET: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Denoise,
    SuperResolution,
    Enhance,
    VideoDenoise,
}

impl Task {
    pub const NAMES: &'static [&'static str] = &["denoise", "sr", "enhance", "video_denoise"];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "denoise" => Some(Task::Denoise),
            "sr" => Some(Task::SuperResolution),
            "enhance" => Some(Task::Enhance),
            "video_denoise" => Some(Task::VideoDenoise),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Denoise => "denoise",
            Task::SuperResolution => "sr",
            Task::Enhance => "enhance",
            Task::VideoDenoise => "video_denoise",
        }
    }

    pub fn is_video(&self) -> bool {
        matches!(self, Task::VideoDenoise)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Configuration {
    Original,
    Ccmae,
    PCcmae,
}

impl Configuration {
    pub const NAMES: &'static [&'static str] = &["original", "ccmae", "p_ccmae"];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().trim_start_matches('+') {
            "original" => Some(Configuration::Original),
            "ccmae" => Some(Configuration::Ccmae),
            "p_ccmae" => Some(Configuration::PCcmae),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Configuration::Original => "original",
            Configuration::Ccmae => "ccmae",
            Configuration::PCcmae => "p_ccmae",
        }
    }

    pub fn uses_encoder(&self) -> bool {
        !matches!(self, Configuration::Original)
    }
}

impl fmt::Display for Configuration {
    /// Row label in comparison tables.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Configuration::Original => "Original",
            Configuration::Ccmae => "+CCMAE",
            Configuration::PCcmae => "+P_CCMAE",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    /// Folder of clean training images (clip folders for video); synthetic data when unset.
    pub train_dir: Option<PathBuf>,
    pub val_dir: Option<PathBuf>,
    pub synthetic_train: usize,
    pub synthetic_val: usize,
    pub size: usize,
    pub channels: usize,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegradeConfig {
    pub sigma: f64,
    pub scale: usize,
    pub gamma: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossSettings {
    pub base: DistanceKind,
    pub lambda: f64,
    pub feature: DistanceKind,
    pub crop_px: usize,
    pub crops_per_step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    pub niqe_model: Option<PathBuf>,
    pub ergas_ratio: f64,
    /// Quantize prediction and reference to 8 bits before scoring.
    pub quantize8: bool,
    pub save_images: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub configuration: Configuration,
    pub seed: u64,
    pub data: DataConfig,
    pub degrade: DegradeConfig,
    pub width: usize,
    pub layers: usize,
    pub loss: LossSettings,
    pub mae_checkpoint: Option<PathBuf>,
    pub optim: OptimConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// Defaults for everything except the task and configuration.
    pub fn new(task: Task, configuration: Configuration) -> Self {
        ExperimentConfig {
            task,
            configuration,
            seed: 0,
            data: DataConfig {
                train_dir: None,
                val_dir: None,
                synthetic_train: 10,
                synthetic_val: 5,
                size: 32,
                channels: 3,
                frames: if task.is_video() { 4 } else { 1 },
            },
            degrade: DegradeConfig {
                sigma: 0.1,
                scale: 2,
                gamma: 2.0,
                gain: 0.8,
            },
            width: 16,
            layers: 3,
            loss: LossSettings {
                base: DistanceKind::L1,
                lambda: 1.0,
                feature: DistanceKind::L2,
                crop_px: 16,
                crops_per_step: 1,
            },
            mae_checkpoint: None,
            optim: OptimConfig {
                optimizer: OptimizerKind::adam(),
                lr: 1e-3,
                steps: 2000,
                batch_size: 4,
            },
            eval: EvalConfig {
                metrics: vec![Metric::Psnr, Metric::Ssim],
                niqe_model: None,
                ergas_ratio: 0.25,
                quantize8: false,
                save_images: true,
            },
        }
    }

    /// Channels seen by the networks: frame-stacked for video.
    pub fn net_channels(&self) -> usize {
        self.data.channels * self.data.frames
    }

    pub fn degradation(&self) -> Result<DegradationSpec> {
        let d = &self.degrade;
        let kind = match self.task {
            Task::Denoise => Degradation::GaussianNoise { sigma: d.sigma },
            Task::SuperResolution => Degradation::DownUp { scale: d.scale },
            Task::Enhance => Degradation::GammaDarken {
                gamma: d.gamma,
                gain: d.gain,
            },
            Task::VideoDenoise => Degradation::VideoNoise {
                sigma: d.sigma,
                channels_per_frame: self.data.channels,
            },
        };
        DegradationSpec::new(kind, self.seed)
    }

    /// Loss actually optimized: λ forced to 0 for Original, crops only for
    /// the patch configuration.
    pub fn loss_config(&self) -> LossConfig {
        let l = &self.loss;
        LossConfig {
            base: l.base,
            lambda: if self.configuration.uses_encoder() { l.lambda } else { 0.0 },
            feature: l.feature,
            patch: (self.configuration == Configuration::PCcmae).then_some(PatchVariant {
                crop_px: l.crop_px,
                crops_per_step: l.crops_per_step,
                seed: self.seed,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.channels != 1 && d.channels != 3 {
            return Err(Error::invalid(format!("data.channels must be 1 or 3, got {}", d.channels)));
        }
        if d.frames == 0 || (!self.task.is_video() && d.frames != 1) {
            return Err(Error::invalid("data.frames must be 1 for image tasks and >= 1 for video"));
        }
        if d.size == 0 {
            return Err(Error::invalid("data.size must be positive"));
        }
        if self.optim.steps == 0 || self.optim.batch_size == 0 || !(self.optim.lr > 0.0) {
            return Err(Error::invalid("optim needs steps >= 1, batch_size >= 1 and lr > 0"));
        }
        if self.eval.metrics.is_empty() {
            return Err(Error::invalid("eval.metrics must name at least one metric"));
        }
        if self.eval.metrics.contains(&Metric::Niqe) && self.eval.niqe_model.is_none() {
            return Err(Error::invalid("NIQE requested but eval.niqe_model is not set"));
        }
        if self.configuration.uses_encoder() && self.mae_checkpoint.is_none() {
            return Err(Error::MissingKey("mae.checkpoint".into()));
        }
        self.loss_config().validate()?;
        self.degradation()?;
        Ok(())
    }
}

/// One degraded/clean pair; tensors are `1×C×H×W` (frame-stacked for video).
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub index: u64,
    pub degraded: Tensor,
    pub clean: Tensor,
}

#[derive(Clone, Debug)]
pub struct Datasets {
    pub train: Vec<Pair>,
    pub val: Vec<Pair>,
}

impl Datasets {
    pub fn val_checksum(&self) -> String {
        weights_checksum(self.val.iter().flat_map(|p| [&p.clean, &p.degraded]))
    }
}

fn clean_split(cfg: &ExperimentConfig, dir: Option<&Path>, count: usize, offset: u64) -> Result<Vec<Tensor>> {
    let d = &cfg.data;
    let tensors: Vec<Tensor> = match (dir, cfg.task.is_video()) {
        (Some(dir), false) => load_image_dir(dir)?.iter().map(to_tensor).collect(),
        (Some(dir), true) => load_video_dir(dir)?.iter().map(stack_frames).collect(),
        (None, false) => synth::textured_set(count, d.size, d.size, d.channels, cfg.seed, offset)
            .iter()
            .map(to_tensor)
            .collect(),
        (None, true) => synth::video_set(count, d.frames, d.size, d.size, d.channels, cfg.seed, offset)
            .iter()
            .map(stack_frames)
            .collect(),
    };
    if tensors.is_empty() {
        return Err(Error::invalid("dataset split is empty"));
    }
    for t in &tensors {
        if t.shape()[1] != cfg.net_channels() {
            return Err(Error::ChannelMismatch {
                expected: cfg.net_channels(),
                found: t.shape()[1],
            });
        }
    }
    Ok(tensors)
}

/// Load or synthesize the clean images and degrade each once; the pairing is
/// then fixed for the whole run.
pub fn prepare_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    let spec = cfg.degradation()?;
    let pairs = |clean: Vec<Tensor>, offset: u64| -> Result<Vec<Pair>> {
        clean
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let index = offset + i as u64;
                Ok(Pair {
                    index,
                    degraded: degrade(&c, &spec, index)?,
                    clean: c,
                })
            })
            .collect()
    };
    let train = clean_split(cfg, cfg.data.train_dir.as_deref(), cfg.data.synthetic_train, 0)?;
    let val = clean_split(cfg, cfg.data.val_dir.as_deref(), cfg.data.synthetic_val, VAL_INDEX_OFFSET)?;
    Ok(Datasets {
        train: pairs(train, 0)?,
        val: pairs(val, VAL_INDEX_OFFSET)?,
    })
}

pub fn load_encoder(cfg: &ExperimentConfig) -> Result<Option<MaeModel>> {
    if !cfg.configuration.uses_encoder() {
        return Ok(None);
    }
    let path = cfg
        .mae_checkpoint
        .as_ref()
        .ok_or_else(|| Error::MissingKey("mae.checkpoint".into()))?;
    load_checkpoint_expecting(path, cfg.net_channels()).map(Some)
}

/// Result of [`train_model`], before evaluation.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RestorationModel,
    pub steps: Vec<StepLog>,
}

/// Optimize a fresh restoration model on `data.train`.
pub fn train_model(cfg: &ExperimentConfig, data: &Datasets, encoder: Option<&MaeModel>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let loss_cfg = cfg.loss_config();
    let encoder = if cfg.configuration.uses_encoder() {
        let enc = encoder.ok_or_else(|| Error::MissingKey("mae.checkpoint".into()))?;
        if enc.in_channels() != cfg.net_channels() {
            return Err(Error::ChannelMismatch {
                expected: cfg.net_channels(),
                found: enc.in_channels(),
            });
        }
        Some(enc)
    } else {
        None
    };
    let mut model = RestorationModel::init(cfg.net_channels(), cfg.width, cfg.layers, cfg.seed)?;
    let mut opt = Optimizer::new(cfg.optim.optimizer, cfg.optim.lr);
    // E(gt) never changes: encode each clean image once.
    let gt_features: Vec<Tensor> = match (encoder, cfg.configuration) {
        (Some(enc), Configuration::Ccmae) => data.train.iter().map(|p| enc.encode(&p.clean)).collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    let n = data.train.len();
    let mut log = Vec::with_capacity(cfg.optim.steps);
    for step in 0..cfg.optim.steps {
        let mut rng = stream_rng(cfg.seed, Stream::Batch, &[step as u64]);
        let picks: Vec<usize> = (0..cfg.optim.batch_size).map(|_| rng.random_range(0..n)).collect();
        let x = Tensor::cat_batch(&picks.iter().map(|&i| data.train[i].degraded.clone()).collect::<Vec<_>>())?;
        let y = Tensor::cat_batch(&picks.iter().map(|&i| data.train[i].clean.clone()).collect::<Vec<_>>())?;

        let mut tape = Tape::new();
        let params = model.register(&mut tape);
        let xv = tape.constant(x);
        let yv = tape.constant(y);
        let pred = model.forward_on(&mut tape, &params, xv)?;
        let terms = match (cfg.configuration, encoder) {
            (Configuration::PCcmae, Some(enc)) => total_loss_patch(&mut tape, pred, yv, enc, &loss_cfg, step as u64)?,
            (Configuration::Ccmae, Some(enc)) => {
                let cached = Tensor::cat_batch(&picks.iter().map(|&i| gt_features[i].clone()).collect::<Vec<_>>())?;
                total_loss(&mut tape, pred, yv, Some(enc), &loss_cfg, Some(&cached))?
            }
            _ => total_loss(&mut tape, pred, yv, None, &loss_cfg, None)?,
        };
        let entry = StepLog {
            step,
            base: tape.value(terms.base).item(),
            feature: terms.feature.map_or(0.0, |f| tape.value(f).item()),
            total: tape.value(terms.total).item(),
        };
        if !(entry.total.is_finite() && entry.base.is_finite() && entry.feature.is_finite()) {
            return Err(Error::Diverged {
                step,
                detail: format!("base={} feature={} total={}", entry.base, entry.feature, entry.total),
            });
        }
        log.push(entry);

        let grads = tape.backward(terms.total).map_err(|e| Error::Diverged {
            step,
            detail: e.to_string(),
        })?;
        let zero: Vec<Tensor> = model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let g: Vec<&Tensor> = params.iter().zip(&zero).map(|(p, z)| grads.get(*p).unwrap_or(z)).collect();
        let mut ps = model.params_mut();
        opt.step(&mut ps, &g).map_err(|e| match e {
            Error::Diverged { detail, .. } => Error::Diverged { step, detail },
            other => other,
        })?;
    }
    Ok(TrainOutcome { model, steps: log })
}

pub struct EvalOptions<'a> {
    pub metrics: &'a [Metric],
    pub channels_per_frame: usize,
    pub niqe: Option<&'a NiqeModel>,
    pub ergas_ratio: f64,
    pub quantize8: bool,
}

fn frame_metric(metric: Metric, pred: &ImageBuffer, gt: &ImageBuffer, opts: &EvalOptions) -> Result<f64> {
    let (p, g) = (to_tensor(pred), to_tensor(gt));
    match metric {
        Metric::Psnr => psnr(&p, &g, 1.0),
        Metric::Ssim => ssim(&p, &g, 1.0),
        Metric::Sam => sam(&p, &g),
        Metric::Ergas => ergas(&p, &g, opts.ergas_ratio).map(|e| e.value),
        Metric::Niqe => {
            let model = opts
                .niqe
                .ok_or_else(|| Error::invalid("NIQE requested without a fitted NIQE model"))?;
            niqe_score(pred, model)
        }
    }
}

/// Metric values for one restored/clean pair; video metrics are averaged over frames.
pub fn score_pair(restored: &Tensor, clean: &Tensor, opts: &EvalOptions) -> Result<Vec<f64>> {
    let mut pf = unstack_frames(restored, opts.channels_per_frame)?;
    let mut gf = unstack_frames(clean, opts.channels_per_frame)?;
    if opts.quantize8 {
        pf = crate::image_io::FrameStack::new(pf.frames().iter().map(ImageBuffer::quantize8).collect())?;
        gf = crate::image_io::FrameStack::new(gf.frames().iter().map(ImageBuffer::quantize8).collect())?;
    }
    opts.metrics
        .iter()
        .map(|&m| {
            let vals = pf
                .frames()
                .iter()
                .zip(gf.frames())
                .map(|(p, g)| frame_metric(m, p, g, opts))
                .collect::<Result<Vec<_>>>()?;
            Ok(vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

/// Restore every pair, score it, and optionally write the restored images
/// (`<dir>/<index>.ppm`, or `<index>_f<t>.ppm` per frame).
pub fn evaluate(model: &RestorationModel, pairs: &[Pair], opts: &EvalOptions, image_dir: Option<&Path>) -> Result<MetricTable> {
    if let Some(dir) = image_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(row, p)| {
            let restored = from_tensor_batch(&model.forward(&p.degraded)?)?;
            if let Some(dir) = image_dir {
                let frames = unstack_frames(&restored, opts.channels_per_frame)?;
                for (t, f) in frames.frames().iter().enumerate() {
                    let name = if frames.len() == 1 {
                        format!("{row:04}.ppm")
                    } else {
                        format!("{row:04}_f{t}.ppm")
                    };
                    write_pnm(dir.join(name), f)?;
                }
            }
            Ok((row, score_pair(&restored, &p.clean, opts)?))
        })
        .collect::<Result<Vec<_>>>()?;
    MetricTable::from_rows(opts.metrics.to_vec(), rows)
}

/// Clamp a `1×C×H×W` prediction into `[0, 1]`.
fn from_tensor_batch(t: &Tensor) -> Result<Tensor> {
    let (n, _, _, _) = t.dims4()?;
    if n != 1 {
        return Err(Error::invalid("evaluation expects one image per pair"));
    }
    Ok(t.map(|v| v.clamp(0.0, 1.0)))
}

fn load_niqe(cfg: &ExperimentConfig) -> Result<Option<NiqeModel>> {
    match (&cfg.eval.niqe_model, cfg.eval.metrics.contains(&Metric::Niqe)) {
        (Some(path), true) => NiqeModel::load(path).map(Some),
        (None, true) => Err(Error::invalid("NIQE requested but eval.niqe_model is not set")),
        _ => Ok(None),
    }
}

/// Evaluate `model` on the configured validation set.
pub fn evaluate_config(cfg: &ExperimentConfig, model: &RestorationModel, data: &Datasets, out_dir: Option<&Path>) -> Result<MetricTable> {
    let niqe = load_niqe(cfg)?;
    let opts = EvalOptions {
        metrics: &cfg.eval.metrics,
        channels_per_frame: cfg.data.channels,
        niqe: niqe.as_ref(),
        ergas_ratio: cfg.eval.ergas_ratio,
        quantize8: cfg.eval.quantize8,
    };
    let image_dir = out_dir.filter(|_| cfg.eval.save_images).map(|d| d.join("restored"));
    evaluate(model, &data.val, &opts, image_dir.as_deref())
}

/// Full run: data, training, evaluation and report. Artifacts go to
/// `out_dir` when given (restored images, `model.rstc`, `report.txt`,
/// `steps.csv`, `metrics.csv`, `resolved.cfg`).
pub fn train_restoration(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<(RestorationModel, RunReport)> {
    let start = Instant::now();
    cfg.validate()?;
    // Fail on a missing NIQE model before spending time on training.
    load_niqe(cfg)?;
    let data = prepare_datasets(cfg)?;
    let encoder = load_encoder(cfg)?;
    let outcome = train_model(cfg, &data, encoder.as_ref())?;
    let table = evaluate_config(cfg, &outcome.model, &data, out_dir)?;
    let report = RunReport {
        label: cfg.configuration.to_string(),
        task: cfg.task.name().to_string(),
        seed: cfg.seed,
        config_echo: crate::config::echo_experiment(cfg),
        steps: outcome.steps,
        eval: table,
        weight_checksum: outcome.model.checksum(),
        encoder_checksum: encoder.as_ref().map(MaeModel::encoder_checksum),
        val_checksum: data.val_checksum(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        write_run_artifacts(dir, &outcome.model, &report)?;
    }
    Ok((outcome.model, report))
}

pub fn write_run_artifacts(dir: &Path, model: &RestorationModel, report: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    model.save(dir.join("model.rstc"))?;
    report.save(dir.join("report.txt"))?;
    write("steps.csv", report.steps_csv())?;
    write("metrics.csv", report.eval.to_csv())?;
    write("resolved.cfg", report.config_echo.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(configuration: Configuration) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Task::Denoise, configuration);
        cfg.data.synthetic_train = 3;
        cfg.data.synthetic_val = 2;
        cfg.data.size = 16;
        cfg.width = 4;
        cfg.optim.steps = 5;
        cfg.optim.batch_size = 2;
        cfg
    }

    #[test]
    fn original_run_has_zero_feature_column() {
        let (_, report) = train_restoration(&tiny(Configuration::Original), None).unwrap();
        assert_eq!(report.steps.len(), 5);
        assert!(report.steps.iter().all(|s| s.feature == 0.0 && s.total == s.base));
        assert_eq!(report.eval.rows.len(), 2);
        assert_eq!(report.eval.metrics, vec![Metric::Psnr, Metric::Ssim]);
    }

    #[test]
    fn encoder_configs_need_a_checkpoint() {
        assert!(matches!(
            train_restoration(&tiny(Configuration::Ccmae), None),
            Err(Error::MissingKey(_))
        ));
    }

    #[test]
    fn ccmae_decomposition_holds() {
        let cfg = {
            let mut c = tiny(Configuration::Ccmae);
            c.loss.lambda = 0.7;
            c
        };
        let data = prepare_datasets(&cfg).unwrap();
        let enc = crate::mae::init_mae(3, 8, 2, 1).unwrap();
        let out = train_model(&ExperimentConfig { mae_checkpoint: Some("unused".into()), ..cfg }, &data, Some(&enc)).unwrap();
        for s in &out.steps {
            assert!((s.base + 0.7 * s.feature - s.total).abs() <= 1e-12);
            assert!(s.feature > 0.0);
        }
    }

    #[test]
    fn identity_model_on_clean_input_scores_cap() {
        let model = RestorationModel::init(3, 4, 2, 0).unwrap();
        let clean = to_tensor(&synth::textured_image(16, 16, 3, 0, 0));
        let pairs: Vec<Pair> = (0..5)
            .map(|i| Pair {
                index: i,
                degraded: clean.clone(),
                clean: clean.clone(),
            })
            .collect();
        let opts = EvalOptions {
            metrics: &[Metric::Psnr, Metric::Ssim],
            channels_per_frame: 3,
            niqe: None,
            ergas_ratio: 0.25,
            quantize8: false,
        };
        let t = evaluate(&model, &pairs, &opts, None).unwrap();
        assert_eq!(t.rows.len(), 5);
        assert!(t.rows.iter().all(|(_, v)| v == &vec![99.0, 1.0]));
        assert_eq!(t.aggregate, vec![99.0, 1.0]);
    }
}
