//! Sectioned `key = value` configuration files.
//!
//! ```text
//! # comment
//! [experiment]
//! task = denoise
//! configuration = ccmae
//! [loss]
//! lambda = 1.0
//! ```
//!
//! Every schema lists its keys; anything else is rejected, with a suggestion
//! when the key is one edit away from a known one. Overrides (`section.key`,
//! value) are applied on top of the file before typing. Each schema can echo
//! a fully resolved config with every default spelled out, and parsing that
//! echo yields the identical value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::train::{DataConfig, DegradeConfig, EvalConfig, LossSettings, OptimConfig};
use crate::harness::{Configuration, ExperimentConfig, Task};
use crate::loss::DistanceKind;
use crate::mae::{LossRegion, PretrainConfig, DEFAULT_DEPTH, DEFAULT_FEATURE_CHANNELS};
use crate::metrics::niqe::{DEFAULT_KEEP_FRACTION, DEFAULT_PATCH_SIZE};
use crate::metrics::Metric;
use crate::tensor::OptimizerKind;

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    key: String,
    value: String,
    /// 1-based source line; 0 for command-line overrides.
    line: usize,
}

/// Untyped entries of one config file plus overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Config {
                    line: line_no,
                    msg: format!("unterminated section header {content:?}"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                msg: format!("expected `key = value`, found {content:?}"),
            })?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if let Some(prev) = raw.entries.iter().find(|e| e.key == key) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
            raw.entries.push(Entry {
                key,
                value: v.trim().to_string(),
                line: line_no,
            });
        }
        Ok(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Set `section.key`, replacing any value from the file.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.retain(|e| e.key != key);
        self.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: 0,
        });
    }

    pub fn apply(&mut self, overrides: &[(String, String)]) {
        for (k, v) in overrides {
            self.set(k, v);
        }
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn check_known(&self, known: &[&str]) -> Result<()> {
        for e in &self.entries {
            if known.contains(&e.key.as_str()) {
                continue;
            }
            let mut msg = format!("unknown key `{}`", e.key);
            if let Some(s) = suggest(&e.key, known) {
                write!(msg, "; did you mean `{s}`?").unwrap();
            }
            return Err(Error::Config { line: e.line, msg });
        }
        Ok(())
    }

    fn typed<T>(&self, key: &str, expected: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).ok_or_else(|| Error::Config {
                line: e.line,
                msg: format!("`{key}` expects {expected}, got {:?}", e.value),
            }),
        }
    }

    fn num<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.typed(key, "a number", |s| s.parse().ok())?.unwrap_or(default))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self
            .typed(key, "true or false", |s| match s {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            })?
            .unwrap_or(default))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.entry(key).filter(|e| !e.value.is_empty()).map(|e| PathBuf::from(&e.value))
    }

    fn required<T>(&self, key: &str, expected: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        self.typed(key, expected, parse)?.ok_or_else(|| Error::MissingKey(key.to_string()))
    }
}

/// Known key within one edit of `key`, comparing full dotted names first and
/// then the part after the section.
fn suggest<'a>(key: &str, known: &[&'a str]) -> Option<&'a str> {
    let leaf = |k: &str| k.rsplit('.').next().unwrap_or(k).to_string();
    known
        .iter()
        .find(|k| strsim::levenshtein(key, k) <= 1)
        .or_else(|| known.iter().find(|k| strsim::levenshtein(&leaf(key), &leaf(k)) <= 1))
        .copied()
}

fn distance(s: &str) -> Option<DistanceKind> {
    DistanceKind::parse(s)
}

fn metric_list(s: &str) -> Option<Vec<Metric>> {
    s.split(',').map(Metric::parse).collect()
}

fn optimizer(raw: &RawConfig, section: &str) -> Result<OptimizerKind> {
    let name = raw
        .typed(&format!("{section}.optimizer"), "adam or sgd", |s| match s.to_ascii_lowercase().as_str() {
            "adam" => Some(true),
            "sgd" => Some(false),
            _ => None,
        })?
        .unwrap_or(true);
    let OptimizerKind::Adam { beta1, beta2, eps } = OptimizerKind::adam() else {
        unreachable!()
    };
    let beta1 = raw.num(&format!("{section}.beta1"), beta1)?;
    let beta2 = raw.num(&format!("{section}.beta2"), beta2)?;
    let eps = raw.num(&format!("{section}.eps"), eps)?;
    Ok(if name {
        OptimizerKind::Adam { beta1, beta2, eps }
    } else {
        OptimizerKind::Sgd
    })
}

fn echo_optimizer(s: &mut String, kind: &OptimizerKind) {
    let adam = OptimizerKind::adam();
    let OptimizerKind::Adam { beta1, beta2, eps } = (match kind {
        OptimizerKind::Adam { .. } => kind,
        OptimizerKind::Sgd => &adam,
    }) else {
        unreachable!()
    };
    writeln!(s, "optimizer = {}", kind.name()).unwrap();
    writeln!(s, "beta1 = {beta1:?}").unwrap();
    writeln!(s, "beta2 = {beta2:?}").unwrap();
    writeln!(s, "eps = {eps:?}").unwrap();
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

pub const EXPERIMENT_KEYS: &[&str] = &[
    "experiment.task",
    "experiment.configuration",
    "experiment.seed",
    "data.train_dir",
    "data.val_dir",
    "data.synthetic_train",
    "data.synthetic_val",
    "data.size",
    "data.channels",
    "data.frames",
    "degrade.sigma",
    "degrade.scale",
    "degrade.gamma",
    "degrade.gain",
    "model.width",
    "model.layers",
    "loss.base",
    "loss.lambda",
    "loss.feature",
    "loss.crop_px",
    "loss.crops_per_step",
    "mae.checkpoint",
    "optim.optimizer",
    "optim.lr",
    "optim.steps",
    "optim.batch_size",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "eval.metrics",
    "eval.niqe_model",
    "eval.ergas_ratio",
    "eval.quantize8",
    "eval.save_images",
];

pub fn experiment_from_raw(raw: &RawConfig) -> Result<ExperimentConfig> {
    raw.check_known(EXPERIMENT_KEYS)?;
    let task = raw.required("experiment.task", "one of denoise, sr, enhance, video_denoise", Task::parse)?;
    let configuration = raw.required("experiment.configuration", "one of original, ccmae, p_ccmae", Configuration::parse)?;
    let d = ExperimentConfig::new(task, configuration);
    let cfg = ExperimentConfig {
        task,
        configuration,
        seed: raw.num("experiment.seed", d.seed)?,
        data: DataConfig {
            train_dir: raw.path("data.train_dir"),
            val_dir: raw.path("data.val_dir"),
            synthetic_train: raw.num("data.synthetic_train", d.data.synthetic_train)?,
            synthetic_val: raw.num("data.synthetic_val", d.data.synthetic_val)?,
            size: raw.num("data.size", d.data.size)?,
            channels: raw.num("data.channels", d.data.channels)?,
            frames: raw.num("data.frames", d.data.frames)?,
        },
        degrade: DegradeConfig {
            sigma: raw.num("degrade.sigma", d.degrade.sigma)?,
            scale: raw.num("degrade.scale", d.degrade.scale)?,
            gamma: raw.num("degrade.gamma", d.degrade.gamma)?,
            gain: raw.num("degrade.gain", d.degrade.gain)?,
        },
        width: raw.num("model.width", d.width)?,
        layers: raw.num("model.layers", d.layers)?,
        loss: LossSettings {
            base: raw.typed("loss.base", "L1 or L2", distance)?.unwrap_or(d.loss.base),
            lambda: raw.num("loss.lambda", d.loss.lambda)?,
            feature: raw.typed("loss.feature", "L1 or L2", distance)?.unwrap_or(d.loss.feature),
            crop_px: raw.num("loss.crop_px", d.loss.crop_px)?,
            crops_per_step: raw.num("loss.crops_per_step", d.loss.crops_per_step)?,
        },
        mae_checkpoint: raw.path("mae.checkpoint"),
        optim: OptimConfig {
            optimizer: optimizer(raw, "optim")?,
            lr: raw.num("optim.lr", d.optim.lr)?,
            steps: raw.num("optim.steps", d.optim.steps)?,
            batch_size: raw.num("optim.batch_size", d.optim.batch_size)?,
        },
        eval: EvalConfig {
            metrics: raw
                .typed("eval.metrics", "a comma-separated metric list", metric_list)?
                .unwrap_or(d.eval.metrics),
            niqe_model: raw.path("eval.niqe_model"),
            ergas_ratio: raw.num("eval.ergas_ratio", d.eval.ergas_ratio)?,
            quantize8: raw.flag("eval.quantize8", d.eval.quantize8)?,
            save_images: raw.flag("eval.save_images", d.eval.save_images)?,
        },
    };
    if cfg.configuration.uses_encoder() && cfg.mae_checkpoint.is_none() {
        return Err(Error::MissingKey("mae.checkpoint".into()));
    }
    Ok(cfg)
}

pub fn parse_experiment(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::parse(text)?;
    raw.apply(overrides);
    experiment_from_raw(&raw)
}

pub fn load_experiment(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::load(path)?;
    raw.apply(overrides);
    experiment_from_raw(&raw)
}

pub fn echo_experiment(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let metrics: Vec<String> = cfg.eval.metrics.iter().map(Metric::to_string).collect();
    writeln!(s, "[experiment]").unwrap();
    writeln!(s, "task = {}", cfg.task.name()).unwrap();
    writeln!(s, "configuration = {}", cfg.configuration.name()).unwrap();
    writeln!(s, "seed = {}", cfg.seed).unwrap();
    writeln!(s, "[data]").unwrap();
    writeln!(s, "train_dir = {}", opt_path(&cfg.data.train_dir)).unwrap();
    writeln!(s, "val_dir = {}", opt_path(&cfg.data.val_dir)).unwrap();
    writeln!(s, "synthetic_train = {}", cfg.data.synthetic_train).unwrap();
    writeln!(s, "synthetic_val = {}", cfg.data.synthetic_val).unwrap();
    writeln!(s, "size = {}", cfg.data.size).unwrap();
    writeln!(s, "channels = {}", cfg.data.channels).unwrap();
    writeln!(s, "frames = {}", cfg.data.frames).unwrap();
    writeln!(s, "[degrade]").unwrap();
    writeln!(s, "sigma = {:?}", cfg.degrade.sigma).unwrap();
    writeln!(s, "scale = {}", cfg.degrade.scale).unwrap();
    writeln!(s, "gamma = {:?}", cfg.degrade.gamma).unwrap();
    writeln!(s, "gain = {:?}", cfg.degrade.gain).unwrap();
    writeln!(s, "[model]").unwrap();
    writeln!(s, "width = {}", cfg.width).unwrap();
    writeln!(s, "layers = {}", cfg.layers).unwrap();
    writeln!(s, "[loss]").unwrap();
    writeln!(s, "base = {}", cfg.loss.base).unwrap();
    writeln!(s, "lambda = {:?}", cfg.loss.lambda).unwrap();
    writeln!(s, "feature = {}", cfg.loss.feature).unwrap();
    writeln!(s, "crop_px = {}", cfg.loss.crop_px).unwrap();
    writeln!(s, "crops_per_step = {}", cfg.loss.crops_per_step).unwrap();
    writeln!(s, "[mae]").unwrap();
    writeln!(s, "checkpoint = {}", opt_path(&cfg.mae_checkpoint)).unwrap();
    writeln!(s, "[optim]").unwrap();
    echo_optimizer(&mut s, &cfg.optim.optimizer);
    writeln!(s, "lr = {:?}", cfg.optim.lr).unwrap();
    writeln!(s, "steps = {}", cfg.optim.steps).unwrap();
    writeln!(s, "batch_size = {}", cfg.optim.batch_size).unwrap();
    writeln!(s, "[eval]").unwrap();
    writeln!(s, "metrics = {}", metrics.join(",")).unwrap();
    writeln!(s, "niqe_model = {}", opt_path(&cfg.eval.niqe_model)).unwrap();
    writeln!(s, "ergas_ratio = {:?}", cfg.eval.ergas_ratio).unwrap();
    writeln!(s, "quantize8 = {}", cfg.eval.quantize8).unwrap();
    writeln!(s, "save_images = {}", cfg.eval.save_images).unwrap();
    s
}

/// MAE pretraining job: architecture, data source and [`PretrainConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainJob {
    pub pretrain: PretrainConfig,
    pub feature_channels: usize,
    pub depth: usize,
    pub train_dir: Option<PathBuf>,
    pub synthetic_count: usize,
    pub size: usize,
    pub channels: usize,
}

impl Default for PretrainJob {
    fn default() -> Self {
        PretrainJob {
            pretrain: PretrainConfig::default(),
            feature_channels: DEFAULT_FEATURE_CHANNELS,
            depth: DEFAULT_DEPTH,
            train_dir: None,
            synthetic_count: 20,
            size: 32,
            channels: 3,
        }
    }
}

impl PretrainJob {
    pub fn in_channels(&self) -> usize {
        self.channels * self.pretrain.frames
    }
}

pub const PRETRAIN_KEYS: &[&str] = &[
    "pretrain.seed",
    "pretrain.steps",
    "pretrain.batch_size",
    "pretrain.optimizer",
    "pretrain.lr",
    "pretrain.beta1",
    "pretrain.beta2",
    "pretrain.eps",
    "pretrain.mask_ratio",
    "pretrain.patch_px",
    "pretrain.patch_frames",
    "pretrain.loss_region",
    "pretrain.mask_value",
    "model.feature_channels",
    "model.depth",
    "data.train_dir",
    "data.synthetic_count",
    "data.size",
    "data.channels",
    "data.frames",
];

pub fn pretrain_from_raw(raw: &RawConfig) -> Result<PretrainJob> {
    raw.check_known(PRETRAIN_KEYS)?;
    let d = PretrainJob::default();
    let p = &d.pretrain;
    Ok(PretrainJob {
        pretrain: PretrainConfig {
            mask_ratio: raw.num("pretrain.mask_ratio", p.mask_ratio)?,
            patch_px: raw.num("pretrain.patch_px", p.patch_px)?,
            frames: raw.num("data.frames", p.frames)?,
            patch_frames: raw.num("pretrain.patch_frames", p.patch_frames)?,
            steps: raw.num("pretrain.steps", p.steps)?,
            batch_size: raw.num("pretrain.batch_size", p.batch_size)?,
            optimizer: optimizer(raw, "pretrain")?,
            lr: raw.num("pretrain.lr", p.lr)?,
            loss_region: raw
                .typed("pretrain.loss_region", "masked_only or all_pixels", LossRegion::parse)?
                .unwrap_or(p.loss_region),
            mask_value: raw.num("pretrain.mask_value", p.mask_value)?,
            seed: raw.num("pretrain.seed", p.seed)?,
        },
        feature_channels: raw.num("model.feature_channels", d.feature_channels)?,
        depth: raw.num("model.depth", d.depth)?,
        train_dir: raw.path("data.train_dir"),
        synthetic_count: raw.num("data.synthetic_count", d.synthetic_count)?,
        size: raw.num("data.size", d.size)?,
        channels: raw.num("data.channels", d.channels)?,
    })
}

pub fn echo_pretrain(job: &PretrainJob) -> String {
    let p = &job.pretrain;
    let mut s = String::from("[pretrain]\n");
    writeln!(s, "seed = {}", p.seed).unwrap();
    writeln!(s, "steps = {}", p.steps).unwrap();
    writeln!(s, "batch_size = {}", p.batch_size).unwrap();
    echo_optimizer(&mut s, &p.optimizer);
    writeln!(s, "lr = {:?}", p.lr).unwrap();
    writeln!(s, "mask_ratio = {:?}", p.mask_ratio).unwrap();
    writeln!(s, "patch_px = {}", p.patch_px).unwrap();
    writeln!(s, "patch_frames = {}", p.patch_frames).unwrap();
    writeln!(s, "loss_region = {}", p.loss_region.name()).unwrap();
    writeln!(s, "mask_value = {:?}", p.mask_value).unwrap();
    writeln!(s, "[model]").unwrap();
    writeln!(s, "feature_channels = {}", job.feature_channels).unwrap();
    writeln!(s, "depth = {}", job.depth).unwrap();
    writeln!(s, "[data]").unwrap();
    writeln!(s, "train_dir = {}", opt_path(&job.train_dir)).unwrap();
    writeln!(s, "synthetic_count = {}", job.synthetic_count).unwrap();
    writeln!(s, "size = {}", job.size).unwrap();
    writeln!(s, "channels = {}", job.channels).unwrap();
    writeln!(s, "frames = {}", p.frames).unwrap();
    s
}

/// Pristine-model fit for NIQE.
#[derive(Clone, Debug, PartialEq)]
pub struct NiqeJob {
    pub corpus_dir: Option<PathBuf>,
    pub synthetic_count: usize,
    pub size: usize,
    pub patch_size: usize,
    pub keep_fraction: f64,
    pub seed: u64,
}

impl Default for NiqeJob {
    fn default() -> Self {
        NiqeJob {
            corpus_dir: None,
            synthetic_count: 10,
            size: 3 * DEFAULT_PATCH_SIZE,
            patch_size: DEFAULT_PATCH_SIZE,
            keep_fraction: DEFAULT_KEEP_FRACTION,
            seed: 0,
        }
    }
}

pub const NIQE_KEYS: &[&str] = &[
    "niqe.corpus_dir",
    "niqe.synthetic_count",
    "niqe.size",
    "niqe.patch_size",
    "niqe.keep_fraction",
    "niqe.seed",
];

pub fn niqe_from_raw(raw: &RawConfig) -> Result<NiqeJob> {
    raw.check_known(NIQE_KEYS)?;
    let d = NiqeJob::default();
    Ok(NiqeJob {
        corpus_dir: raw.path("niqe.corpus_dir"),
        synthetic_count: raw.num("niqe.synthetic_count", d.synthetic_count)?,
        size: raw.num("niqe.size", d.size)?,
        patch_size: raw.num("niqe.patch_size", d.patch_size)?,
        keep_fraction: raw.num("niqe.keep_fraction", d.keep_fraction)?,
        seed: raw.num("niqe.seed", d.seed)?,
    })
}

pub fn echo_niqe(job: &NiqeJob) -> String {
    let mut s = String::from("[niqe]\n");
    writeln!(s, "corpus_dir = {}", opt_path(&job.corpus_dir)).unwrap();
    writeln!(s, "synthetic_count = {}", job.synthetic_count).unwrap();
    writeln!(s, "size = {}", job.size).unwrap();
    writeln!(s, "patch_size = {}", job.patch_size).unwrap();
    writeln!(s, "keep_fraction = {:?}", job.keep_fraction).unwrap();
    writeln!(s, "seed = {}", job.seed).unwrap();
    s
}

/// Finite-difference verification settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckJob {
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for GradcheckJob {
    fn default() -> Self {
        GradcheckJob {
            seed: 0,
            tolerance: 1e-4,
        }
    }
}

pub const GRADCHECK_KEYS: &[&str] = &["gradcheck.seed", "gradcheck.tolerance"];

pub fn gradcheck_from_raw(raw: &RawConfig) -> Result<GradcheckJob> {
    raw.check_known(GRADCHECK_KEYS)?;
    let d = GradcheckJob::default();
    Ok(GradcheckJob {
        seed: raw.num("gradcheck.seed", d.seed)?,
        tolerance: raw.num("gradcheck.tolerance", d.tolerance)?,
    })
}

pub fn echo_gradcheck(job: &GradcheckJob) -> String {
    format!("[gradcheck]\nseed = {}\ntolerance = {:?}\n", job.seed, job.tolerance)
}
