//! `maelab` command-line entry point.
//!
//! Every subcommand reads an optional config file, applies flag overrides,
//! writes its artifacts (one report plus the resolved config) into the output
//! directory and exits 0 on success, 1 on a runtime failure and 2 on a usage
//! or config error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{
    echo_gradcheck, echo_niqe, echo_pretrain, experiment_from_raw, gradcheck_from_raw, niqe_from_raw,
    pretrain_from_raw, PretrainJob, RawConfig,
};
use crate::error::{Error, Result};
use crate::harness::synth;
use crate::harness::{
    compare_runs, evaluate_config, prepare_datasets, train_restoration, write_run_artifacts, EvalOptions,
    RestorationModel, RunReport,
};
use crate::image_io::{load_image_dir, load_video_dir, read_pnm, stack_frames, to_tensor, ImageBuffer};
use crate::mae::{init_mae, pretrain, save_checkpoint, weights_checksum};
use crate::metrics::{niqe_fit, Metric, NiqeModel, PSNR_CAP_DB};
use crate::tensor::Tensor;
use crate::verify::{adjoint_suite, gradient_suite};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MAELAB_OUT";
const DEFAULT_OUT_ROOT: &str = "maelab-out";
/// Synthetic pretraining images are drawn from this index range so the prior
/// never sees a restoration train or validation image.
pub const PRETRAIN_INDEX_OFFSET: u64 = 1 << 40;
pub const ADJOINT_CASES: usize = 24;
pub const PRETRAIN_REPORT_VERSION: &str = "MPRT1";
pub const METRICS_REPORT_VERSION: &str = "MMET1";
pub const NIQE_REPORT_VERSION: &str = "MNIQ1";
pub const GRADCHECK_REPORT_VERSION: &str = "MGRD1";

#[derive(Debug, Parser)]
#[command(name = "maelab", version, about = "Masked-autoencoder feature losses for image restoration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain a convolutional masked autoencoder.
    PretrainMae {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train and evaluate a restoration model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
        /// Feature-loss weight.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Evaluate a saved restoration model on the configured validation set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score predicted images against references.
    Metrics {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Image file or directory of images.
        #[arg(long)]
        pred: PathBuf,
        /// Reference file or directory; optional when only NIQE is requested.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value = "PSNR,SSIM")]
        metrics: String,
        #[arg(long)]
        niqe_model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        ergas_ratio: f64,
    },
    /// Fit a NIQE pristine model.
    FitNiqe {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference and adjoint verification of the autodiff ops.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate several run reports side by side.
    Compare {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "PSNR,SSIM")]
        metrics: String,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::PretrainMae { .. } => "pretrain-mae",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Metrics { .. } => "metrics",
            Command::FitNiqe { .. } => "fit-niqe",
            Command::Gradcheck { .. } => "gradcheck",
            Command::Compare { .. } => "compare",
        }
    }
}

fn out_dir(explicit: &Option<PathBuf>, command: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_OUT_ROOT.into());
        root.join(command)
    })
}

fn raw_config(common: &Common, extra: &[(&str, String)]) -> Result<RawConfig> {
    let mut raw = match &common.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    for s in &common.sets {
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Config {
            line: 0,
            msg: format!("--set expects KEY=VALUE, got {s:?}"),
        })?;
        raw.set(k.trim(), v);
    }
    for (k, v) in extra {
        raw.set(k, v);
    }
    Ok(raw)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn metric_list(s: &str) -> Result<Vec<Metric>> {
    s.split(',')
        .map(|m| {
            Metric::parse(m).ok_or_else(|| Error::Config {
                line: 0,
                msg: format!("unknown metric {:?}; expected PSNR, SSIM, NIQE, SAM or ERGAS", m.trim()),
            })
        })
        .collect()
}

/// Outcome of one subcommand: a summary for stdout and whether every check it
/// ran passed.
struct Outcome {
    summary: String,
    passed: bool,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { summary, passed: true }
    }
}

/// Parse `args`, run, and map the result to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("maelab {}: error: {e}", cli.command.name());
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn execute(command: &Command) -> Result<Outcome> {
    let name = command.name();
    match command {
        Command::PretrainMae { common, steps } => {
            let mut extra = Vec::new();
            if let Some(s) = steps {
                extra.push(("pretrain.steps", s.to_string()));
            }
            if let Some(s) = common.seed {
                extra.push(("pretrain.seed", s.to_string()));
            }
            let job = pretrain_from_raw(&raw_config(common, &extra)?)?;
            run_pretrain(&job, &out_dir(&common.out, name))
        }
        Command::Train { common, steps, lambda } => {
            let mut extra = Vec::new();
            if let Some(s) = steps {
                extra.push(("optim.steps", s.to_string()));
            }
            if let Some(l) = lambda {
                extra.push(("loss.lambda", format!("{l:?}")));
            }
            if let Some(s) = common.seed {
                extra.push(("experiment.seed", s.to_string()));
            }
            let cfg = experiment_from_raw(&raw_config(common, &extra)?)?;
            let dir = out_dir(&common.out, name);
            let (_, report) = train_restoration(&cfg, Some(&dir))?;
            Ok(Outcome::ok(run_summary(&report, &dir)))
        }
        Command::Eval { common, checkpoint } => {
            let extra: Vec<_> = common.seed.map(|s| ("experiment.seed", s.to_string())).into_iter().collect();
            let cfg = experiment_from_raw(&raw_config(common, &extra)?)?;
            run_eval(&cfg, checkpoint, &out_dir(&common.out, name))
        }
        Command::Metrics {
            out,
            pred,
            gt,
            metrics,
            niqe_model,
            ergas_ratio,
        } => run_metrics(
            &MetricsRequest {
                pred,
                gt: gt.as_deref(),
                metrics: metric_list(metrics)?,
                niqe_model: niqe_model.as_deref(),
                ergas_ratio: *ergas_ratio,
            },
            &out_dir(out, name),
        ),
        Command::FitNiqe { common } => {
            let extra: Vec<_> = common.seed.map(|s| ("niqe.seed", s.to_string())).into_iter().collect();
            let job = niqe_from_raw(&raw_config(common, &extra)?)?;
            run_fit_niqe(&job, &out_dir(&common.out, name))
        }
        Command::Gradcheck { common } => {
            let extra: Vec<_> = common.seed.map(|s| ("gradcheck.seed", s.to_string())).into_iter().collect();
            let job = gradcheck_from_raw(&raw_config(common, &extra)?)?;
            let dir = out_dir(&common.out, name);
            create_dir(&dir)?;
            let suite = gradient_suite(job.seed, job.tolerance);
            let adjoint = adjoint_suite(job.seed, ADJOINT_CASES)?;
            let mut text = format!("{GRADCHECK_REPORT_VERSION}\n{}", suite.to_text());
            writeln!(text, "adjoint identity (tolerance 1e-10 relative, {} shapes)", adjoint.len()).unwrap();
            let mut adjoint_ok = true;
            for case in &adjoint {
                let pass = case.rel_error <= 1e-10;
                adjoint_ok &= pass;
                writeln!(text, "{}  rel_err={:.3e}  {}", case.description, case.rel_error, verdict(pass)).unwrap();
            }
            writeln!(text, "adjoint overall: {}", verdict(adjoint_ok)).unwrap();
            write_text(&dir, "gradcheck.txt", &text)?;
            write_text(&dir, "resolved.cfg", &echo_gradcheck(&job))?;
            Ok(Outcome {
                summary: text,
                passed: suite.all_passed() && adjoint_ok,
            })
        }
        Command::Compare { out, reports, metrics } => {
            let metrics = metric_list(metrics)?;
            let runs = reports.iter().map(RunReport::load).collect::<Result<Vec<_>>>()?;
            let table = compare_runs(&runs, &metrics)?;
            let dir = out_dir(out, name);
            create_dir(&dir)?;
            let text = table.to_text();
            write_text(&dir, "comparison.txt", &text)?;
            write_text(&dir, "comparison.csv", &table.to_csv())?;
            Ok(Outcome::ok(text))
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run_summary(report: &RunReport, dir: &Path) -> String {
    let mut s = format!("{} on {}: ", report.label, report.task);
    for (m, v) in report.eval.metrics.iter().zip(&report.eval.aggregate) {
        write!(s, "{m}={v:.4} ").unwrap();
    }
    if let Some(l) = report.final_loss() {
        write!(s, "final_loss={l:.6e} ").unwrap();
    }
    writeln!(s, "\nweights {}\nartifacts in {}", report.weight_checksum, dir.display()).unwrap();
    s
}

/// Clean pretraining inputs, each `1×(C·frames)×H×W`.
pub fn pretrain_dataset(job: &PretrainJob) -> Result<Vec<Tensor>> {
    let frames = job.pretrain.frames;
    let data: Vec<Tensor> = match (&job.train_dir, frames > 1) {
        (Some(dir), false) => load_image_dir(dir)?.iter().map(to_tensor).collect(),
        (Some(dir), true) => load_video_dir(dir)?.iter().map(stack_frames).collect(),
        (None, false) => synth::textured_set(
            job.synthetic_count,
            job.size,
            job.size,
            job.channels,
            job.pretrain.seed,
            PRETRAIN_INDEX_OFFSET,
        )
        .iter()
        .map(to_tensor)
        .collect(),
        (None, true) => synth::video_set(
            job.synthetic_count,
            frames,
            job.size,
            job.size,
            job.channels,
            job.pretrain.seed,
            PRETRAIN_INDEX_OFFSET,
        )
        .iter()
        .map(stack_frames)
        .collect(),
    };
    if data.is_empty() {
        return Err(Error::invalid("pretraining dataset is empty"));
    }
    Ok(data)
}

fn run_pretrain(job: &PretrainJob, dir: &Path) -> Result<Outcome> {
    let start = Instant::now();
    job.pretrain.validate()?;
    let data = pretrain_dataset(job)?;
    let model = init_mae(job.in_channels(), job.feature_channels, job.depth, job.pretrain.seed)?;
    let outcome = pretrain(model, &data, &job.pretrain)?;
    create_dir(dir)?;
    save_checkpoint(&outcome.model, dir.join("mae.maec"))?;
    let echo = echo_pretrain(job);
    let mut text = format!("{PRETRAIN_REPORT_VERSION}\n");
    writeln!(text, "seed = {}", job.pretrain.seed).unwrap();
    writeln!(text, "images = {}", data.len()).unwrap();
    writeln!(text, "data_checksum = {}", weights_checksum(&data)).unwrap();
    writeln!(text, "weight_checksum = {}", outcome.model.checksum()).unwrap();
    writeln!(text, "encoder_checksum = {}", outcome.model.encoder_checksum()).unwrap();
    let first = outcome.losses.first().copied().unwrap_or(f64::NAN);
    let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
    writeln!(text, "first_loss = {first:?}").unwrap();
    writeln!(text, "final_loss = {last:?}").unwrap();
    writeln!(text, "wall_time_s = {:?}", start.elapsed().as_secs_f64()).unwrap();
    writeln!(text, "[config] {}", echo.lines().count()).unwrap();
    text.push_str(&echo);
    writeln!(text, "[losses] {}", outcome.losses.len()).unwrap();
    text.push_str("step,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        writeln!(text, "{i},{l:?}").unwrap();
    }
    write_text(dir, "report.txt", &text)?;
    write_text(dir, "resolved.cfg", &echo)?;
    Ok(Outcome::ok(format!(
        "pretrained {} steps: loss {first:.6e} -> {last:.6e}\ncheckpoint {}\n",
        outcome.losses.len(),
        dir.join("mae.maec").display()
    )))
}

fn run_eval(cfg: &crate::harness::ExperimentConfig, checkpoint: &Path, dir: &Path) -> Result<Outcome> {
    let start = Instant::now();
    cfg.validate()?;
    let model = RestorationModel::load(checkpoint)?;
    let data = prepare_datasets(cfg)?;
    let table = evaluate_config(cfg, &model, &data, Some(dir))?;
    let report = RunReport {
        label: cfg.configuration.to_string(),
        task: cfg.task.name().to_string(),
        seed: cfg.seed,
        config_echo: crate::config::echo_experiment(cfg),
        steps: Vec::new(),
        eval: table,
        weight_checksum: model.checksum(),
        encoder_checksum: None,
        val_checksum: data.val_checksum(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_run_artifacts(dir, &model, &report)?;
    Ok(Outcome::ok(run_summary(&report, dir)))
}

struct MetricsRequest<'a> {
    pred: &'a Path,
    gt: Option<&'a Path>,
    metrics: Vec<Metric>,
    niqe_model: Option<&'a Path>,
    ergas_ratio: f64,
}

/// A single image file, or every PNM in a directory in name order.
fn read_images(path: &Path) -> Result<Vec<ImageBuffer>> {
    if path.is_dir() {
        load_image_dir(path)
    } else {
        Ok(vec![read_pnm(path)?])
    }
}

fn run_metrics(req: &MetricsRequest, dir: &Path) -> Result<Outcome> {
    let preds = read_images(req.pred)?;
    let full_reference = req.metrics.iter().any(|m| *m != Metric::Niqe);
    let gts = match req.gt {
        Some(gt) => read_images(gt)?,
        None if full_reference => {
            return Err(Error::Config {
                line: 0,
                msg: "--gt is required for full-reference metrics".into(),
            })
        }
        None => preds.clone(),
    };
    if preds.len() != gts.len() {
        return Err(Error::invalid(format!("{} predictions but {} references", preds.len(), gts.len())));
    }
    let niqe = match (req.niqe_model, req.metrics.contains(&Metric::Niqe)) {
        (Some(p), true) => Some(NiqeModel::load(p)?),
        (None, true) => {
            return Err(Error::Config {
                line: 0,
                msg: "NIQE requested without --niqe-model".into(),
            })
        }
        _ => None,
    };
    let opts = EvalOptions {
        metrics: &req.metrics,
        channels_per_frame: preds.first().map_or(1, ImageBuffer::channels),
        niqe: niqe.as_ref(),
        ergas_ratio: req.ergas_ratio,
        quantize8: false,
    };
    let mut rows = Vec::with_capacity(preds.len());
    for (i, (p, g)) in preds.iter().zip(&gts).enumerate() {
        rows.push((i, crate::harness::score_pair(&to_tensor(p), &to_tensor(g), &opts)?));
    }
    let table = crate::harness::MetricTable::from_rows(req.metrics.clone(), rows)?;
    create_dir(dir)?;
    let mut text = format!("{METRICS_REPORT_VERSION}\n");
    writeln!(text, "pred = {}", req.pred.display()).unwrap();
    writeln!(text, "gt = {}", req.gt.map(|p| p.display().to_string()).unwrap_or_default()).unwrap();
    writeln!(text, "niqe_model = {}", req.niqe_model.map(|p| p.display().to_string()).unwrap_or_default()).unwrap();
    writeln!(text, "ergas_ratio = {:?}", req.ergas_ratio).unwrap();
    writeln!(text, "psnr_cap_db = {PSNR_CAP_DB:?}").unwrap();
    text.push_str(&table.to_csv());
    write_text(dir, "metrics.txt", &text)?;
    let mut summary = String::new();
    for (m, v) in table.metrics.iter().zip(&table.aggregate) {
        writeln!(summary, "{m} = {v:?}").unwrap();
    }
    Ok(Outcome::ok(summary))
}

fn run_fit_niqe(job: &crate::config::NiqeJob, dir: &Path) -> Result<Outcome> {
    let corpus = match &job.corpus_dir {
        Some(d) => load_image_dir(d)?,
        None => synth::pristine_corpus(job.synthetic_count, job.size, job.seed),
    };
    let model = niqe_fit(&corpus, job.patch_size, job.keep_fraction)?;
    create_dir(dir)?;
    model.save(dir.join("niqe.model"))?;
    let echo = echo_niqe(job);
    let mut text = format!("{NIQE_REPORT_VERSION}\n");
    writeln!(text, "images = {}", corpus.len()).unwrap();
    writeln!(text, "patch_size = {}", model.patch_size).unwrap();
    writeln!(text, "keep_fraction = {:?}", model.keep_fraction).unwrap();
    let scores = corpus
        .iter()
        .map(|img| crate::metrics::niqe_score(img, &model))
        .collect::<Result<Vec<_>>>()?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    writeln!(text, "corpus_mean_niqe = {mean:?}").unwrap();
    writeln!(text, "[config] {}", echo.lines().count()).unwrap();
    text.push_str(&echo);
    write_text(dir, "report.txt", &text)?;
    write_text(dir, "resolved.cfg", &echo)?;
    Ok(Outcome::ok(format!(
        "fitted NIQE on {} images (corpus mean {mean:.4})\nmodel {}\n",
        corpus.len(),
        dir.join("niqe.model").display()
    )))
}
