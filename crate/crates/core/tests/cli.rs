use std::path::Path;
use std::process::{Command, Output};

use maelab::harness::RunReport;
use maelab::image_io::{write_pnm, ImageBuffer};

const BIN: &str = env!("CARGO_BIN_EXE_maelab");

fn maelab(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("MAELAB_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_TRAIN: &str = "\
[experiment]
task = denoise
configuration = original
seed = 3
[data]
synthetic_train = 3
synthetic_val = 2
size = 16
[model]
width = 4
[optim]
steps = 10
batch_size = 2
";

#[test]
fn unknown_subcommand_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = maelab(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_train_config_names_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.cfg"), "").unwrap();
    let o = maelab(dir.path(), &["train", "--config", "empty.cfg", "--out", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.task"), "{}", stderr(&o));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn typo_reports_line_and_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.cfg"), format!("{SMALL_TRAIN}[loss]\nlamda = 1\n")).unwrap();
    let o = maelab(dir.path(), &["train", "--config", "t.cfg", "--out", "run"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 15") && err.contains("did you mean `loss.lambda`"), "{err}");
}

#[test]
fn bad_override_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.cfg"), SMALL_TRAIN).unwrap();
    let o = maelab(dir.path(), &["train", "--config", "t.cfg", "--set", "optim.steps=many"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("command-line override"), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.cfg"), SMALL_TRAIN).unwrap();
    let o = maelab(
        dir.path(),
        &["train", "--config", "t.cfg", "--set", "experiment.configuration=ccmae", "--set", "mae.checkpoint=nope.maec", "--out", "run"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn train_twice_is_deterministic_and_echo_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.cfg"), SMALL_TRAIN).unwrap();
    for out in ["a", "b"] {
        let o = maelab(dir.path(), &["train", "--config", "t.cfg", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = RunReport::load(dir.path().join("a/report.txt")).unwrap();
    let b = RunReport::load(dir.path().join("b/report.txt")).unwrap();
    assert_eq!(a.weight_checksum, b.weight_checksum);
    assert!(a.same_run(&b));
    for f in ["model.rstc", "steps.csv", "metrics.csv", "resolved.cfg"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }

    let o = maelab(dir.path(), &["train", "--config", "a/resolved.cfg", "--out", "c"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = RunReport::load(dir.path().join("c/report.txt")).unwrap();
    assert!(a.same_run(&c));
}

#[test]
fn lambda_flag_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.cfg"), SMALL_TRAIN).unwrap();
    let o = maelab(dir.path(), &["train", "--config", "t.cfg", "--lambda", "0.25", "--steps", "2", "--out", "r"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let echo = std::fs::read_to_string(dir.path().join("r/resolved.cfg")).unwrap();
    assert!(echo.contains("lambda = 0.25") && echo.contains("steps = 2"), "{echo}");
}

#[test]
fn out_env_sets_default_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.cfg"), SMALL_TRAIN).unwrap();
    let o = Command::new(BIN)
        .args(["train", "--config", "t.cfg", "--steps", "1"])
        .current_dir(dir.path())
        .env("MAELAB_OUT", "root")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("root/train/report.txt").exists());
}

#[test]
fn metrics_identity() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageBuffer::new(16, 16, 3, (0..768).map(|i| (i % 255) as f64 / 255.0).collect()).unwrap();
    write_pnm(dir.path().join("a.ppm"), &img).unwrap();
    let o = maelab(dir.path(), &["metrics", "--pred", "a.ppm", "--gt", "a.ppm", "--out", "m"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("PSNR = 99.0") && out.contains("SSIM = 1.0"), "{out}");
    let report = std::fs::read_to_string(dir.path().join("m/metrics.txt")).unwrap();
    assert!(report.starts_with("MMET1\n"));
}

#[test]
fn metrics_rejects_unknown_metric() {
    let dir = tempfile::tempdir().unwrap();
    let o = maelab(dir.path(), &["metrics", "--pred", "a.ppm", "--gt", "a.ppm", "--metrics", "PSNR,LPIPS"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = maelab(dir.path(), &["gradcheck", "--out", "g"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = std::fs::read_to_string(dir.path().join("g/gradcheck.txt")).unwrap();
    assert!(text.contains("overall: PASS") && text.contains("adjoint overall: PASS"));
    assert!(text.contains("conv2d_transpose") && text.contains("total_loss(ccmae)"));
}

#[test]
fn pretrain_eval_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = maelab(
        d,
        &[
            "pretrain-mae", "--steps", "5", "--set", "data.size=16", "--set", "data.synthetic_count=3",
            "--set", "model.feature_channels=8", "--set", "model.depth=2", "--set", "pretrain.patch_px=8", "--out", "pt",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(d.join("pt/mae.maec").exists());
    let report = std::fs::read_to_string(d.join("pt/report.txt")).unwrap();
    assert!(report.starts_with("MPRT1\n") && report.contains("[losses] 5"));

    std::fs::write(d.join("o.cfg"), SMALL_TRAIN).unwrap();
    std::fs::write(
        d.join("c.cfg"),
        SMALL_TRAIN.replace("configuration = original", "configuration = ccmae") + "[mae]\ncheckpoint = pt/mae.maec\n",
    )
    .unwrap();
    for (cfg, out) in [("o.cfg", "orig"), ("c.cfg", "cc")] {
        let o = maelab(d, &["train", "--config", cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }

    let o = maelab(d, &["eval", "--config", "o.cfg", "--checkpoint", "orig/model.rstc", "--out", "ev"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trained = RunReport::load(d.join("orig/report.txt")).unwrap();
    let evaluated = RunReport::load(d.join("ev/report.txt")).unwrap();
    assert_eq!(trained.eval, evaluated.eval);
    assert_eq!(trained.weight_checksum, evaluated.weight_checksum);

    let o = maelab(d, &["compare", "--reports", "orig/report.txt", "cc/report.txt", "--out", "cmp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("Original") && table.contains("+CCMAE") && table.contains("PSNR"), "{table}");
    assert!(d.join("cmp/comparison.csv").exists());
}

#[test]
fn fit_niqe_writes_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = maelab(
        dir.path(),
        &["fit-niqe", "--set", "niqe.size=64", "--set", "niqe.patch_size=16", "--seed", "2", "--out", "n"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model = maelab::metrics::NiqeModel::load(dir.path().join("n/niqe.model")).unwrap();
    assert_eq!(model.patch_size, 16);
    let echo = std::fs::read_to_string(dir.path().join("n/resolved.cfg")).unwrap();
    assert!(echo.contains("seed = 2"));
}
