//! `RRPT1` run reports and multi-run comparison tables.
//!
//! A report is line-oriented text:
//!
//! ```text
//! RRPT1
//! label = +CCMAE
//! task = denoise
//! seed = 0
//! weight_checksum = <sha256>
//! encoder_checksum = <sha256> | none
//! val_checksum = <sha256>
//! wall_time_s = 12.5
//! psnr_cap_db = 99.0
//! [config] <n lines>
//! ...
//! [steps] <n rows>
//! step,base,feature,total
//! ...
//! [metrics] <n rows>
//! index,PSNR,SSIM
//! ...
//! [aggregate]
//! PSNR,SSIM
//! <means>
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so parsing restores every
//! value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{Metric, PSNR_CAP_DB};

pub const REPORT_VERSION: &str = "RRPT1";
const FORMAT: &str = "RRPT1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub base: f64,
    /// Unweighted feature distance; zero when no encoder is in use.
    pub feature: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricTable {
    pub metrics: Vec<Metric>,
    /// `(image index, value per metric)`, sorted by index.
    pub rows: Vec<(usize, Vec<f64>)>,
    pub aggregate: Vec<f64>,
}

impl MetricTable {
    /// Sort rows by index and take per-metric means.
    pub fn from_rows(metrics: Vec<Metric>, mut rows: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("metric table needs at least one image"));
        }
        if rows.iter().any(|(_, v)| v.len() != metrics.len()) {
            return Err(Error::invalid("metric row width does not match the metric list"));
        }
        rows.sort_by_key(|(i, _)| *i);
        let n = rows.len() as f64;
        let aggregate = (0..metrics.len())
            .map(|m| rows.iter().map(|(_, v)| v[m]).sum::<f64>() / n)
            .collect();
        Ok(MetricTable {
            metrics,
            rows,
            aggregate,
        })
    }

    pub fn aggregate_of(&self, metric: Metric) -> Option<f64> {
        self.metrics.iter().position(|&m| m == metric).map(|i| self.aggregate[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index");
        for m in &self.metrics {
            write!(s, ",{m}").unwrap();
        }
        s.push('\n');
        for (i, vals) in &self.rows {
            write!(s, "{i}").unwrap();
            for v in vals {
                write!(s, ",{v:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub label: String,
    pub task: String,
    pub seed: u64,
    /// Fully resolved configuration text; re-parsing it reproduces the run.
    pub config_echo: String,
    pub steps: Vec<StepLog>,
    pub eval: MetricTable,
    pub weight_checksum: String,
    pub encoder_checksum: Option<String>,
    pub val_checksum: String,
    pub wall_time_s: f64,
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::Malformed {
        format: FORMAT,
        reason: reason.into(),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| malformed(format!("bad number {s:?}")))
}

fn parse_metric_header(line: &str, lead: Option<&str>) -> Result<Vec<Metric>> {
    let mut cols = line.split(',');
    if let Some(lead) = lead {
        if cols.next() != Some(lead) {
            return Err(malformed(format!("expected `{lead}` column")));
        }
    }
    cols.map(|c| Metric::parse(c).ok_or_else(|| malformed(format!("unknown metric {c:?}"))))
        .collect()
}

struct Cursor<'a>(std::str::Lines<'a>);

impl<'a> Cursor<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.0.next().ok_or(Error::UnexpectedEof { format: FORMAT })
    }

    fn field(&mut self, key: &str) -> Result<String> {
        let line = self.next()?;
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| malformed(format!("expected `{key} = ...`")))?;
        if k != key {
            return Err(malformed(format!("expected `{key}`, found `{k}`")));
        }
        Ok(v.to_string())
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let line = self.next()?;
        line.strip_prefix(&format!("[{name}] "))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| malformed(format!("expected `[{name}] <count>`")))
    }
}

impl RunReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.total)
    }

    /// Equality ignoring wall-clock time.
    pub fn same_run(&self, other: &RunReport) -> bool {
        RunReport {
            wall_time_s: 0.0,
            ..self.clone()
        } == RunReport {
            wall_time_s: 0.0,
            ..other.clone()
        }
    }

    pub fn steps_csv(&self) -> String {
        let mut s = String::from("step,base,feature,total\n");
        for l in &self.steps {
            writeln!(s, "{},{:?},{:?},{:?}", l.step, l.base, l.feature, l.total).unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{REPORT_VERSION}").unwrap();
        writeln!(s, "label = {}", self.label).unwrap();
        writeln!(s, "task = {}", self.task).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "weight_checksum = {}", self.weight_checksum).unwrap();
        writeln!(s, "encoder_checksum = {}", self.encoder_checksum.as_deref().unwrap_or("none")).unwrap();
        writeln!(s, "val_checksum = {}", self.val_checksum).unwrap();
        writeln!(s, "wall_time_s = {:?}", self.wall_time_s).unwrap();
        writeln!(s, "psnr_cap_db = {PSNR_CAP_DB:?}").unwrap();
        let echo: Vec<&str> = self.config_echo.lines().collect();
        writeln!(s, "[config] {}", echo.len()).unwrap();
        for l in echo {
            writeln!(s, "{l}").unwrap();
        }
        writeln!(s, "[steps] {}", self.steps.len()).unwrap();
        s.push_str(&self.steps_csv());
        writeln!(s, "[metrics] {}", self.eval.rows.len()).unwrap();
        s.push_str(&self.eval.to_csv());
        writeln!(s, "[aggregate]").unwrap();
        let names: Vec<String> = self.eval.metrics.iter().map(|m| m.to_string()).collect();
        writeln!(s, "{}", names.join(",")).unwrap();
        let means: Vec<String> = self.eval.aggregate.iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "{}", means.join(",")).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Cursor(text.lines());
        if c.next()? != REPORT_VERSION {
            return Err(malformed("missing RRPT1 version line"));
        }
        let label = c.field("label")?;
        let task = c.field("task")?;
        let seed = c.field("seed")?.parse().map_err(|_| malformed("bad seed"))?;
        let weight_checksum = c.field("weight_checksum")?;
        let encoder_checksum = Some(c.field("encoder_checksum")?).filter(|v| v != "none");
        let val_checksum = c.field("val_checksum")?;
        let wall_time_s = parse_f64(&c.field("wall_time_s")?)?;
        c.field("psnr_cap_db")?;

        let n_config = c.section("config")?;
        let config_echo: String = (0..n_config).map(|_| c.next().map(|l| format!("{l}\n"))).collect::<Result<_>>()?;

        let n_steps = c.section("steps")?;
        if c.next()? != "step,base,feature,total" {
            return Err(malformed("bad steps header"));
        }
        let steps = (0..n_steps)
            .map(|_| {
                let line = c.next()?;
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 4 {
                    return Err(malformed("step row needs 4 columns"));
                }
                Ok(StepLog {
                    step: cols[0].parse().map_err(|_| malformed("bad step index"))?,
                    base: parse_f64(cols[1])?,
                    feature: parse_f64(cols[2])?,
                    total: parse_f64(cols[3])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let n_rows = c.section("metrics")?;
        let metrics = parse_metric_header(c.next()?, Some("index"))?;
        let rows = (0..n_rows)
            .map(|_| {
                let line = c.next()?;
                let mut cols = line.split(',');
                let idx = cols
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| malformed("bad image index"))?;
                let vals = cols.map(parse_f64).collect::<Result<Vec<_>>>()?;
                Ok((idx, vals))
            })
            .collect::<Result<Vec<_>>>()?;
        if c.next()? != "[aggregate]" {
            return Err(malformed("expected [aggregate]"));
        }
        let agg_metrics = parse_metric_header(c.next()?, None)?;
        let aggregate = c.next()?.split(',').map(parse_f64).collect::<Result<Vec<_>>>()?;
        if agg_metrics != metrics || aggregate.len() != metrics.len() || rows.iter().any(|(_, v)| v.len() != metrics.len()) {
            return Err(malformed("metric columns disagree"));
        }
        Ok(RunReport {
            label,
            task,
            seed,
            config_echo,
            steps,
            eval: MetricTable {
                metrics,
                rows,
                aggregate,
            },
            weight_checksum,
            encoder_checksum,
            val_checksum,
            wall_time_s,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub values: Vec<f64>,
    pub best: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub task: String,
    pub metrics: Vec<Metric>,
    pub rows: Vec<ComparisonRow>,
}

/// One row per report, one column per requested metric, every maximum (or
/// minimum, for lower-is-better metrics) flagged.
pub fn compare_runs(reports: &[RunReport], metrics: &[Metric]) -> Result<Comparison> {
    let first = reports.first().ok_or_else(|| Error::invalid("compare needs at least one report"))?;
    for r in reports {
        if r.task != first.task {
            return Err(Error::invalid(format!("reports mix tasks `{}` and `{}`", first.task, r.task)));
        }
        if r.val_checksum != first.val_checksum {
            return Err(Error::invalid(format!(
                "validation sets differ between `{}` and `{}`",
                first.label, r.label
            )));
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| {
            let values = metrics
                .iter()
                .map(|&m| {
                    r.eval
                        .aggregate_of(m)
                        .ok_or_else(|| Error::invalid(format!("report `{}` has no {m} values", r.label)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ComparisonRow {
                label: r.label.clone(),
                best: vec![false; values.len()],
                values,
            })
        })
        .collect::<Result<_>>()?;
    for (j, m) in metrics.iter().enumerate() {
        let column = rows.iter().map(|r| r.values[j]);
        let target = if m.higher_is_better() {
            column.fold(f64::NEG_INFINITY, f64::max)
        } else {
            column.fold(f64::INFINITY, f64::min)
        };
        for r in &mut rows {
            r.best[j] = r.values[j] == target;
        }
    }
    Ok(Comparison {
        task: first.task.clone(),
        metrics: metrics.to_vec(),
        rows,
    })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("configuration");
        for m in &self.metrics {
            write!(s, ",{m},{m}_best").unwrap();
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.label);
            for (v, b) in r.values.iter().zip(&r.best) {
                write!(s, ",{v:?},{}", u8::from(*b)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Aligned table; best values carry a trailing `*`.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Configuration".to_string()];
        header.extend(self.metrics.iter().map(|m| format!("{m}{}", if m.higher_is_better() { "↑" } else { "↓" })));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.label.clone()];
                cells.extend(
                    r.values
                        .iter()
                        .zip(&r.best)
                        .map(|(v, b)| format!("{v:.4}{}", if *b { "*" } else { "" })),
                );
                cells
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|j| {
                std::iter::once(&header)
                    .chain(&body)
                    .map(|row| row[j].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let fmt_row = |row: &[String]| -> String {
            row.iter()
                .enumerate()
                .map(|(j, c)| {
                    let pad = widths[j] - c.chars().count();
                    if j == 0 {
                        format!("{c}{}", " ".repeat(pad))
                    } else {
                        format!("{}{c}", " ".repeat(pad))
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut s = format!("Task: {}\n", self.task);
        s.push_str(&fmt_row(&header));
        s.push('\n');
        for row in &body {
            s.push_str(&fmt_row(row));
            s.push('\n');
        }
        s
    }
}
