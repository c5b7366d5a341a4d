use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::EpochMetrics;
use crate::error::{Error, Result};
use crate::experiment::run::{METRICS_FILE, TIMING_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: PathBuf,
    pub epochs: usize,
    pub final_acc_real: f64,
    pub final_acc_synth: f64,
    pub final_mean_synth_mse: f64,
    pub peak_mean_synth_mse: f64,
    /// Final over peak synthetic MSE; 0 for runs without generators.
    pub collapse_ratio: f64,
    /// NaN if the run recorded no timing.
    pub wall_time_s: f64,
}

pub fn parse_metrics(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == EpochMetrics::CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {:?}", EpochMetrics::CSV_HEADER),
            })
        }
    }
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse {
            line: idx + 1,
            message: m,
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(err(format!("expected 6 columns, found {}", cols.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
        rows.push(EpochMetrics {
            epoch: cols[0].parse().map_err(|e| err(format!("epoch: {e}")))?,
            acc_real: f(cols[1])?,
            acc_synth: f(cols[2])?,
            mean_synth_mse: f(cols[3])?,
            mean_mas_penalty: f(cols[4])?,
            gated_fraction: f(cols[5])?,
        });
    }
    Ok(rows)
}

pub fn read_metrics(run_dir: &Path) -> Result<Vec<EpochMetrics>> {
    let path = run_dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_metrics(&text)
}

pub fn read_wall_time(run_dir: &Path) -> Option<f64> {
    let text = fs::read_to_string(run_dir.join(TIMING_FILE)).ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("wall_time_s = "))
        .and_then(|v| v.trim().parse().ok())
}

pub fn summarize(run_dir: &Path) -> Result<RunSummary> {
    let metrics = read_metrics(run_dir)?;
    let last = metrics
        .last()
        .ok_or_else(|| Error::Config(format!("{} has no metric rows", run_dir.display())))?;
    let peak = metrics.iter().map(|m| m.mean_synth_mse).fold(0.0, f64::max);
    Ok(RunSummary {
        run: run_dir.to_path_buf(),
        epochs: last.epoch,
        final_acc_real: last.acc_real,
        final_acc_synth: last.acc_synth,
        final_mean_synth_mse: last.mean_synth_mse,
        peak_mean_synth_mse: peak,
        collapse_ratio: if peak > 0.0 { last.mean_synth_mse / peak } else { 0.0 },
        wall_time_s: read_wall_time(run_dir).unwrap_or(f64::NAN),
    })
}

pub fn compare_runs(run_dirs: &[PathBuf]) -> Result<Vec<RunSummary>> {
    if run_dirs.len() < 2 {
        return Err(Error::Config("compare needs at least two run directories".into()));
    }
    run_dirs.iter().map(|d| summarize(d)).collect()
}

pub fn summary_csv(rows: &[RunSummary]) -> String {
    let mut out = String::from(
        "run,epochs,final_acc_real,final_acc_synth,final_mean_synth_mse,peak_mean_synth_mse,collapse_ratio,wall_time_s\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.run.display(),
            r.epochs,
            r.final_acc_real,
            r.final_acc_synth,
            r.final_mean_synth_mse,
            r.peak_mean_synth_mse,
            r.collapse_ratio,
            r.wall_time_s
        )
        .unwrap();
    }
    out
}
