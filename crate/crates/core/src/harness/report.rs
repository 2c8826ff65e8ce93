use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{read_metrics_csv, MetricsRow};
use crate::numerics::mean_and_stderr;

/// Columns summarized across seeds, in table order.
pub const SUMMARY_COLUMNS: [&str; 7] = [
    "bwt",
    "bwt_bound",
    "forgetting",
    "forget_bound",
    "fwd_loss",
    "bwt_disc",
    "forget_disc",
];

/// Mean and standard error over seeds, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryCell {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub seeds: Vec<String>,
    /// Final row of every seed, in the order of `seeds`.
    pub final_rows: Vec<MetricsRow>,
    /// One cell per entry of [`SUMMARY_COLUMNS`].
    pub cells: Vec<SummaryCell>,
}

impl RunSummary {
    pub fn cell(&self, column: &str) -> Option<SummaryCell> {
        SUMMARY_COLUMNS.iter().position(|&c| c == column).map(|i| self.cells[i])
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} ({} seeds, values in %)", self.dir.display(), self.seeds.len());
        for (name, c) in SUMMARY_COLUMNS.iter().zip(&self.cells) {
            let _ = writeln!(s, "  {name:<13} {:>8.3} ± {:.3}", c.mean, c.stderr);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "mean_pct", "stderr_pct"])?;
        for (name, c) in SUMMARY_COLUMNS.iter().zip(&self.cells) {
            w.write_record([name.to_string(), c.mean.to_string(), c.stderr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn column(row: &MetricsRow, name: &str) -> f64 {
    match name {
        "bwt" => row.bwt,
        "bwt_bound" => row.bwt_bound,
        "forgetting" => row.forgetting,
        "forget_bound" => row.forget_bound,
        "fwd_loss" => row.fwd_loss,
        "bwt_disc" => row.bwt_disc,
        "forget_disc" => row.forget_disc,
        _ => f64::NAN,
    }
}

/// Summarizes the final checkpoint of every `seed_*/metrics.csv` under `dir`.
pub fn summarize(dir: &Path) -> Result<RunSummary> {
    let mut seed_dirs: Vec<(String, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let csv = e.path().join("metrics.csv");
            (name.starts_with("seed_") && csv.is_file()).then_some((name, csv))
        })
        .collect();
    if seed_dirs.is_empty() {
        return Err(Error::Io(format!("no seed_*/metrics.csv under {}", dir.display())));
    }
    seed_dirs.sort();
    let mut seeds = Vec::new();
    let mut final_rows = Vec::new();
    for (name, csv) in seed_dirs {
        let rows = read_metrics_csv(fs::File::open(&csv)?)?;
        let last = *rows
            .last()
            .ok_or_else(|| Error::Io(format!("{} has no rows", csv.display())))?;
        seeds.push(name);
        final_rows.push(last);
    }
    let cells = SUMMARY_COLUMNS
        .iter()
        .map(|name| {
            let xs: Vec<f64> = final_rows.iter().map(|r| 100.0 * column(r, name)).collect();
            let (mean, stderr) = mean_and_stderr(&xs);
            SummaryCell { mean, stderr }
        })
        .collect();
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        seeds,
        final_rows,
        cells,
    })
}

/// Summarizes `dir` and writes `summary.csv` next to the seed directories.
pub fn report(dir: &Path) -> Result<RunSummary> {
    let summary = summarize(dir)?;
    summary.write_csv(&dir.join("summary.csv"))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "checkpoint,task_id,bwt,forgetting,fwd_loss,bwt_disc,forget_disc,bwt_bound,forget_bound\n\
        1,1,NaN,NaN,0.1,NaN,NaN,NaN,NaN\n";

    #[test]
    fn summarizes_final_rows() {
        let dir = tempfile::tempdir().unwrap();
        for (s, bwt) in [(0, 0.02), (1, 0.04)] {
            let d = dir.path().join(format!("seed_{s}"));
            fs::create_dir_all(&d).unwrap();
            let text = format!("{CSV}2,2,{bwt},0.01,0.1,{bwt},0.01,0.05,0.03\n");
            fs::write(d.join("metrics.csv"), text).unwrap();
        }
        let s = report(dir.path()).unwrap();
        let bwt = s.cell("bwt").unwrap();
        assert!((bwt.mean - 3.0).abs() < 1e-12);
        assert!((bwt.stderr - 1.0).abs() < 1e-12);
        assert!(s.table().contains("forget_bound"));
        assert!(dir.path().join("summary.csv").is_file());
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(summarize(dir.path()).is_err());
    }
}
