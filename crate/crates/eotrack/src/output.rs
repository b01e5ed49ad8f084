//! Result files: `rmse.csv`, `cdf_<mode>.csv` and `summary.txt`.
//!
//! Numbers are written in plain decimal notation with twelve significant
//! digits. Wall time only appears in the summary, so the CSV files of two
//! runs with the same seed are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use eotrack_core::likelihood::Mode;

use crate::config::RunSpec;
use crate::harness::ResultTable;
use crate::Error;

const SIGNIFICANT: i32 = 12;

/// Fixed-point rendering with at least [`SIGNIFICANT`] significant digits.
pub fn decimal(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = if x == 0.0 {
        0
    } else {
        x.abs().log10().floor() as i32
    };
    let places = (SIGNIFICANT - 1 - magnitude).max(0) as usize;
    format!("{x:.places$}")
}

pub fn rmse_csv(table: &ResultTable) -> String {
    let mut out = String::from("step,bound");
    for m in &table.modes {
        out.push(',');
        out.push_str(m.mode.name());
    }
    out.push('\n');
    for n in 0..table.steps() {
        let _ = write!(out, "{},{}", n + 1, decimal(table.bound[n]));
        for m in &table.modes {
            let _ = write!(out, ",{}", decimal(m.rmse[n]));
        }
        out.push('\n');
    }
    out
}

/// Empirical CDF; the probability of the `k`-th smallest of `N` samples is
/// `k / N`.
pub fn cdf_csv(sorted_errors: &[f64]) -> String {
    let mut out = String::from("error_m,cumulative_probability\n");
    let n = sorted_errors.len();
    for (k, e) in sorted_errors.iter().enumerate() {
        let p = if k + 1 == n {
            1.0
        } else {
            (k + 1) as f64 / n as f64
        };
        let _ = writeln!(out, "{},{}", decimal(*e), decimal(p));
    }
    out
}

pub fn summary(table: &ResultTable, spec: &RunSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "realizations = {}", table.realizations);
    let _ = writeln!(out, "steps = {}", table.steps());
    let _ = writeln!(
        out,
        "wall_time_s = {}",
        decimal(table.wall_time.as_secs_f64())
    );
    for m in &table.modes {
        let name = m.mode.name();
        let _ = writeln!(
            out,
            "divergence_fraction.{name} = {}",
            decimal(m.divergence_fraction(table.realizations))
        );
        let _ = writeln!(
            out,
            "collapse_fraction.{name} = {}",
            decimal(m.collapsed as f64 / table.realizations as f64)
        );
        let _ = writeln!(
            out,
            "mean_rmse_m.{name} = {}",
            decimal(m.mean_rmse(1, table.steps()))
        );
    }
    out.push_str("\n# configuration\n");
    out.push_str(&spec.save());
    out
}

pub fn cdf_file_name(mode: Mode) -> String {
    format!("cdf_{}.csv", mode.name())
}

fn write(path: PathBuf, contents: &str) -> Result<(), Error> {
    fs::write(&path, contents).map_err(|source| Error::Io { path, source })
}

pub fn write_outputs(table: &ResultTable, spec: &RunSpec, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.into(),
        source,
    })?;
    write(dir.join("rmse.csv"), &rmse_csv(table))?;
    for m in &table.modes {
        write(dir.join(cdf_file_name(m.mode)), &cdf_csv(&m.sorted_errors))?;
    }
    write(dir.join("summary.txt"), &summary(table, spec))
}

/// Columns of `rmse.csv`: header names and one row of numbers per step.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn parse_csv(text: &str) -> Result<CsvTable, String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty file")?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .enumerate()
        .map(|(i, line)| {
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("row {}: {e}", i + 1))?;
            if row.len() == header.len() {
                Ok(row)
            } else {
                Err(format!(
                    "row {}: {} fields, expected {}",
                    i + 1,
                    row.len(),
                    header.len()
                ))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(CsvTable { header, rows })
}
