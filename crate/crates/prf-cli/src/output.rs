//! Run outputs: CSV tables (RFC 4180 via the csv crate), a versioned JSON
//! report embedding the resolved configuration, and gnuplot scripts that
//! reference the CSV files.

use crate::config::RawConfig;
use serde::Serialize;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

pub struct RunWriter {
    out_dir: PathBuf,
    base: String,
}

impl RunWriter {
    pub fn new(out_dir: &str, base: &str) -> Result<RunWriter, String> {
        let out_dir = PathBuf::from(out_dir);
        fs::create_dir_all(&out_dir)
            .map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
        Ok(RunWriter { out_dir, base: base.to_string() })
    }

    pub fn csv_path(&self) -> PathBuf {
        self.out_dir.join(format!("{}.csv", self.base))
    }

    pub fn write_csv<T: Serialize>(&self, rows: &[T]) -> Result<PathBuf, String> {
        let path = self.csv_path();
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        for row in rows {
            w.serialize(row).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
        Ok(path)
    }

    pub fn write_report(
        &self,
        command: &str,
        config: &RawConfig,
        results: serde_json::Value,
        wall_seconds: f64,
    ) -> Result<PathBuf, String> {
        let path = self.out_dir.join(format!("{}_report.json", self.base));
        let report = json!({
            "schema_version": SCHEMA_VERSION,
            "tool": "prf",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "results": results,
            "wall_time_seconds": wall_seconds,
        });
        fs::write(&path, serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        Ok(path)
    }

    pub fn write_gnuplot(&self, script: &str) -> Result<PathBuf, String> {
        let path = self.out_dir.join(format!("{}.gp", self.base));
        fs::write(&path, script).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        Ok(path)
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap().to_string_lossy().into_owned()
}

pub fn rate_sweep_script(csv: &Path, has_borderless: bool, title: &str) -> String {
    let csv = file_name(csv);
    let mut plots = vec![
        format!("'{csv}' using 'k':'b1' with linespoints title 'tree'"),
        format!("'{csv}' using 'k':'b_inf' with linespoints title 'forest'"),
    ];
    if has_borderless {
        plots.push(format!(
            "'{csv}' using 'k':'b1_borderless' with linespoints title 'tree (borderless)'"
        ));
        plots.push(format!(
            "'{csv}' using 'k':'b_inf_borderless' with linespoints title 'forest (borderless)'"
        ));
    }
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale xy 2\n\
         set xlabel 'leaf parameter k'\n\
         set ylabel 'integrated bias'\n\
         set title '{title}'\n\
         set key bottom left\n\
         plot {}\n",
        plots.join(", \\\n     ")
    )
}

pub fn kernel_script(csv: &Path, title: &str) -> String {
    let csv = file_name(csv);
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 't'\n\
         set ylabel 'h(t, x)'\n\
         set title '{title}'\n\
         plot '{csv}' using 't':'h_estimate' with lines title 'estimate', \\\n     \
         '{csv}' using 't':($2-3*$3):($2+3*$3) with filledcurves fs transparent solid 0.2 title '3 SE band'\n"
    )
}

pub fn forest_size_script(csv: &Path, title: &str) -> String {
    let csv = file_name(csv);
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale x 2\n\
         set xlabel 'number of trees q'\n\
         set ylabel 'forest bias B_q'\n\
         set title '{title}'\n\
         plot '{csv}' using 'q':'bq_identity' with linespoints title 'identity', \\\n     \
         '{csv}' using 'q':'bq_direct' with points pt 6 title 'direct simulation'\n"
    )
}
