//! Experiment reports and the files written from them.
//!
//! An output directory holds:
//! - `report.csv`: one row per (algorithm, particle count), columns
//!   `alg,n_p,rmse_l,rmse_n,ctb_ms,divergence_rate,mem_estimate,flops_estimate,runs,seed`.
//!   `flops_estimate` is empty for filters. RMSEs are `NaN` when every run diverged.
//! - `curves.csv`: long-format plot data `figure_id,alg,n_p,value` with
//!   `figure_id` one of `rmse_n`, `rmse_l`, `ctb`.
//! - `errors.csv`: `alg,n_p,run,message`, one row per failed run.
//! - `manifest.txt`: `key = value` lines, one per line, `#` starts a comment.
//!   Keys are the crate and config versions, the echoed configuration
//!   (`config.*`) and the derived per-run seeds (`seeds.n_p<N>.run<R>`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complexity::Algorithm;
use crate::error::Result;

use super::config::{ExperimentConfig, CONFIG_VERSION};
use super::RunSeeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub alg: Algorithm,
    pub n_p: usize,
    pub rmse_l: f64,
    pub rmse_n: f64,
    pub ctb_ms: f64,
    pub divergence_rate: f64,
    pub mem_estimate: u64,
    pub flops_estimate: Option<u64>,
    pub runs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub alg: Algorithm,
    pub n_p: usize,
    pub run: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub figure_id: String,
    pub alg: Algorithm,
    pub n_p: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub errors: Vec<ErrorRow>,
}

pub const REPORT_HEADER: [&str; 10] =
    ["alg", "n_p", "rmse_l", "rmse_n", "ctb_ms", "divergence_rate", "mem_estimate", "flops_estimate", "runs", "seed"];
pub const CURVES_HEADER: [&str; 4] = ["figure_id", "alg", "n_p", "value"];
pub const ERRORS_HEADER: [&str; 4] = ["alg", "n_p", "run", "message"];

fn write_csv<T: Serialize>(header: &[&str], items: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(header)?;
    for it in items {
        w.serialize(it)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

impl BenchReport {
    pub fn row(&self, alg: Algorithm, n_p: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.alg == alg && r.n_p == n_p)
    }

    pub fn report_csv(&self) -> Result<String> {
        write_csv(&REPORT_HEADER, &self.rows)
    }

    pub fn errors_csv(&self) -> Result<String> {
        write_csv(&ERRORS_HEADER, &self.errors)
    }

    pub fn curves(&self) -> Vec<CurvePoint> {
        let mut out = Vec::with_capacity(3 * self.rows.len());
        type Metric = fn(&BenchRow) -> f64;
        let metrics: [(&str, Metric); 3] = [("rmse_n", |r| r.rmse_n), ("rmse_l", |r| r.rmse_l), ("ctb", |r| r.ctb_ms)];
        for (id, get) in metrics {
            out.extend(self.rows.iter().map(|r| CurvePoint { figure_id: id.to_string(), alg: r.alg, n_p: r.n_p, value: get(r) }));
        }
        out
    }

    pub fn curves_csv(&self) -> Result<String> {
        write_csv(&CURVES_HEADER, &self.curves())
    }

    /// Parses `report.csv` (and optionally `errors.csv`) text.
    pub fn from_csv(report: &str, errors: Option<&str>) -> Result<Self> {
        Ok(Self { rows: read_csv(report)?, errors: errors.map(read_csv).transpose()?.unwrap_or_default() })
    }

    /// Writes all four output files into `dir`, creating it if needed.
    pub fn emit(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.report_csv()?)?;
        fs::write(dir.join("curves.csv"), self.curves_csv()?)?;
        fs::write(dir.join("errors.csv"), self.errors_csv()?)?;
        fs::write(dir.join("manifest.txt"), manifest(cfg))?;
        Ok(())
    }
}

/// Plain-text run manifest.
pub fn manifest(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let join = |v: Vec<String>| v.join(",");
    let _ = writeln!(s, "# dbsmooth run manifest");
    let _ = writeln!(s, "crate_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "config_version = {CONFIG_VERSION}");
    let _ = writeln!(s, "config.seed = {}", cfg.seed);
    let _ = writeln!(s, "config.runs = {}", cfg.runs);
    let _ = writeln!(s, "config.t = {}", cfg.t());
    let _ = writeln!(s, "config.algorithms = {}", join(cfg.algorithms.iter().map(|a| a.to_string()).collect()));
    let _ = writeln!(s, "config.n_particles = {}", join(cfg.n_particles.iter().map(|n| n.to_string()).collect()));
    let _ = writeln!(s, "config.m = {}", cfg.m.map_or("n_p".to_string(), |m| m.to_string()));
    let _ = writeln!(s, "config.n_i = {}", cfg.n_i);
    let _ = writeln!(s, "config.weight_reuse = {}", cfg.weight_reuse);
    let _ = writeln!(s, "config.divergence_threshold = {}", cfg.threshold());
    let _ = writeln!(s, "config.pseudo = {:?}", cfg.pseudo);
    let _ = writeln!(s, "config.resampling = {:?}", cfg.resampling);
    let _ = writeln!(s, "config.model = {}", cfg.model.name());
    let model_toml = toml::to_string(&cfg.model).unwrap_or_default();
    for line in model_toml.lines().filter(|l| !l.trim().is_empty() && !l.starts_with("kind")) {
        if let Some((k, v)) = line.split_once('=') {
            let _ = writeln!(s, "config.model.{} = {}", k.trim(), v.trim());
        }
    }
    for &n_p in &cfg.n_particles {
        for run in 0..cfg.runs {
            let seeds = RunSeeds::derive(cfg.seed, n_p, run);
            let _ = writeln!(s, "seeds.n_p{n_p}.run{run} = placement:{},simulation:{}", seeds.placement, seeds.simulation);
        }
    }
    s
}

/// Parses `key = value` manifest text, skipping blank and comment lines.
pub fn parse_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect()
}
