//! A small Monte Carlo sweep over particle counts, built in code instead of
//! from a TOML file, with the report written to a directory.
//!
//! `cargo run --release --example bench_sweep -- [out_dir]`

use std::path::PathBuf;

use dbsmooth::bench::{run_experiment, ExperimentConfig, ModelSpec};
use dbsmooth::complexity::Algorithm;

fn main() -> dbsmooth::error::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let algs = vec![Algorithm::Dbf, Algorithm::Mpf, Algorithm::Dbsa, Algorithm::Sdbsa];
    let mut cfg = ExperimentConfig::new(ModelSpec::by_name("ssm1")?, algs, vec![25, 50, 100], 8, 11);
    cfg.t = Some(100);

    let report = run_experiment(&cfg)?;
    print!("{}", report.report_csv()?);
    if let Some(dir) = out {
        report.emit(&cfg, &dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
