//! Monte Carlo experiment harness.
//!
//! For every particle count in the sweep and every run, a fresh trajectory is
//! simulated and each requested algorithm is run on it. Runs are independent
//! and execute on the rayon pool; results are reduced in run order, so all
//! columns except timings are reproducible for a fixed seed.
//!
//! Smoothers that share a forward filter reuse one cache per run. Their
//! timing is the filter's wall time plus their own backward wall time.

pub mod config;
pub mod metrics;
pub mod report;

use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;

pub use config::{ExperimentConfig, LinearParams, ModelSpec};
pub use metrics::{detect_divergence, median, rmse, SquaredErrors};
pub use report::{BenchReport, BenchRow, ErrorRow};

use crate::backward::{run_smoother, SmootherAlg, SmootherConfig};
use crate::complexity::{self, Algorithm, Dims};
use crate::error::{Error, Result};
use crate::forward::{run_dbf, run_mpf, run_sdbf, FilterKind, ForwardCache, ForwardConfig};
use crate::linalg::Vector;
use crate::model::{simulate, ClgModel};
use crate::particles::RandomStream;

const PLACEMENT_TAG: u64 = 1;
const SIMULATION_TAG: u64 = 2;

/// Seeds of one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub placement: u64,
    pub simulation: u64,
}

impl RunSeeds {
    pub fn derive(root: u64, n_particles: usize, run: usize) -> Self {
        let draw = |tag| RandomStream::new(root, run as u64, tag, n_particles as u64).next_u64();
        Self { placement: draw(PLACEMENT_TAG), simulation: draw(SIMULATION_TAG) }
    }
}

/// Outcome of one algorithm on one run.
#[derive(Debug, Clone)]
pub struct AlgOutcome {
    pub alg: Algorithm,
    pub estimates: Vec<Vector>,
    pub elapsed_ms: f64,
    /// forward particle weights vanished at least once
    pub collapsed: bool,
}

/// Outcome of one run: the truth and one entry per requested algorithm, or
/// the message of the error that stopped that algorithm.
#[derive(Debug)]
pub struct RunOutcome {
    pub run: usize,
    pub truth: Vec<Vector>,
    pub results: Vec<std::result::Result<AlgOutcome, String>>,
}

type CacheSlot = (FilterKind, std::result::Result<(ForwardCache, f64), String>);

fn smoother_alg(alg: Algorithm) -> Option<SmootherAlg> {
    match alg {
        Algorithm::Dbsa => Some(SmootherAlg::Dbsa),
        Algorithm::Sdbsa => Some(SmootherAlg::Sdbsa),
        Algorithm::Ddbsa => Some(SmootherAlg::Ddbsa),
        Algorithm::Sddbsa => Some(SmootherAlg::Sddbsa),
        _ => None,
    }
}

fn ms_since(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}

/// Runs every configured algorithm on one simulated trajectory.
pub fn run_once(cfg: &ExperimentConfig, n_particles: usize, run: usize) -> Result<RunOutcome> {
    let seeds = RunSeeds::derive(cfg.seed, n_particles, run);
    let model = cfg.model.build(seeds.placement)?;
    let traj = simulate(model.as_ref(), cfg.t(), seeds.simulation)?;
    let fcfg = ForwardConfig { n_particles, seed: cfg.seed, run: run as u64, pseudo: cfg.pseudo, resampling: cfg.resampling };

    // caches are built lazily and kept with their wall time
    let mut caches: Vec<CacheSlot> = Vec::new();
    let mut results = Vec::with_capacity(cfg.algorithms.len());
    for &alg in &cfg.algorithms {
        let res = run_algorithm(cfg, model.as_ref(), &traj.measurements, &fcfg, alg, run, &mut caches);
        results.push(res);
    }
    Ok(RunOutcome { run, truth: traj.states, results })
}

fn run_algorithm(
    cfg: &ExperimentConfig,
    model: &dyn ClgModel,
    ys: &[Vector],
    fcfg: &ForwardConfig,
    alg: Algorithm,
    run: usize,
    caches: &mut Vec<CacheSlot>,
) -> std::result::Result<AlgOutcome, String> {
    if alg == Algorithm::Mpf {
        let t0 = Instant::now();
        let out = run_mpf(model, ys, fcfg).map_err(|e| e.to_string())?;
        return Ok(AlgOutcome { alg, elapsed_ms: ms_since(t0), collapsed: out.diagnostics.weight_collapses > 0, estimates: out.estimates });
    }
    let kind = match alg {
        Algorithm::Dbf => FilterKind::Dbf,
        Algorithm::Sdbf => FilterKind::Sdbf,
        other => smoother_alg(other).ok_or_else(|| Error::UnknownAlgorithm(other.to_string()).to_string())?.filter(),
    };
    if !caches.iter().any(|(k, _)| *k == kind) {
        let t0 = Instant::now();
        let cache = match kind {
            FilterKind::Dbf => run_dbf(model, ys, fcfg),
            _ => run_sdbf(model, ys, fcfg),
        };
        caches.push((kind, cache.map(|c| (c, ms_since(t0))).map_err(|e| e.to_string())));
    }
    let (cache, fwd_ms) = match &caches.iter().find(|(k, _)| *k == kind).expect("cache inserted").1 {
        Ok((c, ms)) => (c, *ms),
        Err(e) => return Err(e.clone()),
    };
    let collapsed = cache.diagnostics.weight_collapses > 0;
    let Some(salg) = smoother_alg(alg) else {
        return Ok(AlgOutcome { alg, estimates: cache.estimates.clone(), elapsed_ms: fwd_ms, collapsed });
    };
    let scfg = SmootherConfig {
        alg: salg,
        m: cfg.passes(fcfg.n_particles),
        n_i: cfg.n_i,
        weight_reuse: cfg.weight_reuse,
        seed: cfg.seed,
        run: run as u64,
        sample_linear: false,
    };
    let t0 = Instant::now();
    let out = run_smoother(cache, model, &scfg).map_err(|e| e.to_string())?;
    Ok(AlgOutcome { alg, estimates: out.estimates, elapsed_ms: fwd_ms + ms_since(t0), collapsed })
}

/// Complexity dimensions of a configured experiment.
pub fn experiment_dims(model: &dyn ClgModel, cfg: &ExperimentConfig, n_particles: usize) -> Dims {
    let d = model.dims();
    Dims {
        d_l: d.d_l as u64,
        d_n: d.d_n as u64,
        p: d.p as u64,
        n_p: n_particles as u64,
        m: cfg.passes(n_particles) as u64,
        n_i: cfg.n_i as u64,
        t: cfg.t() as u64,
    }
}

/// Runs the whole sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut report = BenchReport::default();
    for &n_p in &cfg.n_particles {
        let outcomes: Vec<Result<RunOutcome>> = (0..cfg.runs).into_par_iter().map(|r| run_once(cfg, n_p, r)).collect();
        // dimensions do not depend on the placement seed
        let probe = cfg.model.build(0)?;
        let dims = experiment_dims(probe.as_ref(), cfg, n_p);
        let d_l = probe.dims().d_l;
        let block = cfg.model.position_block();
        let threshold = cfg.threshold();

        for (ai, &alg) in cfg.algorithms.iter().enumerate() {
            let mut acc = SquaredErrors::default();
            let mut times = Vec::new();
            let mut diverged = 0usize;
            for (run, o) in outcomes.iter().enumerate() {
                let res = match o {
                    Ok(o) => o.results[ai].as_ref().map(|a| (a, &o.truth)).map_err(String::clone),
                    Err(e) => Err(e.to_string()),
                };
                match res {
                    Ok((a, truth)) => {
                        times.push(a.elapsed_ms);
                        if a.collapsed || detect_divergence(truth, &a.estimates, d_l, block, threshold) {
                            diverged += 1;
                        } else {
                            acc.add_run(truth, &a.estimates, d_l)?;
                        }
                    }
                    Err(e) => {
                        diverged += 1;
                        report.errors.push(ErrorRow { alg, n_p, run, message: e });
                    }
                }
            }
            let (rmse_l, rmse_n) = acc.rmse();
            report.rows.push(BenchRow {
                alg,
                n_p,
                rmse_l,
                rmse_n,
                ctb_ms: median(&times),
                divergence_rate: diverged as f64 / cfg.runs as f64,
                mem_estimate: complexity::memory_estimate(alg, &dims)?,
                flops_estimate: complexity::flops_estimate(alg, &dims).ok(),
                runs: cfg.runs,
                seed: cfg.seed,
            });
        }
    }
    Ok(report)
}
