//! Forward filtering and the two overlapping smoothers on the single-target
//! model.
//!
//! Runs the dual filter once, then the joint smoother (M backward passes)
//! and the marginal smoother (one pass) on its cache, and compares RMSEs.

use std::time::Instant;

use dbsmooth::backward::{run_smoother, SmootherAlg, SmootherConfig};
use dbsmooth::bench::rmse;
use dbsmooth::forward::{run_dbf, ForwardConfig};
use dbsmooth::model::{simulate, ClgModel, Ssm1, Ssm1Params};

fn main() -> dbsmooth::error::Result<()> {
    let model = Ssm1::new(Ssm1Params::default())?;
    let tr = simulate(&model, 200, 7)?;
    let d_l = model.dims().d_l;
    let n_p = 100;

    let t0 = Instant::now();
    let cache = run_dbf(&model, &tr.measurements, &ForwardConfig { n_particles: n_p, seed: 1, ..Default::default() })?;
    let fwd = t0.elapsed();
    let (l, n) = rmse(std::slice::from_ref(&tr.states), std::slice::from_ref(&cache.estimates), d_l)?;
    println!("{:<6} rmse_l {l:.5} rmse_n {n:.5} ({:.1} ms)", "dbf", fwd.as_secs_f64() * 1e3);

    for alg in [SmootherAlg::Dbsa, SmootherAlg::Sdbsa] {
        let t0 = Instant::now();
        let out = run_smoother(&cache, &model, &SmootherConfig { alg, m: n_p, ..Default::default() })?;
        let ms = (fwd + t0.elapsed()).as_secs_f64() * 1e3;
        let (l, n) = rmse(std::slice::from_ref(&tr.states), &[out.estimates], d_l)?;
        println!("{:<6} rmse_l {l:.5} rmse_n {n:.5} ({ms:.1} ms)", alg.name());
    }
    Ok(())
}
