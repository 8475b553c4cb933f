//! Overlapping and disjoint smoothers side by side.
//!
//! The overlapping pair runs on the dual filter, where the Gaussian filter
//! tracks the whole state. The disjoint pair runs on the filter whose
//! Gaussian part tracks only `x_L`, which needs less memory.

use dbsmooth::backward::{run_smoother, SmootherAlg, SmootherConfig};
use dbsmooth::bench::rmse;
use dbsmooth::complexity::{memory_estimate, Algorithm, Dims};
use dbsmooth::forward::{run_dbf, run_sdbf, ForwardConfig};
use dbsmooth::model::{simulate, ClgModel, Ssm1, Ssm1Params};

fn main() -> dbsmooth::error::Result<()> {
    let model = Ssm1::new(Ssm1Params::default())?;
    let d = model.dims();
    let (n_p, m, t, runs) = (60, 30, 100, 5);
    let fcfg = |run| ForwardConfig { n_particles: n_p, seed: 3, run, ..Default::default() };

    let mut truths = Vec::new();
    let mut est: Vec<Vec<_>> = vec![Vec::new(); 4];
    for run in 0..runs {
        let tr = simulate(&model, t, 50 + run)?;
        let dbf = run_dbf(&model, &tr.measurements, &fcfg(run))?;
        let sdbf = run_sdbf(&model, &tr.measurements, &fcfg(run))?;
        for (i, alg) in SmootherAlg::ALL.into_iter().enumerate() {
            let cache = if i < 2 { &dbf } else { &sdbf };
            est[i].push(run_smoother(cache, &model, &SmootherConfig { alg, m, run, ..Default::default() })?.estimates);
        }
        truths.push(tr.states);
    }

    let dims = Dims { d_l: d.d_l as u64, d_n: d.d_n as u64, p: d.p as u64, n_p: n_p as u64, m: m as u64, n_i: 1, t: t as u64 };
    let algs = [Algorithm::Dbsa, Algorithm::Sdbsa, Algorithm::Ddbsa, Algorithm::Sddbsa];
    println!("alg     rmse_l    rmse_n    memory (reals)");
    for (alg, e) in algs.iter().zip(&est) {
        let (l, n) = rmse(&truths, e, d.d_l)?;
        println!("{:<7} {l:.5}  {n:.5}  {}", alg.name(), memory_estimate(*alg, &dims)?);
    }
    Ok(())
}
