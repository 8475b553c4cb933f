//! Multi-target tracking from received signal strengths.
//!
//! Compares the dual filter with the marginalized particle filter over a few
//! independent runs, counting runs whose estimate of some target drifts more
//! than the divergence threshold away from the truth.

use dbsmooth::bench::{detect_divergence, rmse, ModelSpec};
use dbsmooth::forward::{run_dbf, run_mpf, ForwardConfig};
use dbsmooth::model::simulate;

fn main() -> dbsmooth::error::Result<()> {
    let spec = ModelSpec::by_name("ssm2")?;
    let runs = 5;
    let n_p = 200;
    let threshold = 100.0;
    let mut diverged = [0usize; 2];
    for run in 0..runs {
        let model = spec.build(run)?;
        let d_l = model.dims().d_l;
        let tr = simulate(model.as_ref(), 60, 1000 + run)?;
        let cfg = ForwardConfig { n_particles: n_p, seed: 2, run, ..Default::default() };
        let dbf = run_dbf(model.as_ref(), &tr.measurements, &cfg)?.estimates;
        let mpf = run_mpf(model.as_ref(), &tr.measurements, &cfg)?.estimates;
        for (i, est) in [&dbf, &mpf].into_iter().enumerate() {
            let lost = detect_divergence(&tr.states, est, d_l, spec.position_block(), threshold);
            diverged[i] += lost as usize;
            let (_, n) = rmse(std::slice::from_ref(&tr.states), std::slice::from_ref(est), d_l)?;
            println!("run {run} {:<3} rmse_n {n:9.2}{}", ["dbf", "mpf"][i], if lost { "  (lost a target)" } else { "" });
        }
    }
    println!("diverged runs: dbf {}/{runs}, mpf {}/{runs}", diverged[0], diverged[1]);
    Ok(())
}
