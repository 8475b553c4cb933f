//! The exact Kalman/RTS smoother on a linear Gaussian model, and how far the
//! particle methods land from it.
//!
//! Deviations are RMS over steps and components, in units of the exact
//! posterior standard deviation.

use dbsmooth::backward::{run_smoother, SmootherAlg, SmootherConfig};
use dbsmooth::forward::{run_dbf, run_mpf, ForwardConfig};
use dbsmooth::gaussian::MomentGaussian;
use dbsmooth::linalg::Vector;
use dbsmooth::model::{simulate, LinearClg};
use dbsmooth::oracle::{kalman_filter, kalman_rts};

fn deviation(est: &[Vector], exact: &[MomentGaussian]) -> f64 {
    let mut s = 0.0;
    let mut n = 0;
    for (e, g) in est.iter().zip(exact) {
        for i in 0..e.len() {
            s += ((e[i] - g.mean[i]) / g.cov[(i, i)].sqrt()).powi(2);
            n += 1;
        }
    }
    (s / n as f64).sqrt()
}

fn main() -> dbsmooth::error::Result<()> {
    let model = LinearClg::constant_velocity(2, 0.9, 0.5, 0.05, 0.02, 0.2, 0.1);
    let tr = simulate(&model, 50, 3)?;
    let lin = model.to_linear_model();
    let filtered: Vec<MomentGaussian> = kalman_filter(&lin, &tr.measurements)?.into_iter().map(|s| s.filtered).collect();
    let smoothed = kalman_rts(&lin, &tr.measurements)?;

    for n_p in [100, 400, 1600] {
        let cfg = ForwardConfig { n_particles: n_p, seed: 1, ..Default::default() };
        let mpf = run_mpf(&model, &tr.measurements, &cfg)?;
        let dbf = run_dbf(&model, &tr.measurements, &cfg)?;
        let sdbsa = run_smoother(&dbf, &model, &SmootherConfig { alg: SmootherAlg::Sdbsa, ..Default::default() })?;
        println!(
            "N_p {n_p:5}: mpf vs Kalman {:.3}, dbf vs Kalman {:.3}, sdbsa vs RTS {:.3}",
            deviation(&mpf.estimates, &filtered),
            deviation(&dbf.estimates, &filtered),
            deviation(&sdbsa.estimates, &smoothed)
        );
    }
    Ok(())
}
