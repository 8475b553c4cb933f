//! Kalman filter over `x_L` interconnected with a particle filter over `x_N`.
//!
//! The Kalman filter sees the nonlinear substate only through the particle
//! filter's point estimates: the predicted mean for the measurement update
//! and the filtered mean for the time update.

use crate::error::Result;
use crate::gaussian;
use crate::linalg::{self, Vector};
use crate::model::ClgModel;
use crate::particles::RandomStream;

use super::*;

pub fn run_sdbf(model: &dyn ClgModel, ys: &[Vector], cfg: &ForwardConfig) -> Result<ForwardCache> {
    check_inputs(model, ys, cfg.n_particles)?;
    let dims = model.dims();
    let (d_l, d_n) = (dims.d_l, dims.d_n);
    let n = cfg.n_particles;
    let w_e = linalg::spd_inverse(model.cov_e())?;
    let w_w_n = if d_n > 0 { linalg::spd_inverse(model.cov_w_n())? } else { linalg::Matrix::zeros(0, 0) };
    let mut diag = Diagnostics::default();

    let init = model.initial();
    let mut fp = gaussian::block(init, 0, d_l);
    let init_n = gaussian::block(init, d_l, d_n);
    let mut rng0 = RandomStream::new(cfg.seed, cfg.run, FORWARD_PASS, INIT_STEP);
    let l0 = particles::sampling_factor(&init_n.cov);
    let mut parts: Vec<Vector> = (0..n).map(|_| rng0.gaussian(&init_n.mean, &l0)).collect();
    let mut pred_w = vec![1.0 / n as f64; n];

    let mut steps = Vec::with_capacity(ys.len());
    let mut estimates = Vec::with_capacity(ys.len());
    for (k, y) in ys.iter().enumerate() {
        let mut rng = RandomStream::new(cfg.seed, cfg.run, FORWARD_PASS, k as u64);
        let terms = ParticleTerms::evaluate(model, &parts, k);
        let pseudo = LinearPseudo::new(&terms.a_n, &w_w_n);
        let x_fp_n = weighted_mean_of(&parts, &pred_w, d_n);

        // Kalman measurement update conditioned on the predicted x_N
        let b = model.b(&x_fp_n, k);
        let g = model.g(&x_fp_n, k);
        let ms = measurement_message(y, &b, &g, &w_e);
        let fe1 = gaussian::product(&to_canonical_regularized(&fp, &mut diag)?, &ms)?;
        let fe1_m = to_moment_regularized(&fe1, &mut diag)?;

        let loglik = particle_log_likelihoods(&terms, &fp, y, model.cov_e())?;
        let (lik_w, _) = normalize_or_reset(&loglik);
        let log_w: Vec<f64> = loglik.iter().zip(&pred_w).map(|(l, p)| l + p.ln()).collect();
        let (weights, collapsed) = normalize_or_reset(&log_w);
        if collapsed {
            diag.weight_collapses += 1;
        }
        let x_fe_n = weighted_mean_of(&parts, &weights, d_n);

        let (anc, carried) = select_ancestors(&weights, cfg.resampling, &mut rng)?;
        let next = propagate_particles(&terms, &anc, &fe1_m, model.cov_w_n(), &mut rng);

        // only the x_L pseudo-measurement applies: this filter carries no x_N
        let fe2 = if cfg.pseudo == PseudoScope::Off || pseudo.flat {
            fe1.clone()
        } else {
            let to: Vec<&Vector> = next.iter().collect();
            let eta = pseudo_linear_means(&pseudo, &terms, &anc, &to);
            let xs: Vec<&Vector> = anc.iter().map(|&j| &parts[j]).collect();
            let (pm, _) = pm_whole(&carried, &eta, &pseudo.c_tilde, &anc, &xs, false, false, &mut diag)?;
            forward_pseudo_update_linear(&fe1, &pm)?
        };
        let fe2_m = to_moment_regularized(&fe2, &mut diag)?;
        estimates.push(linalg::concat(&fe2_m.mean, &x_fe_n));

        // Kalman time update conditioned on the filtered x_N
        let f_mat = model.a_l(&x_fe_n, k);
        let u = model.f_l(&x_fe_n, k);
        let fp_next = ekf_time_update(&fe2_m, &f_mat, &u, model.cov_w_l());

        steps.push(CacheStep {
            fp: std::mem::replace(&mut fp, fp_next),
            fe1,
            ms,
            fe_mean: fe2_m.mean,
            f_mat,
            u,
            particles: std::mem::replace(&mut parts, next),
            pred_weights: std::mem::replace(&mut pred_w, carried),
            weights,
            lik_weights: lik_w,
            x_fp_n,
            x_fe_n,
            terms,
            pseudo,
        });
    }
    Ok(ForwardCache { kind: FilterKind::Sdbf, dims, steps, estimates, diagnostics: diag, measurements: ys.to_vec() })
}
