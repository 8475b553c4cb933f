//! Extended Kalman filter over the whole state interconnected with a particle
//! filter over `x_N`.

use crate::error::Result;
use crate::gaussian;
use crate::linalg::{self, Vector};
use crate::model::{linearize_markov, linearize_measurement, ClgModel};
use crate::particles::RandomStream;

use super::*;

pub fn run_dbf(model: &dyn ClgModel, ys: &[Vector], cfg: &ForwardConfig) -> Result<ForwardCache> {
    check_inputs(model, ys, cfg.n_particles)?;
    let dims = model.dims();
    let (d_l, d_n) = (dims.d_l, dims.d_n);
    let n = cfg.n_particles;
    let w_e = linalg::spd_inverse(model.cov_e())?;
    let w_w_n = if d_n > 0 { linalg::spd_inverse(model.cov_w_n())? } else { linalg::Matrix::zeros(0, 0) };
    let cov_w = model.cov_w();
    let mut diag = Diagnostics::default();

    let mut fp = model.initial().clone();
    let init_n = gaussian::block(&fp, d_l, d_n);
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

        // Gaussian filter measurement update
        let (h_t, v) = linearize_measurement(model, &fp.mean, k)?;
        let ms = measurement_message(y, &h_t, &v, &w_e);
        let fe1 = gaussian::product(&to_canonical_regularized(&fp, &mut diag)?, &ms)?;
        let fe1_m = to_moment_regularized(&fe1, &mut diag)?;

        // particle weights with x_L integrated against the predicted linear block
        let lin_fp = gaussian::block(&fp, 0, d_l);
        let loglik = particle_log_likelihoods(&terms, &lin_fp, y, model.cov_e())?;
        let (lik_w, _) = normalize_or_reset(&loglik);
        let log_w: Vec<f64> = loglik.iter().zip(&pred_w).map(|(l, p)| l + p.ln()).collect();
        let (weights, collapsed) = normalize_or_reset(&log_w);
        if collapsed {
            diag.weight_collapses += 1;
        }
        let x_fp_n = weighted_mean_of(&parts, &pred_w, d_n);
        let x_fe_n = weighted_mean_of(&parts, &weights, d_n);

        // particle time update, x_L integrated against the filtered linear block
        let (anc, carried) = select_ancestors(&weights, cfg.resampling, &mut rng)?;
        let lin_fe = gaussian::block(&fe1_m, 0, d_l);
        let next = propagate_particles(&terms, &anc, &lin_fe, model.cov_w_n(), &mut rng);

        // pseudo-measurements from the particle filter
        let fe2 = match cfg.pseudo {
            PseudoScope::Off => fe1.clone(),
            scope => {
                let to: Vec<&Vector> = next.iter().collect();
                let eta = pseudo_linear_means(&pseudo, &terms, &anc, &to);
                let xs: Vec<&Vector> = anc.iter().map(|&j| &parts[j]).collect();
                let with_n = scope == PseudoScope::Joint && d_n > 0;
                if pseudo.flat && !with_n {
                    fe1.clone()
                } else {
                    let (pm, _) = pm_whole(&carried, &eta, &pseudo.c_tilde, &anc, &xs, pseudo.flat, with_n, &mut diag)?;
                    forward_pseudo_update_linear(&fe1, &pm)?
                }
            }
        };
        let fe2_m = to_moment_regularized(&fe2, &mut diag)?;
        let mut est = fe2_m.mean.clone();
        est.rows_mut(d_l, d_n).copy_from(&x_fe_n);
        estimates.push(est);

        // Gaussian filter time update
        let (f_mat, u) = linearize_markov(model, &fe2_m.mean, k)?;
        let fp_next = ekf_time_update(&fe2_m, &f_mat, &u, &cov_w);

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
    Ok(ForwardCache { kind: FilterKind::Dbf, dims, steps, estimates, diagnostics: diag, measurements: ys.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, LinearClg, Ssm1, Ssm1Params};
    use crate::oracle::kalman_filter;

    fn lin_model() -> LinearClg {
        LinearClg::constant_velocity(1, 0.95, 0.1, 0.05, 0.01, 0.2, 0.1)
    }

    #[test]
    fn gaussian_filter_matches_kalman_on_linear_model() {
        let m = lin_model();
        let tr = simulate(&m, 40, 4).unwrap();
        let cfg = ForwardConfig { n_particles: 20, pseudo: PseudoScope::Off, ..Default::default() };
        let cache = run_dbf(&m, &tr.measurements, &cfg).unwrap();
        let kf = kalman_filter(&m.to_linear_model(), &tr.measurements).unwrap();
        for (step, kstep) in cache.steps.iter().zip(&kf) {
            let fe = gaussian::to_moment(&step.fe1).unwrap();
            assert!((&fe.mean - &kstep.filtered.mean).amax() < 1e-8);
            assert!((&fe.cov - &kstep.filtered.cov).amax() < 1e-8);
            assert!((&step.fp.mean - &kstep.predicted.mean).amax() < 1e-8);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let m = Ssm1::new(Ssm1Params::default()).unwrap();
        let tr = simulate(&m, 30, 1).unwrap();
        let cfg = ForwardConfig { n_particles: 50, seed: 9, ..Default::default() };
        let a = run_dbf(&m, &tr.measurements, &cfg).unwrap();
        let b = run_dbf(&m, &tr.measurements, &cfg).unwrap();
        assert_eq!(a.estimates, b.estimates);
        let c = run_dbf(&m, &tr.measurements, &ForwardConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.estimates, c.estimates);
    }

    #[test]
    fn weights_normalized_and_cache_complete() {
        let m = Ssm1::new(Ssm1Params::default()).unwrap();
        let tr = simulate(&m, 20, 2).unwrap();
        let cache = run_dbf(&m, &tr.measurements, &ForwardConfig { n_particles: 30, ..Default::default() }).unwrap();
        assert_eq!(cache.len(), 20);
        for s in &cache.steps {
            assert_eq!(s.particles.len(), 30);
            assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.weights.iter().all(|w| *w >= 0.0));
        }
    }
}
