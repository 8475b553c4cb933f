//! Marginalized (Rao-Blackwellized) particle filter: one Kalman filter over
//! `x_L` per particle.

use crate::error::Result;
use crate::gaussian;
use crate::linalg::{self, Matrix, Vector};
use crate::model::ClgModel;
use crate::particles::RandomStream;

use super::*;

/// Kalman moments of `x_L` carried by every particle. When the model's
/// linear parts are constant all particles share one covariance.
struct KalmanBank {
    means: Vec<Vector>,
    covs: PerParticle<Matrix>,
}

impl KalmanBank {
    fn reindex(&self, anc: &[usize]) -> Self {
        Self {
            means: anc.iter().map(|&j| self.means[j].clone()).collect(),
            covs: match &self.covs {
                PerParticle::Shared(c) => PerParticle::Shared(c.clone()),
                PerParticle::Each(cs) => PerParticle::Each(anc.iter().map(|&j| cs[j].clone()).collect()),
            },
        }
    }
}

/// Kalman correction `x += K (z - H x)`, `P -= K S Kᵀ` with `S = H P Hᵀ + R`.
fn correct(cov: &Matrix, h: &Matrix, r: &Matrix, resid: &[Vector], means_out: &mut [Vector]) -> Result<Matrix> {
    let s = linalg::congruence(h, cov) + r;
    let s_inv = linalg::spd_inverse(&s)?;
    let gain = cov * h.transpose() * s_inv;
    let mut post = cov - &gain * h * cov;
    linalg::symmetrize(&mut post);
    for (m, e) in means_out.iter_mut().zip(resid) {
        *m += &gain * e;
    }
    Ok(post)
}

pub fn run_mpf(model: &dyn ClgModel, ys: &[Vector], cfg: &ForwardConfig) -> Result<FilterOutput> {
    check_inputs(model, ys, cfg.n_particles)?;
    let dims = model.dims();
    let (d_l, d_n) = (dims.d_l, dims.d_n);
    let n = cfg.n_particles;
    let shared = model.linear_parts_constant();
    let mut diag = Diagnostics::default();

    let init = model.initial();
    let lin0 = gaussian::block(init, 0, d_l);
    let init_n = gaussian::block(init, d_l, d_n);
    let mut rng0 = RandomStream::new(cfg.seed, cfg.run, FORWARD_PASS, INIT_STEP);
    let l0 = particles::sampling_factor(&init_n.cov);
    let mut parts: Vec<Vector> = (0..n).map(|_| rng0.gaussian(&init_n.mean, &l0)).collect();
    let mut pred_w = vec![1.0 / n as f64; n];
    let mut bank = KalmanBank {
        means: vec![lin0.mean.clone(); n],
        covs: if shared { PerParticle::Shared(lin0.cov.clone()) } else { PerParticle::Each(vec![lin0.cov.clone(); n]) },
    };

    let mut estimates = Vec::with_capacity(ys.len());
    for (k, y) in ys.iter().enumerate() {
        let mut rng = RandomStream::new(cfg.seed, cfg.run, FORWARD_PASS, k as u64);
        let terms = ParticleTerms::evaluate(model, &parts, k);

        // weights and measurement update per particle
        let mut log_w = Vec::with_capacity(n);
        let resid: Vec<Vector> = (0..n).map(|j| y - terms.b.get(j) * &bank.means[j] - &terms.g[j]).collect();
        match (&bank.covs, &terms.b) {
            (PerParticle::Shared(p), PerParticle::Shared(b)) => {
                let scorer = GaussianScorer::new(&(linalg::congruence(b, p) + model.cov_e()))?;
                log_w.extend(resid.iter().zip(&pred_w).map(|(e, w)| scorer.parts(e).log_value() + w.ln()));
                let post = correct(p, b, model.cov_e(), &resid, &mut bank.means)?;
                bank.covs = PerParticle::Shared(post);
            }
            _ => {
                let mut posts = Vec::with_capacity(n);
                for j in 0..n {
                    let p = bank.covs.get(j).clone();
                    let b = terms.b.get(j);
                    let scorer = GaussianScorer::new(&(linalg::congruence(b, &p) + model.cov_e()))?;
                    log_w.push(scorer.parts(&resid[j]).log_value() + pred_w[j].ln());
                    posts.push(correct(&p, b, model.cov_e(), &resid[j..j + 1], &mut bank.means[j..j + 1])?);
                }
                bank.covs = PerParticle::Each(posts);
            }
        }
        let (weights, collapsed) = normalize_or_reset(&log_w);
        if collapsed {
            diag.weight_collapses += 1;
        }
        let x_l = weighted_mean_of(&bank.means, &weights, d_l);
        let x_n = weighted_mean_of(&parts, &weights, d_n);
        estimates.push(linalg::concat(&x_l, &x_n));

        let (anc, carried) = select_ancestors(&weights, cfg.resampling, &mut rng)?;
        let mut kb = bank.reindex(&anc);

        // particle time update, then the transition as a measurement of x_L
        let mut next = Vec::with_capacity(n);
        for (i, &j) in anc.iter().enumerate() {
            let a = terms.a_n.get(j);
            let cov = linalg::congruence(a, kb.covs.get(i)) + model.cov_w_n();
            let l = particles::sampling_factor(&cov);
            next.push(a * &kb.means[i] + &terms.f_n[j] + l * rng.normal_vector(d_n));
        }
        if d_n > 0 {
            let resid: Vec<Vector> = anc
                .iter()
                .enumerate()
                .map(|(i, &j)| &next[i] - &terms.f_n[j] - terms.a_n.get(j) * &kb.means[i])
                .collect();
            kb.covs = match (&kb.covs, &terms.a_n) {
                (PerParticle::Shared(p), PerParticle::Shared(a)) => {
                    PerParticle::Shared(correct(p, a, model.cov_w_n(), &resid, &mut kb.means)?)
                }
                _ => {
                    let mut posts = Vec::with_capacity(n);
                    for (i, &j) in anc.iter().enumerate() {
                        let p = kb.covs.get(i).clone();
                        posts.push(correct(
                            &p,
                            terms.a_n.get(j),
                            model.cov_w_n(),
                            &resid[i..i + 1],
                            &mut kb.means[i..i + 1],
                        )?);
                    }
                    PerParticle::Each(posts)
                }
            };
        }

        // Kalman time update with the ancestor's x_N
        for (i, &j) in anc.iter().enumerate() {
            kb.means[i] = terms.a_l.get(j) * &kb.means[i] + &terms.f_l[j];
        }
        kb.covs = match (&kb.covs, &terms.a_l) {
            (PerParticle::Shared(p), PerParticle::Shared(a)) => PerParticle::Shared(linalg::congruence(a, p) + model.cov_w_l()),
            _ => PerParticle::Each(
                anc.iter().enumerate().map(|(i, &j)| linalg::congruence(terms.a_l.get(j), kb.covs.get(i)) + model.cov_w_l()).collect(),
            ),
        };
        bank = kb;
        parts = next;
        pred_w = carried;
    }
    Ok(FilterOutput { kind: FilterKind::Mpf, estimates, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, LinearClg, Ssm1, Ssm1Params};
    use crate::oracle::kalman_filter;

    #[test]
    fn no_nonlinear_substate_reduces_to_kalman() {
        let m = LinearClg {
            a_l: Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 0.9]),
            m_ln: Matrix::zeros(2, 0),
            c_l: Vector::zeros(2),
            a_n: Matrix::zeros(0, 2),
            m_nn: Matrix::zeros(0, 0),
            c_n: Vector::zeros(0),
            b: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            g_mat: Matrix::zeros(1, 0),
            c_y: Vector::zeros(1),
            cov_w_l: Matrix::identity(2, 2) * 0.01,
            cov_w_n: Matrix::zeros(0, 0),
            cov_e: Matrix::identity(1, 1) * 0.1,
            initial: crate::gaussian::MomentGaussian { mean: Vector::zeros(2), cov: Matrix::identity(2, 2) },
        };
        let tr = simulate(&m, 30, 6).unwrap();
        let out = run_mpf(&m, &tr.measurements, &ForwardConfig { n_particles: 4, ..Default::default() }).unwrap();
        let kf = kalman_filter(&m.to_linear_model(), &tr.measurements).unwrap();
        for (e, ks) in out.estimates.iter().zip(&kf) {
            assert!((e - &ks.filtered.mean).amax() < 1e-10);
        }
    }

    #[test]
    fn tracks_ssm1() {
        let m = Ssm1::new(Ssm1Params::default()).unwrap();
        let tr = simulate(&m, 60, 12).unwrap();
        let out = run_mpf(&m, &tr.measurements, &ForwardConfig { n_particles: 50, ..Default::default() }).unwrap();
        let mse: f64 = out.estimates.iter().zip(&tr.states).map(|(e, x)| (e - x).norm_squared()).sum::<f64>() / 60.0;
        assert!(mse.sqrt() < 0.1);
        let again = run_mpf(&m, &tr.measurements, &ForwardConfig { n_particles: 50, ..Default::default() }).unwrap();
        assert_eq!(out.estimates, again.estimates);
    }
}
