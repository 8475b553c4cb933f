//! Individual backward-pass operations. Each works on one time step and is
//! usable on its own; [`super::run_smoother`] chains them.

use crate::error::{Error, Result};
use crate::forward::{particle_log_likelihoods, pm_whole, Diagnostics, GaussianScorer, LinearPseudo, ParticleTerms, PerParticle};
use crate::gaussian::{self, CanonicalGaussian, DensityParts, MomentGaussian};
use crate::linalg::{self, Matrix, Vector};
use crate::particles;

/// Backward prediction of `x_k` from the backward message of `x_{k+1}` through
/// `x_{k+1} = F x_k + u + w`, `w ~ N(0, C_w)`, in information form.
///
/// `W_1 = Fᵀ P W_be F` and `w_1 = Fᵀ (P w_be - W_be Q W_w u)` with
/// `Q = (W_w + W_be)⁻¹`, `P = I - W_be Q`. `F` need not be invertible.
///
/// Evaluated through the equivalent `P W_be = W_be Q W_w = W_w - W_w Q W_w`
/// and `P w_be = W_w Q w_be`: every term stays bounded by `W_w`, so a nearly
/// degenerate backward message (huge `W_be`) does not cancel catastrophically.
pub fn phase1_backward_predict(be: &CanonicalGaussian, f: &Matrix, u: &Vector, w_w: &Matrix) -> Result<CanonicalGaussian> {
    let d = be.dim();
    if f.nrows() != d || w_w.nrows() != d || u.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: f.nrows() });
    }
    let q = linalg::pd_inverse_wide(&(w_w + &be.precision))?;
    let wq = w_w * &q;
    let mut pw = w_w - &wq * w_w;
    linalg::symmetrize(&mut pw);
    let inner = &wq * &be.transformed_mean - &pw * u;
    let ft = f.transpose();
    let mut precision = &ft * pw * f;
    linalg::symmetrize(&mut precision);
    Ok(CanonicalGaussian { precision, transformed_mean: ft * inner })
}

/// [`phase1_backward_predict`] evaluated literally as `W_be - W_be Q W_be`;
/// kept as a cross-check for well-conditioned inputs.
pub fn phase1_backward_predict_direct(be: &CanonicalGaussian, f: &Matrix, u: &Vector, w_w: &Matrix) -> Result<CanonicalGaussian> {
    let q = linalg::pd_inverse_wide(&(w_w + &be.precision))?;
    let wq = &be.precision * &q;
    let mut pw = &be.precision - &wq * &be.precision;
    linalg::symmetrize(&mut pw);
    let inner = &be.transformed_mean - &wq * &be.transformed_mean - &wq * (w_w * u);
    let ft = f.transpose();
    let mut precision = &ft * pw * f;
    linalg::symmetrize(&mut precision);
    Ok(CanonicalGaussian { precision, transformed_mean: ft * inner })
}

/// Pseudo-measured linear means `η̃_j` for the transitions from every
/// particle of `S_k` to the backward particle `x_be,k+1^N`.
pub fn precompute_pm_linear(pseudo: &LinearPseudo, terms: &ParticleTerms, x_be_next: &Vector) -> Vec<Vector> {
    match &pseudo.gain {
        PerParticle::Shared(g) => {
            let base = g * x_be_next;
            terms.f_n.iter().map(|f| &base - g * f).collect()
        }
        PerParticle::Each(gs) => gs.iter().zip(&terms.f_n).map(|(g, f)| g * (x_be_next - f)).collect(),
    }
}

/// Step 1: pseudo-measurement message about the whole state (or `x_L` only
/// when `with_n` is false), moment matched over the weighted particles.
pub fn step1_pm_whole(
    weights: &[f64],
    eta: &[Vector],
    pseudo: &LinearPseudo,
    particles: &[Vector],
    with_n: bool,
    diag: &mut Diagnostics,
) -> Result<(CanonicalGaussian, MomentGaussian)> {
    let idx: Vec<usize> = (0..weights.len()).collect();
    let xs: Vec<&Vector> = particles.iter().collect();
    pm_whole(weights, eta, &pseudo.c_tilde, &idx, &xs, pseudo.flat, with_n, diag)
}

/// Step 2: first backward filtered message `m_3 = m_1 · m_2`.
pub fn step2_be1(m1: &CanonicalGaussian, m2: &CanonicalGaussian) -> Result<CanonicalGaussian> {
    gaussian::product(m1, m2)
}

/// Step 2 through `W_k = (C_2 W_1 + I)⁻¹`: `C_3 = W_k C_2`, `η_3 = W_k (C_2 w_1 + η_2)`.
/// Avoids inverting `C_2`, so it also works for a degenerate `m_2`.
pub fn step2_be1_moment(m1: &CanonicalGaussian, m2: &MomentGaussian) -> Result<MomentGaussian> {
    let d = m2.dim();
    let a = &m2.cov * &m1.precision + Matrix::identity(d, d);
    let wk = a.try_inverse().ok_or(Error::SingularCovariance)?;
    let mut cov = &wk * &m2.cov;
    linalg::symmetrize(&mut cov);
    let mean = &wk * (&m2.cov * &m1.transformed_mean + &m2.mean);
    Ok(MomentGaussian { mean, cov })
}

/// Step 3: smoothed message of the whole state, `m_4 = m_fe1 · m_3`.
pub fn step3_smooth_whole(fe1: &CanonicalGaussian, m3: &CanonicalGaussian) -> Result<CanonicalGaussian> {
    gaussian::product(fe1, m3)
}

/// Step 4: log weights `ln N(x_be,k+1^N; A_N η̃_1 + f_N,j, A_N C̃_1 A_Nᵀ + C_w,N)`.
pub fn step4_bp_particle_weights(lin: &MomentGaussian, x_be_next: &Vector, terms: &ParticleTerms, cov_w_n: &Matrix) -> Result<Vec<f64>> {
    let n = terms.f_n.len();
    if x_be_next.is_empty() {
        return Ok(vec![0.0; n]);
    }
    Ok(match &terms.a_n {
        PerParticle::Shared(a) => {
            let scorer = GaussianScorer::new(&(linalg::congruence(a, &lin.cov) + cov_w_n))?;
            let r0 = x_be_next - a * &lin.mean;
            terms.f_n.iter().map(|f| scorer.parts(&(&r0 - f)).log_value()).collect()
        }
        PerParticle::Each(all) => {
            let mut out = Vec::with_capacity(n);
            for (a, f) in all.iter().zip(&terms.f_n) {
                let scorer = GaussianScorer::new(&(linalg::congruence(a, &lin.cov) + cov_w_n))?;
                out.push(scorer.parts(&(x_be_next - a * &lin.mean - f)).log_value());
            }
            out
        }
    })
}

/// Residual statistics of step 5 for one `A_L`: `η̌_z = η̃_be - A_L η̃_1` and
/// the PSD-clamped `Č_z = C̃_be - A_L C̃_1 A_Lᵀ`. The flag reports a clamp.
pub fn step5_residual(lin: &MomentGaussian, be_lin: &MomentGaussian, a_l: &Matrix) -> (Vector, Matrix, bool) {
    let eta_z = &be_lin.mean - a_l * &lin.mean;
    let mut c_z = &be_lin.cov - linalg::congruence(a_l, &lin.cov);
    linalg::symmetrize(&mut c_z);
    let clamped = linalg::psd_clamp(&mut c_z);
    (eta_z, c_z, clamped)
}

/// Step 5: log weights from the correlation of `N(z; η̌_z, Č_z)` with the
/// particle's linear-substate transition law `N(z; f_L,j, C_w,L)`.
pub fn step5_pm_particle_weights(
    lin: &MomentGaussian,
    be_lin: &MomentGaussian,
    terms: &ParticleTerms,
    cov_w_l: &Matrix,
    clamps: &mut usize,
) -> Result<Vec<f64>> {
    let n = terms.f_l.len();
    if lin.dim() == 0 {
        return Ok(vec![0.0; n]);
    }
    Ok(match &terms.a_l {
        PerParticle::Shared(a) => {
            let (eta_z, c_z, clamped) = step5_residual(lin, be_lin, a);
            *clamps += clamped as usize;
            let scorer = GaussianScorer::new(&(c_z + cov_w_l))?;
            terms.f_l.iter().map(|f| scorer.parts(&(&eta_z - f)).log_value()).collect()
        }
        PerParticle::Each(all) => {
            let mut out = Vec::with_capacity(n);
            for (a, f) in all.iter().zip(&terms.f_l) {
                let (eta_z, c_z, clamped) = step5_residual(lin, be_lin, a);
                *clamps += clamped as usize;
                let s = MomentGaussian { mean: eta_z, cov: c_z };
                let t = MomentGaussian { mean: f.clone(), cov: cov_w_l.clone() };
                out.push(gaussian::gaussian_correlation_parts(&s, &t)?.log_value());
            }
            out
        }
    })
}

/// Step 5 through information-form quantities: with `W̌_z = Č_z⁻¹`,
/// `W̌_2 = W̌_z + W_w,L`, `w̌_2 = W̌_z η̌_z + W_w,L f_L` and `η̌_2 = W̌_2⁻¹ w̌_2`,
/// the exponent is `η̌_zᵀ W̌_z η̌_z + f_Lᵀ W_w,L f_L - η̌_2ᵀ W̌_2 η̌_2` and the
/// normalizer `sqrt(|W̌_z| |W_w,L| / |W̌_2|) / (2π)^{D_L/2}`. Requires `Č_z` PD.
pub fn step5_closed_form(eta_z: &Vector, c_z: &Matrix, f_l: &Vector, cov_w_l: &Matrix) -> Result<DensityParts> {
    let (w_z, ld_cz) = linalg::spd_inverse_logdet(c_z)?;
    let (w_w, ld_cw) = linalg::spd_inverse_logdet(cov_w_l)?;
    let w2 = &w_z + &w_w;
    let chol2 = linalg::cholesky(&w2)?;
    let ld_w2 = linalg::chol_logdet(&chol2);
    let v2 = &w_z * eta_z + &w_w * f_l;
    let eta2 = chol2.solve(&v2);
    let quad = linalg::quad_form(&w_z, eta_z) + linalg::quad_form(&w_w, f_l) - eta2.dot(&v2);
    let d = eta_z.len() as f64;
    let log_normalizer = -0.5 * d * (2.0 * std::f64::consts::PI).ln() + 0.5 * (-ld_cz - ld_cw - ld_w2);
    Ok(DensityParts { log_normalizer, quad })
}

/// Step 7: log weights `ln N(y_k; B_j η̃_1 + g_j, B_j C̃_1 B_jᵀ + C_e)`.
pub fn step7_ms_particle_weights(lin: &MomentGaussian, y: &Vector, terms: &ParticleTerms, cov_e: &Matrix) -> Result<Vec<f64>> {
    particle_log_likelihoods(terms, lin, y, cov_e)
}

/// Step 8: `W_1 ∝ w_p w_2 w_3 w_5`, combined in the log domain. Returns the
/// normalized weights, or `None` when they vanish (backward collapse).
pub fn step8_combine(pred_weights: &[f64], log_w2: &[f64], log_w3: &[f64], log_w5: &[f64]) -> Option<Vec<f64>> {
    let log_w: Vec<f64> = (0..pred_weights.len())
        .map(|j| pred_weights[j].ln() + log_w2[j] + log_w3[j] + log_w5[j])
        .collect();
    particles::normalize_log(&log_w).ok()
}

/// Measurement message of the disjoint case, with `B`, `g` evaluated at a
/// point estimate of `x_N`.
pub fn ms_at(y: &Vector, b: &Matrix, g: &Vector, w_e: &Matrix) -> CanonicalGaussian {
    crate::forward::measurement_message(y, b, g, w_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{quadrature_integrate, Region};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }
    fn m1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }
    fn scalar_terms(a_n: f64, f_n: &[f64], a_l: f64, f_l: &[f64], b: f64, g: &[f64]) -> ParticleTerms {
        ParticleTerms {
            a_n: PerParticle::Shared(m1(a_n)),
            f_n: f_n.iter().map(|&v| s(v)).collect(),
            a_l: PerParticle::Shared(m1(a_l)),
            f_l: f_l.iter().map(|&v| s(v)).collect(),
            b: PerParticle::Shared(m1(b)),
            g: g.iter().map(|&v| s(v)).collect(),
        }
    }

    #[test]
    fn phase1_scalar_hand_value() {
        let be = gaussian::to_canonical(&MomentGaussian::new(s(3.0), m1(1.0)).unwrap()).unwrap();
        let m = phase1_backward_predict(&be, &m1(1.0), &s(0.0), &m1(1.0)).unwrap();
        assert_relative_eq!(m.precision[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.transformed_mean[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn phase1_forms_agree() {
        let be = gaussian::to_canonical(
            &MomentGaussian::new(Vector::from_vec(vec![1.0, -2.0]), Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3])).unwrap(),
        )
        .unwrap();
        let f = Matrix::from_row_slice(2, 2, &[1.0, 0.1, -0.2, 0.9]);
        let u = Vector::from_vec(vec![0.3, 0.4]);
        let w_w = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = phase1_backward_predict(&be, &f, &u, &w_w).unwrap();
        let b = phase1_backward_predict_direct(&be, &f, &u, &w_w).unwrap();
        assert!((&a.precision - &b.precision).amax() < 1e-13);
        assert!((&a.transformed_mean - &b.transformed_mean).amax() < 1e-13);
    }

    #[test]
    fn phase1_stable_for_sharp_backward_message() {
        // W_be ~ 1e12: the prediction must approach N(F x + u; η_be, C_w)
        let be = gaussian::to_canonical(&MomentGaussian::new(s(3.0), m1(1e-12)).unwrap()).unwrap();
        let m = phase1_backward_predict(&be, &m1(1.0), &s(0.5), &m1(4.0)).unwrap();
        assert_relative_eq!(m.precision[(0, 0)], 4.0, max_relative = 1e-9);
        assert_relative_eq!(m.transformed_mean[0], 4.0 * 2.5, max_relative = 1e-9);
    }

    #[test]
    fn phase1_flat_under_huge_process_noise() {
        let be = gaussian::to_canonical(&MomentGaussian::new(s(3.0), m1(1.0)).unwrap()).unwrap();
        let m = phase1_backward_predict(&be, &m1(1.0), &s(0.0), &m1(1e-12)).unwrap();
        assert!(m.precision[(0, 0)] < 1e-11);
    }

    #[test]
    fn phase1_singular_transition() {
        let be = gaussian::to_canonical(
            &MomentGaussian::new(Vector::from_vec(vec![1.0, 2.0]), Matrix::identity(2, 2)).unwrap(),
        )
        .unwrap();
        let f = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let m = phase1_backward_predict(&be, &f, &Vector::zeros(2), &Matrix::identity(2, 2)).unwrap();
        assert_eq!(m.precision[(1, 1)], 0.0);
        assert_relative_eq!(m.precision[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn phase1_matches_quadrature() {
        // m_1(x) = ∫ N(x'; F x + u, C_w) N(x'; η_be, C_be) dx' as a function of x,
        // whose logarithm is quadratic in x with curvature W_1 and slope w_1
        for &(f, u, cw, eb, cb) in &[(0.8, 0.3, 0.5, 1.0, 2.0), (1.3, -0.2, 0.1, -0.5, 0.4), (-0.6, 1.0, 2.0, 0.3, 0.7)] {
            let be = gaussian::to_canonical(&MomentGaussian::new(s(eb), m1(cb)).unwrap()).unwrap();
            let m = phase1_backward_predict(&be, &m1(f), &s(u), &m1(1.0 / cw)).unwrap();
            let val = |x: f64| {
                let g = MomentGaussian::new(s(eb), m1(cb)).unwrap();
                let sd = (cw + cb).sqrt() * 8.0;
                let c = eb;
                quadrature_integrate(
                    &|z: &[f64]| {
                        let t = MomentGaussian::new(s(f * x + u), m1(cw)).unwrap();
                        gaussian::log_density(&t, &s(z[0])).unwrap().value() * gaussian::log_density(&g, &s(z[0])).unwrap().value()
                    },
                    Region::Interval(c - sd, c + sd),
                    1e-13,
                )
                .unwrap()
            };
            let (x0, x1, x2) = (-0.5, 0.0, 0.5);
            let (l0, l1, l2) = (val(x0).ln(), val(x1).ln(), val(x2).ln());
            let h = 0.5;
            let curv = -(l2 - 2.0 * l1 + l0) / (h * h);
            let slope = (l2 - l0) / (2.0 * h);
            // log m_1 = -W x²/2 + w x + c: slope at 0 is w
            assert_relative_eq!(curv, m.precision[(0, 0)], max_relative = 1e-6);
            assert_relative_eq!(slope, m.transformed_mean[0], epsilon = 1e-6);
        }
    }

    #[test]
    fn pm_linear_records() {
        let ts = 0.01;
        let pseudo = LinearPseudo::new(&PerParticle::Shared(Matrix::identity(2, 2) * ts), &(Matrix::identity(2, 2) * 4e4));
        let terms = ParticleTerms {
            a_n: PerParticle::Shared(Matrix::identity(2, 2) * ts),
            f_n: vec![Vector::from_vec(vec![1.0, 2.0]), Vector::from_vec(vec![0.5, 0.0])],
            a_l: PerParticle::Shared(Matrix::identity(2, 2)),
            f_l: vec![Vector::zeros(2); 2],
            b: PerParticle::Shared(Matrix::identity(2, 2)),
            g: vec![Vector::zeros(2); 2],
        };
        let xb = Vector::from_vec(vec![1.0, 2.0]);
        let eta = precompute_pm_linear(&pseudo, &terms, &xb);
        assert!(eta[0].amax() < 1e-12);
        assert!((&eta[1] - (&xb - &terms.f_n[1]) / ts).amax() < 1e-9);
    }

    #[test]
    fn step2_examples() {
        let m1c = gaussian::to_canonical(&MomentGaussian::new(s(0.0), m1(1.0)).unwrap()).unwrap();
        let m2 = MomentGaussian::new(s(2.0), m1(1.0)).unwrap();
        let m2c = gaussian::to_canonical(&m2).unwrap();
        let out = gaussian::to_moment(&step2_be1(&m1c, &m2c).unwrap()).unwrap();
        assert_relative_eq!(out.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.cov[(0, 0)], 0.5, epsilon = 1e-15);
        let flat = CanonicalGaussian::flat(1);
        assert_eq!(step2_be1(&flat, &m2c).unwrap(), m2c);
        let short = step2_be1_moment(&flat, &m2).unwrap();
        assert_eq!(short, m2);
    }

    proptest! {
        #[test]
        fn step2_shortcut_agrees_with_product(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut spd = |d: usize| {
                let a = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                &a * a.transpose() + Matrix::identity(d, d) * 0.5
            };
            let w1 = spd(4);
            let c2 = spd(4);
            let m1c = CanonicalGaussian { precision: w1, transformed_mean: Vector::from_vec(vec![0.3, -1.0, 2.0, 0.1]) };
            let m2 = MomentGaussian { mean: Vector::from_vec(vec![1.0, 0.5, -0.2, 0.0]), cov: c2 };
            let a = gaussian::to_moment(&step2_be1(&m1c, &gaussian::to_canonical(&m2).unwrap()).unwrap()).unwrap();
            let b = step2_be1_moment(&m1c, &m2).unwrap();
            prop_assert!((&a.mean - &b.mean).amax() < 1e-9);
            prop_assert!((&a.cov - &b.cov).amax() < 1e-9);
        }

        #[test]
        fn step5_closed_form_equals_correlation(ez in -3.0f64..3.0, cz in 0.05f64..4.0, f in -3.0f64..3.0, cw in 0.05f64..4.0) {
            let cf = step5_closed_form(&s(ez), &m1(cz), &s(f), &m1(cw)).unwrap().value();
            let direct = gaussian::gaussian_correlation(
                &MomentGaussian::new(s(ez), m1(cz)).unwrap(),
                &MomentGaussian::new(s(f), m1(cw)).unwrap(),
            ).unwrap();
            prop_assert!(((cf - direct) / direct).abs() < 1e-10);
        }
    }

    #[test]
    fn step3_examples() {
        let fe1 = CanonicalGaussian { precision: m1(2.0), transformed_mean: s(1.0) };
        assert_eq!(step3_smooth_whole(&fe1, &CanonicalGaussian::flat(1)).unwrap(), fe1);
        let m3 = CanonicalGaussian { precision: m1(0.5), transformed_mean: s(-2.0) };
        let m4 = step3_smooth_whole(&fe1, &m3).unwrap();
        assert_eq!(m4.precision[(0, 0)], 2.5);
        let mm = gaussian::to_moment(&m4).unwrap();
        assert_relative_eq!(mm.mean[0], -0.4, epsilon = 1e-15);
        assert_relative_eq!(mm.cov[(0, 0)], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn step4_examples() {
        let terms = scalar_terms(2.0, &[0.5, -1.0], 1.0, &[0.0, 0.0], 1.0, &[0.0, 0.0]);
        let lin = MomentGaussian::new(s(1.0), m1(0.3)).unwrap();
        // x_be = A η̃ + f_0 → zero residual for particle 0
        let xb = s(2.5);
        let lw = step4_bp_particle_weights(&lin, &xb, &terms, &m1(0.2)).unwrap();
        let c3 = 4.0 * 0.3 + 0.2;
        assert_relative_eq!(lw[0], -0.5 * (2.0 * std::f64::consts::PI * c3).ln(), epsilon = 1e-14);
        let direct = gaussian::log_density(&MomentGaussian::new(s(1.0), m1(c3)).unwrap(), &xb).unwrap().log_value();
        assert_relative_eq!(lw[1], direct, epsilon = 1e-14);
        // C̃_1 = 0 leaves exactly C_w,N
        let lin0 = MomentGaussian::new(s(1.0), m1(0.0)).unwrap();
        let lw = step4_bp_particle_weights(&lin0, &xb, &terms, &m1(0.2)).unwrap();
        assert_relative_eq!(lw[0], -0.5 * (2.0 * std::f64::consts::PI * 0.2).ln(), epsilon = 1e-14);
    }

    #[test]
    fn step5_examples() {
        // η̌_z = f_L and Č_z = C_w,L = 1: weight N(0; 0, 2) = 1/√(4π)
        let terms = scalar_terms(1.0, &[0.0], 1.0, &[0.7], 1.0, &[0.0]);
        let lin = MomentGaussian::new(s(0.0), m1(0.0)).unwrap();
        let be = MomentGaussian::new(s(0.7), m1(1.0)).unwrap();
        let mut clamps = 0;
        let lw = step5_pm_particle_weights(&lin, &be, &terms, &m1(1.0), &mut clamps).unwrap();
        assert_relative_eq!(lw[0].exp(), 1.0 / (4.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-15);
        assert_eq!(clamps, 0);
        let far = scalar_terms(1.0, &[0.0], 1.0, &[1e3], 1.0, &[0.0]);
        let lw = step5_pm_particle_weights(&lin, &be, &far, &m1(1.0), &mut clamps).unwrap();
        assert!(lw[0].exp() < 1e-300);
    }

    #[test]
    fn step5_indefinite_residual_is_clamped() {
        let terms = scalar_terms(1.0, &[0.0], 1.0, &[0.0], 1.0, &[0.0]);
        let lin = MomentGaussian::new(s(0.0), m1(2.0)).unwrap();
        let be = MomentGaussian::new(s(0.0), m1(0.5)).unwrap();
        let mut clamps = 0;
        let lw = step5_pm_particle_weights(&lin, &be, &terms, &m1(1.0), &mut clamps).unwrap();
        assert_eq!(clamps, 1);
        assert!(lw[0].is_finite());
    }

    #[test]
    fn step7_examples() {
        let terms = scalar_terms(1.0, &[0.0, 0.0], 1.0, &[0.0, 0.0], 2.0, &[0.5, 1.0]);
        let lin = MomentGaussian::new(s(1.0), m1(0.0)).unwrap();
        let lw = step7_ms_particle_weights(&lin, &s(2.5), &terms, &m1(0.3)).unwrap();
        assert_relative_eq!(lw[0], -0.5 * (2.0 * std::f64::consts::PI * 0.3).ln(), epsilon = 1e-14);
        let lin = MomentGaussian::new(s(1.0), m1(0.4)).unwrap();
        let lw = step7_ms_particle_weights(&lin, &s(2.5), &terms, &m1(0.3)).unwrap();
        let direct = gaussian::log_density(&MomentGaussian::new(s(3.0), m1(1.6 + 0.3)).unwrap(), &s(2.5)).unwrap().log_value();
        assert_relative_eq!(lw[1], direct, epsilon = 1e-14);
    }

    #[test]
    fn step8_examples() {
        let u = [1.0 / 3.0; 3];
        let z = [0.0; 3];
        let w = step8_combine(&u, &z, &z, &z).unwrap();
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let dom = [0.0, -800.0, -800.0];
        let w = step8_combine(&u, &dom, &dom, &dom).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
        let (a, b, c) = ([0.1f64, 0.5, 0.2], [0.3f64, 0.1, 0.9], [2.0f64, 1.0, 0.5]);
        let p = [0.2, 0.3, 0.5];
        let w = step8_combine(&p, &a.map(f64::ln), &b.map(f64::ln), &c.map(f64::ln)).unwrap();
        let raw: Vec<f64> = (0..3).map(|j| p[j] * a[j] * b[j] * c[j]).collect();
        let tot: f64 = raw.iter().sum();
        for j in 0..3 {
            assert_relative_eq!(w[j], raw[j] / tot, epsilon = 1e-15);
        }
        let neg = [f64::NEG_INFINITY; 3];
        assert!(step8_combine(&u, &neg, &z, &z).is_none());
    }
}
