//! Forward filtering.
//!
//! Three filters are provided:
//! - [`run_dbf`]: an extended Kalman filter over the whole state interconnected
//!   with a particle filter over the nonlinear substate (the two filters
//!   overlap on `x_N`);
//! - [`run_sdbf`]: the same interconnection with a Kalman filter over `x_L`
//!   only, conditioned on point estimates of `x_N` (disjoint substates);
//! - [`run_mpf`]: a marginalized particle filter (one Kalman filter per
//!   particle), used as a baseline.
//!
//! The first two store everything the backward passes need in a
//! [`ForwardCache`].

mod dbf;
mod mpf;
mod sdbf;

pub use dbf::run_dbf;
pub use mpf::run_mpf;
pub use sdbf::run_sdbf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, CanonicalGaussian, DensityParts, MomentGaussian};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{ClgModel, StateDims};
use crate::particles::{self, sampling_factor, RandomStream};

/// Stream pass id used by forward filters.
pub const FORWARD_PASS: u64 = u64::MAX - 16;
/// Stream step id used for the initial particle draw.
pub const INIT_STEP: u64 = u64::MAX;

/// Which forward filter produced a cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Dbf,
    Sdbf,
    Mpf,
}

/// What the Gaussian filter learns from the particle filter after the
/// particles have been propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudoScope {
    /// no exchange
    Off,
    /// only the pseudo-measurement about `x_L` derived from particle transitions
    Linear,
    /// `x_L` pseudo-measurement plus the particle cloud as a measurement of `x_N`
    Joint,
}

/// Particle resampling policy of the forward particle filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    /// systematic resampling at every step
    Always,
    /// systematic resampling when the effective sample size drops below the
    /// given fraction of the particle count
    Ess(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub n_particles: usize,
    pub seed: u64,
    /// Monte Carlo run id, used to key random streams
    pub run: u64,
    pub pseudo: PseudoScope,
    pub resampling: Resampling,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self { n_particles: 100, seed: 0, run: 0, pseudo: PseudoScope::Joint, resampling: Resampling::Always }
    }
}

/// Counters for events the filters survive but that callers may want to know about.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// particle weights vanished and were reset to uniform
    pub weight_collapses: usize,
    /// a covariance had to be clamped to PSD
    pub psd_clamps: usize,
    /// a singular covariance or precision was regularized with jitter
    pub jitters: usize,
}

impl Diagnostics {
    pub fn merge(&mut self, o: &Diagnostics) {
        self.weight_collapses += o.weight_collapses;
        self.psd_clamps += o.psd_clamps;
        self.jitters += o.jitters;
    }
}

/// A quantity that is either shared by all particles or given per particle.
#[derive(Debug, Clone, PartialEq)]
pub enum PerParticle<T> {
    Shared(T),
    Each(Vec<T>),
}

impl<T> PerParticle<T> {
    pub fn get(&self, j: usize) -> &T {
        match self {
            PerParticle::Shared(t) => t,
            PerParticle::Each(v) => &v[j],
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, PerParticle::Shared(_))
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> PerParticle<U> {
        match self {
            PerParticle::Shared(t) => PerParticle::Shared(f(t)),
            PerParticle::Each(v) => PerParticle::Each(v.iter().map(f).collect()),
        }
    }
}

/// Structured model parts evaluated at every particle of one step.
#[derive(Debug, Clone)]
pub struct ParticleTerms {
    pub a_n: PerParticle<Matrix>,
    pub f_n: Vec<Vector>,
    pub a_l: PerParticle<Matrix>,
    pub f_l: Vec<Vector>,
    pub b: PerParticle<Matrix>,
    pub g: Vec<Vector>,
}

impl ParticleTerms {
    pub fn evaluate(model: &dyn ClgModel, particles: &[Vector], k: usize) -> Self {
        let shared = model.linear_parts_constant();
        let mat = |f: &dyn Fn(&Vector) -> Matrix| {
            if shared {
                PerParticle::Shared(f(&particles[0]))
            } else {
                PerParticle::Each(particles.iter().map(f).collect())
            }
        };
        Self {
            a_n: mat(&|x| model.a_n(x, k)),
            f_n: particles.iter().map(|x| model.f_n(x, k)).collect(),
            a_l: mat(&|x| model.a_l(x, k)),
            f_l: particles.iter().map(|x| model.f_l(x, k)).collect(),
            b: mat(&|x| model.b(x, k)),
            g: particles.iter().map(|x| model.g(x, k)).collect(),
        }
    }
}

/// Iteration-independent part of the pseudo-measurement about `x_L` built
/// from particle transitions `z = x_N' - f_N(x_N) = A_N x_L + w_N`.
#[derive(Debug, Clone)]
pub struct LinearPseudo {
    /// `A_Nᵀ W_w,N A_N`
    pub w_tilde: PerParticle<Matrix>,
    /// inverse of `w_tilde` (regularized when rank deficient)
    pub c_tilde: PerParticle<Matrix>,
    /// maps a residual `z` to the pseudo-measured mean: `C̃ A_Nᵀ W_w,N`
    pub gain: PerParticle<Matrix>,
    /// `w_tilde` carries no information at all
    pub flat: bool,
    /// `w_tilde` was rank deficient and had to be regularized
    pub regularized: bool,
}

impl LinearPseudo {
    pub fn new(a_n: &PerParticle<Matrix>, w_w_n: &Matrix) -> Self {
        let mut flat = true;
        let mut regularized = false;
        let build = |a: &Matrix| -> (Matrix, Matrix, Matrix, bool, bool) {
            let at_w = a.transpose() * w_w_n;
            let mut wt = &at_w * a;
            linalg::symmetrize(&mut wt);
            let d_l = wt.nrows();
            if linalg::max_abs(&wt) == 0.0 {
                return (wt, Matrix::zeros(d_l, d_l), Matrix::zeros(d_l, a.nrows()), true, false);
            }
            let mut reg = wt.clone();
            let jittered = linalg::jitter_if_singular(&mut reg);
            let ct = linalg::spd_inverse(&reg).unwrap_or_else(|_| Matrix::zeros(d_l, d_l));
            let gain = &ct * at_w;
            (wt, ct, gain, false, jittered)
        };
        let (w_tilde, c_tilde, gain) = match a_n {
            PerParticle::Shared(a) => {
                let (wt, ct, g, f, r) = build(a);
                flat = f;
                regularized = r;
                (PerParticle::Shared(wt), PerParticle::Shared(ct), PerParticle::Shared(g))
            }
            PerParticle::Each(all) => {
                let mut wts = Vec::with_capacity(all.len());
                let mut cts = Vec::with_capacity(all.len());
                let mut gs = Vec::with_capacity(all.len());
                for a in all {
                    let (wt, ct, g, f, r) = build(a);
                    flat &= f;
                    regularized |= r;
                    wts.push(wt);
                    cts.push(ct);
                    gs.push(g);
                }
                (PerParticle::Each(wts), PerParticle::Each(cts), PerParticle::Each(gs))
            }
        };
        Self { w_tilde, c_tilde, gain, flat, regularized }
    }
}

/// Everything stored by a forward filter at one step.
#[derive(Debug, Clone)]
pub struct CacheStep {
    /// forward prediction of the Gaussian filter (over `x` or over `x_L`)
    pub fp: MomentGaussian,
    /// first filtered message (prediction times measurement message)
    pub fe1: CanonicalGaussian,
    /// measurement message `(W_ms, w_ms)`
    pub ms: CanonicalGaussian,
    /// mean of the second filtered message, the Gaussian filter's estimate
    pub fe_mean: Vector,
    /// transition linearized at the forward estimate: `F_k`, `u_k`
    /// (for the disjoint filter: `A_L`, `f_L` at `x_fe^N`)
    pub f_mat: Matrix,
    pub u: Vector,
    /// particle set `S_k` (predicted particles, before resampling)
    pub particles: Vec<Vector>,
    /// predicted weights (uniform after resampling)
    pub pred_weights: Vec<f64>,
    /// normalized filtered weights `w_fe`
    pub weights: Vec<f64>,
    /// normalized measurement likelihoods (the filtered weights without the predicted ones)
    pub lik_weights: Vec<f64>,
    /// predicted and filtered point estimates of `x_N` (weighted particle means)
    pub x_fp_n: Vector,
    pub x_fe_n: Vector,
    pub terms: ParticleTerms,
    pub pseudo: LinearPseudo,
}

/// Forward pass output consumed by the smoothers.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub kind: FilterKind,
    pub dims: StateDims,
    pub steps: Vec<CacheStep>,
    /// per-step forward state estimates `[x_L; x_N]`
    pub estimates: Vec<Vector>,
    pub diagnostics: Diagnostics,
    /// measurements the cache was built from
    pub measurements: Vec<Vector>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Forward estimates of a filter that keeps no cache.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub kind: FilterKind,
    pub estimates: Vec<Vector>,
    pub diagnostics: Diagnostics,
}

/// Information-form measurement update: `W = H W_e Hᵀ + W_fp`, `w = H W_e (y - v) + w_fp`.
///
/// `h_t` is the P×D measurement matrix `Hᵀ`.
pub fn ekf_measurement_update(
    fp: &CanonicalGaussian,
    y: &Vector,
    h_t: &Matrix,
    v: &Vector,
    cov_e: &Matrix,
) -> Result<CanonicalGaussian> {
    let ms = measurement_message(y, h_t, v, &linalg::spd_inverse(cov_e)?);
    gaussian::product(fp, &ms)
}

/// Canonical message carried by a linear(ized) measurement.
pub fn measurement_message(y: &Vector, h_t: &Matrix, v: &Vector, w_e: &Matrix) -> CanonicalGaussian {
    let hw = h_t.transpose() * w_e;
    let mut precision = &hw * h_t;
    linalg::symmetrize(&mut precision);
    CanonicalGaussian { precision, transformed_mean: hw * (y - v) }
}

/// `N(F η + u, F C Fᵀ + C_w)`.
pub fn ekf_time_update(fe: &MomentGaussian, f: &Matrix, u: &Vector, cov_w: &Matrix) -> MomentGaussian {
    MomentGaussian { mean: f * &fe.mean + u, cov: linalg::congruence(f, &fe.cov) + cov_w }
}

/// Canonical form with jitter fallback for (numerically) singular covariances.
pub fn to_canonical_regularized(g: &MomentGaussian, diag: &mut Diagnostics) -> Result<CanonicalGaussian> {
    match gaussian::to_canonical(g) {
        Ok(c) => Ok(c),
        Err(_) => {
            let mut cov = g.cov.clone();
            if linalg::psd_clamp(&mut cov) {
                diag.psd_clamps += 1;
            }
            if linalg::jitter_if_singular(&mut cov) {
                diag.jitters += 1;
            }
            gaussian::to_canonical(&MomentGaussian { mean: g.mean.clone(), cov })
        }
    }
}

/// Moment form with jitter fallback for (numerically) singular precisions.
pub fn to_moment_regularized(g: &CanonicalGaussian, diag: &mut Diagnostics) -> Result<MomentGaussian> {
    match gaussian::to_moment(g) {
        Ok(m) => Ok(m),
        Err(_) => {
            let mut w = g.precision.clone();
            linalg::psd_clamp(&mut w);
            if linalg::jitter_if_singular(&mut w) {
                diag.jitters += 1;
            }
            gaussian::to_moment(&CanonicalGaussian { precision: w, transformed_mean: g.transformed_mean.clone() })
        }
    }
}

/// Factored Gaussian used to score many points (or many means) cheaply.
pub struct GaussianScorer {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_normalizer: f64,
}

impl GaussianScorer {
    pub fn new(cov: &Matrix) -> Result<Self> {
        let chol = linalg::cholesky(cov)?;
        let d = cov.nrows() as f64;
        let log_normalizer = -0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * linalg::chol_logdet(&chol);
        Ok(Self { chol, log_normalizer })
    }

    pub fn parts(&self, residual: &Vector) -> DensityParts {
        let quad = if residual.is_empty() { 0.0 } else { residual.dot(&self.chol.solve(residual)) };
        DensityParts { log_normalizer: self.log_normalizer, quad }
    }
}

/// Per-particle log likelihood `ln N(y; B_j η_L + g_j, B_j C_L B_jᵀ + C_e)`
/// given a Gaussian marginal of the linear substate.
pub fn particle_log_likelihoods(terms: &ParticleTerms, lin: &MomentGaussian, y: &Vector, cov_e: &Matrix) -> Result<Vec<f64>> {
    let n = terms.g.len();
    let mut out = Vec::with_capacity(n);
    match &terms.b {
        PerParticle::Shared(b) => {
            let scorer = GaussianScorer::new(&(linalg::congruence(b, &lin.cov) + cov_e))?;
            let bm = b * &lin.mean;
            for j in 0..n {
                out.push(scorer.parts(&(y - &bm - &terms.g[j])).log_value());
            }
        }
        PerParticle::Each(bs) => {
            for (b, g) in bs.iter().zip(&terms.g) {
                let scorer = GaussianScorer::new(&(linalg::congruence(b, &lin.cov) + cov_e))?;
                out.push(scorer.parts(&(y - b * &lin.mean - g)).log_value());
            }
        }
    }
    Ok(out)
}

/// Normalized weights from log weights; on collapse returns uniform weights and `true`.
pub fn normalize_or_reset(log_w: &[f64]) -> (Vec<f64>, bool) {
    match particles::normalize_log(log_w) {
        Ok(w) => (w, false),
        Err(_) => (vec![1.0 / log_w.len() as f64; log_w.len()], true),
    }
}

/// Draws `x_N'` for every ancestor from the transition with `x_L`
/// integrated against the Gaussian marginal `lin`.
pub fn propagate_particles(
    terms: &ParticleTerms,
    ancestors: &[usize],
    lin: &MomentGaussian,
    cov_w_n: &Matrix,
    rng: &mut RandomStream,
) -> Vec<Vector> {
    let d_n = cov_w_n.nrows();
    let factor = |a: &Matrix| sampling_factor(&(linalg::congruence(a, &lin.cov) + cov_w_n));
    match &terms.a_n {
        PerParticle::Shared(a) => {
            let l = factor(a);
            let am = a * &lin.mean;
            ancestors.iter().map(|&j| &am + &terms.f_n[j] + &l * rng.normal_vector(d_n)).collect()
        }
        PerParticle::Each(all) => ancestors
            .iter()
            .map(|&j| {
                let l = factor(&all[j]);
                &all[j] * &lin.mean + &terms.f_n[j] + l * rng.normal_vector(d_n)
            })
            .collect(),
    }
}

/// Pseudo-measured linear means `η̃_j = C̃_j A_Nᵀ W_w,N (x_N' - f_N(x_j))` for
/// the given transitions.
pub fn pseudo_linear_means(pseudo: &LinearPseudo, terms: &ParticleTerms, from: &[usize], to: &[&Vector]) -> Vec<Vector> {
    from.iter()
        .zip(to)
        .map(|(&j, &target)| pseudo.gain.get(j) * (target - &terms.f_n[j]))
        .collect()
}

/// Moment-matched pseudo-measurement message about `x_L` (and optionally `x_N`).
///
/// Components `j` carry weight `weights[j]`, linear mean `eta[j]` with
/// covariance `C̃_j`, and (when `with_n`) a point mass at `xs[j]` on the
/// nonlinear block. Returns the message in canonical form over the
/// `[x_L; x_N]` space (or `x_L` when `with_n` is false), the moment form, and
/// whether a PSD clamp fired. Flat linear pseudo-measurements contribute no
/// linear-block information.
#[allow(clippy::too_many_arguments)]
pub fn pm_whole(
    weights: &[f64],
    eta: &[Vector],
    c_tilde: &PerParticle<Matrix>,
    comp_idx: &[usize],
    xs: &[&Vector],
    linear_flat: bool,
    with_n: bool,
    diag: &mut Diagnostics,
) -> Result<(CanonicalGaussian, MomentGaussian)> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::EmptyMixture);
    }
    let d_l = eta.first().map_or(0, |v| v.len());
    let d_n = if with_n { xs[0].len() } else { 0 };
    let d = d_l + d_n;
    let mut mean = Vector::zeros(d);
    for j in 0..n {
        let w = weights[j];
        if d_l > 0 {
            mean.rows_mut(0, d_l).axpy(w, &eta[j], 1.0);
        }
        if with_n {
            mean.rows_mut(d_l, d_n).axpy(w, xs[j], 1.0);
        }
    }
    let mut cov = Matrix::zeros(d, d);
    // within-component covariance of the linear block
    if d_l > 0 {
        let mut within = Matrix::zeros(d_l, d_l);
        if c_tilde.is_shared() {
            within.copy_from(c_tilde.get(0));
        } else {
            for j in 0..n {
                within += c_tilde.get(comp_idx[j]) * weights[j];
            }
        }
        cov.view_mut((0, 0), (d_l, d_l)).copy_from(&within);
    }
    let mut r = Vector::zeros(d);
    for j in 0..n {
        if d_l > 0 {
            r.rows_mut(0, d_l).copy_from(&(&eta[j] - mean.rows(0, d_l)));
        }
        if with_n {
            r.rows_mut(d_l, d_n).copy_from(&(xs[j] - mean.rows(d_l, d_n)));
        }
        cov.syger(weights[j], &r, &r, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    if linalg::psd_clamp(&mut cov) {
        diag.psd_clamps += 1;
    }
    let moment = MomentGaussian { mean, cov };
    if linear_flat {
        // only the nonlinear block carries information
        let mut precision = Matrix::zeros(d, d);
        let mut transformed_mean = Vector::zeros(d);
        if with_n && d_n > 0 {
            let nb = gaussian::block(&moment, d_l, d_n);
            let c = to_canonical_regularized(&nb, diag)?;
            precision.view_mut((d_l, d_l), (d_n, d_n)).copy_from(&c.precision);
            transformed_mean.rows_mut(d_l, d_n).copy_from(&c.transformed_mean);
        }
        return Ok((CanonicalGaussian { precision, transformed_mean }, moment));
    }
    let mut reg = moment.clone();
    if linalg::jitter_if_singular(&mut reg.cov) {
        diag.jitters += 1;
    }
    let c = to_canonical_regularized(&reg, diag)?;
    Ok((c, moment))
}

/// Embeds a message over the leading `m.dim()` coordinates into `d` dimensions.
pub fn embed_leading(m: &CanonicalGaussian, d: usize) -> CanonicalGaussian {
    let k = m.dim();
    let mut out = CanonicalGaussian::flat(d);
    out.precision.view_mut((0, 0), (k, k)).copy_from(&m.precision);
    out.transformed_mean.rows_mut(0, k).copy_from(&m.transformed_mean);
    out
}

/// Second filtered message: the first one times a pseudo-measurement message.
pub fn forward_pseudo_update_linear(fe1: &CanonicalGaussian, pm: &CanonicalGaussian) -> Result<CanonicalGaussian> {
    let pm = if pm.dim() < fe1.dim() { embed_leading(pm, fe1.dim()) } else { pm.clone() };
    gaussian::product(fe1, &pm)
}

/// Ancestor indices for the next step and the weights they carry.
pub(crate) fn select_ancestors(
    weights: &[f64],
    policy: Resampling,
    rng: &mut RandomStream,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = weights.len();
    let resample = match policy {
        Resampling::Always => true,
        Resampling::Ess(frac) => {
            let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
            ess < frac * n as f64
        }
    };
    if resample {
        Ok((particles::systematic_indices(weights, n, rng)?, vec![1.0 / n as f64; n]))
    } else {
        Ok(((0..n).collect(), weights.to_vec()))
    }
}

pub(crate) fn check_inputs(model: &dyn ClgModel, ys: &[Vector], n_particles: usize) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::InvalidParam("no measurements".into()));
    }
    if n_particles == 0 {
        return Err(Error::InvalidParam("need at least one particle".into()));
    }
    let p = model.dims().p;
    if let Some(bad) = ys.iter().find(|y| y.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: bad.len() });
    }
    Ok(())
}

pub(crate) fn weighted_mean_of(xs: &[Vector], weights: &[f64], d: usize) -> Vector {
    let mut m = Vector::zeros(d);
    for (x, w) in xs.iter().zip(weights) {
        m.axpy(*w, x, 1.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }
    fn m1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn measurement_update_examples() {
        let y = Vector::from_vec(vec![1.0, -2.0]);
        let v = Vector::from_vec(vec![0.5, 0.5]);
        let post = ekf_measurement_update(&CanonicalGaussian::flat(2), &y, &Matrix::identity(2, 2), &v, &Matrix::identity(2, 2))
            .unwrap();
        assert_eq!(post.precision, Matrix::identity(2, 2));
        assert_eq!(post.transformed_mean, &y - &v);

        let prior = gaussian::to_canonical(&MomentGaussian::new(s(0.0), m1(1.0)).unwrap()).unwrap();
        let post = ekf_measurement_update(&prior, &s(2.0), &m1(1.0), &s(0.0), &m1(1.0)).unwrap();
        let pm = gaussian::to_moment(&post).unwrap();
        assert_relative_eq!(pm.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(pm.cov[(0, 0)], 0.5, epsilon = 1e-15);

        let prior_m = MomentGaussian::new(Vector::from_vec(vec![0.3, -0.7]), Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]))
            .unwrap();
        let h_t = Matrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let v = s(0.1);
        let y = &h_t * &prior_m.mean + &v;
        let post = ekf_measurement_update(&gaussian::to_canonical(&prior_m).unwrap(), &y, &h_t, &v, &m1(0.3)).unwrap();
        let pm = gaussian::to_moment(&post).unwrap();
        assert!((pm.mean - prior_m.mean).amax() < 1e-14);
    }

    #[test]
    fn time_update_examples() {
        let g = MomentGaussian::new(Vector::from_vec(vec![1.0, 2.0]), Matrix::identity(2, 2)).unwrap();
        let cw = Matrix::from_diagonal(&Vector::from_vec(vec![0.1, 0.2]));
        let out = ekf_time_update(&g, &Matrix::identity(2, 2), &Vector::zeros(2), &cw);
        assert_eq!(out.mean, g.mean);
        assert_eq!(out.cov, Matrix::identity(2, 2) + &cw);

        let out = ekf_time_update(&MomentGaussian::new(s(1.0), m1(1.0)).unwrap(), &m1(2.0), &s(1.0), &m1(0.0));
        assert_eq!(out.mean[0], 3.0);
        assert_eq!(out.cov[(0, 0)], 4.0);

        let th: f64 = 0.7;
        let rot = Matrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let c = Matrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
        let out = ekf_time_update(&MomentGaussian::new(Vector::zeros(2), c.clone()).unwrap(), &rot, &Vector::zeros(2), &Matrix::zeros(2, 2));
        assert_relative_eq!(out.cov.determinant(), c.determinant(), max_relative = 1e-12);
    }

    #[test]
    fn flat_pseudo_when_a_n_zero() {
        let a = PerParticle::Shared(Matrix::zeros(2, 2));
        let p = LinearPseudo::new(&a, &Matrix::identity(2, 2));
        assert!(p.flat);
        assert_eq!(p.w_tilde.get(0), &Matrix::zeros(2, 2));
    }

    #[test]
    fn pseudo_for_scaled_identity() {
        let ts = 0.01;
        let wwn = Matrix::identity(2, 2) * 4.0e4;
        let p = LinearPseudo::new(&PerParticle::Shared(Matrix::identity(2, 2) * ts), &wwn);
        assert!(!p.flat);
        assert!((p.w_tilde.get(0) - &wwn * (ts * ts)).amax() < 1e-9);
        let z = Vector::from_vec(vec![0.003, -0.001]);
        let eta = p.gain.get(0) * &z;
        assert!((eta - &z / ts).amax() < 1e-12);
    }

    #[test]
    fn pseudo_update_scalar_single_particle() {
        // A_N = 1, C_w,N = 1, one particle: precision grows by exactly 1
        let a = PerParticle::Shared(m1(1.0));
        let p = LinearPseudo::new(&a, &m1(1.0));
        let eta = vec![s(0.4)];
        let x = s(0.0);
        let mut diag = Diagnostics::default();
        let (pm, _) = pm_whole(&[1.0], &eta, &p.c_tilde, &[0], &[&x], p.flat, false, &mut diag).unwrap();
        let fe1 = CanonicalGaussian { precision: m1(2.5), transformed_mean: s(1.0) };
        let fe2 = forward_pseudo_update_linear(&fe1, &pm).unwrap();
        assert_relative_eq!(fe2.precision[(0, 0)], 3.5, epsilon = 1e-12);
        assert_relative_eq!(fe2.transformed_mean[0], 1.4, epsilon = 1e-12);
    }

    #[test]
    fn pm_whole_matches_brute_force() {
        let eta = vec![Vector::from_vec(vec![0.1, 0.2]), Vector::from_vec(vec![-0.3, 0.5]), Vector::from_vec(vec![1.0, 0.0])];
        let cts = vec![
            Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]),
            Matrix::from_row_slice(2, 2, &[0.4, 0.0, 0.0, 0.2]),
            Matrix::from_row_slice(2, 2, &[0.6, -0.1, -0.1, 0.7]),
        ];
        let xs = [Vector::from_vec(vec![1.0, 2.0]), Vector::from_vec(vec![1.5, 1.0]), Vector::from_vec(vec![0.0, 3.0])];
        let w = [0.2, 0.5, 0.3];
        let refs: Vec<&Vector> = xs.iter().collect();
        let mut diag = Diagnostics::default();
        let (_, m) = pm_whole(&w, &eta, &PerParticle::Each(cts.clone()), &[0, 1, 2], &refs, false, true, &mut diag).unwrap();
        // E[x xᵀ] - μμᵀ with full-state components
        let mut mu = Vector::zeros(4);
        let mut second = Matrix::zeros(4, 4);
        for j in 0..3 {
            let c = linalg::concat(&eta[j], &xs[j]);
            mu += &c * w[j];
            let mut cj = Matrix::zeros(4, 4);
            cj.view_mut((0, 0), (2, 2)).copy_from(&cts[j]);
            second += (cj + &c * c.transpose()) * w[j];
        }
        let cov = second - &mu * mu.transpose();
        assert!((m.mean - mu).amax() < 1e-14);
        assert!((m.cov - cov).amax() < 1e-13);
    }

    #[test]
    fn single_particle_mixture() {
        let eta = vec![Vector::from_vec(vec![0.1, 0.2])];
        let ct = Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let x = Vector::from_vec(vec![4.0, 5.0]);
        let mut diag = Diagnostics::default();
        let (c, m) = pm_whole(&[1.0], &eta, &PerParticle::Shared(ct.clone()), &[0], &[&x], false, true, &mut diag).unwrap();
        assert_eq!(m.mean, linalg::concat(&eta[0], &x));
        assert_eq!(m.cov.view((0, 0), (2, 2)).into_owned(), ct);
        assert_eq!(m.cov.view((2, 2), (2, 2)).into_owned(), Matrix::zeros(2, 2));
        assert!(diag.jitters == 1);
        assert!(c.precision.iter().all(|v| v.is_finite()));
    }
}
