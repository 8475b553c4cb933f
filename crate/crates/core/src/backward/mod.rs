//! Backward passes and the forward-backward merge.
//!
//! Every backward step has three phases:
//! 1. the Gaussian backward message of `x_{k+1}` is predicted back to `x_k`;
//! 2. the particle weights of `S_k` and the Gaussian smoothed message are
//!    refined jointly for `n_i` iterations;
//! 3. a particle is selected (or the weighted mean taken) and the backward
//!    message of `x_k` is formed.
//!
//! [`run_smoother`] runs one forward cache through one of four smoothers:
//! joint trajectories or marginals, over overlapping (cache from
//! [`run_dbf`](crate::forward::run_dbf)) or disjoint (cache from
//! [`run_sdbf`](crate::forward::run_sdbf)) substates.

pub mod steps;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use steps::*;

use crate::error::{Error, Result};
use crate::forward::{to_moment_regularized, CacheStep, Diagnostics, FilterKind, ForwardCache};
use crate::gaussian::{self, CanonicalGaussian, MomentGaussian};
use crate::linalg::{self, Matrix, Vector};
use crate::model::ClgModel;
use crate::particles::{self, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmootherAlg {
    /// joint trajectories, overlapping substates
    Dbsa,
    /// marginals, overlapping substates
    Sdbsa,
    /// joint trajectories, disjoint substates
    Ddbsa,
    /// marginals, disjoint substates
    Sddbsa,
}

impl SmootherAlg {
    pub const ALL: [SmootherAlg; 4] = [SmootherAlg::Dbsa, SmootherAlg::Sdbsa, SmootherAlg::Ddbsa, SmootherAlg::Sddbsa];

    pub fn name(self) -> &'static str {
        match self {
            SmootherAlg::Dbsa => "dbsa",
            SmootherAlg::Sdbsa => "sdbsa",
            SmootherAlg::Ddbsa => "ddbsa",
            SmootherAlg::Sddbsa => "sddbsa",
        }
    }

    /// Forward filter whose cache the smoother consumes.
    pub fn filter(self) -> FilterKind {
        match self {
            SmootherAlg::Dbsa | SmootherAlg::Sdbsa => FilterKind::Dbf,
            SmootherAlg::Ddbsa | SmootherAlg::Sddbsa => FilterKind::Sdbf,
        }
    }

    pub fn is_marginal(self) -> bool {
        matches!(self, SmootherAlg::Sdbsa | SmootherAlg::Sddbsa)
    }
}

impl std::str::FromStr for SmootherAlg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SmootherAlg::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub alg: SmootherAlg,
    /// number of backward passes (ignored by the marginal smoothers)
    pub m: usize,
    /// Phase II iterations per step
    pub n_i: usize,
    /// use the forward measurement likelihoods instead of recomputing them
    pub weight_reuse: bool,
    pub seed: u64,
    pub run: u64,
    /// draw `x_L` from its smoothed marginal instead of taking the mean
    pub sample_linear: bool,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self { alg: SmootherAlg::Dbsa, m: 100, n_i: 1, weight_reuse: true, seed: 0, run: 0, sample_linear: false }
    }
}

/// Backward message of `x_{k+1}`: Gaussian part and the single unit-weight particle.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    pub be: CanonicalGaussian,
    pub particle: Vector,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmootherDiagnostics {
    /// steps whose smoothed weights vanished and fell back to forward weights
    pub backward_collapses: usize,
    /// indefinite residual covariances clamped in the pseudo-measurement weights
    pub residual_clamps: usize,
    pub numeric: Diagnostics,
}

impl SmootherDiagnostics {
    fn merge(&mut self, o: &SmootherDiagnostics) {
        self.backward_collapses += o.backward_collapses;
        self.residual_clamps += o.residual_clamps;
        self.numeric.merge(&o.numeric);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    JointTrajectories,
    Marginals,
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub mode: OutputMode,
    /// `M` sampled trajectories of `[x_L; x_N]` (one, the estimate, for marginal smoothers)
    pub trajectories: Vec<Vec<Vector>>,
    /// per-step smoothed particle weights (marginal smoothers)
    pub marginal_weights: Vec<Vec<f64>>,
    /// per-step smoothed Gaussian messages (marginal smoothers)
    pub marginals: Vec<MomentGaussian>,
    /// per-step point estimates: trajectory mean, or the marginal estimate
    pub estimates: Vec<Vector>,
    pub diagnostics: SmootherDiagnostics,
}

/// Backward message at the last step: the forward filtered Gaussian and a
/// particle drawn from `S_T` by the forward weights.
pub fn init_backward(cache: &ForwardCache, rng: &mut RandomStream) -> Result<BackwardState> {
    let last = cache.steps.last().ok_or_else(|| Error::InvalidParam("empty forward cache".into()))?;
    let j = particles::resample_one(&last.weights, rng)?;
    Ok(BackwardState { be: last.fe1.clone(), particle: last.particles[j].clone(), k: cache.len() - 1 })
}

/// Quantities shared by all passes.
struct Shared<'a> {
    cache: &'a ForwardCache,
    model: &'a dyn ClgModel,
    cfg: &'a SmootherConfig,
    /// precision of the process noise seen by the Gaussian backward filter
    w_w: Matrix,
    w_e: Matrix,
    disjoint: bool,
}

/// Result of Phase II at one step.
pub struct PhaseTwo {
    pub weights: Vec<f64>,
    /// smoothed Gaussian of the Gaussian filter's state (`m_4`)
    pub m4: MomentGaussian,
    /// backward prediction used in the last iteration (`m_1`)
    pub m1: CanonicalGaussian,
    /// pseudo-measured linear means `η̃_j`
    pub eta: Vec<Vector>,
    /// conditioning point of the disjoint case after the last iteration
    pub x_sm: Vector,
}

impl Shared<'_> {
    fn phase2(&self, k: usize, st: &CacheStep, be: &BackwardState, diag: &mut SmootherDiagnostics) -> Result<PhaseTwo> {
        let model = self.model;
        let d_l = self.cache.dims.d_l;
        let d_n = self.cache.dims.d_n;
        let y = &self.cache.measurements[k];
        let eta = precompute_pm_linear(&st.pseudo, &st.terms, &be.particle);
        let be_m = to_moment_regularized(&be.be, &mut diag.numeric)?;
        let be_lin = gaussian::block(&be_m, 0, d_l);
        let log_w5_reuse: Option<Vec<f64>> = self.cfg.weight_reuse.then(|| st.lik_weights.iter().map(|w| w.ln()).collect());

        let mut weights = st.weights.clone();
        let mut x_sm = st.x_fe_n.clone();
        let mut m1 = phase1_backward_predict(&be.be, &st.f_mat, &st.u, &self.w_w)?;
        let mut m4 = None;
        for it in 0..self.cfg.n_i.max(1) {
            if self.disjoint && it > 0 {
                m1 = phase1_backward_predict(&be.be, &model.a_l(&x_sm, k), &model.f_l(&x_sm, k), &self.w_w)?;
            }
            let m3 = if st.pseudo.flat && (self.disjoint || d_n == 0) {
                m1.clone()
            } else {
                let (m2, _) = step1_pm_whole(&weights, &eta, &st.pseudo, &st.particles, !self.disjoint, &mut diag.numeric)?;
                step2_be1(&m1, &m2)?
            };
            let m4c = step3_smooth_whole(&st.fe1, &m3)?;
            let m4m = to_moment_regularized(&m4c, &mut diag.numeric)?;
            let lin = gaussian::block(&m4m, 0, d_l);

            let l3 = step4_bp_particle_weights(&lin, &be.particle, &st.terms, model.cov_w_n())?;
            let l2 = step5_pm_particle_weights(&lin, &be_lin, &st.terms, model.cov_w_l(), &mut diag.residual_clamps)?;
            let l5 = match &log_w5_reuse {
                Some(l) => l.clone(),
                None => step7_ms_particle_weights(&lin, y, &st.terms, model.cov_e())?,
            };
            weights = match step8_combine(&st.pred_weights, &l2, &l3, &l5) {
                Some(w) => w,
                None => {
                    diag.backward_collapses += 1;
                    st.weights.clone()
                }
            };
            x_sm = weighted_mean(&st.particles, &weights, d_n);
            m4 = Some(m4m);
        }
        Ok(PhaseTwo { weights, m4: m4.expect("at least one iteration"), m1, eta, x_sm })
    }

    /// Phase III: particle selection and the backward message of `x_k`.
    fn phase3(
        &self,
        k: usize,
        st: &CacheStep,
        p2: &PhaseTwo,
        rng: Option<&mut RandomStream>,
        diag: &mut SmootherDiagnostics,
    ) -> Result<(BackwardState, Vector)> {
        let d_l = self.cache.dims.d_l;
        let d_n = self.cache.dims.d_n;
        let lin = gaussian::block(&p2.m4, 0, d_l);
        let (particle, x_l) = match rng {
            Some(rng) => {
                let j = particles::resample_one(&p2.weights, &mut *rng)?;
                let x_l = if self.cfg.sample_linear {
                    rng.gaussian(&lin.mean, &particles::sampling_factor(&lin.cov))
                } else {
                    lin.mean.clone()
                };
                (st.particles[j].clone(), x_l)
            }
            None => (weighted_mean(&st.particles, &p2.weights, d_n), lin.mean.clone()),
        };
        let m3 = if st.pseudo.flat && (self.disjoint || d_n == 0) {
            p2.m1.clone()
        } else {
            let (m2, _) = step1_pm_whole(&p2.weights, &p2.eta, &st.pseudo, &st.particles, !self.disjoint, &mut diag.numeric)?;
            step2_be1(&p2.m1, &m2)?
        };
        let ms = if self.disjoint {
            let y = &self.cache.measurements[k];
            ms_at(y, &self.model.b(&p2.x_sm, k), &self.model.g(&p2.x_sm, k), &self.w_e)
        } else {
            st.ms.clone()
        };
        let be = gaussian::product(&m3, &ms)?;
        Ok((BackwardState { be, particle: particle.clone(), k }, linalg::concat(&x_l, &particle)))
    }

    /// One full backward pass. `pass` keys the random stream; `None` runs the
    /// deterministic marginal variant.
    fn pass(&self, pass: Option<u64>) -> Result<PassResult> {
        let cache = self.cache;
        let t = cache.len();
        let d_l = cache.dims.d_l;
        let d_n = cache.dims.d_n;
        let mut diag = SmootherDiagnostics::default();
        let stream = |k: usize| pass.map(|p| RandomStream::new(self.cfg.seed, self.cfg.run, p, k as u64));

        let last = &cache.steps[t - 1];
        let mut state = match stream(t - 1) {
            Some(mut rng) => init_backward(cache, &mut rng)?,
            None => BackwardState { be: last.fe1.clone(), particle: last.x_fe_n.clone(), k: t - 1 },
        };
        let fe_last = to_moment_regularized(&last.fe1, &mut diag.numeric)?;
        let mut traj = vec![Vector::zeros(0); t];
        traj[t - 1] = linalg::concat(&fe_last.mean.rows(0, d_l).into_owned(), &state.particle);
        let keep_marginals = pass.is_none();
        let mut weights = Vec::new();
        let mut marginals = Vec::new();
        if keep_marginals {
            weights.push(last.weights.clone());
            marginals.push(fe_last.clone());
        }
        for k in (0..t - 1).rev() {
            let st = &cache.steps[k];
            let p2 = self.phase2(k, st, &state, &mut diag)?;
            let mut rng = stream(k);
            let (next_state, point) = self.phase3(k, st, &p2, rng.as_mut(), &mut diag)?;
            traj[k] = point;
            if keep_marginals {
                weights.push(p2.weights);
                marginals.push(p2.m4);
            }
            state = next_state;
        }
        weights.reverse();
        marginals.reverse();
        debug_assert!(traj.iter().all(|x| x.len() == d_l + d_n));
        Ok(PassResult { traj, weights, marginals, diag })
    }
}

struct PassResult {
    traj: Vec<Vector>,
    weights: Vec<Vec<f64>>,
    marginals: Vec<MomentGaussian>,
    diag: SmootherDiagnostics,
}

fn weighted_mean(xs: &[Vector], w: &[f64], d: usize) -> Vector {
    let mut m = Vector::zeros(d);
    for (x, wj) in xs.iter().zip(w) {
        m.axpy(*wj, x, 1.0);
    }
    m
}

/// Stream pass id of backward pass `m`.
pub fn backward_pass_id(m: usize) -> u64 {
    m as u64
}

/// Runs the configured smoother over a forward cache.
pub fn run_smoother(cache: &ForwardCache, model: &dyn ClgModel, cfg: &SmootherConfig) -> Result<SmootherOutput> {
    if cache.kind != cfg.alg.filter() {
        return Err(Error::ConfigMismatch(format!(
            "{} needs a {:?} forward cache, got {:?}",
            cfg.alg.name(),
            cfg.alg.filter(),
            cache.kind
        )));
    }
    if cache.is_empty() {
        return Err(Error::InvalidParam("empty forward cache".into()));
    }
    if cfg.n_i == 0 {
        return Err(Error::InvalidParam("n_i must be at least 1".into()));
    }
    let disjoint = cache.kind == FilterKind::Sdbf;
    let cov_w = if disjoint { model.cov_w_l().clone() } else { model.cov_w() };
    let shared = Shared {
        cache,
        model,
        cfg,
        w_w: linalg::spd_inverse(&cov_w)?,
        w_e: linalg::spd_inverse(model.cov_e())?,
        disjoint,
    };
    if cfg.alg.is_marginal() {
        let r = shared.pass(None)?;
        return Ok(SmootherOutput {
            mode: OutputMode::Marginals,
            estimates: r.traj.clone(),
            trajectories: vec![r.traj],
            marginal_weights: r.weights,
            marginals: r.marginals,
            diagnostics: r.diag,
        });
    }
    if cfg.m == 0 {
        return Err(Error::InvalidParam("need at least one backward pass".into()));
    }
    let results: Vec<PassResult> =
        (0..cfg.m).into_par_iter().map(|m| shared.pass(Some(backward_pass_id(m)))).collect::<Result<_>>()?;
    let mut diagnostics = SmootherDiagnostics::default();
    for r in &results {
        diagnostics.merge(&r.diag);
    }
    let trajectories: Vec<Vec<Vector>> = results.into_iter().map(|r| r.traj).collect();
    let t = cache.len();
    let inv = 1.0 / trajectories.len() as f64;
    let estimates = (0..t)
        .map(|k| {
            let mut acc = Vector::zeros(trajectories[0][k].len());
            for tr in &trajectories {
                acc += &tr[k];
            }
            acc * inv
        })
        .collect();
    Ok(SmootherOutput {
        mode: OutputMode::JointTrajectories,
        trajectories,
        marginal_weights: Vec::new(),
        marginals: Vec::new(),
        estimates,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{run_dbf, run_sdbf, ForwardConfig};
    use crate::model::{simulate, Ssm1, Ssm1Params};

    fn ssm1_setup(t: usize, n: usize) -> (Ssm1, crate::model::Trajectory, ForwardCache, ForwardCache) {
        let m = Ssm1::new(Ssm1Params::default()).unwrap();
        let tr = simulate(&m, t, 21).unwrap();
        let cfg = ForwardConfig { n_particles: n, seed: 4, ..Default::default() };
        let dbf = run_dbf(&m, &tr.measurements, &cfg).unwrap();
        let sdbf = run_sdbf(&m, &tr.measurements, &cfg).unwrap();
        (m, tr, dbf, sdbf)
    }

    #[test]
    fn rejects_mismatched_cache() {
        let (m, _, dbf, _) = ssm1_setup(5, 10);
        let cfg = SmootherConfig { alg: SmootherAlg::Ddbsa, ..Default::default() };
        assert!(matches!(run_smoother(&dbf, &m, &cfg), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn init_uses_forward_quantities() {
        let (_, _, mut dbf, _) = ssm1_setup(6, 10);
        let last = dbf.steps.last_mut().unwrap();
        last.weights = vec![0.0; 10];
        last.weights[7] = 1.0;
        let mut rng = RandomStream::new(1, 0, 0, 5);
        let st = init_backward(&dbf, &mut rng).unwrap();
        assert_eq!(st.particle, dbf.steps[5].particles[7]);
        assert_eq!(st.be, dbf.steps[5].fe1);
    }

    #[test]
    fn init_draws_differ_across_passes() {
        let (_, _, dbf, _) = ssm1_setup(4, 50);
        let picks: Vec<Vector> = (0..20)
            .map(|p| init_backward(&dbf, &mut RandomStream::new(3, 0, p, 3)).unwrap().particle)
            .collect();
        assert!(picks.iter().any(|x| x != &picks[0]));
    }

    #[test]
    fn all_smoothers_run_and_are_deterministic() {
        let (m, tr, dbf, sdbf) = ssm1_setup(30, 40);
        for alg in SmootherAlg::ALL {
            let cache = if alg.filter() == FilterKind::Dbf { &dbf } else { &sdbf };
            let cfg = SmootherConfig { alg, m: 5, seed: 2, ..Default::default() };
            let a = run_smoother(cache, &m, &cfg).unwrap();
            let b = run_smoother(cache, &m, &cfg).unwrap();
            assert_eq!(a.estimates, b.estimates, "{alg:?}");
            assert_eq!(a.estimates.len(), 30);
            let mse: f64 = a.estimates.iter().zip(&tr.states).map(|(e, x)| (e - x).norm_squared()).sum::<f64>() / 30.0;
            assert!(mse.sqrt() < 0.1, "{alg:?} rmse {}", mse.sqrt());
            if alg.is_marginal() {
                assert_eq!(a.marginal_weights.len(), 30);
                for w in &a.marginal_weights {
                    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            } else {
                assert_eq!(a.trajectories.len(), 5);
            }
        }
    }

    #[test]
    fn pass_order_does_not_matter() {
        let (m, _, dbf, _) = ssm1_setup(10, 20);
        let cfg = SmootherConfig { m: 6, seed: 8, ..Default::default() };
        let shared = Shared {
            cache: &dbf,
            model: &m,
            cfg: &cfg,
            w_w: linalg::spd_inverse(&m.cov_w()).unwrap(),
            w_e: linalg::spd_inverse(m.cov_e()).unwrap(),
            disjoint: false,
        };
        let fwd: Vec<_> = (0..6).map(|p| shared.pass(Some(p)).unwrap().traj).collect();
        let rev: Vec<_> = (0..6).rev().map(|p| shared.pass(Some(p)).unwrap().traj).collect();
        let mut rev = rev;
        rev.reverse();
        assert_eq!(fwd, rev);
        let out = run_smoother(&dbf, &m, &cfg).unwrap();
        assert_eq!(out.trajectories, fwd);
    }

    #[test]
    fn factorization_holds_at_every_step() {
        let (m, _, dbf, _) = ssm1_setup(8, 20);
        let cfg = SmootherConfig { alg: SmootherAlg::Sdbsa, ..Default::default() };
        let shared = Shared {
            cache: &dbf,
            model: &m,
            cfg: &cfg,
            w_w: linalg::spd_inverse(&m.cov_w()).unwrap(),
            w_e: linalg::spd_inverse(m.cov_e()).unwrap(),
            disjoint: false,
        };
        let mut diag = SmootherDiagnostics::default();
        let st = &dbf.steps[6];
        let be = BackwardState { be: dbf.steps[7].fe1.clone(), particle: dbf.steps[7].x_fe_n.clone(), k: 7 };
        let p2 = shared.phase2(6, st, &be, &mut diag).unwrap();
        let (m2, _) = step1_pm_whole(&st.weights, &p2.eta, &st.pseudo, &st.particles, true, &mut diag.numeric).unwrap();
        let m3 = step2_be1(&p2.m1, &m2).unwrap();
        let m4 = step3_smooth_whole(&st.fe1, &m3).unwrap();
        assert_eq!(m4.precision, &st.fe1.precision + &m3.precision);
        assert_eq!(m4.transformed_mean, &st.fe1.transformed_mean + &m3.transformed_mean);
    }
}
