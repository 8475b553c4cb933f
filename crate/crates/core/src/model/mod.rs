//! Conditionally linear Gaussian state-space models.
//!
//! The state is the ordered concatenation `x = [x_L; x_N]`: the first `d_l`
//! components enter the dynamics and measurements linearly once the last
//! `d_n` components are fixed. A model supplies both the full maps `f`, `h`
//! and their structured parts
//!
//! ```text
//! x_L' = A_L(x_N) x_L + f_L(x_N) + w_L
//! x_N' = A_N(x_N) x_L + f_N(x_N) + w_N
//! y    = B(x_N)   x_L + g(x_N)   + e
//! ```
//!
//! and [`check_consistency`] verifies that the two descriptions agree.

mod linear;
mod ssm1;
mod ssm2;

pub use linear::LinearClg;
pub use ssm1::{Ssm1, Ssm1Params, SSM1_DEFAULT_T};
pub use ssm2::{ssm2_true_process_cov, Ssm2, Ssm2Params, SSM2_DEFAULT_T};

use crate::error::{Error, Result};
use crate::gaussian::MomentGaussian;
use crate::linalg::{self, Matrix, Vector};
use crate::particles::{sampling_factor, RandomStream};

/// Sizes of the linear block, the nonlinear block and the measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateDims {
    pub d_l: usize,
    pub d_n: usize,
    pub p: usize,
}

impl StateDims {
    pub fn d(&self) -> usize {
        self.d_l + self.d_n
    }
}

/// Index sets of the two substates inside the full state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePartition {
    pub linear_idx: Vec<usize>,
    pub nonlinear_idx: Vec<usize>,
}

impl StatePartition {
    pub fn new(dims: StateDims) -> Self {
        Self { linear_idx: (0..dims.d_l).collect(), nonlinear_idx: (dims.d_l..dims.d()).collect() }
    }

    pub fn split(&self, x: &Vector) -> (Vector, Vector) {
        let d_l = self.linear_idx.len();
        (x.rows(0, d_l).into_owned(), x.rows(d_l, self.nonlinear_idx.len()).into_owned())
    }
}

/// A conditionally linear Gaussian state-space model.
///
/// All methods take the time index `k` so time-varying models fit the same
/// interface; the built-in models ignore it.
pub trait ClgModel: Send + Sync {
    fn dims(&self) -> StateDims;

    fn a_n(&self, x_n: &Vector, k: usize) -> Matrix;
    fn f_n(&self, x_n: &Vector, k: usize) -> Vector;
    fn a_l(&self, x_n: &Vector, k: usize) -> Matrix;
    fn f_l(&self, x_n: &Vector, k: usize) -> Vector;
    fn b(&self, x_n: &Vector, k: usize) -> Matrix;
    fn g(&self, x_n: &Vector, k: usize) -> Vector;

    fn cov_w_l(&self) -> &Matrix;
    fn cov_w_n(&self) -> &Matrix;
    fn cov_e(&self) -> &Matrix;
    fn initial(&self) -> &MomentGaussian;

    /// Full state transition; defaults to assembling the structured parts.
    fn f(&self, x: &Vector, k: usize) -> Vector {
        let d = self.dims();
        let (x_l, x_n) = StatePartition::new(d).split(x);
        let top = self.a_l(&x_n, k) * &x_l + self.f_l(&x_n, k);
        let bottom = self.a_n(&x_n, k) * &x_l + self.f_n(&x_n, k);
        linalg::concat(&top, &bottom)
    }

    /// Full measurement map; defaults to `B x_L + g`.
    fn h(&self, x: &Vector, k: usize) -> Vector {
        let (x_l, x_n) = StatePartition::new(self.dims()).split(x);
        self.b(&x_n, k) * &x_l + self.g(&x_n, k)
    }

    /// Analytic Jacobian of `f`, if available.
    fn jacobian_f(&self, _x: &Vector, _k: usize) -> Option<Matrix> {
        None
    }

    /// Analytic Jacobian of `h` (P×D), if available.
    fn jacobian_h(&self, _x: &Vector, _k: usize) -> Option<Matrix> {
        None
    }

    /// True when `A_N`, `A_L` and `B` do not depend on `x_N` or `k`. Lets the
    /// estimators factor per-particle covariances once per step.
    fn linear_parts_constant(&self) -> bool {
        false
    }

    /// Full process-noise covariance seen by the estimators.
    fn cov_w(&self) -> Matrix {
        linalg::block_diag(self.cov_w_l(), self.cov_w_n())
    }

    /// Draws the process noise used when simulating the true state. Defaults
    /// to the block-diagonal covariance the estimators assume.
    fn sample_process_noise(&self, rng: &mut RandomStream) -> Vector {
        let l = sampling_factor(&self.cov_w());
        l * rng.normal_vector(self.dims().d())
    }

    fn sample_initial(&self, rng: &mut RandomStream) -> Vector {
        let init = self.initial();
        rng.gaussian(&init.mean, &sampling_factor(&init.cov))
    }
}

/// Simulated states and measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub measurements: Vec<Vector>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Stream pass id reserved for simulation draws, distinct from filter passes.
pub const SIMULATION_PASS: u64 = u64::MAX;

/// Draws `t` states starting from the initial density, and one measurement per state.
pub fn simulate(model: &dyn ClgModel, t: usize, seed: u64) -> Result<Trajectory> {
    if t == 0 {
        return Err(Error::InvalidParam("trajectory length must be at least 1".into()));
    }
    let mut rng = RandomStream::new(seed, 0, SIMULATION_PASS, 0);
    let le = sampling_factor(model.cov_e());
    let p = model.dims().p;
    let mut states = Vec::with_capacity(t);
    let mut measurements = Vec::with_capacity(t);
    let mut x = model.sample_initial(&mut rng);
    for k in 0..t {
        measurements.push(model.h(&x, k) + &le * rng.normal_vector(p));
        let next = model.f(&x, k) + model.sample_process_noise(&mut rng);
        states.push(std::mem::replace(&mut x, next));
    }
    Ok(Trajectory { states, measurements, seed })
}

fn fd_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

/// Central finite-difference Jacobian of `map` at `x`.
pub fn finite_difference_jacobian(map: impl Fn(&Vector) -> Vector, x: &Vector) -> Matrix {
    let f0 = map(x);
    let mut j = Matrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let fp = map(&xp);
        xp[i] = x[i] - h;
        let fm = map(&xp);
        xp[i] = x[i];
        j.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    j
}

fn affine_expansion(jac: Matrix, value: Vector, x: &Vector) -> Result<(Matrix, Vector)> {
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteJacobian);
    }
    let u = value - &jac * x;
    Ok((jac, u))
}

/// First-order expansion of the transition at `x_fe`: `f(x) ≈ F x + u`.
pub fn linearize_markov(model: &dyn ClgModel, x_fe: &Vector, k: usize) -> Result<(Matrix, Vector)> {
    let jac = model
        .jacobian_f(x_fe, k)
        .unwrap_or_else(|| finite_difference_jacobian(|x| model.f(x, k), x_fe));
    affine_expansion(jac, model.f(x_fe, k), x_fe)
}

/// First-order expansion of the measurement at `x_fp`: `h(x) ≈ Hᵀ x + v`.
/// Returns `Hᵀ` (P×D).
pub fn linearize_measurement(model: &dyn ClgModel, x_fp: &Vector, k: usize) -> Result<(Matrix, Vector)> {
    let jac = model
        .jacobian_h(x_fp, k)
        .unwrap_or_else(|| finite_difference_jacobian(|x| model.h(x, k), x_fp));
    affine_expansion(jac, model.h(x_fp, k), x_fp)
}

/// Compares the full maps against the structured parts at `n` random states.
/// Returns the largest absolute residual found.
pub fn check_consistency(model: &dyn ClgModel, n: usize, seed: u64) -> Result<f64> {
    let dims = model.dims();
    let part = StatePartition::new(dims);
    let init = model.initial();
    let mut rng = RandomStream::new(seed, 0, SIMULATION_PASS - 1, 0);
    let mut worst = 0.0f64;
    for k in 0..n {
        let x = Vector::from_fn(dims.d(), |i, _| {
            init.mean[i] + init.cov[(i, i)].sqrt().max(1.0) * rng.standard_normal()
        });
        let (x_l, x_n) = part.split(&x);
        let top = model.a_l(&x_n, k) * &x_l + model.f_l(&x_n, k);
        let bottom = model.a_n(&x_n, k) * &x_l + model.f_n(&x_n, k);
        let fx = model.f(&x, k);
        let hx = model.h(&x, k);
        let hy = model.b(&x_n, k) * &x_l + model.g(&x_n, k);
        let scale = |v: &Vector| v.amax().max(1.0);
        worst = worst
            .max((fx.rows(0, dims.d_l) - top).amax() / scale(&fx))
            .max((fx.rows(dims.d_l, dims.d_n) - bottom).amax() / scale(&fx))
            .max((hx - &hy).amax() / scale(&hy));
    }
    if worst > 1e-10 {
        return Err(Error::InvalidParam(format!("model parts disagree with full maps (residual {worst:e})")));
    }
    Ok(worst)
}
