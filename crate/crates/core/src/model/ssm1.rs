//! Planar agent pulled toward the origin by a short-range force.
//!
//! State `x = [v; p]` (velocity is the linear block, position the nonlinear
//! one), measured directly: `y = x + e`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::MomentGaussian;
use crate::linalg::{self, Matrix, Vector};

use super::{ClgModel, StateDims};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ssm1Params {
    /// velocity memory factor
    pub rho: f64,
    /// sampling interval (s)
    pub ts: f64,
    /// position noise std (m)
    pub sigma_p: f64,
    /// velocity measurement noise std (m/s)
    pub sigma_ev: f64,
    /// position measurement noise std (m)
    pub sigma_ep: f64,
    /// peak acceleration (m/s²)
    pub a0: f64,
    /// force range (m)
    pub d0: f64,
    pub p0: [f64; 2],
    pub v0: [f64; 2],
    /// std of the initial density around `(v0, p0)`, shared by all components
    pub init_std: f64,
}

impl Default for Ssm1Params {
    fn default() -> Self {
        Self {
            rho: 0.995,
            ts: 0.01,
            sigma_p: 5e-3,
            sigma_ev: 2e-2,
            sigma_ep: 2e-2,
            a0: 0.5,
            d0: 5e-3,
            p0: [0.01, 0.01],
            v0: [0.01, 0.01],
            init_std: 1e-2,
        }
    }
}

/// Default observation length in samples.
pub const SSM1_DEFAULT_T: usize = 200;

#[derive(Debug, Clone)]
pub struct Ssm1 {
    pub params: Ssm1Params,
    cov_w_l: Matrix,
    cov_w_n: Matrix,
    cov_e: Matrix,
    initial: MomentGaussian,
}

impl Ssm1 {
    pub fn new(params: Ssm1Params) -> Result<Self> {
        let p = &params;
        if !(p.ts > 0.0) {
            return Err(Error::InvalidParam(format!("ts must be positive, got {}", p.ts)));
        }
        if !(p.d0 > 0.0) {
            return Err(Error::InvalidParam(format!("d0 must be positive, got {}", p.d0)));
        }
        if !(p.rho > 0.0 && p.rho <= 1.0) {
            return Err(Error::InvalidParam(format!("rho must lie in (0, 1], got {}", p.rho)));
        }
        if p.sigma_p < 0.0 || p.sigma_ev < 0.0 || p.sigma_ep < 0.0 || p.init_std < 0.0 {
            return Err(Error::InvalidParam("noise standard deviations must be nonnegative".into()));
        }
        let i2 = Matrix::identity(2, 2);
        let cov_e = linalg::block_diag(&(&i2 * p.sigma_ev.powi(2)), &(&i2 * p.sigma_ep.powi(2)));
        let mean = Vector::from_vec(vec![p.v0[0], p.v0[1], p.p0[0], p.p0[1]]);
        let initial = MomentGaussian { mean, cov: Matrix::identity(4, 4) * p.init_std.powi(2) };
        Ok(Self {
            cov_w_l: &i2 * (1.0 - p.rho).powi(2),
            cov_w_n: &i2 * p.sigma_p.powi(2),
            cov_e,
            initial,
            params,
        })
    }

    /// Acceleration field: magnitude `a0 / (1 + (|p|/d0)²)`, pointing at the origin.
    pub fn accel(&self, p: &Vector) -> Vector {
        let r = p.norm();
        if r == 0.0 {
            return Vector::zeros(2);
        }
        let s = 1.0 / (1.0 + (r / self.params.d0).powi(2));
        p * (-self.params.a0 * s / r)
    }

    /// Jacobian of [`Ssm1::accel`].
    pub fn accel_jacobian(&self, p: &Vector) -> Matrix {
        let r = p.norm().max(1e-300);
        let d0 = self.params.d0;
        let s = 1.0 / (1.0 + (r / d0).powi(2));
        let ds = -2.0 * r / (d0 * d0) * s * s;
        // a = -a0 (s/r) p ; d(s/r)/dr = s'/r - s/r²
        let dsr = ds / r - s / (r * r);
        let outer = p * p.transpose() / r;
        -(Matrix::identity(2, 2) * (s / r) + outer * dsr) * self.params.a0
    }
}

impl ClgModel for Ssm1 {
    fn dims(&self) -> StateDims {
        StateDims { d_l: 2, d_n: 2, p: 4 }
    }

    fn a_n(&self, _x_n: &Vector, _k: usize) -> Matrix {
        Matrix::identity(2, 2) * self.params.ts
    }

    fn f_n(&self, x_n: &Vector, _k: usize) -> Vector {
        x_n + self.accel(x_n) * (0.5 * self.params.ts * self.params.ts)
    }

    fn a_l(&self, _x_n: &Vector, _k: usize) -> Matrix {
        Matrix::identity(2, 2) * self.params.rho
    }

    fn f_l(&self, x_n: &Vector, _k: usize) -> Vector {
        self.accel(x_n) * self.params.ts
    }

    fn b(&self, _x_n: &Vector, _k: usize) -> Matrix {
        let mut b = Matrix::zeros(4, 2);
        b[(0, 0)] = 1.0;
        b[(1, 1)] = 1.0;
        b
    }

    fn g(&self, x_n: &Vector, _k: usize) -> Vector {
        Vector::from_vec(vec![0.0, 0.0, x_n[0], x_n[1]])
    }

    fn cov_w_l(&self) -> &Matrix {
        &self.cov_w_l
    }
    fn cov_w_n(&self) -> &Matrix {
        &self.cov_w_n
    }
    fn cov_e(&self) -> &Matrix {
        &self.cov_e
    }
    fn initial(&self) -> &MomentGaussian {
        &self.initial
    }

    fn f(&self, x: &Vector, _k: usize) -> Vector {
        let ts = self.params.ts;
        let v = x.rows(0, 2).into_owned();
        let p = x.rows(2, 2).into_owned();
        let a = self.accel(&p);
        let v_next = &v * self.params.rho + &a * ts;
        let p_next = &p + &v * ts + &a * (0.5 * ts * ts);
        linalg::concat(&v_next, &p_next)
    }

    fn h(&self, x: &Vector, _k: usize) -> Vector {
        x.clone()
    }

    fn jacobian_f(&self, x: &Vector, _k: usize) -> Option<Matrix> {
        let ts = self.params.ts;
        let ja = self.accel_jacobian(&x.rows(2, 2).into_owned());
        let i2 = Matrix::identity(2, 2);
        let mut j = Matrix::zeros(4, 4);
        j.view_mut((0, 0), (2, 2)).copy_from(&(&i2 * self.params.rho));
        j.view_mut((0, 2), (2, 2)).copy_from(&(&ja * ts));
        j.view_mut((2, 0), (2, 2)).copy_from(&(&i2 * ts));
        j.view_mut((2, 2), (2, 2)).copy_from(&(i2 + ja * (0.5 * ts * ts)));
        Some(j)
    }

    fn jacobian_h(&self, _x: &Vector, _k: usize) -> Option<Matrix> {
        Some(Matrix::identity(4, 4))
    }

    fn linear_parts_constant(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_consistency, finite_difference_jacobian, linearize_measurement, simulate};
    use approx::assert_relative_eq;

    #[test]
    fn acceleration_at_range_is_half_peak() {
        let m = Ssm1::new(Ssm1Params::default()).unwrap();
        let p = Vector::from_vec(vec![3e-3, 4e-3]);
        let a = m.accel(&p);
        assert_relative_eq!(a.norm(), 0.25, epsilon = 1e-12);
        assert!(a.dot(&p) < 0.0);
        assert_relative_eq!(a.normalize().dot(&p.normalize()), -1.0, epsilon = 1e-12);
        assert!(m.accel(&Vector::from_vec(vec![1e3, 0.0])).norm() < 1e-10);
    }

    #[test]
    fn noiseless_first_step() {
        let params = Ssm1Params { sigma_p: 0.0, sigma_ev: 0.0, sigma_ep: 0.0, init_std: 0.0, ..Default::default() };
        // velocity noise is tied to rho, so silence it directly
        let mut m = Ssm1::new(params).unwrap();
        m.cov_w_l = Matrix::zeros(2, 2);
        let ax = m.accel(&Vector::from_vec(vec![0.01, 0.01]))[0];
        assert_relative_eq!(ax, -0.039284, epsilon = 1e-6);
        let tr = simulate(&m, 3, 11).unwrap();
        assert_relative_eq!(tr.states[1][0], 0.0095572, epsilon = 1e-7);
        let mut x = tr.states[0].clone();
        for k in 1..3 {
            x = m.f(&x, k - 1);
            assert_eq!(tr.states[k], x);
            assert_eq!(tr.measurements[k], x);
        }
    }

    #[test]
    fn determinism() {
        let m = Ssm1::new(Ssm1Params::default()).unwrap();
        assert_eq!(simulate(&m, 50, 5).unwrap(), simulate(&m, 50, 5).unwrap());
        assert_ne!(simulate(&m, 50, 5).unwrap(), simulate(&m, 50, 6).unwrap());
    }

    #[test]
    fn structure_consistent() {
        let m = Ssm1::new(Ssm1Params::default()).unwrap();
        check_consistency(&m, 1000, 3).unwrap();
    }

    #[test]
    fn analytic_jacobian_matches_fd() {
        let m = Ssm1::new(Ssm1Params::default()).unwrap();
        for x in [
            Vector::from_vec(vec![0.01, -0.02, 0.01, 0.01]),
            Vector::from_vec(vec![0.3, 0.1, -0.004, 0.007]),
            Vector::from_vec(vec![-0.2, 0.0, 0.05, -0.02]),
        ] {
            let ja = m.jacobian_f(&x, 0).unwrap();
            let jf = finite_difference_jacobian(|z| m.f(z, 0), &x);
            let rel = (&ja - &jf).amax() / ja.amax();
            assert!(rel < 1e-6, "rel {rel}");
        }
        let (h, v) = linearize_measurement(&m, &Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), 0).unwrap();
        assert_eq!(h, Matrix::identity(4, 4));
        assert_eq!(v, Vector::zeros(4));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(Ssm1::new(Ssm1Params { ts: 0.0, ..Default::default() }).is_err());
        assert!(Ssm1::new(Ssm1Params { d0: -1.0, ..Default::default() }).is_err());
        assert!(Ssm1::new(Ssm1Params { rho: 1.5, ..Default::default() }).is_err());
    }
}
