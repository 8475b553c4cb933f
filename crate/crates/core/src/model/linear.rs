use crate::error::{Error, Result};
use crate::gaussian::MomentGaussian;
use crate::linalg::{self, Matrix, Vector};
use crate::oracle::LinearModel;

use super::{ClgModel, StateDims};

/// Time-invariant affine model in the partitioned form, mainly useful for
/// checking the estimators against exact Kalman recursions.
///
/// ```text
/// x_L' = a_l x_L + m_ln x_N + c_l + w_L
/// x_N' = a_n x_L + m_nn x_N + c_n + w_N
/// y    = b   x_L + g_mat x_N + c_y + e
/// ```
#[derive(Debug, Clone)]
pub struct LinearClg {
    pub a_l: Matrix,
    pub m_ln: Matrix,
    pub c_l: Vector,
    pub a_n: Matrix,
    pub m_nn: Matrix,
    pub c_n: Vector,
    pub b: Matrix,
    pub g_mat: Matrix,
    pub c_y: Vector,
    pub cov_w_l: Matrix,
    pub cov_w_n: Matrix,
    pub cov_e: Matrix,
    pub initial: MomentGaussian,
}

impl LinearClg {
    pub fn validate(&self) -> Result<()> {
        let d_l = self.a_l.nrows();
        let d_n = self.m_nn.nrows();
        let p = self.b.nrows();
        let checks = [
            (self.a_l.shape(), (d_l, d_l)),
            (self.m_ln.shape(), (d_l, d_n)),
            (self.a_n.shape(), (d_n, d_l)),
            (self.m_nn.shape(), (d_n, d_n)),
            (self.b.shape(), (p, d_l)),
            (self.g_mat.shape(), (p, d_n)),
            (self.cov_w_l.shape(), (d_l, d_l)),
            (self.cov_w_n.shape(), (d_n, d_n)),
            (self.cov_e.shape(), (p, p)),
            ((self.c_l.len(), 1), (d_l, 1)),
            ((self.c_n.len(), 1), (d_n, 1)),
            ((self.c_y.len(), 1), (p, 1)),
            ((self.initial.dim(), 1), (d_l + d_n, 1)),
        ];
        for (got, want) in checks {
            if got != want {
                return Err(Error::DimensionMismatch { expected: want.0 * 1000 + want.1, got: got.0 * 1000 + got.1 });
            }
        }
        Ok(())
    }

    /// Constant-velocity model: velocity is the linear block, position the
    /// nonlinear one, and both are measured directly.
    ///
    /// `v' = ρ v + w_L`, `p' = p + ts v + w_N`, `y = [v; p] + e`.
    pub fn constant_velocity(dim: usize, rho: f64, ts: f64, q_v: f64, q_p: f64, r_v: f64, r_p: f64) -> Self {
        let i = Matrix::identity(dim, dim);
        let z = Matrix::zeros(dim, dim);
        let mut b = Matrix::zeros(2 * dim, dim);
        b.view_mut((0, 0), (dim, dim)).copy_from(&i);
        let mut g_mat = Matrix::zeros(2 * dim, dim);
        g_mat.view_mut((dim, 0), (dim, dim)).copy_from(&i);
        let cov_e = linalg::block_diag(&(&i * r_v), &(&i * r_p));
        Self {
            a_l: &i * rho,
            m_ln: z.clone(),
            c_l: Vector::zeros(dim),
            a_n: &i * ts,
            m_nn: i.clone(),
            c_n: Vector::zeros(dim),
            b,
            g_mat,
            c_y: Vector::zeros(2 * dim),
            cov_w_l: &i * q_v,
            cov_w_n: &i * q_p,
            cov_e,
            initial: MomentGaussian { mean: Vector::zeros(2 * dim), cov: Matrix::identity(2 * dim, 2 * dim) },
        }
    }

    /// The same model in unpartitioned form, for the exact smoother.
    pub fn to_linear_model(&self) -> LinearModel {
        let d_l = self.a_l.nrows();
        let d_n = self.m_nn.nrows();
        let d = d_l + d_n;
        let p = self.b.nrows();
        let mut f = Matrix::zeros(d, d);
        f.view_mut((0, 0), (d_l, d_l)).copy_from(&self.a_l);
        f.view_mut((0, d_l), (d_l, d_n)).copy_from(&self.m_ln);
        f.view_mut((d_l, 0), (d_n, d_l)).copy_from(&self.a_n);
        f.view_mut((d_l, d_l), (d_n, d_n)).copy_from(&self.m_nn);
        let mut h_t = Matrix::zeros(p, d);
        h_t.view_mut((0, 0), (p, d_l)).copy_from(&self.b);
        h_t.view_mut((0, d_l), (p, d_n)).copy_from(&self.g_mat);
        LinearModel {
            f,
            u: linalg::concat(&self.c_l, &self.c_n),
            h_t,
            v: self.c_y.clone(),
            cov_w: linalg::block_diag(&self.cov_w_l, &self.cov_w_n),
            cov_e: self.cov_e.clone(),
            initial: self.initial.clone(),
        }
    }
}

impl ClgModel for LinearClg {
    fn dims(&self) -> StateDims {
        StateDims { d_l: self.a_l.nrows(), d_n: self.m_nn.nrows(), p: self.b.nrows() }
    }
    fn a_n(&self, _x_n: &Vector, _k: usize) -> Matrix {
        self.a_n.clone()
    }
    fn f_n(&self, x_n: &Vector, _k: usize) -> Vector {
        &self.m_nn * x_n + &self.c_n
    }
    fn a_l(&self, _x_n: &Vector, _k: usize) -> Matrix {
        self.a_l.clone()
    }
    fn f_l(&self, x_n: &Vector, _k: usize) -> Vector {
        &self.m_ln * x_n + &self.c_l
    }
    fn b(&self, _x_n: &Vector, _k: usize) -> Matrix {
        self.b.clone()
    }
    fn g(&self, x_n: &Vector, _k: usize) -> Vector {
        &self.g_mat * x_n + &self.c_y
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
    fn jacobian_f(&self, _x: &Vector, _k: usize) -> Option<Matrix> {
        Some(self.to_linear_model().f)
    }
    fn jacobian_h(&self, _x: &Vector, _k: usize) -> Option<Matrix> {
        Some(self.to_linear_model().h_t)
    }
    fn linear_parts_constant(&self) -> bool {
        true
    }
}
