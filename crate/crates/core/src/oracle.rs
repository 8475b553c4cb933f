//! Reference results for verification: exact Kalman filtering and RTS
//! smoothing on affine Gaussian models, and adaptive quadrature in one or two
//! dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::MomentGaussian;
use crate::linalg::{self, Matrix, Vector};
use crate::particles::{sampling_factor, RandomStream};

/// Time-invariant affine Gaussian model `x' = F x + u + w`, `y = Hᵀ x + v + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub f: Matrix,
    pub u: Vector,
    /// measurement matrix `Hᵀ` (P×D)
    pub h_t: Matrix,
    pub v: Vector,
    pub cov_w: Matrix,
    pub cov_e: Matrix,
    pub initial: MomentGaussian,
}

/// Predicted and filtered marginals at one step.
#[derive(Debug, Clone)]
pub struct KalmanStep {
    pub predicted: MomentGaussian,
    pub filtered: MomentGaussian,
}

impl LinearModel {
    pub fn validate(&self) -> Result<()> {
        let d = self.f.nrows();
        let p = self.h_t.nrows();
        let ok = self.f.ncols() == d
            && self.u.len() == d
            && self.h_t.ncols() == d
            && self.v.len() == p
            && self.cov_w.shape() == (d, d)
            && self.cov_e.shape() == (p, p)
            && self.initial.dim() == d
            && self.initial.cov.shape() == (d, d);
        if !ok {
            return Err(Error::InvalidParam("linear model blocks have inconsistent sizes".into()));
        }
        linalg::cholesky(&self.cov_e)?;
        Ok(())
    }

    /// Draws `t` states and measurements.
    pub fn simulate(&self, t: usize, seed: u64) -> (Vec<Vector>, Vec<Vector>) {
        let mut rng = RandomStream::new(seed, 0, crate::model::SIMULATION_PASS, 0);
        let lw = sampling_factor(&self.cov_w);
        let le = sampling_factor(&self.cov_e);
        let mut x = rng.gaussian(&self.initial.mean, &sampling_factor(&self.initial.cov));
        let mut xs = Vec::with_capacity(t);
        let mut ys = Vec::with_capacity(t);
        for _ in 0..t {
            ys.push(&self.h_t * &x + &self.v + &le * rng.normal_vector(self.v.len()));
            let next = &self.f * &x + &self.u + &lw * rng.normal_vector(x.len());
            xs.push(std::mem::replace(&mut x, next));
        }
        (xs, ys)
    }
}

/// Joseph-form measurement update.
pub fn kalman_update(prior: &MomentGaussian, y: &Vector, h_t: &Matrix, v: &Vector, cov_e: &Matrix) -> Result<MomentGaussian> {
    let s = linalg::congruence(h_t, &prior.cov) + cov_e;
    let s_inv = linalg::spd_inverse(&s)?;
    let gain = &prior.cov * h_t.transpose() * s_inv;
    let innov = y - (h_t * &prior.mean + v);
    let mean = &prior.mean + &gain * innov;
    let i_kh = Matrix::identity(prior.dim(), prior.dim()) - &gain * h_t;
    let mut cov = linalg::congruence(&i_kh, &prior.cov) + linalg::congruence(&gain, cov_e);
    linalg::symmetrize(&mut cov);
    Ok(MomentGaussian { mean, cov })
}

pub fn kalman_filter(model: &LinearModel, ys: &[Vector]) -> Result<Vec<KalmanStep>> {
    let mut out = Vec::with_capacity(ys.len());
    let mut pred = model.initial.clone();
    for y in ys {
        let filt = kalman_update(&pred, y, &model.h_t, &model.v, &model.cov_e)?;
        let next = MomentGaussian {
            mean: &model.f * &filt.mean + &model.u,
            cov: linalg::congruence(&model.f, &filt.cov) + &model.cov_w,
        };
        out.push(KalmanStep { predicted: pred, filtered: filt });
        pred = next;
    }
    Ok(out)
}

/// Forward Kalman filter followed by the Rauch-Tung-Striebel backward sweep.
pub fn kalman_rts(model: &LinearModel, ys: &[Vector]) -> Result<Vec<MomentGaussian>> {
    let steps = kalman_filter(model, ys)?;
    let t = steps.len();
    let mut out: Vec<MomentGaussian> = Vec::with_capacity(t);
    if t == 0 {
        return Ok(out);
    }
    out.push(steps[t - 1].filtered.clone());
    for k in (0..t - 1).rev() {
        let filt = &steps[k].filtered;
        let pred_next = &steps[k + 1].predicted;
        let next = out.last().unwrap();
        let gain = &filt.cov * model.f.transpose() * linalg::spd_inverse(&pred_next.cov)?;
        let mean = &filt.mean + &gain * (&next.mean - &pred_next.mean);
        let mut cov = &filt.cov + linalg::congruence(&gain, &(&next.cov - &pred_next.cov));
        linalg::symmetrize(&mut cov);
        out.push(MomentGaussian { mean, cov });
    }
    out.reverse();
    Ok(out)
}

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One Gauss-Kronrod panel: integral and error estimate, the latter scaled
/// as in QUADPACK so smooth integrands are not over-refined.
fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut pairs = [(0.0, 0.0); 7];
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        pairs[i] = (f(c - x), f(c + x));
        let s = pairs[i].0 + pairs[i].1;
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    let half = 0.5 * kron;
    let mut asc = WGK[7] * (fc - half).abs();
    for i in 0..7 {
        asc += WGK[i] * ((pairs[i].0 - half).abs() + (pairs[i].1 - half).abs());
    }
    let asc = asc * h.abs();
    let mut err = ((kron - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    (kron * h, err)
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate_1d(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut pending = vec![(a, b, gk15(f, a, b))];
    let mut total = 0.0;
    let mut err_total = 0.0;
    let width = (b - a).abs();
    let mut evaluations = 0usize;
    while let Some((lo, hi, (val, err))) = pending.pop() {
        let share = tol * (hi - lo).abs() / width;
        if err <= share.max(f64::EPSILON * val.abs()) || (hi - lo).abs() < width * 1e-12 {
            total += val;
            err_total += err;
            continue;
        }
        evaluations += 1;
        if evaluations > 200_000 {
            return Err(Error::ToleranceNotMet { tol, estimate: total + val });
        }
        let mid = 0.5 * (lo + hi);
        pending.push((lo, mid, gk15(f, lo, mid)));
        pending.push((mid, hi, gk15(f, mid, hi)));
    }
    if err_total > tol * 10.0 {
        return Err(Error::ToleranceNotMet { tol, estimate: total });
    }
    Ok(total)
}

/// Integration domain for [`quadrature_integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Interval(f64, f64),
    Rectangle([f64; 2], [f64; 2]),
}

impl Region {
    /// Box covering `±k` standard deviations of a Gaussian (diagonal extent).
    pub fn gaussian_box(g: &MomentGaussian, k: f64) -> Result<Self> {
        let half = |i: usize| k * g.cov[(i, i)].sqrt();
        match g.dim() {
            1 => Ok(Region::Interval(g.mean[0] - half(0), g.mean[0] + half(0))),
            2 => Ok(Region::Rectangle(
                [g.mean[0] - half(0), g.mean[0] + half(0)],
                [g.mean[1] - half(1), g.mean[1] + half(1)],
            )),
            d => Err(Error::InvalidParam(format!("quadrature supports 1 or 2 dimensions, got {d}"))),
        }
    }
}

/// Integrates `f` (taking a point of dimension 1 or 2) over `region`.
pub fn quadrature_integrate(f: &dyn Fn(&[f64]) -> f64, region: Region, tol: f64) -> Result<f64> {
    match region {
        Region::Interval(a, b) => integrate_1d(&mut |x| f(&[x]), a, b, tol),
        Region::Rectangle([ax, bx], [ay, by]) => {
            let mut failure = None;
            let inner_tol = tol / (by - ay).abs().max(1.0) * 0.1;
            let outer = integrate_1d(
                &mut |y| match integrate_1d(&mut |x| f(&[x, y]), ax, bx, inner_tol) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                },
                ay,
                by,
                tol,
            )?;
            match failure {
                Some(e) => Err(e),
                None => Ok(outer),
            }
        }
    }
}

/// Serialized linear model, as read by the command-line oracle.
///
/// Matrices are lists of rows. `measurements` may be given explicitly;
/// otherwise `t` steps are simulated with `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModelFile {
    pub version: u32,
    pub f: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub cov_w: Vec<Vec<f64>>,
    pub cov_e: Vec<Vec<f64>>,
    pub init_mean: Vec<f64>,
    pub init_cov: Vec<Vec<f64>>,
    #[serde(default)]
    pub measurements: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub t: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl LinearModelFile {
    pub fn to_model(&self) -> Result<LinearModel> {
        if self.version != 1 {
            return Err(Error::Config(format!("unsupported linear model version {}", self.version)));
        }
        let m = LinearModel {
            f: rows_to_matrix(&self.f)?,
            u: Vector::from_vec(self.u.clone()),
            h_t: rows_to_matrix(&self.h)?,
            v: Vector::from_vec(self.v.clone()),
            cov_w: rows_to_matrix(&self.cov_w)?,
            cov_e: rows_to_matrix(&self.cov_e)?,
            initial: MomentGaussian {
                mean: Vector::from_vec(self.init_mean.clone()),
                cov: rows_to_matrix(&self.init_cov)?,
            },
        };
        m.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(m)
    }

    /// Measurements from the file, or a simulated sequence.
    pub fn measurements(&self, model: &LinearModel) -> Result<Vec<Vector>> {
        match &self.measurements {
            Some(ys) => {
                let p = model.v.len();
                ys.iter()
                    .map(|y| {
                        if y.len() != p {
                            Err(Error::Config(format!("measurement of length {} (expected {p})", y.len())))
                        } else {
                            Ok(Vector::from_vec(y.clone()))
                        }
                    })
                    .collect()
            }
            None => {
                let t = self.t.ok_or_else(|| Error::Config("need either measurements or t".into()))?;
                Ok(model.simulate(t, self.seed.unwrap_or(0)).1)
            }
        }
    }
}
