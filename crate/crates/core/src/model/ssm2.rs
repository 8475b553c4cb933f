//! Several targets moving on a plane, observed by a grid of received-signal-
//! strength sensors that each report the total power (in dB) from all targets.
//!
//! The state stacks all velocities first and then all positions:
//! `x = [v_1; …; v_N; p_1; …; p_N]`, so velocities form the linear block.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::MomentGaussian;
use crate::linalg::{self, Matrix, Vector};
use crate::particles::RandomStream;

use super::{ClgModel, StateDims};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ssm2Params {
    pub n_targets: usize,
    /// sensors per side of the square grid (total P = side²)
    pub sensors_per_side: usize,
    /// side of the monitored square (m)
    pub side: f64,
    pub ts: f64,
    pub rho: f64,
    /// acceleration noise variance per axis
    pub sigma_a2: f64,
    /// measurement noise variance (dB²)
    pub sigma_e2: f64,
    pub psi: f64,
    pub d0: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// squared-distance floor guarding sensor/target coincidence (m²)
    pub d_min2: f64,
    /// prior std of each position coordinate around the placement
    pub init_pos_std: f64,
    /// prior std of each velocity coordinate around the placement
    pub init_vel_std: f64,
}

impl Default for Ssm2Params {
    fn default() -> Self {
        Self {
            n_targets: 3,
            sensors_per_side: 5,
            side: 1000.0,
            ts: 1.0,
            rho: 1.0,
            sigma_a2: 0.1,
            sigma_e2: 10f64.powf(-3.5),
            psi: 1.0,
            d0: 1.0,
            v_min: 0.0,
            v_max: 0.1,
            d_min2: 1e-6,
            init_pos_std: 50.0,
            init_vel_std: 0.1,
        }
    }
}

/// Default observation length in samples.
pub const SSM2_DEFAULT_T: usize = 60;

#[derive(Debug, Clone)]
pub struct Ssm2 {
    pub params: Ssm2Params,
    pub sensors: Vec<[f64; 2]>,
    cov_w_l: Matrix,
    cov_w_n: Matrix,
    cov_e: Matrix,
    initial: MomentGaussian,
}

impl Ssm2 {
    /// Builds the model with targets placed at random (distinct grid cells,
    /// uniform position within the cell, uniform speed and heading).
    pub fn new(params: Ssm2Params, placement_seed: u64) -> Result<Self> {
        let p = &params;
        if p.n_targets == 0 || p.sensors_per_side == 0 {
            return Err(Error::InvalidParam("need at least one target and one sensor".into()));
        }
        if !(p.ts > 0.0 && p.side > 0.0 && p.d0 > 0.0 && p.psi > 0.0 && p.d_min2 > 0.0) {
            return Err(Error::InvalidParam("ts, side, d0, psi and d_min2 must be positive".into()));
        }
        if !(p.rho > 0.0 && p.rho <= 1.0) {
            return Err(Error::InvalidParam(format!("rho must lie in (0, 1], got {}", p.rho)));
        }
        if !(p.sigma_a2 >= 0.0 && p.sigma_e2 > 0.0 && p.v_max >= p.v_min && p.v_min >= 0.0) {
            return Err(Error::InvalidParam("invalid noise variances or speed range".into()));
        }
        let mut rng = RandomStream::new(placement_seed, 0, u64::MAX - 2, 0);
        let (pos, vel) = place_targets(p, &mut rng);
        Self::with_placement(params, &pos, &vel)
    }

    /// Builds the model around an explicit initial placement.
    pub fn with_placement(params: Ssm2Params, pos: &[[f64; 2]], vel: &[[f64; 2]]) -> Result<Self> {
        let n = params.n_targets;
        if pos.len() != n || vel.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: pos.len().min(vel.len()) });
        }
        let s = params.sensors_per_side;
        let step = if s > 1 { params.side / (s - 1) as f64 } else { 0.0 };
        let sensors = (0..s * s).map(|q| [(q % s) as f64 * step, (q / s) as f64 * step]).collect::<Vec<_>>();
        let d = 2 * n;
        let ts = params.ts;
        let cov_w_l = Matrix::identity(d, d) * (ts * ts * params.sigma_a2);
        let cov_w_n = Matrix::identity(d, d) * (ts.powi(4) / 4.0 * params.sigma_a2);
        let cov_e = Matrix::identity(s * s, s * s) * params.sigma_e2;
        let mut mean = Vector::zeros(2 * d);
        for i in 0..n {
            mean[2 * i] = vel[i][0];
            mean[2 * i + 1] = vel[i][1];
            mean[d + 2 * i] = pos[i][0];
            mean[d + 2 * i + 1] = pos[i][1];
        }
        let var = Vector::from_fn(2 * d, |i, _| {
            if i < d {
                params.init_vel_std.powi(2)
            } else {
                params.init_pos_std.powi(2)
            }
        });
        let initial = MomentGaussian { mean, cov: Matrix::from_diagonal(&var) };
        Ok(Self { params, sensors, cov_w_l, cov_w_n, cov_e, initial })
    }

    fn sq_dist(&self, q: usize, x_n: &Vector, i: usize) -> (f64, f64, f64) {
        let dx = x_n[2 * i] - self.sensors[q][0];
        let dy = x_n[2 * i + 1] - self.sensors[q][1];
        (dx, dy, dx * dx + dy * dy)
    }

    fn rss(&self, x_n: &Vector) -> Vector {
        let n = self.params.n_targets;
        let d02 = self.params.d0 * self.params.d0;
        Vector::from_fn(self.sensors.len(), |q, _| {
            let s: f64 = (0..n).map(|i| d02 / self.sq_dist(q, x_n, i).2.max(self.params.d_min2)).sum();
            10.0 * (self.params.psi * s).log10()
        })
    }
}

fn place_targets(p: &Ssm2Params, rng: &mut RandomStream) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let cells_per_side = (p.n_targets as f64).sqrt().ceil() as usize;
    let n_cells = cells_per_side * cells_per_side;
    let cell = p.side / cells_per_side as f64;
    // partial Fisher-Yates: first n entries become n distinct cells
    let mut ids: Vec<usize> = (0..n_cells).collect();
    for i in 0..p.n_targets {
        let j = rng.random_range(i..n_cells);
        ids.swap(i, j);
    }
    let mut pos = Vec::with_capacity(p.n_targets);
    let mut vel = Vec::with_capacity(p.n_targets);
    for &c in &ids[..p.n_targets] {
        let (cx, cy) = ((c % cells_per_side) as f64, (c / cells_per_side) as f64);
        pos.push([(cx + rng.random::<f64>()) * cell, (cy + rng.random::<f64>()) * cell]);
        let speed = p.v_min + (p.v_max - p.v_min) * rng.random::<f64>();
        let heading = std::f64::consts::TAU * rng.random::<f64>();
        vel.push([speed * heading.cos(), speed * heading.sin()]);
    }
    (pos, vel)
}

impl ClgModel for Ssm2 {
    fn dims(&self) -> StateDims {
        let d = 2 * self.params.n_targets;
        StateDims { d_l: d, d_n: d, p: self.sensors.len() }
    }

    fn a_n(&self, _x_n: &Vector, _k: usize) -> Matrix {
        let d = 2 * self.params.n_targets;
        Matrix::identity(d, d) * self.params.ts
    }

    fn f_n(&self, x_n: &Vector, _k: usize) -> Vector {
        x_n.clone()
    }

    fn a_l(&self, _x_n: &Vector, _k: usize) -> Matrix {
        let d = 2 * self.params.n_targets;
        Matrix::identity(d, d) * self.params.rho
    }

    fn f_l(&self, _x_n: &Vector, _k: usize) -> Vector {
        Vector::zeros(2 * self.params.n_targets)
    }

    fn b(&self, _x_n: &Vector, _k: usize) -> Matrix {
        Matrix::zeros(self.sensors.len(), 2 * self.params.n_targets)
    }

    fn g(&self, x_n: &Vector, _k: usize) -> Vector {
        self.rss(x_n)
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
        let d = 2 * self.params.n_targets;
        let i = Matrix::identity(d, d);
        let mut j = Matrix::zeros(2 * d, 2 * d);
        j.view_mut((0, 0), (d, d)).copy_from(&(&i * self.params.rho));
        j.view_mut((d, 0), (d, d)).copy_from(&(&i * self.params.ts));
        j.view_mut((d, d), (d, d)).copy_from(&i);
        Some(j)
    }

    fn jacobian_h(&self, x: &Vector, _k: usize) -> Option<Matrix> {
        let n = self.params.n_targets;
        let d = 2 * n;
        let x_n = x.rows(d, d).into_owned();
        let d02 = self.params.d0 * self.params.d0;
        let c = 10.0 / std::f64::consts::LN_10;
        let mut j = Matrix::zeros(self.sensors.len(), 2 * d);
        for q in 0..self.sensors.len() {
            let parts: Vec<(f64, f64, f64)> = (0..n).map(|i| self.sq_dist(q, &x_n, i)).collect();
            let s: f64 = parts.iter().map(|&(_, _, r2)| d02 / r2.max(self.params.d_min2)).sum();
            for (i, &(dx, dy, r2)) in parts.iter().enumerate() {
                if r2 <= self.params.d_min2 {
                    continue; // clamped: locally constant
                }
                let k = -2.0 * d02 / (r2 * r2) * c / s;
                j[(q, d + 2 * i)] = k * dx;
                j[(q, d + 2 * i + 1)] = k * dy;
            }
        }
        Some(j)
    }

    fn linear_parts_constant(&self) -> bool {
        true
    }

    /// Position and velocity driven by the same acceleration noise.
    fn sample_process_noise(&self, rng: &mut RandomStream) -> Vector {
        let n = self.params.n_targets;
        let d = 2 * n;
        let ts = self.params.ts;
        let sa = self.params.sigma_a2.sqrt();
        let mut w = Vector::zeros(2 * d);
        for i in 0..d {
            let a = sa * rng.standard_normal();
            w[i] = ts * a;
            w[d + i] = 0.5 * ts * ts * a;
        }
        w
    }
}

/// Correlated per-step process covariance of the simulated motion, for reference.
pub fn ssm2_true_process_cov(p: &Ssm2Params) -> Matrix {
    let d = 2 * p.n_targets;
    let i = Matrix::identity(d, d);
    let ts = p.ts;
    let mut c = linalg::block_diag(&(&i * (ts * ts)), &(&i * (ts.powi(4) / 4.0)));
    c.view_mut((0, d), (d, d)).copy_from(&(&i * (ts.powi(3) / 2.0)));
    c.view_mut((d, 0), (d, d)).copy_from(&(&i * (ts.powi(3) / 2.0)));
    c * p.sigma_a2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_consistency, finite_difference_jacobian};
    use approx::assert_relative_eq;

    fn single(pos: [f64; 2]) -> Ssm2 {
        let params = Ssm2Params { n_targets: 1, ..Default::default() };
        Ssm2::with_placement(params, &[pos], &[[0.0, 0.0]]).unwrap()
    }

    #[test]
    fn unit_ratio_gives_zero_db() {
        let m = single([1.0, 0.0]);
        let y = m.h(&Vector::from_vec(vec![0.0, 0.0, 1.0, 0.0]), 0);
        assert_relative_eq!(y[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_targets_at_unit_distance() {
        let params = Ssm2Params { n_targets: 2, ..Default::default() };
        let m = Ssm2::with_placement(params, &[[1.0, 0.0], [0.0, 1.0]], &[[0.0; 2]; 2]).unwrap();
        let x = m.initial().mean.clone();
        assert_relative_eq!(m.h(&x, 0)[0], 10.0 * 2f64.log10(), epsilon = 1e-12);
        assert_relative_eq!(m.h(&x, 0)[0], 3.0103, epsilon = 1e-4);
    }

    #[test]
    fn coincident_target_is_finite() {
        let m = single([0.0, 0.0]);
        let x = Vector::from_vec(vec![0.0, 0.0, 0.0, 0.0]);
        let y = m.h(&x, 0);
        assert!(y.iter().all(|v| v.is_finite()));
        assert_relative_eq!(y[0], 60.0, epsilon = 1e-9);
        assert!(m.jacobian_h(&x, 0).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn jacobian_matches_fd() {
        let m = single([310.0, 420.0]);
        let x = m.initial().mean.clone();
        let ja = m.jacobian_h(&x, 0).unwrap();
        let jf = finite_difference_jacobian(|z| m.h(z, 0), &x);
        for (a, f) in ja.iter().zip(jf.iter()) {
            assert!((a - f).abs() <= 1e-6 * a.abs().max(1e-3), "{a} vs {f}");
        }
        let m3 = Ssm2::new(Ssm2Params::default(), 4).unwrap();
        let x = m3.initial().mean.clone();
        let ja = m3.jacobian_h(&x, 0).unwrap();
        let jf = finite_difference_jacobian(|z| m3.h(z, 0), &x);
        assert!((&ja - &jf).amax() <= 1e-6 * ja.amax());
    }

    #[test]
    fn placement_uses_distinct_cells() {
        let params = Ssm2Params::default();
        for seed in 0..50 {
            let m = Ssm2::new(params.clone(), seed).unwrap();
            let mean = &m.initial().mean;
            let cell = params.side / 2.0;
            let mut cells: Vec<(i64, i64)> = (0..3)
                .map(|i| ((mean[6 + 2 * i] / cell).floor() as i64, (mean[6 + 2 * i + 1] / cell).floor() as i64))
                .collect();
            cells.sort();
            cells.dedup();
            assert_eq!(cells.len(), 3);
            for i in 0..3 {
                let speed = (mean[2 * i].powi(2) + mean[2 * i + 1].powi(2)).sqrt();
                assert!(speed <= params.v_max + 1e-12);
            }
        }
    }

    #[test]
    fn structure_consistent() {
        let m = Ssm2::new(Ssm2Params::default(), 1).unwrap();
        check_consistency(&m, 1000, 2).unwrap();
        assert_eq!(m.dims(), StateDims { d_l: 6, d_n: 6, p: 25 });
    }

    #[test]
    fn process_noise_is_correlated() {
        let m = Ssm2::new(Ssm2Params { n_targets: 1, ..Default::default() }, 1).unwrap();
        let mut rng = RandomStream::new(9, 0, 0, 0);
        let w = m.sample_process_noise(&mut rng);
        assert_relative_eq!(w[2], 0.5 * w[0], epsilon = 1e-15);
        let c = ssm2_true_process_cov(&m.params);
        assert_relative_eq!(c[(0, 2)], 0.05, epsilon = 1e-15);
    }
}
