//! Weighted particle sets, weight arithmetic, resampling and seeded streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Particles over the nonlinear substate with (not necessarily normalized) weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Vector>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    /// Equally weighted set.
    pub fn uniform(particles: Vec<Vector>) -> Self {
        let n = particles.len();
        Self { particles, weights: vec![1.0 / n as f64; n] }
    }

    pub fn new(particles: Vec<Vector>, weights: Vec<f64>) -> Result<Self> {
        if particles.len() != weights.len() {
            return Err(Error::LengthMismatch { expected: particles.len(), got: weights.len() });
        }
        if particles.is_empty() {
            return Err(Error::InvalidParam("particle set must not be empty".into()));
        }
        Ok(Self { particles, weights })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.first().map_or(0, |p| p.len())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.weights = normalize(&self.weights)?;
        Ok(self)
    }

    /// Effective sample size `1 / Σ W²` of the normalized weights.
    pub fn ess(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        1.0 / self.weights.iter().map(|w| (w / s) * (w / s)).sum::<f64>()
    }
}

fn check_weights(weights: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        s += w;
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    Ok(s)
}

pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    let s = check_weights(weights)?;
    Ok(weights.iter().map(|w| w / s).collect())
}

/// Combines `D · exp(-Z/2)` factors given as `(ln D, Z)` pairs, in the log domain.
pub fn log_weight(parts: &[(f64, f64)]) -> f64 {
    parts.iter().map(|(log_d, z)| log_d - 0.5 * z).sum()
}

/// Single-weight combine: exponentiates the log-domain product.
pub fn log_weight_combine(parts: &[(f64, f64)]) -> f64 {
    log_weight(parts).exp()
}

/// Turns per-particle log weights into normalized weights, subtracting the
/// maximum first so that very negative logs do not underflow the whole set.
pub fn normalize_log(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_w.iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    normalize(&w)
}

/// One multinomial draw from normalized weights.
pub fn resample_one<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let s = check_weights(weights)?;
    let u: f64 = rng.random::<f64>() * s;
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = j;
        }
        acc += w;
        if u < acc {
            return Ok(j);
        }
    }
    Ok(last)
}

/// Systematic resampling; returns ancestor indices, one per output slot.
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let s = check_weights(weights)?;
    let step = s / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut acc = weights[0];
    let mut j = 0;
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    for _ in 0..n {
        while u >= acc && j < last {
            j += 1;
            acc += weights[j];
        }
        out.push(j);
        u += step;
    }
    Ok(out)
}

/// Systematic resampling of a whole set; the result is equally weighted.
pub fn resample_full<R: Rng + ?Sized>(ps: &ParticleSet, rng: &mut R) -> Result<ParticleSet> {
    let idx = systematic_indices(&ps.weights, ps.len(), rng)?;
    Ok(ParticleSet::uniform(idx.into_iter().map(|j| ps.particles[j].clone()).collect()))
}

pub fn weighted_mean(ps: &ParticleSet) -> Result<Vector> {
    let s = check_weights(&ps.weights)?;
    let mut m = Vector::zeros(ps.dim());
    for (p, w) in ps.particles.iter().zip(&ps.weights) {
        m.axpy(w / s, p, 1.0);
    }
    Ok(m)
}

/// Seeded random stream identified by `(run, pass, step)` under a root seed.
///
/// Each identifier maps to an independent ChaCha stream, so draws do not
/// depend on the order in which runs or backward passes are scheduled.
#[derive(Debug, Clone)]
pub struct RandomStream {
    pub root_seed: u64,
    pub stream_id: (u64, u64, u64),
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(root_seed: u64, run: u64, pass: u64, step: u64) -> Self {
        let mut h = splitmix64(root_seed);
        for part in [run, pass, step] {
            h = splitmix64(h ^ splitmix64(part));
        }
        let mut seed = [0u8; 32];
        for (i, chunk) in seed.chunks_mut(8).enumerate() {
            chunk.copy_from_slice(&splitmix64(h.wrapping_add(i as u64)).to_le_bytes());
        }
        Self { root_seed, stream_id: (run, pass, step), inner: ChaCha8Rng::from_seed(seed) }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal_vector(&mut self, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| self.standard_normal())
    }

    /// Draw from `N(mean, L Lᵀ)` given a lower-triangular factor.
    pub fn gaussian(&mut self, mean: &Vector, chol_lower: &Matrix) -> Vector {
        let e = self.normal_vector(mean.len());
        mean + chol_lower * e
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Lower Cholesky factor of a PSD covariance, tolerating exact zeros
/// (zero rows give deterministic components).
pub fn sampling_factor(cov: &Matrix) -> Matrix {
    let n = cov.nrows();
    if n == 0 || cov.iter().all(|&v| v == 0.0) {
        return Matrix::zeros(n, n);
    }
    if let Some(c) = nalgebra::Cholesky::new(cov.clone()) {
        return c.l();
    }
    // semidefinite: fall back to an eigen square root
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    let sq = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&sq)
}
